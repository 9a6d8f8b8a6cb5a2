use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::{auc_from_buckets, weighted_auc};
use super::Predictions;
use crate::error::{Error, Result};
use crate::metrics::stats::percentile_sorted;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Weighted AUC of every usable resample, sorted.
    pub weighted: Vec<f64>,
    pub weighted_ci: (f64, f64),
    pub per_symbol_ci: Vec<Option<(f64, f64)>>,
}

fn interval(mut values: Vec<f64>) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some((percentile_sorted(&values, 0.025), percentile_sorted(&values, 0.975)))
}

/// Resamples whole sessions with replacement and recomputes every AUC per
/// resample. Resample `i` draws from a generator keyed by `(seed, i)`, so
/// results do not depend on thread count.
pub fn bootstrap(predictions: &Predictions, config: &BootstrapConfig) -> Result<BootstrapResult> {
    if config.n_resamples == 0 {
        return Err(Error::InvalidArgument("n_resamples must be positive".into()));
    }
    if config.n_resamples < 100 {
        log::warn!("only {} bootstrap resamples; intervals will be rough", config.n_resamples);
    }
    let n_sessions = predictions.n_sessions;
    if n_sessions == 0 || predictions.items.is_empty() {
        return Err(Error::InsufficientData("no predictions to resample".into()));
    }
    let k = predictions.alphabet.len();

    // per symbol: distinct predicted probabilities in ascending order
    let buckets: Vec<Vec<f64>> = (0..k)
        .map(|x| {
            let mut v: Vec<f64> = predictions.items.iter().map(|p| p.distribution[x]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    // per session: (symbol, bucket, positive) -> count
    let mut per_session: Vec<BTreeMap<(usize, usize, bool), u64>> = vec![BTreeMap::new(); n_sessions];
    for p in &predictions.items {
        for (x, b) in buckets.iter().enumerate() {
            let bucket = b.partition_point(|&v| v.total_cmp(&p.distribution[x]).is_lt());
            *per_session[p.session]
                .entry((x, bucket, p.actual as usize == x))
                .or_default() += 1;
        }
    }
    let per_session: Vec<Vec<((usize, usize, bool), u64)>> =
        per_session.into_iter().map(|m| m.into_iter().collect()).collect();

    let samples: Vec<Option<(f64, Vec<Option<f64>>)>> = (0..config.n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(config.seed, &[b"bootstrap", &(i as u64).to_le_bytes()]);
            let mut multiplicity = vec![0u64; n_sessions];
            for _ in 0..n_sessions {
                multiplicity[rng.random_range(0..n_sessions)] += 1;
            }
            let mut pos: Vec<Vec<u64>> = buckets.iter().map(|b| vec![0; b.len()]).collect();
            let mut neg = pos.clone();
            for (s, &m) in multiplicity.iter().enumerate() {
                if m == 0 {
                    continue;
                }
                for &((x, b, positive), c) in &per_session[s] {
                    if positive {
                        pos[x][b] += m * c;
                    } else {
                        neg[x][b] += m * c;
                    }
                }
            }
            let aucs: Vec<Option<f64>> = (0..k).map(|x| auc_from_buckets(&pos[x], &neg[x])).collect();
            let weights: Vec<f64> = pos.iter().map(|p| p.iter().sum::<u64>() as f64).collect();
            weighted_auc(&aucs, &weights).ok().map(|w| (w, aucs))
        })
        .collect();

    let usable: Vec<&(f64, Vec<Option<f64>>)> = samples.iter().flatten().collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData("no bootstrap resample had a defined AUC".into()));
    }
    let mut weighted: Vec<f64> = usable.iter().map(|s| s.0).collect();
    weighted.sort_by(f64::total_cmp);
    let weighted_ci = interval(weighted.clone()).expect("non-empty");
    let per_symbol_ci = (0..k)
        .map(|x| interval(usable.iter().filter_map(|s| s.1[x]).collect()))
        .collect();
    Ok(BootstrapResult {
        weighted,
        weighted_ci,
        per_symbol_ci,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::evaluate::Prediction;

    fn preds(rows: &[(usize, f64, u8)]) -> Predictions {
        Predictions {
            alphabet: Alphabet::binary(),
            items: rows
                .iter()
                .map(|&(session, p1, actual)| Prediction {
                    session,
                    index: 0,
                    distribution: vec![1.0 - p1, p1],
                    actual,
                    synchronized: true,
                })
                .collect(),
            n_sessions: rows.iter().map(|r| r.0).max().unwrap() + 1,
        }
    }

    #[test]
    fn single_session_has_zero_width() {
        let p = preds(&[(0, 0.9, 1), (0, 0.2, 0), (0, 0.6, 0)]);
        let r = bootstrap(&p, &BootstrapConfig { n_resamples: 200, seed: 1 }).unwrap();
        assert_eq!(r.weighted_ci.0, r.weighted_ci.1);
    }

    #[test]
    fn seeded_and_ordered() {
        let rows: Vec<(usize, f64, u8)> = (0..40).map(|i| (i / 2, (i % 7) as f64 / 7.0, (i % 3 == 0) as u8)).collect();
        let p = preds(&rows);
        let cfg = BootstrapConfig { n_resamples: 300, seed: 4 };
        let a = bootstrap(&p, &cfg).unwrap();
        assert_eq!(a, bootstrap(&p, &cfg).unwrap());
        assert!(a.weighted_ci.0 <= a.weighted_ci.1);
        assert!(a.weighted.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_resamples_rejected() {
        let p = preds(&[(0, 0.9, 1), (0, 0.2, 0)]);
        assert!(bootstrap(&p, &BootstrapConfig { n_resamples: 0, seed: 0 }).is_err());
    }
}
