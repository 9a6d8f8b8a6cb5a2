use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, temporal_split, BootstrapConfig};
use crate::cssr::{fit_corpus, CssrConfig};
use crate::encode::{encode_corpus, theta_grid, AlphabetSpec, Corpus, ReferenceScope, Scheme};
use crate::error::{Error, Result};
use crate::ingest::Session;
use crate::metrics::QuartileSplit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub schemes: Vec<Scheme>,
    pub thetas: Vec<u64>,
    pub lengths: Vec<usize>,
    pub scope: ReferenceScope,
    /// Test settings; `max_len` is replaced by each swept length.
    pub cssr: CssrConfig,
    pub fraction: f64,
    pub bootstrap: Option<BootstrapConfig>,
    /// Keep only sessions with at least this many games and score only
    /// games from this index on.
    pub min_game_index: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            thetas: theta_grid(None),
            lengths: vec![1, 2, 3],
            scope: ReferenceScope::Session,
            cssr: CssrConfig::default(),
            fraction: 0.9,
            bootstrap: Some(BootstrapConfig::default()),
            min_game_index: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() || self.thetas.is_empty() || self.lengths.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one scheme, theta and length".into()));
        }
        if self.thetas.contains(&0) {
            return Err(Error::InvalidArgument("theta values must be positive".into()));
        }
        for &l in &self.lengths {
            CssrConfig {
                max_len: l,
                ..self.cssr.clone()
            }
            .validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub quartile: Option<u8>,
    pub scheme: Scheme,
    pub theta: u64,
    pub max_len: usize,
    pub weighted_auc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Recurrent states of the fitted machine.
    pub n_states: Option<usize>,
    pub n_train_sessions: usize,
    pub n_test_sessions: usize,
    /// Highest weighted AUC among the thetas of this quartile, scheme and length.
    pub best_theta: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

fn better(a: &SweepCell, b: &SweepCell) -> bool {
    match (a.weighted_auc, b.weighted_auc) {
        (Some(x), Some(y)) => x > y,
        (Some(_), None) => true,
        _ => false,
    }
}

impl SweepReport {
    fn mark_best(&mut self) {
        for c in &mut self.cells {
            c.best_theta = false;
        }
        let n = self.cells.len();
        for i in 0..n {
            let key = |c: &SweepCell| (c.quartile, c.scheme, c.max_len);
            let k = key(&self.cells[i]);
            let best = (0..n)
                .filter(|&j| key(&self.cells[j]) == k)
                .reduce(|a, b| if better(&self.cells[b], &self.cells[a]) { b } else { a });
            if best == Some(i) && self.cells[i].weighted_auc.is_some() {
                self.cells[i].best_theta = true;
            }
        }
    }

    /// Best cell for a scheme, optionally restricted to a quartile and length.
    pub fn best(&self, scheme: Option<Scheme>, quartile: Option<u8>, max_len: Option<usize>) -> Option<&SweepCell> {
        self.cells
            .iter()
            .filter(|c| scheme.is_none_or(|s| c.scheme == s))
            .filter(|c| quartile.is_none_or(|q| c.quartile == Some(q)))
            .filter(|c| max_len.is_none_or(|l| c.max_len == l))
            .filter(|c| c.weighted_auc.is_some())
            .reduce(|a, b| if better(b, a) { b } else { a })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn restrict(corpus: Corpus, min_games: Option<usize>) -> Corpus {
    let Some(min) = min_games else { return corpus };
    let kept = corpus
        .sessions()
        .filter(|s| s.symbols.len() >= min)
        .cloned()
        .collect();
    Corpus::from_sessions(corpus.spec, kept)
}

fn run_cell(sessions: &[Session], config: &SweepConfig, scheme: Scheme, theta: u64) -> Vec<SweepCell> {
    let blank = |max_len: usize, error: Option<String>| SweepCell {
        quartile: None,
        scheme,
        theta,
        max_len,
        weighted_auc: None,
        ci_low: None,
        ci_high: None,
        n_states: None,
        n_train_sessions: 0,
        n_test_sessions: 0,
        best_theta: false,
        error,
    };
    let spec = AlphabetSpec {
        scheme,
        theta,
        scope: config.scope,
    };
    let split = encode_corpus(sessions, &spec)
        .map(|c| restrict(c, config.min_game_index))
        .and_then(|c| temporal_split(&c, config.fraction));
    let split = match split {
        Ok(s) => s,
        Err(e) => {
            return config
                .lengths
                .iter()
                .map(|&l| blank(l, Some(e.to_string())))
                .collect()
        }
    };
    config
        .lengths
        .iter()
        .map(|&l| {
            let mut cell = blank(l, None);
            cell.n_train_sessions = split.train.n_sessions();
            cell.n_test_sessions = split.test.n_sessions();
            let cssr = CssrConfig {
                max_len: l,
                ..config.cssr.clone()
            };
            let outcome = fit_corpus(&split.train, &cssr).and_then(|m| {
                let report = evaluate(&m, &split.test, config.min_game_index, config.bootstrap.as_ref())?;
                Ok((m.n_recurrent(), report))
            });
            match outcome {
                Ok((n, r)) => {
                    cell.n_states = Some(n);
                    cell.weighted_auc = Some(r.weighted_auc);
                    cell.ci_low = r.ci_low;
                    cell.ci_high = r.ci_high;
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect()
}

/// Weighted AUC over every scheme, theta and history length for one group
/// of sessions. Cells that cannot be evaluated carry their error message.
pub fn model_selection(sessions: &[Session], config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let jobs: Vec<(Scheme, u64)> = config
        .schemes
        .iter()
        .flat_map(|&s| config.thetas.iter().map(move |&t| (s, t)))
        .collect();
    let cells = jobs
        .par_iter()
        .flat_map_iter(|&(s, t)| run_cell(sessions, config, s, t))
        .collect();
    let mut report = SweepReport { cells };
    report.mark_best();
    Ok(report)
}

/// Runs the sweep separately on each quartile's sessions.
pub fn sweep_quartiles(sessions: &[Session], split: &QuartileSplit, config: &SweepConfig) -> Result<SweepReport> {
    let mut cells = Vec::new();
    for q in 1..=4u8 {
        let group: Vec<Session> = sessions
            .iter()
            .filter(|s| split.quartile_of(&s.player_id) == Some(q))
            .cloned()
            .collect();
        let mut r = model_selection(&group, config)?;
        for c in &mut r.cells {
            c.quartile = Some(q);
        }
        cells.extend(r.cells);
    }
    let mut report = SweepReport { cells };
    report.mark_best();
    Ok(report)
}
