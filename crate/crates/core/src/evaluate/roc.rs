use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub symbol: char,
    /// `(false positive rate, true positive rate)` from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub positives: u64,
    pub negatives: u64,
}

impl RocCurve {
    /// Area under the curve by the trapezoid rule.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["symbol", "fpr", "tpr"])?;
        for (fpr, tpr) in &self.points {
            w.write_record([self.symbol.to_string(), fpr.to_string(), tpr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_classes(symbol: char, labels: &[bool]) -> Result<(u64, u64)> {
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateClass {
            symbol,
            positives,
            negatives,
        });
    }
    Ok((positives, negatives))
}

/// ROC curve of `scores` as a detector of `labels`. Equal scores form one
/// step, so ties are crossed diagonally.
pub fn roc_from_scores(symbol: char, scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    assert_eq!(scores.len(), labels.len());
    let (positives, negatives) = check_classes(symbol, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(RocCurve {
        symbol,
        points,
        positives,
        negatives,
    })
}

/// Mann-Whitney form of the AUC: rank sum of the positives with average
/// ranks for ties, scaled to `[0, 1]`.
pub fn auc_rank_sum(symbol: char, scores: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let (positives, negatives) = check_classes(symbol, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mean_rank * pos_in_group as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// AUC computed both ways; a disagreement beyond 1e-9 is an internal error.
pub fn auc(symbol: char, scores: &[f64], labels: &[bool]) -> Result<f64> {
    let trapezoid = roc_from_scores(symbol, scores, labels)?.auc();
    let ranks = auc_rank_sum(symbol, scores, labels)?;
    if (trapezoid - ranks).abs() > 1e-9 {
        return Err(Error::Internal(format!(
            "AUC cross-check failed for {symbol:?}: trapezoid {trapezoid} vs rank sum {ranks}"
        )));
    }
    Ok(trapezoid)
}

/// AUC from positive and negative counts per distinct score, buckets in
/// ascending score order. `None` when a class is empty.
pub fn auc_from_buckets(pos: &[u64], neg: &[u64]) -> Option<f64> {
    let p: u64 = pos.iter().sum();
    let n: u64 = neg.iter().sum();
    if p == 0 || n == 0 {
        return None;
    }
    let mut below = 0u64;
    let mut credit = 0.0;
    for (&pb, &nb) in pos.iter().zip(neg) {
        credit += pb as f64 * (below as f64 + 0.5 * nb as f64);
        below += nb;
    }
    Some(credit / (p as f64 * n as f64))
}

/// Frequency-weighted mean of the available AUCs; missing entries drop out
/// and the remaining weights are renormalized.
pub fn weighted_auc(aucs: &[Option<f64>], weights: &[f64]) -> Result<f64> {
    assert_eq!(aucs.len(), weights.len());
    let mut total = 0.0;
    let mut acc = 0.0;
    for (a, &w) in aucs.iter().zip(weights) {
        if let Some(a) = a {
            if w > 0.0 {
                acc += w * a;
                total += w;
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::InsufficientData("no symbol has a defined AUC".into()));
    }
    Ok(acc / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case_is_three_quarters() {
        // pairs: 0.9>0.5, 0.9>0.1, 0.4>0.1 concordant; 0.4<0.5 discordant
        let scores = [0.9, 0.4, 0.5, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(auc('X', &scores, &labels).unwrap(), 0.75);
        let c = roc_from_scores('X', &scores, &labels).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn perfect_and_constant() {
        let labels = [true, true, false];
        assert_eq!(auc('X', &[0.9, 0.8, 0.1], &labels).unwrap(), 1.0);
        let c = roc_from_scores('X', &[0.9, 0.8, 0.1], &labels).unwrap();
        assert!(c.points.contains(&(0.0, 1.0)));
        assert_eq!(auc('X', &[0.3; 3], &labels).unwrap(), 0.5);
        let flat = roc_from_scores('X', &[0.3; 3], &labels).unwrap();
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn degenerate_class_named() {
        let err = auc('V', &[0.1, 0.2], &[true, true]).unwrap_err();
        assert!(matches!(err, Error::DegenerateClass { symbol: 'V', .. }));
        assert!(err.to_string().contains('V'));
    }

    #[test]
    fn buckets_match_rank_sum() {
        let scores = [0.1, 0.1, 0.5, 0.5, 0.9];
        let labels = [false, true, false, true, true];
        let by_rank = auc_rank_sum('X', &scores, &labels).unwrap();
        let by_bucket = auc_from_buckets(&[1, 1, 1], &[1, 1, 0]).unwrap();
        assert!((by_rank - by_bucket).abs() < 1e-12);
        assert_eq!(auc_from_buckets(&[1], &[0]), None);
    }

    #[test]
    fn weighted_examples() {
        assert!((weighted_auc(&[Some(0.6), Some(0.8)], &[0.75, 0.25]).unwrap() - 0.65).abs() < 1e-12);
        assert_eq!(weighted_auc(&[Some(0.5), Some(0.5), Some(0.5)], &[0.1, 0.7, 0.2]).unwrap(), 0.5);
        // missing symbol drops out with its weight
        assert!((weighted_auc(&[Some(0.6), None], &[0.2, 0.8]).unwrap() - 0.6).abs() < 1e-12);
        assert!(weighted_auc(&[None], &[1.0]).is_err());
    }
}
