use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{median, pearson, CorrelationResult};
use crate::error::{Error, Result};
use crate::ingest::PlayerHistory;

/// Median score of the player's first three games.
pub fn talent(scores: &[u64]) -> Option<f64> {
    if scores.len() < 3 {
        return None;
    }
    let first: Vec<f64> = scores[..3].iter().map(|&s| s as f64).collect();
    median(&first)
}

/// Median of the (up to) three highest scores after the first three games.
pub fn success(scores: &[u64]) -> Option<f64> {
    if scores.len() < 4 {
        return None;
    }
    let mut rest: Vec<u64> = scores[3..].to_vec();
    rest.sort_unstable_by(|a, b| b.cmp(a));
    let top: Vec<f64> = rest.iter().take(3).map(|&s| s as f64).collect();
    median(&top)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillProfile {
    pub player_id: String,
    pub n_games: usize,
    pub talent: Option<f64>,
    pub success: Option<f64>,
}

impl SkillProfile {
    pub fn from_history(history: &PlayerHistory) -> Self {
        let scores = history.scores();
        Self {
            player_id: history.player_id.clone(),
            n_games: scores.len(),
            talent: talent(&scores),
            success: success(&scores),
        }
    }

    pub fn score(&self, basis: Basis) -> Option<f64> {
        match basis {
            Basis::Talent => self.talent,
            Basis::Success => self.success,
        }
    }
}

pub fn profiles(histories: &[PlayerHistory]) -> Vec<SkillProfile> {
    histories.iter().map(SkillProfile::from_history).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Talent,
    Success,
}

impl std::fmt::Display for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Basis::Talent => "talent",
            Basis::Success => "success",
        })
    }
}

/// Assignment of players to quartiles 1 (lowest) through 4 (highest) of a
/// skill score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileSplit {
    pub basis: Basis,
    /// Upper (inclusive) score bounds of quartiles 1, 2 and 3.
    pub boundaries: [f64; 3],
    pub assignment: BTreeMap<String, u8>,
    /// Set when tie groups made two or more boundaries coincide.
    pub degenerate: bool,
}

impl QuartileSplit {
    pub fn quartile_of(&self, player_id: &str) -> Option<u8> {
        self.assignment.get(player_id).copied()
    }

    pub fn quartile_for_score(&self, score: f64) -> u8 {
        self.boundaries
            .iter()
            .position(|&b| score <= b)
            .map_or(4, |i| i as u8 + 1)
    }

    pub fn sizes(&self) -> [usize; 4] {
        let mut sizes = [0; 4];
        for &q in self.assignment.values() {
            sizes[q as usize - 1] += 1;
        }
        sizes
    }
}

/// Splits players at the empirical 25/50/75 percentiles of the basis score.
///
/// Boundary `k` is the order statistic of rank `ceil(k * n / 4)`; a player
/// goes to the first quartile whose boundary is at least their score, so a
/// tie group straddling a boundary lands wholly in the lower quartile.
/// Profiles without the basis score are left out.
pub fn quartile_split(profiles: &[SkillProfile], basis: Basis) -> Result<QuartileSplit> {
    let scored: Vec<(&str, f64)> = profiles
        .iter()
        .filter_map(|p| p.score(basis).map(|s| (p.player_id.as_str(), s)))
        .collect();
    let n = scored.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "quartile split by {basis} needs at least 4 players, got {n}"
        )));
    }
    let mut sorted: Vec<f64> = scored.iter().map(|(_, s)| *s).collect();
    sorted.sort_by(f64::total_cmp);
    let rank = |k: usize| (k * n).div_ceil(4) - 1;
    let boundaries = [sorted[rank(1)], sorted[rank(2)], sorted[rank(3)]];
    let degenerate = boundaries[0] == boundaries[1] || boundaries[1] == boundaries[2];
    if degenerate {
        log::warn!("quartile split by {basis} is degenerate: boundaries {boundaries:?}");
    }
    let mut split = QuartileSplit {
        basis,
        boundaries,
        assignment: BTreeMap::new(),
        degenerate,
    };
    for (player, score) in scored {
        let q = split.quartile_for_score(score);
        split.assignment.insert(player.to_string(), q);
    }
    Ok(split)
}

/// Success-versus-talent correlation over every eligible player and within
/// each talent quartile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub overall: CorrelationResult,
    pub per_quartile: Vec<QuartileCorrelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileCorrelation {
    pub quartile: u8,
    pub result: Option<CorrelationResult>,
    pub error: Option<String>,
}

pub fn talent_success_correlations(
    profiles: &[SkillProfile],
    talent_split: &QuartileSplit,
) -> Result<CorrelationReport> {
    let eligible: Vec<(&SkillProfile, f64, f64)> = profiles
        .iter()
        .filter_map(|p| Some((p, p.talent?, p.success?)))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = eligible.iter().map(|(_, t, s)| (*t, *s)).unzip();
    let overall = pearson(&xs, &ys)?;
    let per_quartile = (1..=4u8)
        .map(|q| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = eligible
                .iter()
                .filter(|(p, _, _)| talent_split.quartile_of(&p.player_id) == Some(q))
                .map(|(_, t, s)| (*t, *s))
                .unzip();
            match pearson(&xs, &ys) {
                Ok(r) => QuartileCorrelation {
                    quartile: q,
                    result: Some(r),
                    error: None,
                },
                Err(e) => QuartileCorrelation {
                    quartile: q,
                    result: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(CorrelationReport {
        overall,
        per_quartile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(id: &str, score: f64) -> SkillProfile {
        SkillProfile {
            player_id: id.into(),
            n_games: 3,
            talent: Some(score),
            success: None,
        }
    }

    #[test]
    fn talent_examples() {
        assert_eq!(talent(&[100, 300, 200, 999]), Some(200.0));
        assert_eq!(talent(&[100, 300]), None);
        assert_eq!(talent(&[5, 5, 5]), Some(5.0));
    }

    #[test]
    fn success_examples() {
        assert_eq!(success(&[100, 300, 200, 500, 400, 800, 600]), Some(600.0));
        assert_eq!(success(&[100, 300, 200, 900]), Some(900.0));
        assert_eq!(success(&[1, 2, 3]), None);
        // two remaining games: median of two
        assert_eq!(success(&[1, 2, 3, 10, 20]), Some(15.0));
    }

    #[test]
    fn exact_quarters() {
        let ps: Vec<_> = (1..=8).map(|i| profile(&format!("p{i}"), i as f64)).collect();
        let split = quartile_split(&ps, Basis::Talent).unwrap();
        for i in 1..=8 {
            let expected = ((i + 1) / 2) as u8;
            assert_eq!(split.quartile_of(&format!("p{i}")), Some(expected), "player {i}");
        }
        assert!(!split.degenerate);
        assert_eq!(split.sizes(), [2, 2, 2, 2]);
    }

    #[test]
    fn all_equal_scores_go_to_first_quartile() {
        let ps: Vec<_> = (0..10).map(|i| profile(&format!("p{i}"), 7.0)).collect();
        let split = quartile_split(&ps, Basis::Talent).unwrap();
        assert!(split.assignment.values().all(|&q| q == 1));
        assert!(split.degenerate);
    }

    #[test]
    fn too_few_profiles() {
        let ps: Vec<_> = (0..3).map(|i| profile(&format!("p{i}"), i as f64)).collect();
        assert!(quartile_split(&ps, Basis::Talent).is_err());
        // success basis undefined for every profile here
        let ps: Vec<_> = (0..8).map(|i| profile(&format!("p{i}"), i as f64)).collect();
        assert!(quartile_split(&ps, Basis::Success).is_err());
    }
}
