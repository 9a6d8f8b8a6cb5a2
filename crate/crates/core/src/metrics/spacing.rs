//! Score improvement as a function of break length, between consecutive
//! games and between consecutive sessions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::stats::{median, RunningStats};
use crate::error::{Error, Result};
use crate::ingest::{sessions_by_player, Session};

/// Break-length bins given by ascending lower edges in hours; the last bin
/// is open-ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakBins {
    pub edges: Vec<u64>,
}

impl Default for BreakBins {
    fn default() -> Self {
        Self {
            edges: vec![0, 1, 2, 3, 6, 12, 24, 48, 96, 168, 336, 672],
        }
    }
}

impl BreakBins {
    pub fn validate(&self) -> Result<()> {
        if self.edges.is_empty() || self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "break bin edges must be non-empty and strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn index(&self, gap_h: u64) -> Option<usize> {
        self.edges.iter().rposition(|&e| gap_h >= e)
    }

    pub fn upper(&self, i: usize) -> Option<u64> {
        self.edges.get(i + 1).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingPoint {
    pub break_lo_h: u64,
    /// Exclusive upper edge; absent for the open last bin.
    pub break_hi_h: Option<u64>,
    pub mean_improvement: f64,
    pub stderr: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingCurve {
    pub game_level: Vec<SpacingPoint>,
    pub session_level: Vec<SpacingPoint>,
}

impl SpacingCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "break_lo_h", "break_hi_h", "mean_improvement", "stderr", "n"])?;
        for (level, points) in [("game", &self.game_level), ("session", &self.session_level)] {
            for p in points {
                w.write_record([
                    level.to_string(),
                    p.break_lo_h.to_string(),
                    p.break_hi_h.map_or(String::new(), |h| h.to_string()),
                    p.mean_improvement.to_string(),
                    p.stderr.to_string(),
                    p.n.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Improvement between two consecutive sessions: median of the first three
/// games of the later session minus median of the last three games of the
/// earlier session, with the earlier session's final game left out. `None`
/// unless both sides have three usable games.
pub fn session_improvement(earlier: &[u64], later: &[u64]) -> Option<f64> {
    if earlier.len() < 4 || later.len() < 3 {
        return None;
    }
    let trimmed = &earlier[..earlier.len() - 1];
    let before: Vec<f64> = trimmed[trimmed.len() - 3..].iter().map(|&s| s as f64).collect();
    let after: Vec<f64> = later[..3].iter().map(|&s| s as f64).collect();
    Some(median(&after)? - median(&before)?)
}

fn finish(bins: &BreakBins, stats: Vec<RunningStats>) -> Vec<SpacingPoint> {
    stats
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.n > 0)
        .map(|(i, s)| SpacingPoint {
            break_lo_h: bins.edges[i],
            break_hi_h: bins.upper(i),
            mean_improvement: s.mean,
            stderr: s.stderr(),
            n: s.n,
        })
        .collect()
}

pub fn spacing_improvement(sessions: &[Session], bins: &BreakBins) -> Result<SpacingCurve> {
    bins.validate()?;
    let mut game_stats = vec![RunningStats::default(); bins.edges.len()];
    let mut session_stats = vec![RunningStats::default(); bins.edges.len()];
    for list in sessions_by_player(sessions).values() {
        let games: Vec<_> = list.iter().flat_map(|s| s.games.iter()).collect();
        for pair in games.windows(2) {
            if let Some(b) = bins.index(pair[1].time_h - pair[0].time_h) {
                game_stats[b].push(pair[1].score as f64 - pair[0].score as f64);
            }
        }
        for pair in list.windows(2) {
            let gap = pair[1].start_h - pair[0].end_h;
            if let (Some(b), Some(d)) = (
                bins.index(gap),
                session_improvement(&pair[0].scores(), &pair[1].scores()),
            ) {
                session_stats[b].push(d);
            }
        }
    }
    Ok(SpacingCurve {
        game_level: finish(bins, game_stats),
        session_level: finish(bins, session_stats),
    })
}
