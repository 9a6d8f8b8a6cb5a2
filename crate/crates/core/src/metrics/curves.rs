//! Score-versus-game-index learning curves and the within-session shuffle
//! control.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::skill::QuartileSplit;
use super::stats::{grouped_slope, RunningStats, SlopeTest};
use crate::error::Result;
use crate::ingest::Session;
use crate::seed::rng_for;

/// Quartile of a session's player; 0 stands for "all players" when no split
/// is given, `None` for players outside the split.
pub(crate) fn quartile_for(split: Option<&QuartileSplit>, player_id: &str) -> Option<u8> {
    match split {
        None => Some(0),
        Some(s) => s.quartile_of(player_id),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub quartile: u8,
    pub session_length: usize,
    /// 1-based position of the game inside the session.
    pub game_index: usize,
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Mean score per (quartile, exact session length, game index).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LearningCurveSet {
    pub points: Vec<CurvePoint>,
    #[serde(skip)]
    cells: BTreeMap<(u8, usize), Vec<RunningStats>>,
}

impl LearningCurveSet {
    pub fn cell(&self, quartile: u8, length: usize) -> Option<&[RunningStats]> {
        self.cells.get(&(quartile, length)).map(Vec::as_slice)
    }

    pub fn mean(&self, quartile: u8, length: usize, game_index: usize) -> Option<f64> {
        let stats = self.cell(quartile, length)?.get(game_index.checked_sub(1)?)?;
        (stats.n > 0).then_some(stats.mean)
    }

    pub fn cells(&self) -> impl Iterator<Item = (u8, usize)> + '_ {
        self.cells.keys().copied()
    }

    /// OLS trend of score against game index over every game in a cell.
    pub fn slope(&self, quartile: u8, length: usize) -> Option<SlopeTest> {
        let groups = self.cell(quartile, length)?;
        let xs: Vec<f64> = (1..=groups.len()).map(|i| i as f64).collect();
        grouped_slope(&xs, groups)
    }

    pub fn slopes(&self) -> Vec<SlopeRow> {
        self.cells()
            .filter_map(|(q, len)| {
                self.slope(q, len).map(|test| SlopeRow {
                    quartile: q,
                    session_length: len,
                    test,
                })
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub quartile: u8,
    pub session_length: usize,
    pub test: SlopeTest,
}

/// `quartile,session_length,slope,stderr,t,p_value,n`.
pub fn write_slopes_csv<W: Write>(writer: W, rows: &[SlopeRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["quartile", "session_length", "slope", "stderr", "t", "p_value", "n"])?;
    for r in rows {
        let t = &r.test;
        w.write_record([
            r.quartile.to_string(),
            r.session_length.to_string(),
            t.slope.to_string(),
            t.stderr.to_string(),
            t.t.to_string(),
            t.p_value.to_string(),
            t.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn learning_curves(
    sessions: &[Session],
    split: Option<&QuartileSplit>,
    lengths: RangeInclusive<usize>,
) -> LearningCurveSet {
    let mut cells: BTreeMap<(u8, usize), Vec<RunningStats>> = BTreeMap::new();
    for s in sessions {
        let len = s.games.len();
        if !lengths.contains(&len) {
            continue;
        }
        let Some(q) = quartile_for(split, &s.player_id) else {
            continue;
        };
        let cell = cells
            .entry((q, len))
            .or_insert_with(|| vec![RunningStats::default(); len]);
        for (i, g) in s.games.iter().enumerate() {
            cell[i].push(g.score as f64);
        }
    }
    let points = cells
        .iter()
        .flat_map(|(&(q, len), stats)| {
            stats.iter().enumerate().map(move |(i, st)| CurvePoint {
                quartile: q,
                session_length: len,
                game_index: i + 1,
                mean: st.mean,
                stderr: st.stderr(),
                n: st.n,
            })
        })
        .collect();
    LearningCurveSet { points, cells }
}

/// Randomly permutes the scores inside every session, keeping timestamps,
/// session boundaries and lengths. Each session draws from its own
/// generator keyed by `(seed, player_id, session_index)`.
pub fn shuffle_control(sessions: &[Session], seed: u64) -> Vec<Session> {
    sessions
        .par_iter()
        .map(|s| {
            let mut rng = rng_for(
                seed,
                &[s.player_id.as_bytes(), &(s.session_index as u64).to_le_bytes()],
            );
            let mut scores = s.scores();
            scores.shuffle(&mut rng);
            let mut out = s.clone();
            for (g, score) in out.games.iter_mut().zip(scores) {
                g.score = score;
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::GameRecord;

    pub(crate) fn session(player: &str, index: usize, scores: &[u64]) -> Session {
        let games: Vec<GameRecord> = scores
            .iter()
            .enumerate()
            .map(|(i, &score)| GameRecord {
                player_id: player.into(),
                time_h: (index * 100 + i) as u64,
                score,
                file_ordinal: (index * 100 + i) as u64,
            })
            .collect();
        Session {
            player_id: player.into(),
            session_index: index,
            start_h: games[0].time_h,
            end_h: games.last().unwrap().time_h,
            games,
        }
    }

    #[test]
    fn single_session_curve_is_its_scores() {
        let s = vec![session("a", 0, &[10, 20, 30, 40])];
        let c = learning_curves(&s, None, 4..=15);
        let means: Vec<f64> = (1..=4).map(|i| c.mean(0, 4, i).unwrap()).collect();
        assert_eq!(means, vec![10.0, 20.0, 30.0, 40.0]);
        assert!(c.mean(0, 5, 1).is_none());
    }

    #[test]
    fn lengths_outside_range_ignored() {
        let s = vec![session("a", 0, &[1, 2, 3]), session("a", 1, &[1; 16])];
        let c = learning_curves(&s, None, 4..=15);
        assert!(c.points.is_empty());
    }

    #[test]
    fn shuffle_preserves_multiset_and_boundaries() {
        let s = vec![session("a", 0, &[10, 20, 30]), session("b", 0, &[5])];
        let shuffled = shuffle_control(&s, 3);
        assert_eq!(shuffled[1].scores(), vec![5]);
        let mut sc = shuffled[0].scores();
        sc.sort();
        assert_eq!(sc, vec![10, 20, 30]);
        assert_eq!(shuffled[0].start_h, s[0].start_h);
        assert_eq!(shuffled[0].end_h, s[0].end_h);
        assert_eq!(shuffle_control(&s, 3), shuffled);
    }

    #[test]
    fn strong_trend_has_nonzero_slope() {
        let sessions: Vec<_> = (0..50)
            .map(|i| session(&format!("p{i}"), 0, &[100 + i, 200 + i, 300 + i, 400 + i]))
            .collect();
        let c = learning_curves(&sessions, None, 4..=15);
        let t = c.slope(0, 4).unwrap();
        assert!((t.slope - 100.0).abs() < 1e-9);
        assert!(!t.indistinguishable_from_zero(0.05));
    }

    #[test]
    fn slope_rows_serialize_flat() {
        let sessions: Vec<_> = (0..5).map(|i| session(&format!("p{i}"), 0, &[1, 2 + i, 4])).collect();
        let rows = learning_curves(&sessions, None, 3..=3).slopes();
        let mut out = Vec::new();
        write_slopes_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("quartile,session_length,slope,stderr,t,p_value,n\n"), "{text}");
        assert_eq!(text.lines().count(), 2);
    }
}
