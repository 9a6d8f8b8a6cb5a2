//! Quitting probability as a function of the score change, and persistence
//! (quitting right after a drop or a gain) by skill quartile.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::curves::quartile_for;
use super::skill::{Basis, QuartileSplit};
use super::stats::proportion_stderr;
use crate::error::{Error, Result};
use crate::ingest::Session;

/// Fixed-width bins over score deltas; values beyond the range fall into
/// the outermost bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaBins {
    pub width: i64,
    pub min: i64,
    pub max: i64,
}

impl Default for DeltaBins {
    fn default() -> Self {
        Self {
            width: 1_000,
            min: -30_000,
            max: 30_000,
        }
    }
}

impl DeltaBins {
    pub fn validate(&self) -> Result<()> {
        if self.width <= 0 || self.max <= self.min || (self.max - self.min) % self.width != 0 {
            return Err(Error::InvalidArgument(format!(
                "delta bins need width > 0 dividing (max - min) > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        ((self.max - self.min) / self.width) as usize
    }

    pub fn index(&self, delta: i64) -> usize {
        let raw = (delta - self.min).div_euclid(self.width);
        raw.clamp(0, self.count() as i64 - 1) as usize
    }

    /// Nominal `[lo, hi)` edges of bin `i`.
    pub fn edges(&self, i: usize) -> (i64, i64) {
        let lo = self.min + i as i64 * self.width;
        (lo, lo + self.width)
    }
}

/// Inclusive range of 1-based game indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexRange {
    pub lo: usize,
    pub hi: usize,
}

impl IndexRange {
    pub fn contains(&self, i: usize) -> bool {
        (self.lo..=self.hi).contains(&i)
    }
}

pub fn default_index_ranges() -> Vec<IndexRange> {
    vec![
        IndexRange { lo: 3, hi: 6 },
        IndexRange { lo: 7, hi: 10 },
        IndexRange { lo: 11, hi: 14 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuitCell {
    pub quartile: u8,
    pub index_lo: usize,
    pub index_hi: usize,
    pub delta_lo: i64,
    pub delta_hi: i64,
    pub quits: u64,
    pub total: u64,
    pub probability: f64,
    pub stderr: f64,
}

impl QuitCell {
    fn new(quartile: u8, range: IndexRange, edges: (i64, i64), quits: u64, total: u64) -> Self {
        assert!(total > 0 && quits <= total, "quit cell {quits}/{total}");
        let probability = quits as f64 / total as f64;
        assert!((0.0..=1.0).contains(&probability));
        Self {
            quartile,
            index_lo: range.lo,
            index_hi: range.hi,
            delta_lo: edges.0,
            delta_hi: edges.1,
            quits,
            total,
            probability,
            stderr: proportion_stderr(quits, total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuitCurve {
    pub bins: DeltaBins,
    pub cells: Vec<QuitCell>,
}

impl QuitCurve {
    pub fn cell(&self, quartile: u8, range_lo: usize, delta: i64) -> Option<&QuitCell> {
        let i = self.bins.index(delta);
        let (lo, _) = self.bins.edges(i);
        self.cells
            .iter()
            .find(|c| c.quartile == quartile && c.index_lo == range_lo && c.delta_lo == lo)
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

/// Probability that a game ends its session given its score delta from the
/// previous game, per quartile, index range and delta bin. Games at index 1
/// have no delta and are excluded; empty bins are omitted.
pub fn quit_probability_curve(
    sessions: &[Session],
    split: Option<&QuartileSplit>,
    bins: DeltaBins,
    ranges: &[IndexRange],
) -> Result<QuitCurve> {
    bins.validate()?;
    // (quartile, range position, bin) -> (quits, total)
    let mut counts: BTreeMap<(u8, usize, usize), (u64, u64)> = BTreeMap::new();
    for s in sessions {
        let Some(q) = quartile_for(split, &s.player_id) else {
            continue;
        };
        let len = s.games.len();
        for i in 2..=len {
            let delta = s.games[i - 1].score as i64 - s.games[i - 2].score as i64;
            let bin = bins.index(delta);
            for (r, range) in ranges.iter().enumerate() {
                if range.contains(i) {
                    let entry = counts.entry((q, r, bin)).or_default();
                    entry.1 += 1;
                    if i == len {
                        entry.0 += 1;
                    }
                }
            }
        }
    }
    let cells = counts
        .into_iter()
        .map(|((q, r, bin), (quits, total))| QuitCell::new(q, ranges[r], bins.edges(bin), quits, total))
        .collect();
    Ok(QuitCurve { bins, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceCell {
    pub basis: Basis,
    pub quartile: u8,
    pub drop_quits: u64,
    pub drops: u64,
    pub quit_after_drop: Option<f64>,
    pub quit_after_drop_stderr: Option<f64>,
    pub gain_quits: u64,
    pub gains: u64,
    pub quit_after_gain: Option<f64>,
    pub quit_after_gain_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceResult {
    pub cells: Vec<PersistenceCell>,
}

impl PersistenceResult {
    pub fn get(&self, basis: Basis, quartile: u8) -> Option<&PersistenceCell> {
        self.cells
            .iter()
            .find(|c| c.basis == basis && c.quartile == quartile)
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

fn ratio(num: u64, den: u64) -> (Option<f64>, Option<f64>) {
    if den == 0 {
        return (None, None);
    }
    assert!(num <= den);
    (Some(num as f64 / den as f64), Some(proportion_stderr(num, den)))
}

/// Quit-after-drop and quit-after-gain rates per quartile of each split.
pub fn persistence(sessions: &[Session], splits: &[&QuartileSplit]) -> PersistenceResult {
    let mut cells = Vec::new();
    for split in splits {
        let mut counts = [[0u64; 4]; 4]; // per quartile: drop_quits, drops, gain_quits, gains
        for s in sessions {
            let Some(q) = split.quartile_of(&s.player_id) else {
                continue;
            };
            let c = &mut counts[q as usize - 1];
            let len = s.games.len();
            for i in 1..len {
                let (prev, cur) = (s.games[i - 1].score, s.games[i].score);
                let last = i == len - 1;
                if cur < prev {
                    c[1] += 1;
                    c[0] += last as u64;
                } else if cur > prev {
                    c[3] += 1;
                    c[2] += last as u64;
                }
            }
        }
        for (qi, c) in counts.iter().enumerate() {
            let (drop_p, drop_se) = ratio(c[0], c[1]);
            let (gain_p, gain_se) = ratio(c[2], c[3]);
            cells.push(PersistenceCell {
                basis: split.basis,
                quartile: qi as u8 + 1,
                drop_quits: c[0],
                drops: c[1],
                quit_after_drop: drop_p,
                quit_after_drop_stderr: drop_se,
                gain_quits: c[2],
                gains: c[3],
                quit_after_gain: gain_p,
                quit_after_gain_stderr: gain_se,
            });
        }
    }
    PersistenceResult { cells }
}
