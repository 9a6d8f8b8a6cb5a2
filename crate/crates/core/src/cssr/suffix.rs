use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

/// Longest history a [`Suffix`] can hold.
pub const MAX_HISTORY: usize = 15;

/// A short history of symbol indices, oldest first. Ordering is
/// lexicographic over symbol indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Suffix {
    // unused slots stay zero so the derived ordering is lexicographic
    data: [u8; MAX_HISTORY],
    len: u8,
}

impl Suffix {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_slice(symbols: &[u8]) -> Self {
        assert!(symbols.len() <= MAX_HISTORY, "suffix longer than {MAX_HISTORY}");
        let mut data = [0u8; MAX_HISTORY];
        data[..symbols.len()].copy_from_slice(symbols);
        Self {
            data,
            len: symbols.len() as u8,
        }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `a·s`: the same history extended one step further into the past.
    pub fn extend_older(&self, a: u8) -> Self {
        let mut out = [0u8; MAX_HISTORY];
        out[0] = a;
        out[1..=self.len()].copy_from_slice(self.as_slice());
        Self {
            data: out,
            len: self.len + 1,
        }
    }

    /// `s·b`: the history after observing `b`.
    pub fn extend_newer(&self, b: u8) -> Self {
        let mut out = *self;
        out.data[self.len()] = b;
        out.len += 1;
        out
    }

    pub fn drop_oldest(&self) -> Self {
        Self::from_slice(&self.as_slice()[1..])
    }

    /// The most recent `k` symbols.
    pub fn last(&self, k: usize) -> Self {
        Self::from_slice(&self.as_slice()[self.len() - k..])
    }

    pub fn to_string_with(&self, alphabet: &Alphabet) -> String {
        alphabet.decode(self.as_slice())
    }
}

impl fmt::Debug for Suffix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Suffix{:?}", self.as_slice())
    }
}

/// Next-symbol counts for every history of length `0..=max_len` seen in a
/// set of streams.
#[derive(Debug, Clone)]
pub struct SuffixStats {
    alphabet: Alphabet,
    max_len: usize,
    counts: HashMap<Suffix, Vec<u64>>,
}

impl SuffixStats {
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn is_empty(&self) -> bool {
        self.total(&Suffix::empty()) == 0
    }

    pub fn counts(&self, s: &Suffix) -> Option<&[u64]> {
        self.counts.get(s).map(Vec::as_slice)
    }

    pub fn total(&self, s: &Suffix) -> u64 {
        self.counts(s).map_or(0, |c| c.iter().sum())
    }

    /// Number of symbols in all streams.
    pub fn n_symbols(&self) -> u64 {
        self.total(&Suffix::empty())
    }

    /// Observed suffixes of one length, sorted.
    pub fn suffixes_of_len(&self, len: usize) -> Vec<Suffix> {
        let mut out: Vec<Suffix> = self.counts.keys().filter(|s| s.len() == len).copied().collect();
        out.sort();
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Suffix, &[u64])> {
        self.counts.iter().map(|(s, c)| (s, c.as_slice()))
    }

    fn merge(mut self, other: Self) -> Self {
        for (s, c) in other.counts {
            match self.counts.get_mut(&s) {
                Some(mine) => mine.iter_mut().zip(c).for_each(|(a, b)| *a += b),
                None => {
                    self.counts.insert(s, c);
                }
            }
        }
        self
    }
}

/// Counts, for every position in every stream and every history length up
/// to `max_len`, the symbol that follows that history. Each stream is one
/// player; windows never reach across streams. Histories that only close a
/// stream are kept with zero counts.
pub fn collect_suffix_stats(streams: &[Vec<u8>], alphabet: &Alphabet, max_len: usize) -> Result<SuffixStats> {
    if max_len == 0 || max_len > MAX_HISTORY - 1 {
        return Err(Error::InvalidArgument(format!(
            "history length must be in 1..={}, got {max_len}",
            MAX_HISTORY - 1
        )));
    }
    for s in streams {
        alphabet.check(s)?;
    }
    let k = alphabet.len();
    let empty = || SuffixStats {
        alphabet: alphabet.clone(),
        max_len,
        counts: HashMap::new(),
    };
    let stats = streams
        .par_iter()
        .fold(empty, |mut acc, stream| {
            for t in 0..=stream.len() {
                for len in 0..=max_len.min(t) {
                    let s = Suffix::from_slice(&stream[t - len..t]);
                    let counts = acc.counts.entry(s).or_insert_with(|| vec![0; k]);
                    if let Some(&next) = stream.get(t) {
                        counts[next as usize] += 1;
                    }
                }
            }
            acc
        })
        .reduce(empty, SuffixStats::merge);
    Ok(stats)
}
