//! Causal state splitting reconstruction: infer a minimal unifilar
//! predictive machine from symbol streams.

mod dot;
mod equality;
mod fit;
mod machine;
mod suffix;

use serde::{Deserialize, Serialize};

pub use dot::{export_dot, graph_to_dot, parse_dot};
pub use equality::{chi_square_p, ks_p, test_equal};
pub use fit::{fit, refinement_violations};
pub use machine::{
    stationary_distribution, CausalState, EpsilonMachine, StateKind, SyncIndex, UnifilarMachine,
    UnifilarState,
};
pub use suffix::{collect_suffix_stats, Suffix, SuffixStats, MAX_HISTORY};

use crate::alphabet::Alphabet;
use crate::encode::{Corpus, Symbol};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    #[default]
    ChiSquare,
    Ks,
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi_square" | "chi2" => Ok(TestKind::ChiSquare),
            "ks" => Ok(TestKind::Ks),
            other => Err(Error::InvalidArgument(format!("unknown test `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CssrConfig {
    /// Longest history considered (L).
    pub max_len: usize,
    /// Significance level of the distribution-equality test.
    pub alpha: f64,
    pub test: TestKind,
    /// Histories seen fewer times than this are never tested.
    pub min_count: u64,
    /// Determinization gives up past this multiple of the initial state count.
    pub state_cap_factor: usize,
}

impl Default for CssrConfig {
    fn default() -> Self {
        Self {
            max_len: 2,
            alpha: 0.001,
            test: TestKind::ChiSquare,
            min_count: 5,
            state_cap_factor: 10,
        }
    }
}

impl CssrConfig {
    pub fn with_max_len(max_len: usize) -> Self {
        Self {
            max_len,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 || self.max_len >= MAX_HISTORY - 1 {
            return Err(Error::InvalidArgument(format!(
                "history length must be in 1..{}, got {}",
                MAX_HISTORY - 1,
                self.max_len
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be at least 1".into()));
        }
        if self.state_cap_factor == 0 {
            return Err(Error::InvalidArgument("state_cap_factor must be at least 1".into()));
        }
        Ok(())
    }
}

/// Collects statistics one symbol deeper than the fit needs and fits.
pub fn fit_streams(streams: &[Vec<u8>], alphabet: &Alphabet, config: &CssrConfig) -> Result<EpsilonMachine> {
    config.validate()?;
    let stats = collect_suffix_stats(streams, alphabet, config.max_len + 1)?;
    fit(&stats, config)
}

/// Fits one machine to the per-player streams of an encoded corpus.
pub fn fit_corpus(corpus: &Corpus, config: &CssrConfig) -> Result<EpsilonMachine> {
    fit_streams(&corpus.streams(), &Symbol::alphabet(), config)
}
