//! Next-symbol prediction with a fitted machine, per-symbol ROC analysis,
//! frequency-weighted AUC with session bootstrap, and model-selection sweeps.

mod bootstrap;
mod roc;
mod sweep;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap, BootstrapConfig, BootstrapResult};
pub use roc::{auc, auc_from_buckets, auc_rank_sum, roc_from_scores, weighted_auc, RocCurve};
pub use sweep::{model_selection, sweep_quartiles, SweepCell, SweepConfig, SweepReport};

use crate::alphabet::Alphabet;
use crate::cssr::{EpsilonMachine, StateKind, SyncIndex};
use crate::encode::{Corpus, EncodedSession, Symbol};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTestSplit {
    pub train: Corpus,
    pub test: Corpus,
    pub fraction: f64,
}

/// Orders sessions by `(start_h, player_id, session_index)` and puts the
/// first `ceil(fraction * n)` into the training set.
pub fn temporal_split(corpus: &Corpus, fraction: f64) -> Result<TrainTestSplit> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction must be in (0, 1], got {fraction}")));
    }
    let mut sessions: Vec<&EncodedSession> = corpus.sessions().collect();
    if sessions.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 sessions to split, got {}",
            sessions.len()
        )));
    }
    sessions.sort_by(|a, b| {
        (a.start_h, &a.player_id, a.session_index).cmp(&(b.start_h, &b.player_id, b.session_index))
    });
    let n_train = ((fraction * sessions.len() as f64) - 1e-9).ceil() as usize;
    let rebuild = |part: &[&EncodedSession]| {
        let mut owned: Vec<EncodedSession> = part.iter().map(|&s| s.clone()).collect();
        owned.sort_by(|a, b| (&a.player_id, a.session_index).cmp(&(&b.player_id, b.session_index)));
        Corpus::from_sessions(corpus.spec, owned)
    };
    Ok(TrainTestSplit {
        train: rebuild(&sessions[..n_train]),
        test: rebuild(&sessions[n_train..]),
        fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Ordinal of the session within the predicted corpus.
    pub session: usize,
    /// Position of the predicted symbol inside its session.
    pub index: usize,
    pub distribution: Vec<f64>,
    pub actual: u8,
    /// Whether the history pinned down a recurrent state.
    pub synchronized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub alphabet: Alphabet,
    pub items: Vec<Prediction>,
    pub n_sessions: usize,
}

impl Predictions {
    /// How often each symbol actually occurred.
    pub fn frequencies(&self) -> Vec<u64> {
        let mut f = vec![0; self.alphabet.len()];
        for p in &self.items {
            f[p.actual as usize] += 1;
        }
        f
    }

    pub fn scores(&self, symbol: u8) -> (Vec<f64>, Vec<bool>) {
        self.items
            .iter()
            .map(|p| (p.distribution[symbol as usize], p.actual == symbol))
            .unzip()
    }

    pub fn roc(&self, symbol: u8) -> Result<RocCurve> {
        let (scores, labels) = self.scores(symbol);
        roc_from_scores(self.alphabet.char_of(symbol), &scores, &labels)
    }

    pub fn synchronized_fraction(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        self.items.iter().filter(|p| p.synchronized).count() as f64 / self.items.len() as f64
    }
}

struct Predictor<'a> {
    machine: &'a EpsilonMachine,
    index: SyncIndex,
}

impl<'a> Predictor<'a> {
    fn new(machine: &'a EpsilonMachine) -> Result<Self> {
        Ok(Self {
            machine,
            index: machine.sync_index()?,
        })
    }

    fn predict(&self, history: &[u8]) -> (Vec<f64>, bool) {
        match self.index.lookup(history) {
            Some(id) => {
                let s = &self.machine.states[id];
                (s.emission.clone(), s.kind == StateKind::Recurrent)
            }
            None => (self.machine.marginal.clone(), false),
        }
    }
}

/// Predicts every symbol of `stream` from the symbols before it.
pub fn predict_stream(machine: &EpsilonMachine, stream: &[u8]) -> Result<Vec<Prediction>> {
    machine.alphabet.check(stream)?;
    let p = Predictor::new(machine)?;
    Ok((0..stream.len())
        .map(|t| {
            let (distribution, synchronized) = p.predict(&stream[..t]);
            Prediction {
                session: 0,
                index: t,
                distribution,
                actual: stream[t],
                synchronized,
            }
        })
        .collect())
}

/// Predicts every symbol of every player's stream. With `min_game_index`,
/// only sessions with at least that many games are used and only symbols
/// describing games from that index on are scored.
pub fn predict_corpus(machine: &EpsilonMachine, corpus: &Corpus, min_game_index: Option<usize>) -> Result<Predictions> {
    if machine.alphabet != Symbol::alphabet() {
        return Err(Error::AlphabetMismatch(format!(
            "machine alphabet {} does not match corpus alphabet {}",
            machine.alphabet,
            Symbol::alphabet()
        )));
    }
    let p = Predictor::new(machine)?;
    let mut items = Vec::new();
    let mut ordinal = 0;
    let min = min_game_index.unwrap_or(0);
    for player in &corpus.players {
        let mut history: Vec<u8> = Vec::new();
        for s in &player.sessions {
            // a session of n games has n symbols
            if s.symbols.len() < min {
                continue;
            }
            for (j, sym) in s.symbols.iter().enumerate() {
                // symbol j describes game j + 2, the final Q stands for the game after the last
                if j + 2 >= min {
                    let (distribution, synchronized) = p.predict(&history);
                    items.push(Prediction {
                        session: ordinal,
                        index: j,
                        distribution,
                        actual: sym.index(),
                        synchronized,
                    });
                }
                history.push(sym.index());
            }
            ordinal += 1;
        }
    }
    Ok(Predictions {
        alphabet: machine.alphabet.clone(),
        items,
        n_sessions: ordinal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolAuc {
    pub symbol: char,
    pub positives: u64,
    pub negatives: u64,
    /// Share of this symbol among the symbols with a defined AUC.
    pub weight: f64,
    pub auc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub per_symbol: Vec<SymbolAuc>,
    pub weighted_auc: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_resamples: usize,
    pub seed: Option<u64>,
    pub n_predictions: usize,
    pub n_sessions: usize,
    pub synchronized_fraction: f64,
}

impl AucReport {
    pub fn ci_width(&self) -> Option<f64> {
        Some(self.ci_high? - self.ci_low?)
    }

    pub fn ci_contains(&self, value: f64) -> bool {
        matches!((self.ci_low, self.ci_high), (Some(lo), Some(hi)) if lo <= value && value <= hi)
    }
}

/// Per-symbol one-vs-rest AUCs, their frequency-weighted mean and,
/// optionally, bootstrap intervals. Symbols that never occur (or always
/// occur) are left out of the weighting.
pub fn auc_report(predictions: &Predictions, boot: Option<&BootstrapConfig>) -> Result<AucReport> {
    let freqs = predictions.frequencies();
    let total = predictions.items.len() as u64;
    let mut aucs = Vec::with_capacity(freqs.len());
    for (x, &f) in freqs.iter().enumerate() {
        let symbol = predictions.alphabet.char_of(x as u8);
        if f == 0 || f == total {
            log::warn!("symbol {symbol} has {f} of {total} occurrences in the test set; excluded from the weighted AUC");
            aucs.push(None);
            continue;
        }
        let (scores, labels) = predictions.scores(x as u8);
        aucs.push(Some(auc(symbol, &scores, &labels)?));
    }
    let weights: Vec<f64> = freqs.iter().map(|&f| f as f64).collect();
    let weighted = weighted_auc(&aucs, &weights)?;
    let included: f64 = aucs
        .iter()
        .zip(&weights)
        .filter(|(a, _)| a.is_some())
        .map(|(_, w)| w)
        .sum();
    let boot_result = boot.map(|b| bootstrap(predictions, b)).transpose()?;
    let per_symbol = freqs
        .iter()
        .enumerate()
        .map(|(x, &f)| {
            let ci = boot_result.as_ref().and_then(|b| b.per_symbol_ci[x]);
            SymbolAuc {
                symbol: predictions.alphabet.char_of(x as u8),
                positives: f,
                negatives: total - f,
                weight: if aucs[x].is_some() { f as f64 / included } else { 0.0 },
                auc: aucs[x],
                ci_low: ci.map(|c| c.0),
                ci_high: ci.map(|c| c.1),
            }
        })
        .collect();
    Ok(AucReport {
        per_symbol,
        weighted_auc: weighted,
        ci_low: boot_result.as_ref().map(|b| b.weighted_ci.0),
        ci_high: boot_result.as_ref().map(|b| b.weighted_ci.1),
        n_resamples: boot.map_or(0, |b| b.n_resamples),
        seed: boot.map(|b| b.seed),
        n_predictions: predictions.items.len(),
        n_sessions: predictions.n_sessions,
        synchronized_fraction: predictions.synchronized_fraction(),
    })
}

/// Predicts a corpus and scores the predictions.
pub fn evaluate(
    machine: &EpsilonMachine,
    test: &Corpus,
    min_game_index: Option<usize>,
    boot: Option<&BootstrapConfig>,
) -> Result<AucReport> {
    auc_report(&predict_corpus(machine, test, min_game_index)?, boot)
}
