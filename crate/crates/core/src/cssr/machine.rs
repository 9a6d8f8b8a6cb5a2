use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::suffix::Suffix;
use super::CssrConfig;
use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

/// One state of a unifilar machine: emission probabilities and the state
/// reached after each symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifilarState {
    pub emission: Vec<f64>,
    pub next: Vec<Option<usize>>,
}

/// A bare unifilar hidden Markov model, used both for fitted recurrent
/// structure and for generator definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifilarMachine {
    pub alphabet: Alphabet,
    pub states: Vec<UnifilarState>,
}

impl UnifilarMachine {
    /// Checks shapes, row-stochastic emissions and that every emitted
    /// symbol has a successor.
    pub fn validate(&self) -> Result<()> {
        let k = self.alphabet.len();
        if self.states.is_empty() {
            return Err(Error::InvalidGenerator("machine has no states".into()));
        }
        for (i, s) in self.states.iter().enumerate() {
            if s.emission.len() != k || s.next.len() != k {
                return Err(Error::InvalidGenerator(format!(
                    "state {i}: expected {k} emissions and transitions"
                )));
            }
            if s.emission.iter().any(|&p| !(0.0..=1.0).contains(&p) || p.is_nan()) {
                return Err(Error::InvalidGenerator(format!("state {i}: probability outside [0, 1]")));
            }
            let total: f64 = s.emission.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidGenerator(format!(
                    "state {i}: emissions sum to {total}, not 1"
                )));
            }
            for (a, (&p, &n)) in s.emission.iter().zip(&s.next).enumerate() {
                match n {
                    Some(j) if j >= self.states.len() => {
                        return Err(Error::InvalidGenerator(format!(
                            "state {i}: symbol {a} leads to missing state {j}"
                        )))
                    }
                    None if p > 0.0 => {
                        return Err(Error::InvalidGenerator(format!(
                            "state {i}: symbol {a} has probability {p} but no successor"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = &self.states[i];
        s.emission
            .iter()
            .zip(&s.next)
            .filter_map(|(&p, &n)| n.filter(|_| p > 0.0).map(|j| (j, p)))
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for (j, _) in self.edges(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// Closed communicating classes of the positive-probability graph,
    /// each sorted, in order of their smallest state.
    pub fn recurrent_components(&self) -> Vec<Vec<usize>> {
        let n = self.states.len();
        let reach: Vec<Vec<bool>> = (0..n).map(|i| self.reachable_from(i)).collect();
        let mut assigned = vec![false; n];
        let mut out = Vec::new();
        for i in 0..n {
            if assigned[i] {
                continue;
            }
            let closed = (0..n).all(|j| !reach[i][j] || reach[j][i]);
            if closed {
                let comp: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
                for &j in &comp {
                    assigned[j] = true;
                }
                out.push(comp);
            }
        }
        out
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.reachable_from(0).iter().all(|&r| r)
            && self.recurrent_components().first().map(Vec::len) == Some(self.states.len())
    }

    /// Stationary distribution restricted to `component`, by lazy power
    /// iteration on `(I + T) / 2`.
    pub fn component_stationary(&self, component: &[usize]) -> Result<Vec<f64>> {
        let n = self.states.len();
        let mut pi = vec![0.0; n];
        for &i in component {
            pi[i] = 1.0 / component.len() as f64;
        }
        for _ in 0..1_000_000 {
            let mut next = vec![0.0; n];
            for &i in component {
                next[i] += 0.5 * pi[i];
                let row_total: f64 = self.edges(i).map(|(_, p)| p).sum();
                for (j, p) in self.edges(i) {
                    next[j] += 0.5 * pi[i] * p / row_total;
                }
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-12 {
                return Ok(pi);
            }
        }
        Err(Error::NonConvergent("stationary distribution did not converge".into()))
    }

    /// Stationary distribution of an irreducible machine.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let comps = self.recurrent_components();
        if comps.len() != 1 {
            return Err(Error::InvalidGenerator(format!(
                "machine has {} recurrent components",
                comps.len()
            )));
        }
        self.component_stationary(&comps[0])
    }

    /// Stationary probability of each symbol.
    pub fn symbol_marginal(&self, pi: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.alphabet.len()];
        for (s, &w) in self.states.iter().zip(pi) {
            for (a, &p) in s.emission.iter().enumerate() {
                m[a] += w * p;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Recurrent,
    Transient,
    /// A short history whose longer extensions disagree; used only while
    /// synchronizing.
    Synchronization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalState {
    pub id: usize,
    pub kind: StateKind,
    /// Histories in this state, oldest symbol first.
    pub members: Vec<String>,
    pub counts: Vec<u64>,
    pub emission: Vec<f64>,
    pub transitions: Vec<Option<usize>>,
}

impl CausalState {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonMachine {
    pub format_version: u32,
    pub alphabet: Alphabet,
    pub config: CssrConfig,
    /// Recurrent states first, then transient, then synchronization states.
    pub states: Vec<CausalState>,
    pub n_recurrent_components: usize,
    /// History (oldest first) to state id.
    pub sync_map: BTreeMap<String, usize>,
    /// Symbol distribution of the training data.
    pub marginal: Vec<f64>,
}

impl EpsilonMachine {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn n_recurrent(&self) -> usize {
        self.states.iter().filter(|s| s.kind == StateKind::Recurrent).count()
    }

    /// Recurrent plus transient states; synchronization states excluded.
    pub fn n_causal(&self) -> usize {
        self.states.iter().filter(|s| s.kind != StateKind::Synchronization).count()
    }

    /// The recurrent part as a bare machine; ids are preserved.
    pub fn recurrent_graph(&self) -> UnifilarMachine {
        let n = self.n_recurrent();
        UnifilarMachine {
            alphabet: self.alphabet.clone(),
            states: self.states[..n]
                .iter()
                .map(|s| UnifilarState {
                    emission: s.emission.clone(),
                    next: s.transitions.iter().map(|t| t.filter(|&j| j < n)).collect(),
                })
                .collect(),
        }
    }

    /// Checks unifilarity, normalization and id consistency.
    pub fn check(&self) -> Result<()> {
        let k = self.alphabet.len();
        for (i, s) in self.states.iter().enumerate() {
            if s.id != i || s.emission.len() != k || s.transitions.len() != k {
                return Err(Error::Internal(format!("state {i} is malformed")));
            }
            let total: f64 = s.emission.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Internal(format!("state {i} emissions sum to {total}")));
            }
            if s.transitions.iter().flatten().any(|&j| j >= self.states.len()) {
                return Err(Error::Internal(format!("state {i} has a dangling transition")));
            }
        }
        for (h, &id) in &self.sync_map {
            if id >= self.states.len() {
                return Err(Error::Internal(format!("history {h:?} maps to missing state {id}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format_version != Self::FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "machine format version {} is not supported (expected {})",
                m.format_version,
                Self::FORMAT_VERSION
            )));
        }
        m.check()?;
        Ok(m)
    }

    pub fn sync_index(&self) -> Result<SyncIndex> {
        let mut map = HashMap::with_capacity(self.sync_map.len());
        let mut max_len = 0;
        for (h, &id) in &self.sync_map {
            let s = Suffix::from_slice(&self.alphabet.encode(h)?);
            max_len = max_len.max(s.len());
            map.insert(s, id);
        }
        Ok(SyncIndex { map, max_len })
    }
}

/// Fast history-to-state lookup built from a machine's synchronization map.
#[derive(Debug, Clone)]
pub struct SyncIndex {
    map: HashMap<Suffix, usize>,
    max_len: usize,
}

impl SyncIndex {
    /// State of the longest known suffix of `history`.
    pub fn lookup(&self, history: &[u8]) -> Option<usize> {
        let longest = self.max_len.min(history.len());
        (0..=longest)
            .rev()
            .find_map(|len| self.map.get(&Suffix::from_slice(&history[history.len() - len..])).copied())
    }
}

/// Stationary distribution over all machine states; zero off the recurrent
/// part. Several recurrent components are weighted by their share of the
/// training observations.
pub fn stationary_distribution(machine: &EpsilonMachine) -> Result<Vec<f64>> {
    let graph = machine.recurrent_graph();
    if graph.states.is_empty() {
        return Err(Error::InsufficientData("machine has no recurrent states".into()));
    }
    let comps = graph.recurrent_components();
    let occupancy = |c: &[usize]| c.iter().map(|&i| machine.states[i].total()).sum::<u64>() as f64;
    let total: f64 = comps.iter().map(|c| occupancy(c)).sum();
    let mut pi = vec![0.0; machine.states.len()];
    for c in &comps {
        let weight = if total > 0.0 {
            occupancy(c) / total
        } else {
            1.0 / comps.len() as f64
        };
        let local = graph.component_stationary(c)?;
        for &i in c {
            pi[i] += weight * local[i];
        }
    }
    Ok(pi)
}
