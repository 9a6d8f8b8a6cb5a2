use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::equality::test_equal;
use super::machine::{CausalState, EpsilonMachine, StateKind, UnifilarMachine, UnifilarState};
use super::suffix::{Suffix, SuffixStats};
use super::CssrConfig;
use crate::error::{Error, Result};

fn add_into(acc: &mut [u64], counts: &[u64]) {
    for (a, &c) in acc.iter_mut().zip(counts) {
        *a += c;
    }
}

fn normalize(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Grows histories one symbol into the past, keeping each with its parent's
/// state when the next-symbol distributions agree and otherwise moving it to
/// the first agreeing state or a new one. Histories too rare to test stay
/// with their parent.
fn grow_histories(stats: &SuffixStats, config: &CssrConfig) -> HashMap<Suffix, usize> {
    let k = stats.alphabet().len() as u8;
    let root = Suffix::empty();
    let mut label = HashMap::from([(root, 0usize)]);
    let mut pooled = vec![stats.counts(&root).expect("non-empty stats").to_vec()];
    for len in 0..config.max_len {
        let mut parents: Vec<(usize, Suffix)> = label
            .iter()
            .filter(|(s, _)| s.len() == len)
            .map(|(s, &st)| (st, *s))
            .collect();
        parents.sort();
        for (st, s) in parents {
            for a in 0..k {
                let child = s.extend_older(a);
                let Some(c) = stats.counts(&child) else {
                    continue;
                };
                let n: u64 = c.iter().sum();
                let target = if n == 0 || n < config.min_count || test_equal(c, &pooled[st], config) {
                    st
                } else {
                    match (0..pooled.len()).find(|&j| j != st && test_equal(c, &pooled[j], config)) {
                        Some(j) => j,
                        None => {
                            pooled.push(vec![0; k as usize]);
                            pooled.len() - 1
                        }
                    }
                };
                add_into(&mut pooled[target], c);
                label.insert(child, target);
            }
        }
    }
    label
}

struct Partition<'a> {
    stats: &'a SuffixStats,
    config: &'a CssrConfig,
    members: Vec<Suffix>,
    position: HashMap<Suffix, usize>,
    label: Vec<usize>,
    n_states: usize,
}

impl Partition<'_> {
    fn pooled(&self) -> Vec<Vec<u64>> {
        let mut pooled = vec![vec![0u64; self.stats.alphabet().len()]; self.n_states];
        for (m, &st) in self.members.iter().zip(&self.label) {
            add_into(&mut pooled[st], self.stats.counts(m).expect("member observed"));
        }
        pooled
    }

    /// State entered from member `i` on symbol `b`: the state of the
    /// truncated history, unless the one-longer history is observed often
    /// enough and disagrees with that state, in which case the first state
    /// that agrees with it.
    fn successor(&self, i: usize, b: u8, pooled: &[Vec<u64>]) -> Option<usize> {
        let x = self.members[i];
        if self.stats.counts(&x)?[b as usize] == 0 {
            return None;
        }
        let longer = x.extend_newer(b);
        let base = self.label[*self.position.get(&longer.drop_oldest())?];
        let min = self.config.min_count;
        if let Some(c) = self.stats.counts(&longer) {
            let n: u64 = c.iter().sum();
            if n >= min && !test_equal(c, &pooled[base], self.config) {
                let better = (0..self.n_states).find(|&j| {
                    j != base && pooled[j].iter().sum::<u64>() >= min && test_equal(c, &pooled[j], self.config)
                });
                return Some(better.unwrap_or(base));
            }
        }
        Some(base)
    }

    fn successor_table(&self) -> Vec<Vec<Option<usize>>> {
        let pooled = self.pooled();
        let k = self.stats.alphabet().len() as u8;
        (0..self.members.len())
            .map(|i| (0..k).map(|b| self.successor(i, b, &pooled)).collect())
            .collect()
    }

    /// Splits the first state whose members disagree on a successor. The
    /// group holding the smallest member keeps the old id.
    fn split_once(&mut self, table: &[Vec<Option<usize>>]) -> bool {
        let k = self.stats.alphabet().len();
        for st in 0..self.n_states {
            for b in 0..k {
                let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
                for i in (0..self.members.len()).filter(|&i| self.label[i] == st) {
                    if let Some(t) = table[i][b] {
                        match groups.iter_mut().find(|(g, _)| *g == t) {
                            Some((_, v)) => v.push(i),
                            None => groups.push((t, vec![i])),
                        }
                    }
                }
                if groups.len() > 1 {
                    for (_, idx) in groups.into_iter().skip(1) {
                        for i in idx {
                            self.label[i] = self.n_states;
                        }
                        self.n_states += 1;
                    }
                    return true;
                }
            }
        }
        false
    }
}

/// Reconstructs a unifilar predictive machine from history statistics:
/// grow histories to length `config.max_len`, then split states until every
/// symbol leads each state to a single successor.
pub fn fit(stats: &SuffixStats, config: &CssrConfig) -> Result<EpsilonMachine> {
    config.validate()?;
    if stats.is_empty() {
        return Err(Error::InsufficientData("no symbols to fit".into()));
    }
    let l = config.max_len;
    if stats.max_len() < l {
        return Err(Error::InvalidArgument(format!(
            "statistics collected to length {} but the fit needs {l}",
            stats.max_len()
        )));
    }
    let labels = grow_histories(stats, config);

    // a history never followed by anything can only stand in a state that
    // also holds a counted history
    let counted: BTreeSet<usize> = labels
        .iter()
        .filter(|(s, _)| s.len() == l && stats.total(s) > 0)
        .map(|(_, &st)| st)
        .collect();
    let mut members: Vec<Suffix> = labels
        .iter()
        .filter(|(s, st)| s.len() == l && counted.contains(st))
        .map(|(s, _)| *s)
        .collect();
    members.sort();
    if members.is_empty() {
        return Err(Error::InsufficientData(format!("no history of length {l} observed")));
    }
    let mut compact: BTreeMap<usize, usize> = BTreeMap::new();
    let label: Vec<usize> = members
        .iter()
        .map(|m| {
            let next = compact.len();
            *compact.entry(labels[m]).or_insert(next)
        })
        .collect();
    let initial = compact.len();
    let cap = config.state_cap_factor * initial;
    let mut part = Partition {
        stats,
        config,
        position: members.iter().enumerate().map(|(i, m)| (*m, i)).collect(),
        members,
        label,
        n_states: initial,
    };

    let table = loop {
        let table = part.successor_table();
        if !part.split_once(&table) {
            break table;
        }
        if part.n_states > cap {
            return Err(Error::NonConvergent(format!(
                "determinization exceeded {cap} states (started from {initial}, history length {l}, {} histories)",
                part.members.len()
            )));
        }
    };

    assemble(stats, config, &part, &table)
}

fn assemble(
    stats: &SuffixStats,
    config: &CssrConfig,
    part: &Partition<'_>,
    table: &[Vec<Option<usize>>],
) -> Result<EpsilonMachine> {
    let alphabet = stats.alphabet();
    let k = alphabet.len();
    let l = config.max_len;
    let n = part.n_states;
    let pooled = part.pooled();

    let mut transitions = vec![vec![None; k]; n];
    let mut smallest: Vec<Option<Suffix>> = vec![None; n];
    for (i, &st) in part.label.iter().enumerate() {
        smallest[st] = Some(smallest[st].map_or(part.members[i], |s| s.min(part.members[i])));
        for b in 0..k {
            if let Some(t) = table[i][b] {
                debug_assert!(transitions[st][b].is_none() || transitions[st][b] == Some(t));
                transitions[st][b] = Some(t);
            }
        }
    }
    let graph = UnifilarMachine {
        alphabet: alphabet.clone(),
        states: (0..n)
            .map(|s| UnifilarState {
                emission: normalize(&pooled[s]),
                next: transitions[s].clone(),
            })
            .collect(),
    };
    let comps = graph.recurrent_components();
    if comps.len() > 1 {
        log::warn!("fitted machine has {} recurrent components", comps.len());
    }
    let mut recurrent = vec![false; n];
    for &i in comps.iter().flatten() {
        recurrent[i] = true;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&s| (!recurrent[s], smallest[s]));
    let mut new_id = vec![0; n];
    for (id, &old) in order.iter().enumerate() {
        new_id[old] = id;
    }

    let mut states: Vec<CausalState> = order
        .iter()
        .enumerate()
        .map(|(id, &old)| {
            let mut members: Vec<Suffix> = part
                .members
                .iter()
                .zip(&part.label)
                .filter(|(_, &st)| st == old)
                .map(|(m, _)| *m)
                .collect();
            members.sort();
            CausalState {
                id,
                kind: if recurrent[old] {
                    StateKind::Recurrent
                } else {
                    StateKind::Transient
                },
                members: members.iter().map(|m| m.to_string_with(alphabet)).collect(),
                counts: pooled[old].clone(),
                emission: normalize(&pooled[old]),
                transitions: transitions[old].iter().map(|t| t.map(|j| new_id[j])).collect(),
            }
        })
        .collect();

    let marginal = normalize(stats.counts(&Suffix::empty()).expect("non-empty"));
    let mut sync: HashMap<Suffix, usize> = HashMap::new();
    let mut extensions: HashMap<Suffix, BTreeSet<usize>> = HashMap::new();
    for (m, &st) in part.members.iter().zip(&part.label) {
        sync.insert(*m, new_id[st]);
        for len in 0..l {
            extensions.entry(m.last(len)).or_default().insert(new_id[st]);
        }
    }
    let mut pending = Vec::new();
    for len in 0..l {
        for s in stats.suffixes_of_len(len) {
            match extensions.get(&s) {
                Some(set) if set.len() == 1 => {
                    sync.insert(s, *set.iter().next().expect("one element"));
                }
                _ => {
                    let id = states.len();
                    let counts = stats.counts(&s).expect("observed").to_vec();
                    let emission = if counts.iter().sum::<u64>() == 0 {
                        marginal.clone()
                    } else {
                        normalize(&counts)
                    };
                    states.push(CausalState {
                        id,
                        kind: StateKind::Synchronization,
                        members: vec![s.to_string_with(alphabet)],
                        emission,
                        counts,
                        transitions: vec![None; k],
                    });
                    sync.insert(s, id);
                    pending.push((id, s));
                }
            }
        }
    }
    let longest_known = |h: Suffix| -> Option<usize> {
        (0..=h.len()).rev().find_map(|len| sync.get(&h.last(len)).copied())
    };
    for (id, s) in pending {
        for b in 0..k {
            if states[id].counts[b] > 0 {
                states[id].transitions[b] = longest_known(s.extend_newer(b as u8));
            }
        }
    }

    let sync_map = sync
        .iter()
        .map(|(s, &id)| (s.to_string_with(alphabet), id))
        .collect();
    let machine = EpsilonMachine {
        format_version: EpsilonMachine::FORMAT_VERSION,
        alphabet: alphabet.clone(),
        config: config.clone(),
        states,
        n_recurrent_components: comps.len(),
        sync_map,
        marginal,
    };
    machine.check()?;
    Ok(machine)
}

/// Pairs of histories sharing a recurrent or transient state whose
/// next-symbol distributions are distinguishable at the machine's level.
pub fn refinement_violations(machine: &EpsilonMachine, stats: &SuffixStats) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for s in machine.states.iter().filter(|s| s.kind != StateKind::Synchronization) {
        let counts: Vec<&[u64]> = s
            .members
            .iter()
            .map(|m| {
                let key = Suffix::from_slice(&machine.alphabet.encode(m)?);
                stats
                    .counts(&key)
                    .ok_or_else(|| Error::AlphabetMismatch(format!("history {m:?} missing from statistics")))
            })
            .collect::<Result<_>>()?;
        for i in 0..counts.len() {
            for j in i + 1..counts.len() {
                if !test_equal(counts[i], counts[j], &machine.config) {
                    out.push((s.members[i].clone(), s.members[j].clone()));
                }
            }
        }
    }
    Ok(out)
}
