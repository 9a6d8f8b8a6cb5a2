//! Synthetic processes with known predictive machines, and a synthetic
//! game-record generator driven by a four-letter session machine.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::cssr::{
    CausalState, CssrConfig, EpsilonMachine, StateKind, Suffix, UnifilarMachine, UnifilarState,
};
use crate::encode::Symbol;
use crate::error::{Error, Result};
use crate::ingest::GameRecord;
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Iid { alphabet: Alphabet, probs: Vec<f64> },
    /// Repeats `pattern` forever from a uniformly drawn phase.
    Periodic { alphabet: Alphabet, pattern: String },
    /// Binary; no two consecutive 1s, and a 1 with probability `p` otherwise.
    GoldenMean { p: f64 },
    /// Binary; runs of 1s between 0s have even length; a new run starts
    /// with probability `p`.
    EvenProcess { p: f64 },
    CustomUnifilar { machine: UnifilarMachine },
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidGenerator(format!("p must be in (0, 1), got {p}")))
    }
}

fn state(emission: Vec<f64>, next: Vec<Option<usize>>) -> UnifilarState {
    UnifilarState { emission, next }
}

impl GeneratorSpec {
    pub fn golden_mean() -> Self {
        GeneratorSpec::GoldenMean { p: 0.5 }
    }

    pub fn even_process() -> Self {
        GeneratorSpec::EvenProcess { p: 0.5 }
    }

    pub fn fair_coin() -> Self {
        GeneratorSpec::Iid {
            alphabet: Alphabet::binary(),
            probs: vec![0.5, 0.5],
        }
    }

    pub fn periodic(pattern: &str) -> Self {
        GeneratorSpec::Periodic {
            alphabet: Alphabet::binary(),
            pattern: pattern.into(),
        }
    }

    /// The process as a unifilar machine, validated.
    pub fn machine(&self) -> Result<UnifilarMachine> {
        let m = match self {
            GeneratorSpec::Iid { alphabet, probs } => UnifilarMachine {
                alphabet: alphabet.clone(),
                states: vec![state(
                    probs.clone(),
                    probs.iter().map(|&p| (p > 0.0).then_some(0)).collect(),
                )],
            },
            GeneratorSpec::Periodic { alphabet, pattern } => {
                let symbols = alphabet.encode(pattern)?;
                if symbols.is_empty() {
                    return Err(Error::InvalidGenerator("empty periodic pattern".into()));
                }
                let n = symbols.len();
                let states = symbols
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| {
                        let mut emission = vec![0.0; alphabet.len()];
                        let mut next = vec![None; alphabet.len()];
                        emission[s as usize] = 1.0;
                        next[s as usize] = Some((i + 1) % n);
                        state(emission, next)
                    })
                    .collect();
                UnifilarMachine {
                    alphabet: alphabet.clone(),
                    states,
                }
            }
            GeneratorSpec::GoldenMean { p } => {
                check_p(*p)?;
                UnifilarMachine {
                    alphabet: Alphabet::binary(),
                    states: vec![
                        state(vec![1.0 - p, *p], vec![Some(0), Some(1)]),
                        state(vec![1.0, 0.0], vec![Some(0), None]),
                    ],
                }
            }
            GeneratorSpec::EvenProcess { p } => {
                check_p(*p)?;
                UnifilarMachine {
                    alphabet: Alphabet::binary(),
                    states: vec![
                        state(vec![1.0 - p, *p], vec![Some(0), Some(1)]),
                        state(vec![0.0, 1.0], vec![None, Some(0)]),
                    ],
                }
            }
            GeneratorSpec::CustomUnifilar { machine } => machine.clone(),
        };
        m.validate()?;
        Ok(m)
    }
}

/// Draws `length` symbols from a machine started in its stationary
/// distribution.
pub fn generate_from(machine: &UnifilarMachine, length: usize, rng: &mut impl Rng) -> Result<Vec<u8>> {
    if length == 0 {
        return Err(Error::InvalidArgument("length must be at least 1".into()));
    }
    machine.validate()?;
    let pi = machine.stationary()?;
    let pick = |w: &[f64]| WeightedIndex::new(w).map_err(|e| Error::InvalidGenerator(e.to_string()));
    let mut current = pick(&pi)?.sample(rng);
    let rows = machine
        .states
        .iter()
        .map(|s| pick(&s.emission))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let sym = rows[current].sample(rng);
        out.push(sym as u8);
        current = machine.states[current].next[sym].expect("validated successor");
    }
    Ok(out)
}

pub fn generate(spec: &GeneratorSpec, length: usize, seed: u64) -> Result<Vec<u8>> {
    let mut rng = rng_for(seed, &[b"generate"]);
    generate_from(&spec.machine()?, length, &mut rng)
}

fn same_row(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Number of behaviorally distinct states (Moore partition refinement).
fn distinct_states(m: &UnifilarMachine) -> usize {
    let n = m.states.len();
    let mut class: Vec<usize> = Vec::with_capacity(n);
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..n {
        match reps.iter().position(|&r| same_row(&m.states[r].emission, &m.states[i].emission)) {
            Some(c) => class.push(c),
            None => {
                class.push(reps.len());
                reps.push(i);
            }
        }
    }
    loop {
        let mut keys: HashMap<(usize, Vec<Option<usize>>), usize> = HashMap::new();
        let refined: Vec<usize> = (0..n)
            .map(|i| {
                let sig = m.states[i].next.iter().map(|t| t.map(|j| class[j])).collect();
                let len = keys.len();
                *keys.entry((class[i], sig)).or_insert(len)
            })
            .collect();
        let count = keys.len();
        if count == class.iter().max().map_or(0, |c| c + 1) {
            return count;
        }
        class = refined;
    }
}

/// Probability of `b` from mixed state `eta`, and the mixed state after it.
fn observe(m: &UnifilarMachine, eta: &[f64], b: usize) -> (f64, Vec<f64>) {
    let mut next = vec![0.0; m.states.len()];
    let mut prob = 0.0;
    for (i, &w) in eta.iter().enumerate() {
        let p = w * m.states[i].emission[b];
        if p > 0.0 {
            prob += p;
            next[m.states[i].next[b].expect("validated successor")] += p;
        }
    }
    if prob > 0.0 {
        next.iter_mut().for_each(|x| *x /= prob);
    }
    (prob, next)
}

fn predictive(m: &UnifilarMachine, eta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.alphabet.len()];
    for (s, &w) in m.states.iter().zip(eta) {
        for (a, &p) in s.emission.iter().enumerate() {
            out[a] += w * p;
        }
    }
    let total: f64 = out.iter().sum();
    out.iter().map(|p| p / total).collect()
}

/// The exact machine of a process, with a synchronization map over all
/// positive-probability histories up to `max_len`. Histories that do not
/// pin down a single state get a synchronization state carrying their
/// exact predictive distribution.
pub fn analytic_machine(spec: &GeneratorSpec, max_len: usize) -> Result<EpsilonMachine> {
    let m = spec.machine()?;
    if !m.is_strongly_connected() {
        return Err(Error::InvalidGenerator("machine is not strongly connected".into()));
    }
    let distinct = distinct_states(&m);
    if distinct != m.states.len() {
        return Err(Error::InvalidGenerator(format!(
            "machine is not minimal: {} states behave like {distinct}",
            m.states.len()
        )));
    }
    let config = CssrConfig::with_max_len(max_len);
    config.validate()?;
    let pi = m.stationary()?;
    let k = m.alphabet.len();
    let n = m.states.len();

    // breadth-first over histories, shortest first
    let mut mixed: BTreeMap<(usize, Suffix), Vec<f64>> = BTreeMap::new();
    mixed.insert((0, Suffix::empty()), pi.clone());
    let mut frontier = vec![(Suffix::empty(), pi.clone())];
    for _ in 0..max_len {
        let mut next_frontier = Vec::new();
        for (w, eta) in &frontier {
            for b in 0..k {
                let (p, eta_b) = observe(&m, eta, b);
                if p > 0.0 {
                    let wb = w.extend_newer(b as u8);
                    mixed.insert((wb.len(), wb), eta_b.clone());
                    next_frontier.push((wb, eta_b));
                }
            }
        }
        frontier = next_frontier;
    }
    let pure = |eta: &[f64]| eta.iter().position(|&x| x >= 1.0 - 1e-12);

    let mut members: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut states: Vec<CausalState> = m
        .states
        .iter()
        .enumerate()
        .map(|(id, s)| CausalState {
            id,
            kind: StateKind::Recurrent,
            members: Vec::new(),
            counts: vec![0; k],
            emission: s.emission.clone(),
            transitions: s.next.clone(),
        })
        .collect();
    let mut sync: HashMap<Suffix, usize> = HashMap::new();
    let mut pending = Vec::new();
    for ((len, w), eta) in &mixed {
        match pure(eta) {
            Some(i) => {
                if *len == max_len {
                    members[i].push(w.to_string_with(&m.alphabet));
                }
                sync.insert(*w, i);
            }
            None => {
                let id = states.len();
                states.push(CausalState {
                    id,
                    kind: StateKind::Synchronization,
                    members: vec![w.to_string_with(&m.alphabet)],
                    counts: vec![0; k],
                    emission: predictive(&m, eta),
                    transitions: vec![None; k],
                });
                sync.insert(*w, id);
                pending.push((id, *w, eta.clone()));
            }
        }
    }
    for (id, w, eta) in pending {
        for b in 0..k {
            let (p, eta_b) = observe(&m, &eta, b);
            if p <= 0.0 {
                continue;
            }
            let h = w.extend_newer(b as u8);
            states[id].transitions[b] = pure(&eta_b).or_else(|| {
                (0..=h.len().min(max_len))
                    .rev()
                    .find_map(|len| sync.get(&h.last(len)).copied())
            });
        }
    }
    for (s, mem) in states.iter_mut().zip(members) {
        s.members = mem;
    }
    let machine = EpsilonMachine {
        format_version: EpsilonMachine::FORMAT_VERSION,
        alphabet: m.alphabet.clone(),
        config,
        states,
        n_recurrent_components: 1,
        sync_map: sync
            .iter()
            .map(|(w, &id)| (w.to_string_with(&m.alphabet), id))
            .collect(),
        marginal: m.symbol_marginal(&pi),
    };
    machine.check()?;
    Ok(machine)
}

/// Probabilities of a poor, good and very good next game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    pub poor: f64,
    pub good: f64,
    pub very_good: f64,
}

impl ClassProbs {
    pub fn uniform() -> Self {
        Self {
            poor: 1.0 / 3.0,
            good: 1.0 / 3.0,
            very_good: 1.0 / 3.0,
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.poor, self.good, self.very_good]
    }
}

/// A session machine over P, G, V, Q. The state is the last symbol (a new
/// session starts in the state after Q). Each game after the first draws a
/// performance class from the state's class distribution and a score delta
/// uniformly inside that class; after each such game the session ends with
/// the class's quit hazard, or when it reaches `max_session_len` games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionGeneratorSpec {
    pub n_players: usize,
    pub sessions_per_player: (usize, usize),
    /// Class distribution in the state after Q, P, G and V, in that order.
    pub class_probs: [ClassProbs; 4],
    /// Chance of quitting right after a P, G or V game.
    pub quit_hazard: [f64; 3],
    pub max_session_len: usize,
    /// Boundary between good and very good deltas.
    pub theta: u64,
    /// Poor deltas lie in `[-spread, -1]`, very good in `[theta, theta + spread]`.
    pub delta_spread: u64,
    pub first_score: (u64, u64),
    /// Hours between the end of one session and the start of the next.
    pub session_gap_h: (u64, u64),
}

impl Default for SessionGeneratorSpec {
    fn default() -> Self {
        Self {
            n_players: 100,
            sessions_per_player: (1, 5),
            class_probs: [
                ClassProbs { poor: 0.3, good: 0.5, very_good: 0.2 },
                ClassProbs { poor: 0.2, good: 0.3, very_good: 0.5 },
                ClassProbs { poor: 0.5, good: 0.3, very_good: 0.2 },
                ClassProbs { poor: 0.6, good: 0.3, very_good: 0.1 },
            ],
            quit_hazard: [0.3, 0.15, 0.05],
            max_session_len: 60,
            theta: 8_000,
            delta_spread: 10_000,
            first_score: (200_000, 400_000),
            session_gap_h: (24, 24 * 14),
        }
    }
}

impl SessionGeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGenerator(msg));
        if self.n_players == 0 {
            return bad("need at least one player".into());
        }
        let (lo, hi) = self.sessions_per_player;
        if lo == 0 || lo > hi {
            return bad(format!("sessions_per_player range {lo}..={hi} is invalid"));
        }
        for (i, c) in self.class_probs.iter().enumerate() {
            let a = c.as_array();
            if a.iter().any(|p| !(0.0..=1.0).contains(p)) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("class probabilities of state {i} are not a distribution"));
            }
        }
        if self.quit_hazard.iter().any(|h| !(0.0..=1.0).contains(h)) {
            return bad("quit hazards must lie in [0, 1]".into());
        }
        if self.max_session_len < 2 {
            return bad("max_session_len must be at least 2".into());
        }
        if self.theta == 0 || self.delta_spread == 0 {
            return bad("theta and delta_spread must be positive".into());
        }
        if self.first_score.0 > self.first_score.1 || self.session_gap_h.0 > self.session_gap_h.1 {
            return bad("ranges must be ordered".into());
        }
        if self.session_gap_h.0 < 2 {
            return bad("session gaps must be at least 2 hours".into());
        }
        Ok(())
    }

    /// The symbol-level machine of the generator, ignoring the length cap.
    /// States: after Q, after P, after G, after V.
    pub fn symbol_machine(&self) -> UnifilarMachine {
        let mut states = Vec::with_capacity(4);
        for (s, probs) in self.class_probs.iter().enumerate() {
            let hazard = if s == 0 { 0.0 } else { self.quit_hazard[s - 1] };
            let c = probs.as_array();
            let mut emission: Vec<f64> = c.iter().map(|p| (1.0 - hazard) * p).collect();
            emission.push(hazard);
            let next = (0..4)
                .map(|a| (emission[a] > 0.0).then_some(if a == 3 { 0 } else { a + 1 }))
                .collect();
            states.push(UnifilarState { emission, next });
        }
        UnifilarMachine {
            alphabet: Symbol::alphabet(),
            states,
        }
    }

    fn draw_delta(&self, class: usize, rng: &mut ChaCha8Rng) -> i64 {
        let spread = self.delta_spread as i64;
        let theta = self.theta as i64;
        match class {
            0 => -rng.random_range(1..=spread),
            1 => rng.random_range(0..theta),
            _ => rng.random_range(theta..=theta + spread),
        }
    }

    fn player(&self, index: usize, seed: u64) -> Vec<GameRecord> {
        let mut rng = rng_for(seed, &[b"player", &(index as u64).to_le_bytes()]);
        let classes: Vec<WeightedIndex<f64>> = self
            .class_probs
            .iter()
            .map(|c| WeightedIndex::new(c.as_array()).expect("validated"))
            .collect();
        let player_id = format!("synth_{index:06}");
        let n_sessions = rng.random_range(self.sessions_per_player.0..=self.sessions_per_player.1);
        let mut time = rng.random_range(0..24 * 365);
        let mut games = Vec::new();
        for _ in 0..n_sessions {
            let start = time;
            let mut score = rng.random_range(self.first_score.0..=self.first_score.1) as i64;
            let push = |i: usize, score: i64, games: &mut Vec<GameRecord>| {
                games.push(GameRecord {
                    player_id: player_id.clone(),
                    time_h: start + (i / 4) as u64,
                    score: score as u64,
                    file_ordinal: 0,
                });
            };
            push(0, score, &mut games);
            let mut state = 0;
            let mut len = 1;
            loop {
                let class = classes[state].sample(&mut rng);
                score = (score + self.draw_delta(class, &mut rng)).max(0);
                push(len, score, &mut games);
                len += 1;
                state = class + 1;
                if len >= self.max_session_len || rng.random::<f64>() < self.quit_hazard[class] {
                    break;
                }
            }
            time = start + ((len - 1) / 4) as u64 + rng.random_range(self.session_gap_h.0..=self.session_gap_h.1);
        }
        games
    }
}

/// Synthetic game records, players in id order, ordinals sequential.
pub fn generate_sessions(spec: &SessionGeneratorSpec, seed: u64) -> Result<Vec<GameRecord>> {
    spec.validate()?;
    let per_player: Vec<Vec<GameRecord>> = (0..spec.n_players)
        .into_par_iter()
        .map(|i| spec.player(i, seed))
        .collect();
    let mut out: Vec<GameRecord> = per_player.into_iter().flatten().collect();
    for (i, g) in out.iter_mut().enumerate() {
        g.file_ordinal = i as u64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_histories, segment_all, SessionConfig};

    fn text(v: &[u8]) -> String {
        Alphabet::binary().decode(v)
    }

    #[test]
    fn periodic_two_alternates() {
        let s = text(&generate(&GeneratorSpec::periodic("01"), 6, 1).unwrap());
        assert!(s == "010101" || s == "101010", "{s}");
    }

    #[test]
    fn golden_mean_never_repeats_ones() {
        for seed in 0..5 {
            let s = text(&generate(&GeneratorSpec::golden_mean(), 5_000, seed).unwrap());
            assert!(!s.contains("11"));
        }
    }

    #[test]
    fn golden_mean_ones_fraction() {
        // stationary (2/3, 1/3); ones only from the first state with p = 1/2
        let s = generate(&GeneratorSpec::golden_mean(), 1_000_000, 7).unwrap();
        let ones = s.iter().filter(|&&x| x == 1).count() as f64 / s.len() as f64;
        assert!((ones - 1.0 / 3.0).abs() < 0.002, "{ones}");
    }

    #[test]
    fn even_process_runs_are_even() {
        let s = text(&generate(&GeneratorSpec::even_process(), 20_000, 3).unwrap());
        // interior runs bounded by zeros on both sides
        for run in s.trim_start_matches('1').trim_end_matches('1').split('0') {
            assert_eq!(run.len() % 2, 0, "odd run {run:?}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&GeneratorSpec::golden_mean(), 1000, 11).unwrap();
        assert_eq!(a, generate(&GeneratorSpec::golden_mean(), 1000, 11).unwrap());
        assert_ne!(a, generate(&GeneratorSpec::golden_mean(), 1000, 12).unwrap());
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(generate(&GeneratorSpec::GoldenMean { p: 1.5 }, 10, 0).is_err());
        let iid = GeneratorSpec::Iid {
            alphabet: Alphabet::binary(),
            probs: vec![0.5, 0.6],
        };
        assert!(generate(&iid, 10, 0).is_err());
        assert!(generate(&GeneratorSpec::golden_mean(), 0, 0).is_err());
    }

    #[test]
    fn analytic_state_counts() {
        assert_eq!(analytic_machine(&GeneratorSpec::fair_coin(), 2).unwrap().n_recurrent(), 1);
        let gm = analytic_machine(&GeneratorSpec::golden_mean(), 3).unwrap();
        assert_eq!(gm.n_recurrent(), 2);
        assert_eq!(gm.states[1].emission, vec![1.0, 0.0]);
        assert_eq!(analytic_machine(&GeneratorSpec::even_process(), 3).unwrap().n_recurrent(), 2);
        let p3 = analytic_machine(&GeneratorSpec::periodic("001"), 3).unwrap();
        assert_eq!(p3.n_recurrent(), 3);
        assert!(p3.states[..3].iter().all(|s| s.emission.contains(&1.0)));
    }

    #[test]
    fn analytic_sync_map() {
        let gm = analytic_machine(&GeneratorSpec::golden_mean(), 2).unwrap();
        assert_eq!(gm.sync_map["1"], 1);
        assert_eq!(gm.sync_map["0"], 0);
        // the empty history is a mixture with the marginal as prediction
        let root = &gm.states[gm.sync_map[""]];
        assert_eq!(root.kind, StateKind::Synchronization);
        assert!((root.emission[1] - 1.0 / 3.0).abs() < 1e-12);
        let even = analytic_machine(&GeneratorSpec::even_process(), 3).unwrap();
        assert_eq!(even.states[even.sync_map["111"]].kind, StateKind::Synchronization);
        assert_eq!(even.sync_map["011"], 0);
    }

    #[test]
    fn non_minimal_machine_rejected() {
        let machine = UnifilarMachine {
            alphabet: Alphabet::binary(),
            states: vec![
                UnifilarState {
                    emission: vec![0.5, 0.5],
                    next: vec![Some(1), Some(1)],
                },
                UnifilarState {
                    emission: vec![0.5, 0.5],
                    next: vec![Some(0), Some(0)],
                },
            ],
        };
        let err = analytic_machine(&GeneratorSpec::CustomUnifilar { machine }, 2).unwrap_err();
        assert!(err.to_string().contains("not minimal"));
        assert!(analytic_machine(&GeneratorSpec::periodic("0101"), 2).is_err());
    }

    fn session_lengths(spec: &SessionGeneratorSpec) -> Vec<usize> {
        let records = generate_sessions(spec, 5).unwrap();
        let seg = segment_all(&build_histories(records), &SessionConfig::default()).unwrap();
        seg.sessions.iter().map(|s| s.len()).collect()
    }

    #[test]
    fn certain_quit_gives_two_game_sessions() {
        let spec = SessionGeneratorSpec {
            quit_hazard: [1.0; 3],
            n_players: 30,
            ..Default::default()
        };
        assert!(session_lengths(&spec).iter().all(|&l| l == 2));
    }

    #[test]
    fn no_quitting_hits_the_cap() {
        let spec = SessionGeneratorSpec {
            quit_hazard: [0.0; 3],
            max_session_len: 15,
            n_players: 30,
            ..Default::default()
        };
        let lengths = session_lengths(&spec);
        assert!(!lengths.is_empty() && lengths.iter().all(|&l| l == 15));
    }

    #[test]
    fn sessions_generation_is_seeded() {
        let spec = SessionGeneratorSpec {
            n_players: 20,
            ..Default::default()
        };
        assert_eq!(generate_sessions(&spec, 9).unwrap(), generate_sessions(&spec, 9).unwrap());
    }

    #[test]
    fn symbol_machine_is_valid_and_minimal() {
        let spec = SessionGeneratorSpec::default();
        let m = spec.symbol_machine();
        m.validate().unwrap();
        let a = analytic_machine(&GeneratorSpec::CustomUnifilar { machine: m }, 1).unwrap();
        assert_eq!(a.n_recurrent(), 4);
    }
}
