#![allow(dead_code)]

use playstate::cssr::{EpsilonMachine, StateKind};
use playstate::encode::{encode_corpus, AlphabetSpec, Corpus, Scheme};
use playstate::ingest::{build_histories, segment_all, Session, SessionConfig};
use playstate::synth::{analytic_machine, generate_sessions, GeneratorSpec, SessionGeneratorSpec};

/// Largest gap between fitted and true emission probabilities, matching
/// states through the histories that synchronize in both machines.
pub fn max_emission_error(fitted: &EpsilonMachine, truth: &EpsilonMachine) -> f64 {
    let mut worst: f64 = 0.0;
    for (h, &t) in &truth.sync_map {
        let ts = &truth.states[t];
        if ts.kind != StateKind::Recurrent {
            continue;
        }
        let Some(&f) = fitted.sync_map.get(h) else { continue };
        for (a, b) in fitted.states[f].emission.iter().zip(&ts.emission) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Generated records pushed through ingest.
pub fn synthetic_sessions(spec: &SessionGeneratorSpec, seed: u64) -> Vec<Session> {
    let records = generate_sessions(spec, seed).unwrap();
    segment_all(&build_histories(records), &SessionConfig::default())
        .unwrap()
        .sessions
}

/// The generator's own symbol machine in predictor form.
pub fn generating_machine(spec: &SessionGeneratorSpec) -> EpsilonMachine {
    let custom = GeneratorSpec::CustomUnifilar {
        machine: spec.symbol_machine(),
    };
    analytic_machine(&custom, 1).unwrap()
}

/// Sessions encoded the way the generator thinks about them.
pub fn generator_corpus(spec: &SessionGeneratorSpec, sessions: &[Session]) -> Corpus {
    encode_corpus(sessions, &AlphabetSpec::new(Scheme::DeltaPrev, spec.theta)).unwrap()
}
