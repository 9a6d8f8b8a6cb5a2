use std::collections::BTreeMap;

use proptest::prelude::*;

use playstate::cssr::{fit_streams, CssrConfig, StateKind};
use playstate::encode::{encode_session, AlphabetSpec, Scheme, Symbol};
use playstate::evaluate::{auc, auc_rank_sum, roc_from_scores};
use playstate::ingest::{
    build_histories, parse_dataset, segment_all, segment_sessions, GameRecord, ParseOptions,
    PlayerHistory, Session, SessionConfig,
};
use playstate::metrics::{pearson, quartile_split, shuffle_control, success, talent, Basis, SkillProfile};
use playstate::synth::{generate, generate_sessions, GeneratorSpec, SessionGeneratorSpec};
use playstate::Alphabet;

const HEAVY: u32 = 10_000;

fn history_from(player: &str, steps: &[(u64, u64)]) -> PlayerHistory {
    let mut t = 0;
    let games = steps
        .iter()
        .enumerate()
        .map(|(i, &(gap, score))| {
            t += gap;
            GameRecord {
                player_id: player.into(),
                time_h: t,
                score,
                file_ordinal: i as u64,
            }
        })
        .collect();
    PlayerHistory {
        player_id: player.into(),
        games,
    }
}

fn arb_history() -> impl Strategy<Value = PlayerHistory> {
    prop::collection::vec((0u64..6, 0u64..500_000), 1..60).prop_map(|s| history_from("p", &s))
}

fn session_of(scores: &[u64]) -> Session {
    let games: Vec<GameRecord> = scores
        .iter()
        .enumerate()
        .map(|(i, &score)| GameRecord {
            player_id: "p".into(),
            time_h: i as u64 / 4,
            score,
            file_ordinal: i as u64,
        })
        .collect();
    Session {
        player_id: "p".into(),
        session_index: 0,
        start_h: 0,
        end_h: games.last().map_or(0, |g| g.time_h),
        games,
    }
}

fn arb_sessions() -> impl Strategy<Value = Vec<Session>> {
    prop::collection::vec(prop::collection::vec(0u64..1_000_000, 1..30), 1..8).prop_map(|all| {
        all.iter()
            .enumerate()
            .map(|(i, scores)| {
                let mut s = session_of(scores);
                s.session_index = i;
                s
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(HEAVY))]

    #[test]
    fn sessions_partition_history(h in arb_history(), threshold in 1u64..8) {
        let config = SessionConfig { threshold_h: threshold, ..Default::default() };
        let sessions = segment_sessions(&h, &config).unwrap();
        let joined: Vec<GameRecord> = sessions.iter().flat_map(|s| s.games.clone()).collect();
        prop_assert_eq!(joined, h.games.clone());
        for (i, s) in sessions.iter().enumerate() {
            prop_assert_eq!(s.session_index, i);
            prop_assert!(!s.is_empty());
            prop_assert!(s.games.windows(2).all(|w| w[1].time_h - w[0].time_h < threshold));
        }
        for w in sessions.windows(2) {
            let gap = w[1].games[0].time_h - w[0].games.last().unwrap().time_h;
            prop_assert!(gap >= threshold);
        }
    }

    #[test]
    fn shuffle_keeps_multisets_and_boundaries(sessions in arb_sessions(), seed in any::<u64>()) {
        let shuffled = shuffle_control(&sessions, seed);
        prop_assert_eq!(shuffled.len(), sessions.len());
        for (a, b) in sessions.iter().zip(&shuffled) {
            prop_assert_eq!(a.start_h, b.start_h);
            prop_assert_eq!(a.end_h, b.end_h);
            prop_assert_eq!(a.session_index, b.session_index);
            let times = |s: &Session| s.games.iter().map(|g| g.time_h).collect::<Vec<_>>();
            prop_assert_eq!(times(a), times(b));
            let mut x = a.scores();
            let mut y = b.scores();
            x.sort_unstable();
            y.sort_unstable();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn fitted_machines_are_unifilar_and_normalized(
        streams in prop::collection::vec(prop::collection::vec(0u8..3, 0..120), 1..4),
        max_len in 1usize..4,
    ) {
        let alphabet = Alphabet::new("abc").unwrap();
        let config = CssrConfig { max_len, ..Default::default() };
        let m = match fit_streams(&streams, &alphabet, &config) {
            Ok(m) => m,
            Err(playstate::Error::InsufficientData(_)) | Err(playstate::Error::NonConvergent(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(m.check().is_ok());
        for s in &m.states {
            prop_assert_eq!(s.transitions.len(), 3);
            let total: f64 = s.emission.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            if s.kind == StateKind::Recurrent {
                for (a, next) in s.transitions.iter().enumerate() {
                    if s.emission[a] > 0.0 {
                        let j = next.expect("emitted symbol has a successor");
                        prop_assert_eq!(m.states[j].kind, StateKind::Recurrent);
                    }
                }
            }
        }
    }

    #[test]
    fn generators_are_seeded(seed in any::<u64>(), len in 1usize..200, which in 0usize..4) {
        let spec = [
            GeneratorSpec::golden_mean(),
            GeneratorSpec::even_process(),
            GeneratorSpec::fair_coin(),
            GeneratorSpec::periodic("011"),
        ][which].clone();
        let a = generate(&spec, len, seed).unwrap();
        prop_assert_eq!(&a, &generate(&spec, len, seed).unwrap());
        prop_assert_eq!(a.len(), len);
    }

    #[test]
    fn session_generator_is_seeded(seed in any::<u64>()) {
        let spec = SessionGeneratorSpec { n_players: 3, sessions_per_player: (1, 2), max_session_len: 8, ..Default::default() };
        prop_assert_eq!(generate_sessions(&spec, seed).unwrap(), generate_sessions(&spec, seed).unwrap());
    }
}

proptest! {
    #[test]
    fn raising_threshold_never_adds_sessions(h in arb_history(), t in 1u64..8, extra in 0u64..8) {
        let n = |th: u64| segment_sessions(&h, &SessionConfig { threshold_h: th, ..Default::default() }).unwrap().len();
        prop_assert!(n(t + extra) <= n(t));
    }

    #[test]
    fn parsing_is_deterministic(rows in prop::collection::vec((0u8..5, 0u64..100, 0u64..10_000), 0..40)) {
        let mut text = String::from("player_id,time_h,score\n");
        for (p, t, s) in &rows {
            text.push_str(&format!("u{p},{t},{s}\n"));
        }
        let run = || {
            let r = parse_dataset(text.as_bytes(), &ParseOptions::default()).unwrap();
            let h = build_histories(r.records.clone());
            let s = segment_all(&h, &SessionConfig::default()).unwrap().sessions;
            (r.records, h, s)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn skill_scores_are_order_statistics(
        head in prop::collection::vec(0u64..1000, 3),
        mut tail in prop::collection::vec(0u64..1000, 0..20),
        rot in 0usize..20,
    ) {
        let scores: Vec<u64> = head.iter().chain(&tail).copied().collect();
        let (t0, s0) = (talent(&scores), success(&scores));
        if !tail.is_empty() {
            let k = rot % tail.len();
            tail.rotate_left(k);
            tail.reverse();
        }
        let permuted: Vec<u64> = head.iter().chain(&tail).copied().collect();
        prop_assert_eq!(talent(&permuted), t0);
        prop_assert_eq!(success(&permuted), s0);
    }

    #[test]
    fn pearson_of_affine_map(xs in prop::collection::vec(-1e3f64..1e3, 3..40), a in 0.1f64..10.0, b in -100f64..100.0, neg in any::<bool>()) {
        let var = xs.iter().map(|x| (x - xs[0]).abs()).fold(0.0, f64::max);
        prop_assume!(var > 1e-3);
        let slope = if neg { -a } else { a };
        let ys: Vec<f64> = xs.iter().map(|x| slope * x + b).collect();
        let r = pearson(&xs, &ys).unwrap().r;
        let expected = if neg { -1.0 } else { 1.0 };
        prop_assert!((r - expected).abs() < 1e-9);
    }

    #[test]
    fn quartiles_are_monotone(talents in prop::collection::vec(0u64..50, 4..60)) {
        let profiles: Vec<SkillProfile> = talents
            .iter()
            .enumerate()
            .map(|(i, &t)| SkillProfile { player_id: format!("p{i}"), n_games: 3, talent: Some(t as f64), success: None })
            .collect();
        let split = quartile_split(&profiles, Basis::Talent).unwrap();
        for a in &profiles {
            for b in &profiles {
                if a.talent < b.talent {
                    prop_assert!(split.quartile_of(&a.player_id) <= split.quartile_of(&b.player_id));
                }
            }
        }
    }

    #[test]
    fn encoding_counts_and_reproduces(scores in prop::collection::vec(0u64..1_000_000, 1..40), theta in 1u64..50_000, scheme in 0usize..3) {
        let spec = AlphabetSpec::new(Scheme::ALL[scheme], theta);
        let e = encode_session(&session_of(&scores), &spec).unwrap();
        prop_assert_eq!(e.symbols.len(), scores.len());
        prop_assert_eq!(e.symbols.iter().filter(|&&s| s == Symbol::Quit).count(), 1);
        prop_assert_eq!(*e.symbols.last().unwrap(), Symbol::Quit);
        for (d, s) in e.deltas.iter().zip(&e.symbols) {
            prop_assert_eq!(Symbol::classify(*d, theta), *s);
        }
    }

    #[test]
    fn encoding_ignores_score_offsets(scores in prop::collection::vec(0u64..1_000_000, 1..40), shift in 0u64..1_000_000, theta in 1u64..50_000, scheme in 0usize..3) {
        let spec = AlphabetSpec::new(Scheme::ALL[scheme], theta);
        let shifted: Vec<u64> = scores.iter().map(|s| s + shift).collect();
        let a = encode_session(&session_of(&scores), &spec).unwrap();
        let b = encode_session(&session_of(&shifted), &spec).unwrap();
        prop_assert_eq!(a.symbols, b.symbols);
    }

    #[test]
    fn raising_theta_only_demotes_v(scores in prop::collection::vec(0u64..100_000, 1..40), theta in 1u64..20_000, extra in 0u64..20_000, scheme in 0usize..3) {
        let lo = encode_session(&session_of(&scores), &AlphabetSpec::new(Scheme::ALL[scheme], theta)).unwrap();
        let hi = encode_session(&session_of(&scores), &AlphabetSpec::new(Scheme::ALL[scheme], theta + extra)).unwrap();
        for (a, b) in lo.symbols.iter().zip(&hi.symbols) {
            match (a, b) {
                (x, y) if x == y => {}
                (Symbol::VeryGood, Symbol::Good) => {}
                other => prop_assert!(false, "unexpected change {:?}", other),
            }
        }
    }

    #[test]
    fn auc_formulations_agree(pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..200)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 20.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = auc('X', &scores, &labels).unwrap();
        prop_assert!((a - auc_rank_sum('X', &scores, &labels).unwrap()).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
        let curve = roc_from_scores('X', &scores, &labels).unwrap();
        prop_assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        prop_assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
        for w in curve.points.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms(pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..200)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 20.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + s * s * s).collect();
        prop_assert_eq!(auc('X', &scores, &labels).unwrap(), auc('X', &warped, &labels).unwrap());
    }

    #[test]
    fn golden_mean_and_even_structure(seed in any::<u64>()) {
        let g = generate(&GeneratorSpec::golden_mean(), 500, seed).unwrap();
        prop_assert!(g.windows(2).all(|w| w != [1, 1]));
        let e = generate(&GeneratorSpec::even_process(), 500, seed).unwrap();
        // interior runs of 1s bounded by 0s on both sides are even
        let mut runs: BTreeMap<usize, usize> = BTreeMap::new();
        let mut i = e.iter().position(|&x| x == 0).unwrap_or(e.len());
        while i < e.len() {
            let mut j = i + 1;
            while j < e.len() && e[j] == 1 {
                j += 1;
            }
            if j < e.len() {
                *runs.entry(j - i - 1).or_default() += 1;
            }
            i = j;
        }
        prop_assert!(runs.keys().all(|r| r % 2 == 0), "odd run in {:?}", runs);
    }
}
