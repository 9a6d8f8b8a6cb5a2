use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use playstate::cssr::{export_dot, fit_corpus, graph_to_dot, EpsilonMachine};
use playstate::encode::{
    encode_corpus, read_corpus_csv, write_corpus_csv, write_streams, Corpus, StreamSidecar,
};
use playstate::evaluate::{
    auc_report, model_selection, predict_corpus, sweep_quartiles, temporal_split, SweepReport,
};
use playstate::ingest::{
    build_histories, fraction_players_with_fewer_games, parse_dataset_path, read_records_csv,
    read_session_games_csv, segment_all, sessions_by_player, summarize, write_histogram_csv,
    write_records_csv, write_session_games_csv, write_sessions_csv, PlayerHistory, Session,
};
use playstate::metrics::{
    default_index_ranges, learning_curves, persistence, profiles, quartile_split,
    quit_probability_curve, shuffle_control, spacing_improvement, talent_success_correlations,
    write_slopes_csv, Basis, BreakBins, DeltaBins, QuartileSplit, SkillProfile,
};
use playstate::synth::{generate, generate_sessions, GeneratorSpec, SessionGeneratorSpec};
use serde::{Deserialize, Serialize};

use crate::artifacts::{upstream, Stage};
use crate::config::{RunConfig, SynthProcess};
use crate::error::{CliError, CliResult};

pub struct Context {
    pub config: RunConfig,
    pub force: bool,
}

impl Context {
    fn outdir(&self) -> &Path {
        &self.config.outdir
    }

    fn stage(&self, name: &'static str) -> CliResult<Stage> {
        Stage::create(self.outdir(), name, self.force)
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_sessions(ctx: &Context, stage: &mut Stage) -> CliResult<Vec<Session>> {
    let path = upstream(ctx.outdir(), "sessions", "session_games.csv")?;
    stage.input(&path)?;
    let sessions = read_session_games_csv(open(&path)?)?;
    if sessions.is_empty() {
        return Err(CliError::Data(format!("{} holds no sessions", path.display())));
    }
    Ok(sessions)
}

#[derive(Debug, Serialize, Deserialize)]
struct Quartiles {
    talent: QuartileSplit,
    success: QuartileSplit,
}

impl Quartiles {
    fn by(&self, basis: Basis) -> &QuartileSplit {
        match basis {
            Basis::Talent => &self.talent,
            Basis::Success => &self.success,
        }
    }
}

fn load_quartiles(ctx: &Context, stage: &mut Stage) -> CliResult<Quartiles> {
    let path = upstream(ctx.outdir(), "metrics", "quartiles.json")?;
    stage.input(&path)?;
    read_json(&path)
}

fn load_corpus(ctx: &Context, stage: &mut Stage) -> CliResult<Corpus> {
    let sidecar_path = upstream(ctx.outdir(), "encode", "streams.json")?;
    let corpus_path = upstream(ctx.outdir(), "encode", "corpus.csv")?;
    stage.input(&sidecar_path)?;
    stage.input(&corpus_path)?;
    let sidecar: StreamSidecar = read_json(&sidecar_path)?;
    Ok(read_corpus_csv(open(&corpus_path)?, sidecar.spec)?)
}

/// Rebuilds per-player histories from sessions.
fn histories_of(sessions: &[Session]) -> Vec<PlayerHistory> {
    sessions_by_player(sessions)
        .into_iter()
        .map(|(player, list)| PlayerHistory {
            player_id: player.to_string(),
            games: list.iter().flat_map(|s| s.games.iter().cloned()).collect(),
        })
        .collect()
}

pub fn ingest(ctx: &Context) -> CliResult<PathBuf> {
    let dataset = ctx
        .config
        .dataset
        .as_deref()
        .ok_or_else(|| CliError::Config("`dataset`: required by ingest".into()))?;
    let mut stage = ctx.stage("ingest")?;
    stage.input(dataset)?;
    let report = parse_dataset_path(dataset, &ctx.config.parse_options())?;
    if report.records.is_empty() {
        return Err(CliError::Data(format!("no valid records in {}", dataset.display())));
    }
    let n_records = report.records.len();
    let histories = build_histories(report.records.clone());
    let records: Vec<_> = histories.iter().flat_map(|h| h.games.iter().cloned()).collect();
    let mut games_per_player: BTreeMap<usize, usize> = BTreeMap::new();
    for h in &histories {
        *games_per_player.entry(h.games.len()).or_default() += 1;
    }
    stage.write("records.csv", |w| Ok(write_records_csv(w, &records)?))?;
    stage.write_json(
        "parse_report.json",
        &serde_json::json!({
            "rows_read": report.rows_read,
            "skipped": report.skipped,
            "skip_reasons": report.skip_reasons,
            "n_records": n_records,
            "n_players": histories.len(),
            "fraction_players_fewer_than_8_games": fraction_players_with_fewer_games(&histories, 8),
        }),
    )?;
    stage.write("games_per_player.csv", |w| {
        Ok(write_histogram_csv(w, "games", &games_per_player)?)
    })?;
    println!(
        "ingest: {n_records} records from {} players ({} rows skipped)",
        histories.len(),
        report.skipped
    );
    stage.finish(&ctx.config)
}

pub fn sessions(ctx: &Context) -> CliResult<PathBuf> {
    let mut stage = ctx.stage("sessions")?;
    let path = upstream(ctx.outdir(), "ingest", "records.csv")?;
    stage.input(&path)?;
    let histories = build_histories(read_records_csv(open(&path)?)?);
    let seg = segment_all(&histories, &ctx.config.sessions())?;
    let summary = summarize(&seg.sessions);
    stage.write("sessions.csv", |w| Ok(write_sessions_csv(w, &seg.sessions)?))?;
    stage.write("session_games.csv", |w| Ok(write_session_games_csv(w, &seg.sessions)?))?;
    stage.write_json(
        "summary.json",
        &serde_json::json!({
            "threshold_h": ctx.config.threshold_h,
            "split_rule": ctx.config.split_rule,
            "n_players": summary.n_players,
            "n_games": summary.n_games,
            "n_sessions": summary.n_sessions,
            "fraction_single_session": summary.fraction_single_session(),
            "sessions_with_more_than_3_games": summary.sessions_with_more_games_than(3),
            "contested_boundaries": seg.contested_boundaries,
        }),
    )?;
    stage.write("sessions_per_player.csv", |w| {
        Ok(write_histogram_csv(w, "sessions", &summary.sessions_per_player)?)
    })?;
    stage.write("games_per_session.csv", |w| {
        Ok(write_histogram_csv(w, "games", &summary.games_per_session)?)
    })?;
    stage.write("session_duration_h.csv", |w| {
        Ok(write_histogram_csv(w, "duration_h", &summary.session_duration_h)?)
    })?;
    stage.write("inter_session_gap_h.csv", |w| {
        Ok(write_histogram_csv(w, "gap_h", &summary.inter_session_gap_h)?)
    })?;
    println!(
        "sessions: {} sessions from {} players",
        summary.n_sessions, summary.n_players
    );
    stage.finish(&ctx.config)
}

fn write_profiles<W: Write>(writer: W, profiles: &[SkillProfile]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["player_id", "n_games", "talent", "success"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for p in profiles {
        w.write_record([
            p.player_id.clone(),
            p.n_games.to_string(),
            opt(p.talent),
            opt(p.success),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn metrics(ctx: &Context) -> CliResult<PathBuf> {
    let mut stage = ctx.stage("metrics")?;
    let sessions = load_sessions(ctx, &mut stage)?;
    let profiles = profiles(&histories_of(&sessions));
    let quartiles = Quartiles {
        talent: quartile_split(&profiles, Basis::Talent)?,
        success: quartile_split(&profiles, Basis::Success)?,
    };
    let correlations = talent_success_correlations(&profiles, &quartiles.talent)?;
    let lengths = 1..=ctx.config.max_curve_len;
    let curves = learning_curves(&sessions, Some(&quartiles.talent), lengths.clone());
    let shuffled = learning_curves(
        &shuffle_control(&sessions, ctx.config.seed),
        Some(&quartiles.talent),
        lengths,
    );
    let quit = quit_probability_curve(
        &sessions,
        Some(&quartiles.talent),
        DeltaBins::default(),
        &default_index_ranges(),
    )?;
    let persist = persistence(&sessions, &[&quartiles.talent, &quartiles.success]);
    let spacing = spacing_improvement(&sessions, &BreakBins::default())?;

    stage.write("profiles.csv", |w| write_profiles(w, &profiles))?;
    stage.write_json("quartiles.json", &quartiles)?;
    stage.write_json(
        "quartile_sizes.json",
        &serde_json::json!({
            "talent": quartiles.talent.sizes(),
            "talent_boundaries": quartiles.talent.boundaries,
            "success": quartiles.success.sizes(),
            "success_boundaries": quartiles.success.boundaries,
        }),
    )?;
    stage.write_json("correlations.json", &correlations)?;
    stage.write("learning_curves.csv", |w| Ok(curves.write_csv(w)?))?;
    stage.write("learning_slopes.csv", |w| Ok(write_slopes_csv(w, &curves.slopes())?))?;
    stage.write("shuffled_learning_curves.csv", |w| Ok(shuffled.write_csv(w)?))?;
    stage.write("shuffled_slopes.csv", |w| Ok(write_slopes_csv(w, &shuffled.slopes())?))?;
    stage.write("quit_curve.csv", |w| Ok(quit.write_csv(w)?))?;
    stage.write("persistence.csv", |w| Ok(persist.write_csv(w)?))?;
    stage.write("spacing.csv", |w| Ok(spacing.write_csv(w)?))?;
    println!(
        "metrics: {} players, success-talent r = {:.3}",
        profiles.len(),
        correlations.overall.r
    );
    stage.finish(&ctx.config)
}

pub fn encode(ctx: &Context) -> CliResult<PathBuf> {
    let mut stage = ctx.stage("encode")?;
    let mut sessions = load_sessions(ctx, &mut stage)?;
    if let Some(q) = ctx.config.quartile {
        let quartiles = load_quartiles(ctx, &mut stage)?;
        let split = quartiles.by(ctx.config.quartile_basis);
        sessions.retain(|s| split.quartile_of(&s.player_id) == Some(q));
        if sessions.is_empty() {
            return Err(CliError::Data(format!("no sessions in quartile {q}")));
        }
    }
    let corpus = encode_corpus(&sessions, &ctx.config.alphabet())?;
    stage.write("streams.txt", |w| Ok(write_streams(w, &corpus)?))?;
    stage.write_json("streams.json", &StreamSidecar::for_corpus(&corpus))?;
    stage.write("corpus.csv", |w| Ok(write_corpus_csv(w, &corpus)?))?;
    let freqs = corpus.frequencies();
    stage.write_json(
        "symbol_counts.json",
        &serde_json::json!({ "P": freqs[0], "G": freqs[1], "V": freqs[2], "Q": freqs[3] }),
    )?;
    println!(
        "encode: {} sessions of {} players, symbol counts P {} G {} V {} Q {}",
        corpus.n_sessions(),
        corpus.players.len(),
        freqs[0],
        freqs[1],
        freqs[2],
        freqs[3]
    );
    stage.finish(&ctx.config)
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitInfo {
    fraction: f64,
    n_train_sessions: usize,
    n_test_sessions: usize,
}

pub fn fit(ctx: &Context) -> CliResult<PathBuf> {
    let mut stage = ctx.stage("fit")?;
    let corpus = load_corpus(ctx, &mut stage)?;
    let split = temporal_split(&corpus, ctx.config.split_fraction)?;
    let machine = fit_corpus(&split.train, &ctx.config.cssr(ctx.config.max_len))?;
    stage.write_text("machine.json", &(machine.to_json()? + "\n"))?;
    stage.write_json(
        "split.json",
        &SplitInfo {
            fraction: split.fraction,
            n_train_sessions: split.train.n_sessions(),
            n_test_sessions: split.test.n_sessions(),
        },
    )?;
    stage.write_text("machine.dot", &export_dot(&machine, ctx.config.min_edge_prob))?;
    println!(
        "fit: L={} gives {} recurrent states ({} total) from {} training sessions",
        ctx.config.max_len,
        machine.n_recurrent(),
        machine.states.len(),
        split.train.n_sessions()
    );
    stage.finish(&ctx.config)
}

fn load_machine(path: &Path) -> CliResult<EpsilonMachine> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    EpsilonMachine::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn evaluate(ctx: &Context) -> CliResult<PathBuf> {
    let mut stage = ctx.stage("evaluate")?;
    let machine_path = upstream(ctx.outdir(), "fit", "machine.json")?;
    let split_path = upstream(ctx.outdir(), "fit", "split.json")?;
    stage.input(&machine_path)?;
    stage.input(&split_path)?;
    let machine = load_machine(&machine_path)?;
    let info: SplitInfo = read_json(&split_path)?;
    let corpus = load_corpus(ctx, &mut stage)?;
    let split = temporal_split(&corpus, info.fraction)?;
    if split.test.n_sessions() != info.n_test_sessions {
        return Err(CliError::Data(
            "encode output changed since `playstate fit` ran; rerun fit".into(),
        ));
    }
    let predictions = predict_corpus(&machine, &split.test, ctx.config.min_game_index)?;
    let report = auc_report(&predictions, ctx.config.bootstrap().as_ref())?;
    stage.write_json("auc.json", &report)?;
    let max_len = machine.config.max_len;
    stage.write("roc.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["symbol", "max_len", "fpr", "tpr"])?;
        for (x, s) in report.per_symbol.iter().enumerate() {
            if s.auc.is_none() {
                continue;
            }
            let curve = predictions.roc(x as u8)?;
            for (fpr, tpr) in &curve.points {
                out.write_record([
                    s.symbol.to_string(),
                    max_len.to_string(),
                    fpr.to_string(),
                    tpr.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    match (report.ci_low, report.ci_high) {
        (Some(lo), Some(hi)) => println!(
            "evaluate: weighted AUC {:.4} [{lo:.4}, {hi:.4}] on {} test sessions",
            report.weighted_auc, report.n_sessions
        ),
        _ => println!(
            "evaluate: weighted AUC {:.4} on {} test sessions",
            report.weighted_auc, report.n_sessions
        ),
    }
    stage.finish(&ctx.config)
}

#[derive(Serialize)]
struct Winner {
    quartile: Option<u8>,
    max_len: usize,
    scheme: String,
    theta: u64,
    weighted_auc: Option<f64>,
    n_states: Option<usize>,
}

fn winners(report: &SweepReport, lengths: &[usize], quartiles: &[Option<u8>]) -> Vec<Winner> {
    let mut out = Vec::new();
    for &q in quartiles {
        for &l in lengths {
            if let Some(c) = report.best(None, q, Some(l)) {
                out.push(Winner {
                    quartile: q,
                    max_len: l,
                    scheme: c.scheme.to_string(),
                    theta: c.theta,
                    weighted_auc: c.weighted_auc,
                    n_states: c.n_states,
                });
            }
        }
    }
    out
}

pub fn sweep(ctx: &Context) -> CliResult<PathBuf> {
    let mut stage = ctx.stage("sweep")?;
    let sessions = load_sessions(ctx, &mut stage)?;
    let config = ctx.config.sweep();
    let (report, groups) = if ctx.config.by_quartile {
        let quartiles = load_quartiles(ctx, &mut stage)?;
        let split = quartiles.by(ctx.config.quartile_basis);
        let groups: Vec<Option<u8>> = (1..=4).map(Some).collect();
        (sweep_quartiles(&sessions, split, &config)?, groups)
    } else {
        (model_selection(&sessions, &config)?, vec![None])
    };
    let winners = winners(&report, &config.lengths, &groups);
    stage.write("sweep.csv", |w| Ok(report.write_csv(w)?))?;
    stage.write_json(
        "sweep.json",
        &serde_json::json!({ "config": config, "winners": winners, "cells": report.cells }),
    )?;
    for w in &winners {
        let group = w.quartile.map_or("all".to_string(), |q| format!("Q{q}"));
        println!(
            "sweep: {group} L={}: best {} at theta {} (AUC {:.4}, {} states)",
            w.max_len,
            w.scheme,
            w.theta,
            w.weighted_auc.unwrap_or(f64::NAN),
            w.n_states.map_or("?".into(), |n| n.to_string())
        );
    }
    stage.finish(&ctx.config)
}

pub fn synth(ctx: &Context) -> CliResult<PathBuf> {
    let c = &ctx.config;
    let mut stage = ctx.stage("synth")?;
    let spec = match c.synth_process {
        SynthProcess::Sessions => {
            let spec = match &c.synth_spec {
                Some(path) => {
                    stage.input(path)?;
                    read_json::<SessionGeneratorSpec>(path)
                        .map_err(|e| CliError::Config(format!("`synth_spec`: {e}")))?
                }
                None => SessionGeneratorSpec {
                    n_players: c.synth_players,
                    ..Default::default()
                },
            };
            spec.validate().map_err(|e| CliError::Config(format!("`synth_spec`: {e}")))?;
            let records = generate_sessions(&spec, c.seed)?;
            stage.write("records.csv", |w| Ok(write_records_csv(w, &records)?))?;
            stage.write_json("spec.json", &spec)?;
            stage.write_text("generator.dot", &graph_to_dot(&spec.symbol_machine(), c.min_edge_prob))?;
            println!("synth: {} games from {} players", records.len(), spec.n_players);
            return stage.finish(c);
        }
        SynthProcess::GoldenMean => GeneratorSpec::GoldenMean { p: c.synth_p },
        SynthProcess::EvenProcess => GeneratorSpec::EvenProcess { p: c.synth_p },
        SynthProcess::FairCoin => GeneratorSpec::fair_coin(),
        SynthProcess::Periodic => GeneratorSpec::periodic(&c.synth_pattern),
    };
    let machine = spec.machine().map_err(|e| CliError::Config(format!("`synth_process`: {e}")))?;
    let stream = generate(&spec, c.synth_length, c.seed)?;
    stage.write_text("stream.txt", &(machine.alphabet.decode(&stream) + "\n"))?;
    stage.write_json("spec.json", &spec)?;
    stage.write_text("generator.dot", &graph_to_dot(&machine, c.min_edge_prob))?;
    println!("synth: {} symbols", stream.len());
    stage.finish(c)
}

pub fn export_dot_cmd(ctx: &Context) -> CliResult<PathBuf> {
    let mut stage = ctx.stage("export-dot")?;
    let path = match &ctx.config.machine {
        Some(p) => p.clone(),
        None => upstream(ctx.outdir(), "fit", "machine.json")?,
    };
    stage.input(&path)?;
    let machine = load_machine(&path)?;
    stage.write_text("machine.dot", &export_dot(&machine, ctx.config.min_edge_prob))?;
    println!(
        "export-dot: {} recurrent states, edges below {} omitted",
        machine.n_recurrent(),
        ctx.config.min_edge_prob
    );
    stage.finish(&ctx.config)
}
