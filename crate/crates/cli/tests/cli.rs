use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_playstate"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn toy(dir: &Path) -> PathBuf {
    let path = dir.join("toy.csv");
    fs::write(&path, "player_id,time_h,score\na,0,100\na,1,250\na,5,90\n").unwrap();
    path
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else if p.file_name().unwrap() != "manifest.json" {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn sessions_on_three_game_toy_file() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path());
    ok(tmp.path(), &["ingest", "--dataset", data.to_str().unwrap()]);
    ok(tmp.path(), &["sessions"]);
    let out = tmp.path().join("playstate-out/sessions");
    assert_eq!(
        fs::read_to_string(out.join("sessions.csv")).unwrap(),
        "player_id,session_index,start_h,end_h,n_games\na,0,0,1,2\na,1,5,5,1\n"
    );
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_sessions"], 2);
    assert_eq!(summary["n_games"], 3);
}

#[test]
fn threshold_flag_changes_boundaries() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path());
    ok(tmp.path(), &["ingest", "--dataset", data.to_str().unwrap()]);
    ok(tmp.path(), &["sessions", "--threshold-h", "5"]);
    let text = fs::read_to_string(tmp.path().join("playstate-out/sessions/sessions.csv")).unwrap();
    assert!(text.ends_with("a,0,0,5,3\n"), "{text}");
}

#[test]
fn missing_prerequisite_names_subcommand() {
    let tmp = TempDir::new().unwrap();
    for (cmd, needs) in [("sessions", "ingest"), ("metrics", "sessions"), ("fit", "encode"), ("evaluate", "fit"), ("export-dot", "fit")] {
        let out = run(tmp.path(), &[cmd]);
        assert_eq!(out.status.code(), Some(3), "{cmd}");
        assert!(stderr(&out).contains(&format!("playstate {needs}")), "{cmd}: {}", stderr(&out));
    }
}

#[test]
fn quartile_encoding_needs_metrics() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path());
    ok(tmp.path(), &["ingest", "--dataset", data.to_str().unwrap()]);
    ok(tmp.path(), &["sessions"]);
    let out = run(tmp.path(), &["encode", "--quartile", "4"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("playstate metrics"));
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path());
    ok(tmp.path(), &["ingest", "--dataset", data.to_str().unwrap()]);
    let out = run(tmp.path(), &["ingest", "--dataset", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--force"));
    ok(tmp.path(), &["ingest", "--force", "--dataset", data.to_str().unwrap()]);
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "# bad\nsplit_fraction = 1.5\n").unwrap();
    let out = run(tmp.path(), &["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`split_fraction`"), "{}", stderr(&out));

    fs::write(&cfg, "min_cout = 3\n").unwrap();
    let out = run(tmp.path(), &["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("min_cout"));

    let out = run(tmp.path(), &["ingest", "--dataset", "no-such.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`dataset`"));
}

#[test]
fn flag_overrides_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "outdir = \"from-file\"\nsynth_process = \"golden_mean\"\nsynth_length = 50\n").unwrap();
    ok(tmp.path(), &["synth", "--config", cfg.to_str().unwrap(), "--synth-length", "70"]);
    let stream = fs::read_to_string(tmp.path().join("from-file/synth/stream.txt")).unwrap();
    assert_eq!(stream.trim_end().len(), 70);
    assert!(!stream.contains("11"));
}

#[test]
fn manifest_records_inputs_and_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path());
    ok(tmp.path(), &["ingest", "--dataset", data.to_str().unwrap()]);
    let text = fs::read_to_string(tmp.path().join("playstate-out/ingest/manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["subcommand"], "ingest");
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert!(outputs.contains(&"records.csv"));
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

fn pipeline(dir: &Path, force: bool) {
    let f = |args: &[&str]| {
        let mut v = args.to_vec();
        if force {
            v.push("--force");
        }
        ok(dir, &v);
    };
    f(&["synth", "--synth-players", "300", "--seed", "5"]);
    f(&["ingest", "--dataset", "playstate-out/synth/records.csv"]);
    f(&["sessions"]);
    f(&["metrics"]);
    f(&["encode"]);
    f(&["fit", "--max-len", "1"]);
    f(&["evaluate", "--bootstrap-n", "50"]);
    f(&["export-dot"]);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    pipeline(tmp.path(), false);
    let out = tmp.path().join("playstate-out");
    let first: Vec<(PathBuf, Vec<u8>)> = files(&out).into_iter().map(|p| (p.clone(), fs::read(&p).unwrap())).collect();
    assert!(first.len() > 30);
    pipeline(tmp.path(), true);
    for (path, bytes) in &first {
        assert_eq!(&fs::read(path).unwrap(), bytes, "{} changed", path.display());
    }
    assert_eq!(files(&out).len(), first.len());
}

#[test]
fn exported_machine_matches_fit() {
    let tmp = TempDir::new().unwrap();
    pipeline(tmp.path(), false);
    let out = tmp.path().join("playstate-out");
    let fitted = fs::read_to_string(out.join("fit/machine.dot")).unwrap();
    let exported = fs::read_to_string(out.join("export-dot/machine.dot")).unwrap();
    assert_eq!(fitted, exported);
    assert!(exported.starts_with("digraph"));
    let auc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("evaluate/auc.json")).unwrap()).unwrap();
    let w = auc["weighted_auc"].as_f64().unwrap();
    assert!(w > 0.5 && w <= 1.0);
    let roc = fs::read_to_string(out.join("evaluate/roc.csv")).unwrap();
    assert!(roc.starts_with("symbol,max_len,fpr,tpr\n"));
}

fn synthetic_sweep(tmp: &TempDir) -> serde_json::Value {
    ok(tmp.path(), &["synth", "--synth-players", "1000", "--seed", "7"]);
    ok(tmp.path(), &["ingest", "--dataset", "playstate-out/synth/records.csv"]);
    ok(tmp.path(), &["sessions"]);
    ok(
        tmp.path(),
        &["sweep", "--by-quartile", "false", "--thetas", "300,2000,8000,16000,22000", "--lengths", "1", "--bootstrap-n", "0"],
    );
    let text = fs::read_to_string(tmp.path().join("playstate-out/sweep/sweep.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn sweep_finds_generator_theta_for_delta_prev() {
    let tmp = TempDir::new().unwrap();
    let report = synthetic_sweep(&tmp);
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 15);
    let best = cells
        .iter()
        .find(|c| c["scheme"] == "delta_prev" && c["best_theta"] == true)
        .unwrap();
    assert_eq!(best["theta"], 8000);
    assert_eq!(best["n_states"], 4);
    let csv = fs::read_to_string(tmp.path().join("playstate-out/sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
}

#[test]
fn sweep_argmax_scheme_is_delta_prev() {
    let tmp = TempDir::new().unwrap();
    let report = synthetic_sweep(&tmp);
    let winner = &report["winners"][0];
    assert_eq!(winner["scheme"], "delta_prev", "winner {winner}");
}
