//! Run configuration: a flat TOML file whose keys can each be overridden
//! by the command-line flag of the same name (underscores become dashes).

use std::path::{Path, PathBuf};

use clap::Args;
use playstate::cssr::{CssrConfig, TestKind};
use playstate::encode::{theta_grid, AlphabetSpec, ReferenceScope, Scheme};
use playstate::evaluate::{BootstrapConfig, SweepConfig};
use playstate::ingest::{ColumnMap, Delimiter, ParseOptions, SessionConfig, SplitRule};
use playstate::metrics::Basis;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Symbol process written by `synth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthProcess {
    /// Game records from the session-level generator.
    Sessions,
    GoldenMean,
    EvenProcess,
    FairCoin,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Raw play records read by `ingest`.
    pub dataset: Option<PathBuf>,
    pub player_column: String,
    pub time_column: String,
    pub score_column: String,
    pub delimiter: Delimiter,
    pub outdir: PathBuf,

    pub threshold_h: u64,
    pub split_rule: SplitRule,

    /// Skill score used to form quartiles for `encode` and `sweep`.
    pub quartile_basis: Basis,
    /// Restricts `encode` to one quartile (1 = lowest).
    pub quartile: Option<u8>,
    /// Longest session length with its own learning curve.
    pub max_curve_len: usize,

    pub scheme: Scheme,
    pub theta: u64,
    pub scope: ReferenceScope,
    pub schemes: Vec<Scheme>,
    /// Explicit sweep grid; replaces the default grid.
    pub thetas: Option<Vec<u64>>,
    /// Extends the default grid past 30000 up to this value.
    pub theta_max: Option<u64>,
    pub lengths: Vec<usize>,
    /// Sweep each quartile separately.
    pub by_quartile: bool,

    pub max_len: usize,
    pub alpha: f64,
    pub test: TestKind,
    pub min_count: u64,
    pub state_cap_factor: usize,

    pub split_fraction: f64,
    pub min_game_index: Option<usize>,
    /// Bootstrap resamples; 0 disables intervals.
    pub bootstrap_n: usize,
    pub seed: u64,

    pub min_edge_prob: f64,
    /// Machine read by `export-dot`; defaults to the `fit` output.
    pub machine: Option<PathBuf>,

    pub synth_process: SynthProcess,
    /// JSON session-generator spec; missing fields take their defaults.
    pub synth_spec: Option<PathBuf>,
    pub synth_players: usize,
    pub synth_length: usize,
    pub synth_p: f64,
    pub synth_pattern: String,

    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let columns = ColumnMap::default();
        let cssr = CssrConfig::default();
        Self {
            dataset: None,
            player_column: columns.player,
            time_column: columns.time,
            score_column: columns.score,
            delimiter: Delimiter::Auto,
            outdir: PathBuf::from("playstate-out"),
            threshold_h: 2,
            split_rule: SplitRule::AtLeast,
            quartile_basis: Basis::Talent,
            quartile: None,
            max_curve_len: 15,
            scheme: Scheme::DeltaPrev,
            theta: 8_000,
            scope: ReferenceScope::Session,
            schemes: Scheme::ALL.to_vec(),
            thetas: None,
            theta_max: None,
            lengths: vec![1, 2, 3],
            by_quartile: true,
            max_len: cssr.max_len,
            alpha: cssr.alpha,
            test: cssr.test,
            min_count: cssr.min_count,
            state_cap_factor: cssr.state_cap_factor,
            split_fraction: 0.9,
            min_game_index: None,
            bootstrap_n: 1_000,
            seed: 0,
            min_edge_prob: 0.1,
            machine: None,
            synth_process: SynthProcess::Sessions,
            synth_spec: None,
            synth_players: 1_000,
            synth_length: 100_000,
            synth_p: 0.5,
            synth_pattern: "011".into(),
            threads: None,
        }
    }
}

fn serde_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Command-line overrides; each flag replaces the config key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub player_column: Option<String>,
    #[arg(long, global = true)]
    pub time_column: Option<String>,
    #[arg(long, global = true)]
    pub score_column: Option<String>,
    #[arg(long, global = true, value_parser = serde_value::<Delimiter>)]
    pub delimiter: Option<Delimiter>,
    #[arg(long, global = true)]
    pub outdir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threshold_h: Option<u64>,
    #[arg(long, global = true, value_parser = serde_value::<SplitRule>)]
    pub split_rule: Option<SplitRule>,
    #[arg(long, global = true, value_parser = serde_value::<Basis>)]
    pub quartile_basis: Option<Basis>,
    #[arg(long, global = true)]
    pub quartile: Option<u8>,
    #[arg(long, global = true)]
    pub max_curve_len: Option<usize>,
    #[arg(long, global = true, value_parser = serde_value::<Scheme>)]
    pub scheme: Option<Scheme>,
    #[arg(long, global = true)]
    pub theta: Option<u64>,
    #[arg(long, global = true, value_parser = serde_value::<ReferenceScope>)]
    pub scope: Option<ReferenceScope>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = serde_value::<Scheme>)]
    pub schemes: Option<Vec<Scheme>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub thetas: Option<Vec<u64>>,
    #[arg(long, global = true)]
    pub theta_max: Option<u64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub by_quartile: Option<bool>,
    #[arg(long, global = true)]
    pub max_len: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_parser = serde_value::<TestKind>)]
    pub test: Option<TestKind>,
    #[arg(long, global = true)]
    pub min_count: Option<u64>,
    #[arg(long, global = true)]
    pub state_cap_factor: Option<usize>,
    #[arg(long, global = true)]
    pub split_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub min_game_index: Option<usize>,
    #[arg(long, global = true)]
    pub bootstrap_n: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub min_edge_prob: Option<f64>,
    #[arg(long, global = true)]
    pub machine: Option<PathBuf>,
    #[arg(long, global = true, value_parser = serde_value::<SynthProcess>)]
    pub synth_process: Option<SynthProcess>,
    #[arg(long, global = true)]
    pub synth_spec: Option<PathBuf>,
    #[arg(long, global = true)]
    pub synth_players: Option<usize>,
    #[arg(long, global = true)]
    pub synth_length: Option<usize>,
    #[arg(long, global = true)]
    pub synth_p: Option<f64>,
    #[arg(long, global = true)]
    pub synth_pattern: Option<String>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident; $($field:ident),* ; $($opt:ident),*) => {
        $(if let Some(v) = $o.$field { $cfg.$field = v; })*
        $(if let Some(v) = $o.$opt { $cfg.$opt = Some(v); })*
    };
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn load(file: Option<&Path>, overrides: Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        let o = overrides;
        apply!(cfg, o;
            player_column, time_column, score_column, delimiter, outdir, threshold_h, split_rule,
            quartile_basis, max_curve_len, scheme, theta, scope, schemes, lengths, by_quartile,
            max_len, alpha, test, min_count, state_cap_factor, split_fraction, bootstrap_n, seed,
            min_edge_prob, synth_process, synth_players, synth_length, synth_p, synth_pattern;
            dataset, quartile, thetas, theta_max, min_game_index, machine, synth_spec, threads);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, msg: String| Err(CliError::Config(format!("`{name}`: {msg}")));
        for (name, path) in [("dataset", &self.dataset), ("synth_spec", &self.synth_spec), ("machine", &self.machine)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return field(name, format!("{} does not exist", p.display()));
                }
            }
        }
        if self.threshold_h == 0 {
            return field("threshold_h", "must be at least 1".into());
        }
        if let Some(q) = self.quartile {
            if !(1..=4).contains(&q) {
                return field("quartile", format!("must be 1, 2, 3 or 4, got {q}"));
            }
        }
        if self.max_curve_len == 0 {
            return field("max_curve_len", "must be at least 1".into());
        }
        if self.theta == 0 {
            return field("theta", "must be positive".into());
        }
        if self.schemes.is_empty() {
            return field("schemes", "must name at least one scheme".into());
        }
        if let Some(t) = &self.thetas {
            if t.is_empty() || t.contains(&0) {
                return field("thetas", "must be a non-empty list of positive values".into());
            }
        }
        if self.theta_max == Some(0) {
            return field("theta_max", "must be positive".into());
        }
        if self.lengths.is_empty() {
            return field("lengths", "must list at least one history length".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return field("alpha", format!("must be in (0, 1), got {}", self.alpha));
        }
        if self.min_count == 0 {
            return field("min_count", "must be at least 1".into());
        }
        if self.state_cap_factor == 0 {
            return field("state_cap_factor", "must be at least 1".into());
        }
        for &l in &self.lengths {
            if let Err(e) = self.cssr(l).validate() {
                return field("lengths", e.to_string());
            }
        }
        if let Err(e) = self.cssr(self.max_len).validate() {
            return field("max_len", e.to_string());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return field("split_fraction", format!("must be in (0, 1), got {}", self.split_fraction));
        }
        if self.min_game_index == Some(0) {
            return field("min_game_index", "game indices start at 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_edge_prob) {
            return field("min_edge_prob", format!("must be in [0, 1], got {}", self.min_edge_prob));
        }
        if self.synth_players == 0 {
            return field("synth_players", "must be at least 1".into());
        }
        if self.synth_length == 0 {
            return field("synth_length", "must be at least 1".into());
        }
        if !(self.synth_p > 0.0 && self.synth_p < 1.0) {
            return field("synth_p", format!("must be in (0, 1), got {}", self.synth_p));
        }
        if self.synth_pattern.is_empty() || !self.synth_pattern.chars().all(|c| c == '0' || c == '1') {
            return field("synth_pattern", "must be a non-empty string of 0s and 1s".into());
        }
        if self.threads == Some(0) {
            return field("threads", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            columns: ColumnMap {
                player: self.player_column.clone(),
                time: self.time_column.clone(),
                score: self.score_column.clone(),
            },
            delimiter: self.delimiter,
        }
    }

    pub fn sessions(&self) -> SessionConfig {
        SessionConfig {
            threshold_h: self.threshold_h,
            rule: self.split_rule,
        }
    }

    pub fn alphabet(&self) -> AlphabetSpec {
        AlphabetSpec {
            scheme: self.scheme,
            theta: self.theta,
            scope: self.scope,
        }
    }

    pub fn cssr(&self, max_len: usize) -> CssrConfig {
        CssrConfig {
            max_len,
            alpha: self.alpha,
            test: self.test,
            min_count: self.min_count,
            state_cap_factor: self.state_cap_factor,
        }
    }

    pub fn bootstrap(&self) -> Option<BootstrapConfig> {
        (self.bootstrap_n > 0).then_some(BootstrapConfig {
            n_resamples: self.bootstrap_n,
            seed: self.seed,
        })
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            schemes: self.schemes.clone(),
            thetas: self.thetas.clone().unwrap_or_else(|| theta_grid(self.theta_max)),
            lengths: self.lengths.clone(),
            scope: self.scope,
            cssr: self.cssr(self.max_len),
            fraction: self.split_fraction,
            bootstrap: self.bootstrap(),
            min_game_index: self.min_game_index,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn example_file_lists_the_defaults() {
        let text = include_str!("../playstate.example.toml");
        let parsed: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "# comment\ntheta = 300\nalpha = 0.01\n").unwrap();
        let o = Overrides {
            theta: Some(16_000),
            ..Default::default()
        };
        let cfg = RunConfig::load(Some(&path), o).unwrap();
        assert_eq!(cfg.theta, 16_000);
        assert_eq!(cfg.alpha, 0.01);
        assert_eq!(cfg.min_count, 5);
    }

    #[test]
    fn bad_values_name_their_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        for (text, key) in [
            ("alpha = 2.0", "alpha"),
            ("scheme = \"delta_max\"", "scheme"),
            ("thetaa = 3", "thetaa"),
            ("quartile = 5", "quartile"),
            ("dataset = \"/no/such/file.csv\"", "dataset"),
        ] {
            std::fs::write(&path, text).unwrap();
            let err = RunConfig::load(Some(&path), Overrides::default()).unwrap_err();
            assert!(matches!(err, CliError::Config(_)));
            assert!(err.to_string().contains(key), "{text}: {err}");
        }
    }
}
