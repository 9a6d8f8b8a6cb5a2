//! Reading play records, grouping them per player and cutting player
//! histories into sessions.
//!
//! A session is a maximal run of one player's games in which no two
//! consecutive games are separated by a break of `threshold_h` hours or
//! more. Timestamps have hourly resolution, so games within the same hour
//! are ordered by their position in the source file.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One play event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub player_id: String,
    /// Whole hours since the dataset epoch (Unix epoch for datetime input).
    pub time_h: u64,
    pub score: u64,
    /// Row index in the source file; unique within a dataset.
    pub file_ordinal: u64,
}

/// All games of one player ordered by `(time_h, file_ordinal)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerHistory {
    pub player_id: String,
    pub games: Vec<GameRecord>,
}

impl PlayerHistory {
    pub fn scores(&self) -> Vec<u64> {
        self.games.iter().map(|g| g.score).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub player_id: String,
    /// 0-based ordinal of the session within the player's history.
    pub session_index: usize,
    pub games: Vec<GameRecord>,
    pub start_h: u64,
    pub end_h: u64,
}

impl Session {
    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn scores(&self) -> Vec<u64> {
        self.games.iter().map(|g| g.score).collect()
    }

    pub fn duration_h(&self) -> u64 {
        self.end_h - self.start_h
    }
}

/// Header names of the three required fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub player: String,
    pub time: String,
    pub score: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            player: "player_id".into(),
            time: "time_h".into(),
            score: "score".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    /// Tab if the header line contains one, comma otherwise.
    #[default]
    Auto,
    Comma,
    Tab,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub columns: ColumnMap,
    pub delimiter: Delimiter,
}

/// Outcome of parsing a dataset: the valid records plus a tally of the rows
/// that were skipped and why.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseReport {
    #[serde(skip)]
    pub records: Vec<GameRecord>,
    pub rows_read: usize,
    pub skipped: usize,
    pub skip_reasons: BTreeMap<String, usize>,
}

impl ParseReport {
    fn skip(&mut self, reason: &str) {
        self.skipped += 1;
        *self.skip_reasons.entry(reason.to_string()).or_default() += 1;
    }
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
];

/// Parses a time field: either integer hours or a datetime truncated to
/// the hour. Returns `None` for unparseable or negative values.
pub fn parse_time_h(field: &str) -> Option<u64> {
    let field = field.trim();
    if let Ok(h) = field.parse::<i64>() {
        return u64::try_from(h).ok();
    }
    let stripped = field.trim_end_matches('Z');
    for fmt in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(stripped, fmt) {
            let secs = dt.and_utc().timestamp();
            return u64::try_from(secs.div_euclid(3600)).ok();
        }
    }
    // "YYYY-MM-DD HH" with no minutes
    if stripped.len() == 13 {
        let padded = format!("{stripped}:00");
        for fmt in ["%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(&padded, fmt) {
                return u64::try_from(dt.and_utc().timestamp().div_euclid(3600)).ok();
            }
        }
    }
    None
}

enum ScoreField {
    Valid(u64),
    Negative,
    Invalid,
}

fn parse_score(field: &str) -> ScoreField {
    let field = field.trim();
    let value = match field.parse::<i64>() {
        Ok(v) => v,
        Err(_) => match field.parse::<f64>() {
            Ok(f) if f.is_finite() && f.fract() == 0.0 => f as i64,
            _ => return ScoreField::Invalid,
        },
    };
    if value < 0 {
        ScoreField::Negative
    } else {
        ScoreField::Valid(value as u64)
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
            available: headers.iter().collect::<Vec<_>>().join(", "),
        })
}

/// Parses delimited play records. Rows that fail to parse are skipped and
/// tallied; a missing column is fatal.
pub fn parse_dataset<R: Read>(source: R, options: &ParseOptions) -> Result<ParseReport> {
    let mut buffered = BufReader::new(source);
    let delimiter = match options.delimiter {
        Delimiter::Comma => b',',
        Delimiter::Tab => b'\t',
        Delimiter::Auto => {
            let head = buffered.fill_buf()?;
            let first_line = head.split(|&b| b == b'\n').next().unwrap_or(&[]);
            if first_line.contains(&b'\t') {
                b'\t'
            } else {
                b','
            }
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(buffered);
    let headers = reader.headers()?.clone();
    let player_col = column_index(&headers, &options.columns.player)?;
    let time_col = column_index(&headers, &options.columns.time)?;
    let score_col = column_index(&headers, &options.columns.score)?;

    let mut report = ParseReport::default();
    let mut row = csv::StringRecord::new();
    let mut ordinal: u64 = 0;
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.rows_read += 1;
                report.skip("unreadable row");
                ordinal += 1;
                continue;
            }
        }
        let this_ordinal = ordinal;
        ordinal += 1;
        report.rows_read += 1;

        let (Some(player), Some(time), Some(score)) =
            (row.get(player_col), row.get(time_col), row.get(score_col))
        else {
            report.skip("missing field");
            continue;
        };
        let player = player.trim();
        if player.is_empty() {
            report.skip("empty player id");
            continue;
        }
        let Some(time_h) = parse_time_h(time) else {
            report.skip("bad time");
            continue;
        };
        let score = match parse_score(score) {
            ScoreField::Valid(s) => s,
            ScoreField::Negative => {
                report.skip("negative score");
                continue;
            }
            ScoreField::Invalid => {
                report.skip("bad score");
                continue;
            }
        };
        report.records.push(GameRecord {
            player_id: player.to_string(),
            time_h,
            score,
            file_ordinal: this_ordinal,
        });
    }
    Ok(report)
}

pub fn parse_dataset_path(path: &Path, options: &ParseOptions) -> Result<ParseReport> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(file, options)
}

/// Groups records per player. Output is ordered by player id; games inside a
/// history are ordered by `(time_h, file_ordinal)`.
pub fn build_histories(records: Vec<GameRecord>) -> Vec<PlayerHistory> {
    let mut by_player: HashMap<String, Vec<GameRecord>> = HashMap::new();
    for record in records {
        by_player
            .entry(record.player_id.clone())
            .or_default()
            .push(record);
    }
    let mut histories: Vec<PlayerHistory> = by_player
        .into_iter()
        .map(|(player_id, mut games)| {
            games.sort_by_key(|g| (g.time_h, g.file_ordinal));
            PlayerHistory { player_id, games }
        })
        .collect();
    histories.sort_by(|a, b| a.player_id.cmp(&b.player_id));
    histories
}

/// Fraction of players with strictly fewer than `n` games.
pub fn fraction_players_with_fewer_games(histories: &[PlayerHistory], n: usize) -> f64 {
    if histories.is_empty() {
        return 0.0;
    }
    let few = histories.iter().filter(|h| h.games.len() < n).count();
    few as f64 / histories.len() as f64
}

/// Which gap length opens a new session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// gap >= threshold splits
    #[default]
    AtLeast,
    /// gap > threshold splits
    MoreThan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub threshold_h: u64,
    pub rule: SplitRule,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            threshold_h: 2,
            rule: SplitRule::AtLeast,
        }
    }
}

impl SessionConfig {
    fn validate(&self) -> Result<()> {
        if self.threshold_h < 1 {
            return Err(Error::InvalidArgument(
                "session threshold must be at least 1 hour".into(),
            ));
        }
        Ok(())
    }

    fn splits(&self, gap: u64) -> bool {
        match self.rule {
            SplitRule::AtLeast => gap >= self.threshold_h,
            SplitRule::MoreThan => gap > self.threshold_h,
        }
    }
}

pub fn segment_sessions(history: &PlayerHistory, config: &SessionConfig) -> Result<Vec<Session>> {
    config.validate()?;
    let mut sessions = Vec::new();
    let mut current: Vec<GameRecord> = Vec::new();
    for game in &history.games {
        if let Some(last) = current.last() {
            if config.splits(game.time_h - last.time_h) {
                sessions.push(close_session(&history.player_id, sessions.len(), current));
                current = Vec::new();
            }
        }
        current.push(game.clone());
    }
    if !current.is_empty() {
        sessions.push(close_session(&history.player_id, sessions.len(), current));
    }
    Ok(sessions)
}

fn close_session(player_id: &str, index: usize, games: Vec<GameRecord>) -> Session {
    Session {
        player_id: player_id.to_string(),
        session_index: index,
        start_h: games[0].time_h,
        end_h: games[games.len() - 1].time_h,
        games,
    }
}

/// Sessions of every player, plus the number of consecutive-game gaps that
/// fell exactly on the threshold (the boundary the two split rules disagree
/// on).
#[derive(Debug, Clone, Default)]
pub struct Segmentation {
    pub sessions: Vec<Session>,
    pub contested_boundaries: usize,
}

pub fn segment_all(histories: &[PlayerHistory], config: &SessionConfig) -> Result<Segmentation> {
    config.validate()?;
    let per_player: Vec<(Vec<Session>, usize)> = histories
        .par_iter()
        .map(|h| {
            let contested = h
                .games
                .windows(2)
                .filter(|w| w[1].time_h - w[0].time_h == config.threshold_h)
                .count();
            segment_sessions(h, config).map(|s| (s, contested))
        })
        .collect::<Result<_>>()?;
    let mut out = Segmentation::default();
    for (sessions, contested) in per_player {
        out.sessions.extend(sessions);
        out.contested_boundaries += contested;
    }
    Ok(out)
}

/// Population-level structure of a segmented dataset. Histogram keys are
/// the measured quantity, values are counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_players: usize,
    pub n_games: usize,
    pub n_sessions: usize,
    pub sessions_per_player: BTreeMap<usize, usize>,
    pub games_per_session: BTreeMap<usize, usize>,
    pub session_duration_h: BTreeMap<u64, usize>,
    pub inter_session_gap_h: BTreeMap<u64, usize>,
}

impl DatasetSummary {
    pub fn fraction_single_session(&self) -> f64 {
        if self.n_players == 0 {
            return 0.0;
        }
        *self.sessions_per_player.get(&1).unwrap_or(&0) as f64 / self.n_players as f64
    }

    /// Number of sessions with strictly more than `n` games.
    pub fn sessions_with_more_games_than(&self, n: usize) -> usize {
        self.games_per_session
            .range(n + 1..)
            .map(|(_, count)| count)
            .sum()
    }
}

/// Groups sessions per player (ordered by player id, then session index).
pub fn sessions_by_player(sessions: &[Session]) -> BTreeMap<&str, Vec<&Session>> {
    let mut grouped: BTreeMap<&str, Vec<&Session>> = BTreeMap::new();
    for s in sessions {
        grouped.entry(s.player_id.as_str()).or_default().push(s);
    }
    for list in grouped.values_mut() {
        list.sort_by_key(|s| s.session_index);
    }
    grouped
}

pub fn summarize(sessions: &[Session]) -> DatasetSummary {
    let mut summary = DatasetSummary::default();
    let grouped = sessions_by_player(sessions);
    summary.n_players = grouped.len();
    summary.n_sessions = sessions.len();
    for list in grouped.values() {
        *summary.sessions_per_player.entry(list.len()).or_default() += 1;
        for pair in list.windows(2) {
            let gap = pair[1].start_h - pair[0].end_h;
            *summary.inter_session_gap_h.entry(gap).or_default() += 1;
        }
    }
    for s in sessions {
        summary.n_games += s.games.len();
        *summary.games_per_session.entry(s.games.len()).or_default() += 1;
        *summary.session_duration_h.entry(s.duration_h()).or_default() += 1;
    }
    summary
}

/// Writes a `value,count` histogram.
pub fn write_histogram_csv<W: Write, K: ToString>(
    writer: W,
    value_header: &str,
    histogram: &BTreeMap<K, usize>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([value_header, "count"])?;
    for (k, v) in histogram {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Canonical record file: `player_id,time_h,score,file_ordinal`.
pub fn write_records_csv<W: Write>(writer: W, records: &[GameRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<GameRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One row per session: `player_id,session_index,start_h,end_h,n_games`.
pub fn write_sessions_csv<W: Write>(writer: W, sessions: &[Session]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["player_id", "session_index", "start_h", "end_h", "n_games"])?;
    for s in sessions {
        w.write_record([
            s.player_id.clone(),
            s.session_index.to_string(),
            s.start_h.to_string(),
            s.end_h.to_string(),
            s.games.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionGameRow {
    player_id: String,
    session_index: usize,
    game_index: usize,
    time_h: u64,
    score: u64,
    file_ordinal: u64,
}

/// One row per game with its session coordinates; `game_index` is 1-based.
pub fn write_session_games_csv<W: Write>(writer: W, sessions: &[Session]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in sessions {
        for (i, g) in s.games.iter().enumerate() {
            w.serialize(SessionGameRow {
                player_id: s.player_id.clone(),
                session_index: s.session_index,
                game_index: i + 1,
                time_h: g.time_h,
                score: g.score,
                file_ordinal: g.file_ordinal,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_session_games_csv<R: Read>(reader: R) -> Result<Vec<Session>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut sessions: Vec<Session> = Vec::new();
    for row in r.deserialize::<SessionGameRow>() {
        let row = row?;
        let game = GameRecord {
            player_id: row.player_id.clone(),
            time_h: row.time_h,
            score: row.score,
            file_ordinal: row.file_ordinal,
        };
        match sessions.last_mut() {
            Some(s) if s.player_id == row.player_id && s.session_index == row.session_index => {
                s.end_h = row.time_h;
                s.games.push(game);
            }
            _ => sessions.push(Session {
                player_id: row.player_id,
                session_index: row.session_index,
                start_h: row.time_h,
                end_h: row.time_h,
                games: vec![game],
            }),
        }
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(player: &str, time_h: u64, score: u64, ord: u64) -> GameRecord {
        GameRecord {
            player_id: player.into(),
            time_h,
            score,
            file_ordinal: ord,
        }
    }

    fn history(times: &[u64]) -> PlayerHistory {
        PlayerHistory {
            player_id: "p".into(),
            games: times
                .iter()
                .enumerate()
                .map(|(i, &t)| rec("p", t, 100, i as u64))
                .collect(),
        }
    }

    #[test]
    fn parses_three_rows() {
        let data = "player_id,time_h,score\na,0,10\nb,1,20\nc,2,30\n";
        let report = parse_dataset(data.as_bytes(), &ParseOptions::default()).unwrap();
        assert_eq!(report.records.len(), 3);
        let ords: Vec<u64> = report.records.iter().map(|r| r.file_ordinal).collect();
        assert_eq!(ords, vec![0, 1, 2]);
        assert_eq!(report.skipped, 0);
    }

    #[test]
    fn negative_score_is_skipped() {
        let data = "player_id,time_h,score\na,0,10\nb,1,-5\n";
        let report = parse_dataset(data.as_bytes(), &ParseOptions::default()).unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.skipped, 1);
        assert_eq!(report.skip_reasons["negative score"], 1);
    }

    #[test]
    fn missing_column_is_fatal() {
        let data = "who,when,points\na,0,10\n";
        let err = parse_dataset(data.as_bytes(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { .. }));
    }

    #[test]
    fn tab_delimited_with_datetimes_and_custom_columns() {
        let data = "machine\twhen\tpoints\nm1\t1970-01-01 02:59:59\t7\nm1\t1970-01-02T00:10:00\t8\n";
        let options = ParseOptions {
            columns: ColumnMap {
                player: "machine".into(),
                time: "when".into(),
                score: "points".into(),
            },
            delimiter: Delimiter::Auto,
        };
        let report = parse_dataset(data.as_bytes(), &options).unwrap();
        let times: Vec<u64> = report.records.iter().map(|r| r.time_h).collect();
        assert_eq!(times, vec![2, 24]);
    }

    #[test]
    fn histories_sort_by_time_then_ordinal() {
        let records = vec![rec("p", 5, 1, 0), rec("p", 3, 2, 1), rec("p", 3, 3, 2)];
        let h = build_histories(records);
        let order: Vec<(u64, u64)> = h[0].games.iter().map(|g| (g.time_h, g.file_ordinal)).collect();
        assert_eq!(order, vec![(3, 1), (3, 2), (5, 0)]);
    }

    #[test]
    fn interleaved_players_are_separated() {
        let records = vec![rec("a", 0, 1, 0), rec("b", 0, 1, 1), rec("a", 1, 1, 2)];
        let h = build_histories(records);
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].games.len() + h[1].games.len(), 3);
    }

    #[test]
    fn segmentation_examples() {
        let cfg = SessionConfig::default();
        let s = segment_sessions(&history(&[0, 1, 2]), &cfg).unwrap();
        assert_eq!(s.len(), 1);
        let s = segment_sessions(&history(&[0, 1, 4]), &cfg).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].games.len(), 2);
        assert_eq!(s[1].start_h, 4);
        assert!(segment_sessions(&history(&[]), &cfg).unwrap().is_empty());
    }

    #[test]
    fn split_rule_controls_exact_threshold_gap() {
        let h = history(&[0, 2]);
        let at_least = SessionConfig::default();
        let more_than = SessionConfig {
            rule: SplitRule::MoreThan,
            ..at_least
        };
        assert_eq!(segment_sessions(&h, &at_least).unwrap().len(), 2);
        assert_eq!(segment_sessions(&h, &more_than).unwrap().len(), 1);
        let seg = segment_all(&[h], &at_least).unwrap();
        assert_eq!(seg.contested_boundaries, 1);
    }

    #[test]
    fn zero_threshold_rejected() {
        let cfg = SessionConfig {
            threshold_h: 0,
            rule: SplitRule::AtLeast,
        };
        assert!(segment_sessions(&history(&[0]), &cfg).is_err());
    }

    #[test]
    fn summary_of_single_session() {
        let sessions = segment_sessions(&history(&[0, 1]), &SessionConfig::default()).unwrap();
        let summary = summarize(&sessions);
        assert_eq!(summary.sessions_per_player, BTreeMap::from([(1, 1)]));
        assert_eq!(summary.n_games, 2);
        assert!(summary.inter_session_gap_h.is_empty());
    }

    #[test]
    fn inter_session_gap_uses_last_and_first_game() {
        let sessions = segment_sessions(&history(&[0, 1, 30, 31]), &SessionConfig::default()).unwrap();
        let summary = summarize(&sessions);
        assert_eq!(summary.inter_session_gap_h, BTreeMap::from([(29, 1)]));
        assert_eq!(summary.session_duration_h, BTreeMap::from([(1, 2)]));
    }

    #[test]
    fn session_games_csv_round_trip() {
        let sessions = segment_sessions(&history(&[0, 1, 5, 9, 9]), &SessionConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_session_games_csv(&mut buf, &sessions).unwrap();
        let back = read_session_games_csv(buf.as_slice()).unwrap();
        assert_eq!(back, sessions);
    }
}
