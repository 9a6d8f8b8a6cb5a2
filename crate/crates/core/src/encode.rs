//! Turning sessions of scores into strings over the four-letter alphabet
//! P (poor), G (good), V (very good), Q (quit).
//!
//! Each game after the first in a session gets one symbol from its score
//! delta: `P` if delta < 0, `G` if 0 <= delta < theta, `V` if delta >= theta.
//! Every session ends with `Q`. The delta is measured against the previous
//! game, or against the median or mean of the scores so far.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::ingest::{sessions_by_player, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    #[serde(rename = "P")]
    Poor = 0,
    #[serde(rename = "G")]
    Good = 1,
    #[serde(rename = "V")]
    VeryGood = 2,
    #[serde(rename = "Q")]
    Quit = 3,
}

impl Symbol {
    pub const ALL: [Symbol; 4] = [Symbol::Poor, Symbol::Good, Symbol::VeryGood, Symbol::Quit];

    pub fn as_char(self) -> char {
        match self {
            Symbol::Poor => 'P',
            Symbol::Good => 'G',
            Symbol::VeryGood => 'V',
            Symbol::Quit => 'Q',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        Symbol::ALL.into_iter().find(|s| s.as_char() == c)
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Symbol::ALL.get(i as usize).copied()
    }

    pub fn alphabet() -> Alphabet {
        Alphabet::new("PGVQ").expect("valid")
    }

    /// Performance class of a score delta.
    pub fn classify(delta: f64, theta: u64) -> Symbol {
        if delta < 0.0 {
            Symbol::Poor
        } else if delta < theta as f64 {
            Symbol::Good
        } else {
            Symbol::VeryGood
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DeltaPrev,
    DeltaMedian,
    DeltaMean,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::DeltaPrev, Scheme::DeltaMedian, Scheme::DeltaMean];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::DeltaPrev => "delta_prev",
            Scheme::DeltaMedian => "delta_median",
            Scheme::DeltaMean => "delta_mean",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta_prev" => Ok(Scheme::DeltaPrev),
            "delta_median" => Ok(Scheme::DeltaMedian),
            "delta_mean" => Ok(Scheme::DeltaMean),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Which earlier scores the running mean/median reference covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceScope {
    /// Scores earlier in the same session.
    #[default]
    Session,
    /// Every earlier score of the player, across sessions.
    Lifetime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphabetSpec {
    pub scheme: Scheme,
    pub theta: u64,
    #[serde(default)]
    pub scope: ReferenceScope,
}

impl AlphabetSpec {
    pub fn new(scheme: Scheme, theta: u64) -> Self {
        Self {
            scheme,
            theta,
            scope: ReferenceScope::Session,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta == 0 {
            return Err(Error::InvalidArgument("theta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSession {
    pub player_id: String,
    pub session_index: usize,
    pub start_h: u64,
    /// One symbol per game after the first, then `Q`.
    pub symbols: Vec<Symbol>,
    /// The delta behind each non-`Q` symbol.
    pub deltas: Vec<f64>,
}

/// Scores seen so far, kept sorted for medians.
#[derive(Default)]
struct Reference {
    sorted: Vec<u64>,
    sum: f64,
    last: Option<u64>,
}

impl Reference {
    fn push(&mut self, score: u64) {
        let at = self.sorted.partition_point(|&s| s < score);
        self.sorted.insert(at, score);
        self.sum += score as f64;
        self.last = Some(score);
    }

    fn value(&self, scheme: Scheme) -> f64 {
        let n = self.sorted.len();
        match scheme {
            Scheme::DeltaPrev => self.last.expect("non-empty") as f64,
            Scheme::DeltaMean => self.sum / n as f64,
            Scheme::DeltaMedian => {
                if n % 2 == 1 {
                    self.sorted[n / 2] as f64
                } else {
                    (self.sorted[n / 2 - 1] as f64 + self.sorted[n / 2] as f64) / 2.0
                }
            }
        }
    }
}

fn encode_with_reference(session: &Session, spec: &AlphabetSpec, reference: &mut Reference) -> EncodedSession {
    let mut symbols = Vec::with_capacity(session.games.len());
    let mut deltas = Vec::with_capacity(session.games.len().saturating_sub(1));
    for (i, g) in session.games.iter().enumerate() {
        // the first game of a session has no predecessor and emits nothing
        if i > 0 {
            let delta = g.score as f64 - reference.value(spec.scheme);
            deltas.push(delta);
            symbols.push(Symbol::classify(delta, spec.theta));
        }
        reference.push(g.score);
    }
    symbols.push(Symbol::Quit);
    EncodedSession {
        player_id: session.player_id.clone(),
        session_index: session.session_index,
        start_h: session.start_h,
        symbols,
        deltas,
    }
}

/// Encodes one session with a per-session reference.
pub fn encode_session(session: &Session, spec: &AlphabetSpec) -> Result<EncodedSession> {
    spec.validate()?;
    let mut reference = Reference::default();
    Ok(encode_with_reference(session, spec, &mut reference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerCorpus {
    pub player_id: String,
    pub sessions: Vec<EncodedSession>,
}

impl PlayerCorpus {
    /// The player's sessions concatenated in order; `Q` separates them.
    pub fn stream(&self) -> Vec<u8> {
        self.sessions
            .iter()
            .flat_map(|s| s.symbols.iter().map(|x| x.index()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub spec: AlphabetSpec,
    pub players: Vec<PlayerCorpus>,
}

impl Corpus {
    pub fn streams(&self) -> Vec<Vec<u8>> {
        self.players.iter().map(PlayerCorpus::stream).collect()
    }

    pub fn n_sessions(&self) -> usize {
        self.players.iter().map(|p| p.sessions.len()).sum()
    }

    pub fn sessions(&self) -> impl Iterator<Item = &EncodedSession> {
        self.players.iter().flat_map(|p| p.sessions.iter())
    }

    /// Symbol counts indexed by `Symbol::index`.
    pub fn frequencies(&self) -> [u64; 4] {
        let mut f = [0u64; 4];
        for s in self.sessions() {
            for sym in &s.symbols {
                f[sym.index() as usize] += 1;
            }
        }
        f
    }

    /// Rebuilds a corpus from a flat list of sessions, grouping by player in
    /// first-seen order and ordering each player's sessions by index.
    pub fn from_sessions(spec: AlphabetSpec, sessions: Vec<EncodedSession>) -> Self {
        let mut order: Vec<String> = Vec::new();
        let mut grouped: BTreeMap<String, Vec<EncodedSession>> = BTreeMap::new();
        for s in sessions {
            if !grouped.contains_key(&s.player_id) {
                order.push(s.player_id.clone());
            }
            grouped.entry(s.player_id.clone()).or_default().push(s);
        }
        let players = order
            .into_iter()
            .map(|id| {
                let mut sessions = grouped.remove(&id).unwrap_or_default();
                sessions.sort_by_key(|s| s.session_index);
                PlayerCorpus {
                    player_id: id,
                    sessions,
                }
            })
            .collect();
        Corpus { spec, players }
    }
}

/// Encodes all sessions, grouped per player in player-id order.
pub fn encode_corpus(sessions: &[Session], spec: &AlphabetSpec) -> Result<Corpus> {
    spec.validate()?;
    let players = sessions_by_player(sessions)
        .into_iter()
        .map(|(player_id, list)| {
            let mut lifetime = Reference::default();
            let encoded = list
                .into_iter()
                .map(|s| match spec.scope {
                    ReferenceScope::Session => {
                        encode_with_reference(s, spec, &mut Reference::default())
                    }
                    ReferenceScope::Lifetime => encode_with_reference(s, spec, &mut lifetime),
                })
                .collect();
            PlayerCorpus {
                player_id: player_id.to_string(),
                sessions: encoded,
            }
        })
        .collect();
    Ok(Corpus {
        spec: *spec,
        players,
    })
}

/// Candidate theta values: dense at small values, coarser above. Points
/// past 30K are added in 25% steps up to `upper`.
pub fn theta_grid(upper: Option<u64>) -> Vec<u64> {
    let mut grid = vec![
        100, 200, 300, 500, 750, 1_000, 1_500, 2_000, 3_000, 4_000, 5_000, 6_000, 8_000, 10_000,
        12_000, 14_000, 16_000, 18_000, 20_000, 22_000, 25_000, 30_000,
    ];
    if let Some(upper) = upper {
        let mut next = 30_000u64;
        loop {
            next = (next * 5 / 4).div_ceil(1_000) * 1_000;
            if next > upper {
                break;
            }
            grid.push(next);
        }
    }
    grid
}

/// Text format: one `player_id<TAB>symbols` line per player.
pub fn write_streams<W: Write>(mut writer: W, corpus: &Corpus) -> Result<()> {
    for p in &corpus.players {
        if p.player_id.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "player id {:?} cannot be written in the stream format",
                p.player_id
            )));
        }
        let symbols: String = p
            .sessions
            .iter()
            .flat_map(|s| s.symbols.iter().map(|x| x.as_char()))
            .collect();
        writeln!(writer, "{}\t{}", p.player_id, symbols)?;
    }
    Ok(())
}

pub fn read_streams<R: BufRead>(reader: R) -> Result<Vec<(String, Vec<Symbol>)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let (player, symbols) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("line {}: missing tab", n + 1)))?;
        let symbols = symbols
            .chars()
            .map(|c| {
                Symbol::from_char(c)
                    .ok_or_else(|| Error::Parse(format!("line {}: unknown symbol {c:?}", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((player.to_string(), symbols));
    }
    Ok(out)
}

/// Stream lines read back from [`write_streams`] output, re-serialized.
pub fn write_stream_lines<W: Write>(mut writer: W, streams: &[(String, Vec<Symbol>)]) -> Result<()> {
    for (player, symbols) in streams {
        let s: String = symbols.iter().map(|x| x.as_char()).collect();
        writeln!(writer, "{player}\t{s}")?;
    }
    Ok(())
}

/// Sidecar metadata written next to a stream file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSidecar {
    pub format_version: u32,
    pub alphabet: Alphabet,
    pub spec: AlphabetSpec,
    pub n_players: usize,
    pub n_sessions: usize,
}

impl StreamSidecar {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn for_corpus(corpus: &Corpus) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            alphabet: Symbol::alphabet(),
            spec: corpus.spec,
            n_players: corpus.players.len(),
            n_sessions: corpus.n_sessions(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionRow {
    player_id: String,
    session_index: usize,
    start_h: u64,
    symbols: String,
    deltas: String,
}

/// Session-level corpus file with start times and deltas, used to rebuild
/// train/test splits.
pub fn write_corpus_csv<W: Write>(writer: W, corpus: &Corpus) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in corpus.sessions() {
        w.serialize(SessionRow {
            player_id: s.player_id.clone(),
            session_index: s.session_index,
            start_h: s.start_h,
            symbols: s.symbols.iter().map(|x| x.as_char()).collect(),
            deltas: s
                .deltas
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus_csv<R: std::io::Read>(reader: R, spec: AlphabetSpec) -> Result<Corpus> {
    let mut r = csv::Reader::from_reader(reader);
    let mut sessions = Vec::new();
    for row in r.deserialize::<SessionRow>() {
        let row = row?;
        let symbols = row
            .symbols
            .chars()
            .map(|c| Symbol::from_char(c).ok_or_else(|| Error::Parse(format!("unknown symbol {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let deltas = if row.deltas.is_empty() {
            Vec::new()
        } else {
            row.deltas
                .split(';')
                .map(|d| d.parse::<f64>().map_err(|e| Error::Parse(format!("delta {d:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?
        };
        sessions.push(EncodedSession {
            player_id: row.player_id,
            session_index: row.session_index,
            start_h: row.start_h,
            symbols,
            deltas,
        });
    }
    Ok(Corpus::from_sessions(spec, sessions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::GameRecord;

    fn session(player: &str, index: usize, scores: &[u64]) -> Session {
        let games: Vec<GameRecord> = scores
            .iter()
            .enumerate()
            .map(|(i, &score)| GameRecord {
                player_id: player.into(),
                time_h: (index * 50) as u64,
                score,
                file_ordinal: (index * 50 + i) as u64,
            })
            .collect();
        Session {
            player_id: player.into(),
            session_index: index,
            start_h: (index * 50) as u64,
            end_h: (index * 50) as u64,
            games,
        }
    }

    fn letters(e: &EncodedSession) -> String {
        e.symbols.iter().map(|s| s.as_char()).collect()
    }

    #[test]
    fn delta_prev_example() {
        let spec = AlphabetSpec::new(Scheme::DeltaPrev, 8000);
        let e = encode_session(&session("a", 0, &[1000, 900, 9500]), &spec).unwrap();
        assert_eq!(e.deltas, vec![-100.0, 8600.0]);
        assert_eq!(letters(&e), "PVQ");
    }

    #[test]
    fn zero_delta_is_good_and_theta_is_very_good() {
        let spec = AlphabetSpec::new(Scheme::DeltaPrev, 77);
        assert_eq!(letters(&encode_session(&session("a", 0, &[500, 500]), &spec).unwrap()), "GQ");
        assert_eq!(letters(&encode_session(&session("a", 0, &[0, 77]), &spec).unwrap()), "VQ");
        assert_eq!(letters(&encode_session(&session("a", 0, &[0]), &spec).unwrap()), "Q");
    }

    #[test]
    fn delta_mean_uses_running_mean() {
        // references: mean(100) = 100 -> +100 -> V; mean(100, 200) = 150 -> -100 -> P
        let spec = AlphabetSpec::new(Scheme::DeltaMean, 100);
        let e = encode_session(&session("a", 0, &[100, 200, 50]), &spec).unwrap();
        assert_eq!(e.deltas, vec![100.0, -100.0]);
        assert_eq!(letters(&e), "VPQ");
    }

    #[test]
    fn delta_median_uses_running_median() {
        // references: median(10) = 10, median(10, 30) = 20, median(10, 30, 15) = 15
        let spec = AlphabetSpec::new(Scheme::DeltaMedian, 10);
        let e = encode_session(&session("a", 0, &[10, 30, 15, 14]), &spec).unwrap();
        assert_eq!(e.deltas, vec![20.0, -5.0, -1.0]);
        assert_eq!(letters(&e), "VPPQ");
    }

    #[test]
    fn lifetime_scope_carries_reference_across_sessions() {
        let mut spec = AlphabetSpec::new(Scheme::DeltaMean, 1000);
        spec.scope = ReferenceScope::Lifetime;
        let sessions = vec![session("a", 0, &[100, 300]), session("a", 1, &[0, 50])];
        let c = encode_corpus(&sessions, &spec).unwrap();
        // second session, second game: mean(100, 300, 0) = 133.3
        let d = c.players[0].sessions[1].deltas[0];
        assert!((d - (50.0 - 400.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_theta_rejected() {
        let spec = AlphabetSpec::new(Scheme::DeltaPrev, 0);
        assert!(encode_session(&session("a", 0, &[1, 2]), &spec).is_err());
    }

    #[test]
    fn corpus_streams_and_frequencies() {
        let spec = AlphabetSpec::new(Scheme::DeltaPrev, 10);
        let c = encode_corpus(&[session("a", 0, &[1, 2]), session("a", 1, &[5, 1])], &spec).unwrap();
        let stream = c.players[0].stream();
        assert_eq!(stream.len(), 4);
        assert_eq!(stream[1], Symbol::Quit.index());
        assert_eq!(stream[3], Symbol::Quit.index());
        assert_eq!(c.frequencies().iter().sum::<u64>(), 4);
    }

    #[test]
    fn stream_text_round_trip_is_bit_exact() {
        let spec = AlphabetSpec::new(Scheme::DeltaPrev, 10);
        let c = encode_corpus(
            &[session("a", 0, &[1, 2, 50]), session("b", 0, &[5, 1]), session("b", 1, &[3])],
            &spec,
        )
        .unwrap();
        let mut text = Vec::new();
        write_streams(&mut text, &c).unwrap();
        assert_eq!(String::from_utf8(text.clone()).unwrap(), "a\tGVQ\nb\tPQQ\n");
        let parsed = read_streams(text.as_slice()).unwrap();
        let mut again = Vec::new();
        write_stream_lines(&mut again, &parsed).unwrap();
        assert_eq!(again, text);
    }

    #[test]
    fn corpus_csv_round_trip() {
        let spec = AlphabetSpec::new(Scheme::DeltaMean, 10);
        let c = encode_corpus(&[session("a", 0, &[1, 2, 50]), session("b", 0, &[5])], &spec).unwrap();
        let mut buf = Vec::new();
        write_corpus_csv(&mut buf, &c).unwrap();
        let back = read_corpus_csv(buf.as_slice(), spec).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn theta_grid_contains_reference_cutoffs() {
        let g = theta_grid(None);
        for t in [300, 8_000, 16_000, 22_000] {
            assert!(g.contains(&t));
        }
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g[0] <= 100 && *g.last().unwrap() >= 30_000);
        assert!(g.len() >= 12);
        let extended = theta_grid(Some(60_000));
        assert!(extended.len() > g.len() && *extended.last().unwrap() <= 60_000);
    }
}
