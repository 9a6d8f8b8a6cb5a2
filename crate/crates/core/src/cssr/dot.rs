use std::collections::BTreeMap;
use std::fmt::Write;

use super::machine::{EpsilonMachine, UnifilarMachine, UnifilarState};
use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Graphviz rendering of a unifilar machine. Every node lists its emission
/// distribution; edges below `min_edge_prob` are left out. Exact values are
/// kept in the `emission` and `prob` attributes so [`parse_dot`] can read
/// the graph back.
pub fn graph_to_dot(graph: &UnifilarMachine, min_edge_prob: f64) -> String {
    let a = &graph.alphabet;
    let mut out = String::new();
    writeln!(out, "digraph machine {{").unwrap();
    writeln!(out, "  graph [alphabet=\"{a}\", rankdir=LR];").unwrap();
    writeln!(out, "  node [shape=circle];").unwrap();
    for (i, s) in graph.states.iter().enumerate() {
        let mut label = format!("s{i}");
        for (sym, &p) in s.emission.iter().enumerate() {
            write!(label, "\\n{}: {:.3}", a.char_of(sym as u8), p).unwrap();
        }
        writeln!(out, "  s{i} [label=\"{label}\", emission=\"{}\"];", fmt_list(&s.emission)).unwrap();
    }
    for (i, s) in graph.states.iter().enumerate() {
        for (sym, (&p, &next)) in s.emission.iter().zip(&s.next).enumerate() {
            let Some(j) = next else { continue };
            if p <= 0.0 || p < min_edge_prob {
                continue;
            }
            let c = a.char_of(sym as u8);
            writeln!(
                out,
                "  s{i} -> s{j} [label=\"{c} : {p:.2}\", symbol=\"{c}\", prob=\"{p}\", penwidth=\"{:.3}\"];",
                1.0 + 4.0 * p
            )
            .unwrap();
        }
    }
    writeln!(out, "}}").unwrap();
    out
}

/// Recurrent part of a fitted machine as DOT.
pub fn export_dot(machine: &EpsilonMachine, min_edge_prob: f64) -> String {
    graph_to_dot(&machine.recurrent_graph(), min_edge_prob)
}

/// Reads `key="value"` pairs from the inside of a `[...]` list.
fn parse_attrs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut chars = text.chars().peekable();
    loop {
        while matches!(chars.peek(), Some(c) if c.is_whitespace() || *c == ',') {
            chars.next();
        }
        let Some(_) = chars.peek() else { break };
        let key: String = std::iter::from_fn(|| chars.next_if(|c| c.is_alphanumeric() || *c == '_')).collect();
        if key.is_empty() || chars.next() != Some('=') {
            return Err(Error::Parse(format!("malformed attribute list `{text}`")));
        }
        let value = if chars.peek() == Some(&'"') {
            chars.next();
            let mut v = String::new();
            loop {
                match chars.next() {
                    Some('\\') => {
                        v.push('\\');
                        v.extend(chars.next());
                    }
                    Some('"') => break,
                    Some(c) => v.push(c),
                    None => return Err(Error::Parse(format!("unterminated string in `{text}`"))),
                }
            }
            v
        } else {
            std::iter::from_fn(|| chars.next_if(|c| !c.is_whitespace() && *c != ',')).collect()
        };
        out.insert(key, value);
    }
    Ok(out)
}

fn node_index(token: &str) -> Result<usize> {
    token
        .strip_prefix('s')
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::Parse(format!("unexpected node name `{token}`")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

/// Inverse of [`graph_to_dot`]. Edges that were filtered out come back as
/// missing transitions.
pub fn parse_dot(text: &str) -> Result<UnifilarMachine> {
    let mut alphabet = None;
    let mut emissions: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut edges = Vec::new();
    for raw in text.lines() {
        let line = raw.trim().trim_end_matches(';');
        let Some((head, rest)) = line.split_once('[') else { continue };
        let attrs = parse_attrs(rest.trim_end().trim_end_matches(']'))?;
        let head = head.trim();
        if head == "graph" {
            if let Some(a) = attrs.get("alphabet") {
                alphabet = Some(Alphabet::new(a)?);
            }
        } else if let Some((from, to)) = head.split_once("->") {
            let symbol = attrs
                .get("symbol")
                .and_then(|s| s.chars().next())
                .ok_or_else(|| Error::Parse(format!("edge without symbol: `{line}`")))?;
            edges.push((node_index(from.trim())?, node_index(to.trim())?, symbol));
        } else if head != "node" && head != "edge" {
            let e = attrs
                .get("emission")
                .ok_or_else(|| Error::Parse(format!("node without emission: `{line}`")))?;
            let probs = e.split_whitespace().map(parse_f64).collect::<Result<Vec<_>>>()?;
            emissions.insert(node_index(head)?, probs);
        }
    }
    let alphabet = alphabet.ok_or_else(|| Error::Parse("missing graph alphabet".into()))?;
    let n = emissions.len();
    if emissions.keys().copied().ne(0..n) {
        return Err(Error::Parse("node ids are not contiguous from s0".into()));
    }
    let mut states: Vec<UnifilarState> = emissions
        .into_values()
        .map(|emission| {
            if emission.len() != alphabet.len() {
                return Err(Error::Parse("emission length does not match the alphabet".into()));
            }
            Ok(UnifilarState {
                next: vec![None; emission.len()],
                emission,
            })
        })
        .collect::<Result<_>>()?;
    for (from, to, symbol) in edges {
        let b = alphabet
            .index_of(symbol)
            .ok_or_else(|| Error::Parse(format!("edge symbol {symbol:?} not in alphabet")))?;
        if from >= n || to >= n {
            return Err(Error::Parse(format!("edge s{from} -> s{to} names a missing node")));
        }
        let slot = &mut states[from].next[b as usize];
        if slot.is_some() {
            return Err(Error::Parse(format!("state s{from} has two edges on {symbol:?}")));
        }
        *slot = Some(to);
    }
    Ok(UnifilarMachine { alphabet, states })
}
