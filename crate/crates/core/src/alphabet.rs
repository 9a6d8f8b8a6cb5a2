use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An ordered set of printable symbols. Streams are stored as indices into
/// the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let chars: Vec<char> = symbols.chars().collect();
        if chars.is_empty() || chars.len() > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "alphabet must have 1..=255 symbols, got {}",
                chars.len()
            )));
        }
        for (i, c) in chars.iter().enumerate() {
            if c.is_whitespace() || c.is_control() || matches!(c, '"' | '\\') {
                return Err(Error::InvalidArgument(format!("unusable alphabet symbol {c:?}")));
            }
            if chars[..i].contains(c) {
                return Err(Error::InvalidArgument(format!("duplicate alphabet symbol {c:?}")));
            }
        }
        Ok(Self { symbols: chars })
    }

    pub fn binary() -> Self {
        Self::new("01").expect("valid")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn char_of(&self, index: u8) -> char {
        self.symbols[index as usize]
    }

    pub fn index_of(&self, c: char) -> Option<u8> {
        self.symbols.iter().position(|&s| s == c).map(|i| i as u8)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u8>> {
        text.chars()
            .map(|c| {
                self.index_of(c).ok_or_else(|| {
                    Error::AlphabetMismatch(format!("symbol {c:?} not in alphabet {self}"))
                })
            })
            .collect()
    }

    pub fn decode(&self, indices: &[u8]) -> String {
        indices.iter().map(|&i| self.char_of(i)).collect()
    }

    pub fn check(&self, stream: &[u8]) -> Result<()> {
        match stream.iter().find(|&&s| s as usize >= self.len()) {
            Some(bad) => Err(Error::AlphabetMismatch(format!(
                "symbol index {bad} outside alphabet {self}"
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.symbols {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl Serialize for Alphabet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Alphabet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Alphabet::new(&s).map_err(serde::de::Error::custom)
    }
}
