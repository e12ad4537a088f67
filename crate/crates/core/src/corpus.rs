//! Corpus layer: code lexing, vocabularies, JSONL ingestion and splits.
//!
//! Tokens are word-level lexical tokens (no subword units): identifiers,
//! keywords, numeric literals, string literals as single atomic tokens,
//! and operators/delimiters. Comments are stripped and whitespace carries
//! no tokens.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

pub const RESERVED_TOKENS: [&str; 5] = ["<pad>", "<unk>", "<bos>", "<eos>", "<mask>"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unterminated string literal starting at byte {offset}")]
    UnterminatedString { offset: usize },
    #[error("line {line}: not valid JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing or non-string \"code\" field")]
    Schema { line: usize },
    #[error("id {id} is not assigned in a vocabulary of size {size}")]
    UnassignedId { id: u32, size: usize },
    #[error("vocabulary max_size must exceed {reserved} reserved ids, got {got}")]
    VocabTooSmall { reserved: usize, got: usize },
    #[error("split ratios must be nonnegative and sum to 1, got {ratios:?}")]
    BadRatios { ratios: [f64; 3] },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// Multi-character operators, longest first so maximal munch works by
// scanning the table in order.
const OPERATORS_3: [&str; 5] = ["**=", "//=", ">>=", "<<=", "..."];
const OPERATORS_2: [&str; 19] = [
    "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "->", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", ":=", "@=",
];

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Lexes source text into word-level tokens. Deterministic and total on
/// code snippets; the only error is an unterminated string literal.
pub fn tokenize_code(source: &str) -> Result<Vec<String>, CorpusError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = source[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == '"' || c == '\'' {
            let start = i;
            let quote = bytes[i];
            i += 1;
            let mut closed = false;
            while i < bytes.len() {
                if bytes[i] == b'\\' && i + 1 < bytes.len() {
                    i += 2;
                    continue;
                }
                if bytes[i] == quote {
                    i += 1;
                    closed = true;
                    break;
                }
                i += 1;
            }
            if !closed {
                return Err(CorpusError::UnterminatedString { offset: start });
            }
            tokens.push(source[start..i].to_string());
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len()
                && (bytes[i] == b'e' || bytes[i] == b'E')
                && (i + 1 < bytes.len()
                    && (bytes[i + 1].is_ascii_digit()
                        || ((bytes[i + 1] == b'+' || bytes[i + 1] == b'-')
                            && i + 2 < bytes.len()
                            && bytes[i + 2].is_ascii_digit())))
            {
                i += 2;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            tokens.push(source[start..i].to_string());
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            while i < bytes.len() {
                let ch = source[i..].chars().next().unwrap();
                if is_ident_continue(ch) {
                    i += ch.len_utf8();
                } else {
                    break;
                }
            }
            tokens.push(source[start..i].to_string());
            continue;
        }
        if let Some(op) = OPERATORS_3.iter().find(|op| source[i..].starts_with(**op)) {
            tokens.push(op.to_string());
            i += op.len();
            continue;
        }
        if let Some(op) = OPERATORS_2.iter().find(|op| source[i..].starts_with(**op)) {
            tokens.push(op.to_string());
            i += op.len();
            continue;
        }
        // Single-character operator/delimiter, and the total-function
        // fallback for anything else printable.
        tokens.push(c.to_string());
        i += c.len_utf8();
    }
    Ok(tokens)
}

/// Token↔id bijection with five fixed reserved ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    fn with_reserved() -> Self {
        let mut v = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for t in RESERVED_TOKENS {
            v.push(t.to_string());
        }
        v
    }

    fn push(&mut self, token: String) {
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
    }

    /// Rebuilds a vocabulary from an ordered id→token list (checkpoint
    /// loading path).
    pub fn from_id_list(tokens: Vec<String>) -> Self {
        let mut v = Vocabulary {
            token_to_id: HashMap::with_capacity(tokens.len()),
            id_to_token: Vec::with_capacity(tokens.len()),
        };
        for t in tokens {
            v.push(t);
        }
        v
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id_of(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token_of(&self, id: u32) -> Result<&str, CorpusError> {
        self.id_to_token
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(CorpusError::UnassignedId {
                id,
                size: self.size(),
            })
    }

    /// Ordered id→token listing, the serialization form.
    pub fn id_list(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id_of(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<String>, CorpusError> {
        ids.iter()
            .map(|&id| self.token_of(id).map(|s| s.to_string()))
            .collect()
    }

    /// Ids eligible as random replacement tokens (everything except the
    /// reserved range).
    pub fn non_reserved_range(&self) -> std::ops::Range<u32> {
        RESERVED_TOKENS.len() as u32..self.size() as u32
    }
}

/// Most-frequent tokens admitted up to `max_size`, ties broken
/// lexicographically ascending. Tokens below `min_freq` are dropped.
pub fn build_vocabulary(
    token_lists: &[Vec<String>],
    max_size: usize,
    min_freq: usize,
) -> Result<Vocabulary, CorpusError> {
    if max_size <= RESERVED_TOKENS.len() {
        return Err(CorpusError::VocabTooSmall {
            reserved: RESERVED_TOKENS.len(),
            got: max_size,
        });
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for list in token_lists {
        for t in list {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|(_, n)| *n >= min_freq)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut vocab = Vocabulary::with_reserved();
    for (token, _) in entries.into_iter().take(max_size - RESERVED_TOKENS.len()) {
        vocab.push(token.to_string());
    }
    Ok(vocab)
}

/// A lexed and id-encoded corpus sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedSample {
    pub source: String,
    pub tokens: Vec<String>,
    pub ids: Vec<u32>,
}

impl TokenizedSample {
    pub fn new(source: String, tokens: Vec<String>, vocab: &Vocabulary) -> Self {
        let ids = vocab.encode(&tokens);
        TokenizedSample {
            source,
            tokens,
            ids,
        }
    }
}

#[derive(Deserialize)]
struct CorpusRecord {
    code: Option<serde_json::Value>,
}

/// Loads a JSONL corpus: one object per line, required string field
/// `"code"`, order preserved.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<String>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let record: CorpusRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        match record.code {
            Some(serde_json::Value::String(code)) => out.push(code),
            _ => return Err(CorpusError::Schema { line: line_no }),
        }
    }
    Ok(out)
}

/// Deterministic seeded split into train/valid/test.
#[derive(Debug, Clone)]
pub struct CorpusSplit<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

/// Shuffles by seed, then partitions contiguously by cumulative-rounded
/// ratio counts, so the three parts are disjoint and exhaustive.
pub fn split_corpus<T>(
    samples: Vec<T>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<CorpusSplit<T>, CorpusError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios { ratios });
    }
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let cut1 = (ratios[0] * n as f64).round() as usize;
    let cut2 = ((ratios[0] + ratios[1]) * n as f64).round() as usize;
    let cut1 = cut1.min(n);
    let cut2 = cut2.clamp(cut1, n);

    let mut slots: Vec<Option<T>> = samples.into_iter().map(Some).collect();
    let mut take = |indices: &[usize]| -> Vec<T> {
        indices
            .iter()
            .map(|&i| slots[i].take().expect("index used once"))
            .collect()
    };
    let train = take(&order[..cut1]);
    let valid = take(&order[cut1..cut2]);
    let test = take(&order[cut2..]);
    Ok(CorpusSplit {
        train,
        valid,
        test,
        seed,
        ratios,
    })
}
