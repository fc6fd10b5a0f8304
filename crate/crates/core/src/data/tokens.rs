//! Pre-tokenised binary-labelled sequences.
//!
//! File format: UTF-8, one example per line, `label<TAB>id id id …`, where
//! `label` is 0 or 1 and ids are non-negative integers. Blank lines are
//! skipped. Ids at or above the vocabulary size collapse to the reserved
//! out-of-vocabulary id `vocab_size − 1`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::PAD_ID;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    pub sequences: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
    pub vocab_size: usize,
}

impl TokenSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn oov_id(&self) -> usize {
        self.vocab_size - 1
    }

    /// Pads or truncates every sequence to `maxlen`.
    pub fn fixed_length(mut self, maxlen: usize, side: Truncation) -> Result<Self> {
        for s in &mut self.sequences {
            *s = pad_truncate(s, maxlen, side)?;
        }
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (seq, label) in self.sequences.iter().zip(&self.labels) {
            let _ = write!(out, "{label}\t");
            for (k, id) in seq.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{id}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_tokens(text: &str, vocab_size: usize) -> Result<TokenSet> {
    if vocab_size < 2 {
        return Err(Error::Argument(format!(
            "vocab_size must be ≥ 2 (padding plus OOV), got {vocab_size}"
        )));
    }
    let mut set = TokenSet {
        sequences: Vec::new(),
        labels: Vec::new(),
        vocab_size,
    };
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Line {
            line: line_no,
            message,
        };
        let (label, ids) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `label<TAB>ids`".into()))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| bad(format!("label {label:?} is not an integer")))?;
        if label > 1 {
            return Err(bad(format!("label {label} is not 0 or 1")));
        }
        let seq = ids
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map(|id| id.min(vocab_size - 1))
                    .map_err(|_| bad(format!("token {tok:?} is not a non-negative integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        set.sequences.push(seq);
        set.labels.push(label);
    }
    Ok(set)
}

pub fn load_tokens(path: &Path, vocab_size: usize) -> Result<TokenSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tokens(&text, vocab_size)
}

/// Which end of an overlong sequence survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// Drop tokens from the front, keeping the last `maxlen`.
    #[default]
    KeepLast,
    /// Drop tokens from the back, keeping the first `maxlen`.
    KeepFirst,
}

/// Shorter sequences get padding ids appended; longer ones are cut per `side`.
pub fn pad_truncate(seq: &[usize], maxlen: usize, side: Truncation) -> Result<Vec<usize>> {
    if maxlen == 0 {
        return Err(Error::Argument("maxlen must be ≥ 1".into()));
    }
    Ok(if seq.len() >= maxlen {
        match side {
            Truncation::KeepLast => seq[seq.len() - maxlen..].to_vec(),
            Truncation::KeepFirst => seq[..maxlen].to_vec(),
        }
    } else {
        let mut out = seq.to_vec();
        out.resize(maxlen, PAD_ID);
        out
    })
}
