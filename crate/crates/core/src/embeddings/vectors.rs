//! The plain-text vector file: a `V dim` header, then one line per token with
//! the token text (escaped as in corpus files) and `dim` fixed-point values.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{EmbeddingError, EmbeddingProvider};
use crate::pytokenizer::{escape_token, unescape_token};

/// Precomputed per-token vectors; unknown tokens map to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalVectors {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
}

impl ExternalVectors {
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::InvalidConfig("dim must be at least 1".into()));
        }
        let mut out = ExternalVectors {
            dim,
            tokens: Vec::with_capacity(entries.len()),
            index: HashMap::with_capacity(entries.len()),
            values: Vec::with_capacity(entries.len() * dim),
        };
        for (token, vector) in entries {
            if vector.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    found: vector.len(),
                });
            }
            if out.index.insert(token.clone(), out.tokens.len()).is_some() {
                return Err(EmbeddingError::InvalidConfig(format!("duplicate token {token:?}")));
            }
            out.tokens.push(token);
            out.values.extend(vector);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl EmbeddingProvider for ExternalVectors {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_into(&self, token: &str, out: &mut [f64]) {
        match self.index.get(token) {
            Some(&i) => out.copy_from_slice(&self.values[i * self.dim..(i + 1) * self.dim]),
            None => out.fill(0.0),
        }
    }

    fn known_tokens(&self) -> Vec<String> {
        self.tokens.clone()
    }
}

/// Writes every token the provider knows, in its own order.
pub fn save_vectors<W: Write>(provider: &dyn EmbeddingProvider, mut out: W) -> Result<(), EmbeddingError> {
    let tokens = provider.known_tokens();
    let dim = provider.dim();
    writeln!(out, "{} {}", tokens.len(), dim)?;
    let mut vector = vec![0.0; dim];
    let mut line = String::new();
    for token in &tokens {
        provider.embed_into(token, &mut vector);
        line.clear();
        line.push_str(&escape_token(token));
        for v in &vector {
            // Avoid "-0.000000" so equal files do not depend on sign of zero.
            let v = if v.abs() < 5e-7 { 0.0 } else { *v };
            line.push_str(&format!(" {v:.6}"));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_vectors<R: BufRead>(input: R) -> Result<ExternalVectors, EmbeddingError> {
    let bad = |line: usize, message: String| EmbeddingError::VectorFile { line, message };
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(bad(1, "missing header".into())),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [v, d] => match (v.parse::<usize>(), d.parse::<usize>()) {
            (Ok(v), Ok(d)) if d > 0 => (v, d),
            _ => return Err(bad(1, format!("bad header {header:?}"))),
        },
        _ => return Err(bad(1, format!("header must be \"V dim\", got {header:?}"))),
    };
    let mut entries = Vec::with_capacity(count);
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if entries.len() == count {
            return Err(bad(line_no, format!("more than {count} vectors")));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 1 {
            return Err(bad(line_no, format!("expected {} fields, found {}", dim + 1, fields.len())));
        }
        let token = unescape_token(fields[0]);
        let mut vector = Vec::with_capacity(dim);
        for f in &fields[1..] {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => vector.push(v),
                _ => return Err(bad(line_no, format!("not a finite number: {f:?}"))),
            }
        }
        if !seen.insert(token.clone()) {
            return Err(bad(line_no, format!("duplicate token {token:?}")));
        }
        entries.push((token, vector));
    }
    if entries.len() != count {
        return Err(bad(count + 2, format!("expected {count} vectors, found {}", entries.len())));
    }
    ExternalVectors::new(dim, entries)
}
