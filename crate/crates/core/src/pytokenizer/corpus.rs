//! Token corpora and their on-disk form.
//!
//! The corpus file holds one line per logical source line: space-joined token
//! texts ending with `<newline>`. Streams are separated by a blank line. Token
//! texts containing whitespace or backslashes are escaped (`\s`, `\t`, `\n`,
//! `\r`, `\f`, `\\`) so every field stays a single whitespace-free word.

use std::io::{self, BufRead, Write};

use log::warn;

use super::{normalize_source, tokenize_strict, TokenKind, TokenStream};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub streams: Vec<TokenStream>,
    /// Inputs that failed strict lexing and were left out.
    pub skipped: usize,
}

impl Corpus {
    /// Token texts per stream, the form the embedding trainers consume.
    pub fn sentences(&self) -> Vec<Vec<String>> {
        self.streams.iter().map(TokenStream::texts).collect()
    }
}

/// Normalizes and strictly lexes each `(id, source)` pair, keeping order.
/// Files that do not lex are skipped and counted.
pub fn build_corpus<I, S, T>(sources: I) -> Corpus
where
    I: IntoIterator<Item = (S, T)>,
    S: Into<String>,
    T: AsRef<str>,
{
    let mut corpus = Corpus::default();
    for (id, text) in sources {
        let id = id.into();
        match tokenize_strict(&normalize_source(text.as_ref())) {
            Ok(mut stream) => {
                stream.source_id = id;
                corpus.streams.push(stream);
            }
            Err(err) => {
                warn!("skipping {id}: {err}");
                corpus.skipped += 1;
            }
        }
    }
    if corpus.skipped > 0 {
        warn!("{} source file(s) skipped as unlexable", corpus.skipped);
    }
    corpus
}

pub fn escape_token(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\x0c' => out.push_str("\\f"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_token(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('s') => out.push(' '),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('f') => out.push('\x0c'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusFileError> {
    for (idx, stream) in corpus.streams.iter().enumerate() {
        if idx > 0 {
            writeln!(out)?;
        }
        let mut line: Vec<String> = Vec::new();
        for token in &stream.tokens {
            line.push(escape_token(&token.text));
            if token.kind == TokenKind::Newline {
                writeln!(out, "{}", line.join(" "))?;
                line.clear();
            }
        }
        if !line.is_empty() {
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads token texts back, one `Vec` per stream. Kinds are not stored.
pub fn read_corpus<R: BufRead>(input: R) -> Result<Vec<Vec<String>>, CorpusFileError> {
    let mut streams = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            if !current.is_empty() {
                streams.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.extend(line.split(' ').filter(|f| !f.is_empty()).map(unescape_token));
    }
    if !current.is_empty() {
        streams.push(current);
    }
    Ok(streams)
}
