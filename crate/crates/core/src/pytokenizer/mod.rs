//! Python source normalization and lexing.

mod corpus;
mod lexer;
mod normalize;

use std::fmt;

pub use corpus::{
    build_corpus, escape_token, read_corpus, unescape_token, write_corpus, Corpus, CorpusFileError,
};
pub use lexer::{is_keyword, LexError, LexMode, KEYWORDS};
pub use normalize::normalize_source;

pub(crate) use lexer::lex_spanned;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Name,
    Number,
    String,
    Op,
    Keyword,
    Newline,
    Indent,
    Dedent,
    ErrorToken,
}

impl TokenKind {
    /// Fixed text carried by the structural pseudo-tokens.
    pub fn canonical_text(self) -> &'static str {
        match self {
            TokenKind::Newline => "<newline>",
            TokenKind::Indent => "<indent>",
            TokenKind::Dedent => "<dedent>",
            _ => "",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Name => "NAME",
            TokenKind::Number => "NUMBER",
            TokenKind::String => "STRING",
            TokenKind::Op => "OP",
            TokenKind::Keyword => "KEYWORD",
            TokenKind::Newline => "NEWLINE",
            TokenKind::Indent => "INDENT",
            TokenKind::Dedent => "DEDENT",
            TokenKind::ErrorToken => "ERRORTOKEN",
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
}

impl Token {
    pub fn new(kind: TokenKind, text: impl Into<String>) -> Self {
        Token {
            kind,
            text: text.into(),
        }
    }
}

/// Tokens of one source file. INDENT/DEDENT are balanced and the last
/// token before any trailing DEDENTs is a NEWLINE.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    pub source_id: String,
}

impl TokenStream {
    pub fn texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lenient tokenization: never fails, unlexable input becomes `ERRORTOKEN`.
pub fn tokenize(text: &str) -> TokenStream {
    tokenize_with(text, LexMode::Lenient).expect("lenient lexing is total")
}

pub fn tokenize_strict(text: &str) -> Result<TokenStream, LexError> {
    tokenize_with(text, LexMode::Strict)
}

pub fn tokenize_with(text: &str, mode: LexMode) -> Result<TokenStream, LexError> {
    let tokens = lex_spanned(text, mode)?
        .into_iter()
        .map(|s| s.token)
        .collect();
    Ok(TokenStream {
        tokens,
        source_id: String::new(),
    })
}

/// A logical source line: the physical lines it covers and its indentation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct LogicalLine {
    /// 1-based first physical line.
    pub start: usize,
    /// 1-based last physical line (the one holding its NEWLINE).
    pub end: usize,
    /// Leading whitespace width of the first physical line, tabs to multiples of 8.
    pub indent: usize,
    pub first: String,
    pub second: Option<String>,
}

pub(crate) fn leading_width(line: &str, tab: usize) -> usize {
    let mut column = 0;
    for b in line.bytes() {
        match b {
            b' ' => column += 1,
            b'\t' => column = (column / tab + 1) * tab,
            b'\x0c' => column = 0,
            _ => break,
        }
    }
    column
}

/// Splits leniently-lexed source into logical lines.
pub(crate) fn logical_lines(text: &str) -> Vec<LogicalLine> {
    let spans = lex_spanned(text, LexMode::Lenient).expect("lenient lexing is total");
    let physical: Vec<&str> = text.split_inclusive('\n').collect();
    let mut out = Vec::new();
    let mut current: Option<LogicalLine> = None;
    for span in spans {
        match span.token.kind {
            TokenKind::Indent | TokenKind::Dedent => {}
            TokenKind::Newline => {
                if let Some(mut line) = current.take() {
                    line.end = line.end.max(span.line);
                    out.push(line);
                }
            }
            _ => match current.as_mut() {
                None => {
                    let indent = physical
                        .get(span.line - 1)
                        .map_or(0, |l| leading_width(l, 8));
                    current = Some(LogicalLine {
                        start: span.line,
                        end: span.end_line,
                        indent,
                        first: span.token.text,
                        second: None,
                    });
                }
                Some(line) => {
                    if line.second.is_none() {
                        line.second = Some(span.token.text);
                    }
                    line.end = line.end.max(span.end_line);
                }
            },
        }
    }
    if let Some(line) = current {
        out.push(line);
    }
    out
}
