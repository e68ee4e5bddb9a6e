//! Line-oriented Python lexer.
//!
//! Mirrors the behavior of CPython's pure-Python `tokenize` module: the same
//! pseudo-token grammar, the same indentation stack and the same handling of
//! strings that continue across lines. Comments and non-logical newlines are
//! consumed but never emitted.

use std::sync::OnceLock;

use regex::Regex;

use super::{Token, TokenKind};

/// Python 3.8 keywords.
pub const KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield",
];

/// Exact operator tokens, reverse-sorted so longer operators win over their prefixes.
const OPERATORS: [&str; 47] = [
    "~", "}", "|=", "|", "{", "^=", "^", "]", "[", "@=", "@", ">>=", ">>", ">=", ">", "==", "=",
    "<=", "<<=", "<<", "<", ";", ":=", ":", "/=", "//=", "//", "/", "...", ".", "->", "-=", "-",
    ",", "+=", "+", "*=", "**=", "**", "*", ")", "(", "&=", "&", "%=", "%", "!=",
];

const TAB_SIZE: usize = 8;

pub fn is_keyword(text: &str) -> bool {
    KEYWORDS.binary_search(&text).is_ok()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LexMode {
    /// Emit `ERRORTOKEN` for unlexable input and keep going.
    #[default]
    Lenient,
    /// Fail on the first lexical error.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("lex error at line {line}, column {column}: {message}")]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// A token with its source position (1-based line, byte column) and the line it ends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Spanned {
    pub token: Token,
    pub line: usize,
    pub col: usize,
    pub end_line: usize,
}

fn pseudo_token() -> &'static Regex {
    static PSEUDO: OnceLock<Regex> = OnceLock::new();
    PSEUDO.get_or_init(|| {
        let prefix = r#"(?:[bB][rR]?|[rR][bBfF]?|[uU]|[fF][rR]?)?"#;
        let digits = r"[0-9](?:_?[0-9])*";
        let exponent = format!(r"[eE][-+]?{digits}");
        let int = r"(?:0[xX](?:_?[0-9a-fA-F])+|0[bB](?:_?[01])+|0[oO](?:_?[0-7])+|(?:0(?:_?0)*|[1-9](?:_?[0-9])*))";
        let pointfloat = format!(r"(?:{digits}\.(?:{digits})?|\.{digits})(?:{exponent})?");
        let expfloat = format!(r"{digits}{exponent}");
        let float = format!(r"(?:{pointfloat}|{expfloat})");
        let imag = format!(r"(?:{digits}[jJ]|{float}[jJ])");
        let number = format!(r"(?:{imag}|{float}|{int})");
        let special = OPERATORS
            .iter()
            .map(|op| regex::escape(op))
            .collect::<Vec<_>>()
            .join("|");
        let funny = format!(r"(?:\r?\n|{special})");
        let contstr = format!(
            r#"(?:{prefix}'[^\n'\\]*(?:\\.[^\n'\\]*)*(?:'|\\\r?\n)|{prefix}"[^\n"\\]*(?:\\.[^\n"\\]*)*(?:"|\\\r?\n))"#
        );
        let triple = format!(r#"(?:{prefix}'''|{prefix}""")"#);
        let extras = format!(r"(?:\\\r?\n|\z|#[^\r\n]*|{triple})");
        let pattern = format!(r"^[ \f\t]*({extras}|{number}|{funny}|{contstr}|\w+)");
        Regex::new(&pattern).expect("pseudo-token grammar compiles")
    })
}

/// Byte offset just past the closing `quote` in `s`, honoring backslash escapes.
/// A backslash before a newline (or the end of `s`) cannot be consumed.
fn find_string_end(s: &str, quote: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\' {
            if i + 1 < bytes.len() && bytes[i + 1] != b'\n' {
                i += 2;
                continue;
            }
            return None;
        }
        if bytes[i..].starts_with(quote.as_bytes()) {
            return Some(i + quote.len());
        }
        i += 1;
    }
    None
}

fn triple_quote_of(token: &str) -> Option<&'static str> {
    let prefix_ok = |p: &str| p.len() <= 2 && p.bytes().all(|b| b.is_ascii_alphabetic());
    if let Some(p) = token.strip_suffix("'''") {
        return prefix_ok(p).then_some("'''");
    }
    if let Some(p) = token.strip_suffix("\"\"\"") {
        return prefix_ok(p).then_some("\"\"\"");
    }
    None
}

fn single_quote_of(token: &str) -> Option<&'static str> {
    let body = token.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    if token.len() - body.len() > 2 {
        return None;
    }
    match body.as_bytes().first() {
        Some(b'\'') => Some("'"),
        Some(b'"') => Some("\""),
        _ => None,
    }
}

fn is_identifier_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

struct OpenString {
    text: String,
    line: usize,
    col: usize,
    quote: &'static str,
    needs_continuation: bool,
}

struct Lexer {
    mode: LexMode,
    out: Vec<Spanned>,
}

impl Lexer {
    fn push(&mut self, kind: TokenKind, text: &str, line: usize, col: usize) {
        let end_line = line + text.matches('\n').count();
        let text = match kind {
            TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent => kind.canonical_text(),
            _ => text,
        };
        self.out.push(Spanned {
            token: Token::new(kind, text),
            line,
            col,
            end_line,
        });
    }

    fn fail(&self, line: usize, src: &str, pos: usize, message: &str) -> Result<(), LexError> {
        match self.mode {
            LexMode::Strict => Err(LexError {
                line,
                column: src[..pos.min(src.len())].chars().count() + 1,
                message: message.to_string(),
            }),
            LexMode::Lenient => Ok(()),
        }
    }
}

pub(crate) fn lex_spanned(text: &str, mode: LexMode) -> Result<Vec<Spanned>, LexError> {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let pseudo = pseudo_token();
    let mut lx = Lexer {
        mode,
        out: Vec::new(),
    };
    let mut parenlev: usize = 0;
    let mut continued = false;
    let mut indents: Vec<usize> = vec![0];
    let mut open: Option<OpenString> = None;
    let mut lnum = 0;

    loop {
        let line = lines.get(lnum).copied().unwrap_or("");
        lnum += 1;
        let max = line.len();
        let mut pos = 0;

        if let Some(mut s) = open.take() {
            if line.is_empty() {
                lx.fail(s.line, lines[s.line - 1], s.col, "EOF in multi-line string")?;
                lx.push(TokenKind::ErrorToken, &s.text, s.line, s.col);
                break;
            }
            match find_string_end(line, s.quote) {
                Some(end) => {
                    pos = end;
                    s.text.push_str(&line[..end]);
                    lx.push(TokenKind::String, &s.text, s.line, s.col);
                }
                None if s.needs_continuation
                    && !line.ends_with("\\\n")
                    && !line.ends_with("\\\r\n") =>
                {
                    lx.fail(s.line, lines[s.line - 1], s.col, "unterminated string literal")?;
                    s.text.push_str(line);
                    lx.push(TokenKind::ErrorToken, s.text.trim_end(), s.line, s.col);
                    continue;
                }
                None => {
                    s.text.push_str(line);
                    open = Some(s);
                    continue;
                }
            }
        } else if parenlev == 0 && !continued {
            if line.is_empty() {
                break;
            }
            let mut column = 0;
            while pos < max {
                match line.as_bytes()[pos] {
                    b' ' => column += 1,
                    b'\t' => column = (column / TAB_SIZE + 1) * TAB_SIZE,
                    b'\x0c' => column = 0,
                    _ => break,
                }
                pos += 1;
            }
            if pos == max {
                break;
            }
            if matches!(line.as_bytes()[pos], b'#' | b'\r' | b'\n') {
                continue;
            }
            if column > *indents.last().unwrap() {
                indents.push(column);
                lx.push(TokenKind::Indent, "", lnum, 0);
            }
            while column < *indents.last().unwrap() {
                if !indents.contains(&column) {
                    lx.fail(lnum, line, pos, "unindent does not match any outer indentation level")?;
                    // Lenient: close deeper blocks, then open one at this column.
                    while column < *indents.last().unwrap() {
                        indents.pop();
                        lx.push(TokenKind::Dedent, "", lnum, pos);
                    }
                    if column > *indents.last().unwrap() {
                        indents.push(column);
                        lx.push(TokenKind::Indent, "", lnum, 0);
                    }
                    break;
                }
                indents.pop();
                lx.push(TokenKind::Dedent, "", lnum, pos);
            }
        } else {
            if line.is_empty() {
                lx.fail(lnum, line, 0, "EOF in multi-line statement")?;
                break;
            }
            continued = false;
        }

        while pos < max {
            let Some(caps) = pseudo.captures(&line[pos..]) else {
                let ws = line[pos..]
                    .bytes()
                    .take_while(|b| matches!(b, b' ' | b'\t' | b'\x0c'))
                    .count();
                pos += ws;
                let c = line[pos..].chars().next().expect("unmatched input is non-empty");
                lx.fail(lnum, line, pos, &format!("unexpected character {c:?}"))?;
                if c == '\'' || c == '"' {
                    // Unterminated string: swallow the rest of the line.
                    let stop = line[pos..].find('\n').map_or(max, |i| pos + i);
                    lx.push(TokenKind::ErrorToken, line[pos..stop].trim_end(), lnum, pos);
                    pos = stop;
                } else {
                    lx.push(TokenKind::ErrorToken, &line[pos..pos + c.len_utf8()], lnum, pos);
                    pos += c.len_utf8();
                }
                continue;
            };
            let group = caps.get(1).expect("group 1 always participates");
            let (start, end) = (pos + group.start(), pos + group.end());
            pos = end;
            if start == end {
                continue;
            }
            let token = &line[start..end];
            let initial = token.chars().next().unwrap();

            if initial.is_ascii_digit() || (initial == '.' && token != "." && token != "...") {
                lx.push(TokenKind::Number, token, lnum, start);
            } else if initial == '\r' || initial == '\n' {
                if parenlev == 0 {
                    lx.push(TokenKind::Newline, "", lnum, start);
                }
            } else if initial == '#' {
                // comment
            } else if let Some(quote) = triple_quote_of(token) {
                match find_string_end(&line[pos..], quote) {
                    Some(len) => {
                        pos += len;
                        lx.push(TokenKind::String, &line[start..pos], lnum, start);
                    }
                    None => {
                        open = Some(OpenString {
                            text: line[start..].to_string(),
                            line: lnum,
                            col: start,
                            quote,
                            needs_continuation: false,
                        });
                        break;
                    }
                }
            } else if let Some(quote) = single_quote_of(token) {
                if token.ends_with('\n') {
                    open = Some(OpenString {
                        text: line[start..].to_string(),
                        line: lnum,
                        col: start,
                        quote,
                        needs_continuation: true,
                    });
                    break;
                }
                lx.push(TokenKind::String, token, lnum, start);
            } else if is_identifier_start(initial) {
                let kind = if is_keyword(token) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Name
                };
                lx.push(kind, token, lnum, start);
            } else if initial == '\\' {
                continued = true;
            } else {
                match initial {
                    '(' | '[' | '{' => parenlev += 1,
                    ')' | ']' | '}' => {
                        if parenlev == 0 {
                            lx.fail(lnum, line, start, "unmatched closing bracket")?;
                        }
                        parenlev = parenlev.saturating_sub(1);
                    }
                    _ => {}
                }
                lx.push(TokenKind::Op, token, lnum, start);
            }
        }
    }

    let last_line = lnum.saturating_sub(1).max(1);
    if lx
        .out
        .last()
        .is_some_and(|t| t.token.kind != TokenKind::Newline)
    {
        lx.push(TokenKind::Newline, "", last_line, 0);
    }
    for _ in 1..indents.len() {
        lx.push(TokenKind::Dedent, "", lnum, 0);
    }
    if lx.out.is_empty() {
        lx.push(TokenKind::Newline, "", 1, 0);
    }
    Ok(lx.out)
}
