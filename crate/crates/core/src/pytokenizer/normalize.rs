use super::{leading_width, lex_spanned, LexMode, TokenKind};
use crate::labeler::strip_comments;

const INDENT_UNIT: usize = 4;

/// Canonical form used by both the embedding corpus and the dataset path:
/// LF line endings, no comments, tabs expanded, block indentation re-based to
/// multiples of four spaces and exactly one trailing newline.
///
/// Lines inside multi-line string literals are left untouched.
pub fn normalize_source(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let stripped = strip_comments(&unified);
    let lines: Vec<&str> = stripped.split('\n').collect();

    let mut in_string = vec![false; lines.len() + 2];
    let mut logical_start = vec![false; lines.len() + 2];
    let mut at_line_start = true;
    for span in lex_spanned(&stripped, LexMode::Lenient).expect("lenient lexing is total") {
        match span.token.kind {
            TokenKind::Indent | TokenKind::Dedent => continue,
            TokenKind::Newline => {
                at_line_start = true;
                continue;
            }
            TokenKind::String | TokenKind::ErrorToken => {
                for flag in &mut in_string[span.line + 1..=span.end_line] {
                    *flag = true;
                }
            }
            _ => {}
        }
        if at_line_start {
            logical_start[span.line] = true;
            at_line_start = false;
        }
    }

    let mut stack = vec![0usize];
    let mut out = String::with_capacity(stripped.len() + 16);
    for (idx, line) in lines.iter().enumerate() {
        let lnum = idx + 1;
        if idx > 0 {
            out.push('\n');
        }
        if in_string[lnum] {
            out.push_str(line);
            continue;
        }
        let body = line.trim_start_matches([' ', '\t', '\x0c']);
        if body.is_empty() {
            continue;
        }
        if logical_start[lnum] {
            let width = leading_width(line, INDENT_UNIT);
            while width < *stack.last().unwrap() {
                stack.pop();
            }
            if width > *stack.last().unwrap() {
                stack.push(width);
            }
            let level = stack.len() - 1;
            out.extend(std::iter::repeat_n(' ', level * INDENT_UNIT));
        } else {
            let width = leading_width(line, INDENT_UNIT);
            out.extend(std::iter::repeat_n(' ', width));
        }
        out.push_str(body);
    }

    let trimmed = out.trim_end_matches([' ', '\t', '\n', '\x0c']).len();
    out.truncate(trimmed);
    out.push('\n');
    out
}
