#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    Single(char),
    Triple(char),
}

/// Removes `#` comments that are not inside string literals.
///
/// Whitespace before a removed comment is dropped with it, so comment-only
/// lines become empty. Everything else, including line structure, is kept.
/// Unterminated single-quoted strings end at the newline.
pub fn strip_comments(code: &str) -> String {
    let mut out = String::with_capacity(code.len());
    let mut state = State::Code;
    let mut chars = code.chars().peekable();
    while let Some(c) = chars.next() {
        match state {
            State::Code => match c {
                '#' => {
                    while chars.peek().is_some_and(|&n| n != '\n') {
                        chars.next();
                    }
                    let kept = out.trim_end_matches([' ', '\t', '\x0c']).len();
                    out.truncate(kept);
                }
                '\'' | '"' => {
                    out.push(c);
                    let mut ahead = chars.clone();
                    if ahead.next() == Some(c) && ahead.next() == Some(c) {
                        out.push(chars.next().unwrap());
                        out.push(chars.next().unwrap());
                        state = State::Triple(c);
                    } else {
                        state = State::Single(c);
                    }
                }
                _ => out.push(c),
            },
            State::Single(q) => {
                out.push(c);
                if c == '\\' {
                    if let Some(n) = chars.next() {
                        out.push(n);
                    }
                } else if c == q || c == '\n' {
                    state = State::Code;
                }
            }
            State::Triple(q) => {
                out.push(c);
                if c == '\\' {
                    if let Some(n) = chars.next() {
                        out.push(n);
                    }
                } else if c == q {
                    let mut ahead = chars.clone();
                    if ahead.next() == Some(q) && ahead.next() == Some(q) {
                        out.push(chars.next().unwrap());
                        out.push(chars.next().unwrap());
                        state = State::Code;
                    }
                }
            }
        }
    }
    out
}
