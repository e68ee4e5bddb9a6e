//! Unified diff parsing and application.

use serde::{Deserialize, Serialize};

use super::LabelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    Context,
    Removed,
    Added,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub kind: LineKind,
    /// Line text without the diff marker or the trailing newline.
    pub text: String,
    /// Set when the line was followed by `\ No newline at end of file`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing_newline: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    /// `/dev/null` for created files.
    pub old_path: String,
    /// `/dev/null` for deleted files.
    pub new_path: String,
    pub old_start: usize,
    pub old_count: usize,
    pub new_start: usize,
    pub new_count: usize,
    pub lines: Vec<DiffLine>,
}

pub const DEV_NULL: &str = "/dev/null";

impl DiffHunk {
    /// The path this hunk belongs to, preferring the post-change name.
    pub fn path(&self) -> &str {
        if self.new_path == DEV_NULL {
            &self.old_path
        } else {
            &self.new_path
        }
    }
}

pub fn is_python_path(path: &str) -> bool {
    path.ends_with(".py")
}

fn clean_path(raw: &str) -> String {
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    if raw == DEV_NULL {
        return raw.to_string();
    }
    raw.strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw)
        .to_string()
}

fn parse_range(spec: &str) -> Option<(usize, usize)> {
    match spec.split_once(',') {
        Some((start, count)) => Some((start.parse().ok()?, count.parse().ok()?)),
        None => Some((spec.parse().ok()?, 1)),
    }
}

fn parse_hunk_header(line: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = line.strip_prefix("@@ -")?;
    let (ranges, _) = rest.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    let (old_start, old_count) = parse_range(old)?;
    let (new_start, new_count) = parse_range(new)?;
    Some((old_start, old_count, new_start, new_count))
}

/// Parses a (possibly multi-file) unified diff, keeping only hunks of `.py` files.
pub fn parse_unified_diff(text: &str) -> Result<Vec<DiffHunk>, LabelError> {
    let lines: Vec<&str> = text
        .split_inclusive('\n')
        .map(|l| l.strip_suffix('\n').unwrap_or(l))
        .collect();
    let mut hunks = Vec::new();
    let mut old_path = String::new();
    let mut new_path = String::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("diff --git ") {
            // Paths from the git header; `---`/`+++` lines refine them when present.
            if let Some((a, b)) = rest.split_once(" b/") {
                old_path = clean_path(a);
                new_path = clean_path(&format!("b/{b}"));
            }
            i += 1;
        } else if let Some(rest) = line.strip_prefix("--- ") {
            if lines.get(i + 1).is_some_and(|n| n.starts_with("+++ ")) {
                old_path = clean_path(rest);
                new_path = clean_path(&lines[i + 1][4..]);
                i += 2;
            } else {
                i += 1;
            }
        } else if line.starts_with("@@") {
            let header_line = i + 1;
            let (old_start, old_count, new_start, new_count) =
                parse_hunk_header(line).ok_or_else(|| LabelError::DiffParse {
                    line: header_line,
                    message: format!("malformed hunk header {line:?}"),
                })?;
            i += 1;
            let mut body = Vec::new();
            let (mut old_seen, mut new_seen) = (0, 0);
            while old_seen < old_count || new_seen < new_count {
                let Some(raw) = lines.get(i) else {
                    return Err(LabelError::DiffParse {
                        line: header_line,
                        message: "hunk body shorter than its header declares".into(),
                    });
                };
                let (kind, text) = match raw.chars().next() {
                    Some(' ') => (LineKind::Context, &raw[1..]),
                    Some('-') => (LineKind::Removed, &raw[1..]),
                    Some('+') => (LineKind::Added, &raw[1..]),
                    // Some tools drop the marker on blank context lines.
                    None => (LineKind::Context, ""),
                    Some('\\') => {
                        i += 1;
                        continue;
                    }
                    Some(_) => {
                        return Err(LabelError::DiffParse {
                            line: i + 1,
                            message: format!("unexpected line in hunk body {raw:?}"),
                        })
                    }
                };
                match kind {
                    LineKind::Context => {
                        old_seen += 1;
                        new_seen += 1;
                    }
                    LineKind::Removed => old_seen += 1,
                    LineKind::Added => new_seen += 1,
                }
                if old_seen > old_count || new_seen > new_count {
                    return Err(LabelError::DiffParse {
                        line: i + 1,
                        message: "hunk body longer than its header declares".into(),
                    });
                }
                body.push(DiffLine {
                    kind,
                    text: text.to_string(),
                    missing_newline: false,
                });
                i += 1;
            }
            if lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                if let Some(last) = body.last_mut() {
                    last.missing_newline = true;
                }
                i += 1;
            }
            let hunk = DiffHunk {
                old_path: old_path.clone(),
                new_path: new_path.clone(),
                old_start,
                old_count,
                new_start,
                new_count,
                lines: body,
            };
            if is_python_path(hunk.path()) {
                hunks.push(hunk);
            }
        } else {
            i += 1;
        }
    }
    Ok(hunks)
}

/// Keeps only the file sections of a diff whose target is a `.py` file.
/// A diff that touches only Python files is returned byte-for-byte.
pub fn filter_python_sections(text: &str) -> String {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let git_style = lines.iter().any(|l| l.starts_with("diff --git "));
    let mut starts: Vec<usize> = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        let boundary = if git_style {
            line.starts_with("diff --git ")
        } else {
            line.starts_with("--- ") && lines.get(idx + 1).is_some_and(|n| n.starts_with("+++ "))
        };
        if boundary {
            starts.push(idx);
        }
    }
    let mut out = String::with_capacity(text.len());
    if let Some(&first) = starts.first() {
        // Preamble (e.g. a commit header) is kept only if some section survives.
        let mut sections = String::new();
        for (n, &start) in starts.iter().enumerate() {
            let end = starts.get(n + 1).copied().unwrap_or(lines.len());
            let section: String = lines[start..end].concat();
            if section_is_python(&lines[start..end]) {
                sections.push_str(&section);
            }
        }
        if !sections.is_empty() {
            out.push_str(&lines[..first].concat());
            out.push_str(&sections);
        }
    }
    out
}

fn section_is_python(section: &[&str]) -> bool {
    let mut old_path = None;
    let mut new_path = None;
    for (idx, line) in section.iter().enumerate() {
        if let Some(rest) = line.strip_prefix("--- ") {
            if let Some(next) = section.get(idx + 1).and_then(|n| n.strip_prefix("+++ ")) {
                old_path = Some(clean_path(rest.trim_end_matches('\n')));
                new_path = Some(clean_path(next.trim_end_matches('\n')));
                break;
            }
        }
        if line.starts_with("@@") {
            break;
        }
    }
    if new_path.is_none() {
        if let Some(rest) = section[0].strip_prefix("diff --git ") {
            if let Some((_, b)) = rest.trim_end().split_once(" b/") {
                return is_python_path(b);
            }
        }
        return false;
    }
    let new_path = new_path.unwrap();
    if new_path == DEV_NULL {
        old_path.is_some_and(|p| is_python_path(&p))
    } else {
        is_python_path(&new_path)
    }
}

/// Applies the hunks of one file to its pre-image, producing the post-image.
pub fn apply_hunks(pre: &str, hunks: &[DiffHunk]) -> Result<String, LabelError> {
    let old: Vec<&str> = pre.split_inclusive('\n').collect();
    let mut out = String::with_capacity(pre.len());
    let mut cursor = 0;
    for hunk in hunks {
        // A zero-length old range names the line after which text is inserted.
        let first = if hunk.old_count == 0 {
            hunk.old_start
        } else {
            hunk.old_start.saturating_sub(1)
        };
        if first < cursor || first > old.len() {
            return Err(LabelError::BlockExtraction(format!(
                "hunk at old line {} does not fit a {}-line file",
                hunk.old_start,
                old.len()
            )));
        }
        out.extend(old[cursor..first].iter().copied());
        cursor = first;
        for line in &hunk.lines {
            if line.kind != LineKind::Added {
                let Some(actual) = old.get(cursor) else {
                    return Err(LabelError::BlockExtraction(format!(
                        "hunk runs past the end of the file at old line {}",
                        cursor + 1
                    )));
                };
                if actual.strip_suffix('\n').unwrap_or(actual) != line.text {
                    return Err(LabelError::BlockExtraction(format!(
                        "old line {} does not match the hunk",
                        cursor + 1
                    )));
                }
                if line.kind == LineKind::Context {
                    out.push_str(actual);
                }
                cursor += 1;
            } else {
                out.push_str(&line.text);
                if !line.missing_newline {
                    out.push('\n');
                }
            }
        }
    }
    out.extend(old[cursor..].iter().copied());
    Ok(out)
}
