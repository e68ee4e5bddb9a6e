//! Locating the code blocks a fix touched.
//!
//! A changed line maps to the innermost `def` (with its decorators) whose
//! indentation-delimited body contains it. Lines outside any function map to a
//! window of `context_radius` lines around them. Ranges are merged per file.

use std::ops::RangeInclusive;

use super::diff::{DiffHunk, LineKind};
use super::LabelError;
use crate::pytokenizer::logical_lines;

pub const DEFAULT_CONTEXT_RADIUS: usize = 5;

/// Physical line spans (1-based, inclusive) of every function definition.
fn function_spans(source: &str) -> Vec<RangeInclusive<usize>> {
    let logical = logical_lines(source);
    let mut spans = Vec::new();
    for (k, line) in logical.iter().enumerate() {
        let is_def = line.first == "def"
            || (line.first == "async" && line.second.as_deref() == Some("def"));
        if !is_def {
            continue;
        }
        let mut start = line.start;
        let mut j = k;
        while j > 0 && logical[j - 1].first == "@" && logical[j - 1].indent == line.indent {
            j -= 1;
            start = logical[j].start;
        }
        let mut end = line.end;
        for body in &logical[k + 1..] {
            if body.indent <= line.indent {
                break;
            }
            end = body.end;
        }
        spans.push(start..=end);
    }
    spans
}

struct Side<'a> {
    spans: Vec<RangeInclusive<usize>>,
    len: usize,
    lines: Vec<&'a str>,
}

impl<'a> Side<'a> {
    fn new(source: &'a str) -> Self {
        let lines: Vec<&str> = source.split_inclusive('\n').collect();
        Side {
            spans: function_spans(source),
            len: lines.len(),
            lines,
        }
    }

    fn block_for(&self, line: usize, radius: usize) -> RangeInclusive<usize> {
        self.spans
            .iter()
            .filter(|span| span.contains(&line))
            .max_by_key(|span| *span.start())
            .cloned()
            .unwrap_or_else(|| line.saturating_sub(radius).max(1)..=(line + radius).min(self.len))
    }

    fn text(&self, range: &RangeInclusive<usize>) -> String {
        self.lines[range.start() - 1..*range.end()].concat()
    }
}

fn check_range(start: usize, count: usize, len: usize, side: &str) -> Result<(), LabelError> {
    let last = if count == 0 { start } else { start + count - 1 };
    if last > len {
        return Err(LabelError::BlockExtraction(format!(
            "hunk references {side} line {last} of a {len}-line file"
        )));
    }
    Ok(())
}

fn merge(mut ranges: Vec<RangeInclusive<usize>>) -> Vec<RangeInclusive<usize>> {
    ranges.sort_by_key(|r| (*r.start(), *r.end()));
    let mut merged: Vec<RangeInclusive<usize>> = Vec::new();
    for r in ranges {
        match merged.last_mut() {
            Some(last) if *r.start() <= *last.end() => {
                if r.end() > last.end() {
                    *last = *last.start()..=*r.end();
                }
            }
            _ => merged.push(r),
        }
    }
    merged
}

/// Changed line numbers on each side of one hunk. A side with no changed
/// lines of its own gets the line just above the insertion/removal point.
fn changed_lines(hunk: &DiffHunk, old_len: usize, new_len: usize) -> (Vec<usize>, Vec<usize>) {
    let mut old_ln = if hunk.old_count == 0 { hunk.old_start + 1 } else { hunk.old_start };
    let mut new_ln = if hunk.new_count == 0 { hunk.new_start + 1 } else { hunk.new_start };
    let (mut old_changed, mut new_changed) = (Vec::new(), Vec::new());
    let (mut old_anchor, mut new_anchor) = (None, None);
    for line in &hunk.lines {
        match line.kind {
            LineKind::Context => {
                old_ln += 1;
                new_ln += 1;
            }
            LineKind::Removed => {
                old_changed.push(old_ln);
                new_anchor.get_or_insert(new_ln);
                old_ln += 1;
            }
            LineKind::Added => {
                new_changed.push(new_ln);
                old_anchor.get_or_insert(old_ln);
                new_ln += 1;
            }
        }
    }
    let anchor = |at: Option<usize>, len: usize| -> Vec<usize> {
        at.map(|l| if l > 1 { l - 1 } else { l })
            .filter(|l| (1..=len).contains(l))
            .into_iter()
            .collect()
    };
    if old_changed.is_empty() {
        old_changed = anchor(old_anchor, old_len);
    }
    if new_changed.is_empty() {
        new_changed = anchor(new_anchor, new_len);
    }
    (old_changed, new_changed)
}

type LineRanges = Vec<RangeInclusive<usize>>;

/// Line ranges of the changed blocks in the pre- and post-fix files.
pub fn changed_block_ranges(
    pre_file: &str,
    post_file: &str,
    hunks: &[DiffHunk],
    context_radius: usize,
) -> Result<(LineRanges, LineRanges), LabelError> {
    let pre = Side::new(pre_file);
    let post = Side::new(post_file);
    let (mut pre_ranges, mut post_ranges) = (Vec::new(), Vec::new());
    for hunk in hunks {
        check_range(hunk.old_start, hunk.old_count, pre.len, "old")?;
        check_range(hunk.new_start, hunk.new_count, post.len, "new")?;
        let (old_lines, new_lines) = changed_lines(hunk, pre.len, post.len);
        pre_ranges.extend(old_lines.into_iter().map(|l| pre.block_for(l, context_radius)));
        post_ranges.extend(new_lines.into_iter().map(|l| post.block_for(l, context_radius)));
    }
    Ok((merge(pre_ranges), merge(post_ranges)))
}

/// Code of the blocks touched by `hunks`, from the pre-fix file and from the
/// post-fix file, in file order.
pub fn extract_changed_blocks(
    pre_file: &str,
    post_file: &str,
    hunks: &[DiffHunk],
    context_radius: usize,
) -> Result<(Vec<String>, Vec<String>), LabelError> {
    let (pre_ranges, post_ranges) =
        changed_block_ranges(pre_file, post_file, hunks, context_radius)?;
    let pre = Side::new(pre_file);
    let post = Side::new(post_file);
    Ok((
        pre_ranges.iter().map(|r| pre.text(r)).collect(),
        post_ranges.iter().map(|r| post.text(r)).collect(),
    ))
}
