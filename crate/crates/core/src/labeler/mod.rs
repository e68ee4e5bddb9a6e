//! Turning fix commits into labeled snippets.
//!
//! The code a fix touched is taken from both sides of the commit: blocks from
//! the pre-fix file are labeled vulnerable (1), blocks from the post-fix file
//! fixed (0).

mod blocks;
mod comments;
pub mod diff;

use std::collections::{HashMap, HashSet};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use blocks::{changed_block_ranges, extract_changed_blocks, DEFAULT_CONTEXT_RADIUS};
pub use comments::strip_comments;
pub use diff::{apply_hunks, filter_python_sections, parse_unified_diff, DiffHunk, DiffLine, LineKind};

use crate::miner::{CommitRecord, CommitSource, MineError, RepoRef, VulnCategory};

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("diff parse error at line {line}: {message}")]
    DiffParse { line: usize, message: String },
    #[error("block extraction failed: {0}")]
    BlockExtraction(String),
    #[error(transparent)]
    Source(#[from] MineError),
}

impl LabelError {
    pub fn kind(&self) -> &'static str {
        match self {
            LabelError::DiffParse { .. } => "DiffParseError",
            LabelError::BlockExtraction(_) => "BlockExtractionError",
            LabelError::Source(e) => e.kind(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Fixed = 0,
    Vulnerable = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_bool(vulnerable: bool) -> Self {
        if vulnerable {
            Label::Vulnerable
        } else {
            Label::Fixed
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::Fixed),
            1 => Ok(Label::Vulnerable),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Pre,
    Post,
}

/// One dataset row. `id` hashes `(code, label, category)` so the same block
/// mined twice collides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSnippet {
    pub id: String,
    #[serde(with = "repo_slug")]
    pub repo: RepoRef,
    pub sha: String,
    pub category: VulnCategory,
    pub label: Label,
    pub origin: Origin,
    pub code: String,
}

mod repo_slug {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::miner::RepoRef;

    pub fn serialize<S: Serializer>(repo: &RepoRef, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&repo.slug())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RepoRef, D::Error> {
        let slug = String::deserialize(d)?;
        RepoRef::from_slug(&slug).map_err(serde::de::Error::custom)
    }
}

pub fn snippet_id(code: &str, label: Label, category: VulnCategory) -> String {
    let mut hasher = Sha256::new();
    hasher.update(code.as_bytes());
    hasher.update([0u8, label.as_u8(), 0u8]);
    hasher.update(category.as_str().as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Pre-fix blocks become vulnerable snippets, post-fix blocks fixed ones.
/// Blocks that are empty once comments are removed are dropped.
pub fn label_snippets(
    pre_blocks: &[String],
    post_blocks: &[String],
    commit: &CommitRecord,
) -> Vec<LabeledSnippet> {
    let tagged = pre_blocks
        .iter()
        .map(|b| (b, Label::Vulnerable, Origin::Pre))
        .chain(post_blocks.iter().map(|b| (b, Label::Fixed, Origin::Post)));
    tagged
        .filter_map(|(block, label, origin)| {
            let code = strip_comments(block);
            if code.trim().is_empty() {
                return None;
            }
            Some(LabeledSnippet {
                id: snippet_id(&code, label, commit.category),
                repo: commit.repo.clone(),
                sha: commit.sha.to_string(),
                category: commit.category,
                label,
                origin,
                code,
            })
        })
        .collect()
}

/// Drops repeated ids (first occurrence wins) and every copy of code that
/// appears under both labels.
pub fn dedupe_snippets(snippets: Vec<LabeledSnippet>) -> Vec<LabeledSnippet> {
    let mut labels_by_code: HashMap<&str, HashSet<Label>> = HashMap::new();
    for s in &snippets {
        labels_by_code.entry(&s.code).or_default().insert(s.label);
    }
    let contradictory: HashSet<String> = labels_by_code
        .into_iter()
        .filter(|(_, labels)| labels.len() > 1)
        .map(|(code, _)| code.to_string())
        .collect();
    let mut seen = HashSet::new();
    snippets
        .into_iter()
        .filter(|s| !contradictory.contains(&s.code))
        .filter(|s| seen.insert(s.id.clone()))
        .collect()
}

/// Snippets of one commit: its Python diff is fetched, split per file, and
/// each file's pre-image is fetched so the post-image can be rebuilt.
pub fn label_commit(
    source: &dyn CommitSource,
    commit: &CommitRecord,
    context_radius: usize,
) -> Result<Vec<LabeledSnippet>, LabelError> {
    let diff_text = source.fetch_commit_diff(&commit.repo, &commit.sha)?;
    let hunks = parse_unified_diff(&diff_text)?;
    let mut files: Vec<(String, Vec<DiffHunk>)> = Vec::new();
    for hunk in hunks {
        let key = format!("{}\0{}", hunk.old_path, hunk.new_path);
        match files.iter_mut().find(|(k, _)| *k == key) {
            Some((_, group)) => group.push(hunk),
            None => files.push((key, vec![hunk])),
        }
    }
    let mut snippets = Vec::new();
    for (_, group) in files {
        let old_path = &group[0].old_path;
        let pre = if old_path == diff::DEV_NULL {
            String::new()
        } else {
            source
                .fetch_file_before(&commit.repo, &commit.sha, old_path)?
                .unwrap_or_default()
        };
        let post = if group[0].new_path == diff::DEV_NULL {
            String::new()
        } else {
            apply_hunks(&pre, &group)?
        };
        let (pre_blocks, post_blocks) = extract_changed_blocks(&pre, &post, &group, context_radius)?;
        snippets.extend(label_snippets(&pre_blocks, &post_blocks, commit));
    }
    Ok(snippets)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelRun {
    pub snippets: Vec<LabeledSnippet>,
    /// Snippet count before deduplication.
    pub raw_count: usize,
    /// Commits whose diff or files could not be processed.
    pub failed_commits: usize,
}

/// Labels every commit (in parallel, output in commit order) and dedupes.
pub fn label_commits(
    source: &dyn CommitSource,
    commits: &[CommitRecord],
    context_radius: usize,
) -> LabelRun {
    let per_commit: Vec<Option<Vec<LabeledSnippet>>> = commits
        .par_iter()
        .map(|commit| match label_commit(source, commit, context_radius) {
            Ok(snippets) => Some(snippets),
            Err(err) => {
                warn!("skipping {} {}: {err}", commit.repo.slug(), commit.sha);
                None
            }
        })
        .collect();
    let failed_commits = per_commit.iter().filter(|c| c.is_none()).count();
    let all: Vec<LabeledSnippet> = per_commit.into_iter().flatten().flatten().collect();
    let raw_count = all.len();
    LabelRun {
        snippets: dedupe_snippets(all),
        raw_count,
        failed_commits,
    }
}
