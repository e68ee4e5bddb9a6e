//! Finding candidate vulnerability-fixing commits.
//!
//! A commit is a candidate when its message contains a security keyword and it
//! changes at least one `.py` file. Commits come from a [`CommitSource`]: the
//! GitHub REST API ([`GithubSource`]) or a recorded fixture directory
//! ([`FixtureSource`]).

mod fixture;
mod github;
mod keywords;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fixture::FixtureSource;
pub use github::{GithubConfig, GithubSource, TOKEN_ENV};
pub use keywords::{match_keywords, KeywordMatch, KeywordTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VulnCategory {
    SqlInjection,
    CommandInjection,
    Xss,
    Xsrf,
    RemoteCodeExecution,
    PathDisclosure,
}

impl VulnCategory {
    pub const ALL: [VulnCategory; 6] = [
        VulnCategory::SqlInjection,
        VulnCategory::CommandInjection,
        VulnCategory::Xss,
        VulnCategory::Xsrf,
        VulnCategory::RemoteCodeExecution,
        VulnCategory::PathDisclosure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VulnCategory::SqlInjection => "SqlInjection",
            VulnCategory::CommandInjection => "CommandInjection",
            VulnCategory::Xss => "Xss",
            VulnCategory::Xsrf => "Xsrf",
            VulnCategory::RemoteCodeExecution => "RemoteCodeExecution",
            VulnCategory::PathDisclosure => "PathDisclosure",
        }
    }
}

impl fmt::Display for VulnCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VulnCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown vulnerability category {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RepoRef {
    pub host: String,
    pub owner: String,
    pub name: String,
    pub clone_url: String,
}

impl RepoRef {
    pub fn new(host: &str, owner: &str, name: &str) -> Result<Self, String> {
        let valid = |part: &str| {
            !part.is_empty() && !part.contains(['/', ' ', '\t', '\n', '?', '#'])
        };
        if !valid(host) || !valid(owner) || !valid(name) {
            return Err(format!("invalid repository {host:?}/{owner:?}/{name:?}"));
        }
        Ok(RepoRef {
            host: host.to_string(),
            owner: owner.to_string(),
            name: name.to_string(),
            clone_url: format!("https://{host}/{owner}/{name}.git"),
        })
    }

    /// Panics on an empty or malformed owner/name.
    pub fn github(owner: &str, name: &str) -> Self {
        RepoRef::new("github.com", owner, name).expect("valid repository name")
    }

    /// `host/owner/name`
    pub fn slug(&self) -> String {
        format!("{}/{}/{}", self.host, self.owner, self.name)
    }

    pub fn from_slug(slug: &str) -> Result<Self, String> {
        match slug.split('/').collect::<Vec<_>>().as_slice() {
            [host, owner, name] => RepoRef::new(host, owner, name),
            _ => Err(format!("expected host/owner/name, got {slug:?}")),
        }
    }
}

/// A full 40-character lowercase hex commit id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CommitSha(String);

impl CommitSha {
    pub fn parse(text: &str) -> Result<Self, String> {
        let ok = text.len() == 40 && text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(CommitSha(text.to_string()))
        } else {
            Err(format!("not a 40-char lowercase hex sha: {text:?}"))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CommitSha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for CommitSha {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CommitSha::parse(&value)
    }
}

impl From<CommitSha> for String {
    fn from(sha: CommitSha) -> String {
        sha.0
    }
}

/// Commit metadata before keyword and path filtering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawCommit {
    pub repo: RepoRef,
    pub sha: CommitSha,
    pub message: String,
    pub changed_paths: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CommitRow", into = "CommitRow")]
pub struct CommitRecord {
    pub repo: RepoRef,
    pub sha: CommitSha,
    pub message: String,
    pub matched_keywords: Vec<String>,
    pub category: VulnCategory,
    pub changed_paths: Vec<String>,
}

impl CommitRecord {
    pub fn to_raw(&self) -> RawCommit {
        RawCommit {
            repo: self.repo.clone(),
            sha: self.sha.clone(),
            message: self.message.clone(),
            changed_paths: self.changed_paths.clone(),
        }
    }
}

/// The flat JSONL form of a [`CommitRecord`].
#[derive(Serialize, Deserialize)]
struct CommitRow {
    repo_host: String,
    repo_owner: String,
    repo_name: String,
    sha: CommitSha,
    message: String,
    matched_keywords: Vec<String>,
    category: VulnCategory,
    changed_paths: Vec<String>,
}

impl TryFrom<CommitRow> for CommitRecord {
    type Error = String;

    fn try_from(row: CommitRow) -> Result<Self, Self::Error> {
        Ok(CommitRecord {
            repo: RepoRef::new(&row.repo_host, &row.repo_owner, &row.repo_name)?,
            sha: row.sha,
            message: row.message,
            matched_keywords: row.matched_keywords,
            category: row.category,
            changed_paths: row.changed_paths,
        })
    }
}

impl From<CommitRecord> for CommitRow {
    fn from(r: CommitRecord) -> Self {
        CommitRow {
            repo_host: r.repo.host,
            repo_owner: r.repo.owner,
            repo_name: r.repo.name,
            sha: r.sha,
            message: r.message,
            matched_keywords: r.matched_keywords,
            category: r.category,
            changed_paths: r.changed_paths,
        }
    }
}

/// Keeps a commit iff its message matches the table and it touches a `.py` file.
pub fn accept_commit(raw: &RawCommit, table: &KeywordTable) -> Option<CommitRecord> {
    if !raw.changed_paths.iter().any(|p| p.ends_with(".py")) {
        return None;
    }
    let KeywordMatch { keywords, category } = match_keywords(&raw.message, table)?;
    Some(CommitRecord {
        repo: raw.repo.clone(),
        sha: raw.sha.clone(),
        message: raw.message.clone(),
        matched_keywords: keywords,
        category,
        changed_paths: raw.changed_paths.clone(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum MineError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid keyword table: {0}")]
    KeywordTable(String),
}

impl MineError {
    pub fn kind(&self) -> &'static str {
        match self {
            MineError::Auth(_) => "AuthError",
            MineError::Network(_) => "NetworkError",
            MineError::Fixture { .. } => "FixtureError",
            MineError::NotFound(_) => "NotFound",
            MineError::KeywordTable(_) => "KeywordTableError",
        }
    }
}

/// Where commits, diffs and pre-fix file contents come from.
pub trait CommitSource: Send + Sync {
    /// Candidate commits in a stable order, fetched lazily where possible.
    fn raw_commits<'a>(
        &'a self,
        table: &'a KeywordTable,
    ) -> Box<dyn Iterator<Item = Result<RawCommit, MineError>> + 'a>;

    /// The commit's unified diff, restricted to `.py` files.
    fn fetch_commit_diff(&self, repo: &RepoRef, sha: &CommitSha) -> Result<String, MineError>;

    /// A file as it was just before the commit; `None` if it did not exist.
    fn fetch_file_before(
        &self,
        repo: &RepoRef,
        sha: &CommitSha,
        path: &str,
    ) -> Result<Option<String>, MineError>;
}

/// Up to `limit` accepted commits in source order. Stops pulling from the
/// source as soon as the limit is reached.
pub fn search_candidate_commits(
    source: &dyn CommitSource,
    table: &KeywordTable,
    limit: usize,
) -> Result<Vec<CommitRecord>, MineError> {
    if table.is_empty() {
        return Err(MineError::KeywordTable("table is empty".into()));
    }
    let mut out = Vec::new();
    if limit == 0 {
        return Ok(out);
    }
    for raw in source.raw_commits(table) {
        if let Some(record) = accept_commit(&raw?, table) {
            out.push(record);
            if out.len() == limit {
                break;
            }
        }
    }
    Ok(out)
}

pub fn fetch_commit_diff(
    source: &dyn CommitSource,
    repo: &RepoRef,
    sha: &CommitSha,
) -> Result<String, MineError> {
    source.fetch_commit_diff(repo, sha)
}
