use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{CommitSha, CommitSource, KeywordTable, MineError, RawCommit, RepoRef};
use crate::labeler::filter_python_sections;

/// Replays commits recorded on disk.
///
/// Each commit is `<sha>.meta.json` (repo_host, repo_owner, repo_name, sha,
/// message, changed_paths) plus `<sha>.diff`. Pre-fix versions of changed files
/// live under `<sha>.before/<path>`; a missing file means it was added by the
/// commit. Commits are replayed in file name order.
#[derive(Clone, Debug)]
pub struct FixtureSource {
    dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    repo_host: String,
    repo_owner: String,
    repo_name: String,
    sha: String,
    message: String,
    changed_paths: Vec<String>,
}

impl FixtureSource {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, MineError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(MineError::Fixture {
                path: dir,
                message: "not a directory".into(),
            });
        }
        Ok(FixtureSource { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn meta_paths(&self) -> Result<Vec<PathBuf>, MineError> {
        let entries = fs::read_dir(&self.dir).map_err(|e| self.fixture_err(&self.dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| self.fixture_err(&self.dir, e))?.path();
            let is_meta = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".meta.json"));
            if is_meta {
                paths.push(path);
            }
        }
        paths.sort();
        Ok(paths)
    }

    fn fixture_err(&self, path: &Path, e: impl std::fmt::Display) -> MineError {
        MineError::Fixture {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    fn read_meta(&self, path: &Path) -> Result<RawCommit, MineError> {
        let text = fs::read_to_string(path).map_err(|e| self.fixture_err(path, e))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|e| self.fixture_err(path, e))?;
        let repo = RepoRef::new(&meta.repo_host, &meta.repo_owner, &meta.repo_name)
            .map_err(|e| self.fixture_err(path, e))?;
        let sha = CommitSha::parse(&meta.sha).map_err(|e| self.fixture_err(path, e))?;
        let expected = format!("{sha}.meta.json");
        if path.file_name().and_then(|n| n.to_str()) != Some(expected.as_str()) {
            return Err(self.fixture_err(path, format!("file name does not match sha {sha}")));
        }
        Ok(RawCommit {
            repo,
            sha,
            message: meta.message,
            changed_paths: meta.changed_paths,
        })
    }

    /// Recorded commits must belong to the repository asked about.
    fn check_known(&self, repo: &RepoRef, sha: &CommitSha) -> Result<(), MineError> {
        let meta = self.dir.join(format!("{sha}.meta.json"));
        if !meta.is_file() {
            return Err(MineError::NotFound(format!("{} {sha}", repo.slug())));
        }
        let raw = self.read_meta(&meta)?;
        if raw.repo != *repo {
            return Err(MineError::NotFound(format!("{} {sha}", repo.slug())));
        }
        Ok(())
    }
}

impl CommitSource for FixtureSource {
    fn raw_commits<'a>(
        &'a self,
        _table: &'a KeywordTable,
    ) -> Box<dyn Iterator<Item = Result<RawCommit, MineError>> + 'a> {
        match self.meta_paths() {
            Ok(paths) => Box::new(paths.into_iter().map(move |p| self.read_meta(&p))),
            Err(e) => Box::new(std::iter::once(Err(e))),
        }
    }

    fn fetch_commit_diff(&self, repo: &RepoRef, sha: &CommitSha) -> Result<String, MineError> {
        self.check_known(repo, sha)?;
        let path = self.dir.join(format!("{sha}.diff"));
        let text = fs::read_to_string(&path).map_err(|e| self.fixture_err(&path, e))?;
        Ok(filter_python_sections(&text))
    }

    fn fetch_file_before(
        &self,
        repo: &RepoRef,
        sha: &CommitSha,
        path: &str,
    ) -> Result<Option<String>, MineError> {
        self.check_known(repo, sha)?;
        if Path::new(path).components().any(|c| {
            !matches!(c, std::path::Component::Normal(_))
        }) {
            return Err(MineError::NotFound(format!("unsafe path {path:?}")));
        }
        let file = self.dir.join(format!("{sha}.before")).join(path);
        match fs::read_to_string(&file) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(self.fixture_err(&file, e)),
        }
    }
}
