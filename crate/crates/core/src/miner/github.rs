use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Deserialize;
use ureq::Agent;

use super::{match_keywords, CommitSha, CommitSource, KeywordTable, MineError, RawCommit, RepoRef};
use crate::labeler::filter_python_sections;

pub const TOKEN_ENV: &str = "VULNLAB_API_TOKEN";

const PER_PAGE: usize = 100;
/// The search API stops at 1000 results per query.
const MAX_PAGES: usize = 10;

#[derive(Clone, Debug)]
pub struct GithubConfig {
    pub api_base: String,
    pub token: String,
    pub requests_per_sec: f64,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl GithubConfig {
    /// Defaults for api.github.com with the token taken from `VULNLAB_API_TOKEN`.
    pub fn from_env() -> Result<Self, MineError> {
        match std::env::var(TOKEN_ENV) {
            Ok(token) if !token.trim().is_empty() => Ok(GithubConfig::with_token(token.trim())),
            _ => Err(MineError::Auth(format!("{TOKEN_ENV} is not set"))),
        }
    }

    pub fn with_token(token: &str) -> Self {
        GithubConfig {
            api_base: "https://api.github.com".into(),
            token: token.into(),
            requests_per_sec: 1.0,
            max_retries: 5,
            initial_backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(30),
        }
    }
}

/// Single-token bucket: at most `rate` requests per second.
struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(rate: f64) -> Self {
        let interval = if rate > 0.0 {
            Duration::from_secs_f64(1.0 / rate)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Live mining through the GitHub REST API: commit search per keyword, then
/// per-commit details, diffs and pre-fix file contents.
pub struct GithubSource {
    config: GithubConfig,
    agent: Agent,
    limiter: RateLimiter,
    parents: Mutex<HashMap<(RepoRef, CommitSha), Option<String>>>,
}

#[derive(Deserialize)]
struct SearchPage {
    items: Vec<SearchItem>,
}

#[derive(Deserialize)]
struct SearchItem {
    sha: String,
    commit: SearchCommit,
    repository: SearchRepo,
}

#[derive(Deserialize)]
struct SearchCommit {
    message: String,
}

#[derive(Deserialize)]
struct SearchRepo {
    name: String,
    owner: SearchOwner,
}

#[derive(Deserialize)]
struct SearchOwner {
    login: String,
}

#[derive(Deserialize)]
struct CommitDetail {
    #[serde(default)]
    files: Vec<CommitFile>,
    #[serde(default)]
    parents: Vec<ParentRef>,
}

#[derive(Deserialize)]
struct CommitFile {
    filename: String,
}

#[derive(Deserialize)]
struct ParentRef {
    sha: String,
}

/// Percent-encodes a repository path, keeping `/` separators.
fn encode_path(path: &str) -> String {
    let mut out = String::with_capacity(path.len());
    for b in path.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' | b'/' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

impl GithubSource {
    pub fn new(config: GithubConfig) -> Result<Self, MineError> {
        if config.token.trim().is_empty() {
            return Err(MineError::Auth("empty API token".into()));
        }
        let agent = Agent::new_with_config(
            Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(config.timeout))
                .user_agent("vulnlab")
                .build(),
        );
        Ok(GithubSource {
            limiter: RateLimiter::new(config.requests_per_sec),
            agent,
            config,
            parents: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_env() -> Result<Self, MineError> {
        GithubSource::new(GithubConfig::from_env()?)
    }

    /// GET with rate limiting and exponential backoff on 403/429. Returns
    /// `None` on 404.
    fn get(&self, path: &str, query: &[(&str, String)], accept: &str) -> Result<Option<String>, MineError> {
        let url = format!("{}{}", self.config.api_base.trim_end_matches('/'), path);
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            self.limiter.acquire();
            let mut request = self
                .agent
                .get(&url)
                .header("Authorization", &format!("Bearer {}", self.config.token))
                .header("Accept", accept)
                .header("X-GitHub-Api-Version", "2022-11-28");
            for (k, v) in query {
                request = request.query(*k, v);
            }
            debug!("GET {url}");
            let outcome = match request.call() {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    match status {
                        200..=299 => {
                            let body = response
                                .body_mut()
                                .read_to_string()
                                .map_err(|e| MineError::Network(format!("{url}: {e}")))?;
                            return Ok(Some(body));
                        }
                        401 => return Err(MineError::Auth(format!("{url}: HTTP 401"))),
                        404 | 422 => return Ok(None),
                        403 | 429 => format!("HTTP {status}"),
                        _ => return Err(MineError::Network(format!("{url}: HTTP {status}"))),
                    }
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.config.max_retries {
                return Err(MineError::Network(format!(
                    "{url}: {outcome} after {attempt} retries"
                )));
            }
            warn!("{url}: {outcome}, retrying in {backoff:?}");
            thread::sleep(backoff);
            backoff *= 2;
            attempt += 1;
        }
    }

    fn search_page(&self, pattern: &str, page: usize) -> Result<Vec<SearchItem>, MineError> {
        let query = [
            ("q", format!("\"{pattern}\"")),
            ("per_page", PER_PAGE.to_string()),
            ("page", page.to_string()),
        ];
        let Some(body) = self.get("/search/commits", &query, "application/vnd.github+json")? else {
            return Ok(Vec::new());
        };
        let parsed: SearchPage =
            serde_json::from_str(&body).map_err(|e| MineError::Network(format!("bad search response: {e}")))?;
        Ok(parsed.items)
    }

    fn commit_path(repo: &RepoRef, sha: &CommitSha) -> String {
        format!("/repos/{}/{}/commits/{sha}", repo.owner, repo.name)
    }

    fn commit_detail(&self, repo: &RepoRef, sha: &CommitSha) -> Result<CommitDetail, MineError> {
        let body = self
            .get(&Self::commit_path(repo, sha), &[], "application/vnd.github+json")?
            .ok_or_else(|| MineError::NotFound(format!("{} {sha}", repo.slug())))?;
        let detail: CommitDetail =
            serde_json::from_str(&body).map_err(|e| MineError::Network(format!("bad commit response: {e}")))?;
        self.parents.lock().unwrap().insert(
            (repo.clone(), sha.clone()),
            detail.parents.first().map(|p| p.sha.clone()),
        );
        Ok(detail)
    }

    fn parent_of(&self, repo: &RepoRef, sha: &CommitSha) -> Result<Option<String>, MineError> {
        let cached = self.parents.lock().unwrap().get(&(repo.clone(), sha.clone())).cloned();
        match cached {
            Some(parent) => Ok(parent),
            None => Ok(self.commit_detail(repo, sha)?.parents.first().map(|p| p.sha.clone())),
        }
    }
}

/// Lazily walks search results: keyword by keyword, page by page.
struct SearchWalk<'a> {
    source: &'a GithubSource,
    table: &'a KeywordTable,
    pattern_idx: usize,
    page: usize,
    buffer: VecDeque<SearchItem>,
    seen: HashSet<(String, String, String)>,
    failed: bool,
}

impl SearchWalk<'_> {
    fn next_item(&mut self) -> Option<Result<SearchItem, MineError>> {
        loop {
            if let Some(item) = self.buffer.pop_front() {
                return Some(Ok(item));
            }
            let (pattern, _) = self.table.entries().get(self.pattern_idx)?;
            self.page += 1;
            match self.source.search_page(pattern, self.page) {
                Ok(items) => {
                    if items.len() < PER_PAGE || self.page >= MAX_PAGES {
                        self.pattern_idx += 1;
                        self.page = 0;
                    }
                    self.buffer.extend(items);
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

impl Iterator for SearchWalk<'_> {
    type Item = Result<RawCommit, MineError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let item = match self.next_item()? {
                Ok(item) => item,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            };
            let key = (item.repository.owner.login.clone(), item.repository.name.clone(), item.sha.clone());
            if !self.seen.insert(key) || match_keywords(&item.commit.message, self.table).is_none() {
                continue;
            }
            let (Ok(repo), Ok(sha)) = (
                RepoRef::new("github.com", &item.repository.owner.login, &item.repository.name),
                CommitSha::parse(&item.sha),
            ) else {
                warn!("skipping malformed search item {}", item.sha);
                continue;
            };
            return Some(match self.source.commit_detail(&repo, &sha) {
                Ok(detail) => Ok(RawCommit {
                    repo,
                    sha,
                    message: item.commit.message,
                    changed_paths: detail.files.into_iter().map(|f| f.filename).collect(),
                }),
                Err(MineError::NotFound(what)) => {
                    warn!("commit vanished: {what}");
                    continue;
                }
                Err(e) => {
                    self.failed = true;
                    Err(e)
                }
            });
        }
    }
}

impl CommitSource for GithubSource {
    fn raw_commits<'a>(
        &'a self,
        table: &'a KeywordTable,
    ) -> Box<dyn Iterator<Item = Result<RawCommit, MineError>> + 'a> {
        Box::new(SearchWalk {
            source: self,
            table,
            pattern_idx: 0,
            page: 0,
            buffer: VecDeque::new(),
            seen: HashSet::new(),
            failed: false,
        })
    }

    fn fetch_commit_diff(&self, repo: &RepoRef, sha: &CommitSha) -> Result<String, MineError> {
        let diff = self
            .get(&Self::commit_path(repo, sha), &[], "application/vnd.github.diff")?
            .ok_or_else(|| MineError::NotFound(format!("{} {sha}", repo.slug())))?;
        Ok(filter_python_sections(&diff))
    }

    fn fetch_file_before(
        &self,
        repo: &RepoRef,
        sha: &CommitSha,
        path: &str,
    ) -> Result<Option<String>, MineError> {
        let Some(parent) = self.parent_of(repo, sha)? else {
            return Ok(None);
        };
        let url = format!("/repos/{}/{}/contents/{}", repo.owner, repo.name, encode_path(path));
        self.get(&url, &[("ref", parent)], "application/vnd.github.raw")
    }
}
