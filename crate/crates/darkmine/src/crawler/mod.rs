//! Focused site traversal: depth-bounded breadth-first crawling through a
//! pluggable fetcher with politeness, loop detection, retry with backoff,
//! and parser-driven re-crawl.

mod clock;
mod fetch;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::datamodel::RecordKind;
use crate::error::{Error, Result};

pub use clock::{Clock, FakeClock, FixedClock, SystemClock};
pub use fetch::{FetchOutcome, Fetcher, FixtureFetcher, HttpFetcher, ScriptedFetcher};

/// Declarative per-site crawl settings, read from a JSON config file whose
/// keys match these field names. URL patterns are regular expressions; an
/// empty allow list admits every URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteConfig {
    pub site_id: String,
    pub kind: RecordKind,
    pub seed_urls: Vec<String>,
    #[serde(default)]
    pub allow_patterns: Vec<String>,
    #[serde(default)]
    pub deny_patterns: Vec<String>,
    pub max_depth: u32,
    #[serde(default)]
    pub politeness_delay_ms: u64,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
    /// Static headers sent with every request (session cookies, user agent).
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    /// Concurrent fetch workers; 1 forces the deterministic sequential path.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_backoff() -> u64 {
    100
}

fn default_workers() -> usize {
    1
}

impl SiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed_urls.is_empty() {
            return Err(Error::Config(format!("site `{}`: seed_urls is empty", self.site_id)));
        }
        if self.max_depth < 1 {
            return Err(Error::Config(format!("site `{}`: max_depth must be >= 1", self.site_id)));
        }
        if self.retry_backoff_ms == 0 {
            return Err(Error::Config(format!(
                "site `{}`: retry_backoff_ms must be positive",
                self.site_id
            )));
        }
        let patterns = SitePatterns::compile(self)?;
        for seed in &self.seed_urls {
            canonicalize(seed)
                .map_err(|e| Error::Config(format!("site `{}`: seed {seed}: {e}", self.site_id)))?;
            if !patterns.allowed(seed) {
                return Err(Error::Config(format!(
                    "site `{}`: seed {seed} matches no allow_pattern",
                    self.site_id
                )));
            }
        }
        Ok(())
    }
}

pub fn load_site_config(path: impl AsRef<Path>) -> Result<SiteConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let config: SiteConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
    config.validate()?;
    Ok(config)
}

/// Compiled allow/deny regexes for one site.
pub struct SitePatterns {
    allow: Vec<Regex>,
    deny: Vec<Regex>,
}

impl SitePatterns {
    pub fn compile(config: &SiteConfig) -> Result<Self> {
        let build = |patterns: &[String]| -> Result<Vec<Regex>> {
            patterns
                .iter()
                .map(|p| {
                    Regex::new(p).map_err(|e| {
                        Error::Config(format!("site `{}`: bad pattern `{p}`: {e}", config.site_id))
                    })
                })
                .collect()
        };
        Ok(SitePatterns { allow: build(&config.allow_patterns)?, deny: build(&config.deny_patterns)? })
    }

    pub fn allowed(&self, url: &str) -> bool {
        (self.allow.is_empty() || self.allow.iter().any(|re| re.is_match(url)))
            && !self.deny.iter().any(|re| re.is_match(url))
    }
}

/// Canonical URL fingerprint: lowercased scheme/host, default port dropped,
/// fragment dropped, query parameters sorted by key, one trailing slash
/// stripped from non-root paths.
pub fn canonicalize(url: &str) -> Result<String> {
    let mut parsed = url::Url::parse(url)
        .map_err(|e| Error::InvalidInput(format!("malformed url `{url}`: {e}")))?;
    if !parsed.has_host() {
        return Err(Error::InvalidInput(format!("url `{url}` has no host")));
    }
    parsed.set_fragment(None);
    let query = parsed.query().map(|q| q.to_string());
    match query.as_deref() {
        None | Some("") => parsed.set_query(None),
        Some(q) => {
            let mut pairs: Vec<(String, String)> = q
                .split('&')
                .map(|kv| match kv.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => (kv.to_string(), String::new()),
                })
                .collect();
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            let rebuilt: Vec<String> = pairs
                .into_iter()
                .map(|(k, v)| if v.is_empty() { k } else { format!("{k}={v}") })
                .collect();
            parsed.set_query(Some(&rebuilt.join("&")));
        }
    }
    let path = parsed.path().to_string();
    if path.len() > 1 && path.ends_with('/') {
        parsed.set_path(path.trim_end_matches('/'));
    }
    Ok(parsed.to_string())
}

/// Pending queue plus the visited-fingerprint set that provides loop
/// detection: a fingerprint is never enqueued twice.
#[derive(Debug, Default)]
pub struct Frontier {
    pending: VecDeque<(String, u32)>,
    visited: HashSet<String>,
}

impl Frontier {
    pub fn new() -> Self {
        Frontier::default()
    }

    pub fn seen(&self, fingerprint: &str) -> bool {
        self.visited.contains(fingerprint)
    }

    /// Enqueue a URL the caller has already vetted with `should_visit`.
    pub fn enqueue(&mut self, url: &str, depth: u32) -> Result<()> {
        let fingerprint = canonicalize(url)?;
        if self.visited.insert(fingerprint.clone()) {
            self.pending.push_back((fingerprint, depth));
        }
        Ok(())
    }

    pub fn next_pending(&mut self) -> Option<(String, u32)> {
        self.pending.pop_front()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }
}

/// True iff the URL's fingerprint is unseen, the depth is within bounds,
/// and the URL passes the allow/deny patterns.
pub fn should_visit(
    frontier: &Frontier,
    patterns: &SitePatterns,
    config: &SiteConfig,
    url: &str,
    depth: u32,
) -> Result<bool> {
    let fingerprint = canonicalize(url)?;
    Ok(!frontier.seen(&fingerprint) && depth <= config.max_depth && patterns.allowed(url))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FetchStatus {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "RETRYABLE_FAILURE")]
    RetryableFailure,
    #[serde(rename = "PERMANENT_FAILURE")]
    PermanentFailure,
}

/// Result of fetching one URL through the retry loop. `fetched_at` is the
/// start time of the final attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchResult {
    pub url: String,
    pub status: FetchStatus,
    pub body: Option<Vec<u8>>,
    pub fetched_at: DateTime<Utc>,
    pub attempts: u32,
}

/// Fetch with up to `max_retries` retries on transient failures, sleeping
/// retry_backoff_ms × 2^(attempt−1) between attempts. Failures come back as
/// data in the result status.
pub fn fetch_with_retry(
    fetcher: &dyn Fetcher,
    url: &str,
    config: &SiteConfig,
    clock: &dyn Clock,
) -> FetchResult {
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let started = clock.now();
        match fetcher.fetch(url, &config.headers) {
            FetchOutcome::Success(body) => {
                return FetchResult {
                    url: url.to_string(),
                    status: FetchStatus::Ok,
                    body: Some(body),
                    fetched_at: started,
                    attempts,
                }
            }
            FetchOutcome::Permanent(_) => {
                return FetchResult {
                    url: url.to_string(),
                    status: FetchStatus::PermanentFailure,
                    body: None,
                    fetched_at: started,
                    attempts,
                }
            }
            FetchOutcome::Retryable(_) => {
                if attempts > config.max_retries {
                    return FetchResult {
                        url: url.to_string(),
                        status: FetchStatus::PermanentFailure,
                        body: None,
                        fetched_at: started,
                        attempts,
                    };
                }
                let backoff = config.retry_backoff_ms.saturating_mul(1 << (attempts - 1));
                clock.sleep(Duration::from_millis(backoff));
            }
        }
    }
}

/// One line of the crawl summary NDJSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchLogEntry {
    pub url: String,
    pub status: FetchStatus,
    pub attempts: u32,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchedPage {
    pub url: String,
    pub body: Vec<u8>,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrawlSummary {
    pub entries: Vec<FetchLogEntry>,
    /// Set when every seed fetch failed, so nothing was crawled.
    pub all_seeds_failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlOutput {
    pub pages: Vec<FetchedPage>,
    pub summary: CrawlSummary,
}

/// Per-host politeness gate: at most one in-flight request per host, and
/// successive request starts at least `politeness_delay_ms` apart.
struct HostGate {
    state: Mutex<HashMap<String, (bool, DateTime<Utc>)>>,
    delay: chrono::Duration,
}

impl HostGate {
    fn new(delay_ms: u64) -> Self {
        HostGate {
            state: Mutex::new(HashMap::new()),
            delay: chrono::Duration::milliseconds(delay_ms as i64),
        }
    }

    fn acquire(&self, host: &str, clock: &dyn Clock) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let entry = state
                    .entry(host.to_string())
                    .or_insert((false, DateTime::<Utc>::MIN_UTC));
                if entry.0 {
                    Some(Duration::from_millis(1))
                } else {
                    let now = clock.now();
                    if now < entry.1 {
                        Some((entry.1 - now).to_std().unwrap_or(Duration::from_millis(1)))
                    } else {
                        entry.0 = true;
                        None
                    }
                }
            };
            match wait {
                Some(d) => clock.sleep(d),
                None => return,
            }
        }
    }

    fn release(&self, host: &str, last_attempt_start: DateTime<Utc>) {
        let mut state = self.state.lock().unwrap();
        if let Some(entry) = state.get_mut(host) {
            entry.0 = false;
            entry.1 = last_attempt_start + self.delay;
        }
    }
}

fn host_of(url: &str) -> String {
    url::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(|h| h.to_string()))
        .unwrap_or_default()
}

fn polite_fetch(
    fetcher: &dyn Fetcher,
    url: &str,
    config: &SiteConfig,
    clock: &dyn Clock,
    gate: &HostGate,
) -> FetchResult {
    let host = host_of(url);
    gate.acquire(&host, clock);
    let result = fetch_with_retry(fetcher, url, config, clock);
    gate.release(&host, result.fetched_at);
    result
}

/// Breadth-first crawl from the seeds. Children are enqueued only when
/// `should_visit` passes, so cyclic link graphs terminate and each canonical
/// URL is fetched at most once per crawl. With `workers > 1` each BFS wave
/// is fetched by a worker pool and results arrive in completion order.
pub fn crawl_site(
    config: &SiteConfig,
    fetcher: &dyn Fetcher,
    link_extractor: &(dyn Fn(&str, &[u8]) -> Vec<String> + Sync),
    clock: &dyn Clock,
) -> Result<CrawlOutput> {
    config.validate()?;
    let patterns = SitePatterns::compile(config)?;
    let gate = HostGate::new(config.politeness_delay_ms);

    let mut frontier = Frontier::new();
    let mut seed_fingerprints = HashSet::new();
    for seed in &config.seed_urls {
        frontier.enqueue(seed, 1)?;
        seed_fingerprints.insert(canonicalize(seed)?);
    }

    let mut pages = Vec::new();
    let mut entries = Vec::new();
    let mut any_seed_ok = false;

    let mut wave: Vec<(String, u32)> = std::iter::from_fn(|| frontier.next_pending()).collect();
    while !wave.is_empty() {
        let results: Vec<(FetchResult, u32)> = if config.workers <= 1 {
            wave.iter()
                .map(|(url, depth)| (polite_fetch(fetcher, url, config, clock, &gate), *depth))
                .collect()
        } else {
            let cursor = AtomicUsize::new(0);
            let collected: Mutex<Vec<(FetchResult, u32)>> = Mutex::new(Vec::new());
            std::thread::scope(|scope| {
                for _ in 0..config.workers.min(wave.len()) {
                    scope.spawn(|| loop {
                        let i = cursor.fetch_add(1, Ordering::SeqCst);
                        if i >= wave.len() {
                            break;
                        }
                        let (url, depth) = &wave[i];
                        let result = polite_fetch(fetcher, url, config, clock, &gate);
                        collected.lock().unwrap().push((result, *depth));
                    });
                }
            });
            collected.into_inner().unwrap()
        };

        for (result, depth) in &results {
            entries.push(FetchLogEntry {
                url: result.url.clone(),
                status: result.status,
                attempts: result.attempts,
                fetched_at: result.fetched_at,
            });
            if result.status == FetchStatus::Ok {
                if seed_fingerprints.contains(&result.url) {
                    any_seed_ok = true;
                }
                let body = result.body.clone().unwrap_or_default();
                for link in link_extractor(&result.url, &body) {
                    if should_visit(&frontier, &patterns, config, &link, depth + 1).unwrap_or(false)
                    {
                        frontier.enqueue(&link, depth + 1)?;
                    }
                }
                pages.push(FetchedPage {
                    url: result.url.clone(),
                    body,
                    fetched_at: result.fetched_at,
                });
            }
        }
        wave = std::iter::from_fn(|| frontier.next_pending()).collect();
    }

    Ok(CrawlOutput {
        pages,
        summary: CrawlSummary { entries, all_seeds_failed: !any_seed_ok },
    })
}

/// Fetch exactly the given URLs for temporal re-sampling: no frontier
/// expansion, the visited set is bypassed (a URL listed twice is fetched
/// twice), politeness and retry still apply.
pub fn recrawl(
    urls: &[String],
    config: &SiteConfig,
    fetcher: &dyn Fetcher,
    clock: &dyn Clock,
) -> Result<Vec<FetchResult>> {
    if urls.is_empty() {
        return Err(Error::InvalidInput("recrawl needs at least one url".into()));
    }
    let gate = HostGate::new(config.politeness_delay_ms);
    Ok(urls
        .iter()
        .map(|url| {
            let canonical = canonicalize(url).unwrap_or_else(|_| url.clone());
            polite_fetch(fetcher, &canonical, config, clock, &gate)
        })
        .collect())
}

/// Write the crawl summary as NDJSON, one line per fetch.
pub fn write_summary(summary: &CrawlSummary, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for entry in &summary.entries {
        out.push_str(&serde_json::to_string(entry).expect("summary entry serializes"));
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn start_time() -> DateTime<Utc> {
        Utc.timestamp_opt(1_600_000_000, 0).unwrap()
    }

    fn config(seeds: &[&str]) -> SiteConfig {
        SiteConfig {
            site_id: "test".to_string(),
            kind: RecordKind::Market,
            seed_urls: seeds.iter().map(|s| s.to_string()).collect(),
            allow_patterns: vec![],
            deny_patterns: vec![],
            max_depth: 5,
            politeness_delay_ms: 0,
            max_retries: 0,
            retry_backoff_ms: 10,
            headers: BTreeMap::new(),
            workers: 1,
        }
    }

    #[test]
    fn canonicalize_sorts_query_and_lowercases() {
        assert_eq!(
            canonicalize("HTTP://Site.onion/a?b=2&a=1#x").unwrap(),
            "http://site.onion/a?a=1&b=2"
        );
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let once = canonicalize("http://example.com:80/path/?z=1&y=2#frag").unwrap();
        assert_eq!(canonicalize(&once).unwrap(), once);
        assert_eq!(once, "http://example.com/path?y=2&z=1");
    }

    #[test]
    fn canonicalize_rejects_garbage() {
        assert!(canonicalize("not a url").is_err());
        assert!(canonicalize("/relative/only").is_err());
    }

    #[test]
    fn canonicalize_trailing_slash_and_root() {
        assert_eq!(canonicalize("http://h/p/").unwrap(), "http://h/p");
        assert_eq!(canonicalize("http://h").unwrap(), "http://h/");
        assert_eq!(canonicalize("http://h/").unwrap(), "http://h/");
    }

    #[test]
    fn should_visit_guards() {
        let cfg = config(&["http://s/"]);
        let patterns = SitePatterns::compile(&cfg).unwrap();
        let mut frontier = Frontier::new();
        assert!(should_visit(&frontier, &patterns, &cfg, "http://s/a", 1).unwrap());
        frontier.enqueue("http://s/a", 1).unwrap();
        assert!(!should_visit(&frontier, &patterns, &cfg, "http://s/a", 1).unwrap());
        assert!(!should_visit(&frontier, &patterns, &cfg, "http://s/b", 6).unwrap());

        let mut deny_cfg = config(&["http://s/"]);
        deny_cfg.deny_patterns = vec!["logout".to_string()];
        let deny_patterns = SitePatterns::compile(&deny_cfg).unwrap();
        assert!(!should_visit(&frontier, &deny_patterns, &deny_cfg, "http://s/logout", 1).unwrap());
    }

    #[test]
    fn seed_must_match_allow_pattern() {
        let mut cfg = config(&["http://other.example/"]);
        cfg.allow_patterns = vec!["^http://s/".to_string()];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn retry_then_success_counts_attempts() {
        let fetcher = ScriptedFetcher::new().script(
            "http://s/a",
            vec![
                FetchOutcome::Retryable("x".to_string()),
                FetchOutcome::Retryable("x".to_string()),
                FetchOutcome::Success(b"ok".to_vec()),
            ],
        );
        let mut cfg = config(&["http://s/a"]);
        cfg.max_retries = 3;
        let clock = FakeClock::new(start_time());
        let result = fetch_with_retry(&fetcher, "http://s/a", &cfg, &clock);
        assert_eq!(result.status, FetchStatus::Ok);
        assert_eq!(result.attempts, 3);
        assert_eq!(result.body.as_deref(), Some(b"ok".as_slice()));
    }

    #[test]
    fn no_retries_means_one_attempt() {
        let fetcher = ScriptedFetcher::new()
            .script("http://s/a", vec![FetchOutcome::Retryable("x".to_string())]);
        let cfg = config(&["http://s/a"]);
        let clock = FakeClock::new(start_time());
        let result = fetch_with_retry(&fetcher, "http://s/a", &cfg, &clock);
        assert_eq!(result.status, FetchStatus::PermanentFailure);
        assert_eq!(result.attempts, 1);
        assert!(result.body.is_none());
    }

    #[test]
    fn permanent_failure_skips_retries() {
        let fetcher = ScriptedFetcher::new().script(
            "http://s/a",
            vec![
                FetchOutcome::Permanent("404".to_string()),
                FetchOutcome::Success(b"never".to_vec()),
            ],
        );
        let mut cfg = config(&["http://s/a"]);
        cfg.max_retries = 5;
        let clock = FakeClock::new(start_time());
        let result = fetch_with_retry(&fetcher, "http://s/a", &cfg, &clock);
        assert_eq!(result.status, FetchStatus::PermanentFailure);
        assert_eq!(result.attempts, 1);
    }

    #[test]
    fn backoff_doubles_per_retry() {
        let fetcher = ScriptedFetcher::new().script(
            "http://s/a",
            vec![
                FetchOutcome::Retryable("x".to_string()),
                FetchOutcome::Retryable("x".to_string()),
                FetchOutcome::Success(b"ok".to_vec()),
            ],
        );
        let mut cfg = config(&["http://s/a"]);
        cfg.max_retries = 3;
        cfg.retry_backoff_ms = 100;
        let clock = FakeClock::new(start_time());
        let result = fetch_with_retry(&fetcher, "http://s/a", &cfg, &clock);
        // Sleeps: 100ms then 200ms; final attempt starts 300ms in.
        assert_eq!(result.fetched_at, start_time() + chrono::Duration::milliseconds(300));
    }

    fn link_map(links: &[(&str, &[&str])]) -> impl Fn(&str, &[u8]) -> Vec<String> + Sync {
        let map: HashMap<String, Vec<String>> = links
            .iter()
            .map(|(from, tos)| {
                (
                    canonicalize(from).unwrap(),
                    tos.iter().map(|t| t.to_string()).collect(),
                )
            })
            .collect();
        move |url: &str, _body: &[u8]| map.get(url).cloned().unwrap_or_default()
    }

    fn page_fetcher(urls: &[&str]) -> ScriptedFetcher {
        let mut fetcher = ScriptedFetcher::new();
        for url in urls {
            fetcher = fetcher.script(url, vec![FetchOutcome::Success(b"<html></html>".to_vec())]);
        }
        fetcher
    }

    #[test]
    fn cyclic_graph_terminates_with_exactly_three_fetches() {
        let fetcher = page_fetcher(&["http://s/a", "http://s/b", "http://s/c"]);
        let extractor = link_map(&[
            ("http://s/a", &["http://s/b"]),
            ("http://s/b", &["http://s/c"]),
            ("http://s/c", &["http://s/a"]),
        ]);
        let cfg = config(&["http://s/a"]);
        let clock = FakeClock::new(start_time());
        let output = crawl_site(&cfg, &fetcher, &extractor, &clock).unwrap();
        assert_eq!(output.pages.len(), 3);
        assert_eq!(output.summary.entries.len(), 3);
        let mut urls: Vec<&str> = output.pages.iter().map(|p| p.url.as_str()).collect();
        urls.sort();
        assert_eq!(urls, vec!["http://s/a", "http://s/b", "http://s/c"]);
    }

    #[test]
    fn max_depth_one_fetches_only_seeds() {
        let fetcher = page_fetcher(&["http://s/a", "http://s/b"]);
        let extractor = link_map(&[("http://s/a", &["http://s/child"])]);
        let mut cfg = config(&["http://s/a", "http://s/b"]);
        cfg.max_depth = 1;
        let clock = FakeClock::new(start_time());
        let output = crawl_site(&cfg, &fetcher, &extractor, &clock).unwrap();
        assert_eq!(output.pages.len(), 2);
    }

    #[test]
    fn star_fixture_fetches_eleven_pages() {
        let children: Vec<String> = (0..10).map(|i| format!("http://s/c{i}")).collect();
        let mut all: Vec<&str> = vec!["http://s/hub"];
        all.extend(children.iter().map(|s| s.as_str()));
        let fetcher = page_fetcher(&all);
        let child_refs: Vec<&str> = children.iter().map(|s| s.as_str()).collect();
        let extractor = link_map(&[("http://s/hub", &child_refs[..])]);
        let cfg = config(&["http://s/hub"]);
        let clock = FakeClock::new(start_time());
        let output = crawl_site(&cfg, &fetcher, &extractor, &clock).unwrap();
        assert_eq!(output.pages.len(), 11);
        assert!(!output.summary.all_seeds_failed);
    }

    #[test]
    fn all_seeds_failing_is_flagged() {
        let fetcher = ScriptedFetcher::new();
        let extractor = link_map(&[]);
        let cfg = config(&["http://s/a", "http://s/b"]);
        let clock = FakeClock::new(start_time());
        let output = crawl_site(&cfg, &fetcher, &extractor, &clock).unwrap();
        assert!(output.pages.is_empty());
        assert!(output.summary.all_seeds_failed);
        assert_eq!(output.summary.entries.len(), 2);
    }

    #[test]
    fn no_url_fetched_twice_even_with_workers() {
        let children: Vec<String> = (0..10).map(|i| format!("http://s/c{i}")).collect();
        let mut all: Vec<&str> = vec!["http://s/hub"];
        all.extend(children.iter().map(|s| s.as_str()));
        let fetcher = page_fetcher(&all);
        let child_refs: Vec<&str> = children.iter().map(|s| s.as_str()).collect();
        // Every child links back to the hub and to every other child.
        let mut links: Vec<(&str, &[&str])> = vec![("http://s/hub", &child_refs[..])];
        let hub_and_children: Vec<&str> = all.clone();
        for child in &child_refs {
            links.push((child, &hub_and_children[..]));
        }
        let extractor = link_map(&links);
        let mut cfg = config(&["http://s/hub"]);
        cfg.workers = 3;
        let clock = FakeClock::new(start_time());
        let output = crawl_site(&cfg, &fetcher, &extractor, &clock).unwrap();
        let mut urls: Vec<&str> = output.summary.entries.iter().map(|e| e.url.as_str()).collect();
        urls.sort();
        let mut deduped = urls.clone();
        deduped.dedup();
        assert_eq!(urls, deduped, "a canonical URL was fetched twice");
        assert_eq!(output.pages.len(), 11);
    }

    #[test]
    fn politeness_gap_is_respected_under_fake_clock() {
        struct Recording<'a> {
            inner: &'a ScriptedFetcher,
            clock: &'a FakeClock,
            log: Mutex<Vec<DateTime<Utc>>>,
        }
        impl Fetcher for Recording<'_> {
            fn fetch(&self, url: &str, headers: &BTreeMap<String, String>) -> FetchOutcome {
                self.log.lock().unwrap().push(self.clock.now());
                self.inner.fetch(url, headers)
            }
        }

        let inner = page_fetcher(&["http://s/a", "http://s/b", "http://s/c"]);
        let clock = FakeClock::new(start_time());
        let fetcher = Recording { inner: &inner, clock: &clock, log: Mutex::new(Vec::new()) };
        let extractor = link_map(&[("http://s/a", &["http://s/b", "http://s/c"])]);
        let mut cfg = config(&["http://s/a"]);
        cfg.politeness_delay_ms = 250;
        crawl_site(&cfg, &fetcher, &extractor, &clock).unwrap();

        let log = fetcher.log.lock().unwrap();
        assert_eq!(log.len(), 3);
        for pair in log.windows(2) {
            let gap = pair[1] - pair[0];
            assert!(
                gap >= chrono::Duration::milliseconds(250),
                "gap {gap} below politeness delay"
            );
        }
    }

    #[test]
    fn multi_worker_crawl_keeps_per_host_politeness() {
        struct Recording<'a> {
            inner: ScriptedFetcher,
            clock: &'a FakeClock,
            log: Mutex<Vec<DateTime<Utc>>>,
        }
        impl Fetcher for Recording<'_> {
            fn fetch(&self, url: &str, headers: &BTreeMap<String, String>) -> FetchOutcome {
                self.log.lock().unwrap().push(self.clock.now());
                self.inner.fetch(url, headers)
            }
        }

        let children: Vec<String> = (0..8).map(|i| format!("http://s/c{i}")).collect();
        let mut all: Vec<&str> = vec!["http://s/hub"];
        all.extend(children.iter().map(|s| s.as_str()));
        let clock = FakeClock::new(start_time());
        let fetcher = Recording {
            inner: page_fetcher(&all),
            clock: &clock,
            log: Mutex::new(Vec::new()),
        };
        let child_refs: Vec<&str> = children.iter().map(|s| s.as_str()).collect();
        let extractor = link_map(&[("http://s/hub", &child_refs[..])]);
        let mut cfg = config(&["http://s/hub"]);
        cfg.politeness_delay_ms = 100;
        cfg.workers = 3;
        crawl_site(&cfg, &fetcher, &extractor, &clock).unwrap();

        // Single host, so even with three workers every pair of request
        // starts must respect the delay.
        let mut log = fetcher.log.lock().unwrap().clone();
        log.sort();
        assert_eq!(log.len(), 9);
        for pair in log.windows(2) {
            assert!(
                pair[1] - pair[0] >= chrono::Duration::milliseconds(100),
                "gap {} below delay",
                pair[1] - pair[0]
            );
        }
    }

    #[test]
    fn single_worker_crawl_is_reproducible() {
        let build = || {
            let fetcher = page_fetcher(&["http://s/a", "http://s/b", "http://s/c"]);
            let extractor = link_map(&[("http://s/a", &["http://s/c", "http://s/b"])]);
            let cfg = config(&["http://s/a"]);
            let clock = FixedClock(start_time());
            crawl_site(&cfg, &fetcher, &extractor, &clock).unwrap()
        };
        let one = build();
        let two = build();
        assert_eq!(one, two);
        let urls: Vec<&str> = one.pages.iter().map(|p| p.url.as_str()).collect();
        assert_eq!(urls, vec!["http://s/a", "http://s/c", "http://s/b"]);
    }

    #[test]
    fn recrawl_fetches_exactly_the_given_urls() {
        let fetcher = ScriptedFetcher::new()
            .script("http://s/p1", vec![FetchOutcome::Success(b"one".to_vec())])
            .script("http://s/p2", vec![FetchOutcome::Success(b"two".to_vec())]);
        let cfg = config(&["http://s/p1"]);
        let clock = FakeClock::new(start_time());
        let results = recrawl(
            &["http://s/p1".to_string(), "http://s/p2".to_string()],
            &cfg,
            &fetcher,
            &clock,
        )
        .unwrap();
        assert_eq!(results.len(), 2);
        assert!(results.iter().all(|r| r.status == FetchStatus::Ok));
    }

    #[test]
    fn recrawl_same_url_twice_fetches_twice() {
        let fetcher = ScriptedFetcher::new().script(
            "http://s/p1",
            vec![
                FetchOutcome::Success(b"first".to_vec()),
                FetchOutcome::Success(b"second".to_vec()),
            ],
        );
        let cfg = config(&["http://s/p1"]);
        let clock = FakeClock::new(start_time());
        let urls = vec!["http://s/p1".to_string(), "http://s/p1".to_string()];
        let results = recrawl(&urls, &cfg, &fetcher, &clock).unwrap();
        assert_eq!(results[0].body.as_deref(), Some(b"first".as_slice()));
        assert_eq!(results[1].body.as_deref(), Some(b"second".as_slice()));
    }

    #[test]
    fn recrawl_failures_leave_others_untouched() {
        let fetcher = ScriptedFetcher::new()
            .script("http://s/ok", vec![FetchOutcome::Success(b"fine".to_vec())]);
        let cfg = config(&["http://s/ok"]);
        let clock = FakeClock::new(start_time());
        let urls = vec!["http://s/gone".to_string(), "http://s/ok".to_string()];
        let results = recrawl(&urls, &cfg, &fetcher, &clock).unwrap();
        assert_eq!(results[0].status, FetchStatus::PermanentFailure);
        assert_eq!(results[1].status, FetchStatus::Ok);
        assert!(recrawl(&[], &cfg, &fetcher, &clock).is_err());
    }

    #[test]
    fn summary_round_trips_as_ndjson() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.ndjson");
        let summary = CrawlSummary {
            entries: vec![FetchLogEntry {
                url: "http://s/a".to_string(),
                status: FetchStatus::Ok,
                attempts: 2,
                fetched_at: start_time(),
            }],
            all_seeds_failed: false,
        };
        write_summary(&summary, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let parsed: FetchLogEntry = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(parsed, summary.entries[0]);
    }
}
