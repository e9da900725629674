//! Pluggable page fetchers: fixture directory, scripted outcomes for tests,
//! and a plain-HTTP client. Failures are data, never panics.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use super::canonicalize;

/// Outcome of a single fetch attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Success(Vec<u8>),
    /// Transient condition worth retrying (unresponsive server, 5xx).
    Retryable(String),
    /// Definitive failure (missing page, 4xx); retrying will not help.
    Permanent(String),
}

pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str, headers: &BTreeMap<String, String>) -> FetchOutcome;
}

/// Serves pages from a directory via an `index.json` file mapping canonical
/// URLs to relative file paths.
pub struct FixtureFetcher {
    root: PathBuf,
    index: HashMap<String, String>,
}

impl FixtureFetcher {
    pub fn open(dir: impl Into<PathBuf>) -> crate::Result<Self> {
        let root = dir.into();
        let index_path = root.join("index.json");
        let text = std::fs::read_to_string(&index_path)
            .map_err(|e| crate::Error::io(&index_path, e))?;
        let raw: HashMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| crate::Error::Config(format!("{}: {e}", index_path.display())))?;
        let mut index = HashMap::new();
        for (url, file) in raw {
            index.insert(canonicalize(&url)?, file);
        }
        Ok(FixtureFetcher { root, index })
    }
}

impl Fetcher for FixtureFetcher {
    fn fetch(&self, url: &str, _headers: &BTreeMap<String, String>) -> FetchOutcome {
        let canonical = match canonicalize(url) {
            Ok(c) => c,
            Err(e) => return FetchOutcome::Permanent(e.to_string()),
        };
        match self.index.get(&canonical) {
            None => FetchOutcome::Permanent(format!("{canonical} not in fixture index")),
            Some(file) => match std::fs::read(self.root.join(file)) {
                Ok(body) => FetchOutcome::Success(body),
                Err(e) => FetchOutcome::Retryable(format!("fixture read failed: {e}")),
            },
        }
    }
}

/// Replays a scripted sequence of outcomes per canonical URL; once a script
/// is exhausted every further fetch is a permanent failure.
pub struct ScriptedFetcher {
    scripts: Mutex<HashMap<String, VecDeque<FetchOutcome>>>,
}

impl ScriptedFetcher {
    pub fn new() -> Self {
        ScriptedFetcher { scripts: Mutex::new(HashMap::new()) }
    }

    pub fn script(self, url: &str, outcomes: Vec<FetchOutcome>) -> Self {
        let canonical = canonicalize(url).expect("scripted URL must be canonicalizable");
        self.scripts.lock().unwrap().insert(canonical, outcomes.into());
        self
    }
}

impl Default for ScriptedFetcher {
    fn default() -> Self {
        Self::new()
    }
}

impl Fetcher for ScriptedFetcher {
    fn fetch(&self, url: &str, _headers: &BTreeMap<String, String>) -> FetchOutcome {
        let canonical = match canonicalize(url) {
            Ok(c) => c,
            Err(e) => return FetchOutcome::Permanent(e.to_string()),
        };
        let mut scripts = self.scripts.lock().unwrap();
        match scripts.get_mut(&canonical).and_then(|q| q.pop_front()) {
            Some(outcome) => outcome,
            None => FetchOutcome::Permanent(format!("no scripted outcome for {canonical}")),
        }
    }
}

/// Minimal plain-HTTP (no TLS) GET client over a TCP stream. Good enough
/// for the deepnet endpoints in scope; onion routing is not.
pub struct HttpFetcher {
    pub timeout: Duration,
    pub max_redirects: usize,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        HttpFetcher { timeout: Duration::from_secs(30), max_redirects: 5 }
    }
}

impl HttpFetcher {
    fn fetch_once(&self, url: &str, headers: &BTreeMap<String, String>) -> FetchOutcome {
        let parsed = match url::Url::parse(url) {
            Ok(u) => u,
            Err(e) => return FetchOutcome::Permanent(format!("bad url: {e}")),
        };
        if parsed.scheme() != "http" {
            return FetchOutcome::Permanent(format!("unsupported scheme `{}`", parsed.scheme()));
        }
        let host = match parsed.host_str() {
            Some(h) => h.to_string(),
            None => return FetchOutcome::Permanent("url has no host".to_string()),
        };
        let port = parsed.port_or_known_default().unwrap_or(80);

        let stream = TcpStream::connect((host.as_str(), port));
        let mut stream = match stream {
            Ok(s) => s,
            Err(e) => return FetchOutcome::Retryable(format!("connect failed: {e}")),
        };
        let _ = stream.set_read_timeout(Some(self.timeout));
        let _ = stream.set_write_timeout(Some(self.timeout));

        let mut path = parsed.path().to_string();
        if let Some(q) = parsed.query() {
            path.push('?');
            path.push_str(q);
        }
        let mut request = format!("GET {path} HTTP/1.1\r\nHost: {host}\r\nConnection: close\r\n");
        for (name, value) in headers {
            request.push_str(&format!("{name}: {value}\r\n"));
        }
        request.push_str("\r\n");
        if let Err(e) = stream.write_all(request.as_bytes()) {
            return FetchOutcome::Retryable(format!("write failed: {e}"));
        }

        let mut raw = Vec::new();
        if let Err(e) = stream.read_to_end(&mut raw) {
            return FetchOutcome::Retryable(format!("read failed: {e}"));
        }
        parse_http_response(&raw)
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str, headers: &BTreeMap<String, String>) -> FetchOutcome {
        let mut current = url.to_string();
        for _ in 0..=self.max_redirects {
            match self.fetch_once(&current, headers) {
                FetchOutcome::Permanent(msg) if msg.starts_with("redirect:") => {
                    let location = msg.trim_start_matches("redirect:").to_string();
                    current = match url::Url::parse(&current)
                        .ok()
                        .and_then(|base| base.join(&location).ok())
                    {
                        Some(u) => u.to_string(),
                        None => return FetchOutcome::Permanent(format!("bad redirect {location}")),
                    };
                }
                other => return other,
            }
        }
        FetchOutcome::Permanent("too many redirects".to_string())
    }
}

fn parse_http_response(raw: &[u8]) -> FetchOutcome {
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n");
    let Some(header_end) = split else {
        return FetchOutcome::Retryable("truncated response".to_string());
    };
    let head = String::from_utf8_lossy(&raw[..header_end]);
    let mut lines = head.lines();
    let status_line = lines.next().unwrap_or_default();
    let status: u16 = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);

    let mut location = None;
    let mut chunked = false;
    for line in lines {
        let Some((name, value)) = line.split_once(':') else { continue };
        let name = name.trim().to_ascii_lowercase();
        let value = value.trim();
        if name == "location" {
            location = Some(value.to_string());
        }
        if name == "transfer-encoding" && value.to_ascii_lowercase().contains("chunked") {
            chunked = true;
        }
    }

    let body_raw = &raw[header_end + 4..];
    let body = if chunked { dechunk(body_raw) } else { body_raw.to_vec() };

    match status {
        200..=299 => FetchOutcome::Success(body),
        301 | 302 | 303 | 307 | 308 => match location {
            Some(l) => FetchOutcome::Permanent(format!("redirect:{l}")),
            None => FetchOutcome::Permanent(format!("status {status} without location")),
        },
        408 | 429 | 500..=599 => FetchOutcome::Retryable(format!("status {status}")),
        0 => FetchOutcome::Retryable("unparseable status line".to_string()),
        _ => FetchOutcome::Permanent(format!("status {status}")),
    }
}

fn dechunk(raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(line_end) = rest.windows(2).position(|w| w == b"\r\n") {
        let size_line = String::from_utf8_lossy(&rest[..line_end]);
        let size = usize::from_str_radix(size_line.trim().split(';').next().unwrap_or("0"), 16)
            .unwrap_or(0);
        if size == 0 {
            break;
        }
        let start = line_end + 2;
        if rest.len() < start + size {
            out.extend_from_slice(&rest[start..]);
            break;
        }
        out.extend_from_slice(&rest[start..start + size]);
        rest = &rest[(start + size + 2).min(rest.len())..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_outcomes_replay_in_order() {
        let fetcher = ScriptedFetcher::new().script(
            "http://x/a",
            vec![
                FetchOutcome::Retryable("boom".to_string()),
                FetchOutcome::Success(b"ok".to_vec()),
            ],
        );
        let headers = BTreeMap::new();
        assert!(matches!(fetcher.fetch("http://x/a", &headers), FetchOutcome::Retryable(_)));
        assert_eq!(fetcher.fetch("http://x/a", &headers), FetchOutcome::Success(b"ok".to_vec()));
        assert!(matches!(fetcher.fetch("http://x/a", &headers), FetchOutcome::Permanent(_)));
    }

    #[test]
    fn fixture_fetcher_reads_indexed_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("page.html"), "<html>hi</html>").unwrap();
        std::fs::write(
            dir.path().join("index.json"),
            r#"{"http://Site.example/a?b=1": "page.html"}"#,
        )
        .unwrap();
        let fetcher = FixtureFetcher::open(dir.path()).unwrap();
        let headers = BTreeMap::new();
        // Lookup goes through canonicalization, so a differently-cased URL hits.
        assert_eq!(
            fetcher.fetch("HTTP://site.example/a?b=1", &headers),
            FetchOutcome::Success(b"<html>hi</html>".to_vec())
        );
        assert!(matches!(fetcher.fetch("http://site.example/zzz", &headers), FetchOutcome::Permanent(_)));
    }

    #[test]
    fn http_response_parsing() {
        let ok = b"HTTP/1.1 200 OK\r\nContent-Type: text/html\r\n\r\nbody";
        assert_eq!(parse_http_response(ok), FetchOutcome::Success(b"body".to_vec()));

        let not_found = b"HTTP/1.1 404 Not Found\r\n\r\n";
        assert!(matches!(parse_http_response(not_found), FetchOutcome::Permanent(_)));

        let server_error = b"HTTP/1.1 503 Unavailable\r\n\r\n";
        assert!(matches!(parse_http_response(server_error), FetchOutcome::Retryable(_)));

        let chunked = b"HTTP/1.1 200 OK\r\nTransfer-Encoding: chunked\r\n\r\n4\r\nbody\r\n0\r\n\r\n";
        assert_eq!(parse_http_response(chunked), FetchOutcome::Success(b"body".to_vec()));
    }
}
