//! Crawl the bundled fixture marketplace: breadth-first traversal with loop
//! detection, politeness, and retry, all against local files.
//!
//!     cargo run -p darkmine --example crawl_fixture_site

use std::path::Path;

use darkmine::crawler::{
    crawl_site, fetch_with_retry, load_site_config, Clock, FakeClock, FetchOutcome,
    FixtureFetcher, ScriptedFetcher, SystemClock,
};
use darkmine::parsers::{extract_links, load_schema};

fn main() -> darkmine::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = load_site_config(fixtures.join("sites/market_alpha/site.json"))?;
    let schema = load_schema(fixtures.join("schemas/market_alpha.json"))?;
    let fetcher = FixtureFetcher::open(fixtures.join("sites/market_alpha"))?;

    // The parser module supplies link discovery; the crawler just follows.
    let extractor = |url: &str, body: &[u8]| -> Vec<String> {
        let html = String::from_utf8_lossy(body);
        extract_links(&html, &schema, url).map(|(links, _)| links).unwrap_or_default()
    };

    let output = crawl_site(&config, &fetcher, &extractor, &SystemClock)?;
    println!("crawled {} pages from {}:", output.pages.len(), config.site_id);
    for entry in &output.summary.entries {
        println!("  {:?} {} (attempts {})", entry.status, entry.url, entry.attempts);
    }
    println!();
    println!("the index links back to itself and page2 links to the index,");
    println!("but the visited set kept every canonical URL to a single fetch.");

    // Retry behavior, scripted: two transient failures, then success. The
    // fake clock makes the exponential backoff visible without sleeping.
    let flaky = ScriptedFetcher::new().script(
        "http://flaky.example/page",
        vec![
            FetchOutcome::Retryable("connection reset".to_string()),
            FetchOutcome::Retryable("timeout".to_string()),
            FetchOutcome::Success(b"<html>finally</html>".to_vec()),
        ],
    );
    let mut retry_config = config.clone();
    retry_config.max_retries = 3;
    retry_config.retry_backoff_ms = 250;
    let clock = FakeClock::new(chrono::Utc::now());
    let started = clock.now();
    let result = fetch_with_retry(&flaky, "http://flaky.example/page", &retry_config, &clock);
    println!();
    println!(
        "flaky endpoint: {:?} after {} attempts, {}ms of virtual backoff",
        result.status,
        result.attempts,
        (result.fetched_at - started).num_milliseconds()
    );

    // Temporal re-sampling: the parser's relevant-URL feedback is fetched
    // verbatim, bypassing the visited set, so a URL can be sampled twice.
    let urls = vec![
        "http://market-alpha.fixture/index.html".to_string(),
        "http://market-alpha.fixture/index.html".to_string(),
    ];
    let results = darkmine::crawler::recrawl(&urls, &config, &fetcher, &SystemClock)?;
    println!(
        "recrawl of the same URL twice produced {} fetches (temporal sampling)",
        results.len()
    );
    Ok(())
}
