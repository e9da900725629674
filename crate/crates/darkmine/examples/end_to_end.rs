//! The whole pipeline against the bundled fixture sites, driven through the
//! same functions the `darkmine` binary wires to its subcommands:
//! crawl -> parse -> label -> train -> classify -> evaluate -> analyze ->
//! report, with a frozen clock for reproducible artifacts.
//!
//!     cargo run -p darkmine --example end_to_end

use std::path::Path;

use chrono::{TimeZone, Utc};
use darkmine::cli::{
    cmd_analyze, cmd_classify, cmd_crawl, cmd_evaluate, cmd_label, cmd_parse, cmd_report,
    cmd_train, EvalConfig, FetcherConfig, ModelConfig, PathsConfig, PipelineConfig, RunConfig,
    SemisupConfig, SiteEntry,
};
use darkmine::crawler::FixedClock;
use darkmine::learners::Hyperparams;

fn main() -> darkmine::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::temp_dir().join("darkmine_e2e_example");
    let _ = std::fs::remove_dir_all(&out);
    std::fs::create_dir_all(&out).expect("temp dir");

    let config = RunConfig {
        sites: vec![
            SiteEntry {
                config: fixtures.join("sites/market_alpha/site.json"),
                schema: fixtures.join("schemas/market_alpha.json"),
                fetcher: FetcherConfig::Fixture { dir: fixtures.join("sites/market_alpha") },
            },
            SiteEntry {
                config: fixtures.join("sites/forum_gamma/site.json"),
                schema: fixtures.join("schemas/forum_gamma.json"),
                fetcher: FetcherConfig::Fixture { dir: fixtures.join("sites/forum_gamma") },
            },
        ],
        pipeline: PipelineConfig { n_min: 3, n_max: 7, min_df: 1, stop_words: None },
        model: ModelConfig {
            hyperparams: Some(Hyperparams::NaiveBayes { alpha: 1.0 }),
            grid: None,
            grid_folds: 3,
        },
        semisup: SemisupConfig::None,
        eval: EvalConfig::KFold { k: 2 },
        paths: PathsConfig {
            raw_dir: out.join("raw"),
            records_dir: out.join("records"),
            models_dir: out.join("models"),
            reports_dir: out.join("reports"),
            analytics_dir: out.join("analytics"),
        },
        seed: 42,
        labels: Some(fixtures.join("labels/e2e_labels.ndjson")),
        zero_day_terms: None,
    };

    let clock = FixedClock(Utc.with_ymd_and_hms(2016, 8, 1, 0, 0, 0).unwrap());

    println!("== crawl");
    cmd_crawl(&config, &clock)?;
    println!("== parse");
    cmd_parse(&config)?;
    println!("== label");
    cmd_label(&config)?;
    println!("== train");
    cmd_train(&config)?;
    println!("== classify");
    cmd_classify(&config)?;
    println!("== evaluate");
    cmd_evaluate(&config)?;
    println!("== analyze");
    cmd_analyze(&config)?;
    println!("== report");
    cmd_report(&config)?;

    println!();
    println!("artifacts under {}", out.display());
    Ok(())
}
