//! Config-driven pipeline orchestration behind the `darkmine` binary:
//! crawl → parse → label → train → classify → evaluate → analyze → report.
//!
//! Exit codes: 0 success, 2 config error, 3 missing prerequisite artifact,
//! 4 runtime failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::analytics;
use crate::crawler::{
    self, Clock, FixedClock, Fetcher, FixtureFetcher, HttpFetcher, SiteConfig, SystemClock,
};
use crate::datamodel::{
    self, Classified, Label, LabeledExample, RecordKind,
};
use crate::error::{Error, Result};
use crate::evalharness::{self, EvalTrainer, SupervisedTrainer};
use crate::learners::{self, Hyperparams, ParamGrid};
use crate::parsers::{self, ExtractionSchema};
use crate::semisup::{self, CoTrainingTrainer, Kernel, LabelPropTrainer};
use crate::textpipe::{self, TextParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum FetcherConfig {
    #[serde(rename = "FIXTURE")]
    Fixture { dir: PathBuf },
    #[serde(rename = "HTTP")]
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteEntry {
    pub config: PathBuf,
    pub schema: PathBuf,
    pub fetcher: FetcherConfig,
}

fn default_n_min() -> usize {
    3
}
fn default_n_max() -> usize {
    7
}
fn default_min_df() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_min_df")]
    pub min_df: usize,
    #[serde(default)]
    pub stop_words: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { n_min: 3, n_max: 7, min_df: 2, stop_words: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub hyperparams: Option<Hyperparams>,
    #[serde(default)]
    pub grid: Option<ParamGrid>,
    /// Folds used when grid searching.
    #[serde(default = "default_grid_folds")]
    pub grid_folds: usize,
}

fn default_grid_folds() -> usize {
    3
}

fn default_ct_threshold() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum SemisupConfig {
    #[serde(rename = "NONE")]
    None,
    #[serde(rename = "LABEL_PROP")]
    LabelProp { kernel: Kernel },
    #[serde(rename = "CO_TRAIN")]
    CoTrain {
        #[serde(default = "default_ct_threshold")]
        threshold: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol")]
pub enum EvalConfig {
    #[serde(rename = "LEAVE_ONE_SITE_OUT")]
    LeaveOneSiteOut,
    #[serde(rename = "KFOLD")]
    KFold { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    pub raw_dir: PathBuf,
    pub records_dir: PathBuf,
    pub models_dir: PathBuf,
    pub reports_dir: PathBuf,
    pub analytics_dir: PathBuf,
}

/// The single run-config file driving every subcommand. Relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sites: Vec<SiteEntry>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub model: ModelConfig,
    pub semisup: SemisupConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
    pub seed: u64,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub zero_day_terms: Option<PathBuf>,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    if config.sites.is_empty() {
        return Err(Error::Config("sites list is empty".into()));
    }
    for site in &mut config.sites {
        resolve(&base, &mut site.config);
        resolve(&base, &mut site.schema);
        if let FetcherConfig::Fixture { dir } = &mut site.fetcher {
            resolve(&base, dir);
        }
    }
    resolve(&base, &mut config.paths.raw_dir);
    resolve(&base, &mut config.paths.records_dir);
    resolve(&base, &mut config.paths.models_dir);
    resolve(&base, &mut config.paths.reports_dir);
    resolve(&base, &mut config.paths.analytics_dir);
    if let Some(p) = &mut config.labels {
        resolve(&base, p);
    }
    if let Some(p) = &mut config.zero_day_terms {
        resolve(&base, p);
    }
    if let Some(p) = &mut config.pipeline.stop_words {
        resolve(&base, p);
    }

    for site in &config.sites {
        for (what, p) in [("site config", &site.config), ("schema", &site.schema)] {
            if !p.exists() {
                return Err(Error::Config(format!("{what} {} does not exist", p.display())));
            }
        }
        if let FetcherConfig::Fixture { dir } = &site.fetcher {
            if !dir.exists() {
                return Err(Error::Config(format!("fixture dir {} does not exist", dir.display())));
            }
        }
    }
    for p in [&config.labels, &config.zero_day_terms, &config.pipeline.stop_words]
        .into_iter()
        .flatten()
    {
        if !p.exists() {
            return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
        }
    }
    if config.model.hyperparams.is_none() && config.model.grid.is_none() {
        return Err(Error::Config("model needs hyperparams or a grid".into()));
    }
    Ok(config)
}

/// One stored raw page, NDJSON-framed; bodies are UTF-8 (lossy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPage {
    pub url: String,
    pub fetched_at: DateTime<Utc>,
    pub body: String,
}

struct LoadedSite {
    config: SiteConfig,
    schema: ExtractionSchema,
    fetcher: FetcherConfig,
}

fn load_sites(config: &RunConfig) -> Result<Vec<LoadedSite>> {
    config
        .sites
        .iter()
        .map(|entry| {
            Ok(LoadedSite {
                config: crawler::load_site_config(&entry.config)?,
                schema: parsers::load_schema(&entry.schema)?,
                fetcher: entry.fetcher.clone(),
            })
        })
        .collect()
}

fn build_fetcher(config: &FetcherConfig) -> Result<Box<dyn Fetcher>> {
    Ok(match config {
        FetcherConfig::Fixture { dir } => Box::new(FixtureFetcher::open(dir)?),
        FetcherConfig::Http => Box::new(HttpFetcher::default()),
    })
}

fn text_params(config: &RunConfig) -> Result<TextParams> {
    let stop_words = match &config.pipeline.stop_words {
        Some(path) => textpipe::load_stop_words(path)?,
        None => textpipe::default_stop_words(),
    };
    Ok(TextParams {
        n_min: config.pipeline.n_min,
        n_max: config.pipeline.n_max,
        min_df: config.pipeline.min_df,
        stop_words,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn pages_path(config: &RunConfig, site_id: &str) -> PathBuf {
    config.paths.raw_dir.join(format!("{site_id}_pages.ndjson"))
}

fn records_path(config: &RunConfig, site_id: &str, kind: RecordKind) -> PathBuf {
    let suffix = match kind {
        RecordKind::Market => "products",
        RecordKind::Forum => "topics",
    };
    config.paths.records_dir.join(format!("{site_id}_{suffix}.ndjson"))
}

/// Crawl every configured site, storing raw pages and a fetch summary.
pub fn cmd_crawl(config: &RunConfig, clock: &dyn Clock) -> Result<()> {
    let sites = load_sites(config)?;
    ensure_dir(&config.paths.raw_dir)?;
    let mut any_ok = false;
    for site in &sites {
        let fetcher = build_fetcher(&site.fetcher)?;
        let schema = site.schema.clone();
        let extractor = move |url: &str, body: &[u8]| -> Vec<String> {
            let html = String::from_utf8_lossy(body);
            parsers::extract_links(&html, &schema, url).map(|(links, _)| links).unwrap_or_default()
        };
        let output = crawler::crawl_site(&site.config, fetcher.as_ref(), &extractor, clock)?;

        let mut out = String::new();
        for page in &output.pages {
            let raw = RawPage {
                url: page.url.clone(),
                fetched_at: page.fetched_at,
                body: String::from_utf8_lossy(&page.body).into_owned(),
            };
            out.push_str(&serde_json::to_string(&raw).expect("raw page serializes"));
            out.push('\n');
        }
        let path = pages_path(config, &site.config.site_id);
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        crawler::write_summary(
            &output.summary,
            config.paths.raw_dir.join(format!("{}_summary.ndjson", site.config.site_id)),
        )?;

        let failures =
            output.summary.entries.iter().filter(|e| e.status != crawler::FetchStatus::Ok).count();
        println!(
            "site {}: {} pages fetched, {} failures",
            site.config.site_id,
            output.pages.len(),
            failures
        );
        if !output.pages.is_empty() {
            any_ok = true;
        }
    }
    if !any_ok {
        return Err(Error::InvalidInput("every configured site failed to crawl".into()));
    }
    Ok(())
}

/// Parse stored raw pages into validated record files, one store per site.
pub fn cmd_parse(config: &RunConfig) -> Result<()> {
    let sites = load_sites(config)?;
    ensure_dir(&config.paths.records_dir)?;
    for site in &sites {
        let path = pages_path(config, &site.config.site_id);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut warnings = Vec::new();
        let mut products = Vec::new();
        let mut topics = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let page: RawPage = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                path: path.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            match site.schema.kind {
                RecordKind::Market => {
                    let (mut items, mut warns) =
                        parsers::parse_market_page(&page.body, &site.schema, &page.url, page.fetched_at)?;
                    products.append(&mut items);
                    warnings.append(&mut warns);
                }
                RecordKind::Forum => {
                    let (mut items, mut warns) =
                        parsers::parse_forum_page(&page.body, &site.schema, &page.url, page.fetched_at)?;
                    topics.append(&mut items);
                    warnings.append(&mut warns);
                }
            }
        }
        let count = match site.schema.kind {
            RecordKind::Market => {
                datamodel::save_products(&products, records_path(config, &site.config.site_id, RecordKind::Market))?
            }
            RecordKind::Forum => {
                let merged = parsers::merge_forum_topics(topics);
                datamodel::save_topics(&merged, records_path(config, &site.config.site_id, RecordKind::Forum))?
            }
        };
        parsers::write_warnings(
            &warnings,
            config.paths.records_dir.join(format!("{}_warnings.ndjson", site.config.site_id)),
        )?;
        println!("site {}: {} records, {} warnings", site.config.site_id, count, warnings.len());
    }
    Ok(())
}

/// Stamp labels from the configured label file onto stored records.
pub fn cmd_label(config: &RunConfig) -> Result<()> {
    let labels_path = config
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("no labels file configured".into()))?;
    let assignments = datamodel::load_label_file(labels_path)?;
    let sites = load_sites(config)?;

    let known: std::collections::BTreeSet<&str> =
        sites.iter().map(|s| s.config.site_id.as_str()).collect();
    let unknown: Vec<String> = assignments
        .iter()
        .filter(|a| !known.contains(a.site_id.as_str()))
        .map(|a| format!("{}/{}", a.site_id, a.key))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Labels(format!("labels for unknown sites: {}", unknown.join(", "))));
    }

    let mut total = 0;
    for site in &sites {
        let site_labels: Vec<_> = assignments
            .iter()
            .filter(|a| a.site_id == site.config.site_id)
            .cloned()
            .collect();
        if site_labels.is_empty() {
            continue;
        }
        let path = records_path(config, &site.config.site_id, site.schema.kind);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        total += match site.schema.kind {
            RecordKind::Market => {
                let mut products = datamodel::load_products(&path)?;
                let n = datamodel::apply_product_labels(&mut products, &site_labels)?;
                datamodel::save_products(&products, &path)?;
                n
            }
            RecordKind::Forum => {
                let mut topics = datamodel::load_topics(&path)?;
                let n = datamodel::apply_topic_labels(&mut topics, &site_labels)?;
                datamodel::save_topics(&topics, &path)?;
                n
            }
        };
    }
    println!("applied {total} labels");
    Ok(())
}

fn load_all_examples(config: &RunConfig, sites: &[LoadedSite]) -> Result<Vec<LabeledExample>> {
    let mut examples = Vec::new();
    for site in sites {
        let path = records_path(config, &site.config.site_id, site.schema.kind);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        examples.extend(datamodel::load_records(&path, site.schema.kind)?.examples());
    }
    Ok(examples)
}

fn model_path(config: &RunConfig, name: &str) -> PathBuf {
    config.paths.models_dir.join(name)
}

fn pick_hyperparams(config: &RunConfig, text: &TextParams, examples: &[LabeledExample]) -> Result<Hyperparams> {
    if let Some(grid) = &config.model.grid {
        let labeled: Vec<&LabeledExample> =
            examples.iter().filter(|e| e.label.is_labeled()).collect();
        let space = textpipe::build_feature_space(
            &labeled.iter().map(|e| (*e).clone()).collect::<Vec<_>>(),
            text.n_min,
            text.n_max,
            &text.stop_words,
            text.min_df,
        )?;
        let x: Vec<_> = labeled.iter().map(|e| textpipe::vectorize(e, &space)).collect();
        let y: Vec<Label> = labeled.iter().map(|e| e.label).collect();
        let (best, table) =
            learners::grid_search(grid, &x, &y, config.model.grid_folds, config.seed)?;
        ensure_dir(&config.paths.reports_dir)?;
        let grid_path = config.paths.reports_dir.join("grid.ndjson");
        let mut out = String::new();
        for row in &table {
            out.push_str(&serde_json::to_string(row).expect("grid row serializes"));
            out.push('\n');
        }
        std::fs::write(&grid_path, out).map_err(|e| Error::io(&grid_path, e))?;
        println!("grid search: {} points, best {:?}", table.len(), best);
        Ok(best)
    } else {
        Ok(config.model.hyperparams.clone().expect("validated at load"))
    }
}

/// Train the configured model over all labeled records; semi-supervised
/// modes also consume the unlabeled pool. Emits model + feature-space files.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let sites = load_sites(config)?;
    let text = text_params(config)?;
    let examples = load_all_examples(config, &sites)?;
    let labeled: Vec<LabeledExample> =
        examples.iter().filter(|e| e.label.is_labeled()).cloned().collect();
    let unlabeled: Vec<LabeledExample> =
        examples.iter().filter(|e| !e.label.is_labeled()).cloned().collect();
    if labeled.is_empty() {
        return Err(Error::InvalidInput("no labeled records; run `label` first".into()));
    }
    ensure_dir(&config.paths.models_dir)?;
    let hp = pick_hyperparams(config, &text, &examples)?;

    match &config.semisup {
        SemisupConfig::None => {
            let space = textpipe::build_feature_space(
                &examples, text.n_min, text.n_max, &text.stop_words, text.min_df,
            )?;
            let x: Vec<_> = labeled.iter().map(|e| textpipe::vectorize(e, &space)).collect();
            let y: Vec<Label> = labeled.iter().map(|e| e.label).collect();
            let model = learners::train(&x, &y, &hp, config.seed)?;
            learners::save_model(&model, model_path(config, "model.json"))?;
            textpipe::save_feature_space(&space, model_path(config, "feature_space.json"))?;
            println!("trained {:?} on {} labeled examples", model.kind(), labeled.len());
        }
        SemisupConfig::CoTrain { threshold, seed } => {
            let seed = seed.unwrap_or(config.seed);
            let split = textpipe::split_views(
                &examples, text.n_min, text.n_max, &text.stop_words, text.min_df, seed,
            )?;
            let outcome = semisup::co_train(&split, &labeled, &unlabeled, &hp, *threshold, seed)?;
            learners::save_model(&outcome.model_a, model_path(config, "model_a.json"))?;
            learners::save_model(&outcome.model_b, model_path(config, "model_b.json"))?;
            textpipe::save_view_split(&split, model_path(config, "view_split.json"))?;
            let transcript_path = model_path(config, "ct_transcript.ndjson");
            let mut out = String::new();
            for entry in &outcome.transcript {
                out.push_str(&serde_json::to_string(entry).expect("round entry serializes"));
                out.push('\n');
            }
            std::fs::write(&transcript_path, out).map_err(|e| Error::io(&transcript_path, e))?;
            println!(
                "co-trained {:?} over {} rounds ({} forced)",
                hp.kind(),
                outcome.transcript.len(),
                outcome.forced
            );
        }
        SemisupConfig::LabelProp { kernel } => {
            let space = textpipe::build_feature_space(
                &examples, text.n_min, text.n_max, &text.stop_words, text.min_df,
            )?;
            let x_labeled: Vec<_> = labeled.iter().map(|e| textpipe::vectorize(e, &space)).collect();
            let y_labeled: Vec<Label> = labeled.iter().map(|e| e.label).collect();
            let x_unlabeled: Vec<_> =
                unlabeled.iter().map(|e| textpipe::vectorize(e, &space)).collect();
            let (model, outcome) =
                semisup::fit_label_prop(&x_labeled, &y_labeled, &x_unlabeled, *kernel, 1e-6, 10_000)?;
            let lp_path = model_path(config, "lp_model.json");
            let json = serde_json::to_string(&model)
                .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
            std::fs::write(&lp_path, json).map_err(|e| Error::io(&lp_path, e))?;
            textpipe::save_feature_space(&space, model_path(config, "feature_space.json"))?;
            println!(
                "label propagation converged in {} iterations ({} isolated)",
                outcome.iterations,
                outcome.isolated.len()
            );
        }
    }
    Ok(())
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

/// Stamp classifier labels on UNLABELED records and emit the relevant-URL
/// feedback list for re-crawling.
pub fn cmd_classify(config: &RunConfig) -> Result<()> {
    let sites = load_sites(config)?;
    ensure_dir(&config.paths.records_dir)?;

    #[allow(clippy::large_enum_variant)]
    enum Predictor {
        Plain(learners::Model, textpipe::FeatureSpace),
        Co(learners::Model, learners::Model, textpipe::ViewSplit),
        Lp(semisup::LabelPropModel, textpipe::FeatureSpace),
    }
    let predictor = match &config.semisup {
        SemisupConfig::None => {
            let model = learners::load_model(require(model_path(config, "model.json"))?)?;
            let space = textpipe::load_feature_space(require(model_path(config, "feature_space.json"))?)?;
            Predictor::Plain(model, space)
        }
        SemisupConfig::CoTrain { .. } => {
            let model_a = learners::load_model(require(model_path(config, "model_a.json"))?)?;
            let model_b = learners::load_model(require(model_path(config, "model_b.json"))?)?;
            let split = textpipe::load_view_split(require(model_path(config, "view_split.json"))?)?;
            Predictor::Co(model_a, model_b, split)
        }
        SemisupConfig::LabelProp { .. } => {
            let lp_path = require(model_path(config, "lp_model.json"))?;
            let text = std::fs::read_to_string(&lp_path).map_err(|e| Error::io(&lp_path, e))?;
            let model: semisup::LabelPropModel = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("bad label-prop model: {e}")))?;
            let space = textpipe::load_feature_space(require(model_path(config, "feature_space.json"))?)?;
            Predictor::Lp(model, space)
        }
    };

    let predict = |example: &LabeledExample| -> Result<Label> {
        match &predictor {
            Predictor::Plain(model, space) => {
                learners::predict(model, &textpipe::vectorize(example, space))
            }
            Predictor::Co(a, b, split) => semisup::co_predict(a, b, split, example).map(|(l, _)| l),
            Predictor::Lp(model, space) => Ok(model.predict(&textpipe::vectorize(example, space))),
        }
    };

    let mut stamped = 0usize;
    let mut relevant_urls: Vec<String> = Vec::new();
    let mut seen_urls = std::collections::HashSet::new();
    for site in &sites {
        let path = records_path(config, &site.config.site_id, site.schema.kind);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        match site.schema.kind {
            RecordKind::Market => {
                let mut products = datamodel::load_products(&path)?;
                for p in &mut products {
                    if p.label == Label::Unlabeled {
                        p.label = predict(&p.to_example())?;
                        stamped += 1;
                    }
                }
                for url in parsers::relevant_url_list(&products) {
                    if seen_urls.insert(url.clone()) {
                        relevant_urls.push(url);
                    }
                }
                datamodel::save_products(&products, &path)?;
            }
            RecordKind::Forum => {
                let mut topics = datamodel::load_topics(&path)?;
                for t in &mut topics {
                    if t.label == Label::Unlabeled {
                        t.label = predict(&t.to_example())?;
                        stamped += 1;
                    }
                }
                datamodel::save_topics(&topics, &path)?;
            }
        }
    }
    let urls_path = config.paths.records_dir.join("relevant_urls.txt");
    std::fs::write(&urls_path, relevant_urls.join("\n") + "\n")
        .map_err(|e| Error::io(&urls_path, e))?;
    println!("classified {stamped} records; {} relevant urls for re-crawl", relevant_urls.len());
    Ok(())
}

fn build_trainer(config: &RunConfig, text: &TextParams, hp: Hyperparams) -> Box<dyn EvalTrainer> {
    match &config.semisup {
        SemisupConfig::None => {
            Box::new(SupervisedTrainer { hp, text: text.clone(), seed: config.seed })
        }
        SemisupConfig::CoTrain { threshold, seed } => Box::new(CoTrainingTrainer {
            hp,
            text: text.clone(),
            threshold: *threshold,
            seed: seed.unwrap_or(config.seed),
        }),
        SemisupConfig::LabelProp { kernel } => Box::new(LabelPropTrainer {
            kernel: *kernel,
            text: text.clone(),
            tol: 1e-6,
            max_iter: 10_000,
            seed: config.seed,
        }),
    }
}

/// Run the configured cross-validation protocol and emit the report files.
pub fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    let sites = load_sites(config)?;
    let text = text_params(config)?;
    let hp = match (&config.model.hyperparams, &config.model.grid) {
        (Some(hp), _) => hp.clone(),
        (None, Some(grid)) => Hyperparams::default_for(grid.kind),
        (None, None) => unreachable!("validated at load"),
    };
    let trainer = build_trainer(config, &text, hp);

    let report = match config.eval {
        EvalConfig::LeaveOneSiteOut => {
            let mut datasets: BTreeMap<String, Vec<LabeledExample>> = BTreeMap::new();
            for site in &sites {
                let path = records_path(config, &site.config.site_id, site.schema.kind);
                if !path.exists() {
                    return Err(Error::MissingArtifact(path));
                }
                datasets.insert(
                    site.config.site_id.clone(),
                    datamodel::load_records(&path, site.schema.kind)?.examples(),
                );
            }
            evalharness::leave_one_site_out(&datasets, trainer.as_ref())?
        }
        EvalConfig::KFold { k } => {
            let examples = load_all_examples(config, &sites)?;
            evalharness::kfold(&examples, k, trainer.as_ref(), config.seed)?
        }
    };

    ensure_dir(&config.paths.reports_dir)?;
    let path = config.paths.reports_dir.join("eval.ndjson");
    evalharness::emit_report(&report, &path)?;
    let w = &report.weighted;
    println!(
        "{} with {}: weighted precision {:.4} recall {:.4} f1 {:.4} over {} examples",
        report.protocol, report.trainer, w.precision, w.recall, w.f1, w.support
    );
    Ok(())
}

/// Build the cross-site graph and emit analyst exports: edge list, presence
/// histogram, power-law fit, zero-day candidates.
pub fn cmd_analyze(config: &RunConfig) -> Result<()> {
    let sites = load_sites(config)?;
    let mut products = Vec::new();
    let mut topics = Vec::new();
    for site in &sites {
        let path = records_path(config, &site.config.site_id, site.schema.kind);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        match datamodel::load_records(&path, site.schema.kind)? {
            datamodel::Records::Market(mut p) => products.append(&mut p),
            datamodel::Records::Forum(mut t) => topics.append(&mut t),
        }
    }
    ensure_dir(&config.paths.analytics_dir)?;

    let (graph, warnings) = analytics::build_site_graph(&products, &topics);
    analytics::export_edges_csv(&graph, config.paths.analytics_dir.join("graph_edges.csv"))?;
    let hist = analytics::presence_histogram(&graph);
    analytics::export_histogram_csv(&hist, config.paths.analytics_dir.join("presence_histogram.csv"))?;

    let fit_line = match analytics::fit_power_law(&hist.counts) {
        Ok(fit) => {
            let path = config.paths.analytics_dir.join("power_law.json");
            let json = serde_json::to_string(&fit)
                .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
            std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            format!("alpha {:.3} (R² {:.3})", fit.alpha, fit.r_squared)
        }
        Err(_) => "not enough support points".to_string(),
    };

    let terms = match &config.zero_day_terms {
        Some(path) => analytics::load_zero_day_terms(path)?,
        None => analytics::default_zero_day_terms(),
    };
    let candidates = analytics::find_zero_day_candidates(&products, &terms);
    let zd_path = config.paths.analytics_dir.join("zero_day_candidates.ndjson");
    let mut out = String::new();
    for c in &candidates {
        out.push_str(&serde_json::to_string(c).expect("candidate serializes"));
        out.push('\n');
    }
    std::fs::write(&zd_path, out).map_err(|e| Error::io(&zd_path, e))?;

    println!(
        "graph: {} users, {} sites, {} edges; >2 platforms: {}; power law: {}; zero-day candidates: {}; warnings: {}",
        graph.user_count(),
        graph.site_count(),
        graph.edge_count(),
        hist.users_on_more_than_two,
        fit_line,
        candidates.len(),
        warnings.len()
    );
    Ok(())
}

/// Summarize whatever artifacts exist into a plain-text analyst report.
pub fn cmd_report(config: &RunConfig) -> Result<()> {
    let sites = load_sites(config)?;
    let mut lines = Vec::new();
    lines.push("darkmine pipeline report".to_string());
    lines.push(String::new());

    let mut any_records = false;
    let mut label_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for site in &sites {
        let path = records_path(config, &site.config.site_id, site.schema.kind);
        if !path.exists() {
            continue;
        }
        any_records = true;
        let records = datamodel::load_records(&path, site.schema.kind)?;
        let examples = records.examples();
        for e in &examples {
            let key = match e.label {
                Label::Relevant => "RELEVANT",
                Label::NotRelevant => "NOT_RELEVANT",
                Label::Unlabeled => "UNLABELED",
            };
            *label_counts.entry(key).or_insert(0) += 1;
        }
        lines.push(format!("site {}: {} records", site.config.site_id, records.len()));
    }
    if !any_records {
        return Err(Error::MissingArtifact(config.paths.records_dir.clone()));
    }
    lines.push(String::new());
    for (label, count) in &label_counts {
        lines.push(format!("{label}: {count}"));
    }

    let eval_path = config.paths.reports_dir.join("eval.ndjson");
    if eval_path.exists() {
        let (rows, aggregate) = evalharness::read_report_rows(&eval_path)?;
        lines.push(String::new());
        lines.push("evaluation:".to_string());
        for (unit, m) in &rows {
            lines.push(format!(
                "  {unit}: precision {:.4} recall {:.4} f1 {:.4} (support {})",
                m.precision, m.recall, m.f1, m.support
            ));
        }
        if let Some(m) = aggregate {
            lines.push(format!(
                "  weighted: precision {:.4} recall {:.4} f1 {:.4} (support {})",
                m.precision, m.recall, m.f1, m.support
            ));
        }
    }

    let zd_path = config.paths.analytics_dir.join("zero_day_candidates.ndjson");
    if zd_path.exists() {
        let text = std::fs::read_to_string(&zd_path).map_err(|e| Error::io(&zd_path, e))?;
        let candidates: Vec<analytics::ZeroDayCandidate> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("bad candidates file: {e}")))?;
        lines.push(String::new());
        lines.push(format!("zero-day candidates: {}", candidates.len()));
        for c in candidates.iter().take(5) {
            lines.push(format!(
                "  {} (price {} BTC, terms: {})",
                c.item_title,
                c.price_btc.map(|p| p.to_string()).unwrap_or_else(|| "?".to_string()),
                c.matched_terms.join(", ")
            ));
        }
    }

    let pl_path = config.paths.analytics_dir.join("power_law.json");
    if pl_path.exists() {
        let text = std::fs::read_to_string(&pl_path).map_err(|e| Error::io(&pl_path, e))?;
        let fit: analytics::PowerLawFit = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("bad power-law file: {e}")))?;
        lines.push(String::new());
        lines.push(format!("presence power law: alpha {:.3}, R² {:.3}", fit.alpha, fit.r_squared));
    }

    ensure_dir(&config.paths.reports_dir)?;
    let report = lines.join("\n") + "\n";
    let path = config.paths.reports_dir.join("report.txt");
    std::fs::write(&path, &report).map_err(|e| Error::io(&path, e))?;
    print!("{report}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Crawl,
    Parse,
    Label,
    Train,
    Classify,
    Evaluate,
    Analyze,
    Report,
}

pub struct CliOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub fixed_clock: Option<DateTime<Utc>>,
}

fn dispatch(command: Command, options: &CliOptions) -> Result<()> {
    let mut config = load_run_config(&options.config)?;
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    let clock: Box<dyn Clock> = match options.fixed_clock {
        Some(at) => Box::new(FixedClock(at)),
        None => Box::new(SystemClock),
    };
    match command {
        Command::Crawl => cmd_crawl(&config, clock.as_ref()),
        Command::Parse => cmd_parse(&config),
        Command::Label => cmd_label(&config),
        Command::Train => cmd_train(&config),
        Command::Classify => cmd_classify(&config),
        Command::Evaluate => cmd_evaluate(&config),
        Command::Analyze => cmd_analyze(&config),
        Command::Report => cmd_report(&config),
    }
}

/// Run one subcommand, mapping errors to process exit codes.
pub fn run(command: Command, options: &CliOptions) -> i32 {
    match dispatch(command, options) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
