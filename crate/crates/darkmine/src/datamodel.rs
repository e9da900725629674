//! Canonical record types for marketplace and forum content, label handling,
//! and file-backed NDJSON/CSV persistence shared by every other module.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relevance label attached to products and topics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "RELEVANT")]
    Relevant,
    #[serde(rename = "NOT_RELEVANT")]
    NotRelevant,
    #[serde(rename = "UNLABELED")]
    Unlabeled,
}

impl Label {
    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }
}

/// Platform kind. Markets sell products, forums host discussions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordKind {
    #[serde(rename = "MARKET")]
    Market,
    #[serde(rename = "FORUM")]
    Forum,
}

fn cve_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap())
}

/// A single marketplace listing.
///
/// Absent numeric fields are stored as explicit nulls, never zero: zero
/// items_sold is meaningful data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketProduct {
    pub site_id: String,
    pub url: String,
    pub item_title: String,
    pub item_description: String,
    pub vendor_name: String,
    pub shipping_details: String,
    pub item_reviews: Vec<String>,
    pub items_sold: Option<u64>,
    pub items_left: Option<u64>,
    pub cve_ids: Vec<String>,
    pub transaction_details: Option<String>,
    pub ratings: Option<f64>,
    pub price_btc: Option<f64>,
    pub first_seen: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
    pub label: Label,
}

impl MarketProduct {
    pub fn validate(&self) -> Result<()> {
        if self.first_seen > self.last_seen {
            return Err(Error::validation(
                "first_seen",
                format!("first_seen {} is after last_seen {}", self.first_seen, self.last_seen),
            ));
        }
        for cve in &self.cve_ids {
            if !cve_pattern().is_match(cve) {
                return Err(Error::validation(
                    "cve_ids",
                    format!("`{cve}` does not match CVE-<4 digits>-<4+ digits>"),
                ));
            }
        }
        if let Some(r) = self.ratings {
            if !(0.0..=5.0).contains(&r) {
                return Err(Error::validation("ratings", format!("{r} outside [0, 5]")));
            }
        }
        if let Some(p) = self.price_btc {
            if p < 0.0 || !p.is_finite() {
                return Err(Error::validation("price_btc", format!("{p} is negative or non-finite")));
            }
        }
        Ok(())
    }
}

/// A forum discussion thread with its posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForumTopic {
    pub site_id: String,
    pub topic_id: String,
    pub topic_content: String,
    pub topic_author: String,
    pub topic_interest: Option<u64>,
    pub posts: Vec<ForumPost>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForumPost {
    pub post_id: String,
    pub post_content: String,
    pub post_author: String,
    pub author_status: Option<String>,
    pub reputation: Option<i64>,
    pub timestamp: Option<DateTime<Utc>>,
}

impl ForumTopic {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for post in &self.posts {
            if !seen.insert(post.post_id.as_str()) {
                return Err(Error::validation(
                    "post_id",
                    format!("duplicate post_id `{}` within topic `{}`", post.post_id, self.topic_id),
                ));
            }
        }
        // The timestamped subsequence of posts must be nondecreasing.
        let mut last: Option<DateTime<Utc>> = None;
        for post in &self.posts {
            if let Some(ts) = post.timestamp {
                if let Some(prev) = last {
                    if ts < prev {
                        return Err(Error::validation(
                            "posts",
                            format!("posts of topic `{}` not ordered by timestamp", self.topic_id),
                        ));
                    }
                }
                last = Some(ts);
            }
        }
        Ok(())
    }
}

/// Uniform classifier input derived from either record type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub source_site: String,
    pub title_text: String,
    pub body_text: String,
    pub label: Label,
}

/// Something a classifier label can be read from and, when the record has a
/// stable URL, fed back to the crawler.
pub trait Classified {
    fn label(&self) -> Label;
    fn set_label(&mut self, label: Label);
    fn record_url(&self) -> Option<&str>;
    fn to_example(&self) -> LabeledExample;
}

impl Classified for MarketProduct {
    fn label(&self) -> Label {
        self.label
    }
    fn set_label(&mut self, label: Label) {
        self.label = label;
    }
    fn record_url(&self) -> Option<&str> {
        Some(&self.url)
    }
    fn to_example(&self) -> LabeledExample {
        LabeledExample {
            source_site: self.site_id.clone(),
            title_text: self.item_title.clone(),
            body_text: self.item_description.clone(),
            label: self.label,
        }
    }
}

impl Classified for ForumTopic {
    fn label(&self) -> Label {
        self.label
    }
    fn set_label(&mut self, label: Label) {
        self.label = label;
    }
    fn record_url(&self) -> Option<&str> {
        None
    }
    fn to_example(&self) -> LabeledExample {
        let body: Vec<&str> = self.posts.iter().map(|p| p.post_content.as_str()).collect();
        LabeledExample {
            source_site: self.site_id.clone(),
            title_text: self.topic_content.clone(),
            body_text: body.join(" "),
            label: self.label,
        }
    }
}

/// Map a record to its classifier input. Total on valid records.
pub fn to_example<R: Classified>(record: &R) -> LabeledExample {
    record.to_example()
}

/// Either store loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Market(Vec<MarketProduct>),
    Forum(Vec<ForumTopic>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Market(v) => v.len(),
            Records::Forum(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn examples(&self) -> Vec<LabeledExample> {
        match self {
            Records::Market(v) => v.iter().map(to_example).collect(),
            Records::Forum(v) => v.iter().map(to_example).collect(),
        }
    }
}

fn write_ndjson<T: Serialize>(records: &[T], path: &Path) -> Result<usize> {
    let mut out = Vec::new();
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(records.len())
}

fn read_ndjson<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Write validated products to an NDJSON file, one record per line.
pub fn save_products(products: &[MarketProduct], path: impl AsRef<Path>) -> Result<usize> {
    for p in products {
        p.validate()?;
    }
    write_ndjson(products, path.as_ref())
}

/// Write validated topics to an NDJSON file. Topic ids must be unique per site.
pub fn save_topics(topics: &[ForumTopic], path: impl AsRef<Path>) -> Result<usize> {
    validate_topic_ids(topics)?;
    for t in topics {
        t.validate()?;
    }
    write_ndjson(topics, path.as_ref())
}

fn validate_topic_ids(topics: &[ForumTopic]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for t in topics {
        if !seen.insert((t.site_id.as_str(), t.topic_id.as_str())) {
            return Err(Error::validation(
                "topic_id",
                format!("duplicate topic_id `{}` within site `{}`", t.topic_id, t.site_id),
            ));
        }
    }
    Ok(())
}

pub fn load_products(path: impl AsRef<Path>) -> Result<Vec<MarketProduct>> {
    let products: Vec<MarketProduct> = read_ndjson(path.as_ref())?;
    for p in &products {
        p.validate()?;
    }
    Ok(products)
}

pub fn load_topics(path: impl AsRef<Path>) -> Result<Vec<ForumTopic>> {
    let topics: Vec<ForumTopic> = read_ndjson(path.as_ref())?;
    validate_topic_ids(&topics)?;
    for t in &topics {
        t.validate()?;
    }
    Ok(topics)
}

/// Kind-dispatching load; order of lines is preserved.
pub fn load_records(path: impl AsRef<Path>, kind: RecordKind) -> Result<Records> {
    match kind {
        RecordKind::Market => Ok(Records::Market(load_products(path)?)),
        RecordKind::Forum => Ok(Records::Forum(load_topics(path)?)),
    }
}

/// Kind-dispatching save; returns the number of records written.
pub fn save_records(records: &Records, path: impl AsRef<Path>) -> Result<usize> {
    match records {
        Records::Market(v) => save_products(v, path),
        Records::Forum(v) => save_topics(v, path),
    }
}

/// One line of a label file: record key plus the label to stamp on it.
/// Products are keyed by url, topics by topic_id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub site_id: String,
    pub key: String,
    pub label: Label,
}

pub fn load_label_file(path: impl AsRef<Path>) -> Result<Vec<LabelAssignment>> {
    read_ndjson(path.as_ref())
}

/// Stamp labels onto records in place. Returns the number applied.
///
/// Every key in `labels` must resolve to exactly one record; a duplicate key
/// in the label file, a key matching nothing, or a key matching more than one
/// record is an error listing the offending keys. Applying the same label
/// file twice equals applying it once.
pub fn apply_labels<R, F>(records: &mut [R], labels: &[LabelAssignment], key_of: F) -> Result<usize>
where
    R: Classified,
    F: Fn(&R) -> (String, String),
{
    let mut dup_in_file = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert((l.site_id.as_str(), l.key.as_str())) {
            dup_in_file.push(format!("{}/{}", l.site_id, l.key));
        }
    }
    if !dup_in_file.is_empty() {
        return Err(Error::Labels(format!(
            "duplicate keys in label file: {}",
            dup_in_file.join(", ")
        )));
    }

    let mut index: HashMap<(String, String), Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        index.entry(key_of(r)).or_default().push(i);
    }

    let mut missing = Vec::new();
    let mut ambiguous = Vec::new();
    let mut hits: Vec<(usize, Label)> = Vec::new();
    for l in labels {
        match index.get(&(l.site_id.clone(), l.key.clone())) {
            None => missing.push(format!("{}/{}", l.site_id, l.key)),
            Some(ids) if ids.len() > 1 => ambiguous.push(format!("{}/{}", l.site_id, l.key)),
            Some(ids) => hits.push((ids[0], l.label)),
        }
    }
    if !missing.is_empty() || !ambiguous.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing keys: {}", missing.join(", ")));
        }
        if !ambiguous.is_empty() {
            parts.push(format!("ambiguous keys: {}", ambiguous.join(", ")));
        }
        return Err(Error::Labels(parts.join("; ")));
    }

    for (i, label) in &hits {
        records[*i].set_label(*label);
    }
    Ok(hits.len())
}

pub fn apply_product_labels(products: &mut [MarketProduct], labels: &[LabelAssignment]) -> Result<usize> {
    apply_labels(products, labels, |p| (p.site_id.clone(), p.url.clone()))
}

pub fn apply_topic_labels(topics: &mut [ForumTopic], labels: &[LabelAssignment]) -> Result<usize> {
    apply_labels(topics, labels, |t| (t.site_id.clone(), t.topic_id.clone()))
}

/// Normalize a raw CVE mention ("CVE 2015-0057", "cve-2015-0057") to the
/// canonical `CVE-YYYY-NNNN...` form. Returns None when the text is not a
/// CVE identifier.
pub fn normalize_cve(raw: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)^\s*CVE[ -](\d{4})[ -](\d{4,})\s*$").unwrap());
    let caps = re.captures(raw)?;
    Some(format!("CVE-{}-{}", &caps[1], &caps[2]))
}

fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') || raw.contains('\r') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn csv_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn label_str(label: Label) -> &'static str {
    match label {
        Label::Relevant => "RELEVANT",
        Label::NotRelevant => "NOT_RELEVANT",
        Label::Unlabeled => "UNLABELED",
    }
}

pub const PRODUCT_CSV_HEADER: &str = "site_id,url,item_title,item_description,vendor_name,shipping_details,item_reviews,items_sold,items_left,cve_ids,transaction_details,ratings,price_btc,first_seen,last_seen,label";

pub const TOPIC_CSV_HEADER: &str = "site_id,topic_id,topic_content,topic_author,topic_interest,posts,label";

/// CSV export with a fixed column order; sequence fields are joined with `|`.
pub fn export_products_csv(products: &[MarketProduct], path: impl AsRef<Path>) -> Result<usize> {
    let mut out = String::new();
    out.push_str(PRODUCT_CSV_HEADER);
    out.push('\n');
    for p in products {
        let row = [
            csv_field(&p.site_id),
            csv_field(&p.url),
            csv_field(&p.item_title),
            csv_field(&p.item_description),
            csv_field(&p.vendor_name),
            csv_field(&p.shipping_details),
            csv_field(&p.item_reviews.join("|")),
            csv_opt(&p.items_sold),
            csv_opt(&p.items_left),
            csv_field(&p.cve_ids.join("|")),
            csv_field(p.transaction_details.as_deref().unwrap_or("")),
            csv_opt(&p.ratings),
            csv_opt(&p.price_btc),
            p.first_seen.to_rfc3339(),
            p.last_seen.to_rfc3339(),
            label_str(p.label).to_string(),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(products.len())
}

pub fn export_topics_csv(topics: &[ForumTopic], path: impl AsRef<Path>) -> Result<usize> {
    let mut out = String::new();
    out.push_str(TOPIC_CSV_HEADER);
    out.push('\n');
    for t in topics {
        let posts: Vec<&str> = t.posts.iter().map(|p| p.post_content.as_str()).collect();
        let row = [
            csv_field(&t.site_id),
            csv_field(&t.topic_id),
            csv_field(&t.topic_content),
            csv_field(&t.topic_author),
            csv_opt(&t.topic_interest),
            csv_field(&posts.join("|")),
            label_str(t.label).to_string(),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(topics.len())
}
