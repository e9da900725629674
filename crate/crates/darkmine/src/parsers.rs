//! Schema-driven extraction of MarketProduct and ForumTopic records from
//! HTML, plus link extraction and the relevant-URL feedback list for
//! re-crawling.
//!
//! Parsing is pure: the same document and schema always yield identical
//! records, with observation timestamps injected by the caller. Partially
//! broken pages yield what matches plus warnings; only a missing mandatory
//! field fails the page.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};

use crate::analytics::extract_cves;
use crate::datamodel::{Classified, ForumPost, ForumTopic, Label, MarketProduct, RecordKind};
use crate::error::{Error, Result};

pub const MANDATORY_MARKET_FIELDS: &[&str] = &["item_title", "item_description", "vendor_name"];
pub const MANDATORY_FORUM_FIELDS: &[&str] =
    &["topic_content", "topic_author", "post_content", "post_author"];

/// Declarative per-site extraction rules. Document paths are CSS selectors,
/// optionally suffixed with ` @attr` to read an attribute instead of text.
///
/// `record_selector` picks the product (MARKET) or topic (FORUM) nodes;
/// field selectors are evaluated within each record node. Forum post fields
/// (`post_*`) are evaluated within each `post_selector` node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSchema {
    pub site_id: String,
    pub kind: RecordKind,
    pub record_selector: String,
    #[serde(default)]
    pub post_selector: Option<String>,
    pub selectors: BTreeMap<String, String>,
    #[serde(default)]
    pub link_selectors: Vec<String>,
    #[serde(default)]
    pub pagination_selector: Option<String>,
}

impl ExtractionSchema {
    /// Schema completeness is checked here, at load time, never at parse
    /// time.
    pub fn validate(&self) -> Result<()> {
        let mandatory: &[&str] = match self.kind {
            RecordKind::Market => MANDATORY_MARKET_FIELDS,
            RecordKind::Forum => MANDATORY_FORUM_FIELDS,
        };
        for field in mandatory {
            if !self.selectors.contains_key(*field) {
                return Err(Error::Config(format!(
                    "schema `{}`: missing mandatory selector `{field}`",
                    self.site_id
                )));
            }
        }
        if self.kind == RecordKind::Forum && self.post_selector.is_none() {
            return Err(Error::Config(format!(
                "schema `{}`: forum schema needs post_selector",
                self.site_id
            )));
        }
        compile(&self.record_selector)?;
        if let Some(ps) = &self.post_selector {
            compile(ps)?;
        }
        for expr in self.selectors.values() {
            compile(expr)?;
        }
        for expr in &self.link_selectors {
            compile(expr)?;
        }
        if let Some(p) = &self.pagination_selector {
            compile(p)?;
        }
        Ok(())
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<ExtractionSchema> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let schema: ExtractionSchema = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
    schema.validate()?;
    Ok(schema)
}

/// One recorded extraction warning, emitted as an NDJSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub url: String,
    pub field: String,
    pub message: String,
}

struct CompiledPath {
    selector: Selector,
    attr: Option<String>,
}

fn compile(expr: &str) -> Result<CompiledPath> {
    let (css, attr) = match expr.rsplit_once(" @") {
        Some((css, attr)) => (css, Some(attr.to_string())),
        None => (expr, None),
    };
    let selector = Selector::parse(css)
        .map_err(|e| Error::Config(format!("bad selector `{css}`: {e}")))?;
    Ok(CompiledPath { selector, attr })
}

fn normalize_ws(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn extract_one(node: &ElementRef, path: &CompiledPath) -> Option<String> {
    // `select` walks descendants only; a selector may also describe the
    // record node itself (reading its own attribute, typically).
    let element = if path.selector.matches(node) {
        *node
    } else {
        node.select(&path.selector).next()?
    };
    match &path.attr {
        Some(attr) => element.value().attr(attr).map(|v| v.trim().to_string()),
        None => Some(normalize_ws(&element.text().collect::<String>())),
    }
}

fn extract_all(node: &ElementRef, path: &CompiledPath) -> Vec<String> {
    node.select(&path.selector)
        .map(|element| match &path.attr {
            Some(attr) => element.value().attr(attr).unwrap_or_default().trim().to_string(),
            None => normalize_ws(&element.text().collect::<String>()),
        })
        .collect()
}

fn first_unsigned(text: &str) -> Option<u64> {
    let cleaned = text.replace(',', "");
    let digits: String =
        cleaned.chars().skip_while(|c| !c.is_ascii_digit()).take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn first_integer(text: &str) -> Option<i64> {
    let cleaned = text.replace(',', "");
    let bytes: Vec<char> = cleaned.chars().collect();
    for (i, c) in bytes.iter().enumerate() {
        if c.is_ascii_digit() {
            let negative = i > 0 && bytes[i - 1] == '-';
            let digits: String = bytes[i..].iter().take_while(|c| c.is_ascii_digit()).collect();
            let value: i64 = digits.parse().ok()?;
            return Some(if negative { -value } else { value });
        }
    }
    None
}

fn first_decimal(text: &str) -> Option<f64> {
    let cleaned = text.replace(',', "");
    let chars: Vec<char> = cleaned.chars().collect();
    let start = chars.iter().position(|c| c.is_ascii_digit())?;
    let mut end = start;
    let mut seen_dot = false;
    while end < chars.len() {
        let c = chars[end];
        if c.is_ascii_digit() {
            end += 1;
        } else if c == '.' && !seen_dot && end + 1 < chars.len() && chars[end + 1].is_ascii_digit() {
            seen_dot = true;
            end += 1;
        } else {
            break;
        }
    }
    chars[start..end].iter().collect::<String>().parse().ok()
}

struct FieldReader<'a> {
    paths: BTreeMap<&'a str, CompiledPath>,
    url: String,
    warnings: Vec<Warning>,
}

impl<'a> FieldReader<'a> {
    fn new(schema: &'a ExtractionSchema, url: &str) -> Result<Self> {
        let mut paths = BTreeMap::new();
        for (field, expr) in &schema.selectors {
            paths.insert(field.as_str(), compile(expr)?);
        }
        Ok(FieldReader { paths, url: url.to_string(), warnings: Vec::new() })
    }

    fn mandatory(&mut self, node: &ElementRef, field: &str) -> Result<String> {
        self.paths
            .get(field)
            .and_then(|p| extract_one(node, p))
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Extraction { url: self.url.clone(), field: field.to_string() })
    }

    fn optional_text(&mut self, node: &ElementRef, field: &str) -> Option<String> {
        self.paths.get(field).and_then(|p| extract_one(node, p)).filter(|s| !s.is_empty())
    }

    fn numeric<T>(
        &mut self,
        node: &ElementRef,
        field: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Option<T> {
        let text = self.paths.get(field).and_then(|p| extract_one(node, p))?;
        if text.is_empty() {
            return None;
        }
        match parse(&text) {
            Some(v) => Some(v),
            None => {
                self.warnings.push(Warning {
                    url: self.url.clone(),
                    field: field.to_string(),
                    message: format!("unparseable numeric text `{text}`"),
                });
                None
            }
        }
    }

    fn sequence(&mut self, node: &ElementRef, field: &str) -> Vec<String> {
        self.paths
            .get(field)
            .map(|p| extract_all(node, p).into_iter().filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    }
}

/// One MarketProduct per record node. Absent optional fields become nulls,
/// numeric fields are parsed from digits embedded in text, and CVE ids come
/// from the title and description.
pub fn parse_market_page(
    html: &str,
    schema: &ExtractionSchema,
    page_url: &str,
    observed_at: DateTime<Utc>,
) -> Result<(Vec<MarketProduct>, Vec<Warning>)> {
    debug_assert_eq!(schema.kind, RecordKind::Market);
    let doc = Html::parse_document(html);
    let record_path = compile(&schema.record_selector)?;
    let mut reader = FieldReader::new(schema, page_url)?;
    let mut products = Vec::new();

    for node in doc.select(&record_path.selector) {
        let item_title = reader.mandatory(&node, "item_title")?;
        let item_description = reader.mandatory(&node, "item_description")?;
        let vendor_name = reader.mandatory(&node, "vendor_name")?;
        let shipping_details = reader.optional_text(&node, "shipping_details").unwrap_or_default();
        let item_reviews = reader.sequence(&node, "item_reviews");
        let items_sold = reader.numeric(&node, "items_sold", first_unsigned);
        let items_left = reader.numeric(&node, "items_left", first_unsigned);
        let ratings = reader.numeric(&node, "ratings", first_decimal);
        let price_btc = reader.numeric(&node, "price_btc", first_decimal);
        let transaction_details = reader.optional_text(&node, "transaction_details");
        let url = match reader.optional_text(&node, "url") {
            Some(href) => resolve_href(page_url, &href).unwrap_or_else(|| {
                reader.warnings.push(Warning {
                    url: page_url.to_string(),
                    field: "url".to_string(),
                    message: format!("unresolvable product href `{href}`"),
                });
                page_url.to_string()
            }),
            None => page_url.to_string(),
        };
        let cve_ids = extract_cves(&format!("{item_title} {item_description}"));

        products.push(MarketProduct {
            site_id: schema.site_id.clone(),
            url,
            item_title,
            item_description,
            vendor_name,
            shipping_details,
            item_reviews,
            items_sold,
            items_left,
            cve_ids,
            transaction_details,
            ratings,
            price_btc,
            first_seen: observed_at,
            last_seen: observed_at,
            label: Label::Unlabeled,
        });
    }
    Ok((products, reader.warnings))
}

/// Topics with nested posts in page order. Reputation parses as a signed
/// integer, timestamps as RFC3339 when a selector is configured.
pub fn parse_forum_page(
    html: &str,
    schema: &ExtractionSchema,
    page_url: &str,
    observed_at: DateTime<Utc>,
) -> Result<(Vec<ForumTopic>, Vec<Warning>)> {
    debug_assert_eq!(schema.kind, RecordKind::Forum);
    let _ = observed_at;
    let doc = Html::parse_document(html);
    let record_path = compile(&schema.record_selector)?;
    let post_path = compile(schema.post_selector.as_deref().unwrap_or("post"))?;
    let mut reader = FieldReader::new(schema, page_url)?;
    let mut topics = Vec::new();

    for (t_idx, node) in doc.select(&record_path.selector).enumerate() {
        let topic_content = reader.mandatory(&node, "topic_content")?;
        let topic_author = reader.mandatory(&node, "topic_author")?;
        let topic_id = reader
            .optional_text(&node, "topic_id")
            .unwrap_or_else(|| format!("{page_url}#t{}", t_idx + 1));
        let topic_interest = reader.numeric(&node, "topic_interest", first_unsigned);

        let mut posts = Vec::new();
        for (p_idx, post_node) in node.select(&post_path.selector).enumerate() {
            let post_content = reader.mandatory(&post_node, "post_content")?;
            let post_author = reader.mandatory(&post_node, "post_author")?;
            // Fallback ids carry the page URL: per-page positional numbering
            // would collide when a paginated topic is merged.
            let post_id = reader
                .optional_text(&post_node, "post_id")
                .unwrap_or_else(|| format!("{page_url}#p{}", p_idx + 1));
            let author_status = reader.optional_text(&post_node, "author_status");
            let reputation = reader.numeric(&post_node, "reputation", first_integer);
            let timestamp = match reader.optional_text(&post_node, "timestamp") {
                None => None,
                Some(raw) => match DateTime::parse_from_rfc3339(&raw) {
                    Ok(ts) => Some(ts.with_timezone(&Utc)),
                    Err(e) => {
                        reader.warnings.push(Warning {
                            url: page_url.to_string(),
                            field: "timestamp".to_string(),
                            message: format!("bad timestamp `{raw}`: {e}"),
                        });
                        None
                    }
                },
            };
            posts.push(ForumPost {
                post_id,
                post_content,
                post_author,
                author_status,
                reputation,
                timestamp,
            });
        }

        topics.push(ForumTopic {
            site_id: schema.site_id.clone(),
            topic_id,
            topic_content,
            topic_author,
            topic_interest,
            posts,
            label: Label::Unlabeled,
        });
    }
    Ok((topics, reader.warnings))
}

/// Merge topics that share (site_id, topic_id) — the paginated case — by
/// appending posts in input order, deduplicating by post_id, then restoring
/// timestamp order among timestamped posts.
pub fn merge_forum_topics(topics: Vec<ForumTopic>) -> Vec<ForumTopic> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut merged: BTreeMap<(String, String), ForumTopic> = BTreeMap::new();
    for topic in topics {
        let key = (topic.site_id.clone(), topic.topic_id.clone());
        match merged.get_mut(&key) {
            None => {
                order.push(key.clone());
                merged.insert(key, topic);
            }
            Some(existing) => {
                if existing.topic_interest.is_none() {
                    existing.topic_interest = topic.topic_interest;
                }
                existing.posts.extend(topic.posts);
            }
        }
    }
    order
        .into_iter()
        .map(|key| {
            let mut topic = merged.remove(&key).expect("key recorded at insert");
            let mut seen = std::collections::HashSet::new();
            topic.posts.retain(|p| seen.insert(p.post_id.clone()));
            sort_timestamped_posts(&mut topic.posts);
            topic
        })
        .collect()
}

/// Stable-sort only the timestamped posts among themselves, leaving
/// untimestamped posts at their positions.
fn sort_timestamped_posts(posts: &mut [ForumPost]) {
    let slots: Vec<usize> =
        posts.iter().enumerate().filter(|(_, p)| p.timestamp.is_some()).map(|(i, _)| i).collect();
    let mut timestamped: Vec<ForumPost> =
        slots.iter().map(|&i| posts[i].clone()).collect();
    timestamped.sort_by_key(|p| p.timestamp);
    for (slot, post) in slots.into_iter().zip(timestamped) {
        posts[slot] = post;
    }
}

fn resolve_href(base: &str, href: &str) -> Option<String> {
    let base = url::Url::parse(base).ok()?;
    base.join(href).ok().map(|u| u.to_string())
}

/// All link_selectors and pagination_selector matches resolved against the
/// base URL; duplicates removed preserving first occurrence. Unresolvable
/// hrefs are skipped with a warning.
pub fn extract_links(
    html: &str,
    schema: &ExtractionSchema,
    base_url: &str,
) -> Result<(Vec<String>, Vec<Warning>)> {
    let doc = Html::parse_document(html);
    let mut warnings = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut links = Vec::new();

    let mut paths: Vec<CompiledPath> = Vec::new();
    for expr in &schema.link_selectors {
        paths.push(compile(expr)?);
    }
    if let Some(p) = &schema.pagination_selector {
        paths.push(compile(p)?);
    }
    for path in &paths {
        for element in doc.select(&path.selector) {
            let href = match &path.attr {
                Some(attr) => element.value().attr(attr),
                None => element.value().attr("href"),
            };
            let Some(href) = href else { continue };
            match resolve_href(base_url, href) {
                Some(absolute) => {
                    if seen.insert(absolute.clone()) {
                        links.push(absolute);
                    }
                }
                None => warnings.push(Warning {
                    url: base_url.to_string(),
                    field: "href".to_string(),
                    message: format!("unresolvable href `{href}`"),
                }),
            }
        }
    }
    Ok((links, warnings))
}

/// URLs of RELEVANT records, deduplicated in stable order: the feedback
/// list the parser hands back to the crawler.
pub fn relevant_url_list<R: Classified>(records: &[R]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut urls = Vec::new();
    for record in records {
        if record.label() != Label::Relevant {
            continue;
        }
        if let Some(url) = record.record_url() {
            if seen.insert(url.to_string()) {
                urls.push(url.to_string());
            }
        }
    }
    urls
}

pub fn write_warnings(warnings: &[Warning], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for w in warnings {
        out.push_str(&serde_json::to_string(w).expect("warning serializes"));
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}
