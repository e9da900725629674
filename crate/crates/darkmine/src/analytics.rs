//! Case-study computations: cross-site username graph, multi-presence
//! power-law histogram, vendor ego networks, CVE extraction, and zero-day
//! candidate detection.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::datamodel::{ForumTopic, Label, MarketProduct, RecordKind};
use crate::error::{Error, Result};
use crate::textpipe::clean_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "VENDOR")]
    Vendor,
    #[serde(rename = "MEMBER")]
    Member,
}

/// Bipartite username ↔ site graph with role-tagged weighted edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiteGraph {
    user_nodes: BTreeSet<String>,
    site_nodes: BTreeMap<String, RecordKind>,
    edges: BTreeMap<(String, String), (Role, u64)>,
}

impl SiteGraph {
    pub fn user_count(&self) -> usize {
        self.user_nodes.len()
    }

    pub fn site_count(&self) -> usize {
        self.site_nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.user_nodes.iter().map(|s| s.as_str())
    }

    pub fn sites(&self) -> impl Iterator<Item = (&str, RecordKind)> {
        self.site_nodes.iter().map(|(s, k)| (s.as_str(), *k))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, Role, u64)> {
        self.edges.iter().map(|((u, s), (r, w))| (u.as_str(), s.as_str(), *r, *w))
    }

    pub fn contains_user(&self, canonical: &str) -> bool {
        self.user_nodes.contains(canonical)
    }

    /// Distinct sites a user touches.
    pub fn user_degree(&self, canonical: &str) -> usize {
        self.edges.keys().filter(|(u, _)| u == canonical).count()
    }

    fn add_edge(&mut self, user: String, site: String, kind: RecordKind, role: Role, weight: u64) {
        self.user_nodes.insert(user.clone());
        self.site_nodes.entry(site.clone()).or_insert(kind);
        let entry = self.edges.entry((user, site)).or_insert((role, 0));
        entry.1 += weight;
    }
}

/// Trim and case-fold. Identity across sites is exact string equality on
/// this form; no fuzzy matching.
pub fn canonical_username(raw: &str) -> Result<String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::InvalidInput("empty username".into()));
    }
    Ok(trimmed.to_lowercase())
}

/// Vendor edges come from products (weight = product count); member edges
/// from topic and post authorship (weight = authored item count). Records
/// with empty usernames are skipped with a warning.
pub fn build_site_graph(
    products: &[MarketProduct],
    topics: &[ForumTopic],
) -> (SiteGraph, Vec<String>) {
    let mut graph = SiteGraph::default();
    let mut warnings = Vec::new();

    for p in products {
        match canonical_username(&p.vendor_name) {
            Ok(user) => {
                graph.add_edge(user, p.site_id.clone(), RecordKind::Market, Role::Vendor, 1)
            }
            Err(_) => warnings.push(format!("product {} on {}: empty vendor_name", p.url, p.site_id)),
        }
    }
    for t in topics {
        match canonical_username(&t.topic_author) {
            Ok(user) => {
                graph.add_edge(user, t.site_id.clone(), RecordKind::Forum, Role::Member, 1)
            }
            Err(_) => warnings.push(format!(
                "topic {} on {}: empty topic_author",
                t.topic_id, t.site_id
            )),
        }
        for post in &t.posts {
            match canonical_username(&post.post_author) {
                Ok(user) => {
                    graph.add_edge(user, t.site_id.clone(), RecordKind::Forum, Role::Member, 1)
                }
                Err(_) => warnings.push(format!(
                    "post {} in topic {}: empty post_author",
                    post.post_id, t.topic_id
                )),
            }
        }
    }
    (graph, warnings)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceHistogram {
    /// site-count → number of users on exactly that many sites.
    pub counts: BTreeMap<usize, usize>,
    /// Users present on more than two platforms.
    pub users_on_more_than_two: usize,
}

pub fn presence_histogram(graph: &SiteGraph) -> PresenceHistogram {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut gt2 = 0;
    for user in graph.users() {
        let degree = graph.user_degree(user);
        *counts.entry(degree).or_insert(0) += 1;
        if degree > 2 {
            gt2 += 1;
        }
    }
    PresenceHistogram { counts, users_on_more_than_two: gt2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub r_squared: f64,
}

/// Least-squares slope of log(frequency) vs log(site-count);
/// alpha = −slope. Needs at least 3 support points.
pub fn fit_power_law(counts: &BTreeMap<usize, usize>) -> Result<PowerLawFit> {
    let points: Vec<(f64, f64)> = counts
        .iter()
        .filter(|(s, freq)| **s > 0 && **freq > 0)
        .map(|(s, freq)| ((*s as f64).ln(), (*freq as f64).ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "power-law fit needs >= 3 support points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let var_x: f64 = points.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let cov: f64 = points.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = cov / var_x;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points.iter().map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res < 1e-12 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(PowerLawFit { alpha: -slope, r_squared })
}

/// Induced bipartite subgraph within `radius` hops of a user. Radius 0 is
/// the user alone, radius 1 adds their sites, radius 2 those sites' other
/// users, and so on.
pub fn ego_network(graph: &SiteGraph, username: &str, radius: usize) -> Result<SiteGraph> {
    let center = canonical_username(username)?;
    if !graph.contains_user(&center) {
        return Err(Error::InvalidInput(format!("unknown user `{center}`")));
    }

    #[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
    enum Node {
        User(String),
        Site(String),
    }
    let mut dist: BTreeMap<Node, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    dist.insert(Node::User(center.clone()), 0);
    queue.push_back(Node::User(center));
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        if d == radius {
            continue;
        }
        let neighbors: Vec<Node> = match &node {
            Node::User(u) => graph
                .edges
                .keys()
                .filter(|(user, _)| user == u)
                .map(|(_, site)| Node::Site(site.clone()))
                .collect(),
            Node::Site(s) => graph
                .edges
                .keys()
                .filter(|(_, site)| site == s)
                .map(|(user, _)| Node::User(user.clone()))
                .collect(),
        };
        for next in neighbors {
            if !dist.contains_key(&next) {
                dist.insert(next.clone(), d + 1);
                queue.push_back(next);
            }
        }
    }

    let mut sub = SiteGraph::default();
    for node in dist.keys() {
        match node {
            Node::User(u) => {
                sub.user_nodes.insert(u.clone());
            }
            Node::Site(s) => {
                sub.site_nodes.insert(s.clone(), graph.site_nodes[s]);
            }
        }
    }
    for ((user, site), (role, weight)) in &graph.edges {
        if dist.contains_key(&Node::User(user.clone())) && dist.contains_key(&Node::Site(site.clone()))
        {
            sub.edges.insert((user.clone(), site.clone()), (*role, *weight));
        }
    }
    Ok(sub)
}

fn cve_mention_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bCVE[ -](\d{4})[ -](\d{4,})\b").unwrap())
}

/// Normalized CVE identifiers in order of first appearance, deduplicated.
pub fn extract_cves(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for caps in cve_mention_pattern().captures_iter(text) {
        let id = format!("CVE-{}-{}", &caps[1], &caps[2]);
        if seen.insert(id.clone()) {
            out.push(id);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroDayCandidate {
    pub site_id: String,
    pub url: String,
    pub item_title: String,
    pub matched_terms: Vec<String>,
    pub price_btc: Option<f64>,
    pub cve_ids: Vec<String>,
}

pub fn default_zero_day_terms() -> Vec<String> {
    ["0day", "0 day", "zero day", "zeroday", "rce 0day"]
        .into_iter()
        .map(String::from)
        .collect()
}

pub fn load_zero_day_terms(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn padded_clean(text: &str) -> String {
    let words = clean_text(text, &BTreeSet::new());
    format!(" {} ", words.join(" "))
}

/// Flag RELEVANT products whose cleaned title or description contains a
/// configured zero-day term. Candidates sort by price descending with
/// absent prices last.
pub fn find_zero_day_candidates(
    products: &[MarketProduct],
    terms: &[String],
) -> Vec<ZeroDayCandidate> {
    let padded_terms: Vec<(String, String)> =
        terms.iter().map(|t| (t.clone(), padded_clean(t))).collect();
    let mut candidates = Vec::new();
    for p in products {
        if p.label != Label::Relevant {
            continue;
        }
        let title = padded_clean(&p.item_title);
        let body = padded_clean(&p.item_description);
        let matched: Vec<String> = padded_terms
            .iter()
            .filter(|(_, padded)| title.contains(padded) || body.contains(padded))
            .map(|(raw, _)| raw.clone())
            .collect();
        if !matched.is_empty() {
            candidates.push(ZeroDayCandidate {
                site_id: p.site_id.clone(),
                url: p.url.clone(),
                item_title: p.item_title.clone(),
                matched_terms: matched,
                price_btc: p.price_btc,
                cve_ids: p.cve_ids.clone(),
            });
        }
    }
    candidates.sort_by(|a, b| match (a.price_btc, b.price_btc) {
        (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    candidates
}

/// Edge-list CSV (username, site_id, role, weight) for external plotting.
pub fn export_edges_csv(graph: &SiteGraph, path: impl AsRef<Path>) -> Result<usize> {
    let mut out = String::from("username,site_id,role,weight\n");
    for (user, site, role, weight) in graph.edges() {
        let role = match role {
            Role::Vendor => "VENDOR",
            Role::Member => "MEMBER",
        };
        out.push_str(&format!("{user},{site},{role},{weight}\n"));
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(graph.edge_count())
}

pub fn export_histogram_csv(hist: &PresenceHistogram, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("site_count,users\n");
    for (s, users) in &hist.counts {
        out.push_str(&format!("{s},{users}\n"));
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn product(site: &str, url: &str, vendor: &str) -> MarketProduct {
        MarketProduct {
            site_id: site.to_string(),
            url: url.to_string(),
            item_title: "item".to_string(),
            item_description: String::new(),
            vendor_name: vendor.to_string(),
            shipping_details: String::new(),
            item_reviews: vec![],
            items_sold: None,
            items_left: None,
            cve_ids: vec![],
            transaction_details: None,
            ratings: None,
            price_btc: None,
            first_seen: chrono::Utc.timestamp_opt(0, 0).unwrap(),
            last_seen: chrono::Utc.timestamp_opt(0, 0).unwrap(),
            label: Label::Relevant,
        }
    }

    fn topic(site: &str, id: &str, author: &str, post_authors: &[&str]) -> ForumTopic {
        ForumTopic {
            site_id: site.to_string(),
            topic_id: id.to_string(),
            topic_content: "t".to_string(),
            topic_author: author.to_string(),
            topic_interest: None,
            posts: post_authors
                .iter()
                .enumerate()
                .map(|(i, a)| crate::datamodel::ForumPost {
                    post_id: format!("p{i}"),
                    post_content: "c".to_string(),
                    post_author: a.to_string(),
                    author_status: None,
                    reputation: None,
                    timestamp: None,
                })
                .collect(),
            label: Label::Unlabeled,
        }
    }

    /// A vendor active on 7 marketplaces (82 products total) and 1 forum.
    fn prolific_vendor_graph() -> SiteGraph {
        let mut products = Vec::new();
        let mut n = 0;
        for m in 0..7 {
            let per_market = if m == 0 { 82 - 6 * 11 } else { 11 };
            for i in 0..per_market {
                products.push(product(&format!("market-{m}"), &format!("http://m{m}/{n}-{i}"), "DarkVendor"));
                n += 1;
            }
        }
        let topics = vec![topic("forum-0", "t1", "darkvendor", &["other_user"])];
        let (graph, warnings) = build_site_graph(&products, &topics);
        assert!(warnings.is_empty());
        assert_eq!(products.len(), 82);
        graph
    }

    #[test]
    fn canonical_username_rules() {
        assert_eq!(canonical_username(" DarkVendor ").unwrap(), "darkvendor");
        assert_eq!(canonical_username("darkvendor").unwrap(), "darkvendor");
        assert_ne!(canonical_username("Dark_Vendor").unwrap(), "darkvendor");
        assert!(canonical_username("   ").is_err());
    }

    #[test]
    fn prolific_vendor_has_eight_edges() {
        let graph = prolific_vendor_graph();
        let degree = graph.user_degree("darkvendor");
        assert_eq!(degree, 8);
        let weight_sum: u64 = graph
            .edges()
            .filter(|(u, _, _, _)| *u == "darkvendor")
            .map(|(_, _, _, w)| w)
            .sum();
        assert_eq!(weight_sum, 82 + 1);
    }

    #[test]
    fn empty_inputs_give_empty_graph() {
        let (graph, warnings) = build_site_graph(&[], &[]);
        assert_eq!(graph.user_count(), 0);
        assert_eq!(graph.edge_count(), 0);
        assert!(warnings.is_empty());
    }

    #[test]
    fn cross_platform_user_has_degree_two() {
        let products = vec![product("m1", "http://m1/1", "alice")];
        let topics = vec![topic("f1", "t1", "Alice", &[])];
        let (graph, _) = build_site_graph(&products, &topics);
        assert_eq!(graph.user_degree("alice"), 2);
        let roles: Vec<Role> =
            graph.edges().filter(|(u, _, _, _)| *u == "alice").map(|(_, _, r, _)| r).collect();
        assert_eq!(roles, vec![Role::Member, Role::Vendor]);
    }

    #[test]
    fn empty_username_skipped_with_warning() {
        let products = vec![product("m1", "http://m1/1", "  ")];
        let (graph, warnings) = build_site_graph(&products, &[]);
        assert_eq!(graph.user_count(), 0);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn histogram_hand_count() {
        // Degrees 1, 1, 2, 3.
        let products = vec![
            product("m1", "http://m1/1", "u1"),
            product("m1", "http://m1/2", "u2"),
            product("m1", "http://m1/3", "u3"),
            product("m2", "http://m2/1", "u3"),
            product("m1", "http://m1/4", "u4"),
            product("m2", "http://m2/2", "u4"),
            product("m3", "http://m3/1", "u4"),
        ];
        let (graph, _) = build_site_graph(&products, &[]);
        let hist = presence_histogram(&graph);
        let expected: BTreeMap<usize, usize> = [(1, 2), (2, 1), (3, 1)].into_iter().collect();
        assert_eq!(hist.counts, expected);
        assert_eq!(hist.users_on_more_than_two, 1);
        let total: usize = hist.counts.values().sum();
        assert_eq!(total, graph.user_count());
    }

    #[test]
    fn all_single_site_users() {
        let products = vec![
            product("m1", "http://m1/1", "u1"),
            product("m1", "http://m1/2", "u2"),
        ];
        let (graph, _) = build_site_graph(&products, &[]);
        let hist = presence_histogram(&graph);
        assert_eq!(hist.counts, [(1, 2)].into_iter().collect());
        assert_eq!(hist.users_on_more_than_two, 0);
    }

    #[test]
    fn power_law_recovers_exponent_two() {
        // freq(s) = round(1000 * s^-2) for s = 1..5.
        let counts: BTreeMap<usize, usize> = (1..=5usize)
            .map(|s| (s, (1000.0 * (s as f64).powi(-2)).round() as usize))
            .collect();
        let fit = fit_power_law(&counts).unwrap();
        assert!(fit.alpha > 1.9 && fit.alpha < 2.1, "alpha {}", fit.alpha);
        assert!(fit.r_squared > 0.99, "r2 {}", fit.r_squared);
    }

    #[test]
    fn uniform_histogram_is_flat() {
        let counts: BTreeMap<usize, usize> = (1..=5usize).map(|s| (s, 42)).collect();
        let fit = fit_power_law(&counts).unwrap();
        assert!(fit.alpha.abs() < 1e-12);
    }

    #[test]
    fn two_support_points_rejected() {
        let counts: BTreeMap<usize, usize> = [(1, 10), (2, 5)].into_iter().collect();
        assert!(fit_power_law(&counts).is_err());
    }

    #[test]
    fn ego_radius_one_is_user_plus_sites() {
        let graph = prolific_vendor_graph();
        let ego = ego_network(&graph, "DarkVendor", 1).unwrap();
        assert_eq!(ego.user_count(), 1);
        assert_eq!(ego.site_count(), 8);
        assert_eq!(ego.edge_count(), 8);
    }

    #[test]
    fn ego_radius_zero_is_user_alone() {
        let graph = prolific_vendor_graph();
        let ego = ego_network(&graph, "darkvendor", 0).unwrap();
        assert_eq!(ego.user_count(), 1);
        assert_eq!(ego.site_count(), 0);
        assert_eq!(ego.edge_count(), 0);
    }

    #[test]
    fn ego_large_radius_reaches_whole_component() {
        let graph = prolific_vendor_graph();
        let ego = ego_network(&graph, "darkvendor", 10).unwrap();
        // other_user posts on the same forum, so it joins at radius 2.
        assert_eq!(ego.user_count(), 2);
        assert_eq!(ego.site_count(), 8);
    }

    #[test]
    fn ego_networks_are_nested() {
        let graph = prolific_vendor_graph();
        let small = ego_network(&graph, "darkvendor", 1).unwrap();
        let large = ego_network(&graph, "darkvendor", 2).unwrap();
        for (u, s, _, _) in small.edges() {
            assert!(large.edges.contains_key(&(u.to_string(), s.to_string())));
        }
        assert!(ego_network(&graph, "nobody", 1).is_err());
    }

    #[test]
    fn cve_extraction_matches_table_examples() {
        assert_eq!(
            extract_cves("MS15-010/CVE 2015-0057 for remote code execution"),
            vec!["CVE-2015-0057"]
        );
        assert!(extract_cves("").is_empty());
        assert_eq!(extract_cves("cve-2014-0160 and CVE 2014-0160"), vec!["CVE-2014-0160"]);
    }

    #[test]
    fn extracted_cves_satisfy_record_pattern() {
        for id in extract_cves("CVE 2021-44228, cve-2014-0160, CVE-2015-0057999") {
            assert!(crate::datamodel::normalize_cve(&id).is_some(), "{id}");
        }
    }

    fn table5_products() -> Vec<MarketProduct> {
        let mut ie = product("m1", "http://m1/ie11", "v");
        ie.item_title = "Internet Explorer 11 Remote Code Execution 0day".to_string();
        ie.price_btc = Some(20.4676);
        let mut android = product("m1", "http://m1/webview", "v");
        android.item_title = "Android WebView 0day RCE".to_string();
        android.price_btc = Some(40.8956);
        vec![ie, android]
    }

    #[test]
    fn table5_fixtures_flagged_and_sorted_by_price() {
        let candidates = find_zero_day_candidates(&table5_products(), &default_zero_day_terms());
        assert_eq!(candidates.len(), 2);
        assert_eq!(candidates[0].price_btc, Some(40.8956));
        assert_eq!(candidates[1].price_btc, Some(20.4676));
        assert!(candidates[0].matched_terms.contains(&"0day".to_string()));
    }

    #[test]
    fn no_matches_means_no_candidates() {
        let mut p = product("m1", "http://m1/1", "v");
        p.item_title = "10 days of vpn access".to_string();
        assert!(find_zero_day_candidates(&[p], &default_zero_day_terms()).is_empty());
    }

    #[test]
    fn hyphenated_zero_day_matches_after_cleaning() {
        let mut p = product("m1", "http://m1/1", "v");
        p.item_title = "Fresh zero-day for sale".to_string();
        let candidates = find_zero_day_candidates(&[p], &default_zero_day_terms());
        assert_eq!(candidates.len(), 1);
        assert_eq!(candidates[0].matched_terms, vec!["zero day"]);
    }

    #[test]
    fn unlabeled_products_are_not_candidates() {
        let mut p = product("m1", "http://m1/1", "v");
        p.item_title = "0day exploit".to_string();
        p.label = Label::Unlabeled;
        assert!(find_zero_day_candidates(&[p], &default_zero_day_terms()).is_empty());
    }

    #[test]
    fn csv_exports_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let graph = prolific_vendor_graph();
        let edges = export_edges_csv(&graph, dir.path().join("edges.csv")).unwrap();
        assert!(edges >= 8);
        let hist = presence_histogram(&graph);
        export_histogram_csv(&hist, dir.path().join("hist.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("edges.csv")).unwrap();
        assert!(text.starts_with("username,site_id,role,weight\n"));
    }
}
