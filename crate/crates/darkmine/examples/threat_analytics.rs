//! Analyst case studies over parsed records: the cross-site username graph,
//! multi-presence power law, a vendor ego network, CVE extraction, and
//! zero-day candidate detection.
//!
//!     cargo run -p darkmine --example threat_analytics

use chrono::{TimeZone, Utc};
use darkmine::analytics::{
    build_site_graph, default_zero_day_terms, ego_network, extract_cves, find_zero_day_candidates,
    fit_power_law, presence_histogram,
};
use darkmine::datamodel::{ForumPost, ForumTopic, Label, MarketProduct};

fn product(site: &str, n: usize, vendor: &str, title: &str, price: Option<f64>) -> MarketProduct {
    let observed = Utc.with_ymd_and_hms(2016, 8, 1, 0, 0, 0).unwrap();
    MarketProduct {
        site_id: site.to_string(),
        url: format!("http://{site}.fixture/item/{n}"),
        item_title: title.to_string(),
        item_description: String::new(),
        vendor_name: vendor.to_string(),
        shipping_details: String::new(),
        item_reviews: vec![],
        items_sold: None,
        items_left: None,
        cve_ids: vec![],
        transaction_details: None,
        ratings: None,
        price_btc: price,
        first_seen: observed,
        last_seen: observed,
        label: Label::Relevant,
    }
}

fn main() -> darkmine::Result<()> {
    // A vendor active across several markets plus a forum, a market-only
    // vendor, and a cast of forum regulars.
    let mut products = Vec::new();
    let mut n = 0;
    for market in ["alpha", "beta", "gamma", "delta"] {
        for _ in 0..3 {
            products.push(product(market, n, "DarkVendor", "exploit pack", Some(0.5)));
            n += 1;
        }
    }
    products.push(product("alpha", n, "loner", "fud crypter", Some(0.2)));
    products.push(product(
        "beta",
        n + 1,
        "zerobroker",
        "Internet Explorer 11 Remote Code Execution 0day",
        Some(20.4676),
    ));
    products.push(product("beta", n + 2, "zerobroker", "Android WebView 0day RCE", Some(40.8956)));

    let post = |id: &str, author: &str| ForumPost {
        post_id: id.to_string(),
        post_content: "discussion".to_string(),
        post_author: author.to_string(),
        author_status: None,
        reputation: None,
        timestamp: None,
    };
    let topics = vec![ForumTopic {
        site_id: "hackforum".to_string(),
        topic_id: "t1".to_string(),
        topic_content: "new exploit drops".to_string(),
        topic_author: "darkvendor".to_string(),
        topic_interest: Some(900),
        posts: vec![post("p1", "zerobroker"), post("p2", "lurker"), post("p3", "DarkVendor ")],
        label: Label::Relevant,
    }];

    let (graph, warnings) = build_site_graph(&products, &topics);
    println!(
        "site graph: {} users x {} sites, {} edges ({} warnings)",
        graph.user_count(),
        graph.site_count(),
        graph.edge_count(),
        warnings.len()
    );
    for (user, site, role, weight) in graph.edges() {
        println!("  {user} -[{role:?} x{weight}]-> {site}");
    }

    let hist = presence_histogram(&graph);
    println!();
    println!("presence histogram (sites -> users): {:?}", hist.counts);
    println!("users on more than two platforms: {}", hist.users_on_more_than_two);
    match fit_power_law(&hist.counts) {
        Ok(fit) => println!("power-law fit: alpha {:.2}, R² {:.2}", fit.alpha, fit.r_squared),
        Err(_) => println!("power-law fit needs at least 3 distinct site-counts; skipped here"),
    }

    let ego = ego_network(&graph, "darkvendor", 1)?;
    println!();
    println!(
        "ego network of darkvendor at radius 1: {} user, {} sites",
        ego.user_count(),
        ego.site_count()
    );

    let text = "Selling MS15-010/CVE 2015-0057 RCE, also have cve-2014-0160 dumps";
    println!();
    println!("cve extraction from `{text}`:");
    println!("  {:?}", extract_cves(text));

    let candidates = find_zero_day_candidates(&products, &default_zero_day_terms());
    println!();
    println!("zero-day candidates (price descending):");
    for c in &candidates {
        println!(
            "  {:?} BTC  `{}` (matched: {})",
            c.price_btc,
            c.item_title,
            c.matched_terms.join(", ")
        );
    }
    Ok(())
}
