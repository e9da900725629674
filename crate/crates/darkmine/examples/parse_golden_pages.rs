//! Extract structured records from the golden fixture pages and show the
//! relevant-URL feedback list the parser hands back to the crawler.
//!
//!     cargo run -p darkmine --example parse_golden_pages

use std::path::Path;

use chrono::{TimeZone, Utc};
use darkmine::datamodel::Label;
use darkmine::parsers::{
    extract_links, load_schema, parse_forum_page, parse_market_page, relevant_url_list,
};

fn main() -> darkmine::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let observed = Utc.with_ymd_and_hms(2016, 8, 1, 0, 0, 0).unwrap();

    let market_schema = load_schema(fixtures.join("schemas/golden_market.json"))?;
    let html = std::fs::read_to_string(fixtures.join("golden/market_page.html"))
        .expect("fixture page is part of the repo");
    let (mut products, warnings) = parse_market_page(
        &html,
        &market_schema,
        "http://golden-market.fixture/page1.html",
        observed,
    )?;
    println!("market page -> {} products, {} warnings", products.len(), warnings.len());
    for p in &products {
        println!(
            "  `{}` by {} at {:?} BTC, sold {:?}, cves {:?}",
            p.item_title, p.vendor_name, p.price_btc, p.items_sold, p.cve_ids
        );
    }

    let forum_schema = load_schema(fixtures.join("schemas/golden_forum.json"))?;
    let html = std::fs::read_to_string(fixtures.join("golden/forum_page.html"))
        .expect("fixture page is part of the repo");
    let (topics, _) =
        parse_forum_page(&html, &forum_schema, "http://golden-forum.fixture/t1.html", observed)?;
    println!();
    println!("forum page -> {} topic(s)", topics.len());
    for t in &topics {
        println!("  `{}` by {} ({} posts, {:?} views)", t.topic_content, t.topic_author, t.posts.len(), t.topic_interest);
        for post in &t.posts {
            println!("    [{}] {}: {}", post.post_id, post.post_author, post.post_content);
        }
    }

    let (links, _) =
        extract_links(&html, &forum_schema, "http://golden-forum.fixture/t1.html")?;
    println!();
    println!("links discovered on the forum page: {links:?}");

    // A classifier would stamp these; mark the exploit listing by hand to
    // show the feedback loop.
    products[1].label = Label::Relevant;
    let feedback = relevant_url_list(&products);
    println!("relevant URLs for re-crawl: {feedback:?}");
    Ok(())
}
