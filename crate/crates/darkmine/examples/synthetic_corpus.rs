//! The synthetic-corpus generator: class word pools, misspelling noise,
//! dual-view mode, and the ground-truth sidecar that stands in for expert
//! labels.
//!
//!     cargo run -p darkmine --example synthetic_corpus

use darkmine::datamodel::Label;
use darkmine::synthgen::{composition_pool_set, generate, CorpusSpec};

fn main() -> darkmine::Result<()> {
    let spec = CorpusSpec {
        n_sites: 3,
        products_per_site: 50,
        misspell_rate: 0.2,
        topics_per_site: 5,
        seed: 99,
        ..CorpusSpec::default()
    };
    let corpus = generate(&spec)?;

    let positives = corpus.truth.iter().filter(|t| t.label == Label::Relevant).count();
    println!(
        "{} market sites x {} products (+{} topics each), {} relevant of {} records",
        spec.n_sites,
        spec.products_per_site,
        spec.topics_per_site,
        positives,
        corpus.truth.len()
    );

    println!();
    println!("sample listings (misspell rate {}):", spec.misspell_rate);
    for p in corpus.sites[0].products.iter().take(4) {
        println!("  [{}] `{}`", p.site_id, p.item_title);
    }

    let again = generate(&spec)?;
    println!();
    println!("same seed regenerates the identical corpus: {}", corpus == again);
    let other = generate(&CorpusSpec { seed: 100, ..spec.clone() })?;
    println!("a different seed does not: {}", corpus != other);

    // Morpheme-composed pools give harder, more realistic vocabulary:
    // unseen word forms still share character n-grams with seen ones.
    let mut pools = composition_pool_set(2, 6, 1);
    let irrelevant = pools.pop().unwrap();
    let relevant = pools.pop().unwrap();
    println!();
    println!("composition pool sample (relevant): {:?}", &relevant[..5]);
    println!("composition pool sample (irrelevant): {:?}", &irrelevant[..5]);

    let dir = std::env::temp_dir().join("darkmine_synth_example");
    corpus.write_to_dir(&dir)?;
    println!();
    println!("corpus written to {} with ground_truth.ndjson sidecar", dir.display());
    Ok(())
}
