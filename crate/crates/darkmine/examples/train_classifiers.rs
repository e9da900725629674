//! Train the four supervised classifiers on a synthetic marketplace corpus
//! and compare them on held-out sites, then grid-search the SVM.
//!
//!     cargo run -p darkmine --example train_classifiers

use darkmine::datamodel::{Label, LabeledExample};
use darkmine::evalharness::metrics_of;
use darkmine::learners::{
    grid_search, predict, train, Hyperparams, ModelKind, ParamGrid,
};
use darkmine::synthgen::{composition_pool_set, generate, CorpusSpec};
use darkmine::textpipe::{build_feature_space, vectorize, TextParams};

fn main() -> darkmine::Result<()> {
    // Morpheme-composed vocabulary with neutral filler and cross-class
    // contamination: hard enough that the four models actually differ.
    let mut pools = composition_pool_set(3, 20, 777);
    let neutral = pools.pop().unwrap();
    let irrelevant = pools.pop().unwrap();
    let relevant = pools.pop().unwrap();
    let spec = CorpusSpec {
        n_sites: 6,
        products_per_site: 150,
        misspell_rate: 0.25,
        vocab_relevant: relevant,
        vocab_irrelevant: irrelevant,
        vocab_neutral: neutral,
        neutral_rate: 0.35,
        contamination: 0.1,
        seed: 7,
        ..CorpusSpec::default()
    };
    let corpus = generate(&spec)?;
    let examples = corpus.labeled_examples();

    // Hold out the last two sites.
    let (train_set, test_set): (Vec<LabeledExample>, Vec<LabeledExample>) = examples
        .into_iter()
        .partition(|e| e.source_site.as_str() < "market-05");
    println!("{} training examples, {} held out", train_set.len(), test_set.len());

    let text = TextParams::default();
    let space =
        build_feature_space(&train_set, text.n_min, text.n_max, &text.stop_words, text.min_df)?;
    let x: Vec<_> = train_set.iter().map(|e| vectorize(e, &space)).collect();
    let y: Vec<Label> = train_set.iter().map(|e| e.label).collect();
    let x_test: Vec<_> = test_set.iter().map(|e| vectorize(e, &space)).collect();
    let y_test: Vec<Label> = test_set.iter().map(|e| e.label).collect();

    println!();
    println!("{:<22} {:>10} {:>10} {:>10}", "model", "precision", "recall", "f1");
    for kind in [
        ModelKind::NaiveBayes,
        ModelKind::LogisticRegression,
        ModelKind::LinearSvm,
        ModelKind::RandomForest,
    ] {
        let model = train(&x, &y, &Hyperparams::default_for(kind), 7)?;
        let pred: Vec<Label> =
            x_test.iter().map(|v| predict(&model, v)).collect::<darkmine::Result<_>>()?;
        let m = metrics_of(&y_test, &pred)?;
        println!("{:<22} {:>10.4} {:>10.4} {:>10.4}", format!("{kind:?}"), m.precision, m.recall, m.f1);
    }

    // Grid search the SVM's regularization trade-off.
    let grid = ParamGrid {
        kind: ModelKind::LinearSvm,
        values: [
            ("c".to_string(), vec![0.1, 1.0, 10.0]),
            ("max_epochs".to_string(), vec![10.0, 20.0]),
        ]
        .into_iter()
        .collect(),
    };
    let (best, table) = grid_search(&grid, &x, &y, 3, 7)?;
    println!();
    println!("grid search over {} points:", table.len());
    for row in &table {
        println!("  {:?} -> mean F1 {:.4}", row.params, row.mean_f1);
    }
    println!("selected: {best:?}");
    Ok(())
}
