//! Label propagation: the harmonic fixed point on a hand-built graph, then
//! the full similarity-graph classifier on synthetic text.
//!
//!     cargo run -p darkmine --example label_propagation

use darkmine::datamodel::Label;
use darkmine::evalharness::metrics_of;
use darkmine::semisup::{
    build_similarity_graph, fit_label_prop, label_propagation, Kernel, SimilarityGraph,
};
use darkmine::synthgen::{composition_pool_set, generate, CorpusSpec};
use darkmine::textpipe::{build_feature_space, vectorize, TextParams};

fn main() -> darkmine::Result<()> {
    // Path graph L(1) - U1 - U2 - L(0): scores interpolate harmonically.
    let graph = SimilarityGraph::from_edges(
        4,
        &[(0, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)],
        Kernel::Knn { k: 1 },
    )?;
    let outcome = label_propagation(&graph, &[Label::Relevant, Label::NotRelevant], 1e-10, 100_000)?;
    println!("path graph L(1)-U1-U2-L(0):");
    println!("  f(U1) = {:.6} (harmonic solution: 2/3)", outcome.scores[2]);
    println!("  f(U2) = {:.6} (harmonic solution: 1/3)", outcome.scores[3]);
    println!("  labels for U1, U2: {:?}", outcome.labels);
    println!();

    // Transductive + inductive classification over text vectors.
    let mut pools = composition_pool_set(3, 16, 777);
    let neutral = pools.pop().unwrap();
    let irrelevant = pools.pop().unwrap();
    let relevant = pools.pop().unwrap();
    let spec = CorpusSpec {
        n_sites: 3,
        products_per_site: 120,
        misspell_rate: 0.2,
        vocab_relevant: relevant,
        vocab_irrelevant: irrelevant,
        vocab_neutral: neutral,
        neutral_rate: 0.5,
        seed: 5,
        ..CorpusSpec::default()
    };
    let corpus = generate(&spec)?;
    let examples = corpus.labeled_examples();
    let text = TextParams { min_df: 1, ..TextParams::default() };
    let space =
        build_feature_space(&examples, text.n_min, text.n_max, &text.stop_words, text.min_df)?;

    // A quarter of the corpus keeps its labels; the rest is the unlabeled
    // pool plus a held-out test slice.
    let labeled: Vec<_> = examples.iter().step_by(4).cloned().collect();
    let rest: Vec<_> = examples.iter().enumerate().filter(|(i, _)| i % 4 != 0).map(|(_, e)| e.clone()).collect();
    let (pool, test) = rest.split_at(rest.len() / 2);

    let x_labeled: Vec<_> = labeled.iter().map(|e| vectorize(e, &space)).collect();
    let y_labeled: Vec<Label> = labeled.iter().map(|e| e.label).collect();
    let x_pool: Vec<_> = pool.iter().map(|e| vectorize(e, &space)).collect();

    let (model, fit) =
        fit_label_prop(&x_labeled, &y_labeled, &x_pool, Kernel::Knn { k: 10 }, 1e-6, 10_000)?;
    println!(
        "similarity graph over {} vectors converged in {} iterations ({} isolated)",
        x_labeled.len() + x_pool.len(),
        fit.iterations,
        fit.isolated.len()
    );

    let pred: Vec<Label> = test.iter().map(|e| model.predict(&vectorize(e, &space))).collect();
    let truth: Vec<Label> = test.iter().map(|e| e.label).collect();
    let m = metrics_of(&truth, &pred)?;
    println!(
        "out-of-sample extension on {} unseen docs: precision {:.3} recall {:.3} f1 {:.3}",
        test.len(),
        m.precision,
        m.recall,
        m.f1
    );

    // The Gaussian kernel is available as well.
    let gaussian = build_similarity_graph(&x_labeled, Kernel::Gaussian { sigma: 0.8 })?;
    println!(
        "gaussian graph over the labeled slice: {} vertices, mean degree {:.1}",
        gaussian.n(),
        (0..gaussian.n()).map(|v| gaussian.neighbors(v).len()).sum::<usize>() as f64
            / gaussian.n() as f64
    );
    Ok(())
}
