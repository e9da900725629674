//! Co-training on a dual-view synthetic corpus: two SVMs teach each other
//! from a 25% labeled slice, and the round transcript shows the unlabeled
//! pool draining.
//!
//!     cargo run -p darkmine --example co_training

use darkmine::datamodel::{Label, LabeledExample};
use darkmine::evalharness::metrics_of;
use darkmine::learners::{predict, train, Hyperparams};
use darkmine::semisup::{co_predict, co_train};
use darkmine::synthgen::{composition_pool_set, generate, CorpusSpec};
use darkmine::textpipe::{build_feature_space, split_views, vectorize, TextParams};

fn main() -> darkmine::Result<()> {
    let mut pools = composition_pool_set(3, 24, 777);
    let neutral = pools.pop().unwrap();
    let irrelevant = pools.pop().unwrap();
    let relevant = pools.pop().unwrap();
    let spec = CorpusSpec {
        n_sites: 4,
        products_per_site: 500,
        positive_rate: 0.13,
        misspell_rate: 0.1,
        dual_view_mode: true,
        vocab_relevant: relevant,
        vocab_irrelevant: irrelevant,
        vocab_neutral: neutral,
        neutral_rate: 0.6,
        seed: 3,
        ..CorpusSpec::default()
    };
    let corpus = generate(&spec)?;
    let examples = corpus.labeled_examples();

    // 25% keeps labels; the rest becomes the unlabeled pool (ground truth
    // retained only for scoring).
    let labeled: Vec<LabeledExample> = examples.iter().step_by(4).cloned().collect();
    let pool: Vec<LabeledExample> = examples
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 4 != 0)
        .map(|(_, e)| {
            let mut e = e.clone();
            e.label = Label::Unlabeled;
            e
        })
        .collect();
    let truth: Vec<Label> = examples
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 4 != 0)
        .map(|(_, e)| e.label)
        .collect();
    println!("{} labeled, {} unlabeled", labeled.len(), pool.len());

    let text = TextParams::default();
    let hp = Hyperparams::LinearSvm { c: 1.0, max_epochs: 20, pos_weight: 6.0 };

    // Supervised baseline sees only the labeled quarter.
    let sup_space =
        build_feature_space(&labeled, text.n_min, text.n_max, &text.stop_words, text.min_df)?;
    let x: Vec<_> = labeled.iter().map(|e| vectorize(e, &sup_space)).collect();
    let y: Vec<Label> = labeled.iter().map(|e| e.label).collect();
    let sup_model = train(&x, &y, &hp, 3)?;
    let sup_pred: Vec<Label> = pool
        .iter()
        .map(|e| predict(&sup_model, &vectorize(e, &sup_space)))
        .collect::<darkmine::Result<_>>()?;
    let sup = metrics_of(&truth, &sup_pred)?;

    // Co-training splits the word universe into two views and lets each
    // model label points for the other at 70% confidence.
    let mut all = labeled.clone();
    all.extend(pool.iter().cloned());
    let split = split_views(&all, text.n_min, text.n_max, &text.stop_words, text.min_df, 3)?;
    let outcome = co_train(&split, &labeled, &pool, &hp, 0.7, 3)?;
    println!();
    println!("round  added_to_a  added_to_b  remaining");
    for entry in &outcome.transcript {
        println!(
            "{:>5}  {:>10}  {:>10}  {:>9}{}",
            entry.round,
            entry.added_to_a,
            entry.added_to_b,
            entry.remaining,
            if entry.forced > 0 { format!("  ({} forced)", entry.forced) } else { String::new() }
        );
    }

    let ct_pred: Vec<Label> = pool
        .iter()
        .map(|e| co_predict(&outcome.model_a, &outcome.model_b, &split, e).map(|(l, _)| l))
        .collect::<darkmine::Result<_>>()?;
    let ct = metrics_of(&truth, &ct_pred)?;

    println!();
    println!("unlabeled-pool metrics:");
    println!("  supervised SVM   precision {:.3} recall {:.3} f1 {:.3}", sup.precision, sup.recall, sup.f1);
    println!("  co-trained SVMs  precision {:.3} recall {:.3} f1 {:.3}", ct.precision, ct.recall, ct.f1);
    Ok(())
}
