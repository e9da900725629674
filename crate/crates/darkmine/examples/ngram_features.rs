//! The text pipeline step by step: cleaning, character n-grams, the
//! dual-context feature space, sparse vectors, and the co-training view
//! split.
//!
//!     cargo run -p darkmine --example ngram_features

use std::collections::BTreeSet;

use darkmine::datamodel::{Label, LabeledExample};
use darkmine::textpipe::{
    build_feature_space, char_ngrams, clean_text, default_stop_words, split_views, vectorize,
    View,
};

fn example(title: &str, body: &str) -> LabeledExample {
    LabeledExample {
        source_site: "demo".to_string(),
        title_text: title.to_string(),
        body_text: body.to_string(),
        label: Label::Unlabeled,
    }
}

fn main() -> darkmine::Result<()> {
    let stops = default_stop_words();

    let raw = "*****SALE***** The Hacker's Keylogger v2, FUD!!";
    println!("raw:     {raw}");
    println!("cleaned: {:?}", clean_text(raw, &stops));
    println!();

    println!("tri-grams of `hacker`:   {:?}", char_ngrams("hacker", 3, 3));
    println!("(3,7)-grams of `hackz`:  {:?}", char_ngrams("hackz", 3, 7));
    println!("misspellings still share most grams with the clean form.");
    println!();

    let corpus = vec![
        example("keylogger bundle", "fud keylogger with stealer"),
        example("botnet rental", "stable botnet loader"),
        example("keylogger source", "cheap keylogger builder"),
    ];
    let space = build_feature_space(&corpus, 3, 5, &stops, 2)?;
    println!(
        "feature space: {} title grams + {} body grams = {} dimensions",
        space.title_vocab().len(),
        space.body_vocab().len(),
        space.dimension()
    );

    let vector = vectorize(&example("keyloger bundle", "fud keyloger"), &space);
    println!(
        "a misspelled listing still lands {} nonzero features (L2 norm {:.3})",
        vector.nnz(),
        vector.l2_norm()
    );
    println!();

    // The same string contributes different features per context.
    let in_title = vectorize(&example("keylogger", ""), &space);
    let in_body = vectorize(&example("", "keylogger"), &space);
    let title_range: BTreeSet<usize> = in_title.entries().iter().map(|e| e.0).collect();
    let body_range: BTreeSet<usize> = in_body.entries().iter().map(|e| e.0).collect();
    println!("`keylogger` in the title hits indices {title_range:?}");
    println!("`keylogger` in the body hits indices  {body_range:?}");
    println!();

    let split = split_views(&corpus, 3, 5, &stops, 1, 42)?;
    let a_words = split.word_to_view().values().filter(|v| **v == View::A).count();
    println!(
        "view split: {} words to view A, {} to view B (disjoint by construction)",
        a_words,
        split.word_to_view().len() - a_words
    );
    let ex = example("keylogger bundle", "stable loader");
    println!(
        "view A sees {} features of the example, view B sees {}",
        split.vectorize(&ex, View::A).nnz(),
        split.vectorize(&ex, View::B).nnz()
    );
    Ok(())
}
