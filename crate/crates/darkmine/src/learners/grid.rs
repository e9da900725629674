//! Exhaustive grid search over named hyperparameter values, scored by
//! stratified k-fold F1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::Label;
use crate::error::{Error, Result};
use crate::evalharness::{metrics_of, stratified_folds};
use crate::textpipe::SparseVector;

use super::{predict, train, FeaturesPerSplit, Hyperparams, ModelKind};

/// Candidate values per parameter name. Every combination is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub kind: ModelKind,
    pub values: BTreeMap<String, Vec<f64>>,
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: BTreeMap<String, f64>,
    pub mean_f1: f64,
    pub per_fold_f1: Vec<f64>,
}

fn apply_param(hp: &mut Hyperparams, name: &str, value: f64) -> Result<()> {
    let kind = hp.kind();
    let unknown = move || Err(Error::Config(format!("unknown grid parameter `{name}` for {kind:?}")));
    match hp {
        Hyperparams::NaiveBayes { alpha } => match name {
            "alpha" => *alpha = value,
            _ => return unknown(),
        },
        Hyperparams::LogisticRegression { l2_lambda, max_epochs, learning_rate, pos_weight } => {
            match name {
                "l2_lambda" => *l2_lambda = value,
                "max_epochs" => *max_epochs = value.round() as usize,
                "learning_rate" => *learning_rate = value,
                "pos_weight" => *pos_weight = value,
                _ => return unknown(),
            }
        }
        Hyperparams::LinearSvm { c, max_epochs, pos_weight } => match name {
            "c" => *c = value,
            "max_epochs" => *max_epochs = value.round() as usize,
            "pos_weight" => *pos_weight = value,
            _ => return unknown(),
        },
        Hyperparams::RandomForest { n_trees, max_depth, features_per_split, min_leaf, .. } => {
            match name {
                "n_trees" => *n_trees = value.round() as usize,
                "max_depth" => *max_depth = Some(value.round() as usize),
                "features_per_split" => {
                    *features_per_split = FeaturesPerSplit::Count(value.round() as usize)
                }
                "min_leaf" => *min_leaf = value.round() as usize,
                _ => return unknown(),
            }
        }
    }
    Ok(())
}

/// Cartesian product in lexicographic parameter order, each value list
/// sorted ascending. The expansion order doubles as the tie-break order.
fn expand(grid: &ParamGrid) -> Result<Vec<BTreeMap<String, f64>>> {
    if grid.values.is_empty() {
        return Err(Error::InvalidInput("empty parameter grid".into()));
    }
    for (name, values) in &grid.values {
        if values.is_empty() {
            return Err(Error::InvalidInput(format!("no candidate values for `{name}`")));
        }
    }
    let mut sorted: Vec<(String, Vec<f64>)> = grid
        .values
        .iter()
        .map(|(k, v)| {
            let mut vals = v.clone();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite grid values"));
            (k.clone(), vals)
        })
        .collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));

    let mut points: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new()];
    for (name, values) in &sorted {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for point in &points {
            for value in values {
                let mut extended = point.clone();
                extended.insert(name.clone(), *value);
                next.push(extended);
            }
        }
        points = next;
    }
    Ok(points)
}

/// Evaluate every grid point with stratified k-fold F1 and return the best
/// hyperparameters plus the full table. Ties go to the earlier point in
/// lexicographic parameter order.
pub fn grid_search(
    grid: &ParamGrid,
    x: &[SparseVector],
    y: &[Label],
    k: usize,
    seed: u64,
) -> Result<(Hyperparams, Vec<GridRow>)> {
    let points = expand(grid)?;
    let folds = stratified_folds(y, k, seed)?;
    // Every training split must contain both classes.
    for (f, fold) in folds.iter().enumerate() {
        let in_fold: std::collections::HashSet<usize> = fold.iter().copied().collect();
        let mut rel = false;
        let mut not = false;
        for (i, label) in y.iter().enumerate() {
            if in_fold.contains(&i) {
                continue;
            }
            match label {
                Label::Relevant => rel = true,
                Label::NotRelevant => not = true,
                Label::Unlabeled => {
                    return Err(Error::InvalidInput("UNLABELED example in grid search".into()))
                }
            }
        }
        if !rel || !not {
            return Err(Error::InvalidInput(format!(
                "degenerate folds: training split {f} is single-class"
            )));
        }
    }

    let mut table = Vec::with_capacity(points.len());
    let mut best: Option<(f64, Hyperparams)> = None;
    for point in points {
        let mut hp = Hyperparams::default_for(grid.kind);
        for (name, value) in &point {
            apply_param(&mut hp, name, *value)?;
        }
        let mut per_fold_f1 = Vec::with_capacity(k);
        for fold in &folds {
            let in_fold: std::collections::HashSet<usize> = fold.iter().copied().collect();
            let train_x: Vec<SparseVector> = (0..x.len())
                .filter(|i| !in_fold.contains(i))
                .map(|i| x[i].clone())
                .collect();
            let train_y: Vec<Label> =
                (0..y.len()).filter(|i| !in_fold.contains(i)).map(|i| y[i]).collect();
            let model = train(&train_x, &train_y, &hp, seed)?;
            let test_y: Vec<Label> = fold.iter().map(|&i| y[i]).collect();
            let pred: Result<Vec<Label>> = fold.iter().map(|&i| predict(&model, &x[i])).collect();
            per_fold_f1.push(metrics_of(&test_y, &pred?)?.f1);
        }
        let mean_f1 = per_fold_f1.iter().sum::<f64>() / per_fold_f1.len() as f64;
        if best.as_ref().is_none_or(|(b, _)| mean_f1 > *b) {
            best = Some((mean_f1, hp.clone()));
        }
        table.push(GridRow { params: point, mean_f1, per_fold_f1 });
    }

    Ok((best.expect("grid has at least one point").1, table))
}

#[cfg(test)]
mod tests {
    use super::super::test_util::counts;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_data() -> (Vec<SparseVector>, Vec<Label>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..12 {
            if i % 2 == 0 {
                x.push(counts(2, &[(0, 1.0 + (i % 3) as f64 * 0.1)]));
                y.push(Label::Relevant);
            } else {
                x.push(counts(2, &[(1, 1.0 + (i % 3) as f64 * 0.1)]));
                y.push(Label::NotRelevant);
            }
        }
        (x, y)
    }

    #[test]
    fn single_point_grid_returns_it() {
        let (x, y) = toy_data();
        let grid = ParamGrid {
            kind: ModelKind::NaiveBayes,
            values: [("alpha".to_string(), vec![0.5])].into_iter().collect(),
        };
        let (best, table) = grid_search(&grid, &x, &y, 3, 1).unwrap();
        assert_eq!(best, Hyperparams::NaiveBayes { alpha: 0.5 });
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn two_by_three_grid_has_six_rows() {
        let (x, y) = toy_data();
        let grid = ParamGrid {
            kind: ModelKind::LinearSvm,
            values: [
                ("c".to_string(), vec![0.5, 2.0]),
                ("max_epochs".to_string(), vec![5.0, 10.0, 15.0]),
            ]
            .into_iter()
            .collect(),
        };
        let (_, table) = grid_search(&grid, &x, &y, 3, 1).unwrap();
        assert_eq!(table.len(), 6);
    }

    #[test]
    fn planted_optimum_is_selected_across_seeds() {
        // min_leaf = 1000 can never split a fold, so the forest collapses
        // to a majority leaf; min_leaf = 1 realizes the Bayes rule exactly.
        let mut wins = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = Vec::new();
            let mut y = Vec::new();
            for _ in 0..40 {
                let rel = rng.gen_bool(0.5);
                let idx = if rel { 0 } else { 1 };
                let noise_idx = rng.gen_range(2..6);
                x.push(counts(6, &[(idx, 1.0), (noise_idx, rng.gen_range(0.1..0.5))]));
                y.push(if rel { Label::Relevant } else { Label::NotRelevant });
            }
            let grid = ParamGrid {
                kind: ModelKind::RandomForest,
                values: [
                    ("min_leaf".to_string(), vec![1.0, 1000.0]),
                    ("n_trees".to_string(), vec![1.0]),
                ]
                .into_iter()
                .collect(),
            };
            let (best, table) = grid_search(&grid, &x, &y, 4, seed).unwrap();
            assert_eq!(table.len(), 2);
            if let Hyperparams::RandomForest { min_leaf, .. } = best {
                if min_leaf == 1 {
                    wins += 1;
                }
            }
        }
        assert!(wins >= 9, "planted optimum selected on {wins}/10 seeds");
    }

    #[test]
    fn unknown_parameter_is_a_config_error() {
        let (x, y) = toy_data();
        let grid = ParamGrid {
            kind: ModelKind::NaiveBayes,
            values: [("banana".to_string(), vec![1.0])].into_iter().collect(),
        };
        assert!(matches!(grid_search(&grid, &x, &y, 3, 1), Err(Error::Config(_))));
    }
}
