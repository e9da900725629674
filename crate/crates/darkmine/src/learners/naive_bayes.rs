//! Multinomial naive Bayes with additive smoothing, over sparse count or
//! normalized-count vectors.

use serde::{Deserialize, Serialize};

use crate::datamodel::Label;
use crate::textpipe::SparseVector;

/// Smoothed class-conditional log-probabilities.
///
/// Only features observed in a class are stored; everything else falls back
/// to that class's smoothing floor `log(alpha / (total + alpha * dim))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    pub log_prior_relevant: f64,
    pub log_prior_not_relevant: f64,
    /// Sorted by feature index.
    pub log_prob_relevant: Vec<(usize, f64)>,
    pub log_prob_not_relevant: Vec<(usize, f64)>,
    pub log_default_relevant: f64,
    pub log_default_not_relevant: f64,
}

impl NaiveBayesParams {
    pub fn log_theta(&self, label: Label, feature: usize) -> f64 {
        let (table, default) = match label {
            Label::Relevant => (&self.log_prob_relevant, self.log_default_relevant),
            _ => (&self.log_prob_not_relevant, self.log_default_not_relevant),
        };
        match table.binary_search_by_key(&feature, |e| e.0) {
            Ok(pos) => table[pos].1,
            Err(_) => default,
        }
    }

    fn joint_log_likelihood(&self, x: &SparseVector, label: Label) -> f64 {
        let prior = match label {
            Label::Relevant => self.log_prior_relevant,
            _ => self.log_prior_not_relevant,
        };
        let mut score = prior;
        for &(idx, weight) in x.entries() {
            score += weight * self.log_theta(label, idx);
        }
        score
    }

    /// Posterior P(RELEVANT | x) via the two-class softmax.
    pub fn posterior_relevant(&self, x: &SparseVector) -> f64 {
        let rel = self.joint_log_likelihood(x, Label::Relevant);
        let not = self.joint_log_likelihood(x, Label::NotRelevant);
        1.0 / (1.0 + (not - rel).exp())
    }
}

pub(super) fn train(x: &[SparseVector], y: &[Label], alpha: f64) -> NaiveBayesParams {
    let dim = x[0].dimension();
    let n = x.len() as f64;
    let mut count_rel = vec![0.0f64; dim];
    let mut count_not = vec![0.0f64; dim];
    let mut n_rel = 0usize;
    for (xi, yi) in x.iter().zip(y) {
        let target = match yi {
            Label::Relevant => {
                n_rel += 1;
                &mut count_rel
            }
            _ => &mut count_not,
        };
        for &(idx, w) in xi.entries() {
            target[idx] += w;
        }
    }
    let total_rel: f64 = count_rel.iter().sum();
    let total_not: f64 = count_not.iter().sum();
    let denom_rel = total_rel + alpha * dim as f64;
    let denom_not = total_not + alpha * dim as f64;

    let sparse_logs = |counts: &[f64], denom: f64| -> Vec<(usize, f64)> {
        counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0.0)
            .map(|(idx, c)| (idx, ((c + alpha) / denom).ln()))
            .collect()
    };

    NaiveBayesParams {
        log_prior_relevant: (n_rel as f64 / n).ln(),
        log_prior_not_relevant: ((x.len() - n_rel) as f64 / n).ln(),
        log_prob_relevant: sparse_logs(&count_rel, denom_rel),
        log_prob_not_relevant: sparse_logs(&count_not, denom_not),
        log_default_relevant: (alpha / denom_rel).ln(),
        log_default_not_relevant: (alpha / denom_not).ln(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::counts;
    use super::super::{predict, predict_confidence, train as train_model, Hyperparams};
    use super::*;

    fn hand_corpus() -> (Vec<SparseVector>, Vec<Label>) {
        // Class R: d1 = 2*f0 + f1, d2 = f0. Class N: d3 = 3*f2, d4 = f1 + f2.
        let x = vec![
            counts(3, &[(0, 2.0), (1, 1.0)]),
            counts(3, &[(0, 1.0)]),
            counts(3, &[(2, 3.0)]),
            counts(3, &[(1, 1.0), (2, 1.0)]),
        ];
        let y = vec![Label::Relevant, Label::Relevant, Label::NotRelevant, Label::NotRelevant];
        (x, y)
    }

    #[test]
    fn smoothed_estimates_match_hand_computation() {
        let (x, y) = hand_corpus();
        let model = train_model(&x, &y, &Hyperparams::NaiveBayes { alpha: 1.0 }, 0).unwrap();
        let nb = match model.params() {
            super::super::ModelParams::NaiveBayes(nb) => nb,
            _ => panic!(),
        };
        // count_R = [3,1,0], total 4, denom 4 + 3 = 7.
        assert!((nb.log_theta(Label::Relevant, 0) - (4.0f64 / 7.0).ln()).abs() < 1e-12);
        assert!((nb.log_theta(Label::Relevant, 1) - (2.0f64 / 7.0).ln()).abs() < 1e-12);
        assert!((nb.log_theta(Label::Relevant, 2) - (1.0f64 / 7.0).ln()).abs() < 1e-12);
        // count_N = [0,1,4], total 5, denom 5 + 3 = 8.
        assert!((nb.log_theta(Label::NotRelevant, 0) - (1.0f64 / 8.0).ln()).abs() < 1e-12);
        assert!((nb.log_theta(Label::NotRelevant, 1) - (2.0f64 / 8.0).ln()).abs() < 1e-12);
        assert!((nb.log_theta(Label::NotRelevant, 2) - (5.0f64 / 8.0).ln()).abs() < 1e-12);
        assert!((nb.log_prior_relevant - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_falls_back_to_prior() {
        // 3 relevant, 1 not: prior favors RELEVANT.
        let x = vec![
            counts(2, &[(0, 1.0)]),
            counts(2, &[(0, 2.0)]),
            counts(2, &[(0, 1.0), (1, 1.0)]),
            counts(2, &[(1, 3.0)]),
        ];
        let y = vec![Label::Relevant, Label::Relevant, Label::Relevant, Label::NotRelevant];
        let model = train_model(&x, &y, &Hyperparams::NaiveBayes { alpha: 1.0 }, 0).unwrap();
        let zero = SparseVector::zero(2);
        assert_eq!(predict(&model, &zero).unwrap(), Label::Relevant);
        assert!((predict_confidence(&model, &zero).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn posteriors_of_both_classes_sum_to_one() {
        let (x, y) = hand_corpus();
        let model = train_model(&x, &y, &Hyperparams::NaiveBayes { alpha: 0.5 }, 0).unwrap();
        let nb = match model.params() {
            super::super::ModelParams::NaiveBayes(nb) => nb,
            _ => panic!(),
        };
        for probe in &x {
            let rel = nb.posterior_relevant(probe);
            let not_joint_minus_rel_joint = {
                let r = nb.joint_log_likelihood(probe, Label::Relevant);
                let n = nb.joint_log_likelihood(probe, Label::NotRelevant);
                1.0 / (1.0 + (r - n).exp())
            };
            assert!((rel + not_joint_minus_rel_joint - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_symmetric_probe_is_a_tie_broken_to_not_relevant() {
        // Two mirror-image classes and a probe equidistant from both.
        let x = vec![counts(2, &[(0, 1.0)]), counts(2, &[(1, 1.0)])];
        let y = vec![Label::Relevant, Label::NotRelevant];
        let model = train_model(&x, &y, &Hyperparams::NaiveBayes { alpha: 1.0 }, 0).unwrap();
        let probe = counts(2, &[(0, 1.0), (1, 1.0)]);
        assert!((predict_confidence(&model, &probe).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(predict(&model, &probe).unwrap(), Label::NotRelevant);
    }
}
