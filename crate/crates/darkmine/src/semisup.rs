//! Semi-supervised learning: harmonic label propagation over a similarity
//! graph and co-training over the disjoint n-gram views.

use serde::{Deserialize, Serialize};

use crate::datamodel::{Label, LabeledExample};
use crate::error::{Error, Result};
use crate::evalharness::EvalTrainer;
use crate::learners::{self, Hyperparams, Model};
use crate::textpipe::{split_views, SparseVector, TextParams, View, ViewSplit};

/// Similarity kernel for graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Kernel {
    #[serde(rename = "KNN")]
    Knn { k: usize },
    #[serde(rename = "GAUSSIAN")]
    Gaussian { sigma: f64 },
}

/// Weighted undirected similarity graph. Vertices follow the construction
/// order of the input vectors; by convention the labeled ones come first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    n: usize,
    adj: Vec<Vec<(usize, f64)>>,
    kernel: Kernel,
}

impl SimilarityGraph {
    /// Build a graph directly from undirected weighted edges, for
    /// hand-constructed topologies. Self-loops and nonpositive weights are
    /// rejected; both directions are inserted.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], kernel: Kernel) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!("edge ({u}, {v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop on vertex {u}")));
            }
            if w <= 0.0 {
                return Err(Error::InvalidInput(format!("nonpositive weight {w}")));
            }
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
        for neighbors in &mut adj {
            neighbors.sort_by_key(|(j, _)| *j);
        }
        Ok(SimilarityGraph { n, adj, kernel })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> f64 {
        self.adj[v].iter().map(|(_, w)| w).sum()
    }

    pub fn edge_weight(&self, u: usize, v: usize) -> f64 {
        self.adj[u].iter().find(|(j, _)| *j == v).map(|(_, w)| *w).unwrap_or(0.0)
    }
}

/// Build a similarity graph over all vectors.
///
/// KNN connects i and j with weight 1 when either is among the other's k
/// nearest by cosine similarity (ties at the k-th rank are all included).
/// GAUSSIAN weighs every pair by exp(-d²/(2σ²)) over Euclidean distance on
/// L2-normalized vectors, dropping weights below 1e-8.
pub fn build_similarity_graph(x_all: &[SparseVector], kernel: Kernel) -> Result<SimilarityGraph> {
    let n = x_all.len();
    if n < 2 {
        return Err(Error::InvalidInput("similarity graph needs at least 2 vectors".into()));
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    match kernel {
        Kernel::Knn { k } => {
            if k == 0 || k >= n {
                return Err(Error::InvalidInput(format!("k must be in [1, n-1], got k={k}, n={n}")));
            }
            let mut pairs: std::collections::BTreeSet<(usize, usize)> = Default::default();
            for i in 0..n {
                let mut sims: Vec<(usize, f64)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (j, x_all[i].cosine_similarity(&x_all[j])))
                    .collect();
                sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                let kth = sims[k - 1].1;
                for &(j, sim) in &sims {
                    if sim >= kth {
                        pairs.insert((i.min(j), i.max(j)));
                    } else {
                        break;
                    }
                }
            }
            for (i, j) in pairs {
                adj[i].push((j, 1.0));
                adj[j].push((i, 1.0));
            }
        }
        Kernel::Gaussian { sigma } => {
            if sigma <= 0.0 {
                return Err(Error::InvalidInput(format!("sigma must be > 0, got {sigma}")));
            }
            let normalized: Vec<SparseVector> = x_all
                .iter()
                .map(|v| {
                    let norm = v.l2_norm();
                    if norm == 0.0 {
                        v.clone()
                    } else {
                        let entries =
                            v.entries().iter().map(|&(i, w)| (i, w / norm)).collect();
                        SparseVector::new(entries, v.dimension()).expect("scaled entries stay valid")
                    }
                })
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = normalized[i].euclidean_distance(&normalized[j]);
                    let w = (-d * d / (2.0 * sigma * sigma)).exp();
                    if w >= 1e-8 {
                        adj[i].push((j, w));
                        adj[j].push((i, w));
                    }
                }
            }
        }
    }
    for neighbors in &mut adj {
        neighbors.sort_by_key(|(j, _)| *j);
    }
    Ok(SimilarityGraph { n, adj, kernel })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelPropOutcome {
    /// Score per vertex, labeled entries clamped to exactly 0 or 1.
    pub scores: Vec<f64>,
    /// Labels for the unlabeled vertices, in vertex order.
    pub labels: Vec<Label>,
    /// Zero-degree unlabeled vertices that fell back to the class prior.
    pub isolated: Vec<usize>,
    pub iterations: usize,
}

/// Iterate f ← D⁻¹ W f with labeled entries clamped each step, from 0.5 on
/// unlabeled entries, until the largest change drops below `tol` or
/// `max_iter` is hit. On connected graphs this converges to the harmonic
/// closed-form solution.
pub fn label_propagation(
    graph: &SimilarityGraph,
    y_labeled: &[Label],
    tol: f64,
    max_iter: usize,
) -> Result<LabelPropOutcome> {
    let l = y_labeled.len();
    let n = graph.n();
    if l == 0 || l > n {
        return Err(Error::InvalidInput(format!("{l} labeled vertices for a {n}-vertex graph")));
    }
    let mut has_rel = false;
    let mut has_not = false;
    for y in y_labeled {
        match y {
            Label::Relevant => has_rel = true,
            Label::NotRelevant => has_not = true,
            Label::Unlabeled => {
                return Err(Error::InvalidInput("UNLABELED among labeled vertices".into()))
            }
        }
    }
    if !has_rel || !has_not {
        return Err(Error::InvalidInput("need at least one labeled vertex per class".into()));
    }

    let clamp: Vec<f64> =
        y_labeled.iter().map(|y| if *y == Label::Relevant { 1.0 } else { 0.0 }).collect();
    let prior = clamp.iter().sum::<f64>() / l as f64;
    let degrees: Vec<f64> = (0..n).map(|v| graph.degree(v)).collect();

    let mut isolated = Vec::new();
    let mut scores: Vec<f64> = (0..n)
        .map(|v| {
            if v < l {
                clamp[v]
            } else if degrees[v] == 0.0 {
                isolated.push(v);
                prior
            } else {
                0.5
            }
        })
        .collect();

    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        let mut next = scores.clone();
        for v in l..n {
            if degrees[v] == 0.0 {
                continue;
            }
            let weighted: f64 =
                graph.neighbors(v).iter().map(|&(j, w)| w * scores[j]).sum();
            let updated = weighted / degrees[v];
            max_change = max_change.max((updated - scores[v]).abs());
            next[v] = updated;
        }
        scores = next;
        if max_change < tol {
            break;
        }
    }

    let labels: Vec<Label> = (l..n)
        .map(|v| if scores[v] > 0.5 { Label::Relevant } else { Label::NotRelevant })
        .collect();
    Ok(LabelPropOutcome { scores, labels, isolated, iterations })
}

/// Out-of-sample extension for label propagation: a new point is scored by
/// the kernel-weighted mean of its nearest training scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPropModel {
    pub kernel: Kernel,
    pub vectors: Vec<SparseVector>,
    pub scores: Vec<f64>,
    /// Fraction of RELEVANT among the originally labeled vertices.
    pub prior: f64,
}

impl LabelPropModel {
    pub fn score(&self, x: &SparseVector) -> f64 {
        match self.kernel {
            Kernel::Knn { k } => {
                let mut sims: Vec<(usize, f64)> = self
                    .vectors
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (j, x.cosine_similarity(v)))
                    .collect();
                sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                let take = k.min(sims.len());
                sims[..take].iter().map(|&(j, _)| self.scores[j]).sum::<f64>() / take as f64
            }
            Kernel::Gaussian { sigma } => {
                let mut total = 0.0;
                let mut acc = 0.0;
                for (v, s) in self.vectors.iter().zip(&self.scores) {
                    let d = x.euclidean_distance(v);
                    let w = (-d * d / (2.0 * sigma * sigma)).exp();
                    if w >= 1e-8 {
                        total += w;
                        acc += w * s;
                    }
                }
                if total < 1e-12 {
                    self.prior
                } else {
                    acc / total
                }
            }
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Label {
        if self.score(x) > 0.5 {
            Label::Relevant
        } else {
            Label::NotRelevant
        }
    }
}

/// Graph construction plus propagation over labeled-first stacked vectors,
/// returning an inductive model alongside the transductive outcome.
pub fn fit_label_prop(
    x_labeled: &[SparseVector],
    y_labeled: &[Label],
    x_unlabeled: &[SparseVector],
    kernel: Kernel,
    tol: f64,
    max_iter: usize,
) -> Result<(LabelPropModel, LabelPropOutcome)> {
    let mut all = x_labeled.to_vec();
    all.extend(x_unlabeled.to_vec());
    let graph = build_similarity_graph(&all, kernel)?;
    let outcome = label_propagation(&graph, y_labeled, tol, max_iter)?;
    let prior = y_labeled.iter().filter(|y| **y == Label::Relevant).count() as f64
        / y_labeled.len() as f64;
    let model =
        LabelPropModel { kernel, vectors: all, scores: outcome.scores.clone(), prior };
    Ok((model, outcome))
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

/// One co-training round as written to the transcript. `remaining` counts
/// points still unlabeled after the round's confidence-based additions;
/// `forced` says how many of those were then force-labeled at a stall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: usize,
    pub added_to_a: usize,
    pub added_to_b: usize,
    pub remaining: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub forced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoTrainOutcome {
    pub model_a: Model,
    pub model_b: Model,
    pub transcript: Vec<RoundEntry>,
    pub forced: usize,
}

/// Confidence in the predicted label, whichever class that is.
fn predicted_confidence(conf_relevant: f64) -> f64 {
    conf_relevant.max(1.0 - conf_relevant)
}

/// Blum–Mitchell co-training over the two word views.
///
/// Per round both models retrain from scratch on their labeled pools, then
/// each model's confident estimates (≥ `threshold`) move unlabeled points
/// into the other model's pool. When a round moves nothing, the remaining
/// points are force-labeled by whichever model is more confident and the
/// transcript records the forced count.
pub fn co_train(
    split: &ViewSplit,
    labeled: &[LabeledExample],
    unlabeled: &[LabeledExample],
    hp: &Hyperparams,
    threshold: f64,
    seed: u64,
) -> Result<CoTrainOutcome> {
    if labeled.iter().all(|e| e.label != Label::Relevant)
        || labeled.iter().all(|e| e.label != Label::NotRelevant)
    {
        return Err(Error::InvalidInput("labeled set must contain both classes".into()));
    }

    let vec_a = |e: &LabeledExample| split.vectorize(e, View::A);
    let vec_b = |e: &LabeledExample| split.vectorize(e, View::B);

    let mut pool_a: Vec<(SparseVector, Label)> =
        labeled.iter().map(|e| (vec_a(e), e.label)).collect();
    let mut pool_b: Vec<(SparseVector, Label)> =
        labeled.iter().map(|e| (vec_b(e), e.label)).collect();
    let mut pool_u: Vec<(SparseVector, SparseVector)> =
        unlabeled.iter().map(|e| (vec_a(e), vec_b(e))).collect();

    let mut transcript = Vec::new();
    let mut forced_total = 0usize;
    let mut round = 0usize;

    loop {
        let (xa, ya): (Vec<_>, Vec<_>) = pool_a.iter().cloned().unzip();
        let (xb, yb): (Vec<_>, Vec<_>) = pool_b.iter().cloned().unzip();
        let model_a = learners::train(&xa, &ya, hp, seed)?;
        let model_b = learners::train(&xb, &yb, hp, seed)?;

        if pool_u.is_empty() {
            return Ok(CoTrainOutcome { model_a, model_b, transcript, forced: forced_total });
        }
        round += 1;

        struct Judged {
            va: SparseVector,
            vb: SparseVector,
            label_a: Label,
            label_b: Label,
            conf_a: f64,
            conf_b: f64,
        }
        let judged: Vec<Judged> = pool_u
            .iter()
            .map(|(va, vb)| {
                let ca = learners::predict_confidence(&model_a, va)?;
                let cb = learners::predict_confidence(&model_b, vb)?;
                Ok(Judged {
                    va: va.clone(),
                    vb: vb.clone(),
                    label_a: if ca > 0.5 { Label::Relevant } else { Label::NotRelevant },
                    label_b: if cb > 0.5 { Label::Relevant } else { Label::NotRelevant },
                    conf_a: predicted_confidence(ca),
                    conf_b: predicted_confidence(cb),
                })
            })
            .collect::<Result<_>>()?;

        let mut added_to_a = 0usize;
        let mut added_to_b = 0usize;
        let mut kept: Vec<(SparseVector, SparseVector)> = Vec::new();
        for j in &judged {
            let a_confident = j.conf_a >= threshold;
            let b_confident = j.conf_b >= threshold;
            if a_confident {
                pool_b.push((j.vb.clone(), j.label_a));
                added_to_b += 1;
            }
            if b_confident {
                pool_a.push((j.va.clone(), j.label_b));
                added_to_a += 1;
            }
            if !a_confident && !b_confident {
                kept.push((j.va.clone(), j.vb.clone()));
            }
        }
        let stalled = added_to_a == 0 && added_to_b == 0;
        pool_u = kept;

        let mut entry = RoundEntry {
            round,
            added_to_a,
            added_to_b,
            remaining: pool_u.len(),
            forced: 0,
        };

        if stalled && !pool_u.is_empty() {
            // No progress: hand every leftover to the more confident model.
            for j in &judged {
                let label = if j.conf_a >= j.conf_b { j.label_a } else { j.label_b };
                pool_a.push((j.va.clone(), label));
                pool_b.push((j.vb.clone(), label));
            }
            entry.forced = pool_u.len();
            forced_total += pool_u.len();
            pool_u.clear();
        }
        transcript.push(entry);
    }
}

/// How the two view confidences combine at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoCombine {
    /// Mean of the two view confidences, RELEVANT above 0.5.
    MeanConfidence,
    /// RELEVANT when either view says so; confidence is the larger one.
    EitherPositive,
}

/// Pure combination rule over two RELEVANT-confidences.
pub fn combine_confidences(conf_a: f64, conf_b: f64, rule: CoCombine) -> (Label, f64) {
    match rule {
        CoCombine::MeanConfidence => {
            let combined = (conf_a + conf_b) / 2.0;
            let label = if combined > 0.5 { Label::Relevant } else { Label::NotRelevant };
            (label, combined)
        }
        CoCombine::EitherPositive => {
            let label = if conf_a > 0.5 || conf_b > 0.5 {
                Label::Relevant
            } else {
                Label::NotRelevant
            };
            (label, conf_a.max(conf_b))
        }
    }
}

pub fn co_predict_with(
    model_a: &Model,
    model_b: &Model,
    split: &ViewSplit,
    example: &LabeledExample,
    rule: CoCombine,
) -> Result<(Label, f64)> {
    if model_a.feature_dimension() != split.space(View::A).dimension()
        || model_b.feature_dimension() != split.space(View::B).dimension()
    {
        return Err(Error::InvalidInput(
            "models do not match the view split's feature spaces".into(),
        ));
    }
    let conf_a = learners::predict_confidence(model_a, &split.vectorize(example, View::A))?;
    let conf_b = learners::predict_confidence(model_b, &split.vectorize(example, View::B))?;
    Ok(combine_confidences(conf_a, conf_b, rule))
}

/// Mean-confidence combination of the two view models.
pub fn co_predict(
    model_a: &Model,
    model_b: &Model,
    split: &ViewSplit,
    example: &LabeledExample,
) -> Result<(Label, f64)> {
    co_predict_with(model_a, model_b, split, example, CoCombine::MeanConfidence)
}

/// Co-training wrapped for the evaluation harness.
pub struct CoTrainingTrainer {
    pub hp: Hyperparams,
    pub text: TextParams,
    pub threshold: f64,
    pub seed: u64,
}

impl EvalTrainer for CoTrainingTrainer {
    fn fit_predict(
        &self,
        train: &[LabeledExample],
        unlabeled: &[LabeledExample],
        test: &[LabeledExample],
    ) -> Result<Vec<Label>> {
        let mut corpus = train.to_vec();
        corpus.extend(unlabeled.to_vec());
        let split = split_views(
            &corpus,
            self.text.n_min,
            self.text.n_max,
            &self.text.stop_words,
            self.text.min_df,
            self.seed,
        )?;
        let outcome = co_train(&split, train, unlabeled, &self.hp, self.threshold, self.seed)?;
        test.iter()
            .map(|e| co_predict(&outcome.model_a, &outcome.model_b, &split, e).map(|(l, _)| l))
            .collect()
    }

    fn describe(&self) -> String {
        format!("co-training {:?} @{}", self.hp.kind(), self.threshold)
    }
}

/// Label propagation wrapped for the evaluation harness.
pub struct LabelPropTrainer {
    pub kernel: Kernel,
    pub text: TextParams,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl EvalTrainer for LabelPropTrainer {
    fn fit_predict(
        &self,
        train: &[LabeledExample],
        unlabeled: &[LabeledExample],
        test: &[LabeledExample],
    ) -> Result<Vec<Label>> {
        let mut corpus = train.to_vec();
        corpus.extend(unlabeled.to_vec());
        let space = crate::textpipe::build_feature_space(
            &corpus,
            self.text.n_min,
            self.text.n_max,
            &self.text.stop_words,
            self.text.min_df,
        )?;
        let x_labeled: Vec<SparseVector> =
            train.iter().map(|e| crate::textpipe::vectorize(e, &space)).collect();
        let y_labeled: Vec<Label> = train.iter().map(|e| e.label).collect();
        let x_unlabeled: Vec<SparseVector> =
            unlabeled.iter().map(|e| crate::textpipe::vectorize(e, &space)).collect();
        let (model, _) =
            fit_label_prop(&x_labeled, &y_labeled, &x_unlabeled, self.kernel, self.tol, self.max_iter)?;
        Ok(test
            .iter()
            .map(|e| model.predict(&crate::textpipe::vectorize(e, &space)))
            .collect())
    }

    fn describe(&self) -> String {
        format!("label propagation {:?}", self.kernel)
    }
}
