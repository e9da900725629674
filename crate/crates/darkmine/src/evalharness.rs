//! Precision/recall/F1 metrics and the two cross-validation protocols:
//! leave-one-site-out and stratified k-fold, with sample-weighted
//! aggregation and report emission.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Label, LabeledExample};
use crate::error::{Error, Result};
use crate::learners::{self, Hyperparams};
use crate::textpipe::{build_feature_space, vectorize, TextParams};

/// Confusion counts with RELEVANT as the positive class.
pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<(u64, u64, u64, u64)> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidInput("empty label vectors".into()));
    }
    let (mut tp, mut fp, mut fn_count, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (t, p) in y_true.iter().zip(y_pred) {
        if *t == Label::Unlabeled || *p == Label::Unlabeled {
            return Err(Error::InvalidInput("UNLABELED label in confusion input".into()));
        }
        match (t, p) {
            (Label::Relevant, Label::Relevant) => tp += 1,
            (Label::NotRelevant, Label::Relevant) => fp += 1,
            (Label::Relevant, Label::NotRelevant) => fn_count += 1,
            (Label::NotRelevant, Label::NotRelevant) => tn += 1,
            _ => unreachable!(),
        }
    }
    Ok((tp, fp, fn_count, tn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_count: u64,
    pub tn: u64,
    /// True when no positive was predicted, so precision defaulted to 0.
    #[serde(default)]
    pub undefined_precision: bool,
}

/// Metric formulas over confusion counts. Precision with an empty predicted
/// positive set is reported as 0 and flagged.
pub fn metrics(tp: u64, fp: u64, fn_count: u64, tn: u64) -> Result<MetricSet> {
    let support = tp + fp + fn_count + tn;
    if support == 0 {
        return Err(Error::InvalidInput("metrics need support >= 1".into()));
    }
    let undefined_precision = tp + fp == 0;
    let precision = if undefined_precision { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_count == 0 { 0.0 } else { tp as f64 / (tp + fn_count) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricSet { precision, recall, f1, support, tp, fp, fn_count, tn, undefined_precision })
}

pub fn metrics_of(y_true: &[Label], y_pred: &[Label]) -> Result<MetricSet> {
    let (tp, fp, fn_count, tn) = confusion(y_true, y_pred)?;
    metrics(tp, fp, fn_count, tn)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvProtocol {
    #[serde(rename = "LEAVE_ONE_SITE_OUT")]
    LeaveOneSiteOut,
    #[serde(rename = "KFOLD")]
    KFold(usize),
}

impl fmt::Display for CvProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CvProtocol::LeaveOneSiteOut => write!(f, "LEAVE_ONE_SITE_OUT"),
            CvProtocol::KFold(k) => write!(f, "KFOLD({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub per_unit: BTreeMap<String, MetricSet>,
    pub weighted: MetricSet,
    pub protocol: CvProtocol,
    pub trainer: String,
    /// Units skipped because their training pool held a single class.
    pub skipped: Vec<String>,
}

/// Support-weighted mean of each metric; counts are summed.
pub fn weighted_aggregate(per_unit: &BTreeMap<String, MetricSet>) -> Result<MetricSet> {
    if per_unit.is_empty() {
        return Err(Error::InvalidInput("no units to aggregate".into()));
    }
    let total: u64 = per_unit.values().map(|m| m.support).sum();
    let mut agg = MetricSet {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        support: total,
        tp: 0,
        fp: 0,
        fn_count: 0,
        tn: 0,
        undefined_precision: false,
    };
    for m in per_unit.values() {
        let w = m.support as f64;
        agg.precision += w * m.precision;
        agg.recall += w * m.recall;
        agg.f1 += w * m.f1;
        agg.tp += m.tp;
        agg.fp += m.fp;
        agg.fn_count += m.fn_count;
        agg.tn += m.tn;
        agg.undefined_precision |= m.undefined_precision;
    }
    agg.precision /= total as f64;
    agg.recall /= total as f64;
    agg.f1 /= total as f64;
    Ok(agg)
}

/// A training procedure evaluated by the harness. Semi-supervised trainers
/// may use the unlabeled pool; supervised ones ignore it.
pub trait EvalTrainer {
    fn fit_predict(
        &self,
        train: &[LabeledExample],
        unlabeled: &[LabeledExample],
        test: &[LabeledExample],
    ) -> Result<Vec<Label>>;

    fn describe(&self) -> String;
}

/// Plain supervised pipeline: feature space from the training examples only,
/// one model, predictions on the held-out set.
pub struct SupervisedTrainer {
    pub hp: Hyperparams,
    pub text: TextParams,
    pub seed: u64,
}

impl EvalTrainer for SupervisedTrainer {
    fn fit_predict(
        &self,
        train: &[LabeledExample],
        _unlabeled: &[LabeledExample],
        test: &[LabeledExample],
    ) -> Result<Vec<Label>> {
        let space = build_feature_space(
            train,
            self.text.n_min,
            self.text.n_max,
            &self.text.stop_words,
            self.text.min_df,
        )?;
        let x: Vec<_> = train.iter().map(|e| vectorize(e, &space)).collect();
        let y: Vec<Label> = train.iter().map(|e| e.label).collect();
        let model = learners::train(&x, &y, &self.hp, self.seed)?;
        test.iter().map(|e| learners::predict(&model, &vectorize(e, &space))).collect()
    }

    fn describe(&self) -> String {
        format!("supervised {:?}", self.hp.kind())
    }
}

fn split_by_label(examples: &[LabeledExample]) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for e in examples {
        if e.label.is_labeled() {
            labeled.push(e.clone());
        } else {
            unlabeled.push(e.clone());
        }
    }
    (labeled, unlabeled)
}

fn has_both_classes(examples: &[LabeledExample]) -> bool {
    let mut rel = false;
    let mut not = false;
    for e in examples {
        match e.label {
            Label::Relevant => rel = true,
            Label::NotRelevant => not = true,
            Label::Unlabeled => {}
        }
    }
    rel && not
}

/// Train on n−1 sites, test on the held-out one, for every site. The feature
/// space is rebuilt from training sites each round, so no held-out n-gram
/// leaks in. Rounds whose training pool is single-class are skipped and
/// flagged.
pub fn leave_one_site_out(
    datasets: &BTreeMap<String, Vec<LabeledExample>>,
    trainer: &dyn EvalTrainer,
) -> Result<CvReport> {
    if datasets.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-site-out needs at least 2 sites, got {}",
            datasets.len()
        )));
    }
    for (site, examples) in datasets {
        if !examples.iter().any(|e| e.label.is_labeled()) {
            return Err(Error::InvalidInput(format!("site `{site}` has no labeled example")));
        }
    }

    let mut per_unit = BTreeMap::new();
    let mut skipped = Vec::new();
    for held_out in datasets.keys() {
        let (test, _) = split_by_label(&datasets[held_out]);
        let mut train = Vec::new();
        let mut unlabeled = Vec::new();
        for (site, examples) in datasets {
            if site == held_out {
                continue;
            }
            let (l, u) = split_by_label(examples);
            train.extend(l);
            unlabeled.extend(u);
        }
        if !has_both_classes(&train) {
            skipped.push(held_out.clone());
            continue;
        }
        let y_pred = trainer.fit_predict(&train, &unlabeled, &test)?;
        let y_true: Vec<Label> = test.iter().map(|e| e.label).collect();
        per_unit.insert(held_out.clone(), metrics_of(&y_true, &y_pred)?);
    }

    let weighted = weighted_aggregate(&per_unit)?;
    Ok(CvReport {
        per_unit,
        weighted,
        protocol: CvProtocol::LeaveOneSiteOut,
        trainer: trainer.describe(),
        skipped,
    })
}

/// Deal each class round-robin into k folds with a shared cursor, so fold
/// sizes differ by at most one and every fold keeps the class mix.
pub fn stratified_folds(y: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be >= 2, got {k}")));
    }
    if y.len() < k {
        return Err(Error::InvalidInput(format!("{} examples cannot fill {k} folds", y.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for class in [Label::Relevant, Label::NotRelevant, Label::Unlabeled] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    Ok(folds)
}

/// Stratified k-fold over the labeled subset; unlabeled examples ride along
/// as the semi-supervised pool every round.
pub fn kfold(
    dataset: &[LabeledExample],
    k: usize,
    trainer: &dyn EvalTrainer,
    seed: u64,
) -> Result<CvReport> {
    let (labeled, unlabeled) = split_by_label(dataset);
    if labeled.len() < k {
        return Err(Error::InvalidInput(format!(
            "{} labeled examples cannot fill {k} folds",
            labeled.len()
        )));
    }
    let y: Vec<Label> = labeled.iter().map(|e| e.label).collect();
    let folds = stratified_folds(&y, k, seed)?;

    let mut per_unit = BTreeMap::new();
    for (f, fold) in folds.iter().enumerate() {
        let in_fold: std::collections::HashSet<usize> = fold.iter().copied().collect();
        let train: Vec<LabeledExample> = (0..labeled.len())
            .filter(|i| !in_fold.contains(i))
            .map(|i| labeled[i].clone())
            .collect();
        let test: Vec<LabeledExample> = fold.iter().map(|&i| labeled[i].clone()).collect();
        if !has_both_classes(&train) {
            return Err(Error::InvalidInput(format!(
                "fold {f}: a class is absent from the training split"
            )));
        }
        let y_pred = trainer.fit_predict(&train, &unlabeled, &test)?;
        let y_true: Vec<Label> = test.iter().map(|e| e.label).collect();
        per_unit.insert(format!("fold-{f}"), metrics_of(&y_true, &y_pred)?);
    }

    let weighted = weighted_aggregate(&per_unit)?;
    Ok(CvReport {
        per_unit,
        weighted,
        protocol: CvProtocol::KFold(k),
        trainer: trainer.describe(),
        skipped: Vec::new(),
    })
}

#[derive(Serialize, Deserialize)]
struct UnitRow<'a> {
    unit: &'a str,
    #[serde(flatten)]
    metrics: MetricSet,
}

#[derive(Serialize, Deserialize)]
struct AggregateRow<'a> {
    aggregate: bool,
    protocol: String,
    trainer: &'a str,
    #[serde(flatten)]
    metrics: MetricSet,
    skipped: Vec<String>,
}

/// Write the report as NDJSON at `path` plus a plain-text metric table next
/// to it (same stem, `.txt`).
pub fn emit_report(report: &CvReport, path: impl AsRef<Path>) -> Result<()> {
    if report.per_unit.is_empty() {
        return Err(Error::InvalidInput("report has no units".into()));
    }
    let path = path.as_ref();
    let mut out = String::new();
    for (unit, m) in &report.per_unit {
        let row = UnitRow { unit, metrics: m.clone() };
        out.push_str(&serde_json::to_string(&row).expect("report row serializes"));
        out.push('\n');
    }
    let agg = AggregateRow {
        aggregate: true,
        protocol: report.protocol.to_string(),
        trainer: &report.trainer,
        metrics: report.weighted.clone(),
        skipped: report.skipped.clone(),
    };
    out.push_str(&serde_json::to_string(&agg).expect("aggregate row serializes"));
    out.push('\n');
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let table_path = path.with_extension("txt");
    std::fs::write(&table_path, render_table(report)).map_err(|e| Error::io(&table_path, e))?;
    Ok(())
}

pub fn render_table(report: &CvReport) -> String {
    let mut t = String::new();
    t.push_str(&format!("protocol: {}   trainer: {}\n", report.protocol, report.trainer));
    t.push_str(&format!(
        "{:<20} {:>10} {:>10} {:>10} {:>8}\n",
        "unit", "precision", "recall", "f1", "support"
    ));
    for (unit, m) in &report.per_unit {
        t.push_str(&format!(
            "{:<20} {:>10.4} {:>10.4} {:>10.4} {:>8}\n",
            unit, m.precision, m.recall, m.f1, m.support
        ));
    }
    let w = &report.weighted;
    t.push_str(&format!(
        "{:<20} {:>10.4} {:>10.4} {:>10.4} {:>8}\n",
        "weighted", w.precision, w.recall, w.f1, w.support
    ));
    if !report.skipped.is_empty() {
        t.push_str(&format!("skipped (single-class training pool): {}\n", report.skipped.join(", ")));
    }
    t
}

/// Per-unit rows plus the aggregate, as read back from an NDJSON report.
pub type ReportRows = (Vec<(String, MetricSet)>, Option<MetricSet>);

/// Per-unit rows and the aggregate read back from an emitted NDJSON report.
pub fn read_report_rows(path: impl AsRef<Path>) -> Result<ReportRows> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let mut rows = Vec::new();
    let mut aggregate = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                path: path.as_ref().to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        let metrics: MetricSet =
            serde_json::from_value(value.clone()).map_err(|e| Error::MalformedLine {
                path: path.as_ref().to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        if value.get("aggregate").and_then(|v| v.as_bool()) == Some(true) {
            aggregate = Some(metrics);
        } else if let Some(unit) = value.get("unit").and_then(|v| v.as_str()) {
            rows.push((unit.to_string(), metrics));
        }
    }
    Ok((rows, aggregate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ex(site: &str, title: &str, label: Label) -> LabeledExample {
        LabeledExample {
            source_site: site.to_string(),
            title_text: title.to_string(),
            body_text: String::new(),
            label,
        }
    }

    struct ConstantTrainer(Label);

    impl EvalTrainer for ConstantTrainer {
        fn fit_predict(
            &self,
            _train: &[LabeledExample],
            _unlabeled: &[LabeledExample],
            test: &[LabeledExample],
        ) -> Result<Vec<Label>> {
            Ok(vec![self.0; test.len()])
        }
        fn describe(&self) -> String {
            format!("constant {:?}", self.0)
        }
    }

    #[test]
    fn confusion_hand_count() {
        use Label::{NotRelevant as N, Relevant as R};
        let y_true = [R, R, N, N, R];
        let y_pred = [R, N, N, R, R];
        assert_eq!(confusion(&y_true, &y_pred).unwrap(), (2, 1, 1, 1));
    }

    #[test]
    fn confusion_all_correct_has_no_errors() {
        use Label::{NotRelevant as N, Relevant as R};
        let y = [R, N, R];
        let (_, fp, fn_count, _) = confusion(&y, &y).unwrap();
        assert_eq!((fp, fn_count), (0, 0));
    }

    #[test]
    fn confusion_rejects_length_mismatch() {
        use Label::Relevant as R;
        assert!(confusion(&[R, R], &[R]).is_err());
    }

    #[test]
    fn metrics_hand_arithmetic() {
        let m = metrics(2, 1, 1, 0).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.support, 4);
    }

    #[test]
    fn perfect_prediction_is_all_ones() {
        let m = metrics(3, 0, 0, 5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_predicted_positives_flags_precision() {
        use Label::{NotRelevant as N, Relevant as R};
        let m = metrics_of(&[R, N, R], &[N, N, N]).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.undefined_precision);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn metrics_match_brute_force_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let len = rng.gen_range(1..=20);
            let y_true: Vec<Label> = (0..len)
                .map(|_| if rng.gen_bool(0.5) { Label::Relevant } else { Label::NotRelevant })
                .collect();
            let y_pred: Vec<Label> = (0..len)
                .map(|_| if rng.gen_bool(0.5) { Label::Relevant } else { Label::NotRelevant })
                .collect();
            let m = metrics_of(&y_true, &y_pred).unwrap();
            // Brute-force oracle: direct filters and textbook formulas.
            let tp = y_true
                .iter()
                .zip(&y_pred)
                .filter(|(t, p)| **t == Label::Relevant && **p == Label::Relevant)
                .count() as u64;
            let pred_pos = y_pred.iter().filter(|p| **p == Label::Relevant).count() as u64;
            let true_pos = y_true.iter().filter(|t| **t == Label::Relevant).count() as u64;
            let precision = if pred_pos == 0 { 0.0 } else { tp as f64 / pred_pos as f64 };
            let recall = if true_pos == 0 { 0.0 } else { tp as f64 / true_pos as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            assert_eq!(m.tp, tp);
            assert_eq!(m.precision, precision);
            assert_eq!(m.recall, recall);
            assert_eq!(m.f1, f1);
        }
    }

    fn three_sites() -> BTreeMap<String, Vec<LabeledExample>> {
        let mut sites = BTreeMap::new();
        sites.insert(
            "m1".to_string(),
            vec![
                ex("m1", "keylogger botnet exploit", Label::Relevant),
                ex("m1", "cocaine shipment", Label::NotRelevant),
                ex("m1", "rootkit loader exploit", Label::Relevant),
                ex("m1", "cannabis bundle", Label::NotRelevant),
            ],
        );
        sites.insert(
            "m2".to_string(),
            vec![
                ex("m2", "keylogger stealer", Label::Relevant),
                ex("m2", "cannabis pack", Label::NotRelevant),
                ex("m2", "counterfeit watch", Label::NotRelevant),
            ],
        );
        sites.insert(
            "m3".to_string(),
            vec![
                ex("m3", "botnet rental exploit", Label::Relevant),
                ex("m3", "cocaine gram", Label::NotRelevant),
            ],
        );
        sites
    }

    #[test]
    fn lomo_tests_every_site_exactly_once() {
        let sites = three_sites();
        let report = leave_one_site_out(&sites, &ConstantTrainer(Label::Relevant)).unwrap();
        assert_eq!(report.per_unit.len(), 3);
        for site in sites.keys() {
            assert!(report.per_unit.contains_key(site));
        }
    }

    #[test]
    fn lomo_constant_relevant_has_unit_recall_and_positive_rate_precision() {
        let sites = three_sites();
        let report = leave_one_site_out(&sites, &ConstantTrainer(Label::Relevant)).unwrap();
        for (site, m) in &report.per_unit {
            assert_eq!(m.recall, 1.0, "site {site}");
            let pos_rate = sites[site].iter().filter(|e| e.label == Label::Relevant).count() as f64
                / sites[site].len() as f64;
            assert!((m.precision - pos_rate).abs() < 1e-15, "site {site}");
        }
    }

    #[test]
    fn lomo_needs_two_sites() {
        let mut sites = three_sites();
        sites.remove("m2");
        sites.remove("m3");
        assert!(leave_one_site_out(&sites, &ConstantTrainer(Label::Relevant)).is_err());
    }

    #[test]
    fn weighted_aggregate_matches_hand_computation() {
        let sites = three_sites();
        let report = leave_one_site_out(&sites, &ConstantTrainer(Label::Relevant)).unwrap();
        // Supports 4, 3, 2; precisions 2/4, 1/3, 1/2; recalls all 1.
        let expected_precision =
            (4.0 * 0.5 + 3.0 * (1.0 / 3.0) + 2.0 * 0.5) / 9.0;
        assert!((report.weighted.precision - expected_precision).abs() < 1e-15);
        assert_eq!(report.weighted.recall, 1.0);
        assert_eq!(report.weighted.support, 9);
    }

    #[test]
    fn aggregate_of_identical_units_is_that_unit() {
        let m = metrics(2, 1, 1, 0).unwrap();
        let mut per_unit = BTreeMap::new();
        per_unit.insert("a".to_string(), m.clone());
        per_unit.insert("b".to_string(), m.clone());
        let agg = weighted_aggregate(&per_unit).unwrap();
        assert_eq!(agg.precision, m.precision);
        assert_eq!(agg.recall, m.recall);
        assert_eq!(agg.f1, m.f1);
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let a = metrics(2, 1, 1, 0).unwrap();
        let b = metrics(5, 0, 2, 3).unwrap();
        let mut one = BTreeMap::new();
        one.insert("x".to_string(), a.clone());
        one.insert("y".to_string(), b.clone());
        let mut two = BTreeMap::new();
        two.insert("y".to_string(), b);
        two.insert("x".to_string(), a);
        assert_eq!(weighted_aggregate(&one).unwrap(), weighted_aggregate(&two).unwrap());
    }

    #[test]
    fn stratified_fold_sizes_differ_by_at_most_one() {
        let mut y = vec![Label::Relevant; 13];
        y.extend(vec![Label::NotRelevant; 87]);
        let folds = stratified_folds(&y, 7, 3).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(max - min <= 1, "{sizes:?}");
        let total: usize = sizes.iter().sum();
        assert_eq!(total, 100);
    }

    #[test]
    fn kfold_leave_one_out_runs_n_rounds() {
        let data = vec![
            ex("s", "keylogger exploit kit", Label::Relevant),
            ex("s", "botnet exploit panel", Label::Relevant),
            ex("s", "keylogger source exploit", Label::Relevant),
            ex("s", "cocaine gram", Label::NotRelevant),
            ex("s", "cannabis ounce", Label::NotRelevant),
            ex("s", "counterfeit cocaine", Label::NotRelevant),
        ];
        let report = kfold(&data, 6, &ConstantTrainer(Label::NotRelevant), 1).unwrap();
        assert_eq!(report.per_unit.len(), 6);
        assert_eq!(report.protocol, CvProtocol::KFold(6));
    }

    #[test]
    fn kfold_same_seed_same_folds() {
        let y: Vec<Label> = (0..30)
            .map(|i| if i % 4 == 0 { Label::Relevant } else { Label::NotRelevant })
            .collect();
        assert_eq!(stratified_folds(&y, 5, 9).unwrap(), stratified_folds(&y, 5, 9).unwrap());
    }

    #[test]
    fn report_emission_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.ndjson");
        let report = leave_one_site_out(&three_sites(), &ConstantTrainer(Label::Relevant)).unwrap();
        emit_report(&report, &path).unwrap();
        assert!(path.with_extension("txt").exists());

        let (rows, aggregate) = read_report_rows(&path).unwrap();
        assert_eq!(rows.len(), 3);
        let mut per_unit = BTreeMap::new();
        for (unit, m) in rows {
            per_unit.insert(unit, m);
        }
        let recomputed = weighted_aggregate(&per_unit).unwrap();
        let agg = aggregate.unwrap();
        assert!((recomputed.precision - agg.precision).abs() < 1e-9);
        assert!((recomputed.recall - agg.recall).abs() < 1e-9);
        assert!((recomputed.f1 - agg.f1).abs() < 1e-9);
    }

    #[test]
    fn empty_report_cannot_be_emitted() {
        let dir = tempfile::tempdir().unwrap();
        let report = CvReport {
            per_unit: BTreeMap::new(),
            weighted: metrics(1, 0, 0, 0).unwrap(),
            protocol: CvProtocol::KFold(2),
            trainer: "x".to_string(),
            skipped: vec![],
        };
        assert!(emit_report(&report, dir.path().join("r.ndjson")).is_err());
    }

    #[test]
    fn lomo_feature_space_never_sees_held_out_grams() {
        use std::cell::RefCell;
        use std::collections::BTreeSet;

        // Planted corpus: site m3's vocabulary is unique to it.
        let sites = {
            let mut s = BTreeMap::new();
            s.insert(
                "m1".to_string(),
                vec![
                    ex("m1", "keylogger botnet", Label::Relevant),
                    ex("m1", "cocaine", Label::NotRelevant),
                ],
            );
            s.insert(
                "m2".to_string(),
                vec![
                    ex("m2", "keylogger", Label::Relevant),
                    ex("m2", "cocaine", Label::NotRelevant),
                ],
            );
            s.insert(
                "m3".to_string(),
                vec![
                    ex("m3", "qqqqzz", Label::Relevant),
                    ex("m3", "wwwwvv", Label::NotRelevant),
                ],
            );
            s
        };

        struct SpyTrainer {
            grams_seen: RefCell<Vec<BTreeSet<String>>>,
        }
        impl EvalTrainer for SpyTrainer {
            fn fit_predict(
                &self,
                train: &[LabeledExample],
                _unlabeled: &[LabeledExample],
                test: &[LabeledExample],
            ) -> Result<Vec<Label>> {
                let space = build_feature_space(train, 3, 3, &BTreeSet::new(), 1)?;
                self.grams_seen
                    .borrow_mut()
                    .push(space.gram_set().iter().map(|s| s.to_string()).collect());
                Ok(vec![Label::NotRelevant; test.len()])
            }
            fn describe(&self) -> String {
                "spy".to_string()
            }
        }

        let spy = SpyTrainer { grams_seen: RefCell::new(Vec::new()) };
        leave_one_site_out(&sites, &spy).unwrap();
        // Round order is sorted site order, so round 2 holds out m3.
        let seen = spy.grams_seen.borrow();
        let m3_grams: BTreeSet<String> =
            ["qqq", "qqz", "qzz", "www", "wwv", "wvv"].iter().map(|s| s.to_string()).collect();
        assert!(seen[2].is_disjoint(&m3_grams));
        // And the other rounds do contain their own training grams.
        assert!(seen[0].contains("key"));
    }
}
