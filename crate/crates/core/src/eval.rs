//! Metrics, ROC curves, test-set balancing, majority voting and group
//! statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::models::{BinaryLabel, SeverityLabel, NUM_CLASSES};

/// Rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(preds: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        check_inputs(preds, labels, k)?;
        let mut counts = vec![vec![0u64; k]; k];
        for (&p, &l) in preds.iter().zip(labels) {
            counts[l][p] += 1;
        }
        Ok(ConfusionMatrix { k, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Each nonempty row divided by its sum; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    /// Metrics computed from the counts alone.
    pub fn report(&self) -> EvaluationReport {
        let k = self.k;
        let total = self.total() as f64;
        let per_class = (0..k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let support = self.counts[c].iter().sum::<u64>() as f64;
                let predicted = (0..k).map(|r| self.counts[r][c]).sum::<u64>() as f64;
                ClassMetrics::from_counts(tp, predicted, support)
            })
            .collect();
        let correct: f64 = (0..k).map(|c| self.counts[c][c] as f64).sum();
        let mut report = EvaluationReport::assemble(total as usize, correct / total, per_class);
        if k == NUM_CLASSES {
            let sig = |c: usize| SeverityLabel::ALL[c].coarse_binary() == BinaryLabel::Significant;
            let mut cell = [[0.0f64; 2]; 2];
            for r in 0..k {
                for c in 0..k {
                    cell[usize::from(sig(r))][usize::from(sig(c))] += self.counts[r][c] as f64;
                }
            }
            report.binary = Some(binary_from_cells(cell[1][1], cell[0][0], cell[0][1], cell[1][0]));
        }
        report
    }

    pub fn to_csv(&self, normalized: bool) -> String {
        let mut s = String::from("true_class");
        for c in 0..self.k {
            let _ = write!(s, ",pred_{}", class_name(c, self.k));
        }
        s.push('\n');
        let norm = self.normalized();
        for r in 0..self.k {
            s.push_str(&class_name(r, self.k));
            for c in 0..self.k {
                if normalized {
                    let _ = write!(s, ",{:.6}", norm[r][c]);
                } else {
                    let _ = write!(s, ",{}", self.counts[r][c]);
                }
            }
            s.push('\n');
        }
        s
    }
}

fn class_name(c: usize, k: usize) -> String {
    if k == NUM_CLASSES {
        SeverityLabel::ALL[c].name().to_string()
    } else {
        c.to_string()
    }
}

fn check_inputs(preds: &[usize], labels: &[usize], k: usize) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::usage(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::usage("no predictions to evaluate"));
    }
    if let Some(&bad) = preds.iter().chain(labels).find(|&&c| c >= k) {
        return Err(Error::OutOfRange {
            what: "class index",
            value: bad as i64,
            valid: format!("0..{k}"),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

impl ClassMetrics {
    /// Zero when a denominator is zero.
    fn from_counts(tp: f64, predicted: f64, support: f64) -> Self {
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: support as usize,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    /// Recall of the significant class.
    pub sensitivity: f64,
    /// Recall of the non-significant class.
    pub specificity: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub binary: Option<BinaryMetrics>,
}

impl EvaluationReport {
    fn assemble(n: usize, accuracy: f64, per_class: Vec<ClassMetrics>) -> Self {
        let k = per_class.len() as f64;
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
        let weighted =
            |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / n as f64;
        EvaluationReport {
            n,
            accuracy,
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            weighted_precision: weighted(|c| c.precision),
            weighted_recall: weighted(|c| c.recall),
            weighted_f1: weighted(|c| c.f1),
            per_class,
            binary: None,
        }
    }

    pub const CSV_HEADER: &'static str = "level,n,accuracy,macro_precision,macro_recall,macro_f1,weighted_precision,weighted_recall,weighted_f1,binary_accuracy,sensitivity,specificity,binary_f1";

    /// One CSV row (without header) labelled with `level`.
    pub fn csv_row(&self, level: &str) -> String {
        let mut s = format!(
            "{level},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.n,
            self.accuracy,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.weighted_precision,
            self.weighted_recall,
            self.weighted_f1
        );
        match &self.binary {
            Some(b) => {
                let _ = write!(s, ",{:.6},{:.6},{:.6},{:.6}", b.accuracy, b.sensitivity, b.specificity, b.f1);
            }
            None => s.push_str(",,,,"),
        }
        s
    }

    pub fn to_text(&self, title: &str) -> String {
        let mut s = format!("{title} (n = {})\n", self.n);
        let _ = writeln!(s, "  accuracy          {:.4}", self.accuracy);
        let _ = writeln!(
            s,
            "  macro    P/R/F1   {:.4} / {:.4} / {:.4}",
            self.macro_precision, self.macro_recall, self.macro_f1
        );
        let _ = writeln!(
            s,
            "  weighted P/R/F1   {:.4} / {:.4} / {:.4}",
            self.weighted_precision, self.weighted_recall, self.weighted_f1
        );
        if let Some(b) = &self.binary {
            let _ = writeln!(
                s,
                "  binary   acc {:.4}  sensitivity {:.4}  specificity {:.4}  F1 {:.4}",
                b.accuracy, b.sensitivity, b.specificity, b.f1
            );
        }
        let k = self.per_class.len();
        for (c, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(
                s,
                "  {:<18} P {:.4}  R {:.4}  F1 {:.4}  support {}",
                class_name(c, k),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        s
    }
}

/// Accuracy plus per-class and averaged precision/recall/F1, computed
/// directly from the prediction lists. Five-class inputs also get the
/// binary view.
pub fn metrics(preds: &[usize], labels: &[usize], k: usize) -> Result<EvaluationReport> {
    check_inputs(preds, labels, k)?;
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let mut tp = 0usize;
        let mut predicted = 0usize;
        let mut support = 0usize;
        for (&p, &l) in preds.iter().zip(labels) {
            tp += usize::from(p == c && l == c);
            predicted += usize::from(p == c);
            support += usize::from(l == c);
        }
        per_class.push(ClassMetrics::from_counts(tp as f64, predicted as f64, support as f64));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    let mut report = EvaluationReport::assemble(preds.len(), correct as f64 / preds.len() as f64, per_class);
    if k == NUM_CLASSES {
        report.binary = Some(binary_metrics(preds, labels)?);
    }
    Ok(report)
}

/// Sensitivity and specificity after collapsing classes to the binary view
/// (moderate and above significant).
pub fn binary_metrics(preds: &[usize], labels: &[usize]) -> Result<BinaryMetrics> {
    check_inputs(preds, labels, NUM_CLASSES)?;
    let sig = |c: usize| SeverityLabel::ALL[c].coarse_binary() == BinaryLabel::Significant;
    let (mut tp, mut tn, mut fp, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &l) in preds.iter().zip(labels) {
        match (sig(p), sig(l)) {
            (true, true) => tp += 1.0,
            (false, false) => tn += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
        }
    }
    Ok(binary_from_cells(tp, tn, fp, fn_))
}

fn binary_from_cells(tp: f64, tn: f64, fp: f64, fn_: f64) -> BinaryMetrics {
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let precision = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fn_);
    BinaryMetrics {
        accuracy: (tp + tn) / (tp + tn + fp + fn_),
        sensitivity,
        specificity: ratio(tn, tn + fp),
        f1: ratio(2.0 * precision * sensitivity, precision + sensitivity),
    }
}

/// One point of an ROC curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC over every distinct threshold, starting at (0, 0). Tied scores move
/// the curve diagonally.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != positive.len() || scores.is_empty() {
        return Err(Error::usage("scores and indicators must be nonempty and equally long"));
    }
    let p = positive.iter().filter(|&&x| x).count() as f64;
    let n = positive.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return Err(Error::usage("ROC needs both positive and negative samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp / n,
            tpr: tp / p,
        });
    }
    Ok(points)
}

/// Trapezoidal area under an ROC curve.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    /// One-vs-rest curve and AUC per class; `None` when the class is absent
    /// or universal in the labels.
    pub per_class: Vec<Option<(Vec<RocPoint>, f64)>>,
    pub micro: Vec<RocPoint>,
    pub micro_auc: f64,
}

impl RocReport {
    pub const CSV_HEADER: &'static str = "curve,threshold,fpr,tpr";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        let k = self.per_class.len();
        let mut emit = |name: &str, pts: &[RocPoint]| {
            for p in pts {
                let _ = writeln!(s, "{name},{},{:.6},{:.6}", p.threshold, p.fpr, p.tpr);
            }
        };
        for (c, entry) in self.per_class.iter().enumerate() {
            if let Some((pts, _)) = entry {
                emit(&class_name(c, k), pts);
            }
        }
        emit("micro", &self.micro);
        s
    }
}

/// Per-class one-vs-rest ROC and the micro-average built by pooling every
/// (score, indicator) pair.
pub fn roc_micro_auc(scores: &[Vec<f64>], labels: &[usize]) -> Result<RocReport> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::usage("scores and labels must be nonempty and equally long"));
    }
    let k = scores[0].len();
    for (i, row) in scores.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.len() != k || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::usage(format!("score row {i} is not a probability vector (sum {sum})")));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::OutOfRange {
            what: "class index",
            value: bad as i64,
            valid: format!("0..{k}"),
        });
    }
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let ind: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        match roc_curve(&s, &ind) {
            Ok(pts) => {
                let a = auc(&pts);
                per_class.push(Some((pts, a)));
            }
            Err(_) => {
                warn!("AUC undefined for class {}: only one outcome present", class_name(c, k));
                per_class.push(None);
            }
        }
    }
    let pooled: Vec<f64> = scores.iter().flatten().copied().collect();
    let ind: Vec<bool> = labels.iter().flat_map(|&l| (0..k).map(move |c| c == l)).collect();
    let micro = roc_curve(&pooled, &ind)?;
    let micro_auc = auc(&micro);
    Ok(RocReport {
        per_class,
        micro,
        micro_auc,
    })
}

/// Indices into `labels` with every class replicated (seeded, with
/// replacement) up to the largest class count. Originals come first.
pub fn balance_by_oversampling(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::OutOfRange {
                what: "class index",
                value: l as i64,
                valid: format!("0..{k}"),
            });
        }
        by_class[l].push(i);
    }
    let absent: Vec<String> = (0..k).filter(|&c| by_class[c].is_empty()).map(|c| class_name(c, k)).collect();
    if !absent.is_empty() {
        return Err(Error::usage(format!(
            "cannot balance: no samples for class(es) {}",
            absent.join(", ")
        )));
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    for members in &by_class {
        for _ in members.len()..target {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientPrediction {
    pub subject: String,
    pub windows: Vec<usize>,
    pub voted: usize,
    pub tally: Vec<usize>,
}

/// Mode of the window predictions; ties go to the more severe class.
pub fn majority_vote(subject: &str, window_preds: &[usize], k: usize) -> Result<PatientPrediction> {
    if window_preds.is_empty() {
        return Err(Error::usage(format!("subject {subject} has no window predictions")));
    }
    let mut tally = vec![0usize; k];
    for &p in window_preds {
        if p >= k {
            return Err(Error::OutOfRange {
                what: "class index",
                value: p as i64,
                valid: format!("0..{k}"),
            });
        }
        tally[p] += 1;
    }
    let best = *tally.iter().max().expect("k > 0");
    let voted = (0..k).rev().find(|&c| tally[c] == best).expect("some class has the max");
    Ok(PatientPrediction {
        subject: subject.to_string(),
        windows: window_preds.to_vec(),
        voted,
        tally,
    })
}

/// Groups window predictions by subject (sorted by subject id) and votes.
pub fn vote_by_subject(subjects: &[String], preds: &[usize], k: usize) -> Result<Vec<PatientPrediction>> {
    if subjects.len() != preds.len() {
        return Err(Error::usage("subject and prediction counts differ"));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (s, &p) in subjects.iter().zip(preds) {
        groups.entry(s).or_default().push(p);
    }
    groups.into_iter().map(|(s, w)| majority_vote(s, &w, k)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

fn moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (n, mean, var)
}

fn two_sided(t: f64, df: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::usage(format!("t distribution: {e}")))?;
    Ok((2.0 * dist.cdf(-t.abs())).min(1.0))
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::usage("t-test needs at least two observations per sample"));
    }
    Ok(())
}

/// Welch's unequal-variance t-test.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    check_samples(a, b)?;
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let (sa, sb) = (va / na, vb / nb);
    if sa + sb <= 0.0 {
        return Err(Error::usage("t-test undefined: both samples have zero variance"));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTest { t, df, p: two_sided(t, df)? })
}

/// Student's t-test with pooled variance.
pub fn pooled_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    check_samples(a, b)?;
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    if pooled <= 0.0 {
        return Err(Error::usage("t-test undefined: both samples have zero variance"));
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTest { t, df, p: two_sided(t, df)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
}

pub fn summarize(x: &[f64]) -> Summary {
    let n = x.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary { n, mean, std }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// PHQ-8 ≤ 10.
    Control,
    /// PHQ-8 > 10.
    Experiment,
}

impl Group {
    pub fn of(phq8: i64) -> Group {
        if phq8 > 10 {
            Group::Experiment
        } else {
            Group::Control
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Experiment => "experiment",
        }
    }
}

/// What group statistics need from one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectMeasures {
    pub subject: String,
    pub phq8: i64,
    pub duration_seconds: f64,
    /// Word count of every participant sentence.
    pub sentence_lengths: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: Group,
    pub subjects: usize,
    pub duration: Summary,
    pub sentence_length: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub control: GroupStats,
    pub experiment: GroupStats,
    /// Per-subject durations compared.
    pub duration_test: TTest,
    /// Per-sentence word counts compared.
    pub sentence_test: TTest,
    pub pooled: bool,
}

/// Durations and sentence lengths of the two groups, with t-tests
/// (Welch unless `pooled`).
pub fn group_statistics(subjects: &[SubjectMeasures], pooled: bool) -> Result<GroupReport> {
    let mut dur = [Vec::new(), Vec::new()];
    let mut sent = [Vec::new(), Vec::new()];
    for s in subjects {
        SeverityLabel::from_phq8(s.phq8)?;
        let g = usize::from(Group::of(s.phq8) == Group::Experiment);
        dur[g].push(s.duration_seconds);
        sent[g].extend(s.sentence_lengths.iter().map(|&n| n as f64));
    }
    for (g, name) in [(0, "control"), (1, "experiment")] {
        if dur[g].len() < 2 {
            return Err(Error::usage(format!(
                "{name} group has {} subject(s); at least 2 are needed",
                dur[g].len()
            )));
        }
    }
    let test = if pooled { pooled_ttest } else { welch_ttest };
    let stats = |g: usize, group: Group| GroupStats {
        group,
        subjects: dur[g].len(),
        duration: summarize(&dur[g]),
        sentence_length: summarize(&sent[g]),
    };
    Ok(GroupReport {
        control: stats(0, Group::Control),
        experiment: stats(1, Group::Experiment),
        duration_test: test(&dur[0], &dur[1])?,
        sentence_test: test(&sent[0], &sent[1])?,
        pooled,
    })
}

impl GroupReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:>24} {:>24} {:>12} {:>12}",
            "quantity", "control", "experiment", "t", "p"
        );
        let row = |s: &mut String, name: &str, a: &Summary, b: &Summary, t: &TTest| {
            let _ = writeln!(
                s,
                "{:<22} {:>24} {:>24} {:>12.4} {:>12.4e}",
                name,
                format!("{:.4}±{:.4} (n={})", a.mean, a.std, a.n),
                format!("{:.4}±{:.4} (n={})", b.mean, b.std, b.n),
                t.t,
                t.p
            );
        };
        row(&mut s, "duration (s)", &self.control.duration, &self.experiment.duration, &self.duration_test);
        row(
            &mut s,
            "sentence length (words)",
            &self.control.sentence_length,
            &self.experiment.sentence_length,
            &self.sentence_test,
        );
        let _ = writeln!(
            s,
            "subjects: control {}, experiment {}; test: {}",
            self.control.subjects,
            self.experiment.subjects,
            if self.pooled { "pooled Student" } else { "Welch" }
        );
        s
    }

    pub const CSV_HEADER: &'static str = "quantity,control_n,control_mean,control_std,experiment_n,experiment_mean,experiment_std,t,df,p";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (name, a, b, t) in [
            ("duration_seconds", &self.control.duration, &self.experiment.duration, &self.duration_test),
            (
                "sentence_length",
                &self.control.sentence_length,
                &self.experiment.sentence_length,
                &self.sentence_test,
            ),
        ] {
            let _ = writeln!(
                s,
                "{name},{},{},{},{},{},{},{},{},{:e}",
                a.n, a.mean, a.std, b.n, b.mean, b.std, t.t, t.df, t.p
            );
        }
        s
    }
}

/// Equal-width bins over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

/// Histogram CSV (`group,quantity,bin_start,bin_end,count`) of durations
/// and sentence lengths per group.
pub fn histogram_csv(subjects: &[SubjectMeasures], bins: usize) -> String {
    let mut s = String::from("group,quantity,bin_start,bin_end,count\n");
    for group in [Group::Control, Group::Experiment] {
        let members: Vec<&SubjectMeasures> = subjects.iter().filter(|m| Group::of(m.phq8) == group).collect();
        let durations: Vec<f64> = members.iter().map(|m| m.duration_seconds).collect();
        let lengths: Vec<f64> = members
            .iter()
            .flat_map(|m| m.sentence_lengths.iter().map(|&n| n as f64))
            .collect();
        for (q, values) in [("duration_seconds", durations), ("sentence_length", lengths)] {
            for (a, b, c) in histogram(&values, bins) {
                let _ = writeln!(s, "{},{q},{a},{b},{c}", group.name());
            }
        }
    }
    s
}
