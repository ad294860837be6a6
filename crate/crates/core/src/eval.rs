//! Detection matching, confusion-matrix metrics and the Ki67 index.

use crate::annotation::CellClass;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Greedy one-to-one assignment of detections to truths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(detection index, truth index)`.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_truths: Vec<usize>,
}

/// Pairs points closer than or equal to `radius`, taking candidate pairs in
/// ascending distance with ties ordered by truth index, then detection
/// index.
pub fn match_detections(detections: &[(f64, f64)], truths: &[(f64, f64)], radius: f64) -> MatchResult {
    let mut candidates = Vec::new();
    for (t, &(tx, ty)) in truths.iter().enumerate() {
        for (d, &(dx, dy)) in detections.iter().enumerate() {
            let dist = ((tx - dx).powi(2) + (ty - dy).powi(2)).sqrt();
            if dist <= radius {
                candidates.push((dist, t, d));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_used = vec![false; detections.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for (_, t, d) in candidates {
        if !det_used[d] && !truth_used[t] {
            det_used[d] = true;
            truth_used[t] = true;
            pairs.push((d, t));
        }
    }
    pairs.sort_unstable_by_key(|&(d, t)| (t, d));
    MatchResult {
        pairs,
        unmatched_detections: (0..detections.len()).filter(|&d| !det_used[d]).collect(),
        unmatched_truths: (0..truths.len()).filter(|&t| !truth_used[t]).collect(),
    }
}

/// One-vs-rest counts and rates for a single class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: CellClass,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    /// Equal to recall.
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub accuracy: f64,
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub matched: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    /// Rows are true classes, columns predicted classes, over matched pairs.
    pub confusion: [[usize; 4]; 4],
    /// Unmatched truths per true class.
    pub missed: [usize; 4],
    /// Unmatched detections per predicted class.
    pub spurious: [usize; 4],
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean over classes occurring in the truth or predictions.
    pub macro_average: Averages,
    /// Rates from counts pooled over classes.
    pub micro_average: Averages,
    /// Correct labels among matched pairs.
    pub matched_accuracy: f64,
    /// Correct labels among all truths; missed cells count as errors.
    pub overall_accuracy: f64,
    pub detection: DetectionMetrics,
    pub ki67_index_truth: Option<f64>,
    pub ki67_index_predicted: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Builds the report from a matching plus class labels for every detection
/// and truth. Rates with an empty denominator are reported as 0.
pub fn compute_metrics(
    matching: &MatchResult,
    detection_classes: &[CellClass],
    truth_classes: &[CellClass],
) -> Result<MetricsReport> {
    if truth_classes.is_empty() {
        return Err(Error::invalid("compute_metrics", "empty truth set"));
    }
    let mut confusion = [[0usize; 4]; 4];
    for &(d, t) in &matching.pairs {
        confusion[truth_classes[t].index()][detection_classes[d].index()] += 1;
    }
    let mut missed = [0usize; 4];
    for &t in &matching.unmatched_truths {
        missed[truth_classes[t].index()] += 1;
    }
    let mut spurious = [0usize; 4];
    for &d in &matching.unmatched_detections {
        spurious[detection_classes[d].index()] += 1;
    }
    let events = matching.pairs.len() + matching.unmatched_truths.len() + matching.unmatched_detections.len();

    let mut per_class = Vec::with_capacity(4);
    for class in CellClass::ALL {
        let c = class.index();
        let tp = confusion[c][c];
        let row: usize = confusion[c].iter().sum();
        let col: usize = confusion.iter().map(|r| r[c]).sum();
        let fn_ = row - tp + missed[c];
        let fp = col - tp + spurious[c];
        let tn = events - tp - fn_ - fp;
        let precision = ratio(tp, tp + fp);
        let sensitivity = ratio(tp, tp + fn_);
        per_class.push(ClassMetrics {
            class,
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, events),
            precision,
            sensitivity,
            specificity: ratio(tn, tn + fp),
            f1: f1(precision, sensitivity),
        });
    }

    let active: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.tp + m.fp + m.fn_ > 0).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| -> f64 {
        if active.is_empty() {
            0.0
        } else {
            active.iter().map(|m| f(m)).sum::<f64>() / active.len() as f64
        }
    };
    let macro_average = Averages {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        sensitivity: mean(|m| m.sensitivity),
        specificity: mean(|m| m.specificity),
        f1: mean(|m| m.f1),
    };
    let sum = |f: fn(&ClassMetrics) -> usize| -> usize { per_class.iter().map(f).sum() };
    let (tp, fp, tn, fn_) = (sum(|m| m.tp), sum(|m| m.fp), sum(|m| m.tn), sum(|m| m.fn_));
    let micro_p = ratio(tp, tp + fp);
    let micro_r = ratio(tp, tp + fn_);
    let micro_average = Averages {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        precision: micro_p,
        sensitivity: micro_r,
        specificity: ratio(tn, tn + fp),
        f1: f1(micro_p, micro_r),
    };

    let diag: usize = (0..4).map(|c| confusion[c][c]).sum();
    let n_det = matching.pairs.len() + matching.unmatched_detections.len();
    let det_p = ratio(matching.pairs.len(), n_det);
    let det_r = ratio(matching.pairs.len(), truth_classes.len());
    let count = |classes: &[CellClass], c: CellClass| classes.iter().filter(|&&x| x == c).count();
    Ok(MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        confusion,
        missed,
        spurious,
        per_class,
        macro_average,
        micro_average,
        matched_accuracy: ratio(diag, matching.pairs.len()),
        overall_accuracy: ratio(diag, truth_classes.len()),
        detection: DetectionMetrics {
            matched: matching.pairs.len(),
            false_positives: matching.unmatched_detections.len(),
            false_negatives: matching.unmatched_truths.len(),
            precision: det_p,
            recall: det_r,
            f1: f1(det_p, det_r),
        },
        ki67_index_truth: ki67_index(
            count(truth_classes, CellClass::Ki67Positive),
            count(truth_classes, CellClass::Ki67Negative),
        )
        .ok(),
        ki67_index_predicted: ki67_index(
            count(detection_classes, CellClass::Ki67Positive),
            count(detection_classes, CellClass::Ki67Negative),
        )
        .ok(),
    })
}

/// Labelled matching of one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct TileMatch {
    pub matching: MatchResult,
    pub detection_classes: Vec<CellClass>,
    pub truth_classes: Vec<CellClass>,
}

/// Metrics over several tiles, pooled by concatenating their matchings.
pub fn pooled_metrics(tiles: &[TileMatch]) -> Result<MetricsReport> {
    let mut all = MatchResult {
        pairs: Vec::new(),
        unmatched_detections: Vec::new(),
        unmatched_truths: Vec::new(),
    };
    let (mut det, mut truth) = (Vec::new(), Vec::new());
    for t in tiles {
        let (od, ot) = (det.len(), truth.len());
        all.pairs.extend(t.matching.pairs.iter().map(|&(d, g)| (d + od, g + ot)));
        all.unmatched_detections.extend(t.matching.unmatched_detections.iter().map(|&d| d + od));
        all.unmatched_truths.extend(t.matching.unmatched_truths.iter().map(|&g| g + ot));
        det.extend_from_slice(&t.detection_classes);
        truth.extend_from_slice(&t.truth_classes);
    }
    compute_metrics(&all, &det, &truth)
}

/// `100 * positive / (positive + negative)`.
pub fn ki67_index(positive: usize, negative: usize) -> Result<f64> {
    if positive + negative == 0 {
        return Err(Error::DegenerateData("no Ki67-positive or negative cells".into()));
    }
    Ok(100.0 * positive as f64 / (positive + negative) as f64)
}

/// Index over a list of class labels; stroma and lymphocytes are ignored.
pub fn ki67_index_of(classes: &[CellClass]) -> Result<f64> {
    let pos = classes.iter().filter(|&&c| c == CellClass::Ki67Positive).count();
    let neg = classes.iter().filter(|&&c| c == CellClass::Ki67Negative).count();
    ki67_index(pos, neg)
}

impl MetricsReport {
    /// Plain-text rendering for terminals and logs.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let d = &self.detection;
        let _ = writeln!(
            s,
            "detection: matched {} fp {} fn {}  precision {:.4} recall {:.4} f1 {:.4}",
            d.matched, d.false_positives, d.false_negatives, d.precision, d.recall, d.f1
        );
        let _ = writeln!(
            s,
            "accuracy: matched {:.4} overall {:.4}",
            self.matched_accuracy, self.overall_accuracy
        );
        let _ = writeln!(s, "confusion (rows truth, cols predicted) + missed:");
        for class in CellClass::ALL {
            let c = class.index();
            let _ = writeln!(
                s,
                "  {:<11} {:>5} {:>5} {:>5} {:>5} | {:>5}",
                class.label(),
                self.confusion[c][0],
                self.confusion[c][1],
                self.confusion[c][2],
                self.confusion[c][3],
                self.missed[c]
            );
        }
        let _ = writeln!(s, "  {:<11} {:>5} {:>5} {:>5} {:>5}", "spurious", self.spurious[0], self.spurious[1], self.spurious[2], self.spurious[3]);
        let _ = writeln!(s, "class        acc    prec   sens   spec   f1");
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "  {:<11} {:.4} {:.4} {:.4} {:.4} {:.4}",
                m.class.label(),
                m.accuracy,
                m.precision,
                m.sensitivity,
                m.specificity,
                m.f1
            );
        }
        for (name, a) in [("macro", &self.macro_average), ("micro", &self.micro_average)] {
            let _ = writeln!(
                s,
                "  {:<11} {:.4} {:.4} {:.4} {:.4} {:.4}",
                name, a.accuracy, a.precision, a.sensitivity, a.specificity, a.f1
            );
        }
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}%"));
        let _ = writeln!(
            s,
            "ki67 index: truth {} predicted {}",
            fmt(self.ki67_index_truth),
            fmt(self.ki67_index_predicted)
        );
        s
    }
}
