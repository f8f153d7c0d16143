//! ROC/AUC on patch scores, line matching against truth, pixel metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{PixelClass, PixelClassMap};
use crate::synthfield::{FieldGroundTruth, TruthClass};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ROC needs both positive and negative samples")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Starts at (0, 0) with an infinite threshold and ends at (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        out
    }
}

/// Sweeps every distinct score as a threshold (`score >= t` is positive)
/// and integrates with the trapezoid rule. `true` marks a positive (weed).
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<RocCurve, EvalError> {
    if let Some(&(s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(s));
    }
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = points[points.len() - 1];
        let p = RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchGates {
    pub angle_deg: f64,
    pub rho_px: f64,
}

impl Default for MatchGates {
    fn default() -> Self {
        Self {
            angle_deg: 2.0,
            rho_px: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePair {
    pub detected: usize,
    pub truth: usize,
    pub angle_error_deg: f64,
    pub rho_error_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineMatchReport {
    pub pairs: Vec<LinePair>,
    pub false_positives: Vec<usize>,
    pub misses: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
}

impl LineMatchReport {
    pub fn max_angle_error(&self) -> f64 {
        self.pairs.iter().map(|p| p.angle_error_deg).fold(0.0, f64::max)
    }

    pub fn max_rho_error(&self) -> f64 {
        self.pairs.iter().map(|p| p.rho_error_px).fold(0.0, f64::max)
    }
}

/// Angle and offset error between two lines in normal form, with ρ measured
/// from `origin`. Normals 180° apart describe the same line with ρ negated.
pub fn line_errors(a: (f64, f64), b: (f64, f64), origin: (f64, f64)) -> (f64, f64) {
    let shift = |(theta, rho): (f64, f64)| {
        let t = theta.to_radians();
        rho - origin.0 * t.cos() - origin.1 * t.sin()
    };
    let d = a.0 - b.0;
    let turns = (d / 180.0).round();
    let angle = (d - 180.0 * turns).abs();
    let sign = if (turns as i64).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    (angle, (sign * shift(a) - shift(b)).abs())
}

/// Greedy best-first one-to-one matching on `angle/angle_gate + rho/rho_gate`
/// among pairs inside both gates. Lines are `(theta_deg, rho_px)`.
pub fn match_lines(
    detected: &[(f64, f64)],
    truth: &[(f64, f64)],
    gates: MatchGates,
    origin: (f64, f64),
) -> LineMatchReport {
    let mut candidates = Vec::new();
    for (i, &d) in detected.iter().enumerate() {
        for (j, &t) in truth.iter().enumerate() {
            let (ae, re) = line_errors(d, t, origin);
            if ae <= gates.angle_deg && re <= gates.rho_px {
                candidates.push((ae / gates.angle_deg + re / gates.rho_px, i, j, ae, re));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (_, i, j, ae, re) in candidates {
        if used_d[i] || used_t[j] {
            continue;
        }
        used_d[i] = true;
        used_t[j] = true;
        pairs.push(LinePair {
            detected: i,
            truth: j,
            angle_error_deg: ae,
            rho_error_px: re,
        });
    }
    let ratio = |n: usize, d: usize| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    LineMatchReport {
        precision: ratio(pairs.len(), detected.len()),
        recall: ratio(pairs.len(), truth.len()),
        false_positives: (0..detected.len()).filter(|&i| !used_d[i]).collect(),
        misses: (0..truth.len()).filter(|&j| !used_t[j]).collect(),
        pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    fn from_counts(tp: u64, predicted: u64, actual: u64) -> Self {
        if predicted == 0 && actual == 0 {
            return Self {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = div(tp, predicted);
        let recall = div(tp, actual);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelMetrics {
    /// Rows: truth crop, truth weed. Columns: predicted background, crop, weed.
    pub confusion: [[u64; 3]; 2],
    pub crop: ClassMetrics,
    pub weed: ClassMetrics,
}

impl PixelMetrics {
    pub fn evaluated(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

/// Counts over pixels that are vegetation in truth; truth-soil pixels are
/// ignored, and predicted background on vegetation is a miss.
pub fn pixel_metrics(predicted: &PixelClassMap, truth: &FieldGroundTruth) -> Result<PixelMetrics, EvalError> {
    let (pd, td) = ((predicted.width, predicted.height), (truth.width, truth.height));
    if pd != td {
        return Err(EvalError::DimensionMismatch(pd, td));
    }
    let mut confusion = [[0u64; 3]; 2];
    for (&p, &t) in predicted.classes.iter().zip(&truth.classes) {
        let row = match t {
            TruthClass::Soil => continue,
            TruthClass::Crop => 0,
            TruthClass::Weed => 1,
        };
        let col = match p {
            PixelClass::Background => 0,
            PixelClass::Crop => 1,
            PixelClass::Weed => 2,
        };
        confusion[row][col] += 1;
    }
    let class = |row: usize, col: usize| {
        ClassMetrics::from_counts(
            confusion[row][col],
            confusion[0][col] + confusion[1][col],
            confusion[row].iter().sum(),
        )
    };
    Ok(PixelMetrics {
        confusion,
        crop: class(0, 1),
        weed: class(1, 2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    pub detected: usize,
    pub truth: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub max_angle_error_deg: f64,
    pub max_rho_error_px: f64,
}

impl From<&LineMatchReport> for LineSummary {
    fn from(r: &LineMatchReport) -> Self {
        Self {
            detected: r.pairs.len() + r.false_positives.len(),
            truth: r.pairs.len() + r.misses.len(),
            matched: r.pairs.len(),
            precision: r.precision,
            recall: r.recall,
            max_angle_error_deg: r.max_angle_error(),
            max_rho_error_px: r.max_rho_error(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: Option<f64>,
    pub lines: Option<LineSummary>,
    pub pixels: Option<PixelMetrics>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mann_whitney(s: &[(f64, bool)]) -> f64 {
        let (mut sum, mut n) = (0.0, 0.0);
        for a in s.iter().filter(|x| x.1) {
            for b in s.iter().filter(|x| !x.1) {
                n += 1.0;
                sum += if a.0 > b.0 {
                    1.0
                } else if a.0 == b.0 {
                    0.5
                } else {
                    0.0
                };
            }
        }
        sum / n
    }

    #[test]
    fn perfect_separation() {
        let s = [(0.9, true), (0.8, true), (0.2, false), (0.1, false)];
        let r = roc_auc(&s).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(r.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn tie_fixture_matches_pairwise_count() {
        let s = [
            (0.9, true),
            (0.6, true),
            (0.6, false),
            (0.4, true),
            (0.3, false),
            (0.1, false),
        ];
        let r = roc_auc(&s).unwrap();
        // 9 pairs: 7 wins, 1 tie, 1 loss.
        assert_eq!(r.auc, 7.5 / 9.0);
        assert_eq!(r.auc, mann_whitney(&s));
        assert_eq!(r.points.len(), 6);
    }

    #[test]
    fn single_class_and_nan_rejected() {
        assert_eq!(roc_auc(&[(0.1, true)]), Err(EvalError::SingleClass));
        assert_eq!(roc_auc(&[]), Err(EvalError::SingleClass));
        assert!(matches!(
            roc_auc(&[(f64::NAN, true), (0.1, false)]),
            Err(EvalError::NonFiniteScore(_))
        ));
    }

    #[test]
    fn roc_csv_header() {
        let r = roc_auc(&[(0.5, true), (0.25, false)]).unwrap();
        assert_eq!(r.to_csv(), "threshold,fpr,tpr\ninf,0,0\n0.5,0,1\n0.25,1,1\n");
    }

    #[test]
    fn identical_lines_match() {
        let l = [(10.0, 100.0), (10.0, 250.0), (10.0, 400.0)];
        let r = match_lines(&l, &l, MatchGates::default(), (0.0, 0.0));
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
        assert_eq!(r.max_angle_error(), 0.0);
        assert_eq!(r.max_rho_error(), 0.0);
    }

    #[test]
    fn spurious_line_lowers_precision() {
        let truth = [(10.0, 100.0), (10.0, 250.0), (10.0, 400.0)];
        let mut det = truth.to_vec();
        det.push((40.0, 300.0));
        let r = match_lines(&det, &truth, MatchGates::default(), (0.0, 0.0));
        assert_eq!(r.precision, 0.75);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.false_positives, vec![3]);
    }

    #[test]
    fn flipped_normal_is_the_same_line() {
        let (a, r) = line_errors((179.5, -100.0), (-0.3, 100.0), (0.0, 0.0));
        assert!((a - 0.2).abs() < 1e-9);
        assert!(r < 1e-9);
        let (a, r) = line_errors((90.0, 50.0), (-90.0, -50.0), (0.0, 0.0));
        assert_eq!((a, r), (0.0, 0.0));
    }

    #[test]
    fn origin_shifts_rho() {
        // A 0.5° tilt moves ρ by about cx·sin(0.5°) at the far side.
        let cx = 512.0;
        let a = (0.5, 0.0);
        let b = (0.0, 0.0);
        let (_, at_zero) = line_errors(a, b, (0.0, 0.0));
        let (_, at_center) = line_errors(a, b, (cx, cx));
        assert_eq!(at_zero, 0.0);
        let t = 0.5f64.to_radians();
        assert!((at_center - (cx * (1.0 - t.cos()) - cx * t.sin()).abs()).abs() < 1e-9);
    }

    #[test]
    fn greedy_equals_exhaustive_assignment() {
        let truth = [(5.0, 100.0), (5.5, 130.0), (4.8, 160.0)];
        let det = [(5.3, 104.0), (5.1, 128.0), (5.0, 163.0)];
        let gates = MatchGates::default();
        let r = match_lines(&det, &truth, gates, (0.0, 0.0));
        let cost = |i: usize, j: usize| {
            let (a, p) = line_errors(det[i], truth[j], (0.0, 0.0));
            a / gates.angle_deg + p / gates.rho_px
        };
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .min_by(|a, b| {
                let ca: f64 = (0..3).map(|i| cost(i, a[i])).sum();
                let cb: f64 = (0..3).map(|i| cost(i, b[i])).sum();
                ca.total_cmp(&cb)
            })
            .unwrap();
        assert_eq!(r.pairs.len(), 3);
        for p in &r.pairs {
            assert_eq!(best[p.detected], p.truth);
        }
    }

    #[test]
    fn gates_reject_far_lines() {
        let r = match_lines(&[(3.0, 100.0)], &[(0.0, 100.0)], MatchGates::default(), (0.0, 0.0));
        assert!(r.pairs.is_empty());
        assert_eq!((r.precision, r.recall), (0.0, 0.0));
        let r = match_lines(&[(0.0, 111.0)], &[(0.0, 100.0)], MatchGates::default(), (0.0, 0.0));
        assert!(r.pairs.is_empty());
    }

    fn truth_from(w: usize, h: usize, idx: &[u8]) -> FieldGroundTruth {
        FieldGroundTruth {
            width: w,
            height: h,
            classes: idx
                .iter()
                .map(|&i| match i {
                    0 => TruthClass::Soil,
                    1 => TruthClass::Crop,
                    _ => TruthClass::Weed,
                })
                .collect(),
            lines: Vec::new(),
            weeds: Vec::new(),
            row_width_px: 0.0,
        }
    }

    #[test]
    fn perfect_prediction() {
        let idx: Vec<u8> = (0..64).map(|i| (i % 3) as u8).collect();
        let truth = truth_from(8, 8, &idx);
        let pred = PixelClassMap::from_indices(8, 8, &idx).unwrap();
        let m = pixel_metrics(&pred, &truth).unwrap();
        assert_eq!((m.crop.f1, m.weed.f1), (1.0, 1.0));
    }

    #[test]
    fn all_crop_prediction_misses_weeds() {
        let idx: Vec<u8> = (0..64).map(|i| 1 + (i % 2) as u8).collect();
        let truth = truth_from(8, 8, &idx);
        let pred = PixelClassMap::from_indices(8, 8, &[1; 64]).unwrap();
        let m = pixel_metrics(&pred, &truth).unwrap();
        assert_eq!(m.weed.recall, 0.0);
        assert_eq!(m.crop.recall, 1.0);
        assert_eq!(m.crop.precision, 0.5);
    }

    #[test]
    fn hand_counted_confusion() {
        // Truth: rows 0-1 soil, rows 2-4 crop, rows 5-7 weed.
        // Prediction: columns 0-1 background, 2-4 crop, 5-7 weed.
        let truth: Vec<u8> = (0..64)
            .map(|i| match i / 8 {
                0 | 1 => 0,
                2..=4 => 1,
                _ => 2,
            })
            .collect();
        let pred: Vec<u8> = (0..64)
            .map(|i| match i % 8 {
                0 | 1 => 0,
                2..=4 => 1,
                _ => 2,
            })
            .collect();
        let m = pixel_metrics(
            &PixelClassMap::from_indices(8, 8, &pred).unwrap(),
            &truth_from(8, 8, &truth),
        )
        .unwrap();
        assert_eq!(m.confusion, [[6, 9, 9], [6, 9, 9]]);
        assert_eq!(m.evaluated(), 48);
        assert_eq!(m.weed.precision, 0.5);
        assert_eq!(m.weed.recall, 9.0 / 24.0);
        assert!(pixel_metrics(
            &PixelClassMap::from_indices(4, 4, &[0; 16]).unwrap(),
            &truth_from(8, 8, &truth)
        )
        .is_err());
    }
}
