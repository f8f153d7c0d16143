//! Patch scoring: a scorer interface, a feature-based logistic baseline and
//! imported external scores.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeler::{Patch, PatchLabel};
use crate::raster::{exg_pixel, RgbImage};
use crate::superpixel::rgb_to_lab;

pub const FEATURE_DIM: usize = 30;
pub const EXG_BINS: usize = 16;
const EXG_LO: f64 = -1.0;
const EXG_HI: f64 = 2.0;
/// ExG above which a pixel counts as vegetation in the features.
pub const FEATURE_VEG_EXG: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set holds a single class")]
    SingleClassTrainSet,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("malformed score file: {0}")]
    MalformedCsv(String),
    #[error("no score for patch {0}")]
    UnknownPatch(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("{0}")]
    Io(#[from] crate::io::IoError),
}

/// Hand-crafted patch descriptor, laid out as
/// `[rgb mean(3), rgb std(3), lab mean(3), lab std(3), exg histogram(16),
/// vegetation fraction, mean gradient magnitude]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatures(pub [f64; FEATURE_DIM]);

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// RGB values are scaled to `[0, 1]`; Lab stays in its native units.
pub fn extract_features(img: &RgbImage) -> PatchFeatures {
    let mut f = [0.0; FEATURE_DIM];
    let n = (img.width() * img.height()) as f64;
    for c in 0..3 {
        let (m, s) = mean_std(&img.pixels().map(|p| p[c] as f64 / 255.0).collect::<Vec<_>>());
        f[c] = m;
        f[3 + c] = s;
    }
    let lab = rgb_to_lab(img);
    for c in 0..3 {
        let (m, s) = mean_std(&lab.data.iter().map(|p| p[c]).collect::<Vec<_>>());
        f[6 + c] = m;
        f[9 + c] = s;
    }
    let mut veg = 0usize;
    for p in img.pixels() {
        let e = exg_pixel(p);
        let bin = (((e - EXG_LO) / (EXG_HI - EXG_LO)) * EXG_BINS as f64).floor();
        f[12 + (bin.max(0.0) as usize).min(EXG_BINS - 1)] += 1.0 / n;
        if e > FEATURE_VEG_EXG {
            veg += 1;
        }
    }
    f[28] = veg as f64 / n;
    f[29] = mean_gradient(img);
    PatchFeatures(f)
}

/// Mean central-difference gradient magnitude of the channel-mean gray
/// image in `[0, 1]` units, with replicated borders.
fn mean_gradient(img: &RgbImage) -> f64 {
    let (w, h) = img.dims();
    let gray: Vec<f64> = img
        .pixels()
        .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / (3.0 * 255.0))
        .collect();
    let at = |x: usize, y: usize| gray[y * w + x];
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let gx = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
            let gy = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
            sum += gx.hypot(gy);
        }
    }
    sum / (w * h) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.01,
            lr_decay_every: 200,
            lr_decay_factor: 10.0,
            epochs: 600,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.initial_lr > 0.0 && self.lr_decay_factor > 0.0) {
            return Err(ClassifierError::InvalidConfig(
                "learning rate and decay factor must be positive",
            ));
        }
        if self.lr_decay_every == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(ClassifierError::InvalidConfig(
                "epochs, decay period and batch size must be positive",
            ));
        }
        Ok(())
    }

    /// Step size used during 0-based epoch `e`.
    pub fn lr_at(&self, e: usize) -> f64 {
        self.initial_lr / self.lr_decay_factor.powi((e / self.lr_decay_every) as i32)
    }
}

/// Logistic model over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub config: TrainConfig,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
}

impl BaselineModel {
    /// Model with all weights zero; scores 0.5 everywhere.
    pub fn zero() -> Self {
        Self {
            weights: vec![0.0; FEATURE_DIM],
            bias: 0.0,
            feature_mean: vec![0.0; FEATURE_DIM],
            feature_std: vec![1.0; FEATURE_DIM],
            config: TrainConfig::default(),
            best_epoch: 0,
        }
    }

    fn standardize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// `p_weed` for a raw feature vector.
    pub fn predict_features(&self, f: &[f64]) -> f64 {
        let x = self.standardize(f);
        sigmoid(logit(&self.weights, self.bias, &x))
    }

    pub fn predict(&self, img: &RgbImage) -> f64 {
        self.predict_features(&extract_features(img).0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let m: BaselineModel =
            serde_json::from_str(text).map_err(|e| ClassifierError::MalformedModel(e.to_string()))?;
        let n = m.weights.len();
        if m.feature_mean.len() != n || m.feature_std.len() != n || m.feature_std.iter().any(|&s| !(s > 0.0)) {
            return Err(ClassifierError::MalformedModel("inconsistent normalization".into()));
        }
        Ok(m)
    }
}

pub fn predict(model: &BaselineModel, p: &Patch) -> f64 {
    model.predict(&p.pixels)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(w: &[f64], b: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy of a logistic model; labels are 1 for weed.
pub fn cross_entropy(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let sum: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = logit(w, b, x);
            softplus(z) - y * z
        })
        .sum();
    sum / xs.len() as f64
}

/// Gradient of [`cross_entropy`] with respect to `(w, b)`.
pub fn cross_entropy_grad(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64]) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let r = sigmoid(logit(w, b, x)) - y;
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    let n = xs.len() as f64;
    gw.iter_mut().for_each(|g| *g /= n);
    (gw, gb / n)
}

/// Per-epoch losses of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    /// `(epoch, train_loss, val_loss, lr)`; `val_loss` is NaN without a
    /// validation set.
    pub rows: Vec<(usize, f64, f64, f64)>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for (e, t, v, lr) in &self.rows {
            let _ = writeln!(out, "{e},{t},{v},{lr}");
        }
        out
    }
}

/// One labeled feature vector; `weed` is the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub weed: bool,
}

pub fn samples_from_patches(patches: &[Patch]) -> Vec<Sample> {
    patches
        .iter()
        .map(|p| Sample {
            features: extract_features(&p.pixels).0.to_vec(),
            weed: p.label == PatchLabel::Weed,
        })
        .collect()
}

/// Mini-batch gradient descent on the logistic loss. Returns the parameters
/// of the epoch with the lowest validation loss (training loss when `val`
/// is empty).
pub fn train_on_samples(
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<(BaselineModel, LossCurve), ClassifierError> {
    cfg.validate()?;
    let positives = train.iter().filter(|s| s.weed).count();
    if positives == 0 || positives == train.len() {
        return Err(ClassifierError::SingleClassTrainSet);
    }
    let dim = train[0].features.len();
    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in train {
        for (m, v) in mean.iter_mut().zip(&s.features) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; dim];
    for s in train {
        for ((sd, v), m) in std.iter_mut().zip(&s.features).zip(&mean) {
            *sd += (v - m) * (v - m) / n;
        }
    }
    for sd in std.iter_mut() {
        *sd = sd.sqrt();
        if !(*sd > 1e-12) {
            *sd = 1.0;
        }
    }
    let prep = |set: &[Sample]| -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs = set
            .iter()
            .map(|s| {
                s.features
                    .iter()
                    .zip(&mean)
                    .zip(&std)
                    .map(|((v, m), sd)| (v - m) / sd)
                    .collect()
            })
            .collect();
        let ys = set.iter().map(|s| if s.weed { 1.0 } else { 0.0 }).collect();
        (xs, ys)
    };
    let (tx, ty) = prep(train);
    let (vx, vy) = prep(val);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = LossCurve { rows: Vec::new() };
    let mut best = (f64::INFINITY, w.clone(), b, 0usize);
    let mut bx = Vec::with_capacity(cfg.batch_size);
    let mut by = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(tx[i].clone());
                by.push(ty[i]);
            }
            let (gw, gb) = cross_entropy_grad(&w, b, &bx, &by);
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= lr * g;
            }
            b -= lr * gb;
        }
        let train_loss = cross_entropy(&w, b, &tx, &ty);
        let val_loss = if vx.is_empty() {
            f64::NAN
        } else {
            cross_entropy(&w, b, &vx, &vy)
        };
        curve.rows.push((epoch, train_loss, val_loss, lr));
        let key = if vx.is_empty() { train_loss } else { val_loss };
        if key < best.0 {
            best = (key, w.clone(), b, epoch);
        }
    }
    let (_, weights, bias, best_epoch) = best;
    Ok((
        BaselineModel {
            weights,
            bias,
            feature_mean: mean,
            feature_std: std,
            config: *cfg,
            best_epoch,
        },
        curve,
    ))
}

pub fn train_baseline(
    train: &[Patch],
    val: &[Patch],
    cfg: &TrainConfig,
) -> Result<(BaselineModel, LossCurve), ClassifierError> {
    train_on_samples(&samples_from_patches(train), &samples_from_patches(val), cfg)
}

/// Size and seed of a random gradient-check instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub samples: usize,
    pub dims: usize,
    pub seed: u64,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            samples: 10,
            dims: FEATURE_DIM,
            seed: 0,
            step: 1e-5,
        }
    }
}

/// Largest relative difference between the analytic loss gradient and
/// central finite differences on a random instance.
pub fn gradient_check(cfg: &GradCheckConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs: Vec<Vec<f64>> = (0..cfg.samples)
        .map(|_| (0..cfg.dims).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let ys: Vec<f64> = (0..cfg.samples)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
        .collect();
    let w: Vec<f64> = (0..cfg.dims).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = rng.random_range(-1.0..1.0);
    let (gw, gb) = cross_entropy_grad(&w, b, &xs, &ys);
    let h = cfg.step;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    for i in 0..cfg.dims {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[i] += h;
        wm[i] -= h;
        let num = (cross_entropy(&wp, b, &xs, &ys) - cross_entropy(&wm, b, &xs, &ys)) / (2.0 * h);
        worst = worst.max(rel(gw[i], num));
    }
    let num = (cross_entropy(&w, b + h, &xs, &ys) - cross_entropy(&w, b - h, &xs, &ys)) / (2.0 * h);
    worst.max(rel(gb, num))
}

/// Anything that turns a 64x64 window into `p_weed`.
pub trait Scorer {
    /// `key` names the window: a dataset path for dataset patches,
    /// `<image>_<x>_<y>` for scan windows.
    fn score(&self, key: &str, pixels: &RgbImage) -> Result<f64, ClassifierError>;
}

impl Scorer for BaselineModel {
    fn score(&self, _key: &str, pixels: &RgbImage) -> Result<f64, ClassifierError> {
        Ok(self.predict(pixels))
    }
}

/// Scorer returning the same value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, _key: &str, _pixels: &RgbImage) -> Result<f64, ClassifierError> {
        Ok(self.0)
    }
}

/// Scores produced elsewhere, looked up by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportedScores {
    scores: HashMap<String, f64>,
}

impl ImportedScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.scores.get(key).copied()
    }
}

impl Scorer for ImportedScores {
    fn score(&self, key: &str, _pixels: &RgbImage) -> Result<f64, ClassifierError> {
        self.get(key)
            .ok_or_else(|| ClassifierError::UnknownPatch(key.to_string()))
    }
}

#[derive(Deserialize)]
struct ScoreRow {
    path: String,
    p_weed: f64,
}

/// Parses `path,p_weed` CSV text with a header row.
pub fn import_scores(text: &str) -> Result<ImportedScores, ClassifierError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut scores = HashMap::new();
    for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let row = row.map_err(|e| ClassifierError::MalformedCsv(e.to_string()))?;
        if !(0.0..=1.0).contains(&row.p_weed) {
            return Err(ClassifierError::MalformedCsv(format!(
                "row {}: score {} outside [0, 1]",
                i + 1,
                row.p_weed
            )));
        }
        if scores.insert(row.path.clone(), row.p_weed).is_some() {
            return Err(ClassifierError::MalformedCsv(format!("duplicate path {}", row.path)));
        }
    }
    Ok(ImportedScores { scores })
}

pub fn import_scores_file(path: &Path) -> Result<ImportedScores, ClassifierError> {
    import_scores(&crate::io::read_text(path)?)
}
