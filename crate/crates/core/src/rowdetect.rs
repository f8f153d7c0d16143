//! Crop-row detection on skeletons.
//!
//! Lines use the normal form `rho = x cos(theta) + y sin(theta)` in image
//! coordinates (origin top-left, `y` down), `theta` in `(-90, 90]`. Votes for a
//! point land in bin `floor(rho / rho_res + 0.5)`.
//!
//! The accumulator is normalized by the accumulator of an all-foreground image
//! of the same size, so a bin's value is the fraction of the pixels along that
//! line which belong to the skeleton. Peaks are then extracted greedily: the
//! pixels supporting each peak have their votes removed before the next
//! search, and only peaks roughly parallel to the dominant skeleton direction
//! are kept.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{axis_distance_deg, component_orientation, wrap_axis_deg, BinaryMask, Skeleton};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RowDetectError {
    #[error("skeleton is empty")]
    EmptySkeleton,
    #[error("accumulator dimensions differ")]
    DimensionMismatch,
    #[error("invalid Hough configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("malformed lines file: {0}")]
    MalformedCsv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughConfig {
    pub theta_res_deg: f64,
    pub rho_res_px: f64,
    /// Peaks must exceed this normalized score.
    pub norm_threshold: f64,
    /// Maximum deviation of an accepted line from the main orientation.
    pub angle_gate_deg: f64,
    /// Perpendicular distance within which skeleton pixels support a peak.
    pub support_band_px: f64,
    /// Bins whose all-foreground count is below this fraction of the shorter
    /// image side are excluded from normalization. Lines clipping a corner
    /// are only a few pixels long and would otherwise normalize to 1 on a
    /// handful of stray pixels.
    pub min_chord_fraction: f64,
    /// Replace each accepted peak by a total-least-squares fit to its
    /// support pixels when the fit stays within `refine_max_deg` of the peak.
    pub refine: bool,
    pub refine_max_deg: f64,
    /// Support pixels this close to the image border are left out of the
    /// fit, since thinning a row cut by the border pulls its skeleton inward.
    pub refine_border_px: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            theta_res_deg: 0.1,
            rho_res_px: 1.0,
            norm_threshold: 0.1,
            angle_gate_deg: 20.0,
            support_band_px: 10.0,
            min_chord_fraction: 0.1,
            refine: true,
            refine_max_deg: 2.0,
            refine_border_px: 16.0,
        }
    }
}

impl HoughConfig {
    pub fn validate(&self) -> Result<(), RowDetectError> {
        if !(self.theta_res_deg > 0.0 && self.theta_res_deg <= 90.0) {
            return Err(RowDetectError::InvalidConfig("theta_res_deg must be in (0, 90]"));
        }
        if !(self.rho_res_px > 0.0) {
            return Err(RowDetectError::InvalidConfig("rho_res_px must be positive"));
        }
        if !(self.norm_threshold > 0.0 && self.norm_threshold < 1.0) {
            return Err(RowDetectError::InvalidConfig("norm_threshold must be in (0, 1)"));
        }
        if !(self.angle_gate_deg > 0.0 && self.angle_gate_deg < 90.0) {
            return Err(RowDetectError::InvalidConfig("angle_gate_deg must be in (0, 90)"));
        }
        if !(self.support_band_px >= 0.0) {
            return Err(RowDetectError::InvalidConfig("support_band_px must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.min_chord_fraction) {
            return Err(RowDetectError::InvalidConfig("min_chord_fraction must be in [0, 1)"));
        }
        if !(self.refine_max_deg >= 0.0 && self.refine_border_px >= 0.0) {
            return Err(RowDetectError::InvalidConfig(
                "refine_max_deg and refine_border_px must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn theta_bins(&self) -> usize {
        (180.0 / self.theta_res_deg).round().max(1.0) as usize
    }
}

/// Vote space over `(theta, rho)`, stored theta-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HoughAccumulator {
    theta_bins: usize,
    rho_bins: usize,
    rho_half: usize,
    rho_res: f64,
    image_dims: (usize, usize),
    votes: Vec<f32>,
}

impl HoughAccumulator {
    pub fn zeros(cfg: &HoughConfig, image_dims: (usize, usize)) -> Self {
        let (w, h) = image_dims;
        let diag = (((w.max(1) - 1) as f64).powi(2) + ((h.max(1) - 1) as f64).powi(2)).sqrt();
        let rho_half = (diag / cfg.rho_res_px).ceil() as usize + 1;
        let theta_bins = cfg.theta_bins();
        let rho_bins = 2 * rho_half + 1;
        Self {
            theta_bins,
            rho_bins,
            rho_half,
            rho_res: cfg.rho_res_px,
            image_dims,
            votes: vec![0.0; theta_bins * rho_bins],
        }
    }

    pub fn theta_bins(&self) -> usize {
        self.theta_bins
    }

    pub fn rho_bins(&self) -> usize {
        self.rho_bins
    }

    pub fn votes(&self) -> &[f32] {
        &self.votes
    }

    pub fn image_dims(&self) -> (usize, usize) {
        self.image_dims
    }

    /// Bin center of theta column `i`: `-90 + (i + 1) * 180 / theta_bins`.
    pub fn theta_deg(&self, i: usize) -> f64 {
        ((i + 1) * 180) as f64 / self.theta_bins as f64 - 90.0
    }

    pub fn rho_px(&self, j: usize) -> f64 {
        (j as f64 - self.rho_half as f64) * self.rho_res
    }

    /// Rho bin index for a real-valued rho, or `None` outside the grid.
    pub fn rho_index(&self, rho: f64) -> Option<usize> {
        let j = (rho / self.rho_res + 0.5).floor() as i64 + self.rho_half as i64;
        (j >= 0 && (j as usize) < self.rho_bins).then_some(j as usize)
    }

    /// Theta column closest to `theta_deg` (wrapped into `(-90, 90]`).
    pub fn theta_index(&self, theta_deg: f64) -> usize {
        let t = wrap_axis_deg(theta_deg);
        let i = ((t + 90.0) * self.theta_bins as f64 / 180.0).round() as i64 - 1;
        i.rem_euclid(self.theta_bins as i64) as usize
    }

    #[inline]
    pub fn get(&self, theta_idx: usize, rho_idx: usize) -> f32 {
        self.votes[theta_idx * self.rho_bins + rho_idx]
    }

    /// Value at the bin holding `(theta_deg, rho)`, 0 outside the grid.
    pub fn at(&self, theta_deg: f64, rho: f64) -> f32 {
        match self.rho_index(rho) {
            Some(j) => self.get(self.theta_index(theta_deg), j),
            None => 0.0,
        }
    }

    /// Largest value and its `(theta_idx, rho_idx)`; ties go to the first bin
    /// in theta-major order.
    pub fn argmax(&self) -> (f32, usize, usize) {
        let mut best = (f32::NEG_INFINITY, 0usize);
        for (k, &v) in self.votes.iter().enumerate() {
            if v > best.0 {
                best = (v, k);
            }
        }
        (best.0, best.1 / self.rho_bins, best.1 % self.rho_bins)
    }

    fn same_shape(&self, other: &HoughAccumulator) -> bool {
        self.theta_bins == other.theta_bins
            && self.rho_bins == other.rho_bins
            && self.rho_res == other.rho_res
            && self.image_dims == other.image_dims
    }
}

/// Per-theta trig scaled by `1 / rho_res`, shared by every voting routine.
struct Trig {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Trig {
    fn new(acc: &HoughAccumulator) -> Self {
        let mut cos = Vec::with_capacity(acc.theta_bins);
        let mut sin = Vec::with_capacity(acc.theta_bins);
        for i in 0..acc.theta_bins {
            let t = acc.theta_deg(i).to_radians();
            cos.push(t.cos() / acc.rho_res);
            sin.push(t.sin() / acc.rho_res);
        }
        Self { cos, sin }
    }
}

/// `floor(v + 0.5)` without a libm call.
#[inline(always)]
fn round_half_up(v: f64) -> i64 {
    let t = v + 0.5;
    let i = t as i64;
    if (i as f64) > t {
        i - 1
    } else {
        i
    }
}

#[inline]
fn vote_point(acc: &mut HoughAccumulator, trig: &Trig, x: f64, y: f64, delta: f32) {
    let half = acc.rho_half as i64;
    let rb = acc.rho_bins;
    for i in 0..acc.theta_bins {
        let j = (round_half_up(x * trig.cos[i] + y * trig.sin[i]) + half) as usize;
        acc.votes[i * rb + j] += delta;
    }
}

/// One vote per point and theta column.
pub fn hough_transform(points: &[(u32, u32)], cfg: &HoughConfig, image_dims: (usize, usize)) -> HoughAccumulator {
    let mut acc = HoughAccumulator::zeros(cfg, image_dims);
    let trig = Trig::new(&acc);
    for &(x, y) in points {
        debug_assert!((x as usize) < image_dims.0 && (y as usize) < image_dims.1);
        vote_point(&mut acc, &trig, x as f64, y as f64, 1.0);
    }
    acc
}

/// Accumulator of an image whose every pixel is foreground.
pub fn hough_ones(image_dims: (usize, usize), cfg: &HoughConfig) -> HoughAccumulator {
    let mut acc = HoughAccumulator::zeros(cfg, image_dims);
    let trig = Trig::new(&acc);
    let (w, h) = image_dims;
    let half = acc.rho_half as i64;
    let rb = acc.rho_bins;
    for i in 0..acc.theta_bins {
        let (c, s) = (trig.cos[i], trig.sin[i]);
        let column = &mut acc.votes[i * rb..(i + 1) * rb];
        for y in 0..h {
            let base = y as f64 * s;
            for x in 0..w {
                let j = (round_half_up(x as f64 * c + base) + half) as usize;
                column[j] += 1.0;
            }
        }
    }
    acc
}

/// Elementwise `h / h1`; bins with `h1 == 0` are 0.
pub fn normalize(h: &HoughAccumulator, h1: &HoughAccumulator) -> Result<HoughAccumulator, RowDetectError> {
    normalize_with_floor(h, h1, 0.0)
}

/// [`normalize`], also zeroing bins where `h1 < min_ones`.
pub fn normalize_with_floor(
    h: &HoughAccumulator,
    h1: &HoughAccumulator,
    min_ones: f32,
) -> Result<HoughAccumulator, RowDetectError> {
    if !h.same_shape(h1) {
        return Err(RowDetectError::DimensionMismatch);
    }
    let mut out = h.clone();
    for (v, &o) in out.votes.iter_mut().zip(&h1.votes) {
        *v = if o > 0.0 && o >= min_ones {
            (*v / o).min(1.0)
        } else {
            0.0
        };
    }
    Ok(out)
}

/// Dominant skeleton direction: pixel-weighted mode of component
/// orientations over 1-degree bins centered on whole degrees.
pub fn main_orientation(sk: &Skeleton) -> Result<f64, RowDetectError> {
    let mut hist = [0usize; 180];
    let mut any = false;
    for c in &sk.components {
        if let Some(a) = c.orientation_deg {
            hist[orientation_bin(a)] += c.pixels.len();
            any = true;
        }
    }
    if !any {
        return Err(RowDetectError::EmptySkeleton);
    }
    let (bin, _) = hist
        .iter()
        .enumerate()
        .fold((0, 0), |best, (i, &n)| if n > best.1 { (i, n) } else { best });
    Ok(bin as f64 - 89.0)
}

/// Bin `k` holds angles that round to `k - 89` degrees; -90 wraps to 90.
fn orientation_bin(a: f64) -> usize {
    let mut d = wrap_axis_deg(a).round() as i64;
    if d <= -90 {
        d += 180;
    }
    (d + 89) as usize
}

/// Normal angle of a line with the given direction angle.
pub fn normal_from_direction(direction_deg: f64) -> f64 {
    wrap_axis_deg(direction_deg - 90.0)
}

pub fn direction_from_normal(theta_deg: f64) -> f64 {
    wrap_axis_deg(theta_deg + 90.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedLine {
    pub theta_deg: f64,
    pub rho_px: f64,
    /// Normalized peak value.
    pub score: f64,
    pub supporting_component_ids: Vec<u32>,
    pub support_pixels: usize,
}

impl DetectedLine {
    /// Line through the given normal parameters with no detection metadata.
    pub fn from_params(theta_deg: f64, rho_px: f64) -> Self {
        Self {
            theta_deg,
            rho_px,
            score: 1.0,
            supporting_component_ids: Vec::new(),
            support_pixels: 0,
        }
    }

    pub fn direction_deg(&self) -> f64 {
        direction_from_normal(self.theta_deg)
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let t = self.theta_deg.to_radians();
        (x * t.cos() + y * t.sin() - self.rho_px).abs()
    }
}

/// One iteration of the extraction loop.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakRecord {
    pub theta_deg: f64,
    pub rho_px: f64,
    pub score: f64,
    pub support: Vec<usize>,
    pub accepted: bool,
}

/// Everything the extraction loop produced.
#[derive(Debug, Clone, PartialEq)]
pub struct LineDetection {
    pub main_orientation_deg: f64,
    pub lines: Vec<DetectedLine>,
    pub peaks: Vec<PeakRecord>,
}

/// Crop-line detector holding the all-foreground accumulators per image size.
#[derive(Debug, Default)]
pub struct LineDetector {
    cfg: HoughConfig,
    ones: Mutex<HashMap<(usize, usize), Arc<HoughAccumulator>>>,
}

impl LineDetector {
    pub fn new(cfg: HoughConfig) -> Result<Self, RowDetectError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            ones: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &HoughConfig {
        &self.cfg
    }

    pub fn ones(&self, dims: (usize, usize)) -> Arc<HoughAccumulator> {
        let mut cache = self.ones.lock().expect("hough cache poisoned");
        cache
            .entry(dims)
            .or_insert_with(|| Arc::new(hough_ones(dims, &self.cfg)))
            .clone()
    }

    pub fn detect(&self, sk: &Skeleton) -> Result<LineDetection, RowDetectError> {
        if sk.is_empty() {
            return Err(RowDetectError::EmptySkeleton);
        }
        let main = main_orientation(sk)?;
        let dims = (sk.width, sk.height);
        let ones = self.ones(dims);

        let mut pixels = Vec::with_capacity(sk.pixel_count());
        for c in &sk.components {
            for &(x, y) in &c.pixels {
                pixels.push((x, y, c.id));
            }
        }
        let points: Vec<(u32, u32)> = pixels.iter().map(|&(x, y, _)| (x, y)).collect();
        // Votes are kept as raw counts; dividing by the all-foreground counts on
        // the fly is the same as subtracting normalized votes, without drift.
        let mut counts = hough_transform(&points, &self.cfg, dims);
        let min_ones = (self.cfg.min_chord_fraction * dims.0.min(dims.1) as f64) as f32;
        let denom: Vec<f32> = ones
            .votes
            .iter()
            .map(|&o| if o > 0.0 && o >= min_ones { o } else { 0.0 })
            .collect();
        let trig = Trig::new(&counts);
        let mut alive = vec![true; pixels.len()];

        let mut lines = Vec::new();
        let mut peaks = Vec::new();
        loop {
            let (score, k) = normalized_argmax(&counts.votes, &denom);
            let (ti, rj) = (k / counts.rho_bins, k % counts.rho_bins);
            if !(score as f64 > self.cfg.norm_threshold) {
                break;
            }
            let theta = counts.theta_deg(ti);
            let rho = counts.rho_px(rj);
            let (c, s) = {
                let t = theta.to_radians();
                (t.cos(), t.sin())
            };
            let support: Vec<usize> = (0..pixels.len())
                .filter(|&k| {
                    let (x, y, _) = pixels[k];
                    alive[k] && (x as f64 * c + y as f64 * s - rho).abs() <= self.cfg.support_band_px
                })
                .collect();
            if support.is_empty() {
                // Unreachable with exact counts; guarantees progress regardless.
                counts.votes[ti * counts.rho_bins + rj] = 0.0;
            }
            for &k in &support {
                alive[k] = false;
                let (x, y, _) = pixels[k];
                vote_point(&mut counts, &trig, x as f64, y as f64, -1.0);
            }
            let accepted = axis_distance_deg(direction_from_normal(theta), main) < self.cfg.angle_gate_deg;
            if accepted {
                let ids: BTreeSet<u32> = support.iter().map(|&k| pixels[k].2).collect();
                let (theta_deg, rho_px) = if self.cfg.refine {
                    let all: Vec<(u32, u32)> = support.iter().map(|&k| (pixels[k].0, pixels[k].1)).collect();
                    let m = self.cfg.refine_border_px;
                    let (c, s) = (theta.to_radians().cos(), theta.to_radians().sin());
                    let inside =
                        |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x <= dims.0 as f64 - 1.0 && y <= dims.1 as f64 - 1.0;
                    let inner: Vec<(u32, u32)> = all
                        .iter()
                        .copied()
                        .filter(|&(x, y)| {
                            let (x, y) = (x as f64, y as f64);
                            x >= m
                                && y >= m
                                && x <= dims.0 as f64 - 1.0 - m
                                && y <= dims.1 as f64 - 1.0 - m
                                && inside(x + m * c, y + m * s)
                                && inside(x - m * c, y - m * s)
                        })
                        .collect();
                    let pts = if inner.len() >= MIN_REFINE_PIXELS { &inner } else { &all };
                    refine_line(pts, theta, self.cfg.refine_max_deg).unwrap_or((theta, rho))
                } else {
                    (theta, rho)
                };
                lines.push(DetectedLine {
                    theta_deg,
                    rho_px,
                    score: score as f64,
                    supporting_component_ids: ids.into_iter().collect(),
                    support_pixels: support.len(),
                });
            }
            peaks.push(PeakRecord {
                theta_deg: theta,
                rho_px: rho,
                score: score as f64,
                support,
                accepted,
            });
        }
        Ok(LineDetection {
            main_orientation_deg: main,
            lines,
            peaks,
        })
    }
}

const MIN_REFINE_PIXELS: usize = 20;

/// Half-width of the strip of vegetation examined around a line when
/// correcting rows cut by the image border.
const CLIP_BAND_PX: f64 = 28.0;
const CLIP_SEGMENT_PX: f64 = 16.0;
const CLIP_MIN_SEGMENT_PIXELS: usize = 12;
/// A line is corrected when at least this share of its segments has a side
/// cut by the border.
const CLIP_MIN_SHARE: f64 = 0.2;

impl LineDetector {
    /// Re-estimates lines whose row band is cut by the image border.
    ///
    /// Thinning a clipped band centres the skeleton on its visible part, so
    /// such rows come out shifted and tilted towards the image interior. The
    /// vegetation strip around every line is cut into segments along the
    /// line; segments with both edges inside the image give the typical
    /// edge offset `h` of a row, and a clipped segment places the row centre
    /// at `h` beyond its visible edge. A Theil-Sen fit through the segment
    /// centres replaces the line when it stays within `refine_max_deg`.
    pub fn correct_clipped(&self, detection: &mut LineDetection, vegetation: &BinaryMask) {
        if !self.cfg.refine || detection.lines.is_empty() {
            return;
        }
        let dims = vegetation.dims();
        let points = vegetation.points();
        let profiles: Vec<Vec<Segment>> = detection
            .lines
            .iter()
            .map(|l| segment_profile(l, &points, dims))
            .collect();
        let mut edges: Vec<f64> = profiles
            .iter()
            .flatten()
            .filter(|s| s.count >= CLIP_MIN_SEGMENT_PIXELS && s.inside(CLIP_BAND_PX, dims) == (true, true))
            .flat_map(|s| [s.max_d, -s.min_d])
            .collect();
        if edges.len() < 16 {
            return;
        }
        let h = median(&mut edges);
        for (line, profile) in detection.lines.iter_mut().zip(&profiles) {
            let sides: Vec<(bool, bool)> = profile.iter().map(|s| s.inside(h + 2.0, dims)).collect();
            let clipped = sides.iter().filter(|&&(a, b)| !(a && b)).count();
            if (clipped as f64) < CLIP_MIN_SHARE * profile.len() as f64 {
                continue;
            }
            let centres: Vec<(f64, f64)> = profile
                .iter()
                .zip(&sides)
                .filter(|(s, _)| s.count >= CLIP_MIN_SEGMENT_PIXELS)
                .filter_map(|(s, &side)| match side {
                    (true, true) => Some((s.t, 0.5 * (s.min_d + s.max_d))),
                    (true, false) => Some((s.t, s.min_d + h)),
                    (false, true) => Some((s.t, s.max_d - h)),
                    (false, false) => None,
                })
                .collect();
            if centres.len() < 4 {
                continue;
            }
            let (a, b) = theil_sen(&centres);
            let phi = b.atan();
            if phi.to_degrees().abs() > self.cfg.refine_max_deg {
                continue;
            }
            let theta = line.theta_deg - phi.to_degrees();
            let rho = (line.rho_px + a) * phi.cos();
            (line.theta_deg, line.rho_px) = if theta > 90.0 {
                (theta - 180.0, -rho)
            } else if theta <= -90.0 {
                (theta + 180.0, -rho)
            } else {
                (theta, rho)
            };
        }
    }
}

/// Vegetation extent across a line over one stretch of its length, in the
/// line frame: `t` along the direction `(-sin, cos)`, `d` along the normal.
#[derive(Debug, Clone, Copy)]
struct Segment {
    /// Centre point of the stretch on the line.
    centre: (f64, f64),
    normal: (f64, f64),
    t: f64,
    min_d: f64,
    max_d: f64,
    count: usize,
}

impl Segment {
    /// Whether the points `off` to either side of the centre, along
    /// `-normal` and `+normal`, lie inside the image.
    fn inside(&self, off: f64, (w, h): (usize, usize)) -> (bool, bool) {
        let at = |k: f64| {
            let x = self.centre.0 + k * self.normal.0;
            let y = self.centre.1 + k * self.normal.1;
            x >= 0.0 && y >= 0.0 && x <= w as f64 - 1.0 && y <= h as f64 - 1.0
        };
        (at(-off), at(off))
    }
}

fn segment_profile(line: &DetectedLine, points: &[(u32, u32)], (w, h): (usize, usize)) -> Vec<Segment> {
    let th = line.theta_deg.to_radians();
    let n = (th.cos(), th.sin());
    let u = (-n.1, n.0);
    let Some((t0, t1)) = chord_span(n, u, line.rho_px, w as f64 - 1.0, h as f64 - 1.0) else {
        return Vec::new();
    };
    let k = (((t1 - t0) / CLIP_SEGMENT_PX).floor() as usize).max(1);
    let len = (t1 - t0) / k as f64;
    let mut segs: Vec<Segment> = (0..k)
        .map(|i| {
            let t = t0 + (i as f64 + 0.5) * len;
            Segment {
                centre: (line.rho_px * n.0 + t * u.0, line.rho_px * n.1 + t * u.1),
                normal: n,
                t,
                min_d: f64::INFINITY,
                max_d: f64::NEG_INFINITY,
                count: 0,
            }
        })
        .collect();
    for &(x, y) in points {
        let (x, y) = (x as f64, y as f64);
        let d = x * n.0 + y * n.1 - line.rho_px;
        if d.abs() > CLIP_BAND_PX {
            continue;
        }
        let t = x * u.0 + y * u.1;
        if t < t0 || t >= t1 {
            continue;
        }
        let s = &mut segs[(((t - t0) / len) as usize).min(k - 1)];
        s.min_d = s.min_d.min(d);
        s.max_d = s.max_d.max(d);
        s.count += 1;
    }
    segs
}

/// Range of `t` over which `rho n + t u` lies in `[0, xmax] x [0, ymax]`.
fn chord_span(n: (f64, f64), u: (f64, f64), rho: f64, xmax: f64, ymax: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, v, max) in [(rho * n.0, u.0, xmax), (rho * n.1, u.1, ymax)] {
        if v.abs() < 1e-12 {
            if p < 0.0 || p > max {
                return None;
            }
            continue;
        }
        let (a, b) = ((0.0 - p) / v, (max - p) / v);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    (hi > lo).then_some((lo, hi))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Theil-Sen fit `d = a + b t`: median pairwise slope, then median intercept.
fn theil_sen(pts: &[(f64, f64)]) -> (f64, f64) {
    let mut slopes = Vec::with_capacity(pts.len() * (pts.len() - 1) / 2);
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            if (q.0 - p.0).abs() > 1e-9 {
                slopes.push((q.1 - p.1) / (q.0 - p.0));
            }
        }
    }
    let b = if slopes.is_empty() { 0.0 } else { median(&mut slopes) };
    let mut icepts: Vec<f64> = pts.iter().map(|p| p.1 - b * p.0).collect();
    (median(&mut icepts), b)
}

/// Total-least-squares line through `pts` as `(theta, rho)`, with theta on
/// the same branch as `near_theta`; `None` when the fit strays further than
/// `max_deg` from it.
fn refine_line(pts: &[(u32, u32)], near_theta: f64, max_deg: f64) -> Option<(f64, f64)> {
    let direction = component_orientation(pts).ok()?;
    let mut theta = normal_from_direction(direction);
    if axis_distance_deg(theta, near_theta) > max_deg {
        return None;
    }
    // Pick the representation (theta or theta - 180) nearest the peak.
    while theta - near_theta > 90.0 {
        theta -= 180.0;
    }
    while near_theta - theta > 90.0 {
        theta += 180.0;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let t = theta.to_radians();
    let rho = sx / n * t.cos() + sy / n * t.sin();
    // Back into the accumulator's (-90, 90] range.
    Some(if theta > 90.0 {
        (theta - 180.0, -rho)
    } else if theta <= -90.0 {
        (theta + 180.0, -rho)
    } else {
        (theta, rho)
    })
}

/// Largest `counts / denom` over bins with a non-zero denominator, and its
/// flat index. Counts never exceed the all-foreground counts, so the ratio
/// stays in `[0, 1]`.
fn normalized_argmax(counts: &[f32], denom: &[f32]) -> (f32, usize) {
    let mut best = (0.0f32, 0usize);
    for (k, (&h, &o)) in counts.iter().zip(denom).enumerate() {
        if h > 0.0 && o > 0.0 {
            let v = h / o;
            if v > best.0 {
                best = (v, k);
            }
        }
    }
    best
}

/// Runs the full extraction loop once, without caching.
pub fn detect_crop_lines(
    sk: &Skeleton,
    cfg: &HoughConfig,
    image_dims: (usize, usize),
) -> Result<Vec<DetectedLine>, RowDetectError> {
    debug_assert_eq!(image_dims, (sk.width, sk.height));
    Ok(LineDetector::new(*cfg)?.detect(sk)?.lines)
}

/// Pixels of the line inside a `width` x `height` image, one per step along
/// its major axis.
pub fn rasterize_line(theta_deg: f64, rho: f64, width: usize, height: usize) -> Vec<(u32, u32)> {
    let t = theta_deg.to_radians();
    let (c, s) = (t.cos(), t.sin());
    let mut out = Vec::new();
    if s.abs() >= c.abs() {
        for x in 0..width {
            let y = ((rho - x as f64 * c) / s).round();
            if y >= 0.0 && (y as usize) < height {
                out.push((x as u32, y as u32));
            }
        }
    } else {
        for y in 0..height {
            let x = ((rho - y as f64 * s) / c).round();
            if x >= 0.0 && (x as usize) < width {
                out.push((x as u32, y as u32));
            }
        }
    }
    out
}

/// End points of the part of the line inside `[0, width-1] x [0, height-1]`,
/// ordered along the line direction `(-sin, cos)`.
pub fn line_chord(theta_deg: f64, rho: f64, width: usize, height: usize) -> Option<((f64, f64), (f64, f64))> {
    let t = theta_deg.to_radians();
    let (c, s) = (t.cos(), t.sin());
    let (px, py) = (rho * c, rho * s);
    let (dx, dy) = (-s, c);
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, d, hi) in [(px, dx, width as f64 - 1.0), (py, dy, height as f64 - 1.0)] {
        if d.abs() < 1e-12 {
            if p < 0.0 || p > hi {
                return None;
            }
        } else {
            let (a, b) = (-p / d, (hi - p) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t1 >= t0).then(|| ((px + t0 * dx, py + t0 * dy), (px + t1 * dx, py + t1 * dy)))
}

/// `theta_deg,rho_px,score` rows with a header.
pub fn lines_to_csv(lines: &[DetectedLine]) -> String {
    let mut out = String::from("theta_deg,rho_px,score\n");
    for l in lines {
        let _ = writeln!(out, "{},{},{}", l.theta_deg, l.rho_px, l.score);
    }
    out
}

#[derive(Deserialize)]
struct LineRow {
    theta_deg: f64,
    rho_px: f64,
    score: f64,
}

/// Inverse of [`lines_to_csv`]; support information is not stored.
pub fn lines_from_csv(text: &str) -> Result<Vec<DetectedLine>, RowDetectError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize::<LineRow>()
        .map(|row| {
            let row = row.map_err(|e| RowDetectError::MalformedCsv(e.to_string()))?;
            if !(row.theta_deg.is_finite() && row.rho_px.is_finite()) {
                return Err(RowDetectError::MalformedCsv("non-finite line parameter".into()));
            }
            Ok(DetectedLine {
                score: row.score,
                ..DetectedLine::from_params(row.theta_deg, row.rho_px)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{BinaryMask, Skeleton};

    fn small_cfg() -> HoughConfig {
        HoughConfig {
            theta_res_deg: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn theil_sen_ignores_one_outlier() {
        let mut pts: Vec<(f64, f64)> = (0..9).map(|t| (t as f64, 1.0 + 0.5 * t as f64)).collect();
        pts[4].1 = 40.0;
        assert_eq!(theil_sen(&pts), (1.0, 0.5));
    }

    #[test]
    fn chord_span_clips_to_image() {
        assert_eq!(chord_span((1.0, 0.0), (0.0, 1.0), 5.0, 9.0, 19.0), Some((0.0, 19.0)));
        assert_eq!(chord_span((1.0, 0.0), (0.0, 1.0), 12.0, 9.0, 19.0), None);
    }

    #[test]
    fn clipped_row_is_recentred() {
        // Two full bands and a third whose centre runs 7 to 4 px above the
        // bottom edge, so only its upper half is visible.
        let centre = |x: usize| 292.0 + 0.01 * x as f64;
        let mask = BinaryMask::from_fn(400, 300, |x, y| {
            let y = y as f64;
            (y - 60.0).abs() <= 8.0 || (y - 160.0).abs() <= 8.0 || (y - centre(x)).abs() <= 8.0
        });
        let lines = [(90.0, 60.0), (90.0, 160.0), (90.0, 293.0)];
        let mut det = LineDetection {
            main_orientation_deg: 0.0,
            lines: lines.iter().map(|&(t, r)| DetectedLine::from_params(t, r)).collect(),
            peaks: Vec::new(),
        };
        LineDetector::new(HoughConfig::default())
            .unwrap()
            .correct_clipped(&mut det, &mask);
        assert_eq!(det.lines[0], DetectedLine::from_params(90.0, 60.0));
        assert_eq!(det.lines[1], DetectedLine::from_params(90.0, 160.0));
        let l = &det.lines[2];
        assert!(l.distance(0.0, centre(0)) < 0.75, "{l:?}");
        assert!(l.distance(399.0, centre(399)) < 0.75, "{l:?}");
    }

    #[test]
    fn theta_grid_hits_zero_and_ninety() {
        let acc = HoughAccumulator::zeros(&HoughConfig::default(), (10, 10));
        assert_eq!(acc.theta_bins(), 1800);
        assert_eq!(acc.theta_deg(0), -89.9);
        assert_eq!(acc.theta_deg(899), 0.0);
        assert_eq!(acc.theta_deg(1799), 90.0);
        assert_eq!(acc.theta_index(0.0), 899);
        assert_eq!(acc.theta_index(-90.0), 1799);
    }

    #[test]
    fn empty_points_give_zero_accumulator() {
        let acc = hough_transform(&[], &small_cfg(), (20, 20));
        assert!(acc.votes().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_point_votes_once_per_column() {
        let acc = hough_transform(&[(3, 7)], &HoughConfig::default(), (20, 20));
        assert_eq!(acc.votes().iter().sum::<f32>(), 1800.0);
        for i in 0..acc.theta_bins() {
            let col = &acc.votes()[i * acc.rho_bins()..(i + 1) * acc.rho_bins()];
            assert_eq!(col.iter().sum::<f32>(), 1.0);
        }
    }

    #[test]
    fn vertical_line_peaks_at_zero_theta() {
        let pts: Vec<_> = (0..50).map(|y| (100, y * 2)).collect();
        let acc = hough_transform(&pts, &HoughConfig::default(), (200, 120));
        // Neighbouring theta columns also collect all 50 votes; the vertical
        // bin is one of the tied maxima.
        let (v, _, _) = acc.argmax();
        assert_eq!(v, 50.0);
        assert_eq!(acc.at(0.0, 100.0), 50.0);
    }

    #[test]
    fn ones_of_small_image() {
        let ones = hough_ones((10, 10), &HoughConfig::default());
        assert_eq!(ones.at(0.0, 5.0), 10.0);
        assert_eq!(ones.at(90.0, 5.0), 10.0);
        // Line identity: (theta, rho) and (theta - 180, -rho) are the same line,
        // so the bins at theta=90 and the mirrored ones agree.
        let diag = ((9.0f64).powi(2) * 2.0).sqrt();
        assert_eq!(ones.at(45.0, -diag - 3.0), 0.0);
        assert_eq!(ones.votes().iter().sum::<f32>(), 100.0 * 1800.0);
    }

    #[test]
    fn normalize_identity_and_mismatch() {
        let cfg = small_cfg();
        let ones = hough_ones((12, 8), &cfg);
        let n = normalize(&ones, &ones).unwrap();
        for (a, b) in n.votes().iter().zip(ones.votes()) {
            assert_eq!(*a, if *b > 0.0 { 1.0 } else { 0.0 });
        }
        let other = hough_ones((8, 8), &cfg);
        assert_eq!(normalize(&ones, &other), Err(RowDetectError::DimensionMismatch));
    }

    #[test]
    fn normalize_half_line() {
        let cfg = HoughConfig::default();
        let dims = (100, 60);
        let pts: Vec<_> = (0..30).map(|y| (40, y)).collect();
        let h = hough_transform(&pts, &cfg, dims);
        let n = normalize(&h, &hough_ones(dims, &cfg)).unwrap();
        assert!((n.at(0.0, 40.0) - 0.5).abs() < 1e-6);
        let full: Vec<_> = (0..60).map(|y| (40, y)).collect();
        let n = normalize(&hough_transform(&full, &cfg, dims), &hough_ones(dims, &cfg)).unwrap();
        assert_eq!(n.at(0.0, 40.0), 1.0);
    }

    fn skeleton_of_segments(dims: (usize, usize), segs: &[Vec<(u32, u32)>]) -> Skeleton {
        let mut m = BinaryMask::new(dims.0, dims.1);
        for s in segs {
            for &(x, y) in s {
                m.set(x as usize, y as usize, true);
            }
        }
        Skeleton::from_mask(&m)
    }

    #[test]
    fn main_orientation_weighted_mode() {
        let dims = (200, 200);
        let horiz: Vec<Vec<(u32, u32)>> = (0..3).map(|k| (10..150).map(|x| (x, 20 + 40 * k)).collect()).collect();
        let mut segs = horiz.clone();
        segs.push((0..20).map(|i| (160 + i, 150 + i)).collect());
        let sk = skeleton_of_segments(dims, &segs);
        assert_eq!(main_orientation(&sk).unwrap(), 0.0);
        let empty = Skeleton {
            width: 10,
            height: 10,
            components: vec![],
        };
        assert_eq!(main_orientation(&empty), Err(RowDetectError::EmptySkeleton));
    }

    #[test]
    fn main_orientation_all_thirty() {
        let dims = (300, 300);
        let mut segs = Vec::new();
        for k in 0..5 {
            let pts = rasterize_line(normal_from_direction(30.0), 20.0 + 40.0 * k as f64, dims.0, dims.1);
            segs.push(pts.into_iter().filter(|&(x, _)| x < 150).collect());
        }
        let sk = skeleton_of_segments(dims, &segs);
        assert_eq!(main_orientation(&sk).unwrap(), 30.0);
    }

    #[test]
    fn vertical_wraps_to_ninety() {
        assert_eq!(orientation_bin(90.0), 179);
        assert_eq!(orientation_bin(-89.7), 179);
        assert_eq!(orientation_bin(-89.4), 0);
    }

    #[test]
    fn detects_single_row() {
        let dims = (200, 200);
        let row: Vec<(u32, u32)> = (0..200).map(|x| (x, 100)).collect();
        let sk = skeleton_of_segments(dims, &[row]);
        let lines = detect_crop_lines(&sk, &HoughConfig::default(), dims).unwrap();
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert!(axis_distance_deg(l.theta_deg, 90.0) <= 0.2);
        assert!((l.distance(0.0, 100.0)).abs() <= 1.0 && (l.distance(199.0, 100.0)).abs() <= 1.0);
        assert_eq!(l.score, 1.0);
        assert_eq!(l.support_pixels, 200);
    }

    #[test]
    fn off_angle_chain_is_rejected() {
        let dims = (300, 300);
        let mut segs: Vec<Vec<(u32, u32)>> = (0..3).map(|k| (0..300).map(|x| (x, 50 + 100 * k)).collect()).collect();
        // A dense diagonal chain at 45 degrees to the rows.
        segs.push(
            (0..120)
                .map(|i| (150 + i, 100 + i / 2 + i / 2))
                .filter(|&(x, y)| x < 300 && y < 300)
                .collect(),
        );
        let sk = skeleton_of_segments(dims, &segs);
        let det = LineDetector::new(HoughConfig::default()).unwrap().detect(&sk).unwrap();
        assert_eq!(det.main_orientation_deg, 0.0);
        assert_eq!(det.lines.len(), 3);
        assert!(det.peaks.iter().any(|p| !p.accepted));
        for l in &det.lines {
            assert!(axis_distance_deg(l.theta_deg, 90.0) <= 0.2);
        }
    }

    #[test]
    fn empty_skeleton_is_an_error() {
        let sk = Skeleton {
            width: 10,
            height: 10,
            components: vec![],
        };
        assert_eq!(
            detect_crop_lines(&sk, &HoughConfig::default(), (10, 10)),
            Err(RowDetectError::EmptySkeleton)
        );
    }

    #[test]
    fn sparse_skeleton_yields_no_lines() {
        let dims = (400, 400);
        let sk = skeleton_of_segments(dims, &[vec![(200, 200), (201, 201), (202, 202)]]);
        let lines = detect_crop_lines(&sk, &HoughConfig::default(), dims).unwrap();
        assert!(lines.is_empty());
    }

    #[test]
    fn rasterized_line_stays_on_line() {
        let pts = rasterize_line(30.0, 80.0, 200, 200);
        assert!(!pts.is_empty());
        let l = DetectedLine::from_params(30.0, 80.0);
        assert!(pts.iter().all(|&(x, y)| l.distance(x as f64, y as f64) <= 0.71));
        assert!(rasterize_line(0.0, -50.0, 100, 100).is_empty());
    }

    #[test]
    fn chord_end_points() {
        // Horizontal line y = 40 in a 100x50 image, directed toward -x.
        let (a, b) = line_chord(90.0, 40.0, 100, 50).unwrap();
        assert!((a.0 - 99.0).abs() < 1e-9 && (a.1 - 40.0).abs() < 1e-9);
        assert!(b.0.abs() < 1e-9 && (b.1 - 40.0).abs() < 1e-9);
        let (a, b) = line_chord(45.0, 50.0 * 2f64.sqrt(), 100, 100).unwrap();
        let l = DetectedLine::from_params(45.0, 50.0 * 2f64.sqrt());
        assert!(l.distance(a.0, a.1) < 1e-9 && l.distance(b.0, b.1) < 1e-9);
        assert!(((a.0 - b.0).hypot(a.1 - b.1) - 98.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!(line_chord(0.0, 120.0, 100, 100).is_none());
    }

    #[test]
    fn config_validation() {
        assert!(HoughConfig::default().validate().is_ok());
        let bad = HoughConfig {
            angle_gate_deg: 95.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_export() {
        let csv = lines_to_csv(&[DetectedLine::from_params(90.0, 12.0)]);
        assert_eq!(csv, "theta_deg,rho_px,score\n90,12,1\n");
        let back = lines_from_csv(&csv).unwrap();
        assert_eq!(back, vec![DetectedLine::from_params(90.0, 12.0)]);
        assert!(lines_from_csv("theta_deg,rho_px,score\nx,1,1\n").is_err());
    }
}
