//! Seeded synthetic row-crop fields with exact per-pixel ground truth.
//!
//! Rows are straight bands at a common orientation (optionally jittered per
//! row) filled with irregular crop blobs. Weeds are drawn in two flavors:
//! interline blobs kept well clear of every row, and near-row blobs that
//! straddle the edge of a row band. Soil is layered value noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{wrap_axis_deg, RgbImage};
use crate::rowdetect::normal_from_direction;
use crate::superpixel::{lab_to_srgb, srgb_to_lab};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),
    #[error("unknown preset {0:?} (expected bean_like or spinach_like)")]
    UnknownPreset(String),
}

/// Lab color distribution of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorDist {
    pub lab_mean: [f64; 3],
    /// Per-pixel standard deviation on each Lab channel.
    pub pixel_sigma: f64,
    /// Per-blob offset standard deviation on each Lab channel.
    pub blob_sigma: f64,
}

impl ColorDist {
    pub fn from_rgb(rgb: [u8; 3], pixel_sigma: f64, blob_sigma: f64) -> Self {
        Self {
            lab_mean: srgb_to_lab(rgb),
            pixel_sigma,
            blob_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub width: usize,
    pub height: usize,
    /// Direction angle of the rows.
    pub row_orientation_deg: f64,
    /// Each row's angle is drawn uniformly within this bound of the mean.
    pub row_orientation_jitter_deg: f64,
    pub row_spacing_px: f64,
    /// Each gap between neighbouring rows is drawn uniformly within this bound.
    pub row_spacing_jitter_px: f64,
    /// Rows centered on the image; `None` fills the whole image.
    pub row_count: Option<usize>,
    pub row_width_px: f64,
    /// Rows whose center line crosses less than this length of the image are
    /// not planted.
    pub min_row_chord_px: f64,
    pub plant_radius_px: f64,
    /// Distance between consecutive plant centers along a row.
    pub plant_spacing_px: f64,
    pub plant_gap_probability: f64,
    pub plant_lateral_jitter_px: f64,
    pub crop_color: ColorDist,
    pub weed_color: ColorDist,
    pub weed_radius_px: f64,
    /// Relative amplitude of the boundary lobes of weed blobs.
    pub weed_irregularity: f64,
    /// Interline weed blobs per 10^4 px^2 of image.
    pub interline_weed_density: f64,
    /// Near-row weed blobs per 10^4 px^2 of image.
    pub intra_row_weed_density: f64,
    pub near_row_weed_radius_px: f64,
    /// Minimum distance from an interline weed center to the nearest row edge.
    pub interline_clearance_px: f64,
    pub soil_rgb: [u8; 3],
    /// Amplitude of the soil value noise, in Lab L units.
    pub soil_noise: f64,
    pub seed: u64,
}

impl FieldSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.width < 256 || self.height < 256 {
            return bad("image must be at least 256x256");
        }
        if !(self.row_width_px > 0.0) || !(self.row_spacing_px > self.row_width_px) {
            return bad("row spacing must exceed row width, which must be positive");
        }
        if self.row_spacing_jitter_px < 0.0
            || self.row_spacing_jitter_px * 2.0 >= self.row_spacing_px - self.row_width_px
        {
            return bad("spacing jitter must be non-negative and keep rows apart");
        }
        if !(self.plant_radius_px > 0.0
            && self.plant_spacing_px > 0.0
            && self.weed_radius_px > 0.0
            && self.near_row_weed_radius_px > 0.0)
        {
            return bad("plant radius, plant spacing and weed radii must be positive");
        }
        if self.interline_weed_density < 0.0 || self.intra_row_weed_density < 0.0 {
            return bad("weed densities must be non-negative");
        }
        if !(0.0..1.0).contains(&self.plant_gap_probability) {
            return bad("plant_gap_probability must be in [0, 1)");
        }
        if self.row_orientation_jitter_deg < 0.0 || self.soil_noise < 0.0 {
            return bad("jitter and noise amplitudes must be non-negative");
        }
        if self.row_count == Some(0) {
            return bad("row_count must be positive when set");
        }
        Ok(())
    }

    /// Same field without the color offset between weeds and crop.
    pub fn hard_mode(mut self) -> Self {
        self.weed_color = self.crop_color;
        self
    }
}

/// Sparse bean-like field: stable spacing, plants with gaps, few interline
/// weeds and a number of weed clumps hugging the rows.
pub fn bean_like() -> FieldSpec {
    FieldSpec {
        width: 1024,
        height: 1024,
        row_orientation_deg: 8.0,
        row_orientation_jitter_deg: 0.2,
        row_spacing_px: 160.0,
        row_spacing_jitter_px: 3.0,
        row_count: None,
        row_width_px: 26.0,
        min_row_chord_px: 200.0,
        plant_radius_px: 10.0,
        plant_spacing_px: 18.0,
        plant_gap_probability: 0.12,
        plant_lateral_jitter_px: 0.5,
        crop_color: ColorDist::from_rgb([58, 128, 48], 3.0, 2.5),
        weed_color: ColorDist::from_rgb([110, 160, 45], 3.0, 2.5),
        weed_radius_px: 15.0,
        weed_irregularity: 0.25,
        interline_weed_density: 0.16,
        intra_row_weed_density: 0.02,
        near_row_weed_radius_px: 18.0,
        interline_clearance_px: 46.0,
        soil_rgb: [128, 100, 76],
        soil_noise: 6.0,
        seed: 0,
    }
}

/// Dense spinach-like field: wide full rows, irregular spacing and
/// orientation, many interline weeds.
pub fn spinach_like() -> FieldSpec {
    FieldSpec {
        width: 1024,
        height: 1024,
        row_orientation_deg: -12.0,
        row_orientation_jitter_deg: 0.8,
        row_spacing_px: 135.0,
        row_spacing_jitter_px: 14.0,
        row_count: None,
        row_width_px: 30.0,
        min_row_chord_px: 200.0,
        plant_radius_px: 12.0,
        plant_spacing_px: 11.0,
        plant_gap_probability: 0.03,
        plant_lateral_jitter_px: 2.0,
        crop_color: ColorDist::from_rgb([52, 118, 50], 3.0, 2.5),
        weed_color: ColorDist::from_rgb([90, 145, 50], 3.0, 2.5),
        weed_radius_px: 10.0,
        weed_irregularity: 0.25,
        interline_weed_density: 0.5,
        intra_row_weed_density: 0.02,
        near_row_weed_radius_px: 10.0,
        interline_clearance_px: 38.0,
        soil_rgb: [120, 96, 78],
        soil_noise: 6.0,
        seed: 0,
    }
}

pub fn preset(name: &str) -> Result<FieldSpec, SynthError> {
    match name {
        "bean_like" => Ok(bean_like()),
        "spinach_like" => Ok(spinach_like()),
        other => Err(SynthError::UnknownPreset(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum TruthClass {
    Soil = 0,
    Crop = 1,
    Weed = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthLine {
    pub theta_deg: f64,
    pub rho_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeedBlob {
    pub id: u32,
    pub centroid: (f64, f64),
    /// `(min_x, min_y, max_x, max_y)`, inclusive.
    pub bbox: (usize, usize, usize, usize),
    pub pixel_count: usize,
    pub interline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGroundTruth {
    pub width: usize,
    pub height: usize,
    #[serde(skip)]
    pub classes: Vec<TruthClass>,
    pub lines: Vec<TruthLine>,
    pub weeds: Vec<WeedBlob>,
    pub row_width_px: f64,
}

impl FieldGroundTruth {
    #[inline]
    pub fn class(&self, x: usize, y: usize) -> TruthClass {
        self.classes[y * self.width + x]
    }

    pub fn count(&self, class: TruthClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Distance from a point to the nearest truth row line.
    pub fn distance_to_rows(&self, x: f64, y: f64) -> f64 {
        self.lines
            .iter()
            .map(|l| {
                let t = l.theta_deg.to_radians();
                (x * t.cos() + y * t.sin() - l.rho_px).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Pixel counts per class (indexed by `TruthClass as usize`) inside a
    /// window clipped to the image.
    pub fn window_counts(&self, x0: usize, y0: usize, w: usize, h: usize) -> [usize; 3] {
        let mut counts = [0; 3];
        for y in y0.min(self.height)..(y0 + h).min(self.height) {
            for x in x0.min(self.width)..(x0 + w).min(self.width) {
                counts[self.class(x, y) as usize] += 1;
            }
        }
        counts
    }

    /// Share of the window's vegetation that is `class`; `None` without
    /// vegetation.
    pub fn vegetation_share(&self, x0: usize, y0: usize, w: usize, h: usize, class: TruthClass) -> Option<f64> {
        let c = self.window_counts(x0, y0, w, h);
        let veg = c[TruthClass::Crop as usize] + c[TruthClass::Weed as usize];
        (veg > 0).then(|| c[class as usize] as f64 / veg as f64)
    }
}

#[derive(Clone, Copy)]
struct Row {
    theta: f64,
    cos: f64,
    sin: f64,
    rho: f64,
}

impl Row {
    fn distance(&self, x: f64, y: f64) -> f64 {
        (x * self.cos + y * self.sin - self.rho).abs()
    }
}

/// Length of the part of a line inside `[0, w-1] x [0, h-1]`, and the two
/// parameter values bounding it along the direction `(-sin, cos)` from the
/// foot of the normal.
fn clip_line(row: &Row, w: f64, h: f64) -> Option<(f64, f64)> {
    let (px, py) = (row.rho * row.cos, row.rho * row.sin);
    let (dx, dy) = (-row.sin, row.cos);
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, d, hi) in [(px, dx, w - 1.0), (py, dy, h - 1.0)] {
        if d.abs() < 1e-12 {
            if p < 0.0 || p > hi {
                return None;
            }
        } else {
            let (a, b) = ((0.0 - p) / d, (hi - p) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t1 > t0).then_some((t0, t1))
}

struct BlobShape {
    cx: f64,
    cy: f64,
    radius: f64,
    harmonics: [(f64, f64, f64); 3],
}

impl BlobShape {
    fn random(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64, irregularity: f64) -> Self {
        let mut harmonics = [(0.0, 0.0, 0.0); 3];
        for (k, hmn) in harmonics.iter_mut().enumerate() {
            let order = (k + 2) as f64;
            let amp = irregularity * rng.random_range(0.3..1.0) / (k as f64 + 1.0);
            *hmn = (order, amp, rng.random_range(0.0..std::f64::consts::TAU));
        }
        Self {
            cx,
            cy,
            radius,
            harmonics,
        }
    }

    fn reach(&self) -> f64 {
        self.radius * (1.0 + self.harmonics.iter().map(|h| h.1).sum::<f64>())
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            return true;
        }
        let phi = dy.atan2(dx);
        let mut r = self.radius;
        for &(order, amp, phase) in &self.harmonics {
            r += self.radius * amp * (order * phi + phase).sin();
        }
        r2 <= r * r
    }
}

/// Deterministic field rendering.
pub fn generate(spec: &FieldSpec) -> Result<(RgbImage, FieldGroundTruth), SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let rows = layout_rows(spec, &mut rng);
    let half = spec.row_width_px / 2.0;

    // blob id per pixel: 0 soil, crop blobs 1..=n_crop, weeds after.
    let mut owner = vec![0u32; w * h];
    let mut class = vec![TruthClass::Soil; w * h];
    let mut blob_colors: Vec<[f64; 3]> = vec![[0.0; 3]];
    let blob_offset = |rng: &mut ChaCha8Rng, c: &ColorDist| -> [f64; 3] {
        let n = Normal::new(0.0, c.blob_sigma.max(1e-12)).expect("finite sigma");
        [
            c.lab_mean[0] + n.sample(rng),
            c.lab_mean[1] + n.sample(rng),
            c.lab_mean[2] + n.sample(rng),
        ]
    };

    let paint = |shape: &BlobShape,
                 id: u32,
                 cls: TruthClass,
                 clip: Option<&Row>,
                 owner: &mut [u32],
                 class: &mut [TruthClass]| {
        let reach = shape.reach();
        let x0 = (shape.cx - reach).floor().max(0.0) as usize;
        let y0 = (shape.cy - reach).floor().max(0.0) as usize;
        let x1 = ((shape.cx + reach).ceil() as i64).min(w as i64 - 1);
        let y1 = ((shape.cy + reach).ceil() as i64).min(h as i64 - 1);
        if x1 < 0 || y1 < 0 {
            return;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let (fx, fy) = (x as f64, y as f64);
                if clip.is_some_and(|r| r.distance(fx, fy) > half) {
                    continue;
                }
                if shape.contains(fx, fy) {
                    owner[y * w + x] = id;
                    class[y * w + x] = cls;
                }
            }
        }
    };

    for row in &rows {
        let Some((t0, t1)) = clip_line(row, w as f64, h as f64) else {
            continue;
        };
        let (px, py) = (row.rho * row.cos, row.rho * row.sin);
        let (dx, dy) = (-row.sin, row.cos);
        let mut t = t0 - spec.plant_spacing_px + rng.random_range(0.0..spec.plant_spacing_px);
        while t < t1 + spec.plant_spacing_px {
            let along = t + rng.random_range(-0.25..0.25) * spec.plant_spacing_px;
            t += spec.plant_spacing_px;
            if rng.random_bool(spec.plant_gap_probability) {
                continue;
            }
            let lateral = rng.random_range(-1.0..=1.0) * spec.plant_lateral_jitter_px;
            let cx = px + along * dx + lateral * row.cos;
            let cy = py + along * dy + lateral * row.sin;
            let radius = spec.plant_radius_px * rng.random_range(0.8..1.2);
            let shape = BlobShape::random(&mut rng, cx, cy, radius, 0.2);
            let id = blob_colors.len() as u32;
            blob_colors.push(blob_offset(&mut rng, &spec.crop_color));
            paint(&shape, id, TruthClass::Crop, Some(row), &mut owner, &mut class);
        }
    }
    let first_weed = blob_colors.len() as u32;

    let area = (w * h) as f64 / 1e4;
    let mut weed_meta: Vec<bool> = Vec::new();
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let nearest_row = |x: f64, y: f64| rows.iter().map(|r| r.distance(x, y)).fold(f64::INFINITY, f64::min);

    let n_interline = (spec.interline_weed_density * area).round() as usize;
    let mut attempts = 0;
    let mut count = 0;
    while count < n_interline && attempts < n_interline * 200 {
        attempts += 1;
        let radius = spec.weed_radius_px * rng.random_range(0.7..1.3);
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let shape = BlobShape::random(&mut rng, cx, cy, radius, spec.weed_irregularity);
        if nearest_row(cx, cy) < half + spec.interline_clearance_px.max(shape.reach() + 2.0) {
            continue;
        }
        if placed
            .iter()
            .any(|&(px, py, pr)| (px - cx).hypot(py - cy) < pr + shape.reach() + 3.0)
        {
            continue;
        }
        placed.push((cx, cy, shape.reach()));
        let id = blob_colors.len() as u32;
        blob_colors.push(blob_offset(&mut rng, &spec.weed_color));
        weed_meta.push(true);
        paint(&shape, id, TruthClass::Weed, None, &mut owner, &mut class);
        count += 1;
    }

    let n_near = (spec.intra_row_weed_density * area).round() as usize;
    if !rows.is_empty() {
        let mut count = 0;
        let mut attempts = 0;
        while count < n_near && attempts < n_near * 200 {
            attempts += 1;
            let row = rows[rng.random_range(0..rows.len())];
            let Some((t0, t1)) = clip_line(&row, w as f64, h as f64) else {
                continue;
            };
            let radius = spec.near_row_weed_radius_px * rng.random_range(0.8..1.2);
            let t = rng.random_range(t0..t1);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let offset = side * rng.random_range((half + 0.5 * radius)..(half + radius));
            let cx = row.rho * row.cos - t * row.sin + offset * row.cos;
            let cy = row.rho * row.sin + t * row.cos + offset * row.sin;
            if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                continue;
            }
            let shape = BlobShape::random(&mut rng, cx, cy, radius, spec.weed_irregularity);
            if placed
                .iter()
                .any(|&(px, py, pr)| (px - cx).hypot(py - cy) < pr + shape.reach() + 3.0)
            {
                continue;
            }
            // Clumps grow out of a plant rather than into a planting gap.
            if covered(&shape, &class, w, h, TruthClass::Crop) < MIN_NEAR_ROW_OVERLAP {
                continue;
            }
            placed.push((cx, cy, shape.reach()));
            let id = blob_colors.len() as u32;
            blob_colors.push(blob_offset(&mut rng, &spec.weed_color));
            weed_meta.push(false);
            paint(&shape, id, TruthClass::Weed, None, &mut owner, &mut class);
            count += 1;
        }
    }

    let soil_lab = srgb_to_lab(spec.soil_rgb);
    let noise = value_noise(w, h, &mut rng);
    let crop_px = Normal::new(0.0, spec.crop_color.pixel_sigma.max(1e-12)).expect("finite sigma");
    let weed_px = Normal::new(0.0, spec.weed_color.pixel_sigma.max(1e-12)).expect("finite sigma");
    let soil_px = Normal::new(0.0, 1.5).expect("finite sigma");
    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        let lab = match class[i] {
            TruthClass::Soil => {
                let n = noise[i] * spec.soil_noise;
                [
                    soil_lab[0] + n + soil_px.sample(&mut rng),
                    soil_lab[1] + 0.3 * n + 0.5 * soil_px.sample(&mut rng),
                    soil_lab[2] + 0.3 * n + 0.5 * soil_px.sample(&mut rng),
                ]
            }
            cls => {
                let base = blob_colors[owner[i] as usize];
                let n = if cls == TruthClass::Crop { &crop_px } else { &weed_px };
                [
                    base[0] + n.sample(&mut rng),
                    base[1] + n.sample(&mut rng),
                    base[2] + n.sample(&mut rng),
                ]
            }
        };
        data.extend_from_slice(&lab_to_srgb(lab));
    }
    let image = RgbImage::new(w, h, data).expect("buffer sized from dims");

    let mut weeds: Vec<WeedBlob> = weed_meta
        .iter()
        .enumerate()
        .map(|(k, &interline)| WeedBlob {
            id: first_weed + k as u32,
            centroid: (0.0, 0.0),
            bbox: (usize::MAX, usize::MAX, 0, 0),
            pixel_count: 0,
            interline,
        })
        .collect();
    for (i, &o) in owner.iter().enumerate() {
        if o >= first_weed {
            let b = &mut weeds[(o - first_weed) as usize];
            let (x, y) = (i % w, i / w);
            b.pixel_count += 1;
            b.centroid.0 += x as f64;
            b.centroid.1 += y as f64;
            b.bbox = (b.bbox.0.min(x), b.bbox.1.min(y), b.bbox.2.max(x), b.bbox.3.max(y));
        }
    }
    weeds.retain(|b| b.pixel_count > 0);
    for b in &mut weeds {
        b.centroid.0 /= b.pixel_count as f64;
        b.centroid.1 /= b.pixel_count as f64;
    }

    let lines = rows
        .iter()
        .map(|r| TruthLine {
            theta_deg: r.theta,
            rho_px: r.rho,
        })
        .collect();
    Ok((
        image,
        FieldGroundTruth {
            width: w,
            height: h,
            classes: class,
            lines,
            weeds,
            row_width_px: spec.row_width_px,
        },
    ))
}

const MIN_NEAR_ROW_OVERLAP: usize = 20;

/// Pixels of class `cls` under `shape`.
fn covered(shape: &BlobShape, class: &[TruthClass], w: usize, h: usize, cls: TruthClass) -> usize {
    let reach = shape.reach();
    let x0 = (shape.cx - reach).floor().max(0.0) as usize;
    let y0 = (shape.cy - reach).floor().max(0.0) as usize;
    let x1 = ((shape.cx + reach).ceil().max(0.0) as usize).min(w - 1);
    let y1 = ((shape.cy + reach).ceil().max(0.0) as usize).min(h - 1);
    let mut n = 0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if class[y * w + x] == cls && shape.contains(x as f64, y as f64) {
                n += 1;
            }
        }
    }
    n
}

fn layout_rows(spec: &FieldSpec, rng: &mut ChaCha8Rng) -> Vec<Row> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let theta0 = normal_from_direction(spec.row_orientation_deg);
    let (c0, s0) = (theta0.to_radians().cos(), theta0.to_radians().sin());
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let extent = (w * c0.abs() + h * s0.abs()) / 2.0;
    let count = spec
        .row_count
        .unwrap_or_else(|| (2.0 * extent / spec.row_spacing_px).ceil() as usize + 1);

    // Offsets from the image center along the mean normal.
    let mut offsets = vec![0.0];
    for _ in 1..count {
        let gap = spec.row_spacing_px + rng.random_range(-1.0..=1.0) * spec.row_spacing_jitter_px;
        offsets.push(offsets.last().copied().unwrap_or(0.0) + gap);
    }
    let mid = offsets.last().copied().unwrap_or(0.0) / 2.0;

    let mut rows = Vec::new();
    for off in offsets {
        let off = off - mid;
        let jitter = rng.random_range(-1.0..=1.0) * spec.row_orientation_jitter_deg;
        let (px, py) = (cx + off * c0, cy + off * s0);
        let raw = theta0 + jitter;
        let theta = wrap_axis_deg(raw);
        let t = theta.to_radians();
        let row = Row {
            theta,
            cos: t.cos(),
            sin: t.sin(),
            rho: px * t.cos() + py * t.sin(),
        };
        if let Some((t0, t1)) = clip_line(&row, w, h) {
            if t1 - t0 >= spec.min_row_chord_px {
                rows.push(row);
            }
        }
    }
    rows
}

/// Smooth noise in roughly `[-1, 1]`: three octaves of bilinear value noise.
fn value_noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for (cell, amp) in [(96usize, 0.6), (24, 0.3), (6, 0.1)] {
        let gw = w / cell + 2;
        let gh = h / cell + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
        for y in 0..h {
            let fy = y as f64 / cell as f64;
            let (gy, ty) = (fy as usize, fy.fract());
            for x in 0..w {
                let fx = x as f64 / cell as f64;
                let (gx, tx) = (fx as usize, fx.fract());
                let at = |i: usize, j: usize| lattice[j * gw + i];
                let top = at(gx, gy) * (1.0 - tx) + at(gx + 1, gy) * tx;
                let bottom = at(gx, gy + 1) * (1.0 - tx) + at(gx + 1, gy + 1) * tx;
                out[y * w + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    out
}
