//! Unsupervised training-set construction.
//!
//! Detected crop lines select the superpixels that make up the crop mask.
//! Vegetation blobs that never touch the mask are interline weeds; the
//! vegetation outside the mask that belongs to blobs touching it is
//! "potential" weed. Patches of 64x64 pixels are cut from these regions,
//! augmented, split by source window and exported as PNG files plus a JSON
//! manifest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::raster::{
    compute_exg, connected_components, segment_vegetation, BinaryMask, LabelMap, RgbImage, SegmentConfig,
};
use crate::rowdetect::{line_chord, DetectedLine};
use crate::superpixel::{superpixels_on_line, SuperpixelMap};

/// Side of every patch.
pub const WINDOW: usize = 64;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("no crop lines to build a crop mask from")]
    NoLines,
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("class {label:?} has {groups} source windows, at least 2 are needed")]
    TooFewSamples { label: PatchLabel, groups: usize },
    #[error("invalid labeling configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("output collision at {0}")]
    Collision(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    /// Step between crop windows along each line.
    pub crop_stride: usize,
    /// Grid step of the potential-weed scan.
    pub potential_stride: usize,
    /// Potential weeds are harvested when interline weed patches number
    /// fewer than this fraction of crop patches.
    pub balance_threshold: f64,
    /// Minimum vegetation fraction of a potential-weed window.
    pub min_veg_fraction: f64,
    /// Add a background-removed copy of every augmented patch.
    pub mix_backgrounds: bool,
    pub train_fraction: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            crop_stride: 32,
            potential_stride: 16,
            balance_threshold: 0.2,
            min_veg_fraction: 0.1,
            mix_backgrounds: true,
            train_fraction: 0.8,
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<(), LabelError> {
        if self.crop_stride == 0 || self.potential_stride == 0 {
            return Err(LabelError::InvalidConfig("strides must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.min_veg_fraction) || self.balance_threshold < 0.0 {
            return Err(LabelError::InvalidConfig("fractions out of range"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(LabelError::InvalidConfig("train_fraction must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Union of the superpixels crossed by the detected lines.
#[derive(Debug, Clone, PartialEq)]
pub struct CropMask {
    pub mask: BinaryMask,
    pub region_ids: BTreeSet<u32>,
}

pub fn build_crop_mask(sp: &SuperpixelMap, lines: &[DetectedLine]) -> Result<CropMask, LabelError> {
    if lines.is_empty() {
        return Err(LabelError::NoLines);
    }
    let mut region_ids = BTreeSet::new();
    for l in lines {
        region_ids.extend(superpixels_on_line(sp, l));
    }
    Ok(CropMask {
        mask: sp.mask_of(&region_ids),
        region_ids,
    })
}

/// Vegetation split by its relation to the crop mask.
#[derive(Debug, Clone, PartialEq)]
pub struct WeedRegions {
    /// Blobs with no pixel inside the crop mask.
    pub interline: LabelMap,
    /// Vegetation outside the mask belonging to blobs that touch it.
    pub potential: BinaryMask,
    /// Vegetation inside the crop mask.
    pub crop_vegetation: BinaryMask,
}

impl WeedRegions {
    pub fn interline_mask(&self) -> BinaryMask {
        self.interline.mask_of(|_| true)
    }
}

pub fn detect_weed_regions(vegetation: &BinaryMask, crop: &CropMask) -> Result<WeedRegions, LabelError> {
    if vegetation.dims() != crop.mask.dims() {
        return Err(LabelError::DimensionMismatch(vegetation.dims(), crop.mask.dims()));
    }
    let blobs = connected_components(vegetation);
    let mut touches = vec![false; blobs.count() as usize + 1];
    for (&l, &m) in blobs.labels().iter().zip(crop.mask.bits()) {
        if m {
            touches[l as usize] = true;
        }
    }
    let interline_mask = blobs.mask_of(|l| !touches[l as usize]);
    let crop_vegetation = vegetation.and(&crop.mask).expect("same dims");
    let potential = vegetation
        .and_not(&crop.mask)
        .and_then(|m| m.and_not(&interline_mask))
        .expect("same dims");
    Ok(WeedRegions {
        interline: connected_components(&interline_mask),
        potential,
        crop_vegetation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchLabel {
    Crop,
    Weed,
}

impl PatchLabel {
    pub fn name(self) -> &'static str {
        match self {
            PatchLabel::Crop => "crop",
            PatchLabel::Weed => "weed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    None,
    ContrastA,
    ContrastB,
    Blur,
    Rot90,
    Rot180,
    Rot270,
}

impl Augmentation {
    pub const ALL: [Augmentation; 7] = [
        Augmentation::None,
        Augmentation::ContrastA,
        Augmentation::ContrastB,
        Augmentation::Blur,
        Augmentation::Rot90,
        Augmentation::Rot180,
        Augmentation::Rot270,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Augmentation::None => "none",
            Augmentation::ContrastA => "contrast_a",
            Augmentation::ContrastB => "contrast_b",
            Augmentation::Blur => "blur",
            Augmentation::Rot90 => "rot90",
            Augmentation::Rot180 => "rot180",
            Augmentation::Rot270 => "rot270",
        }
    }

    pub fn apply(self, img: &RgbImage) -> RgbImage {
        match self {
            Augmentation::None => img.clone(),
            Augmentation::ContrastA => gamma(img, 0.8),
            Augmentation::ContrastB => gamma(img, 1.2),
            Augmentation::Blur => gaussian_blur5(img, 1.0),
            Augmentation::Rot90 => rot90(img),
            Augmentation::Rot180 => rot90(&rot90(img)),
            Augmentation::Rot270 => rot90(&rot90(&rot90(img))),
        }
    }
}

/// Where a patch was cut: image id and window origin.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatchSource {
    pub image: String,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: RgbImage,
    pub label: PatchLabel,
    pub source: PatchSource,
    pub background_removed: bool,
    pub augmentation: Augmentation,
}

impl Patch {
    fn cut(img: &RgbImage, image_id: &str, label: PatchLabel, (x, y): (usize, usize)) -> Self {
        Self {
            pixels: img.crop(x, y, WINDOW, WINDOW),
            label,
            source: PatchSource {
                image: image_id.to_string(),
                x,
                y,
            },
            background_removed: false,
            augmentation: Augmentation::None,
        }
    }

    /// File stem suffix naming the augmentation and background state.
    pub fn variant_name(&self) -> String {
        if self.background_removed {
            format!("{}_nobg", self.augmentation.name())
        } else {
            self.augmentation.name().to_string()
        }
    }
}

/// Window origin centered on `c` and shifted inward to fit `extent`.
pub fn clamp_origin(c: f64, extent: usize) -> usize {
    let hi = extent.saturating_sub(WINDOW) as f64;
    (c - (WINDOW / 2) as f64).round().clamp(0.0, hi) as usize
}

/// Origins `0, stride, 2*stride, ...` with the last window clamped to the
/// image edge.
pub fn window_positions(extent: usize, stride: usize) -> Vec<usize> {
    if extent < WINDOW || stride == 0 {
        return Vec::new();
    }
    let last = extent - WINDOW;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// One window per interline blob, centered on its centroid; blobs whose
/// bounding box exceeds the window are tiled instead.
pub fn extract_weed_patches(img: &RgbImage, image_id: &str, regions: &WeedRegions) -> Vec<Patch> {
    let (w, h) = img.dims();
    if w < WINDOW || h < WINDOW {
        return Vec::new();
    }
    let mut origins = BTreeSet::new();
    for c in regions.interline.components() {
        let (bw, bh) = (c.bbox_width(), c.bbox_height());
        if bw <= WINDOW && bh <= WINDOW {
            let (cx, cy) = c.centroid();
            origins.insert((clamp_origin(cy, h), clamp_origin(cx, w)));
            continue;
        }
        let tiles = |lo: usize, len: usize, extent: usize| -> Vec<usize> {
            let n = len.div_ceil(WINDOW);
            let mid = lo as f64 + (len as f64 - 1.0) / 2.0;
            let start = mid - (n * WINDOW) as f64 / 2.0 + (WINDOW / 2) as f64;
            (0..n)
                .map(|k| clamp_origin(start + (k * WINDOW) as f64, extent))
                .collect()
        };
        for y in tiles(c.min_y, bh, h) {
            for x in tiles(c.min_x, bw, w) {
                origins.insert((y, x));
            }
        }
    }
    origins
        .into_iter()
        .map(|(y, x)| Patch::cut(img, image_id, PatchLabel::Weed, (x, y)))
        .collect()
}

/// Windows slid along each line, kept as crop when they overlap the mask,
/// hold no interline weed and hold no more potential weed than masked
/// vegetation.
pub fn extract_crop_patches(
    img: &RgbImage,
    image_id: &str,
    crop: &CropMask,
    regions: &WeedRegions,
    lines: &[DetectedLine],
    stride: usize,
) -> Vec<Patch> {
    let (w, h) = img.dims();
    if w < WINDOW || h < WINDOW || stride == 0 {
        return Vec::new();
    }
    let interline = regions.interline_mask();
    let mut origins = BTreeSet::new();
    for l in lines {
        let Some((a, b)) = line_chord(l.theta_deg, l.rho_px, w, h) else {
            continue;
        };
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let (dx, dy) = if len > 0.0 {
            ((b.0 - a.0) / len, (b.1 - a.1) / len)
        } else {
            (0.0, 0.0)
        };
        let steps = (len / stride as f64).floor() as usize;
        for k in 0..=steps {
            let t = (k * stride) as f64;
            origins.insert((clamp_origin(a.1 + t * dy, h), clamp_origin(a.0 + t * dx, w)));
        }
    }
    origins
        .into_iter()
        .filter(|&(y, x)| {
            crop.mask.count_in(x, y, WINDOW, WINDOW) > 0
                && interline.count_in(x, y, WINDOW, WINDOW) == 0
                && regions.potential.count_in(x, y, WINDOW, WINDOW)
                    <= regions.crop_vegetation.count_in(x, y, WINDOW, WINDOW)
        })
        .map(|(y, x)| Patch::cut(img, image_id, PatchLabel::Crop, (x, y)))
        .collect()
}

/// Grid windows whose vegetation is entirely potential weed and covers at
/// least `min_veg_fraction` of the window.
pub fn extract_potential_weed_patches(
    img: &RgbImage,
    image_id: &str,
    regions: &WeedRegions,
    stride: usize,
    min_veg_fraction: f64,
) -> Vec<Patch> {
    let (w, h) = img.dims();
    let interline = regions.interline_mask();
    let need = (min_veg_fraction * (WINDOW * WINDOW) as f64).ceil() as usize;
    let mut out = Vec::new();
    for &y in &window_positions(h, stride) {
        for &x in &window_positions(w, stride) {
            let potential = regions.potential.count_in(x, y, WINDOW, WINDOW);
            if potential > 0
                && potential >= need
                && regions.crop_vegetation.count_in(x, y, WINDOW, WINDOW) == 0
                && interline.count_in(x, y, WINDOW, WINDOW) == 0
            {
                out.push(Patch::cut(img, image_id, PatchLabel::Weed, (x, y)));
            }
        }
    }
    out
}

/// Per-patch ExG + Otsu; background pixels become black. Patches whose ExG
/// is constant come back untouched with the flag unset.
pub fn remove_background(p: &Patch) -> Patch {
    let exg = compute_exg(&p.pixels);
    let first = exg.data()[0];
    if exg.data().iter().all(|&v| v == first) {
        return p.clone();
    }
    let mut out = p.clone();
    out.background_removed = true;
    let mask = match segment_vegetation(&p.pixels, &SegmentConfig::default()) {
        Ok(seg) => seg.mask,
        Err(_) => BinaryMask::new(p.pixels.width(), p.pixels.height()),
    };
    let (w, h) = p.pixels.dims();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                out.pixels.put(x, y, [0, 0, 0]);
            }
        }
    }
    out
}

/// The original plus six variants per patch, and a background-removed copy
/// of all seven when `mix_backgrounds` is set.
pub fn augment(patches: &[Patch], mix_backgrounds: bool) -> Vec<Patch> {
    let per = if mix_backgrounds { 14 } else { 7 };
    let mut out = Vec::with_capacity(patches.len() * per);
    for p in patches {
        let variants: Vec<Patch> = Augmentation::ALL
            .iter()
            .map(|&a| Patch {
                pixels: a.apply(&p.pixels),
                augmentation: a,
                ..p.clone()
            })
            .collect();
        if mix_backgrounds {
            let stripped: Vec<Patch> = variants.iter().map(remove_background).collect();
            out.extend(variants);
            out.extend(stripped);
        } else {
            out.extend(variants);
        }
    }
    out
}

fn gamma(img: &RgbImage, g: f64) -> RgbImage {
    let lut: Vec<u8> = (0..256)
        .map(|v| (255.0 * (v as f64 / 255.0).powf(g)).round() as u8)
        .collect();
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    RgbImage::new(img.width(), img.height(), data).expect("same dims")
}

/// 5x5 Gaussian blur with replicated borders.
fn gaussian_blur5(img: &RgbImage, sigma: f64) -> RgbImage {
    let k: Vec<f64> = (-2..=2)
        .map(|i: i32| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / norm).collect();
    let (w, h) = img.dims();
    let src = img.data();
    let mut tmp = vec![0.0f64; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sx = (x as i64 + i as i64 - 2).clamp(0, w as i64 - 1) as usize;
                    acc += kv * src[(y * w + sx) * 3 + c] as f64;
                }
                tmp[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    let mut data = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sy = (y as i64 + i as i64 - 2).clamp(0, h as i64 - 1) as usize;
                    acc += kv * tmp[(sy * w + x) * 3 + c];
                }
                data[(y * w + x) * 3 + c] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RgbImage::new(w, h, data).expect("same dims")
}

/// Quarter turn clockwise as displayed (x right, y down).
fn rot90(img: &RgbImage) -> RgbImage {
    let (w, h) = img.dims();
    let mut out = RgbImage::filled(h, w, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.put(h - 1 - y, x, img.get(x, y));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: PatchLabel,
    pub split: Split,
    pub source: PatchSource,
    pub aug: Augmentation,
    pub background_removed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_crop: usize,
    pub train_weed: usize,
    pub val_crop: usize,
    pub val_weed: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split, label: PatchLabel) -> usize {
        match (split, label) {
            (Split::Train, PatchLabel::Crop) => self.train_crop,
            (Split::Train, PatchLabel::Weed) => self.train_weed,
            (Split::Val, PatchLabel::Crop) => self.val_crop,
            (Split::Val, PatchLabel::Weed) => self.val_weed,
        }
    }

    fn bump(&mut self, split: Split, label: PatchLabel) {
        *match (split, label) {
            (Split::Train, PatchLabel::Crop) => &mut self.train_crop,
            (Split::Train, PatchLabel::Weed) => &mut self.train_weed,
            (Split::Val, PatchLabel::Crop) => &mut self.val_crop,
            (Split::Val, PatchLabel::Weed) => &mut self.val_weed,
        } += 1;
    }
}

/// Dataset description; `entries[i]` describes the i-th patch it was built
/// from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub window: usize,
    pub stride: usize,
    pub counts: SplitCounts,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn empty(seed: u64, stride: usize) -> Self {
        Self {
            seed,
            window: WINDOW,
            stride,
            counts: SplitCounts::default(),
            entries: Vec::new(),
        }
    }
}

/// Relative output path of a patch.
pub fn patch_path(p: &Patch, split: Split) -> String {
    format!(
        "{}/{}/{}_{}_{}_{}.png",
        split.name(),
        p.label.name(),
        p.source.image,
        p.source.x,
        p.source.y,
        p.variant_name()
    )
}

/// Random per-class split of source windows; every variant of one source
/// window shares its split.
pub fn split_dataset(
    patches: &[Patch],
    fraction: f64,
    seed: u64,
    stride: usize,
) -> Result<DatasetManifest, LabelError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LabelError::InvalidConfig("train fraction must be in (0, 1)"));
    }
    let mut groups: BTreeMap<PatchLabel, BTreeSet<&PatchSource>> = BTreeMap::new();
    for p in patches {
        groups.entry(p.label).or_default().insert(&p.source);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: HashSet<(PatchLabel, &PatchSource)> = HashSet::new();
    for label in [PatchLabel::Crop, PatchLabel::Weed] {
        let sources = groups.remove(&label).unwrap_or_default();
        if sources.len() < 2 {
            return Err(LabelError::TooFewSamples {
                label,
                groups: sources.len(),
            });
        }
        let mut order: Vec<&PatchSource> = sources.into_iter().collect();
        order.shuffle(&mut rng);
        let n_train = ((fraction * order.len() as f64).round() as usize).clamp(1, order.len() - 1);
        assignment.extend(order[..n_train].iter().map(|&s| (label, s)));
    }
    let mut counts = SplitCounts::default();
    let entries = patches
        .iter()
        .map(|p| {
            let split = if assignment.contains(&(p.label, &p.source)) {
                Split::Train
            } else {
                Split::Val
            };
            counts.bump(split, p.label);
            ManifestEntry {
                path: patch_path(p, split),
                label: p.label,
                split,
                source: p.source.clone(),
                aug: p.augmentation,
                background_removed: p.background_removed,
            }
        })
        .collect();
    Ok(DatasetManifest {
        seed,
        window: WINDOW,
        stride,
        counts,
        entries,
    })
}

/// Writes every patch and the manifest under `dir`. Nothing is written when
/// any target already exists or two entries share a path.
pub fn export_dataset(manifest: &DatasetManifest, patches: &[Patch], dir: &Path) -> Result<PathBuf, LabelError> {
    if manifest.entries.len() != patches.len() {
        return Err(LabelError::Manifest(format!(
            "{} entries for {} patches",
            manifest.entries.len(),
            patches.len()
        )));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut seen = HashSet::new();
    if manifest_path.exists() {
        return Err(LabelError::Collision(manifest_path.display().to_string()));
    }
    for e in &manifest.entries {
        if !seen.insert(e.path.as_str()) || dir.join(&e.path).exists() {
            return Err(LabelError::Collision(e.path.clone()));
        }
    }
    for (e, p) in manifest.entries.iter().zip(patches) {
        let path = dir.join(&e.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|err| IoError::file(parent, err))?;
        }
        io::write_rgb_png(&path, &p.pixels)?;
    }
    std::fs::create_dir_all(dir).map_err(|err| IoError::file(dir, err))?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| LabelError::Manifest(e.to_string()))?;
    io::write_text(&manifest_path, &json)?;
    Ok(manifest_path)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, LabelError> {
    let text = io::read_text(&dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(|e| LabelError::Manifest(e.to_string()))
}

/// Manifest plus the patches it lists, in manifest order.
pub fn import_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<Patch>), LabelError> {
    let manifest = read_manifest(dir)?;
    let mut patches = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let pixels = io::read_rgb(&dir.join(&e.path))?;
        if pixels.dims() != (WINDOW, WINDOW) {
            return Err(LabelError::Manifest(format!("{} is not {WINDOW}x{WINDOW}", e.path)));
        }
        patches.push(Patch {
            pixels,
            label: e.label,
            source: e.source.clone(),
            background_removed: e.background_removed,
            augmentation: e.aug,
        });
    }
    Ok((manifest, patches))
}

/// Everything the labeler derives from one image.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub crop_mask: CropMask,
    pub regions: WeedRegions,
    pub crop_patches: Vec<Patch>,
    pub weed_patches: Vec<Patch>,
    pub potential_patches: Vec<Patch>,
    pub potential_harvested: bool,
}

impl LabeledImage {
    /// Crop, interline weed and potential weed patches, in that order.
    pub fn patches(&self) -> Vec<Patch> {
        let mut out = self.crop_patches.clone();
        out.extend(self.weed_patches.iter().cloned());
        out.extend(self.potential_patches.iter().cloned());
        out
    }
}

pub fn label_image(
    img: &RgbImage,
    image_id: &str,
    vegetation: &BinaryMask,
    sp: &SuperpixelMap,
    lines: &[DetectedLine],
    cfg: &LabelingConfig,
) -> Result<LabeledImage, LabelError> {
    cfg.validate()?;
    if img.dims() != vegetation.dims() || img.dims() != (sp.width, sp.height) {
        return Err(LabelError::DimensionMismatch(img.dims(), vegetation.dims()));
    }
    let crop_mask = build_crop_mask(sp, lines)?;
    let regions = detect_weed_regions(vegetation, &crop_mask)?;
    let crop_patches = extract_crop_patches(img, image_id, &crop_mask, &regions, lines, cfg.crop_stride);
    let weed_patches = extract_weed_patches(img, image_id, &regions);
    let potential_harvested = (weed_patches.len() as f64) < cfg.balance_threshold * crop_patches.len() as f64;
    let potential_patches = if potential_harvested {
        extract_potential_weed_patches(img, image_id, &regions, cfg.potential_stride, cfg.min_veg_fraction)
    } else {
        Vec::new()
    };
    Ok(LabeledImage {
        crop_mask,
        regions,
        crop_patches,
        weed_patches,
        potential_patches,
        potential_harvested,
    })
}
