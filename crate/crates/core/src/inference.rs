//! Whole-image classification by overlapping windows and superpixel votes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, Scorer};
use crate::labeler::{window_positions, WINDOW};
use crate::raster::{BinaryMask, RgbImage};
use crate::superpixel::SuperpixelMap;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("invalid inference configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Scorer(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub stride: usize,
    /// Half-width of the uncertainty band around 0.5.
    pub epsilon: f64,
    /// Superpixels whose vegetation fraction is below this are background.
    pub background_fraction: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            stride: 16,
            epsilon: 0.05,
            background_fraction: 0.1,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(1..=WINDOW).contains(&self.stride) {
            return Err(InferenceError::InvalidConfig("stride must be in [1, 64]"));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(InferenceError::InvalidConfig("epsilon must be in [0, 0.5)"));
        }
        if !(0.0..=1.0).contains(&self.background_fraction) {
            return Err(InferenceError::InvalidConfig("background_fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DotClass {
    Weed,
    Crop,
    Uncertain,
}

impl DotClass {
    pub fn from_score(p_weed: f64, epsilon: f64) -> Self {
        if p_weed > 0.5 + epsilon {
            DotClass::Weed
        } else if p_weed < 0.5 - epsilon {
            DotClass::Crop
        } else {
            DotClass::Uncertain
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DotClass::Weed => "weed",
            DotClass::Crop => "crop",
            DotClass::Uncertain => "uncertain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dot {
    pub x: usize,
    pub y: usize,
    pub p_weed: f64,
    pub class: DotClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotGrid {
    pub stride: usize,
    pub dots: Vec<Dot>,
}

impl DotGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,p_weed,class\n");
        for d in &self.dots {
            let _ = writeln!(out, "{},{},{},{}", d.x, d.y, d.p_weed, d.class.name());
        }
        out
    }
}

/// Key under which a scan window is scored.
pub fn window_key(image_id: &str, x: usize, y: usize) -> String {
    format!("{image_id}_{x}_{y}")
}

/// Scores every window on the clamped stride grid and dots its center.
pub fn scan_image(
    img: &RgbImage,
    image_id: &str,
    scorer: &dyn Scorer,
    stride: usize,
    epsilon: f64,
) -> Result<DotGrid, InferenceError> {
    if !(1..=WINDOW).contains(&stride) {
        return Err(InferenceError::InvalidConfig("stride must be in [1, 64]"));
    }
    let (w, h) = img.dims();
    let xs = window_positions(w, stride);
    let mut dots = Vec::new();
    for &y in &window_positions(h, stride) {
        for &x in &xs {
            let p = scorer.score(&window_key(image_id, x, y), &img.crop(x, y, WINDOW, WINDOW))?;
            dots.push(Dot {
                x: x + WINDOW / 2,
                y: y + WINDOW / 2,
                p_weed: p,
                class: DotClass::from_score(p, epsilon),
            });
        }
    }
    Ok(DotGrid { stride, dots })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum PixelClass {
    Background = 0,
    Crop = 1,
    Weed = 2,
}

/// Final per-pixel decision, plus the class each superpixel received before
/// non-vegetation pixels were cleared.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelClassMap {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<PixelClass>,
    pub region_classes: Vec<PixelClass>,
}

impl PixelClassMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> PixelClass {
        self.classes[y * self.width + x]
    }

    pub fn indices(&self) -> Vec<u8> {
        self.classes.iter().map(|&c| c as u8).collect()
    }

    pub fn from_indices(width: usize, height: usize, idx: &[u8]) -> Option<Self> {
        if idx.len() != width * height {
            return None;
        }
        let classes = idx
            .iter()
            .map(|&i| match i {
                0 => Some(PixelClass::Background),
                1 => Some(PixelClass::Crop),
                2 => Some(PixelClass::Weed),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            width,
            height,
            classes,
            region_classes: Vec::new(),
        })
    }
}

/// Palette for indexed class maps: background black, crop green, weed red.
pub const CLASS_PALETTE: [[u8; 3]; 3] = [[0, 0, 0], [0, 255, 0], [255, 0, 0]];

/// Majority vote per superpixel. Ties and uncertain majorities fall back to
/// line membership (`crop_regions`); sparse-vegetation regions become
/// background; pixels outside `vegetation` are always background.
pub fn vote_superpixels(
    dots: &DotGrid,
    sp: &SuperpixelMap,
    crop_regions: &BTreeSet<u32>,
    vegetation: &BinaryMask,
    background_fraction: f64,
) -> Result<PixelClassMap, InferenceError> {
    let dims = (sp.width, sp.height);
    if vegetation.dims() != dims {
        return Err(InferenceError::DimensionMismatch(dims, vegetation.dims()));
    }
    let n = sp.len();
    let mut votes = vec![[0usize; 3]; n];
    for d in &dots.dots {
        if d.x >= sp.width || d.y >= sp.height {
            return Err(InferenceError::DimensionMismatch(dims, (d.x + 1, d.y + 1)));
        }
        let slot = match d.class {
            DotClass::Weed => 0,
            DotClass::Crop => 1,
            DotClass::Uncertain => 2,
        };
        votes[sp.label(d.x, d.y) as usize][slot] += 1;
    }
    let mut veg = vec![0usize; n];
    for (&l, &v) in sp.labels.iter().zip(vegetation.bits()) {
        if v {
            veg[l as usize] += 1;
        }
    }
    let region_classes: Vec<PixelClass> = (0..n)
        .map(|r| {
            let size = sp.regions[r].pixel_count.max(1);
            if (veg[r] as f64) < background_fraction * size as f64 {
                return PixelClass::Background;
            }
            let [weed, crop, unsure] = votes[r];
            if weed > crop && weed > unsure {
                PixelClass::Weed
            } else if crop > weed && crop > unsure {
                PixelClass::Crop
            } else if crop_regions.contains(&(r as u32)) {
                PixelClass::Crop
            } else {
                PixelClass::Weed
            }
        })
        .collect();
    let classes = sp
        .labels
        .iter()
        .zip(vegetation.bits())
        .map(|(&l, &v)| {
            if v {
                region_classes[l as usize]
            } else {
                PixelClass::Background
            }
        })
        .collect();
    Ok(PixelClassMap {
        width: sp.width,
        height: sp.height,
        classes,
        region_classes,
    })
}

/// Weed pixels blended half-way toward red, crop toward green.
pub fn render_overlay(img: &RgbImage, map: &PixelClassMap) -> Result<RgbImage, InferenceError> {
    if img.dims() != (map.width, map.height) {
        return Err(InferenceError::DimensionMismatch(img.dims(), (map.width, map.height)));
    }
    let mut out = img.clone();
    let blend = |p: [u8; 3], c: [u8; 3]| -> [u8; 3] {
        let mix = |a: u8, b: u8| ((a as u16 + b as u16 + 1) / 2) as u8;
        [mix(p[0], c[0]), mix(p[1], c[1]), mix(p[2], c[2])]
    };
    for y in 0..map.height {
        for x in 0..map.width {
            let tint = match map.get(x, y) {
                PixelClass::Background => continue,
                PixelClass::Crop => CLASS_PALETTE[1],
                PixelClass::Weed => CLASS_PALETTE[2],
            };
            out.put(x, y, blend(img.get(x, y), tint));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ConstantScorer;
    use crate::superpixel::Region;

    fn grid_sp(w: usize, h: usize, cell: usize) -> SuperpixelMap {
        let cols = w.div_ceil(cell);
        let labels: Vec<u32> = (0..w * h)
            .map(|i| ((i / w / cell) * cols + (i % w) / cell) as u32)
            .collect();
        let n = *labels.iter().max().unwrap() as usize + 1;
        let mut counts = vec![0usize; n];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        let regions = counts
            .iter()
            .enumerate()
            .map(|(id, &c)| Region {
                id: id as u32,
                pixel_count: c,
                centroid: (0.0, 0.0),
                mean_lab: [0.0; 3],
            })
            .collect();
        SuperpixelMap {
            width: w,
            height: h,
            labels,
            regions,
        }
    }

    fn dots(list: &[(usize, usize, DotClass)]) -> DotGrid {
        DotGrid {
            stride: 16,
            dots: list
                .iter()
                .map(|&(x, y, class)| Dot {
                    x,
                    y,
                    p_weed: 0.5,
                    class,
                })
                .collect(),
        }
    }

    #[test]
    fn dot_classes_partition_scores() {
        assert_eq!(DotClass::from_score(0.9, 0.05), DotClass::Weed);
        assert_eq!(DotClass::from_score(0.55, 0.05), DotClass::Uncertain);
        assert_eq!(DotClass::from_score(0.45, 0.05), DotClass::Uncertain);
        assert_eq!(DotClass::from_score(0.449, 0.05), DotClass::Crop);
        assert_eq!(DotClass::from_score(0.5, 0.0), DotClass::Uncertain);
    }

    #[test]
    fn constant_scorers() {
        let img = RgbImage::filled(128, 96, [0, 0, 0]);
        let g = scan_image(&img, "a", &ConstantScorer(0.9), 32, 0.05).unwrap();
        assert!(g.dots.iter().all(|d| d.class == DotClass::Weed));
        let g = scan_image(&img, "a", &ConstantScorer(0.5), 32, 0.05).unwrap();
        assert!(g.dots.iter().all(|d| d.class == DotClass::Uncertain));
        assert_eq!(g.dots.len(), 3 * 2);
        assert_eq!((g.dots[0].x, g.dots[0].y), (32, 32));
        assert!(scan_image(&img, "a", &ConstantScorer(0.5), 65, 0.05).is_err());
    }

    #[test]
    fn clamped_grid_size() {
        let img = RgbImage::filled(640, 640, [0, 0, 0]);
        let g = scan_image(&img, "a", &ConstantScorer(0.1), 32, 0.05).unwrap();
        assert_eq!(g.dots.len(), 361);
        assert_eq!(g.dots.last().map(|d| (d.x, d.y)), Some((608, 608)));
    }

    #[test]
    fn majority_wins() {
        let sp = grid_sp(64, 32, 32);
        let veg = BinaryMask::full(64, 32);
        let g = dots(&[
            (1, 1, DotClass::Weed),
            (2, 2, DotClass::Weed),
            (3, 3, DotClass::Weed),
            (4, 4, DotClass::Crop),
            (40, 4, DotClass::Crop),
        ]);
        let m = vote_superpixels(&g, &sp, &BTreeSet::from([0]), &veg, 0.1).unwrap();
        assert_eq!(m.region_classes, vec![PixelClass::Weed, PixelClass::Crop]);
        assert_eq!(m.get(10, 10), PixelClass::Weed);
    }

    #[test]
    fn uncertain_and_ties_use_lines() {
        let sp = grid_sp(96, 32, 32);
        let veg = BinaryMask::full(96, 32);
        let g = dots(&[
            (1, 1, DotClass::Uncertain),
            (2, 1, DotClass::Uncertain),
            (3, 1, DotClass::Uncertain),
            (4, 1, DotClass::Uncertain),
            (33, 1, DotClass::Weed),
            (34, 1, DotClass::Crop),
        ]);
        let lines = BTreeSet::from([0]);
        let m = vote_superpixels(&g, &sp, &lines, &veg, 0.1).unwrap();
        // Region 0 is crossed by a line, region 1 ties, region 2 has no dots.
        assert_eq!(
            m.region_classes,
            vec![PixelClass::Crop, PixelClass::Weed, PixelClass::Weed]
        );
        let m = vote_superpixels(&g, &sp, &BTreeSet::from([1, 2]), &veg, 0.1).unwrap();
        assert_eq!(
            m.region_classes,
            vec![PixelClass::Weed, PixelClass::Crop, PixelClass::Crop]
        );
    }

    #[test]
    fn sparse_regions_are_background() {
        let sp = grid_sp(20, 10, 10);
        // 2 of 100 pixels vegetated in region 0, all of region 1.
        let veg = BinaryMask::from_fn(20, 10, |x, y| x >= 10 || (y == 0 && x < 2));
        let g = dots(&[(1, 1, DotClass::Weed), (15, 5, DotClass::Weed)]);
        let m = vote_superpixels(&g, &sp, &BTreeSet::new(), &veg, 0.1).unwrap();
        assert_eq!(m.region_classes, vec![PixelClass::Background, PixelClass::Weed]);
        assert_eq!(m.get(0, 0), PixelClass::Background);
    }

    #[test]
    fn non_vegetation_pixels_are_cleared() {
        let sp = grid_sp(20, 10, 10);
        let veg = BinaryMask::from_fn(20, 10, |x, _| x % 2 == 0);
        let g = dots(&[(1, 1, DotClass::Crop)]);
        let m = vote_superpixels(&g, &sp, &BTreeSet::new(), &veg, 0.1).unwrap();
        assert_eq!(m.get(0, 3), PixelClass::Crop);
        assert_eq!(m.get(1, 3), PixelClass::Background);
        assert_eq!(m.region_classes[0], PixelClass::Crop);
        assert!(vote_superpixels(&g, &sp, &BTreeSet::new(), &BinaryMask::new(3, 3), 0.1).is_err());
    }

    #[test]
    fn overlay_blend() {
        let img = RgbImage::filled(3, 1, [100, 51, 0]);
        let map = PixelClassMap::from_indices(3, 1, &[0, 1, 2]).unwrap();
        let out = render_overlay(&img, &map).unwrap();
        assert_eq!(out.get(0, 0), [100, 51, 0]);
        assert_eq!(out.get(1, 0), [50, 153, 0]);
        assert_eq!(out.get(2, 0), [178, 26, 0]);
        let bg = PixelClassMap::from_indices(3, 1, &[0, 0, 0]).unwrap();
        assert_eq!(render_overlay(&img, &bg).unwrap(), img);
    }

    #[test]
    fn dot_csv() {
        let g = DotGrid {
            stride: 16,
            dots: vec![Dot {
                x: 32,
                y: 40,
                p_weed: 0.25,
                class: DotClass::Crop,
            }],
        };
        assert_eq!(g.to_csv(), "x,y,p_weed,class\n32,40,0.25,crop\n");
    }
}
