//! Raster containers and pixel-level primitives.
//!
//! Coordinates are `(x, y)` with the origin at the top-left pixel and `y`
//! growing downward. Angles are measured in that frame, from `+x` toward
//! `+y`, and reported on the undirected axis range `(-90, 90]`. The Hough
//! code in [`crate::rowdetect`] uses the same frame, so a line with direction
//! angle `a` has normal angle `a - 90` (wrapped into the same range).

use thiserror::Error;

/// Number of histogram bins used by [`otsu_threshold`].
pub const OTSU_BINS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("buffer of length {len} does not match {width}x{height}x{channels}")]
    BadBuffer {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("image dimensions must be at least 1x1")]
    EmptyImage,
    #[error("plane holds a single value, no threshold exists")]
    ConstantPlane,
    #[error("no vegetation could be separated from the background")]
    EmptySegmentation,
    #[error("orientation needs at least 2 pixels, got {0}")]
    DegenerateComponent(usize),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage);
        }
        if data.len() != width * height * 3 {
            return Err(RasterError::BadBuffer {
                width,
                height,
                channels: 3,
                len: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with a single color.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Copy of the `w`x`h` window with top-left corner `(x0, y0)`.
    ///
    /// Panics if the window leaves the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> RgbImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        RgbImage {
            width: w,
            height: h,
            data,
        }
    }
}

/// Real-valued single-channel plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayPlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage);
        }
        if data.len() != width * height {
            return Err(RasterError::BadBuffer {
                width,
                height,
                channels: 1,
                len: data.len(),
            });
        }
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// One bit per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if bits.len() != width * height {
            return Err(RasterError::BadBuffer {
                width,
                height,
                channels: 1,
                len: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    /// Builds a mask from a predicate evaluated at every `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Bounds-checked read; anything outside the image is background.
    #[inline]
    pub fn get_or_false(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Coordinates of set pixels in raster order.
    pub fn points(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out.push(((i % self.width) as u32, (i / self.width) as u32));
            }
        }
        out
    }

    /// Number of set pixels in the window `[x0, x0+w) x [y0, y0+h)`.
    pub fn count_in(&self, x0: usize, y0: usize, w: usize, h: usize) -> usize {
        let mut n = 0;
        for y in y0..(y0 + h).min(self.height) {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            n += row[x0.min(self.width)..(x0 + w).min(self.width)]
                .iter()
                .filter(|&&b| b)
                .count();
        }
        n
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<(), RasterError> {
        if self.dims() != other.dims() {
            return Err(RasterError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask, RasterError> {
        self.check_dims(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask, RasterError> {
        self.check_dims(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !*b).collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask, RasterError> {
        self.check_dims(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }
}

/// Connected-component labels; 0 is background, components are `1..=count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: u32,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Mask of the pixels carrying any label in `keep`.
    pub fn mask_of(&self, keep: impl Fn(u32) -> bool) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l != 0 && keep(l)).collect(),
        }
    }

    /// Per-component statistics, indexed by `label - 1`.
    pub fn components(&self) -> Vec<ComponentStats> {
        let mut stats = vec![
            ComponentStats {
                label: 0,
                area: 0,
                min_x: usize::MAX,
                min_y: usize::MAX,
                max_x: 0,
                max_y: 0,
                sum_x: 0.0,
                sum_y: 0.0,
            };
            self.count as usize
        ];
        for (i, &l) in self.labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let (x, y) = (i % self.width, i / self.width);
            let s = &mut stats[l as usize - 1];
            s.label = l;
            s.area += 1;
            s.min_x = s.min_x.min(x);
            s.min_y = s.min_y.min(y);
            s.max_x = s.max_x.max(x);
            s.max_y = s.max_y.max(y);
            s.sum_x += x as f64;
            s.sum_y += y as f64;
        }
        stats
    }
}

/// Area, bounding box and centroid of one labeled component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentStats {
    pub label: u32,
    pub area: usize,
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
    sum_x: f64,
    sum_y: f64,
}

impl ComponentStats {
    pub fn centroid(&self) -> (f64, f64) {
        (self.sum_x / self.area as f64, self.sum_y / self.area as f64)
    }

    pub fn bbox_width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn bbox_height(&self) -> usize {
        self.max_y - self.min_y + 1
    }
}

/// One connected piece of a skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonComponent {
    pub id: u32,
    pub pixels: Vec<(u32, u32)>,
    /// Principal-axis angle; `None` for single-pixel components.
    pub orientation_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub width: usize,
    pub height: usize,
    pub components: Vec<SkeletonComponent>,
}

impl Skeleton {
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.components.iter().map(|c| c.pixels.len()).sum()
    }

    pub fn to_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::new(self.width, self.height);
        for c in &self.components {
            for &(x, y) in &c.pixels {
                m.set(x as usize, y as usize, true);
            }
        }
        m
    }

    /// Groups an arbitrary set of skeleton pixels into 8-connected components.
    pub fn from_mask(mask: &BinaryMask) -> Skeleton {
        let labels = connected_components(mask);
        let mut groups: Vec<Vec<(u32, u32)>> = vec![Vec::new(); labels.count as usize];
        for (i, &l) in labels.labels.iter().enumerate() {
            if l != 0 {
                groups[l as usize - 1].push(((i % mask.width) as u32, (i / mask.width) as u32));
            }
        }
        let components = groups
            .into_iter()
            .enumerate()
            .map(|(i, pixels)| SkeletonComponent {
                id: i as u32 + 1,
                orientation_deg: component_orientation(&pixels).ok(),
                pixels,
            })
            .collect();
        Skeleton {
            width: mask.width,
            height: mask.height,
            components,
        }
    }
}

/// Excess green on chromaticity-normalized RGB.
#[inline]
pub fn exg_pixel(rgb: [u8; 3]) -> f64 {
    let s = rgb[0] as u32 + rgb[1] as u32 + rgb[2] as u32;
    if s == 0 {
        return 0.0;
    }
    let s = s as f64;
    2.0 * (rgb[1] as f64 / s) - rgb[0] as f64 / s - rgb[2] as f64 / s
}

pub fn compute_exg(img: &RgbImage) -> GrayPlane {
    GrayPlane {
        width: img.width,
        height: img.height,
        data: img.pixels().map(exg_pixel).collect(),
    }
}

/// Outcome of an Otsu search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuResult {
    pub threshold: f64,
    /// First bin of the upper class.
    pub boundary: usize,
    /// Mean of the values below / above the threshold.
    pub lower_mean: f64,
    pub upper_mean: f64,
}

/// Histogram bin of `v` for 256 uniform bins over `[min, max]`.
#[inline]
fn otsu_bin(v: f64, min: f64, range: f64) -> usize {
    (((v - min) / range * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// Between-class variance for a split with `n0` samples summing to `s0`
/// below and `n1`, `s1` above (sums in bin-index units).
#[inline]
pub(crate) fn between_class_variance(n0: u64, s0: u64, n1: u64, s1: u64) -> f64 {
    let total = (n0 + n1) as f64;
    let w0 = n0 as f64 / total;
    let w1 = n1 as f64 / total;
    let mu0 = s0 as f64 / n0 as f64;
    let mu1 = s1 as f64 / n1 as f64;
    w0 * w1 * (mu0 - mu1) * (mu0 - mu1)
}

/// Otsu threshold of a real plane with 256 uniform bins over its value range.
///
/// Returns the boundary value `min + k * (max - min) / 256` of the best split;
/// binarize with `v > threshold`. Ties go to the lowest boundary.
pub fn otsu_threshold(plane: &GrayPlane) -> Result<f64, RasterError> {
    otsu(plane.data()).map(|r| r.threshold)
}

/// Full Otsu search over raw values.
pub fn otsu(values: &[f64]) -> Result<OtsuResult, RasterError> {
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if values.is_empty() || max <= min {
        return Err(RasterError::ConstantPlane);
    }
    let range = max - min;
    let mut hist = [0u64; OTSU_BINS];
    for &v in values {
        hist[otsu_bin(v, min, range)] += 1;
    }
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(i, &h)| i as u64 * h).sum();

    let mut best: Option<(f64, usize)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for k in 1..OTSU_BINS {
        n0 += hist[k - 1];
        s0 += (k as u64 - 1) * hist[k - 1];
        let n1 = total_n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let var = between_class_variance(n0, s0, n1, total_s - s0);
        if best.is_none_or(|(b, _)| var > b) {
            best = Some((var, k));
        }
    }
    // min and max land in bins 0 and 255, so some split always has both classes.
    let (_, k) = best.ok_or(RasterError::ConstantPlane)?;
    let threshold = min + k as f64 * range / OTSU_BINS as f64;

    let (mut lo, mut nlo, mut hi, mut nhi) = (0.0, 0usize, 0.0, 0usize);
    for &v in values {
        if v > threshold {
            hi += v;
            nhi += 1;
        } else {
            lo += v;
            nlo += 1;
        }
    }
    Ok(OtsuResult {
        threshold,
        boundary: k,
        lower_mean: if nlo > 0 { lo / nlo as f64 } else { min },
        upper_mean: if nhi > 0 { hi / nhi as f64 } else { max },
    })
}

/// Knobs for [`segment_vegetation`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Radius of the morphological opening applied to the mask; 0 disables it.
    pub opening_radius: u32,
    /// Minimum ExG gap between the two Otsu class means for the split to
    /// count as vegetation vs. background. Below it the image is treated as
    /// a single population.
    pub min_class_separation: f64,
    /// Mean ExG above which a single-population image is all vegetation
    /// (otherwise it is all background).
    pub vegetation_exg: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            opening_radius: 0,
            min_class_separation: 0.15,
            vegetation_exg: 0.15,
        }
    }
}

/// Vegetation mask plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: BinaryMask,
    /// Otsu threshold on ExG; `None` when the image was degenerate.
    pub threshold: Option<f64>,
    /// Set when the whole image was judged to be vegetation.
    pub all_vegetation: bool,
}

pub fn segment_vegetation(img: &RgbImage, cfg: &SegmentConfig) -> Result<Segmentation, RasterError> {
    let exg = compute_exg(img);
    let (w, h) = img.dims();
    let single_population = |data: &[f64]| -> Result<Segmentation, RasterError> {
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        if mean > cfg.vegetation_exg {
            log::warn!("image is uniformly vegetated, returning a full mask");
            Ok(Segmentation {
                mask: BinaryMask::full(w, h),
                threshold: None,
                all_vegetation: true,
            })
        } else {
            Err(RasterError::EmptySegmentation)
        }
    };
    let otsu = match otsu(exg.data()) {
        Ok(r) => r,
        Err(RasterError::ConstantPlane) => return single_population(exg.data()),
        Err(e) => return Err(e),
    };
    if otsu.upper_mean - otsu.lower_mean < cfg.min_class_separation {
        return single_population(exg.data());
    }
    let bits = exg.data().iter().map(|&v| v > otsu.threshold).collect();
    let mut mask = BinaryMask::from_bits(w, h, bits)?;
    if cfg.opening_radius > 0 {
        mask = open(&mask, cfg.opening_radius);
    }
    Ok(Segmentation {
        mask,
        threshold: Some(otsu.threshold),
        all_vegetation: false,
    })
}

fn disk_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    let offsets = disk_offsets(radius);
    BinaryMask::from_fn(mask.width, mask.height, |x, y| {
        offsets
            .iter()
            .all(|&(dx, dy)| mask.get_or_false(x as i64 + dx, y as i64 + dy))
    })
}

pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    let offsets = disk_offsets(radius);
    BinaryMask::from_fn(mask.width, mask.height, |x, y| {
        offsets
            .iter()
            .any(|&(dx, dy)| mask.get_or_false(x as i64 + dx, y as i64 + dy))
    })
}

/// Morphological opening with a disk.
pub fn open(mask: &BinaryMask, radius: u32) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

/// Zhang-Suen thinning followed by 8-connected grouping.
///
/// Zhang-Suen erases 2x2 blocks completely; any source component left
/// without a skeleton pixel gets its pixel nearest the centroid back, so the
/// component count is preserved.
pub fn skeletonize(mask: &BinaryMask) -> Skeleton {
    let (w, h) = mask.dims();
    // One pixel of padding so neighbour reads never branch.
    let pw = w + 2;
    let ph = h + 2;
    let mut img = vec![0u8; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                img[(y + 1) * pw + x + 1] = 1;
            }
        }
    }
    let mut candidates: Vec<usize> = (0..img.len()).filter(|&i| img[i] == 1).collect();
    let mut to_delete = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            to_delete.clear();
            for &i in &candidates {
                if img[i] == 0 {
                    continue;
                }
                // P2..P9 clockwise from north.
                let p = [
                    img[i - pw],
                    img[i - pw + 1],
                    img[i + 1],
                    img[i + pw + 1],
                    img[i + pw],
                    img[i + pw - 1],
                    img[i - 1],
                    img[i - pw - 1],
                ];
                let b: u8 = p.iter().sum();
                if !(2..=6).contains(&b) {
                    continue;
                }
                let a = (0..8).filter(|&k| p[k] == 0 && p[(k + 1) % 8] == 1).count();
                if a != 1 {
                    continue;
                }
                let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                let ok = if pass == 0 {
                    p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0
                } else {
                    p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0
                };
                if ok {
                    to_delete.push(i);
                }
            }
            for &i in &to_delete {
                img[i] = 0;
            }
            changed |= !to_delete.is_empty();
        }
        candidates.retain(|&i| img[i] == 1);
        if !changed {
            break;
        }
    }

    let mut thin = BinaryMask::from_fn(w, h, |x, y| img[(y + 1) * pw + x + 1] == 1);

    let source = connected_components(mask);
    let mut has_skeleton = vec![false; source.count as usize + 1];
    for (i, &l) in source.labels.iter().enumerate() {
        if thin.bits[i] {
            has_skeleton[l as usize] = true;
        }
    }
    if has_skeleton[1..].iter().any(|&s| !s) {
        for comp in source.components() {
            if has_skeleton[comp.label as usize] {
                continue;
            }
            let (cx, cy) = comp.centroid();
            let mut best = (f64::INFINITY, 0usize);
            for y in comp.min_y..=comp.max_y {
                for x in comp.min_x..=comp.max_x {
                    if source.get(x, y) == comp.label {
                        let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                        if d < best.0 {
                            best = (d, y * w + x);
                        }
                    }
                }
            }
            thin.bits[best.1] = true;
        }
    }
    Skeleton::from_mask(&thin)
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

/// 8-connected labeling. Labels follow raster order of first encounter.
pub fn connected_components(mask: &BinaryMask) -> LabelMap {
    let (w, h) = mask.dims();
    let mut provisional = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut label = 0u32;
            let neighbours = [
                (x as i64 - 1, y as i64),
                (x as i64 - 1, y as i64 - 1),
                (x as i64, y as i64 - 1),
                (x as i64 + 1, y as i64 - 1),
            ];
            for (nx, ny) in neighbours {
                if nx < 0 || ny < 0 || nx as usize >= w {
                    continue;
                }
                let n = provisional[ny as usize * w + nx as usize];
                if n == 0 {
                    continue;
                }
                if label == 0 {
                    label = n;
                } else if n != label {
                    let a = find(&mut parent, label);
                    let b = find(&mut parent, n);
                    if a != b {
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        parent[hi as usize] = lo;
                    }
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional[y * w + x] = label;
        }
    }
    // Roots are always the smallest provisional id of their set, and
    // provisional ids grow in raster order, so renumbering roots in
    // increasing order gives first-encounter labels.
    let mut remap = vec![0u32; parent.len()];
    let mut count = 0u32;
    for i in 1..parent.len() as u32 {
        let r = find(&mut parent, i);
        if r == i {
            count += 1;
            remap[i as usize] = count;
        }
    }
    let labels = provisional
        .iter()
        .map(|&p| {
            if p == 0 {
                0
            } else {
                remap[find(&mut parent, p) as usize]
            }
        })
        .collect();
    LabelMap {
        width: w,
        height: h,
        labels,
        count,
    }
}

/// Maps any angle in degrees onto the undirected axis range `(-90, 90]`.
pub fn wrap_axis_deg(a: f64) -> f64 {
    let mut r = a.rem_euclid(180.0);
    if r > 90.0 {
        r -= 180.0;
    }
    if r <= -90.0 {
        r += 180.0;
    }
    r
}

/// Distance between two undirected axis angles, in `[0, 90]`.
pub fn axis_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Principal-axis direction of a pixel cloud, in `(-90, 90]`.
pub fn component_orientation(pixels: &[(u32, u32)]) -> Result<f64, RasterError> {
    if pixels.len() < 2 {
        return Err(RasterError::DegenerateComponent(pixels.len()));
    }
    let n = pixels.len() as f64;
    let (mx, my) = pixels
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in pixels {
        let dx = x as f64 - mx;
        let dy = y as f64 - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Ok(wrap_axis_deg(angle.to_degrees()))
}
