//! SLIC superpixels over CIELAB color and pixel position.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryMask, RgbImage};
use crate::rowdetect::{rasterize_line, DetectedLine};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuperpixelError {
    #[error("requested {requested} superpixels for an image of {pixels} pixels")]
    InvalidCount { requested: i64, pixels: usize },
    #[error("invalid SLIC configuration: {0}")]
    InvalidConfig(&'static str),
}

// D65 reference white.
const XN: f64 = 0.95047;
const YN: f64 = 1.0;
const ZN: f64 = 1.08883;
const EPS: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > EPS {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > EPS {
        t
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

fn linear_to_lab(r: f64, g: f64, b: f64) -> [f64; 3] {
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (lab_f(x / XN), lab_f(y / YN), lab_f(z / ZN));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// sRGB (8-bit, D65) to CIELAB.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = |c: u8| srgb_to_linear(c as f64 / 255.0);
    linear_to_lab(lin(rgb[0]), lin(rgb[1]), lin(rgb[2]))
}

/// CIELAB to 8-bit sRGB, clamping out-of-gamut colors.
pub fn lab_to_srgb(lab: [f64; 3]) -> [u8; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let (x, y, z) = (lab_f_inv(fx) * XN, lab_f_inv(fy) * YN, lab_f_inv(fz) * ZN);
    let r = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    let g = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    let b = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    let q = |c: f64| (linear_to_srgb(c.clamp(0.0, 1.0)) * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

/// Per-pixel Lab values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    let lut: Vec<f64> = (0..256).map(|c| srgb_to_linear(c as f64 / 255.0)).collect();
    let data = img
        .pixels()
        .map(|p| linear_to_lab(lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]))
        .collect();
    LabImage {
        width: img.width(),
        height: img.height(),
        data,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicConfig {
    /// Requested superpixel count as a fraction of the pixel count.
    pub count_fraction: f64,
    pub compactness: f64,
    pub iterations: usize,
    pub enforce_connectivity: bool,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            count_fraction: 0.001,
            compactness: 20.0,
            iterations: 10,
            enforce_connectivity: true,
        }
    }
}

impl SlicConfig {
    pub fn validate(&self) -> Result<(), SuperpixelError> {
        if !(self.count_fraction > 0.0 && self.count_fraction < 1.0) {
            return Err(SuperpixelError::InvalidConfig("count_fraction must be in (0, 1)"));
        }
        if !(self.compactness > 0.0) {
            return Err(SuperpixelError::InvalidConfig("compactness must be positive"));
        }
        Ok(())
    }

    pub fn requested_count(&self, pixels: usize) -> i64 {
        (self.count_fraction * pixels as f64).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: u32,
    pub pixel_count: usize,
    pub centroid: (f64, f64),
    pub mean_lab: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    pub width: usize,
    pub height: usize,
    /// Region id per pixel, row-major; ids are `0..regions.len()`.
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

impl SuperpixelMap {
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Mask of the pixels whose region is in `ids`.
    pub fn mask_of(&self, ids: &BTreeSet<u32>) -> BinaryMask {
        let mut keep = vec![false; self.regions.len()];
        for &id in ids {
            keep[id as usize] = true;
        }
        let bits = self.labels.iter().map(|&l| keep[l as usize]).collect();
        BinaryMask::from_bits(self.width, self.height, bits).expect("label map matches its dims")
    }

    /// Pixels lying on a boundary between two regions (4-neighbourhood).
    pub fn boundaries(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        BinaryMask::from_fn(w, h, |x, y| {
            let l = self.label(x, y);
            (x + 1 < w && self.label(x + 1, y) != l) || (y + 1 < h && self.label(x, y + 1) != l)
        })
    }

    /// Mean of `4 pi A / P^2` over regions, with the perimeter counted as the
    /// number of pixel edges facing another region or the image border.
    pub fn mean_isoperimetric_ratio(&self) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut perim = vec![0usize; self.regions.len()];
        for y in 0..h {
            for x in 0..w {
                let l = self.label(x, y);
                let neighbours = [
                    (x > 0).then(|| self.label(x - 1, y)),
                    (x + 1 < w).then(|| self.label(x + 1, y)),
                    (y > 0).then(|| self.label(x, y - 1)),
                    (y + 1 < h).then(|| self.label(x, y + 1)),
                ];
                perim[l as usize] += neighbours.iter().filter(|n| *n != &Some(l)).count();
            }
        }
        let sum: f64 = self
            .regions
            .iter()
            .zip(&perim)
            .map(|(r, &p)| 4.0 * std::f64::consts::PI * r.pixel_count as f64 / (p * p) as f64)
            .sum();
        sum / self.regions.len() as f64
    }
}

/// SLIC with the requested count taken from `cfg.count_fraction`.
pub fn slic(img: &RgbImage, cfg: &SlicConfig) -> Result<SuperpixelMap, SuperpixelError> {
    cfg.validate()?;
    let n = img.width() * img.height();
    slic_with_count(img, cfg.requested_count(n), cfg)
}

/// SLIC with an explicit requested region count.
pub fn slic_with_count(img: &RgbImage, count: i64, cfg: &SlicConfig) -> Result<SuperpixelMap, SuperpixelError> {
    let (w, h) = img.dims();
    let n = w * h;
    if count < 1 || count as usize > n {
        return Err(SuperpixelError::InvalidCount {
            requested: count,
            pixels: n,
        });
    }
    if !(cfg.compactness > 0.0) {
        return Err(SuperpixelError::InvalidConfig("compactness must be positive"));
    }
    let k = count as usize;
    let lab = rgb_to_lab(img);
    let step = (n as f64 / k as f64).sqrt();

    let mut centers = initial_centers(&lab, k);
    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    let spatial_weight = (cfg.compactness / step).powi(2);
    let radius = step.ceil() as i64;

    for _ in 0..cfg.iterations.max(1) {
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as i64, c.y.round() as i64);
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius) as usize).min(w - 1);
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius) as usize).min(h - 1);
            for y in y0..=y1 {
                let dy = y as f64 - c.y;
                for x in x0..=x1 {
                    let i = y * w + x;
                    let p = &lab.data[i];
                    let dl = p[0] - c.lab[0];
                    let da = p[1] - c.lab[1];
                    let db = p[2] - c.lab[2];
                    let dx = x as f64 - c.x;
                    let d = dl * dl + da * da + db * db + (dx * dx + dy * dy) * spatial_weight;
                    // Strict comparison: ties stay with the lower center id.
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
        // Pixels outside every window keep their previous label; on the first
        // pass they go to the spatially nearest center.
        for i in 0..n {
            if labels[i] == u32::MAX {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                labels[i] = nearest_center(&centers, x, y);
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let a = &mut acc[l as usize];
            let p = &lab.data[i];
            a[0] += p[0];
            a[1] += p[1];
            a[2] += p[2];
            a[3] += (i % w) as f64;
            a[4] += (i / w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                c.lab = [a[0] / a[5], a[1] / a[5], a[2] / a[5]];
                c.x = a[3] / a[5];
                c.y = a[4] / a[5];
            }
        }
    }

    let labels = if cfg.enforce_connectivity {
        let min_size = ((step * step) / 4.0).floor().max(1.0) as usize;
        enforce_connectivity(&labels, w, h, min_size)
    } else {
        compact_ids(&labels)
    };
    Ok(build_map(&lab, labels))
}

#[derive(Debug, Clone)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

fn nearest_center(centers: &[Center], x: f64, y: f64) -> u32 {
    let mut best = (f64::INFINITY, 0u32);
    for (i, c) in centers.iter().enumerate() {
        let d = (c.x - x).powi(2) + (c.y - y).powi(2);
        if d < best.0 {
            best = (d, i as u32);
        }
    }
    best.1
}

/// Regular grid of about `k` centers, each moved to the lowest-gradient pixel
/// of its 3x3 neighbourhood.
fn initial_centers(lab: &LabImage, k: usize) -> Vec<Center> {
    let (w, h) = (lab.width, lab.height);
    // Slight bias toward more columns so that k = 2 splits side by side.
    let nx = (((k as f64 * w as f64 / h as f64).sqrt() + 0.1).round() as usize).clamp(1, w);
    let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, h);
    let gradient = |x: usize, y: usize| -> f64 {
        let at = |x: usize, y: usize| lab.data[y * w + x];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let sq = |a: [f64; 3], b: [f64; 3]| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>();
        sq(at(xr, y), at(xl, y)) + sq(at(x, yd), at(x, yu))
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let gx = (((i as f64 + 0.5) * w as f64 / nx as f64) as usize).min(w - 1);
            let gy = (((j as f64 + 0.5) * h as f64 / ny as f64) as usize).min(h - 1);
            let mut best = (gradient(gx, gy), gx, gy);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (x, y) = (gx as i64 + dx, gy as i64 + dy);
                    if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
                        continue;
                    }
                    let g = gradient(x as usize, y as usize);
                    if g < best.0 {
                        best = (g, x as usize, y as usize);
                    }
                }
            }
            centers.push(Center {
                lab: lab.data[best.2 * w + best.1],
                x: best.1 as f64,
                y: best.2 as f64,
            });
        }
    }
    centers
}

/// Renumbers arbitrary labels to `0..k` by first appearance.
fn compact_ids(labels: &[u32]) -> Vec<u32> {
    let max = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut remap = vec![u32::MAX; max + 1];
    let mut next = 0u32;
    labels
        .iter()
        .map(|&l| {
            if remap[l as usize] == u32::MAX {
                remap[l as usize] = next;
                next += 1;
            }
            remap[l as usize]
        })
        .collect()
}

const NEIGHBOURS8: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Splits every label into 8-connected pieces, then merges pieces smaller
/// than `min_size` into their largest neighbouring piece, smallest first.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    let n = w * h;
    let mut piece = vec![u32::MAX; n];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if piece[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let l = labels[start];
        piece[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in NEIGHBOURS8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if piece[j] == u32::MAX && labels[j] == l {
                    piece[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }

    let count = sizes.len();
    let mut adjacency: Vec<HashSet<u32>> = vec![HashSet::new(); count];
    for y in 0..h {
        for x in 0..w {
            let a = piece[y * w + x];
            // Forward half of the 8-neighbourhood covers every pair once.
            for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let b = piece[ny as usize * w + nx as usize];
                if a != b {
                    adjacency[a as usize].insert(b);
                    adjacency[b as usize].insert(a);
                }
            }
        }
    }

    let mut parent: Vec<u32> = (0..count as u32).collect();
    fn root(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    let mut order: Vec<u32> = (0..count as u32).filter(|&p| sizes[p as usize] < min_size).collect();
    order.sort_by_key(|&p| (sizes[p as usize], p));
    for p in order {
        let r = root(&mut parent, p);
        if sizes[r as usize] >= min_size {
            continue;
        }
        let neighbours: Vec<u32> = adjacency[r as usize].iter().copied().collect();
        let mut best: Option<(usize, u32)> = None;
        for nb in neighbours {
            let nr = root(&mut parent, nb);
            if nr == r {
                continue;
            }
            let s = sizes[nr as usize];
            if best.is_none_or(|(bs, bid)| s > bs || (s == bs && nr < bid)) {
                best = Some((s, nr));
            }
        }
        let Some((_, target)) = best else { continue };
        parent[r as usize] = target;
        sizes[target as usize] += sizes[r as usize];
        let moved = std::mem::take(&mut adjacency[r as usize]);
        for m in moved {
            if m != target {
                adjacency[target as usize].insert(m);
            }
        }
        adjacency[target as usize].remove(&r);
    }
    let merged: Vec<u32> = piece.iter().map(|&p| root(&mut parent, p)).collect();
    compact_ids(&merged)
}

fn build_map(lab: &LabImage, labels: Vec<u32>) -> SuperpixelMap {
    let w = lab.width;
    let k = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut acc = vec![[0.0f64; 6]; k];
    for (i, &l) in labels.iter().enumerate() {
        let a = &mut acc[l as usize];
        let p = &lab.data[i];
        a[0] += p[0];
        a[1] += p[1];
        a[2] += p[2];
        a[3] += (i % w) as f64;
        a[4] += (i / w) as f64;
        a[5] += 1.0;
    }
    let regions = acc
        .iter()
        .enumerate()
        .map(|(id, a)| Region {
            id: id as u32,
            pixel_count: a[5] as usize,
            centroid: (a[3] / a[5], a[4] / a[5]),
            mean_lab: [a[0] / a[5], a[1] / a[5], a[2] / a[5]],
        })
        .collect();
    SuperpixelMap {
        width: lab.width,
        height: lab.height,
        labels,
        regions,
    }
}

/// Regions touched by the 1-pixel trace of `line`.
pub fn superpixels_on_line(sp: &SuperpixelMap, line: &DetectedLine) -> BTreeSet<u32> {
    rasterize_line(line.theta_deg, line.rho_px, sp.width, sp.height)
        .into_iter()
        .map(|(x, y)| sp.label(x as usize, y as usize))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::connected_components;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn lab_reference_colors() {
        let w = srgb_to_lab([255, 255, 255]);
        assert!(close(w[0], 100.0, 0.01) && w[1].abs() < 0.5 && w[2].abs() < 0.5);
        assert_eq!(srgb_to_lab([0, 0, 0]), [0.0, 0.0, 0.0]);
        let r = srgb_to_lab([255, 0, 0]);
        assert!(
            close(r[0], 53.2, 0.5) && close(r[1], 80.1, 0.5) && close(r[2], 67.2, 0.5),
            "{r:?}"
        );
    }

    #[test]
    fn lab_round_trip() {
        for rgb in [[10, 200, 30], [120, 90, 60], [255, 255, 255], [3, 4, 5]] {
            assert_eq!(lab_to_srgb(srgb_to_lab(rgb)), rgb);
        }
    }

    #[test]
    fn uniform_image_splits_into_quadrants() {
        let img = RgbImage::filled(100, 100, [90, 120, 60]);
        let sp = slic_with_count(&img, 4, &SlicConfig::default()).unwrap();
        assert_eq!(sp.len(), 4);
        for r in &sp.regions {
            assert!((2250..=2750).contains(&r.pixel_count), "{}", r.pixel_count);
        }
        let (a, b, c, d) = (sp.label(10, 10), sp.label(90, 10), sp.label(10, 90), sp.label(90, 90));
        let set: BTreeSet<_> = [a, b, c, d].into_iter().collect();
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn single_region() {
        let img = RgbImage::filled(30, 20, [1, 2, 3]);
        let sp = slic_with_count(&img, 1, &SlicConfig::default()).unwrap();
        assert_eq!(sp.len(), 1);
        assert_eq!(sp.regions[0].pixel_count, 600);
    }

    #[test]
    fn invalid_counts() {
        let img = RgbImage::filled(10, 10, [1, 2, 3]);
        assert!(matches!(
            slic_with_count(&img, 0, &SlicConfig::default()),
            Err(SuperpixelError::InvalidCount { .. })
        ));
        assert!(matches!(
            slic_with_count(&img, 101, &SlicConfig::default()),
            Err(SuperpixelError::InvalidCount { .. })
        ));
        // 0.1% of 100 pixels rounds to zero.
        assert!(slic(&img, &SlicConfig::default()).is_err());
    }

    fn two_tone(edge: usize) -> RgbImage {
        let mut img = RgbImage::filled(100, 100, [150, 110, 70]);
        for y in 0..100 {
            for x in edge..100 {
                img.put(x, y, [40, 150, 40]);
            }
        }
        img
    }

    fn boundary_offset(sp: &SuperpixelMap, edge: usize) -> f64 {
        // Mean distance from the tone edge to the region switch along each row.
        let mut total = 0.0;
        for y in 0..sp.height {
            let left = sp.label(0, y);
            let switch = (0..sp.width).find(|&x| sp.label(x, y) != left).unwrap_or(sp.width);
            total += (switch as f64 - edge as f64).abs();
        }
        total / sp.height as f64
    }

    #[test]
    fn low_compactness_follows_color_edge() {
        let edge = 38;
        let img = two_tone(edge);
        let loose = SlicConfig {
            compactness: 1.0,
            ..Default::default()
        };
        let stiff = SlicConfig {
            compactness: 500.0,
            ..Default::default()
        };
        let a = slic_with_count(&img, 2, &loose).unwrap();
        let b = slic_with_count(&img, 2, &stiff).unwrap();
        assert!(boundary_offset(&a, edge) <= 2.0, "{}", boundary_offset(&a, edge));
        assert!(boundary_offset(&b, edge) > boundary_offset(&a, edge));
    }

    #[test]
    fn regions_are_connected_and_partition() {
        let mut img = RgbImage::filled(120, 90, [150, 110, 70]);
        for y in 0..90 {
            for x in 0..120 {
                if (x / 7 + y / 5) % 3 == 0 {
                    img.put(x, y, [40, 150, 40]);
                }
            }
        }
        let sp = slic_with_count(&img, 30, &SlicConfig::default()).unwrap();
        assert_eq!(sp.regions.iter().map(|r| r.pixel_count).sum::<usize>(), 120 * 90);
        for r in &sp.regions {
            let m = BinaryMask::from_fn(120, 90, |x, y| sp.label(x, y) == r.id);
            assert_eq!(connected_components(&m).count(), 1);
        }
    }

    #[test]
    fn line_crosses_expected_regions() {
        let img = RgbImage::filled(100, 100, [90, 120, 60]);
        let sp = slic_with_count(&img, 4, &SlicConfig::default()).unwrap();
        let horizontal = DetectedLine::from_params(90.0, 20.0);
        let hit = superpixels_on_line(&sp, &horizontal);
        assert_eq!(hit, [sp.label(10, 10), sp.label(90, 10)].into_iter().collect());
        let outside = DetectedLine::from_params(0.0, -30.0);
        assert!(superpixels_on_line(&sp, &outside).is_empty());
        // Anti-diagonal from (0, 99) to (99, 0) through the grid corner. A
        // straight trace crosses each quadrant boundary once, so it reaches
        // three quadrants; which three depends on the tie at the corner.
        let diag = DetectedLine::from_params(45.0, 99.0 / 2f64.sqrt());
        let hit = superpixels_on_line(&sp, &diag);
        assert_eq!(hit.len(), 3);
        assert!(hit.contains(&sp.label(90, 10)) && hit.contains(&sp.label(10, 90)));
    }
}
