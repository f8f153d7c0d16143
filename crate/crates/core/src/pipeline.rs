//! End-to-end runs: field analysis, unsupervised labeling, training,
//! whole-image inference and evaluation against synthetic ground truth.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, BaselineModel, ClassifierError, LossCurve, Scorer, TrainConfig};
use crate::error::Error;
use crate::eval::{self, EvalReport, LineMatchReport, LineSummary, MatchGates, PixelMetrics, RocCurve};
use crate::inference::{self, DotGrid, InferenceConfig, PixelClassMap};
use crate::labeler::{
    self, clamp_origin, DatasetManifest, LabeledImage, LabelingConfig, Patch, PatchLabel, PatchSource, Split,
    SplitCounts, WINDOW,
};
use crate::raster::{self, RgbImage, SegmentConfig, Segmentation};
use crate::rowdetect::{line_chord, HoughConfig, LineDetection, LineDetector};
use crate::superpixel::{self, SlicConfig, SuperpixelMap};
use crate::synthfield::{self, FieldGroundTruth, FieldSpec, TruthClass};

/// Every stage's knobs plus the run seed. Missing sections and keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Drives every random stream of a run: field synthesis, the split and
    /// training.
    pub seed: u64,
    pub preset: String,
    /// Full field spec; replaces `preset` when present.
    pub field: Option<FieldSpec>,
    /// Drop the weed color offset from the synthetic fields.
    pub hard_mode: bool,
    /// Analyze this image instead of synthesizing fields. Nothing can be
    /// scored against truth then.
    pub input: Option<String>,
    pub segment: SegmentConfig,
    pub slic: SlicConfig,
    pub hough: HoughConfig,
    pub labeling: LabelingConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub matching: MatchGates,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            preset: "bean_like".into(),
            field: None,
            hard_mode: false,
            input: None,
            segment: SegmentConfig::default(),
            slic: SlicConfig::default(),
            hough: HoughConfig::default(),
            labeling: LabelingConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            matching: MatchGates::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Copy with derived seeds filled in, checked stage by stage.
    pub fn resolved(&self) -> Result<Self, Error> {
        let mut cfg = self.clone();
        cfg.train.seed = cfg.seed;
        cfg.hough.validate()?;
        cfg.slic.validate()?;
        cfg.labeling.validate()?;
        cfg.train.validate()?;
        cfg.inference.validate()?;
        if cfg.input.is_none() {
            self.field_spec(0)?;
        }
        Ok(cfg)
    }

    /// Field spec from `field` or `preset`, seeded with `seed`.
    pub fn spec_with_seed(&self, seed: u64) -> Result<FieldSpec, Error> {
        let mut spec = match &self.field {
            Some(s) => s.clone(),
            None => synthfield::preset(&self.preset)?,
        };
        if self.hard_mode {
            spec = spec.hard_mode();
        }
        spec.seed = seed;
        spec.validate()?;
        Ok(spec)
    }

    /// Spec of synthetic field `part` (0 trains, 1 is held out).
    pub fn field_spec(&self, part: u64) -> Result<FieldSpec, Error> {
        self.spec_with_seed(self.seed.wrapping_mul(2).wrapping_add(part))
    }
}

/// Segmentation, lines and superpixels of one image.
#[derive(Debug, Clone)]
pub struct FieldAnalysis {
    pub image_id: String,
    pub segmentation: Segmentation,
    pub detection: LineDetection,
    pub superpixels: SuperpixelMap,
}

impl FieldAnalysis {
    /// Superpixels crossed by a detected line.
    pub fn line_regions(&self) -> BTreeSet<u32> {
        self.detection
            .lines
            .iter()
            .flat_map(|l| superpixel::superpixels_on_line(&self.superpixels, l))
            .collect()
    }
}

pub fn analyze_field(
    img: &RgbImage,
    image_id: &str,
    cfg: &PipelineConfig,
    detector: &LineDetector,
) -> Result<FieldAnalysis, Error> {
    let segmentation = raster::segment_vegetation(img, &cfg.segment)?;
    let skeleton = raster::skeletonize(&segmentation.mask);
    let mut detection = detector.detect(&skeleton)?;
    detector.correct_clipped(&mut detection, &segmentation.mask);
    log::info!(
        "{image_id}: {} lines around {:.2} deg",
        detection.lines.len(),
        detection.main_orientation_deg
    );
    let superpixels = superpixel::slic(img, &cfg.slic)?;
    Ok(FieldAnalysis {
        image_id: image_id.to_string(),
        segmentation,
        detection,
        superpixels,
    })
}

pub fn label_field(img: &RgbImage, a: &FieldAnalysis, cfg: &LabelingConfig) -> Result<LabeledImage, Error> {
    Ok(labeler::label_image(
        img,
        &a.image_id,
        &a.segmentation.mask,
        &a.superpixels,
        &a.detection.lines,
        cfg,
    )?)
}

/// Augmented patches with their split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub patches: Vec<Patch>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn build(source_patches: &[Patch], cfg: &LabelingConfig, seed: u64) -> Result<Self, Error> {
        let patches = labeler::augment(source_patches, cfg.mix_backgrounds);
        let manifest = labeler::split_dataset(&patches, cfg.train_fraction, seed, cfg.crop_stride)?;
        Ok(Self { patches, manifest })
    }

    pub fn part(&self, split: Split) -> Vec<Patch> {
        self.manifest
            .entries
            .iter()
            .zip(&self.patches)
            .filter(|(e, _)| e.split == split)
            .map(|(_, p)| p.clone())
            .collect()
    }
}

/// Dots and per-pixel classes of one image.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub dots: DotGrid,
    pub classes: PixelClassMap,
}

pub fn infer_field(
    img: &RgbImage,
    a: &FieldAnalysis,
    scorer: &dyn Scorer,
    cfg: &InferenceConfig,
) -> Result<InferenceResult, Error> {
    cfg.validate()?;
    let dots = inference::scan_image(img, &a.image_id, scorer, cfg.stride, cfg.epsilon)?;
    let classes = inference::vote_superpixels(
        &dots,
        &a.superpixels,
        &a.line_regions(),
        &a.segmentation.mask,
        cfg.background_fraction,
    )?;
    Ok(InferenceResult { dots, classes })
}

/// Windows are accepted as truth patches when this share of their
/// vegetation belongs to one class.
pub const TRUTH_PATCH_PURITY: f64 = 0.9;
/// ... and at least this share of the window is vegetation.
pub const TRUTH_PATCH_MIN_VEGETATION: f64 = 0.05;

/// Patches labeled from ground truth: non-overlapping windows along every
/// true row and one window per weed blob.
pub fn truth_patches(img: &RgbImage, truth: &FieldGroundTruth, image_id: &str) -> Vec<Patch> {
    let (w, h) = img.dims();
    let mut origins: Vec<(usize, usize, PatchLabel)> = Vec::new();
    for l in &truth.lines {
        let Some((a, b)) = line_chord(l.theta_deg, l.rho_px, w, h) else {
            continue;
        };
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let steps = (len / WINDOW as f64).floor() as usize;
        for k in 0..=steps {
            let t = if len > 0.0 { (k * WINDOW) as f64 / len } else { 0.0 };
            let cx = a.0 + t * (b.0 - a.0);
            let cy = a.1 + t * (b.1 - a.1);
            origins.push((clamp_origin(cx, w), clamp_origin(cy, h), PatchLabel::Crop));
        }
    }
    for blob in &truth.weeds {
        origins.push((
            clamp_origin(blob.centroid.0, w),
            clamp_origin(blob.centroid.1, h),
            PatchLabel::Weed,
        ));
    }
    let mut seen = BTreeSet::new();
    let min_veg = (TRUTH_PATCH_MIN_VEGETATION * (WINDOW * WINDOW) as f64).ceil() as usize;
    origins
        .into_iter()
        .filter(|&(x, y, _)| seen.insert((x, y)))
        .filter_map(|(x, y, _)| {
            let c = truth.window_counts(x, y, WINDOW, WINDOW);
            let (crop, weed) = (c[TruthClass::Crop as usize], c[TruthClass::Weed as usize]);
            if crop + weed < min_veg {
                return None;
            }
            let label = if crop as f64 >= TRUTH_PATCH_PURITY * (crop + weed) as f64 {
                PatchLabel::Crop
            } else if weed as f64 >= TRUTH_PATCH_PURITY * (crop + weed) as f64 {
                PatchLabel::Weed
            } else {
                return None;
            };
            Some(Patch {
                pixels: img.crop(x, y, WINDOW, WINDOW),
                label,
                source: PatchSource {
                    image: image_id.to_string(),
                    x,
                    y,
                },
                background_removed: false,
                augmentation: labeler::Augmentation::None,
            })
        })
        .collect()
}

/// Scores scan windows from ground truth: the weed share of the vegetation
/// in a `core`-sized square around the window center, 0.5 when the core
/// holds none.
#[derive(Debug, Clone)]
pub struct OracleScorer<'a> {
    pub truth: &'a FieldGroundTruth,
    pub core: usize,
}

impl Scorer for OracleScorer<'_> {
    fn score(&self, key: &str, _pixels: &RgbImage) -> Result<f64, ClassifierError> {
        let mut parts = key.rsplitn(3, '_');
        let parse = |s: Option<&str>| {
            s.and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| ClassifierError::UnknownPatch(key.to_string()))
        };
        let y = parse(parts.next())?;
        let x = parse(parts.next())?;
        let c = (WINDOW - self.core.min(WINDOW)) / 2;
        let share = self
            .truth
            .vegetation_share(x + c, y + c, self.core, self.core, TruthClass::Weed);
        Ok(share.unwrap_or(0.5))
    }
}

/// AUC of `scorer` over patches, weed positive.
pub fn patch_auc(scorer: &dyn Scorer, patches: &[Patch]) -> Result<RocCurve, Error> {
    let mut scores = Vec::with_capacity(patches.len());
    for p in patches {
        let key = labeler::patch_path(p, Split::Val);
        scores.push((scorer.score(&key, &p.pixels)?, p.label == PatchLabel::Weed));
    }
    Ok(eval::roc_auc(&scores)?)
}

pub fn match_field_lines(a: &FieldAnalysis, truth: &FieldGroundTruth, gates: MatchGates) -> LineMatchReport {
    let det: Vec<(f64, f64)> = a.detection.lines.iter().map(|l| (l.theta_deg, l.rho_px)).collect();
    let tr: Vec<(f64, f64)> = truth.lines.iter().map(|l| (l.theta_deg, l.rho_px)).collect();
    let origin = (truth.width as f64 / 2.0, truth.height as f64 / 2.0);
    eval::match_lines(&det, &tr, gates, origin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub otsu_threshold: Option<f64>,
    pub vegetation_pixels: usize,
    pub main_orientation_deg: f64,
    pub lines: usize,
    pub superpixels: usize,
    pub line_match: Option<LineSummary>,
}

impl FieldReport {
    fn new(img: &RgbImage, a: &FieldAnalysis, truth: Option<&FieldGroundTruth>, gates: MatchGates) -> Self {
        Self {
            image_id: a.image_id.clone(),
            width: img.width(),
            height: img.height(),
            otsu_threshold: a.segmentation.threshold,
            vegetation_pixels: a.segmentation.mask.count(),
            main_orientation_deg: a.detection.main_orientation_deg,
            lines: a.detection.lines.len(),
            superpixels: a.superpixels.len(),
            line_match: truth.map(|t| LineSummary::from(&match_field_lines(a, t, gates))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingReport {
    pub crop_patches: usize,
    pub interline_weed_patches: usize,
    pub potential_weed_patches: usize,
    pub potential_harvested: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
}

impl TrainingReport {
    fn new(model: &BaselineModel, curve: &LossCurve) -> Self {
        let row = |e: usize| curve.rows.get(e).copied().unwrap_or((e, f64::NAN, f64::NAN, 0.0));
        Self {
            best_epoch: model.best_epoch,
            best_val_loss: row(model.best_epoch).2,
            final_train_loss: row(curve.rows.len().saturating_sub(1)).1,
        }
    }
}

/// Everything a run reports; reproducible from the embedded config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub train_field: FieldReport,
    pub labeling: LabelingReport,
    pub dataset: SplitCounts,
    pub training: TrainingReport,
    /// Held-out field; absent when the run analyzed a single input image.
    pub test_field: Option<FieldReport>,
    pub held_out_patches: usize,
    pub eval: EvalReport,
    /// Pixel metrics with the classifier replaced by [`OracleScorer`].
    pub oracle_pixels: Option<PixelMetrics>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// In-memory products of a run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: RunReport,
    pub train_image: RgbImage,
    pub train_truth: Option<FieldGroundTruth>,
    pub train_analysis: FieldAnalysis,
    pub labeled: LabeledImage,
    pub dataset: Dataset,
    pub model: BaselineModel,
    pub loss: LossCurve,
    /// Image inference ran on: the held-out field, or the input image.
    pub test_image: RgbImage,
    pub test_truth: Option<FieldGroundTruth>,
    pub test_analysis: FieldAnalysis,
    pub inference: InferenceResult,
    pub roc: Option<RocCurve>,
}

pub fn synthesize(cfg: &PipelineConfig, part: u64) -> Result<(RgbImage, FieldGroundTruth), Error> {
    Ok(synthfield::generate(&cfg.field_spec(part)?)?)
}

fn field_name(cfg: &PipelineConfig, part: u64) -> String {
    let base = if cfg.field.is_some() {
        "field"
    } else {
        cfg.preset.as_str()
    };
    format!("{base}-s{}-{}", cfg.seed, if part == 0 { "a" } else { "b" })
}

/// Labels and trains on one field, then classifies a second one. With an
/// input image both roles fall to that image and no truth metrics exist.
pub fn run_pipeline(cfg: &PipelineConfig, detector: &LineDetector) -> Result<PipelineRun, Error> {
    let cfg = cfg.resolved()?;
    if detector.config() != &cfg.hough {
        return Err(Error::Config("line detector was built for another Hough config".into()));
    }
    let (train_image, train_truth, train_id) = match &cfg.input {
        Some(path) => {
            let img = crate::io::read_rgb(std::path::Path::new(path))?;
            let id = std::path::Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".into());
            (img, None, id)
        }
        None => {
            let (img, truth) = synthesize(&cfg, 0)?;
            (img, Some(truth), field_name(&cfg, 0))
        }
    };
    let train_analysis = analyze_field(&train_image, &train_id, &cfg, detector)?;
    let labeled = label_field(&train_image, &train_analysis, &cfg.labeling)?;
    let dataset = Dataset::build(&labeled.patches(), &cfg.labeling, cfg.seed)?;
    let (model, loss) = classifier::train_baseline(&dataset.part(Split::Train), &dataset.part(Split::Val), &cfg.train)?;

    let (test_image, test_truth, test_analysis) = if cfg.input.is_some() {
        (train_image.clone(), None, train_analysis.clone())
    } else {
        let (img, truth) = synthesize(&cfg, 1)?;
        let a = analyze_field(&img, &field_name(&cfg, 1), &cfg, detector)?;
        (img, Some(truth), a)
    };
    let inference = infer_field(&test_image, &test_analysis, &model, &cfg.inference)?;

    let mut eval_report = EvalReport::default();
    let mut roc = None;
    let mut held_out = 0;
    let mut oracle_pixels = None;
    if let Some(truth) = &test_truth {
        let patches = truth_patches(&test_image, truth, &test_analysis.image_id);
        held_out = patches.len();
        let curve = patch_auc(&model, &patches)?;
        eval_report.auc = Some(curve.auc);
        roc = Some(curve);
        eval_report.lines = Some(LineSummary::from(&match_field_lines(
            &test_analysis,
            truth,
            cfg.matching,
        )));
        eval_report.pixels = Some(eval::pixel_metrics(&inference.classes, truth)?);
        let oracle = OracleScorer {
            truth,
            core: cfg.inference.stride,
        };
        let oracle_run = infer_field(&test_image, &test_analysis, &oracle, &cfg.inference)?;
        oracle_pixels = Some(eval::pixel_metrics(&oracle_run.classes, truth)?);
    }

    let report = RunReport {
        train_field: FieldReport::new(&train_image, &train_analysis, train_truth.as_ref(), cfg.matching),
        labeling: LabelingReport {
            crop_patches: labeled.crop_patches.len(),
            interline_weed_patches: labeled.weed_patches.len(),
            potential_weed_patches: labeled.potential_patches.len(),
            potential_harvested: labeled.potential_harvested,
        },
        dataset: dataset.manifest.counts,
        training: TrainingReport::new(&model, &loss),
        test_field: test_truth
            .as_ref()
            .map(|t| FieldReport::new(&test_image, &test_analysis, Some(t), cfg.matching)),
        held_out_patches: held_out,
        eval: eval_report,
        oracle_pixels,
        config: cfg,
    };
    Ok(PipelineRun {
        report,
        train_image,
        train_truth,
        train_analysis,
        labeled,
        dataset,
        model,
        loss,
        test_image,
        test_truth,
        test_analysis,
        inference,
        roc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPresetReport {
    pub crop_preset: String,
    pub weed_preset: String,
    pub seed: u64,
    pub train_crop_patches: usize,
    pub train_weed_patches: usize,
    pub held_out_patches: usize,
    pub auc: f64,
}

/// Trains on crop patches labeled on a `crop_preset` field and weed patches
/// labeled on a `weed_preset` field, then scores held-out truth patches of
/// a fresh `crop_preset` field.
pub fn run_cross_preset(
    cfg: &PipelineConfig,
    crop_preset: &str,
    weed_preset: &str,
    detector: &LineDetector,
) -> Result<CrossPresetReport, Error> {
    let base = PipelineConfig {
        field: None,
        input: None,
        ..cfg.resolved()?
    };
    let crop_cfg = PipelineConfig {
        preset: crop_preset.into(),
        ..base.clone()
    };
    let weed_cfg = PipelineConfig {
        preset: weed_preset.into(),
        ..base.clone()
    };
    let label = |c: &PipelineConfig| -> Result<LabeledImage, Error> {
        let (img, _) = synthesize(c, 0)?;
        let a = analyze_field(&img, &field_name(c, 0), c, detector)?;
        label_field(&img, &a, &c.labeling)
    };
    let crop_side = label(&crop_cfg)?;
    let weed_side = label(&weed_cfg)?;
    let mut sources = crop_side.crop_patches.clone();
    let n_crop = sources.len();
    sources.extend(weed_side.weed_patches.iter().cloned());
    sources.extend(weed_side.potential_patches.iter().cloned());
    let dataset = Dataset::build(&sources, &base.labeling, base.seed)?;
    let (model, _) = classifier::train_baseline(&dataset.part(Split::Train), &dataset.part(Split::Val), &base.train)?;

    let (img, truth) = synthesize(&crop_cfg, 1)?;
    let patches = truth_patches(&img, &truth, &field_name(&crop_cfg, 1));
    let auc = patch_auc(&model, &patches)?.auc;
    Ok(CrossPresetReport {
        crop_preset: crop_preset.into(),
        weed_preset: weed_preset.into(),
        seed: base.seed,
        train_crop_patches: n_crop,
        train_weed_patches: sources.len() - n_crop,
        held_out_patches: patches.len(),
        auc,
    })
}
