use std::path::Path;

use serde_json::{json, Value};
use weedmap::classifier::{self, BaselineModel, Scorer};
use weedmap::error::Error;
use weedmap::eval::{self, EvalReport, LineSummary};
use weedmap::inference::{self, PixelClassMap, CLASS_PALETTE};
use weedmap::io::{self, IoError};
use weedmap::labeler::{self, Split};
use weedmap::pipeline::{self, Dataset, PipelineConfig, PipelineRun};
use weedmap::raster::{self, RgbImage};
use weedmap::rowdetect::{self, LineDetector};
use weedmap::synthfield::{self, FieldGroundTruth, TruthClass};

use crate::outputs::Outputs;
use crate::{Command, Common};

const TRUTH_PALETTE: [[u8; 3]; 3] = [[128, 100, 76], [0, 160, 0], [220, 0, 0]];
const TRUTH_PNG: &str = "truth.png";
const TRUTH_JSON: &str = "truth.json";

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    All,
}

pub fn run(common: &Common, command: &Command) -> Result<(), Error> {
    let mut cfg = load_config(common)?;
    match command {
        Command::Synth { preset } => {
            if let Some(p) = preset {
                cfg.preset = p.clone();
            }
            synth(&cfg, &common.out_dir)
        }
        Command::Segment { input } => segment(&cfg, input, &common.out_dir),
        Command::Lines { input } => lines(&cfg, input, &common.out_dir),
        Command::Label { input } => label(&cfg, input, &common.out_dir),
        Command::Dataset { input } => dataset(&cfg, input, &common.out_dir),
        Command::Train { dataset } => train(&cfg, dataset, &common.out_dir),
        Command::Infer { input, model, scores } => {
            infer(&cfg, input, model.as_deref(), scores.as_deref(), &common.out_dir)
        }
        Command::Eval {
            dataset,
            split,
            model,
            scores,
            truth,
            lines,
            classes,
        } => evaluate(
            &cfg,
            EvalInputs {
                dataset: dataset.as_deref(),
                split: *split,
                model: model.as_deref(),
                scores: scores.as_deref(),
                truth: truth.as_deref(),
                lines: lines.as_deref(),
                classes: classes.as_deref(),
            },
            &common.out_dir,
        ),
        Command::Pipeline {
            preset,
            input,
            export_dataset,
        } => {
            if let Some(p) = preset {
                cfg.preset = p.clone();
            }
            if let Some(i) = input {
                cfg.input = Some(i.display().to_string());
            }
            run_pipeline(&cfg, *export_dataset, &common.out_dir)
        }
    }
}

/// File config, then `--set` overrides, then `--seed`.
fn load_config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut root = match &common.config {
        Some(path) => serde_json::from_str(&io::read_text(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => json!({}),
    };
    for o in &common.overrides {
        apply_override(&mut root, o)?;
    }
    if let Some(seed) = common.seed {
        root["seed"] = json!(seed);
    }
    let cfg: PipelineConfig = serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))?;
    cfg.resolved()
}

fn apply_override(root: &mut Value, spec: &str) -> Result<(), Error> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is not inside a section")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    Err(Error::Config(format!("empty override key in {spec:?}")))
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    Ok(io::write_text(path, &text)?)
}

fn detector(cfg: &PipelineConfig) -> Result<LineDetector, Error> {
    Ok(LineDetector::new(cfg.hough)?)
}

fn synth(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), Error> {
    let spec = cfg.spec_with_seed(cfg.seed)?;
    let (img, truth) = synthfield::generate(&spec)?;
    let mut out = Outputs::new(out_dir)?;
    io::write_rgb_png(&out.path("field.png"), &img)?;
    write_truth(&mut out, &truth)?;
    write_json(&out.path("spec.json"), &spec)?;
    out.finish();
    Ok(())
}

fn write_truth(out: &mut Outputs, truth: &FieldGroundTruth) -> Result<(), Error> {
    let idx: Vec<u8> = truth.classes.iter().map(|&c| c as u8).collect();
    io::write_indexed_png(&out.path(TRUTH_PNG), truth.width, truth.height, &idx, &TRUTH_PALETTE)?;
    write_json(&out.path(TRUTH_JSON), truth)
}

fn read_truth(dir: &Path) -> Result<FieldGroundTruth, Error> {
    let json_path = dir.join(TRUTH_JSON);
    let mut truth: FieldGroundTruth = serde_json::from_str(&io::read_text(&json_path)?).map_err(|e| {
        Error::Io(IoError::Codec {
            path: json_path.display().to_string(),
            message: e.to_string(),
        })
    })?;
    let png = dir.join(TRUTH_PNG);
    let (w, h, idx) = io::read_indexed_png(&png)?;
    let bad = |m: &str| {
        Error::Io(IoError::Codec {
            path: png.display().to_string(),
            message: m.to_string(),
        })
    };
    if (w, h) != (truth.width, truth.height) {
        return Err(bad("dimensions differ from truth.json"));
    }
    truth.classes = idx
        .iter()
        .map(|&i| match i {
            0 => Ok(TruthClass::Soil),
            1 => Ok(TruthClass::Crop),
            2 => Ok(TruthClass::Weed),
            _ => Err(bad("class index out of range")),
        })
        .collect::<Result<_, _>>()?;
    Ok(truth)
}

fn segment(cfg: &PipelineConfig, input: &Path, out_dir: &Path) -> Result<(), Error> {
    let img = io::read_rgb(input)?;
    let seg = raster::segment_vegetation(&img, &cfg.segment)?;
    let mut out = Outputs::new(out_dir)?;
    io::write_mask_png(&out.path("vegetation.png"), &seg.mask)?;
    write_json(
        &out.path("segment.json"),
        &json!({
            "threshold": seg.threshold,
            "all_vegetation": seg.all_vegetation,
            "vegetation_pixels": seg.mask.count(),
        }),
    )?;
    out.finish();
    Ok(())
}

fn lines(cfg: &PipelineConfig, input: &Path, out_dir: &Path) -> Result<(), Error> {
    let img = io::read_rgb(input)?;
    let seg = raster::segment_vegetation(&img, &cfg.segment)?;
    let sk = raster::skeletonize(&seg.mask);
    let detector = detector(cfg)?;
    let mut det = detector.detect(&sk)?;
    detector.correct_clipped(&mut det, &seg.mask);
    if det.lines.is_empty() {
        return Err(Error::NoLines);
    }
    let mut out = Outputs::new(out_dir)?;
    io::write_mask_png(&out.path("skeleton.png"), &sk.to_mask())?;
    io::write_text(&out.path("lines.csv"), &rowdetect::lines_to_csv(&det.lines))?;
    write_json(
        &out.path("lines.json"),
        &json!({
            "main_orientation_deg": det.main_orientation_deg,
            "lines": det.lines,
        }),
    )?;
    out.finish();
    Ok(())
}

fn label(cfg: &PipelineConfig, input: &Path, out_dir: &Path) -> Result<(), Error> {
    let img = io::read_rgb(input)?;
    let a = pipeline::analyze_field(&img, &image_id(input), cfg, &detector(cfg)?)?;
    let labeled = pipeline::label_field(&img, &a, &cfg.labeling)?;
    let mut out = Outputs::new(out_dir)?;
    io::write_mask_png(&out.path("crop_mask.png"), &labeled.crop_mask.mask)?;
    io::write_mask_png(&out.path("interline.png"), &labeled.regions.interline_mask())?;
    io::write_mask_png(&out.path("potential.png"), &labeled.regions.potential)?;
    let sp = &a.superpixels;
    io::write_labels_png16(&out.path("superpixels.png"), sp.width, sp.height, &sp.labels)?;
    io::write_text(&out.path("lines.csv"), &rowdetect::lines_to_csv(&a.detection.lines))?;
    let patch_dir = out.path("patches");
    for p in labeled.patches() {
        let kind = p.label.name();
        let path = patch_dir
            .join(kind)
            .join(format!("{}_{}_{}.png", p.source.image, p.source.x, p.source.y));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| IoError::file(parent, e))?;
        }
        io::write_rgb_png(&path, &p.pixels)?;
    }
    write_json(
        &out.path("label.json"),
        &json!({
            "crop_patches": labeled.crop_patches.len(),
            "interline_weed_patches": labeled.weed_patches.len(),
            "potential_weed_patches": labeled.potential_patches.len(),
            "potential_harvested": labeled.potential_harvested,
            "superpixels": sp.len(),
            "lines": a.detection.lines.len(),
        }),
    )?;
    out.finish();
    Ok(())
}

fn dataset(cfg: &PipelineConfig, inputs: &[std::path::PathBuf], out_dir: &Path) -> Result<(), Error> {
    let det = detector(cfg)?;
    let mut sources = Vec::new();
    for input in inputs {
        let img = io::read_rgb(input)?;
        let a = pipeline::analyze_field(&img, &image_id(input), cfg, &det)?;
        sources.extend(pipeline::label_field(&img, &a, &cfg.labeling)?.patches());
    }
    let ds = Dataset::build(&sources, &cfg.labeling, cfg.seed)?;
    let mut out = Outputs::new(out_dir)?;
    labeler::export_dataset(&ds.manifest, &ds.patches, &out.path("dataset"))?;
    out.finish();
    Ok(())
}

fn train(cfg: &PipelineConfig, dataset_dir: &Path, out_dir: &Path) -> Result<(), Error> {
    let (manifest, patches) = labeler::import_dataset(dataset_dir)?;
    let ds = Dataset { patches, manifest };
    let (model, curve) = classifier::train_baseline(&ds.part(Split::Train), &ds.part(Split::Val), &cfg.train)?;
    let mut out = Outputs::new(out_dir)?;
    io::write_text(&out.path("model.json"), &model.to_json())?;
    io::write_text(&out.path("loss.csv"), &curve.to_csv())?;
    out.finish();
    Ok(())
}

fn read_model(path: &Path) -> Result<BaselineModel, Error> {
    Ok(BaselineModel::from_json(&io::read_text(path)?)?)
}

fn infer(
    cfg: &PipelineConfig,
    input: &Path,
    model: Option<&Path>,
    scores: Option<&Path>,
    out_dir: &Path,
) -> Result<(), Error> {
    let scorer: Box<dyn Scorer> = match (model, scores) {
        (Some(m), _) => Box::new(read_model(m)?),
        (None, Some(s)) => Box::new(classifier::import_scores_file(s)?),
        (None, None) => return Err(Error::Config("infer needs --model or --scores".into())),
    };
    let img = io::read_rgb(input)?;
    let a = pipeline::analyze_field(&img, &image_id(input), cfg, &detector(cfg)?)?;
    let result = pipeline::infer_field(&img, &a, scorer.as_ref(), &cfg.inference)?;
    let mut out = Outputs::new(out_dir)?;
    write_inference(&mut out, &img, &result.classes, &result.dots)?;
    io::write_text(&out.path("lines.csv"), &rowdetect::lines_to_csv(&a.detection.lines))?;
    out.finish();
    Ok(())
}

fn write_inference(
    out: &mut Outputs,
    img: &RgbImage,
    classes: &PixelClassMap,
    dots: &inference::DotGrid,
) -> Result<(), Error> {
    io::write_text(&out.path("dots.csv"), &dots.to_csv())?;
    io::write_indexed_png(
        &out.path("classes.png"),
        classes.width,
        classes.height,
        &classes.indices(),
        &CLASS_PALETTE,
    )?;
    io::write_rgb_png(&out.path("overlay.png"), &inference::render_overlay(img, classes)?)?;
    Ok(())
}

pub struct EvalInputs<'a> {
    dataset: Option<&'a Path>,
    split: SplitChoice,
    model: Option<&'a Path>,
    scores: Option<&'a Path>,
    truth: Option<&'a Path>,
    lines: Option<&'a Path>,
    classes: Option<&'a Path>,
}

fn evaluate(cfg: &PipelineConfig, inputs: EvalInputs, out_dir: &Path) -> Result<(), Error> {
    let mut report = EvalReport::default();
    let mut roc = None;
    if let Some(dir) = inputs.dataset {
        let scorer: Box<dyn Scorer> = match (inputs.model, inputs.scores) {
            (Some(m), _) => Box::new(read_model(m)?),
            (None, Some(s)) => Box::new(classifier::import_scores_file(s)?),
            (None, None) => return Err(Error::Config("--dataset needs --model or --scores".into())),
        };
        let (manifest, patches) = labeler::import_dataset(dir)?;
        let mut scores = Vec::new();
        for (e, p) in manifest.entries.iter().zip(&patches) {
            let keep = match inputs.split {
                SplitChoice::All => true,
                SplitChoice::Train => e.split == Split::Train,
                SplitChoice::Val => e.split == Split::Val,
            };
            if keep {
                scores.push((scorer.score(&e.path, &p.pixels)?, e.label == labeler::PatchLabel::Weed));
            }
        }
        let curve = eval::roc_auc(&scores)?;
        report.auc = Some(curve.auc);
        roc = Some(curve);
    }
    let truth = inputs.truth.map(read_truth).transpose()?;
    if let Some(path) = inputs.lines {
        let truth = truth
            .as_ref()
            .ok_or_else(|| Error::Config("--lines needs --truth".into()))?;
        let det = rowdetect::lines_from_csv(&io::read_text(path)?)?;
        let d: Vec<(f64, f64)> = det.iter().map(|l| (l.theta_deg, l.rho_px)).collect();
        let t: Vec<(f64, f64)> = truth.lines.iter().map(|l| (l.theta_deg, l.rho_px)).collect();
        let origin = (truth.width as f64 / 2.0, truth.height as f64 / 2.0);
        report.lines = Some(LineSummary::from(&eval::match_lines(&d, &t, cfg.matching, origin)));
    }
    if let Some(path) = inputs.classes {
        let truth = truth
            .as_ref()
            .ok_or_else(|| Error::Config("--classes needs --truth".into()))?;
        let (w, h, idx) = io::read_indexed_png(path)?;
        let map = PixelClassMap::from_indices(w, h, &idx).ok_or_else(|| {
            Error::Io(IoError::Codec {
                path: path.display().to_string(),
                message: "class index out of range".into(),
            })
        })?;
        report.pixels = Some(eval::pixel_metrics(&map, truth)?);
    }
    if report == EvalReport::default() {
        return Err(Error::Config(
            "nothing to evaluate: pass --dataset, or --truth with --lines or --classes".into(),
        ));
    }
    let mut out = Outputs::new(out_dir)?;
    if let Some(curve) = &roc {
        io::write_text(&out.path("roc.csv"), &curve.to_csv())?;
    }
    write_json(&out.path("eval.json"), &report)?;
    out.finish();
    Ok(())
}

fn run_pipeline(cfg: &PipelineConfig, export_dataset: bool, out_dir: &Path) -> Result<(), Error> {
    let run = pipeline::run_pipeline(cfg, &detector(cfg)?)?;
    let mut out = Outputs::new(out_dir)?;
    write_run(&mut out, &run, export_dataset)?;
    out.finish();
    Ok(())
}

fn write_run(out: &mut Outputs, run: &PipelineRun, export_dataset: bool) -> Result<(), Error> {
    io::write_rgb_png(&out.path("train_field.png"), &run.train_image)?;
    io::write_mask_png(&out.path("train_vegetation.png"), &run.train_analysis.segmentation.mask)?;
    io::write_mask_png(&out.path("crop_mask.png"), &run.labeled.crop_mask.mask)?;
    io::write_text(
        &out.path("train_lines.csv"),
        &rowdetect::lines_to_csv(&run.train_analysis.detection.lines),
    )?;
    if run.test_truth.is_some() {
        io::write_rgb_png(&out.path("test_field.png"), &run.test_image)?;
        io::write_text(
            &out.path("test_lines.csv"),
            &rowdetect::lines_to_csv(&run.test_analysis.detection.lines),
        )?;
    }
    io::write_text(&out.path("model.json"), &run.model.to_json())?;
    io::write_text(&out.path("loss.csv"), &run.loss.to_csv())?;
    write_inference(out, &run.test_image, &run.inference.classes, &run.inference.dots)?;
    if let Some(curve) = &run.roc {
        io::write_text(&out.path("roc.csv"), &curve.to_csv())?;
    }
    if export_dataset {
        labeler::export_dataset(&run.dataset.manifest, &run.dataset.patches, &out.path("dataset"))?;
    }
    io::write_text(&out.path("report.json"), &run.report.to_json())?;
    Ok(())
}
