//! End-to-end wiring: configuration, per-image analysis, training,
//! detection, cross-validation and dataset layouts.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{extract_candidates, CandidateRegion, ExtractionConfig};
use crate::classifier::{BoostConfig, TrainedEnsemble};
use crate::error::{Error, Result, StageContext};
use crate::evaluation::{evaluate, fold_assignment, Annotation, Detection, EvaluationReport, GroundTruth, ImageTruth};
use crate::features::{FeatureContext, FeatureMatrix, FeatureVector, RowId, NUM_FEATURES};
use crate::field::{fov_mask, green_channel, load_image, Mask, RgbImage, ScalarField, DEFAULT_FOV_THRESHOLD};
use crate::gradient::{aggregate, GradientConfig};
use crate::lcf::SupportConfig;
use crate::preprocess::{normalize, PreprocessConfig};
use crate::regions::{centroid, components, Connectivity};
use crate::scalar::Real;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Every tunable of the pipeline; missing keys take their defaults and
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub fov_threshold: f64,
    pub preprocess: PreprocessConfig,
    pub gradient: GradientConfig,
    pub extraction: ExtractionConfig,
    pub support: SupportConfig,
    pub boost: BoostConfig,
    pub feature_subset: String,
    /// Detection-to-annotation match distance in pixels.
    pub match_radius: f64,
    pub folds: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub adapter: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            fov_threshold: DEFAULT_FOV_THRESHOLD,
            preprocess: PreprocessConfig::default(),
            gradient: GradientConfig::default(),
            extraction: ExtractionConfig::default(),
            support: SupportConfig::default(),
            boost: BoostConfig::default(),
            feature_subset: "all".into(),
            match_radius: 15.0,
            folds: 10,
            repetitions: 1,
            seed: 0,
            adapter: "generic".into(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!("schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})", self.schema_version)));
        }
        if !(self.fov_threshold >= 0.0 && self.fov_threshold < 1.0) {
            return Err(Error::config("fov_threshold must be in [0, 1)"));
        }
        self.preprocess.validate()?;
        self.gradient.validate()?;
        self.extraction.validate()?;
        self.support.validate()?;
        self.boost.validate()?;
        feature_subset(&self.feature_subset)?;
        self.adapter.parse::<Adapter>()?;
        if !(self.match_radius > 0.0) {
            return Err(Error::config("match_radius must be positive"));
        }
        if self.folds < 2 || self.repetitions == 0 {
            return Err(Error::config("need folds >= 2 and repetitions >= 1"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Unreadable { path: path.to_owned(), reason: e.to_string() })?;
        Self::from_toml(&text)
    }

    /// Shrinks the size-dependent defaults from a ~2000 px field of view to
    /// one of `diameter` pixels.
    pub fn scaled_to_fov(mut self, diameter: f64) -> Self {
        let ratio = diameter / crate::preprocess::REFERENCE_FOV_DIAMETER;
        self.preprocess = PreprocessConfig::for_fov_diameter(diameter);
        self.support = SupportConfig::for_fov_diameter(diameter);
        self.match_radius = (self.match_radius * ratio).max(1.0);
        self
    }
}

/// Names accepted by [`feature_subset`].
pub const FEATURE_SUBSETS: [&str; 8] = ["all", "gini12", "deviance12", "twoing12", "intensity", "shape", "lcf", "intensity+lcf"];

/// Zero-based feature indices of a named subset.
pub fn feature_subset(name: &str) -> Result<Vec<usize>> {
    let one_based: Vec<usize> = match name {
        "all" => (1..=29).collect(),
        "gini12" => vec![2, 4, 5, 6, 7, 13, 21, 22, 25, 26, 28, 29],
        "deviance12" => vec![1, 2, 4, 5, 7, 17, 21, 22, 25, 26, 28, 29],
        "twoing12" => vec![2, 4, 5, 7, 10, 21, 22, 24, 25, 26, 28, 29],
        "intensity" => (1..=7).collect(),
        "shape" => (8..=17).collect(),
        "lcf" => (18..=29).collect(),
        "intensity+lcf" => (1..=7).chain(18..=29).collect(),
        other => {
            return Err(Error::Unknown { kind: "feature subset", name: other.to_owned(), options: FEATURE_SUBSETS.join(", ") });
        }
    };
    debug_assert!(one_based.iter().all(|&i| (1..=NUM_FEATURES).contains(&i)));
    Ok(one_based.into_iter().map(|i| i - 1).collect())
}

/// Intermediate products of one image.
pub struct ImageAnalysis<T> {
    pub mask: Mask,
    pub normalized: ScalarField<T>,
    pub per_scale: Vec<(f64, ScalarField<T>)>,
    pub weighted: ScalarField<T>,
    pub candidates: Vec<CandidateRegion>,
    pub features: Vec<FeatureVector>,
}

/// Preprocessing, weighting, candidate extraction and features. Candidates
/// whose rounded centroid falls outside the field of view are dropped.
pub fn analyze<T: Real>(image: &RgbImage, cfg: &PipelineConfig) -> Result<ImageAnalysis<T>> {
    let mask = fov_mask(image, cfg.fov_threshold).stage("fov")?;
    let green: ScalarField<T> = green_channel(image);
    let normalized = normalize(&green, &mask, &cfg.preprocess).stage("preprocess")?;
    let agg = aggregate(&normalized, &cfg.gradient).stage("weight")?;
    let per_scale: Vec<(f64, ScalarField<T>)> = agg.scales.iter().copied().zip(agg.per_scale).collect();
    let candidates: Vec<CandidateRegion> = extract_candidates(&per_scale, &cfg.extraction, &mask)
        .stage("candidates")?
        .into_iter()
        .filter(|c| {
            let (x, y) = c.centroid();
            let (rx, ry) = (x.round() as usize, y.round() as usize);
            rx < mask.width() && ry < mask.height() && mask.get(rx, ry)
        })
        .collect();
    let ctx = FeatureContext::new(&normalized, &agg.wos, &cfg.support).stage("features")?;
    let features = ctx.extract_all(&candidates).stage("features")?;
    Ok(ImageAnalysis { mask, normalized, per_scale, weighted: agg.wos, candidates, features })
}

/// `+1` when the candidate centroid lies within reach of any annotation.
pub fn label_candidates(candidates: &[CandidateRegion], truth: &[Annotation], match_radius: f64) -> Vec<i8> {
    candidates
        .iter()
        .map(|c| {
            let (x, y) = c.centroid();
            let hit = truth.iter().any(|a| (x - a.x).hypot(y - a.y) <= match_radius.max(a.radius.unwrap_or(0.0)));
            if hit {
                1
            } else {
                -1
            }
        })
        .collect()
}

/// Feature rows of one image, labelled when `truth` is given.
pub fn feature_matrix(image_id: &str, candidates: &[CandidateRegion], features: &[FeatureVector], truth: Option<&[Annotation]>, match_radius: f64) -> FeatureMatrix {
    FeatureMatrix {
        ids: candidates
            .iter()
            .enumerate()
            .map(|(id, c)| RowId { image: image_id.to_owned(), id, cx: c.centroid().0, cy: c.centroid().1 })
            .collect(),
        rows: features.to_vec(),
        labels: truth.map(|t| label_candidates(candidates, t, match_radius)),
    }
}

pub fn train(matrix: &FeatureMatrix, cfg: &PipelineConfig) -> Result<TrainedEnsemble> {
    let subset = feature_subset(&cfg.feature_subset)?;
    Ok(TrainedEnsemble::train(matrix, &subset, &cfg.boost).stage("train")?.0)
}

/// Scores every row of `matrix`.
pub fn score_matrix(model: &TrainedEnsemble, matrix: &FeatureMatrix) -> Vec<Detection> {
    matrix
        .ids
        .iter()
        .zip(&matrix.rows)
        .map(|(id, row)| Detection { image_id: id.image.clone(), x: id.cx, y: id.cy, score: model.score(row) })
        .collect()
}

/// Full detection on one image.
pub fn detect<T: Real>(image: &RgbImage, image_id: &str, model: &TrainedEnsemble, cfg: &PipelineConfig) -> Result<(ImageAnalysis<T>, Vec<Detection>)> {
    let analysis = analyze::<T>(image, cfg)?;
    let m = feature_matrix(image_id, &analysis.candidates, &analysis.features, None, cfg.match_radius);
    let dets = score_matrix(model, &m);
    Ok((analysis, dets))
}

/// Image with candidate pixels tinted red in proportion to their score.
pub fn heat_overlay(image: &RgbImage, candidates: &[CandidateRegion], scores: &[f64]) -> Result<RgbImage> {
    let (w, h) = (image.width(), image.height());
    let g = image.green();
    let mut r: Vec<u8> = g.to_vec();
    let mut gg: Vec<u8> = g.to_vec();
    let mut b: Vec<u8> = g.to_vec();
    for (c, &s) in candidates.iter().zip(scores) {
        let heat = (s.clamp(0.0, 1.0) * 255.0).round() as u8;
        for &(x, y) in c.pixels() {
            let i = y as usize * w + x as usize;
            r[i] = heat.max(r[i] / 2);
            gg[i] /= 2;
            b[i] /= 2;
        }
    }
    RgbImage::from_planes(w, h, r, gg, b)
}

/// Labelled features of one image with its annotations.
#[derive(Clone, Debug)]
pub struct ImageRecord {
    pub truth: ImageTruth,
    pub features: FeatureMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub test_images: Vec<String>,
    pub train_positives: usize,
    pub train_negatives: usize,
}

#[derive(Clone, Debug)]
pub struct CrossValidation {
    pub fold_of_image: Vec<usize>,
    pub folds: Vec<FoldSummary>,
    pub detections: Vec<Detection>,
    pub report: EvaluationReport,
}

/// Image-level k-fold cross-validation: train on the other folds, score
/// the held-out one, and evaluate the pooled detections.
pub fn cross_validate(records: &[ImageRecord], cfg: &PipelineConfig, seed: u64) -> Result<CrossValidation> {
    let k = cfg.folds;
    let fold_of_image = fold_assignment(records.len(), k, seed)?;
    let subset = feature_subset(&cfg.feature_subset)?;
    let per_fold: Vec<(FoldSummary, Vec<Detection>)> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let mut train = FeatureMatrix { labels: Some(Vec::new()), ..Default::default() };
            for (r, &f) in records.iter().zip(&fold_of_image) {
                if f != fold {
                    if r.features.labels.is_none() && !r.features.is_empty() {
                        return Err(Error::parse(format!("features of `{}` are unlabelled", r.truth.image_id)));
                    }
                    train.append(r.features.clone());
                }
            }
            let labels = train.labels.clone().unwrap_or_default();
            let summary = FoldSummary {
                fold,
                test_images: records.iter().zip(&fold_of_image).filter(|(_, &f)| f == fold).map(|(r, _)| r.truth.image_id.clone()).collect(),
                train_positives: labels.iter().filter(|&&l| l > 0).count(),
                train_negatives: labels.iter().filter(|&&l| l < 0).count(),
            };
            let boost = BoostConfig { rng_seed: cfg.boost.rng_seed.wrapping_add(fold as u64), ..cfg.boost.clone() };
            let (model, _) = TrainedEnsemble::train(&train, &subset, &boost).stage("train")?;
            let mut dets = Vec::new();
            for (r, &f) in records.iter().zip(&fold_of_image) {
                if f == fold {
                    dets.extend(score_matrix(&model, &r.features));
                }
            }
            Ok((summary, dets))
        })
        .collect::<Result<Vec<_>>>()?;
    // Pool in image order so the result does not depend on fold scheduling.
    let mut detections = Vec::new();
    for r in records {
        for (_, dets) in &per_fold {
            detections.extend(dets.iter().filter(|d| d.image_id == r.truth.image_id).cloned());
        }
    }
    let truth = GroundTruth { images: records.iter().map(|r| r.truth.clone()).collect() };
    let report = evaluate(&detections, &truth, cfg.match_radius).stage("evaluate")?;
    Ok(CrossValidation { fold_of_image, folds: per_fold.into_iter().map(|(s, _)| s).collect(), detections, report })
}

/// `cfg.repetitions` cross-validation runs, each with its own fold shuffle
/// and boosting seeds.
pub fn repeated_cross_validate(records: &[ImageRecord], cfg: &PipelineConfig) -> Result<Vec<CrossValidation>> {
    (0..cfg.repetitions)
        .map(|rep| {
            let offset = (rep * cfg.folds) as u64;
            let run = PipelineConfig { boost: BoostConfig { rng_seed: cfg.boost.rng_seed.wrapping_add(offset), ..cfg.boost.clone() }, ..cfg.clone() };
            cross_validate(records, &run, cfg.seed.wrapping_add(rep as u64))
        })
        .collect()
}

/// Supported dataset directory layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adapter {
    /// `images/` plus `truth.csv` (`image_id,x,y,radius`).
    Generic,
    /// `images/` plus `annotations/<stem>.csv` (`x,y[,radius]`) per image.
    Roc,
    /// `MA/` and `healthy/` image folders plus `Annotation_MA/<stem>.png`
    /// lesion masks.
    Eophtha,
}

pub const ADAPTERS: [&str; 3] = ["generic", "roc", "eophtha"];

impl std::str::FromStr for Adapter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(Adapter::Generic),
            "roc" => Ok(Adapter::Roc),
            "eophtha" => Ok(Adapter::Eophtha),
            other => Err(Error::Unknown { kind: "adapter", name: other.to_owned(), options: ADAPTERS.join(", ") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetItem {
    pub image_id: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetLayout {
    pub items: Vec<DatasetItem>,
    pub truth: GroundTruth,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

fn list_images(dir: &Path) -> Result<Vec<DatasetItem>> {
    if !dir.is_dir() {
        return Err(Error::Layout(format!("missing directory {}", dir.display())));
    }
    let mut items = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            let image_id = path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| Error::Layout(format!("bad file name {}", path.display())))?;
            items.push(DatasetItem { image_id: image_id.to_owned(), path });
        }
    }
    items.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if let Some(w) = items.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(Error::Layout(format!("duplicate image id `{}`", w[0].image_id)));
    }
    Ok(items)
}

#[derive(Deserialize)]
struct PointRow {
    x: f64,
    y: f64,
    #[serde(default)]
    radius: Option<f64>,
}

/// Lesion annotations from a binary mask: one per 8-connected component,
/// at its centroid with the radius of a disk of equal area.
pub fn annotations_from_mask(mask_image: &RgbImage) -> Vec<Annotation> {
    let (w, h) = (mask_image.width(), mask_image.height());
    let mask = Mask::from_fn(w, h, |x, y| mask_image.pixel(x, y).iter().any(|&v| v > 127));
    components(&mask, Connectivity::Eight)
        .into_iter()
        .map(|px| {
            let (x, y) = centroid(&px);
            Annotation { x, y, radius: Some((px.len() as f64 / std::f64::consts::PI).sqrt()) }
        })
        .collect()
}

impl DatasetLayout {
    pub fn load(root: &Path, adapter: Adapter) -> Result<Self> {
        match adapter {
            Adapter::Generic => {
                let items = list_images(&root.join("images"))?;
                let truth_path = root.join("truth.csv");
                let file = fs::File::open(&truth_path).map_err(|e| Error::Layout(format!("{}: {e}", truth_path.display())))?;
                let listed = GroundTruth::read_csv(file)?;
                if let Some(t) = listed.images.iter().find(|t| !items.iter().any(|i| i.image_id == t.image_id)) {
                    return Err(Error::Layout(format!("truth.csv names unknown image `{}`", t.image_id)));
                }
                let truth = GroundTruth {
                    images: items
                        .iter()
                        .map(|i| listed.get(&i.image_id).cloned().unwrap_or(ImageTruth { image_id: i.image_id.clone(), annotations: vec![] }))
                        .collect(),
                };
                Ok(Self { items, truth })
            }
            Adapter::Roc => {
                let items = list_images(&root.join("images"))?;
                let ann_dir = root.join("annotations");
                if !ann_dir.is_dir() {
                    return Err(Error::Layout(format!("missing directory {}", ann_dir.display())));
                }
                let mut images = Vec::new();
                for i in &items {
                    let p = ann_dir.join(format!("{}.csv", i.image_id));
                    let mut annotations = Vec::new();
                    if p.exists() {
                        let mut r = csv::Reader::from_reader(fs::File::open(&p)?);
                        for row in r.deserialize() {
                            let row: PointRow = row?;
                            annotations.push(Annotation { x: row.x, y: row.y, radius: row.radius });
                        }
                    }
                    images.push(ImageTruth { image_id: i.image_id.clone(), annotations });
                }
                Ok(Self { items, truth: GroundTruth { images } })
            }
            Adapter::Eophtha => {
                let mut lesion = list_images(&root.join("MA"))?;
                let healthy = list_images(&root.join("healthy"))?;
                let masks = root.join("Annotation_MA");
                let mut images = Vec::new();
                for i in &lesion {
                    let p = masks.join(format!("{}.png", i.image_id));
                    let m = load_image(&p).map_err(|e| Error::Layout(format!("lesion mask for `{}`: {e}", i.image_id)))?;
                    images.push(ImageTruth { image_id: i.image_id.clone(), annotations: annotations_from_mask(&m) });
                }
                for i in &healthy {
                    if lesion.iter().any(|l| l.image_id == i.image_id) {
                        return Err(Error::Layout(format!("image `{}` is both lesion and healthy", i.image_id)));
                    }
                    images.push(ImageTruth { image_id: i.image_id.clone(), annotations: vec![] });
                }
                lesion.extend(healthy);
                Ok(Self { items: lesion, truth: GroundTruth { images } })
            }
        }
    }
}

/// Writes through a temporary file so an interrupted run never leaves a
/// partial artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Where `run_dataset` puts its artifacts.
pub struct RunOutputs {
    pub root: PathBuf,
}

impl RunOutputs {
    pub fn features(&self, id: &str) -> PathBuf {
        self.root.join("features").join(format!("{id}.csv"))
    }

    pub fn detections(&self, id: &str) -> PathBuf {
        self.root.join("detections").join(format!("{id}.csv"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn curve(&self) -> PathBuf {
        self.root.join("froc.csv")
    }
}

/// Features for one dataset image, reusing a previous run's file if present.
fn image_features(item: &DatasetItem, truth: &ImageTruth, cfg: &PipelineConfig, out: &RunOutputs) -> Result<FeatureMatrix> {
    let path = out.features(&item.image_id);
    if path.exists() {
        return FeatureMatrix::read_csv(fs::File::open(&path)?);
    }
    let image = load_image(&item.path).stage("load")?;
    let a = analyze::<f64>(&image, cfg).map_err(|e| Error::Stage { stage: "image", source: Box::new(Error::parse(format!("{}: {e}", item.image_id))) })?;
    let m = feature_matrix(&item.image_id, &a.candidates, &a.features, Some(&truth.annotations), cfg.match_radius);
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    write_atomic(&path, &buf)?;
    // Read back so fresh and resumed runs see identical values.
    FeatureMatrix::read_csv(buf.as_slice())
}

/// Processes a dataset directory: per-image features (resumable), then
/// detections from `model` or, without one, from cross-validation.
pub fn run_dataset(root: &Path, cfg: &PipelineConfig, model: Option<&TrainedEnsemble>, out_dir: &Path) -> Result<EvaluationReport> {
    cfg.validate()?;
    let adapter: Adapter = cfg.adapter.parse()?;
    let layout = DatasetLayout::load(root, adapter)?;
    if layout.items.is_empty() {
        return Err(Error::Layout(format!("no images under {}", root.display())));
    }
    let out = RunOutputs { root: out_dir.to_owned() };
    fs::create_dir_all(out_dir.join("features"))?;
    fs::create_dir_all(out_dir.join("detections"))?;

    let records: Vec<ImageRecord> = layout
        .items
        .par_iter()
        .zip(layout.truth.images.par_iter())
        .map(|(item, truth)| Ok(ImageRecord { truth: truth.clone(), features: image_features(item, truth, cfg, &out)? }))
        .collect::<Result<Vec<_>>>()?;

    let (detections, report) = match model {
        Some(m) => {
            let dets: Vec<Detection> = records.iter().flat_map(|r| score_matrix(m, &r.features)).collect();
            let report = evaluate(&dets, &layout.truth, cfg.match_radius).stage("evaluate")?;
            (dets, report)
        }
        None => {
            let runs = repeated_cross_validate(&records, cfg)?;
            let reports: Vec<EvaluationReport> = runs.iter().map(|cv| cv.report.clone()).collect();
            let report = EvaluationReport::averaged(&reports).expect("at least one repetition");
            let first = runs.into_iter().next().expect("at least one repetition");
            (first.detections, report)
        }
    };
    for item in &layout.items {
        let mine: Vec<Detection> = detections.iter().filter(|d| d.image_id == item.image_id).cloned().collect();
        let mut buf = Vec::new();
        crate::evaluation::write_detections_csv(&mine, &mut buf)?;
        write_atomic(&out.detections(&item.image_id), &buf)?;
    }
    write_atomic(&out.report(), serde_json::to_string_pretty(&report)?.as_bytes())?;
    let mut curve = Vec::new();
    report.write_curve_csv(&mut curve)?;
    write_atomic(&out.curve(), &curve)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_match_tables() {
        assert_eq!(feature_subset("intensity").unwrap(), (0..7).collect::<Vec<_>>());
        assert_eq!(feature_subset("all").unwrap(), (0..29).collect::<Vec<_>>());
        let g: Vec<usize> = feature_subset("gini12").unwrap().iter().map(|i| i + 1).collect();
        assert_eq!(g, vec![2, 4, 5, 6, 7, 13, 21, 22, 25, 26, 28, 29]);
        for name in FEATURE_SUBSETS {
            let s = feature_subset(name).unwrap();
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(feature_subset("deviance12").unwrap().len(), 12);
        assert_eq!(feature_subset("twoing12").unwrap().len(), 12);
        match feature_subset("texture") {
            Err(Error::Unknown { options, .. }) => assert!(options.contains("gini12")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_round_trip_and_rejection() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml("[boost]\nnum_trees = 3").is_err());
        let partial = PipelineConfig::from_toml("[boost]\nnum_rounds = 3\n").unwrap();
        assert_eq!(partial.boost.num_rounds, 3);
        assert_eq!(partial.boost.max_splits, 100);
        assert!(PipelineConfig::from_toml("schema_version = 99").is_err());
        assert!(PipelineConfig::from_toml("adapter = \"kaggle\"").is_err());
    }

    #[test]
    fn adapter_names() {
        assert_eq!("roc".parse::<Adapter>().unwrap(), Adapter::Roc);
        match "drive".parse::<Adapter>() {
            Err(Error::Unknown { options, .. }) => assert_eq!(options, "generic, roc, eophtha"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
