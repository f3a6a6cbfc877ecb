//! `madet`: microaneurysm detection from the command line.
//!
//! Every stage reads and writes files, so any step can be run on its own.
//! Exit status is 0 on success, 2 for bad input and 3 when an internal
//! invariant is violated.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::LazyLock;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use madet::candidates::{extract_candidates, read_candidates_csv, write_candidates_csv, CandidateRegion};
use madet::classifier::{Criterion, TrainedEnsemble, MODEL_VERSION};
use madet::evaluation::{evaluate, read_detections_csv, write_detections_csv, GroundTruth, ImageTruth};
use madet::features::{FeatureContext, FeatureMatrix, FEATURE_NAMES};
use madet::field::{fov_mask, green_channel, load_image, read_raw, write_raw, Mask, RgbImage, ScalarField};
use madet::gradient::{aggregate, orientation_set};
use madet::lcf::{dense_maps, lcf_at_points, GradientField};
use madet::pipeline::{self, feature_matrix, feature_subset, PipelineConfig, CONFIG_SCHEMA_VERSION};
use madet::preprocess::normalize;
use madet::synth::{random_scene, render, RandomSceneParams, SceneSpec};
use serde::{Deserialize, Serialize};

static VERSION: LazyLock<String> =
    LazyLock::new(|| format!("{} (config schema {CONFIG_SCHEMA_VERSION}, model format {MODEL_VERSION})", env!("CARGO_PKG_VERSION")));

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "MADET_THREADS";

/// Prefix of the per-scale weighted-image dumps written by `weight`.
const PER_SCALE_PREFIX: &str = "wo_sigma_";

#[derive(Parser)]
#[command(name = "madet", version = VERSION.as_str(), about = "Microaneurysm detection in retinal fundus images")]
struct Cli {
    /// Pipeline configuration (TOML). Missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for cross-validation folds and boosting.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rescale size-dependent defaults to a field of view of this diameter.
    #[arg(long, global = true)]
    fov_diameter: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize the green channel of a fundus image.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        clip: Option<f64>,
        /// Also write the field-of-view mask as a PNG.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Gradient-weighted images of a normalized field.
    Weight {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_wos: PathBuf,
        /// Comma-separated Gaussian scales in pixels.
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        /// Number of kernel orientations spread over [0, pi/2].
        #[arg(long)]
        orient: Option<usize>,
        /// Directory receiving one weighted image per scale.
        #[arg(long)]
        per_scale_dir: Option<PathBuf>,
    },
    /// Candidate regions from per-scale weighted images.
    Candidates {
        #[arg(long)]
        wos_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Field-of-view mask PNG; the whole raster when omitted.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Convergence-index filter values at points or over the whole field.
    Lcf {
        #[arg(long = "in")]
        input: PathBuf,
        /// CSV with `x,y` columns.
        #[arg(long, required_unless_present = "dense")]
        points: Option<PathBuf>,
        #[arg(long, requires = "points")]
        out: Option<PathBuf>,
        /// Directory receiving response and radius rasters for each filter.
        #[arg(long)]
        dense: Option<PathBuf>,
        #[command(flatten)]
        support: SupportArgs,
    },
    /// Candidate features of one image.
    Features {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Image identifier; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
        /// Ground truth CSV used to label the rows.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Precomputed candidates; extracted from the image when omitted.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Train a RUSBoost ensemble on labelled feature files.
    Train {
        #[arg(long, required = true, num_args = 1..)]
        features: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        criterion: Option<String>,
        /// Named feature subset.
        #[arg(long)]
        subset: Option<String>,
        /// Majority rows kept per minority row; 0 disables undersampling.
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Per-feature importance of a trained model, most important first.
    Importance {
        #[arg(long)]
        model: PathBuf,
    },
    /// Score the candidates of one image.
    Detect {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        id: Option<String>,
        /// PNG with candidates tinted by score.
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// FROC and image-level metrics of scored detections.
    Evaluate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Plottable FROC curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Match distance in pixels.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Render synthetic scenes.
    Synth(SynthArgs),
    /// Process a dataset directory end to end.
    RunDataset {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Layout adapter: generic, roc or eophtha.
        #[arg(long)]
        adapter: Option<String>,
        /// Score with this model instead of cross-validating.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args)]
struct SupportArgs {
    #[arg(long)]
    lines: Option<usize>,
    #[arg(long)]
    band: Option<usize>,
    #[arg(long)]
    rmin: Option<usize>,
    #[arg(long)]
    rmax: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (JSON).
    #[arg(long, conflicts_with = "random", required_unless_present = "random", requires_all = ["out_img", "out_truth"])]
    spec: Option<PathBuf>,
    #[arg(long)]
    out_img: Option<PathBuf>,
    #[arg(long)]
    out_truth: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    /// Number of random scenes written as a generic dataset; every other
    /// image is healthy.
    #[arg(long, requires = "out_dir")]
    random: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 160)]
    size: usize,
    #[arg(long, default_value_t = 5)]
    blobs: usize,
    #[arg(long, default_value_t = 3)]
    vessels: usize,
    /// Bright distractor spots per image.
    #[arg(long, default_value_t = 0)]
    spots: usize,
}

/// A postcondition failed inside the tool rather than in its input.
#[derive(Debug)]
struct InvariantViolation(String);

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantViolation {}

fn ensure_invariant(ok: bool, what: &str) -> anyhow::Result<()> {
    if ok {
        Ok(())
    } else {
        Err(InvariantViolation(what.to_owned()).into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InvariantViolation>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
        Err(_) => ExitCode::from(3),
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(text) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = text.trim().parse().with_context(|| format!("{THREADS_ENV}=`{text}` is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = cli.fov_diameter {
        if !(d > 0.0) {
            bail!("--fov-diameter must be positive");
        }
        cfg = cfg.scaled_to_fov(d);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.boost.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn image_id(path: &Path, id: Option<String>) -> String {
    id.unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn create_file(path: &Path) -> anyhow::Result<fs::File> {
    create_parent(path)?;
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn open_file(path: &Path) -> anyhow::Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn mask_image(mask: &Mask) -> anyhow::Result<RgbImage> {
    let plane: Vec<u8> = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    Ok(RgbImage::from_planes(mask.width(), mask.height(), plane.clone(), plane.clone(), plane)?)
}

fn read_mask(path: &Path) -> anyhow::Result<Mask> {
    let img = load_image(path).with_context(|| format!("mask {}", path.display()))?;
    Ok(Mask::new(img.width(), img.height(), img.green().iter().map(|&v| v > 127).collect())?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Preprocess { input, out, window, clip, mask_out } => {
            let mut pcfg = cfg.preprocess.clone();
            pcfg.window_radius = window.unwrap_or(pcfg.window_radius);
            pcfg.clip = clip.unwrap_or(pcfg.clip);
            let image = load_image(&input)?;
            let mask = fov_mask(&image, cfg.fov_threshold).context("fov")?;
            let normalized = normalize(&green_channel::<f64>(&image), &mask, &pcfg).context("preprocess")?;
            ensure_invariant(normalized.as_slice().iter().all(|v| (0.0..=1.0).contains(v)), "normalized values leave [0, 1]")?;
            create_parent(&out)?;
            write_raw(&normalized, &out)?;
            if let Some(p) = mask_out {
                create_parent(&p)?;
                mask_image(&mask)?.save_png(&p)?;
            }
        }
        Command::Weight { input, out_wos, scales, orient, per_scale_dir } => {
            let mut gcfg = cfg.gradient.clone();
            if let Some(s) = scales {
                gcfg.scales = s;
            }
            if let Some(n) = orient {
                gcfg.orientations = orientation_set(n);
            }
            let field: ScalarField<f64> = read_raw(&input)?;
            let agg = aggregate(&field, &gcfg).context("weight")?;
            let bound = (gcfg.orientations.len() * gcfg.scales.len()) as f64;
            ensure_invariant(agg.wos.as_slice().iter().all(|v| v.abs() <= bound + 1e-9), "weighted image exceeds its bound")?;
            create_parent(&out_wos)?;
            write_raw(&agg.wos, &out_wos)?;
            if let Some(dir) = per_scale_dir {
                fs::create_dir_all(&dir)?;
                for (sigma, f) in agg.scales.iter().zip(&agg.per_scale) {
                    write_raw(f, &dir.join(format!("{PER_SCALE_PREFIX}{sigma}.raw")))?;
                }
            }
        }
        Command::Candidates { wos_dir, out, mask } => {
            let per_scale = read_per_scale(&wos_dir)?;
            let (w, h) = (per_scale[0].1.width(), per_scale[0].1.height());
            let mask = match mask {
                Some(p) => read_mask(&p)?,
                None => Mask::full(w, h),
            };
            let candidates = extract_candidates(&per_scale, &cfg.extraction, &mask).context("candidates")?;
            ensure_invariant(
                candidates.iter().all(|c| c.pixels().iter().all(|&(x, y)| mask.get(x as usize, y as usize))),
                "candidate pixel outside the mask",
            )?;
            write_candidates_csv(&candidates, create_file(&out)?)?;
            eprintln!("{} candidates", candidates.len());
        }
        Command::Lcf { input, points, out, dense, support } => {
            let mut scfg = cfg.support.clone();
            scfg.num_lines = support.lines.unwrap_or(scfg.num_lines);
            scfg.band_width = support.band.unwrap_or(scfg.band_width);
            scfg.r_min = support.rmin.unwrap_or(scfg.r_min);
            scfg.r_max = support.rmax.unwrap_or(scfg.r_max);
            scfg.validate()?;
            let field: ScalarField<f64> = read_raw(&input)?;
            if let Some(points_path) = points {
                let pts = read_points(&points_path)?;
                let values = lcf_at_points(&field, &pts, &scfg).context("lcf")?;
                let out = out.ok_or_else(|| anyhow!("--points needs --out"))?;
                let mut w = csv::Writer::from_writer(create_file(&out)?);
                for (&(x, y), v) in pts.iter().zip(&values) {
                    w.serialize(LcfRow {
                        x,
                        y,
                        arf_response: v.arf_response,
                        arf_radius: v.arf_radius,
                        sbf_response: v.sbf_response,
                        sbf_radius: v.sbf_radius,
                        sef_response: v.sef_response,
                        sef_radius: v.sef_radius,
                    })?;
                }
                w.flush()?;
            }
            if let Some(dir) = dense {
                let grad = GradientField::of_image(&field, scfg.gradient_sigma);
                let maps = dense_maps(&grad, &scfg).context("lcf")?;
                fs::create_dir_all(&dir)?;
                for (name, m) in ["arf", "sbf", "sef"].iter().zip(&maps) {
                    ensure_invariant(m.response.as_slice().iter().all(|v| v.abs() <= 1.0 + 1e-9), "filter response outside [-1, 1]")?;
                    write_raw(&m.response, &dir.join(format!("{name}_response.raw")))?;
                    write_raw(&m.radius, &dir.join(format!("{name}_radius.raw")))?;
                }
            }
        }
        Command::Features { image, out, id, truth, candidates } => {
            let id = image_id(&image, id);
            let img = load_image(&image)?;
            let annotations = match truth {
                Some(p) => Some(truth_for(&p, &id)?.annotations),
                None => None,
            };
            let (cands, feats) = match candidates {
                Some(p) => {
                    let cands = read_candidates_csv(open_file(&p)?)?;
                    let feats = features_for(&img, &cands, &cfg)?;
                    (cands, feats)
                }
                None => {
                    let a: madet::ImageAnalysis = pipeline::analyze(&img, &cfg)?;
                    (a.candidates, a.features)
                }
            };
            let m = feature_matrix(&id, &cands, &feats, annotations.as_deref(), cfg.match_radius);
            m.write_csv(create_file(&out)?)?;
            eprintln!("{} candidates", m.len());
        }
        Command::Train { features, model, trees, splits, rate, criterion, subset, ratio } => {
            let mut boost = cfg.boost.clone();
            boost.num_rounds = trees.unwrap_or(boost.num_rounds);
            boost.max_splits = splits.unwrap_or(boost.max_splits);
            boost.learning_rate = rate.unwrap_or(boost.learning_rate);
            if let Some(c) = criterion {
                boost.split_criterion = c.parse::<Criterion>()?;
            }
            if let Some(r) = ratio {
                boost.target_class_ratio = if r == 0.0 { None } else { Some(r) };
            }
            boost.validate()?;
            let subset = feature_subset(subset.as_deref().unwrap_or(&cfg.feature_subset))?;
            let mut matrix = FeatureMatrix::default();
            for p in &features {
                let m = FeatureMatrix::read_csv(open_file(p)?).with_context(|| format!("features {}", p.display()))?;
                if m.labels.is_none() && !m.is_empty() {
                    bail!("{} has unlabelled rows", p.display());
                }
                matrix.append(m);
            }
            let (trained, trace) = TrainedEnsemble::train(&matrix, &subset, &boost).context("train")?;
            trained.validate().map_err(|e| InvariantViolation(e.to_string()))?;
            ensure_invariant(trace.iter().all(|t| (t.weight_sum - 1.0).abs() < 1e-9), "boosting weights lost normalization")?;
            create_parent(&model)?;
            trained.save(&model)?;
            let pos = matrix.labels.as_ref().map_or(0, |l| l.iter().filter(|&&v| v > 0).count());
            eprintln!("trained {} trees on {} rows ({} positive)", trained.ensemble.trees.len(), matrix.len(), pos);
        }
        Command::Importance { model } => {
            let m = TrainedEnsemble::load(&model).context("model")?;
            let imp = m.feature_importance();
            let mut order: Vec<usize> = (0..imp.len()).collect();
            order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["rank", "feature", "name", "importance"])?;
            for (rank, &f) in order.iter().enumerate() {
                w.write_record([(rank + 1).to_string(), format!("f{}", f + 1), FEATURE_NAMES[f].to_owned(), imp[f].to_string()])?;
            }
            w.flush()?;
        }
        Command::Detect { image, model, out, id, overlay } => {
            let id = image_id(&image, id);
            let m = TrainedEnsemble::load(&model).context("model")?;
            let img = load_image(&image).context("image")?;
            let (analysis, dets) = pipeline::detect::<f64>(&img, &id, &m, &cfg)?;
            ensure_invariant(dets.iter().all(|d| (0.0..=1.0).contains(&d.score)), "score outside [0, 1]")?;
            write_detections_csv(&dets, create_file(&out)?)?;
            if let Some(p) = overlay {
                let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
                create_parent(&p)?;
                pipeline::heat_overlay(&img, &analysis.candidates, &scores)?.save_png(&p)?;
            }
            eprintln!("{} detections", dets.len());
        }
        Command::Evaluate { detections, truth, out, curve, radius } => {
            let dets = read_detections_csv(open_file(&detections)?)?;
            let gt = GroundTruth::read_csv(open_file(&truth)?)?;
            let report = evaluate(&dets, &gt, radius.unwrap_or(cfg.match_radius)).context("evaluate")?;
            create_parent(&out)?;
            fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            if let Some(p) = curve {
                report.write_curve_csv(create_file(&p)?)?;
            }
            println!("F_score {:.4}  F_AUC {:.4}", report.f_score, report.f_auc);
        }
        Command::Synth(args) => synth(args, cfg.seed)?,
        Command::RunDataset { root, out, adapter, model } => {
            let mut cfg = cfg;
            if let Some(a) = adapter {
                cfg.adapter = a;
            }
            cfg.validate()?;
            let model = match model {
                Some(p) => Some(TrainedEnsemble::load(&p).context("model")?),
                None => None,
            };
            let report = pipeline::run_dataset(&root, &cfg, model.as_ref(), &out)?;
            println!("F_score {:.4}  F_AUC {:.4}  AUC {}", report.f_score, report.f_auc, report.auc.map_or("n/a".into(), |a| format!("{a:.4}")));
        }
        Command::Config => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}

#[derive(Serialize)]
struct LcfRow {
    x: f64,
    y: f64,
    arf_response: f64,
    arf_radius: f64,
    sbf_response: f64,
    sbf_radius: f64,
    sef_response: f64,
    sef_radius: f64,
}

#[derive(Deserialize)]
struct PointRow {
    x: f64,
    y: f64,
}

fn read_points(path: &Path) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(open_file(path)?);
    let mut pts = Vec::new();
    for row in r.deserialize() {
        let p: PointRow = row.with_context(|| format!("points {}", path.display()))?;
        pts.push((p.x, p.y));
    }
    Ok(pts)
}

/// Per-scale fields named `wo_sigma_<scale>.raw`, ordered by scale.
fn read_per_scale(dir: &Path) -> anyhow::Result<Vec<(f64, ScalarField<f64>)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(sigma) = name.strip_prefix(PER_SCALE_PREFIX).and_then(|s| s.strip_suffix(".raw")) else { continue };
        let sigma: f64 = sigma.parse().with_context(|| format!("scale in file name {name}"))?;
        out.push((sigma, read_raw(&path)?));
    }
    if out.is_empty() {
        bail!("no {PER_SCALE_PREFIX}*.raw files in {}", dir.display());
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (w, h) = (out[0].1.width(), out[0].1.height());
    if out.iter().any(|(_, f)| f.width() != w || f.height() != h) {
        bail!("per-scale fields in {} differ in size", dir.display());
    }
    Ok(out)
}

fn truth_for(path: &Path, id: &str) -> anyhow::Result<ImageTruth> {
    let gt = GroundTruth::read_csv(open_file(path)?)?;
    Ok(gt.get(id).cloned().unwrap_or(ImageTruth { image_id: id.to_owned(), annotations: Vec::new() }))
}

/// Features of externally supplied candidates.
fn features_for(img: &RgbImage, cands: &[CandidateRegion], cfg: &PipelineConfig) -> anyhow::Result<Vec<madet::features::FeatureVector>> {
    let mask = fov_mask(img, cfg.fov_threshold).context("fov")?;
    if let Some(c) = cands.iter().find(|c| c.pixels().iter().any(|&(x, y)| x as usize >= img.width() || y as usize >= img.height())) {
        bail!("candidate at ({:.1}, {:.1}) lies outside the image", c.centroid().0, c.centroid().1);
    }
    let normalized = normalize(&green_channel::<f64>(img), &mask, &cfg.preprocess).context("preprocess")?;
    let agg = aggregate(&normalized, &cfg.gradient).context("weight")?;
    let ctx = FeatureContext::new(&normalized, &agg.wos, &cfg.support).context("features")?;
    ctx.extract_all(cands).context("features")
}

fn synth(args: SynthArgs, seed: u64) -> anyhow::Result<()> {
    if let Some(spec_path) = args.spec {
        let text = fs::read_to_string(&spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
        let spec: SceneSpec = serde_json::from_str(&text).with_context(|| format!("scene spec {}", spec_path.display()))?;
        let (img_path, truth_path) = (args.out_img.expect("required by clap"), args.out_truth.expect("required by clap"));
        let scene = render(&spec, &image_id(&img_path, args.id))?;
        create_parent(&img_path)?;
        scene.image.save_png(&img_path)?;
        GroundTruth { images: vec![scene.truth] }.write_csv(create_file(&truth_path)?)?;
        return Ok(());
    }
    let count = args.random.expect("required by clap");
    let dir = args.out_dir.expect("required by clap");
    fs::create_dir_all(dir.join("images"))?;
    let mut images = Vec::new();
    for i in 0..count {
        let params = RandomSceneParams {
            size: args.size,
            blobs: if i % 2 == 0 { 0 } else { args.blobs },
            vessels: args.vessels,
            spots: args.spots,
            ..Default::default()
        };
        let spec = random_scene(&params, seed.wrapping_add(i as u64));
        let id = format!("img{i:04}");
        let scene = render(&spec, &id)?;
        scene.image.save_png(&dir.join("images").join(format!("{id}.png")))?;
        images.push(scene.truth);
    }
    GroundTruth { images }.write_csv(create_file(&dir.join("truth.csv"))?)?;
    Ok(())
}
