use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, HeadsSelection, OracleConfig, OracleKind};
use super::dataset::{create_dir, load_dataset, manifest_row, sample_name, write_file, write_manifest, Dataset};
use super::ExperimentError;
use crate::inference::{multi_init_infer, write_trajectory_csv, InferenceConfig, MultiInitResult};
use crate::metrics::{aggregate, evaluate_plane, write_report_csv, MeanStd, PlaneEvalResult, ReportRow};
use crate::phantom::generate_phantom;
use crate::predictor::train::{train_with_progress, write_loss_csv, LossRecord, ModelSpec, PhantomSampler, TrainOutcome};
use crate::predictor::{
    load_model, save_model, ClassHeads, ExactOracle, NoisyOracle, OracleCap, Predictor, RegressionMode, RegressorModel,
};
use crate::rng::derive_seed;
use crate::transform::{geodesic_angle, write_record, RigidTransform, UnitQuaternion, Vec3};
use crate::volume::{extract_plane, write_pgm16, write_volume};

pub const DETECTIONS_FILE: &str = "detections.csv";
pub const REPORT_FILE: &str = "report.csv";
const LOG_EVERY: usize = 100;

/// Where a detection's predictions come from.
#[derive(Debug, Clone)]
pub enum PredictorSource {
    Model(RegressorModel),
    /// A ground-truth oracle reporting steps in `mode`.
    Oracle { config: OracleConfig, mode: RegressionMode },
}

impl PredictorSource {
    fn for_sample<'a>(&'a self, gt: &RigidTransform, plane_size: usize, seed: u64) -> Box<dyn Predictor + 'a> {
        match self {
            Self::Model(m) => Box::new(m),
            Self::Oracle { config: o, mode } => {
                let cap = OracleCap { max_translation: o.max_translation, max_rotation_deg: o.max_rotation_deg };
                match o.kind {
                    OracleKind::Exact => Box::new(ExactOracle::new(*gt).with_representation(*mode, plane_size)),
                    OracleKind::Capped => Box::new(ExactOracle::capped(*gt, cap).with_representation(*mode, plane_size)),
                    OracleKind::Noisy => Box::new(NoisyOracle::new(
                        ExactOracle::new(*gt),
                        o.sigma_translation,
                        o.sigma_rotation_deg,
                        o.epsilon,
                        seed,
                    )),
                }
            }
        }
    }
}

fn default_model_id(source: &PredictorSource) -> String {
    match source {
        PredictorSource::Model(m) => {
            let heads = HeadsSelection::of(m.heads(), m.input_mode()).map_or("custom", HeadsSelection::label);
            format!("{}-{heads}", m.mode())
        }
        PredictorSource::Oracle { config, .. } => format!("oracle-{}", config.kind),
    }
}

fn json_file(path: &Path, cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    write_file(path, cfg.resolved().to_json() + "\n")
}

// ---- phantom-gen ----

/// Writes `phantom_count` phantoms plus `manifest.csv` into the output root.
pub fn phantom_gen(cfg: &ExperimentConfig, log: &dyn Fn(&str)) -> Result<PathBuf, ExperimentError> {
    if cfg.phantom_count == 0 {
        return Err(ExperimentError::Config("phantom_count must be at least 1".into()));
    }
    let dir = cfg.output_root();
    create_dir(&dir)?;
    let phantoms = (0..cfg.phantom_count)
        .into_par_iter()
        .map(|i| {
            let mut spec = cfg.phantom.clone();
            spec.seed = cfg.phantom_seed(i);
            generate_phantom(&spec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let class = cfg.phantom.layout.to_string();
    let mut rows = Vec::with_capacity(phantoms.len());
    for (i, p) in phantoms.iter().enumerate() {
        let name = sample_name(i);
        write_volume(&dir.join(format!("{name}.vol")), &p.volume)?;
        write_file(&dir.join(format!("{name}.gt.txt")), write_record(&p.ground_truth) + "\n")?;
        rows.push(manifest_row(i, &p.ground_truth, &class));
    }
    write_manifest(&dir, &rows)?;
    json_file(&dir.join("phantom_config.json"), cfg)?;
    log(&format!("wrote {} phantoms to {}", rows.len(), dir.display()));
    Ok(dir)
}

// ---- train ----

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model_path: PathBuf,
    pub final_loss: Option<LossRecord>,
}

fn train_on(
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &ExperimentConfig,
    log: &dyn Fn(&str),
) -> Result<TrainOutcome, ExperimentError> {
    let train_cfg = cfg.resolved().train;
    let sampler = PhantomSampler::new(&data.samples, spec.architecture.input_size, spec.input_mode, train_cfg.seed)?;
    let last = train_cfg.steps.saturating_sub(1);
    Ok(train_with_progress(&sampler, spec, &train_cfg, |r| {
        if r.step % LOG_EVERY == 0 || r.step == last {
            log(&format!("step {:>5}  loss {:.4}", r.step, r.loss.total));
        }
    })?)
}

fn save_training(outcome: &TrainOutcome, model_path: &Path, loss_path: &Path) -> Result<(), ExperimentError> {
    if let Some(parent) = model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_model(&outcome.model, model_path)?;
    let file = File::create(loss_path).map_err(|e| ExperimentError::io(loss_path, e))?;
    write_loss_csv(&outcome.curve, BufWriter::new(file)).map_err(|e| ExperimentError::io(loss_path, e))
}

/// Trains on the training dataset; writes the checkpoint and `loss.csv`.
pub fn train_model(cfg: &ExperimentConfig, log: &dyn Fn(&str)) -> Result<TrainReport, ExperimentError> {
    cfg.validate()?;
    let heads = cfg.heads.unwrap_or(HeadsSelection::M4);
    let mode = cfg.mode.unwrap_or(RegressionMode::Quat);
    let spec = ModelSpec {
        mode,
        heads: heads.class_heads(),
        input_mode: heads.input_mode(),
        architecture: cfg.architecture.clone(),
    };
    if mode != RegressionMode::Quat && spec.heads != ClassHeads::NONE {
        return Err(ExperimentError::Config(format!("heads {heads} need the quat mode")));
    }
    let data = load_dataset(&cfg.train_dir())?;
    let out = cfg.output_root();
    create_dir(&out)?;
    log(&format!("training {mode}-{heads} on {} volumes for {} steps", data.len(), cfg.train.steps));
    let outcome = train_on(&data, &spec, cfg, log)?;
    let model_path = cfg.model_path();
    save_training(&outcome, &model_path, &out.join("loss.csv"))?;
    json_file(&out.join("train_config.json"), cfg)?;
    Ok(TrainReport { model_path, final_loss: outcome.curve.last().copied() })
}

// ---- detect ----

#[derive(Debug, Clone)]
pub struct Detection {
    pub sample_id: String,
    pub result: MultiInitResult,
    /// Wall time of the multi-init detection.
    pub seconds: f64,
}

/// Runs multi-init inference on every volume. Initial poses depend only on
/// the master seed and the volume's position in the dataset.
pub fn detect_dataset(
    data: &Dataset,
    source: &PredictorSource,
    inference: &InferenceConfig,
    cfg: &ExperimentConfig,
) -> Result<Vec<Detection>, ExperimentError> {
    let oracle_seed = cfg.oracle_seed();
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (volume, gt) = &data.samples[i];
            let predictor = source.for_sample(gt, inference.plane_size, derive_seed(oracle_seed, i as u64));
            let run_cfg = InferenceConfig { seed: cfg.inference_seed(i), ..inference.clone() };
            let start = Instant::now();
            let result = multi_init_infer(volume, &*predictor, &run_cfg)?;
            Ok(Detection { sample_id: data.rows[i].sample_id.clone(), result, seconds: start.elapsed().as_secs_f64() })
        })
        .collect()
}

/// Picks the predictor and the matching inference settings.
fn resolve_predictor(cfg: &ExperimentConfig) -> Result<(PredictorSource, InferenceConfig), ExperimentError> {
    let mut inference = cfg.inference.clone();
    let source = match &cfg.oracle {
        Some(o) => {
            inference.confidence = cfg.heads.unwrap_or(HeadsSelection::M1).class_heads();
            PredictorSource::Oracle { config: o.clone(), mode: cfg.mode.unwrap_or(RegressionMode::Quat) }
        }
        None => {
            let path = cfg.model_path();
            if !path.is_file() {
                return Err(ExperimentError::Config(format!("model checkpoint {} not found", path.display())));
            }
            let model = load_model(&path)?;
            let trained = HeadsSelection::of(model.heads(), model.input_mode());
            if cfg.mode.is_some_and(|m| m != model.mode()) || cfg.heads.is_some_and(|h| Some(h) != trained) {
                return Err(ExperimentError::Config(format!(
                    "checkpoint {} is a {}-{} model; requested {}-{}",
                    path.display(),
                    model.mode(),
                    trained.map_or("custom", HeadsSelection::label),
                    cfg.mode.unwrap_or(model.mode()),
                    cfg.heads.map_or("any", HeadsSelection::label),
                )));
            }
            if model.architecture().input_size != inference.plane_size {
                return Err(ExperimentError::Config(format!(
                    "checkpoint expects {}-pixel planes, inference uses {}",
                    model.architecture().input_size,
                    inference.plane_size
                )));
            }
            inference.confidence = model.heads();
            PredictorSource::Model(model)
        }
    };
    Ok((source, inference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectionRow {
    sample_id: String,
    model_id: String,
    tx: f64,
    ty: f64,
    tz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    runs_included: usize,
    low_confidence: bool,
}

impl DetectionRow {
    fn pose(&self) -> Result<RigidTransform, ExperimentError> {
        UnitQuaternion::from_unit_components([self.qw, self.qx, self.qy, self.qz])
            .map(|q| RigidTransform::new(Vec3::new(self.tx, self.ty, self.tz), q))
            .map_err(|e| ExperimentError::Data(format!("detection {}: {e}", self.sample_id)))
    }
}

#[derive(Debug, Clone)]
pub struct DetectReport {
    pub count: usize,
    pub low_confidence: usize,
    pub mean_seconds: f64,
    pub model_id: String,
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExperimentError> {
    let mut wr = csv::Writer::from_path(path).map_err(|e| ExperimentError::csv(path, e))?;
    for r in rows {
        wr.serialize(r).map_err(|e| ExperimentError::csv(path, e))?;
    }
    wr.flush().map_err(|e| ExperimentError::io(path, e))
}

fn write_detections(
    dir: &Path,
    data: &Dataset,
    detections: &[Detection],
    model_id: &str,
    cfg: &ExperimentConfig,
) -> Result<(), ExperimentError> {
    let traj_dir = dir.join("trajectories");
    let pred_dir = dir.join("predictions");
    create_dir(&traj_dir)?;
    create_dir(&pred_dir)?;
    let mut rows = Vec::with_capacity(detections.len());
    let mut timing = Vec::with_capacity(detections.len());
    for (d, (volume, gt)) in detections.iter().zip(&data.samples) {
        let t = d.result.pose.translation;
        let q = d.result.pose.rotation.to_array();
        rows.push(DetectionRow {
            sample_id: d.sample_id.clone(),
            model_id: model_id.to_string(),
            tx: t.x,
            ty: t.y,
            tz: t.z,
            qw: q[0],
            qx: q[1],
            qy: q[2],
            qz: q[3],
            runs_included: d.result.included.iter().filter(|&&k| k).count(),
            low_confidence: d.result.low_confidence,
        });
        timing.push((d.sample_id.clone(), d.seconds));
        write_file(&pred_dir.join(format!("{}.txt", d.sample_id)), write_record(&d.result.pose) + "\n")?;

        let annotated: Vec<_> = d
            .result
            .runs
            .iter()
            .map(|r| {
                let mut traj = r.trajectory.clone();
                traj.annotate(gt);
                traj
            })
            .collect();
        let path = traj_dir.join(format!("{}.csv", d.sample_id));
        let file = File::create(&path).map_err(|e| ExperimentError::io(&path, e))?;
        write_trajectory_csv(BufWriter::new(file), annotated.iter().enumerate())
            .map_err(|e| ExperimentError::io(&path, e))?;

        if cfg.dump_planes {
            let plane_dir = dir.join("planes").join(&d.sample_id);
            create_dir(&plane_dir)?;
            for (run, r) in d.result.runs.iter().enumerate() {
                for p in &r.trajectory.points {
                    let image = extract_plane(volume, &p.pose, cfg.inference.plane_size)?;
                    write_pgm16(&plane_dir.join(format!("run{run}_iter{:02}.pgm", p.iteration)), &image)?;
                }
            }
        }
    }
    write_csv_rows(&dir.join(DETECTIONS_FILE), &rows)?;
    // Wall times vary run to run, so they live apart from the deterministic outputs.
    let path = dir.join("timing.csv");
    let mut wr = csv::Writer::from_path(&path).map_err(|e| ExperimentError::csv(&path, e))?;
    wr.write_record(["sample_id", "seconds"]).map_err(|e| ExperimentError::csv(&path, e))?;
    for (id, s) in &timing {
        wr.write_record([id.clone(), s.to_string()]).map_err(|e| ExperimentError::csv(&path, e))?;
    }
    wr.flush().map_err(|e| ExperimentError::io(&path, e))
}

/// Detects the plane in every test volume with a checkpoint or an oracle.
pub fn detect(cfg: &ExperimentConfig, log: &dyn Fn(&str)) -> Result<DetectReport, ExperimentError> {
    cfg.validate()?;
    let (source, inference) = resolve_predictor(cfg)?;
    let data = load_dataset(&cfg.test_dir())?;
    let model_id = cfg.model_id.clone().unwrap_or_else(|| default_model_id(&source));
    log(&format!("detecting with {model_id} on {} volumes", data.len()));
    let detections = detect_dataset(&data, &source, &inference, cfg)?;
    let out = cfg.output_root();
    create_dir(&out)?;
    write_detections(&out, &data, &detections, &model_id, cfg)?;
    json_file(&out.join("detect_config.json"), cfg)?;
    let n = detections.len();
    let mean_seconds = detections.iter().map(|d| d.seconds).sum::<f64>() / n as f64;
    Ok(DetectReport {
        count: n,
        low_confidence: detections.iter().filter(|d| d.result.low_confidence).count(),
        mean_seconds,
        model_id,
    })
}

// ---- eval ----

#[derive(Debug, Clone, Serialize)]
struct EvalRow<'a> {
    sample_id: &'a str,
    dx: f64,
    dtheta: f64,
    normal_angle: f64,
    psnr: f64,
    ssim: f64,
}

fn read_detections(dir: &Path) -> Result<Vec<DetectionRow>, ExperimentError> {
    let path = dir.join(DETECTIONS_FILE);
    if !path.is_file() {
        return Err(ExperimentError::Config(format!("no detections at {}", path.display())));
    }
    let mut rd = csv::Reader::from_path(&path).map_err(|e| ExperimentError::csv(&path, e))?;
    rd.deserialize().collect::<Result<Vec<DetectionRow>, _>>().map_err(|e| ExperimentError::csv(&path, e))
}

fn evaluate_poses(
    data: &Dataset,
    poses: &[RigidTransform],
    plane_size: usize,
) -> Result<Vec<PlaneEvalResult>, ExperimentError> {
    data.samples
        .par_iter()
        .zip(poses)
        .map(|((volume, gt), pose)| Ok(evaluate_plane(pose, gt, volume, plane_size)?))
        .collect()
}

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    iter: usize,
    tx: f64,
    ty: f64,
    tz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

/// Mean error against the iteration index over every run of every volume.
fn convergence_curve(data: &Dataset, traj_dir: &Path) -> Result<Option<Vec<(usize, usize, f64, f64)>>, ExperimentError> {
    let mut by_iter: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (row, (_, gt)) in data.rows.iter().zip(&data.samples) {
        let path = traj_dir.join(format!("{}.csv", row.sample_id));
        if !path.is_file() {
            return Ok(None);
        }
        let mut rd = csv::Reader::from_path(&path).map_err(|e| ExperimentError::csv(&path, e))?;
        for rec in rd.deserialize::<TrajectoryRow>() {
            let r = rec.map_err(|e| ExperimentError::csv(&path, e))?;
            let q = UnitQuaternion::from_unit_components([r.qw, r.qx, r.qy, r.qz])
                .map_err(|e| ExperimentError::Data(format!("{}: {e}", path.display())))?;
            let e = by_iter.entry(r.iter).or_default();
            e.0.push((Vec3::new(r.tx, r.ty, r.tz) - gt.translation).norm());
            e.1.push(geodesic_angle(&q, &gt.rotation));
        }
    }
    by_iter
        .into_iter()
        .map(|(iter, (dx, dt))| Ok((iter, dx.len(), MeanStd::of(&dx)?.mean, MeanStd::of(&dt)?.mean)))
        .collect::<Result<Vec<_>, ExperimentError>>()
        .map(Some)
}

/// Scores `detections.csv` against the test dataset's ground truth. Writes
/// per-volume errors, the one-row report and, when trajectories are
/// present, the mean error per iteration.
pub fn eval(cfg: &ExperimentConfig, log: &dyn Fn(&str)) -> Result<ReportRow, ExperimentError> {
    cfg.validate()?;
    let data = load_dataset(&cfg.test_dir())?;
    let det_dir = cfg.detections_dir();
    let detections = read_detections(&det_dir)?;
    let by_id: HashMap<&str, &DetectionRow> = detections.iter().map(|d| (d.sample_id.as_str(), d)).collect();
    let poses = data
        .rows
        .iter()
        .map(|r| {
            by_id
                .get(r.sample_id.as_str())
                .ok_or_else(|| ExperimentError::Config(format!("no detection for {}", r.sample_id)))?
                .pose()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let results = evaluate_poses(&data, &poses, cfg.inference.plane_size)?;

    let out = cfg.output_root();
    create_dir(&out)?;
    let details: Vec<EvalRow> =
        data.rows
        .iter()
        .zip(&results)
        .map(|(r, e)| EvalRow {
            sample_id: &r.sample_id,
            dx: e.dx,
            dtheta: e.dtheta,
            normal_angle: e.normal_angle,
            psnr: e.psnr,
            ssim: e.ssim,
        })
        .collect();
    write_csv_rows(&out.join("eval_details.csv"), &details)?;

    let model_id = cfg
        .model_id
        .clone()
        .or_else(|| detections.first().map(|d| d.model_id.clone()))
        .unwrap_or_else(|| "model".into());
    let row = ReportRow::new(model_id, data.plane_class(), &aggregate(&results)?);
    write_report(&out.join(REPORT_FILE), std::slice::from_ref(&row))?;

    if let Some(curve) = convergence_curve(&data, &det_dir.join("trajectories"))? {
        let path = out.join("convergence.csv");
        let mut wr = csv::Writer::from_path(&path).map_err(|e| ExperimentError::csv(&path, e))?;
        wr.write_record(["iter", "n", "dx_mean", "dtheta_mean"]).map_err(|e| ExperimentError::csv(&path, e))?;
        for (iter, n, dx, dt) in curve {
            wr.write_record([iter.to_string(), n.to_string(), dx.to_string(), dt.to_string()])
                .map_err(|e| ExperimentError::csv(&path, e))?;
        }
        wr.flush().map_err(|e| ExperimentError::io(&path, e))?;
    }
    log(&format!(
        "{}: dx {:.3} ± {:.3}  dtheta {:.3} ± {:.3}  psnr {:.2}  ssim {:.4}",
        row.model_id, row.dx_mean, row.dx_std, row.dtheta_mean, row.dtheta_std, row.psnr_mean, row.ssim_mean
    ));
    Ok(row)
}

fn write_report(path: &Path, rows: &[ReportRow]) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(|e| ExperimentError::io(path, e))?;
    write_report_csv(rows, BufWriter::new(file)).map_err(|e| ExperimentError::io(path, e))
}

// ---- benches ----

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    pub dir: PathBuf,
}

enum RowPredictor {
    Train(ModelSpec),
    Oracle(OracleConfig, RegressionMode),
}

struct BenchRow {
    label: String,
    predictor: RowPredictor,
    confidence: ClassHeads,
}

fn file_label(label: &str) -> String {
    label.replace('+', "plus")
}

fn run_bench(
    cfg: &ExperimentConfig,
    name: &str,
    rows: Vec<BenchRow>,
    log: &dyn Fn(&str),
) -> Result<BenchReport, ExperimentError> {
    cfg.validate()?;
    let test = load_dataset(&cfg.test_dir())?;
    let needs_training = rows.iter().any(|r| matches!(r.predictor, RowPredictor::Train(_)));
    let train = if needs_training { Some(load_dataset(&cfg.train_dir())?) } else { None };
    let dir = cfg.output_root().join(name);
    create_dir(&dir)?;

    let mut report = Vec::with_capacity(rows.len());
    let mut inits: Vec<(String, Vec<Vec<RigidTransform>>)> = Vec::with_capacity(rows.len());
    for row in rows {
        let source = match row.predictor {
            RowPredictor::Train(spec) => {
                log(&format!("{name} {}: training", row.label));
                let outcome = train_on(train.as_ref().expect("loaded above"), &spec, cfg, log)?;
                let stem = file_label(&row.label);
                save_training(&outcome, &dir.join(format!("{stem}.itnm")), &dir.join(format!("loss_{stem}.csv")))?;
                PredictorSource::Model(outcome.model)
            }
            RowPredictor::Oracle(config, mode) => PredictorSource::Oracle { config, mode },
        };
        let inference = InferenceConfig { confidence: row.confidence, ..cfg.inference.clone() };
        let detections = detect_dataset(&test, &source, &inference, cfg)?;
        let poses: Vec<RigidTransform> = detections.iter().map(|d| d.result.pose).collect();
        let results = evaluate_poses(&test, &poses, cfg.inference.plane_size)?;
        let r = ReportRow::new(row.label.clone(), test.plane_class(), &aggregate(&results)?);
        log(&format!("{name} {}: dx {:.3}  dtheta {:.3}", r.model_id, r.dx_mean, r.dtheta_mean));
        report.push(r);
        let starts =
            detections.iter().map(|d| d.result.runs.iter().map(|run| run.trajectory.points[0].pose).collect()).collect();
        inits.push((row.label, starts));
    }

    // Every row must start from the same poses.
    if let Some((first_label, first)) = inits.first() {
        for (label, starts) in &inits[1..] {
            if starts != first {
                return Err(ExperimentError::Data(format!("{label} did not start from the poses used by {first_label}")));
            }
        }
    }
    let path = dir.join("inits.csv");
    let mut wr = csv::Writer::from_path(&path).map_err(|e| ExperimentError::csv(&path, e))?;
    wr.write_record(["model_id", "sample_id", "run_id", "record"]).map_err(|e| ExperimentError::csv(&path, e))?;
    for (label, starts) in &inits {
        for (sample, runs) in test.rows.iter().zip(starts) {
            for (k, pose) in runs.iter().enumerate() {
                wr.write_record([label.as_str(), &sample.sample_id, &k.to_string(), &write_record(pose)])
                    .map_err(|e| ExperimentError::csv(&path, e))?;
            }
        }
    }
    wr.flush().map_err(|e| ExperimentError::io(&path, e))?;
    write_report(&dir.join(REPORT_FILE), &report)?;
    json_file(&dir.join("bench_config.json"), cfg)?;
    Ok(BenchReport { rows: report, dir })
}

/// One row per regression mode, all without class heads.
pub fn rep_bench(cfg: &ExperimentConfig, log: &dyn Fn(&str)) -> Result<BenchReport, ExperimentError> {
    if cfg.oracle.as_ref().is_some_and(|o| o.kind == OracleKind::Noisy) {
        return Err(ExperimentError::Config("rep-bench needs an exact or capped oracle".into()));
    }
    let rows = RegressionMode::ALL
        .into_iter()
        .map(|mode| BenchRow {
            label: mode.to_string(),
            predictor: match &cfg.oracle {
                Some(o) => RowPredictor::Oracle(o.clone(), mode),
                None => RowPredictor::Train(ModelSpec {
                    mode,
                    heads: ClassHeads::NONE,
                    input_mode: HeadsSelection::M1.input_mode(),
                    architecture: cfg.architecture.clone(),
                }),
            },
            confidence: ClassHeads::NONE,
        })
        .collect();
    run_bench(cfg, "rep_bench", rows, log)
}

/// One row per heads selection M1–M4 (and M4+ when `include_triplet`), all in
/// quat mode; each row's class outputs weight its updates.
pub fn conf_bench(cfg: &ExperimentConfig, log: &dyn Fn(&str)) -> Result<BenchReport, ExperimentError> {
    let count = if cfg.include_triplet { 5 } else { 4 };
    let rows = HeadsSelection::ALL[..count]
        .iter()
        .map(|&h| BenchRow {
            label: h.label().to_string(),
            predictor: match &cfg.oracle {
                Some(o) => RowPredictor::Oracle(o.clone(), RegressionMode::Quat),
                None => RowPredictor::Train(ModelSpec {
                    mode: RegressionMode::Quat,
                    heads: h.class_heads(),
                    input_mode: h.input_mode(),
                    architecture: cfg.architecture.clone(),
                }),
            },
            confidence: h.class_heads(),
        })
        .collect();
    run_bench(cfg, "conf_bench", rows, log)
}
