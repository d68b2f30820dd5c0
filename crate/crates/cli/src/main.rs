//! `itn`: phantom generation, training, detection, evaluation and the
//! comparison benches.
//!
//! Exit status: 0 success, 2 configuration error, 3 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use itn_core::experiment::{
    conf_bench, detect, eval, phantom_gen, rep_bench, train_model, ExperimentConfig, ExperimentError, HeadsSelection,
    OracleConfig, OracleKind,
};
use itn_core::metrics::ReportRow;
use itn_core::predictor::RegressionMode;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const OUT_DIR_ENV: &str = "ITN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "itn", version, about = "Iterative plane detection in 3D volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a phantom dataset (volumes, ground-truth records, manifest).
    PhantomGen,
    /// Train a regressor on the training dataset.
    Train,
    /// Detect the plane in every test volume.
    Detect,
    /// Score detections against ground truth.
    Eval,
    /// Compare the four transformation representations.
    RepBench,
    /// Compare class-probability heads M1–M4 (M4+ with --include-triplet).
    ConfBench,
}

/// Flags override the config file.
#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output root; falls back to the config, then $ITN_OUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// quat, euler, matrix or anchors.
    #[arg(long, global = true)]
    mode: Option<RegressionMode>,
    /// M1, M2, M3, M4 or M4+.
    #[arg(long, global = true)]
    heads: Option<HeadsSelection>,
    /// Use a ground-truth oracle instead of a model.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "exact")]
    oracle: Option<OracleKind>,
    /// Write every sampled plane as PGM.
    #[arg(long, global = true)]
    dump_planes: bool,
    #[arg(long, global = true)]
    train_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    test_dir: Option<PathBuf>,
    /// Model checkpoint path.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Directory holding detections.csv for eval.
    #[arg(long, global = true)]
    detections_dir: Option<PathBuf>,
    /// Number of phantoms to generate.
    #[arg(long, global = true)]
    count: Option<usize>,
    /// Training steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Inference iterations per run.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Random initializations per volume.
    #[arg(long, global = true)]
    inits: Option<usize>,
    #[arg(long, global = true)]
    model_id: Option<String>,
    /// Add the M4+ row to conf-bench.
    #[arg(long, global = true)]
    include_triplet: bool,
}

impl Common {
    fn apply(self, cfg: &mut ExperimentConfig, env_out: Option<PathBuf>) {
        let c = self;
        if let Some(v) = c.seed {
            cfg.seed = v;
        }
        if let Some(v) = c.mode {
            cfg.mode = Some(v);
        }
        if let Some(v) = c.heads {
            cfg.heads = Some(v);
        }
        if let Some(kind) = c.oracle {
            cfg.oracle = Some(OracleConfig { kind, ..cfg.oracle.clone().unwrap_or_default() });
        }
        cfg.dump_planes |= c.dump_planes;
        cfg.include_triplet |= c.include_triplet;
        if let Some(v) = c.count {
            cfg.phantom_count = v;
        }
        if let Some(v) = c.steps {
            cfg.train.steps = v;
        }
        if let Some(v) = c.iterations {
            cfg.inference.iterations = v;
        }
        if let Some(v) = c.inits {
            cfg.inference.init_count = v;
        }
        if let Some(v) = c.model_id {
            cfg.model_id = Some(v);
        }
        let paths = &mut cfg.paths;
        paths.output_dir = c.out.or(paths.output_dir.take()).or(env_out);
        paths.train_dir = c.train_dir.or(paths.train_dir.take());
        paths.test_dir = c.test_dir.or(paths.test_dir.take());
        paths.model = c.model.or(paths.model.take());
        paths.detections_dir = c.detections_dir.or(paths.detections_dir.take());
    }
}

fn print_rows(rows: &[ReportRow]) {
    println!("{:<10} {:<10} {:>4} {:>16} {:>16} {:>14} {:>14}", "model", "class", "n", "dx", "dtheta", "psnr", "ssim");
    for r in rows {
        println!(
            "{:<10} {:<10} {:>4} {:>7.3} ± {:<6.3} {:>7.3} ± {:<6.3} {:>6.2} ± {:<5.2} {:>6.4} ± {:<5.4}",
            r.model_id,
            r.plane_class,
            r.n,
            r.dx_mean,
            r.dx_std,
            r.dtheta_mean,
            r.dtheta_std,
            r.psnr_mean,
            r.psnr_std,
            r.ssim_mean,
            r.ssim_std
        );
    }
}

fn run(command: Command, cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    let log = |msg: &str| eprintln!("{msg}");
    match command {
        Command::PhantomGen => {
            let dir = phantom_gen(cfg, &log)?;
            println!("{}", dir.display());
        }
        Command::Train => {
            let r = train_model(cfg, &log)?;
            if let Some(last) = r.final_loss {
                println!("final loss {:.6} after {} steps", last.loss.total, last.step + 1);
            }
            println!("model written to {}", r.model_path.display());
        }
        Command::Detect => {
            let r = detect(cfg, &log)?;
            println!(
                "{}: detected {} planes ({} low-confidence); wall time per plane {:.3} s",
                r.model_id, r.count, r.low_confidence, r.mean_seconds
            );
        }
        Command::Eval => print_rows(&[eval(cfg, &log)?]),
        Command::RepBench => print_rows(&rep_bench(cfg, &log)?.rows),
        Command::ConfBench => print_rows(&conf_bench(cfg, &log)?.rows),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.common.config {
        Some(path) => match ExperimentConfig::from_file(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => ExperimentConfig::default(),
    };
    if cli.common.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Some(jobs) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let env_out = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    cli.common.apply(&mut cfg, env_out);
    match run(cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
