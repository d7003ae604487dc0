use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cfisac_core::dataset::Dataset;
use cfisac_core::linalg::CMat;
use cfisac_core::metrics::{Regime, RegimeSpec};
use cfisac_harness::csv::{write_file, TradeoffRow};
use cfisac_harness::experiments::{
    bench_runtime, csi_robustness, design_point, estimation_sweep, feasibility_row,
    probe_beams, run_music, solve_almmo, summarize, train_point, tradeoff_sweep, Workload,
};
use cfisac_harness::Settings;
use cfisac_stcib::{Checkpoint, Model};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cfisac", version, about = "Cell-free ISAC beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` settings file; defaults to the desk profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed. `CFISAC_SEED` takes precedence when set.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps and batch solves.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct Design {
    #[arg(long, default_value = "cc")]
    regime: Regime,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Per-user rate floor, bps/Hz.
    #[arg(long, default_value_t = 1.0)]
    vth: f64,
    /// Per-RAP sensing-rate floor, bps/Hz.
    #[arg(long, default_value_t = 0.05)]
    zth: f64,
}

impl Design {
    fn spec(&self, settings: &Settings) -> RegimeSpec {
        RegimeSpec::from_parts(self.regime, self.eta, self.vth, self.zth, settings.system.kappa())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of true and estimated channels.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of samples; defaults to train + validation + test.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train an STCIB model for one design point.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: Design,
        /// Dataset from `gen`; generated on the fly when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a trained model on the test part of a dataset.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Solve test instances with ALM-MO.
    Almmo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: Design,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// MUSIC localization at one RAP.
    Music {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        rap: usize,
        /// Noiseless snapshots.
        #[arg(long)]
        noiseless: bool,
    },
    /// Sensing-centric trade-off over `sc_points`.
    SweepSc {
        #[command(flatten)]
        common: Common,
    },
    /// Communication-centric trade-off over `cc_points`.
    SweepCc {
        #[command(flatten)]
        common: Common,
    },
    /// Joint design over the weights in `joint_points`.
    SweepJoint {
        #[command(flatten)]
        common: Common,
    },
    /// Channel estimation error against pilot length.
    EstimationSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Constraint satisfaction of a trained model on the test set.
    Feasibility {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: Design,
        /// Checkpoint to audit; a model is trained when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Communication rate under corrupted channel estimates.
    CsiRobustness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: Design,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Single-threaded per-instance runtime of STCIB and ALM-MO.
    BenchRuntime {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: Design,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Gen { common, .. }
            | Self::Train { common, .. }
            | Self::Infer { common, .. }
            | Self::Almmo { common, .. }
            | Self::Music { common, .. }
            | Self::SweepSc { common }
            | Self::SweepCc { common }
            | Self::SweepJoint { common }
            | Self::EstimationSweep { common }
            | Self::Feasibility { common, .. }
            | Self::CsiRobustness { common, .. }
            | Self::BenchRuntime { common, .. } => common,
        }
    }
}

fn settings(common: &Common) -> Result<Settings> {
    let mut s = match &common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::desk(),
    };
    if let Some(seed) = common.seed {
        s.system.seed = seed;
    }
    if let Ok(v) = std::env::var("CFISAC_SEED") {
        s.system.seed = v
            .trim()
            .parse()
            .with_context(|| format!("CFISAC_SEED = `{v}` is not an integer"))?;
    }
    Ok(s)
}

fn out_file(common: &Common, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    Ok(common.out.join(name))
}

fn workload(settings: &Settings, data: Option<&Path>) -> Result<Workload> {
    match data {
        None => Workload::generate(settings),
        Some(p) => {
            let all = Dataset::read(p).with_context(|| format!("reading {}", p.display()))?;
            Workload::from_dataset(&all, settings)
        }
    }
}

fn load_or_train(settings: &Settings, spec: RegimeSpec, path: Option<&Path>, work: &Workload) -> Result<Model> {
    match path {
        Some(p) => {
            let ck = Checkpoint::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ck.model)
        }
        None => {
            let (model, report) = train_point(settings, work, spec)?;
            eprintln!(
                "trained {} epochs, best validation loss {:.6} at epoch {}",
                report.epochs.len(),
                report.best_val_loss,
                report.best_epoch
            );
            Ok(model)
        }
    }
}

fn sweep(common: &Common, regime: Regime) -> Result<()> {
    let s = settings(common)?;
    let work = Workload::generate(&s)?;
    let points = tradeoff_sweep(&s, &work, regime)?;
    let rows: Vec<TradeoffRow> = points.iter().flat_map(|p| p.rows()).collect();
    let path = out_file(common, &format!("tradeoff_{regime}.csv"))?;
    write_file(&rows, &path)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common().clone();
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Gen { common, samples } => {
            let s = settings(&common)?;
            let n = samples.unwrap_or(s.split.total());
            let ds = Dataset::generate(&s.system, n)?;
            let path = out_file(&common, "dataset.bin")?;
            ds.write(&path)?;
            println!("wrote {} ({n} samples)", path.display());
        }
        Command::Train { common, design, data } => {
            let s = settings(&common)?;
            let work = workload(&s, data.as_deref())?;
            let spec = design.spec(&s);
            let (model, report) = train_point(&s, &work, spec)?;
            report.write_csv(BufWriter::new(File::create(out_file(&common, "train_log.csv")?)?))?;
            let ck = Checkpoint {
                model,
                regime: spec,
                seed: s.system.seed,
                epoch: report.best_epoch,
                val_loss: report.best_val_loss,
            };
            let path = out_file(&common, "model.ckpt")?;
            ck.write(&path)?;
            println!(
                "wrote {} (best epoch {}, validation loss {:.6})",
                path.display(),
                report.best_epoch,
                report.best_val_loss
            );
        }
        Command::Infer { common, model, data } => {
            let s = settings(&common)?;
            let ck = Checkpoint::read(&model).with_context(|| format!("reading {}", model.display()))?;
            let work = workload(&s, data.as_deref())?;
            let beams = ck.model.infer(&work.test.f_hat, s.system.power_budget())?;
            let sum = summarize(&work.test, &beams, &ck.regime);
            write_file(&sum.samples, &out_file(&common, "infer.csv")?)?;
            println!(
                "R_s {:.4}  R_c {:.4}  feasible {:.3}",
                sum.r_s, sum.r_c, sum.feasible_frac
            );
        }
        Command::Almmo { common, design, data } => {
            let s = settings(&common)?;
            let work = workload(&s, data.as_deref())?;
            let spec = design.spec(&s);
            let sols = solve_almmo(&work.test, spec, s.almmo_instances)?;
            if let Some(first) = sols.first() {
                first.write_trace(BufWriter::new(File::create(out_file(&common, "almmo_trace.csv")?)?))?;
            }
            let w: Vec<CMat> = sols.into_iter().map(|x| x.w).collect();
            let sum = summarize(&work.test, &w, &spec);
            write_file(&sum.samples, &out_file(&common, "almmo.csv")?)?;
            println!(
                "R_s {:.4}  R_c {:.4}  feasible {:.3}",
                sum.r_s, sum.r_c, sum.feasible_frac
            );
        }
        Command::Music { common, rap, noiseless } => {
            let s = settings(&common)?;
            let w = probe_beams(&s.system);
            let run = run_music(&s.system, &w, rap, !noiseless)?;
            run.result
                .write_csv(BufWriter::new(File::create(out_file(&common, "music_spectrum.csv")?)?))?;
            println!(
                "target ({:.2}°, {:.2}°)  RMSE {:.3}°",
                run.truth.0, run.truth.1, run.rmse
            );
            let mut out = std::io::stdout().lock();
            for p in &run.result.peaks {
                if writeln!(out, "peak ({:.1}°, {:.1}°)  {:.3e}", p.azimuth, p.elevation, p.value).is_err() {
                    break;
                }
            }
        }
        Command::SweepSc { common } => sweep(&common, Regime::SensingCentric)?,
        Command::SweepCc { common } => sweep(&common, Regime::CommCentric)?,
        Command::SweepJoint { common } => sweep(&common, Regime::Joint)?,
        Command::EstimationSweep { common } => {
            let s = settings(&common)?;
            let rows = estimation_sweep(&s)?;
            let path = out_file(&common, "estimation.csv")?;
            write_file(&rows, &path)?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
        Command::Feasibility { common, design, model } => {
            let s = settings(&common)?;
            let work = Workload::generate(&s)?;
            let spec = design.spec(&s);
            let m = load_or_train(&s, spec, model.as_deref(), &work)?;
            let beams = m.infer(&work.test.f_hat, s.system.power_budget())?;
            let sum = summarize(&work.test, &beams, &spec);
            write_file(&sum.samples, &out_file(&common, "feasibility_samples.csv")?)?;
            let row = feasibility_row(design_point(&spec), &sum);
            write_file(std::slice::from_ref(&row), &out_file(&common, "feasibility.csv")?)?;
            println!(
                "{}: feasibility {:.3}, mean violation {:.4}, worst {:.4}",
                row.design_point, row.feasibility_rate, row.avg_violation, row.worst_violation
            );
        }
        Command::CsiRobustness { common, design, model } => {
            let s = settings(&common)?;
            let work = Workload::generate(&s)?;
            let m = load_or_train(&s, design.spec(&s), model.as_deref(), &work)?;
            let rows = csi_robustness(&s, &m)?;
            let path = out_file(&common, "csi.csv")?;
            write_file(&rows, &path)?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
        Command::BenchRuntime { common, design, model } => {
            let s = settings(&common)?;
            let work = Workload::generate(&s)?;
            let spec = design.spec(&s);
            let m = load_or_train(&s, spec, model.as_deref(), &work)?;
            let rows = bench_runtime(&s, &m, &work.test, spec)?;
            let path = out_file(&common, "runtime.csv")?;
            write_file(&rows, &path)?;
            let ratio = rows[0].mean_seconds / rows[1].mean_seconds;
            println!("wrote {}  (STCIB / ALM-MO = {:.4})", path.display(), ratio);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
