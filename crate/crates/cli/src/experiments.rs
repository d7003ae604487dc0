//! Experiment drivers shared by the command line and the acceptance suite.
//!
//! Every method optimizes on estimated channels; reported rates and
//! constraint checks use the true channels.

use std::time::Instant;

use anyhow::{bail, Result};
use cfisac_core::almmo::{random_start, solve, AlmOptions, Lifted, Solution};
use cfisac_core::channel::{build_scene, sample_channels, sensing_response, ChannelStats, Scene};
use cfisac_core::dataset::Dataset;
use cfisac_core::estimation::{corrupt_vector, estimate_channels, make_pilots, pilot_energy};
use cfisac_core::linalg::{c64, CMat, CVec};
use cfisac_core::localization::music::{self, AngleAxis, MusicResult};
use cfisac_core::metrics::{check_constraints, evaluate, Regime, RegimeSpec};
use cfisac_core::rng::{complex_normal, derive_seed, domain, stream};
use cfisac_core::SystemConfig;
use cfisac_stcib::{train, Architecture, Model, TrainReport, TrainSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::csv::{
    CsiRow, EstimationRow, FeasibilityRow, RuntimeRow, SampleRow, TradeoffRow,
};
use crate::settings::Settings;

/// Train, validation and test sets drawn from one root seed.
pub struct Workload {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Workload {
    pub fn generate(settings: &Settings) -> Result<Self> {
        let s = settings.split;
        let all = Dataset::generate(&settings.system, s.total())?;
        Self::from_dataset(&all, settings)
    }

    pub fn from_dataset(all: &Dataset, settings: &Settings) -> Result<Self> {
        let s = settings.split;
        let (train, val, test) = all.split(s.train, s.val, s.test)?;
        Ok(Self { train, val, test })
    }
}

pub fn init_model(config: &SystemConfig, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain::INIT, 0));
    Ok(Model::init(Architecture::for_config(config)?, &mut rng)?)
}

/// Fresh model trained on `work` for one design point.
pub fn train_point(
    settings: &Settings,
    work: &Workload,
    regime: RegimeSpec,
) -> Result<(Model, TrainReport)> {
    let seed = settings.system.seed;
    let mut model = init_model(&settings.system, seed)?;
    let spec: TrainSpec = settings.train_spec(regime, seed);
    let report = train(&mut model, &work.train, &work.val, &spec)?;
    Ok((model, report))
}

/// ALM-MO on the first `instances` samples of `data`, in parallel over
/// samples. Sample `s` starts from its own seeded random point.
pub fn solve_almmo(data: &Dataset, spec: RegimeSpec, instances: usize) -> Result<Vec<Solution>> {
    let n = instances.min(data.len());
    (0..n)
        .into_par_iter()
        .map(|s| solve_one(data, spec, s))
        .collect()
}

fn solve_one(data: &Dataset, spec: RegimeSpec, s: usize) -> Result<Solution> {
    let cfg = &data.config;
    let budget = cfg.power_budget();
    let p = Lifted::new(&data.f_hat[s], &data.sensing, budget, spec)?;
    let w0 = random_start(
        cfg.stacked_dim(),
        cfg.users + 1,
        budget,
        &mut stream(cfg.seed, domain::TRIAL, s as u64),
    );
    Ok(solve(&p, &w0, &AlmOptions::default()))
}

/// True-channel rates and constraint status of `beams[s]` on sample `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// Mean sensing sum rate.
    pub r_s: f64,
    /// Mean communication sum rate.
    pub r_c: f64,
    pub feasible_frac: f64,
    /// Mean over samples of the per-sample mean shortfall.
    pub mean_violation: f64,
    pub worst_violation: f64,
    pub samples: Vec<SampleRow>,
}

pub fn summarize(data: &Dataset, beams: &[CMat], spec: &RegimeSpec) -> Summary {
    let cfg = &data.config;
    let samples: Vec<SampleRow> = beams
        .iter()
        .enumerate()
        .map(|(s, w)| {
            let r = evaluate(&data.f_true[s], &data.sensing, w, cfg.kappa());
            let c = check_constraints(spec, &r, w, cfg.power_budget());
            SampleRow {
                sample: s,
                r_s: r.sensing_sum(),
                r_c: r.comm_sum(),
                feasible: c.feasible,
                mean_violation: c.mean_violation(),
                max_violation: c.max_violation(),
            }
        })
        .collect();
    let n = samples.len().max(1) as f64;
    Summary {
        r_s: samples.iter().map(|r| r.r_s).sum::<f64>() / n,
        r_c: samples.iter().map(|r| r.r_c).sum::<f64>() / n,
        feasible_frac: samples.iter().filter(|r| r.feasible).count() as f64 / n,
        mean_violation: samples.iter().map(|r| r.mean_violation).sum::<f64>() / n,
        worst_violation: samples.iter().map(|r| r.max_violation).fold(0.0, f64::max),
        samples,
    }
}

pub fn feasibility_row(design_point: String, s: &Summary) -> FeasibilityRow {
    FeasibilityRow {
        design_point,
        feasibility_rate: s.feasible_frac,
        avg_violation: s.mean_violation,
        worst_violation: s.worst_violation,
    }
}

pub fn design_point(spec: &RegimeSpec) -> String {
    match spec.regime {
        Regime::SensingCentric => format!("sc vartheta_th={}", spec.vartheta_th),
        Regime::CommCentric => format!("cc zeta_th={}", spec.zeta_th),
        Regime::Joint => format!("joint eta={}", spec.eta),
    }
}

/// Both methods at one sweep point.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub point: f64,
    pub stcib: Summary,
    pub almmo: Summary,
    pub model: Model,
    pub report: TrainReport,
}

impl SweepPoint {
    pub fn rows(&self) -> [TradeoffRow; 2] {
        let row = |method, s: &Summary| TradeoffRow {
            threshold: self.point,
            method,
            r_s: s.r_s,
            r_c: s.r_c,
            feasible_frac: s.feasible_frac,
        };
        [row("stcib", &self.stcib), row("almmo", &self.almmo)]
    }
}

/// One trained STCIB and one ALM-MO run per sweep point on a shared test set.
pub fn tradeoff_sweep(settings: &Settings, work: &Workload, regime: Regime) -> Result<Vec<SweepPoint>> {
    let budget = settings.system.power_budget();
    settings
        .points(regime)
        .par_iter()
        .map(|&point| {
            let spec = settings.regime_at(regime, point);
            let (model, report) = train_point(settings, work, spec)?;
            let beams = model.infer(&work.test.f_hat, budget)?;
            let stcib = summarize(&work.test, &beams, &spec);
            let sols = solve_almmo(&work.test, spec, settings.almmo_instances)?;
            let w: Vec<CMat> = sols.into_iter().map(|s| s.w).collect();
            let almmo = summarize(&work.test, &w, &spec);
            Ok(SweepPoint {
                point,
                stcib,
                almmo,
                model,
                report,
            })
        })
        .collect()
}

/// Mean per-user `‖f_k − f̂_k‖` for every `(K, τ_p)` cell. Each realization
/// draws a fresh scene, channel and pilot noise.
pub fn estimation_sweep(settings: &Settings) -> Result<Vec<EstimationRow>> {
    let mut cells = Vec::new();
    for &k in &settings.k_list {
        for &tau in &settings.tau_p_list {
            if tau < k {
                bail!("tau_p = {tau} cannot carry {k} orthogonal pilots");
            }
            cells.push((k, tau));
        }
    }
    let base = &settings.system;
    let n = settings.realizations;
    cells
        .par_iter()
        .map(|&(k, tau)| {
            let mut cfg = base.clone();
            cfg.users = k;
            cfg.tau_p = tau;
            cfg.validate()?;
            let book = make_pilots(k, tau)?;
            let energy = pilot_energy(cfg.pilot_snr(), tau, k);
            let mut total = 0.0;
            for r in 0..n as u64 {
                let scene = build_scene(&cfg, &mut stream(cfg.seed, domain::SCENE, r))?;
                let stats = ChannelStats::new(&scene, &cfg)?;
                let h = sample_channels(&stats, &mut stream(cfg.seed, domain::SAMPLE, r));
                let est = estimate_channels(&stats, &h, &book, energy, &mut stream(cfg.seed, domain::PILOT, r))?;
                let (f, f_hat) = (h.stacked_all(), est.stacked_all());
                total += f.iter().zip(&f_hat).map(|(a, b)| (a - b).norm()).sum::<f64>() / k as f64;
            }
            Ok(EstimationRow {
                users: k,
                tau_p: tau,
                avg_error_norm: total / n as f64,
            })
        })
        .collect()
}

/// Communication sum rate of `model` when its input channels are corrupted
/// with relative error `χ`, for test sets drawn at fixed Rician factors.
pub fn csi_robustness(settings: &Settings, model: &Model) -> Result<Vec<CsiRow>> {
    let mut rows = Vec::new();
    for &rician in &settings.rician_list {
        let mut cfg = settings.system.clone();
        cfg.rician_min = rician;
        cfg.rician_max = rician;
        let test = Dataset::generate(&cfg, settings.split.test)?;
        for &chi in &settings.chi_list {
            let corrupted: Vec<Vec<CVec>> = test
                .f_hat
                .iter()
                .enumerate()
                .map(|(s, f)| {
                    let mut rng = stream(cfg.seed, domain::CSI, s as u64);
                    f.iter().map(|v| corrupt_vector(v, chi, &mut rng)).collect()
                })
                .collect();
            let beams = model.infer(&corrupted, cfg.power_budget())?;
            let r_c = beams
                .iter()
                .zip(&test.f_true)
                .map(|(w, f)| evaluate(f, &test.sensing, w, cfg.kappa()).comm_sum())
                .sum::<f64>()
                / beams.len() as f64;
            rows.push(CsiRow { chi, rician, r_c });
        }
    }
    Ok(rows)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-instance wall clock of STCIB inference and ALM-MO on the calling
/// thread. The first few instances of each method are run once untimed.
pub fn bench_runtime(
    settings: &Settings,
    model: &Model,
    test: &Dataset,
    spec: RegimeSpec,
) -> Result<Vec<RuntimeRow>> {
    let n = settings.runtime_instances.min(test.len());
    let budget = settings.system.power_budget();
    let warmup = 3.min(n);
    for s in 0..warmup {
        model.infer(&test.f_hat[s..=s], budget)?;
        solve_one(test, spec, s)?;
    }
    let mut stcib = Vec::with_capacity(n);
    let mut almmo = Vec::with_capacity(n);
    for s in 0..n {
        let t = Instant::now();
        model.infer(&test.f_hat[s..=s], budget)?;
        stcib.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        solve_one(test, spec, s)?;
        almmo.push(t.elapsed().as_secs_f64());
    }
    let cfg = &settings.system;
    let mt = format!("{}x{}", cfg.tx_rows, cfg.tx_cols);
    let row = |method, xs: &[f64]| {
        let (mean_seconds, std_seconds) = mean_std(xs);
        RuntimeRow {
            method,
            n_users: cfg.users,
            mt_config: mt.clone(),
            mean_seconds,
            std_seconds,
        }
    };
    Ok(vec![row("stcib", &stcib), row("almmo", &almmo)])
}

/// MUSIC on `τ_c − τ_p` snapshots at one RAP for the beams `w`, with the
/// true target direction (degrees) and the localization error of the
/// nearest peak.
pub struct MusicRun {
    pub result: MusicResult,
    pub truth: (f64, f64),
    pub rmse: f64,
}

pub fn scene(config: &SystemConfig) -> Result<Scene> {
    Ok(build_scene(config, &mut stream(config.seed, domain::SCENE, 0))?)
}

/// Random Gaussian beams with one column per stream (at least one per
/// source), scaled to the power budget.
pub fn probe_beams(config: &SystemConfig) -> CMat {
    let cols = (config.users + 1).max(config.clutters + 1);
    let mut rng = stream(config.seed, domain::TRIAL, u64::MAX);
    let w = CMat::from_fn(config.stacked_dim(), cols, |_, _| complex_normal(&mut rng));
    let scale = config.power_budget().sqrt() / w.norm();
    w * c64(scale)
}

pub fn run_music(config: &SystemConfig, w: &CMat, rap: usize, noise: bool) -> Result<MusicRun> {
    let sc = scene(config)?;
    let sensing = sensing_response(&sc, config, &mut stream(config.seed, domain::SENSING, 0));
    if rap >= sensing.n_rx_aps() {
        bail!("RAP {rap} does not exist ({} receive APs)", sensing.n_rx_aps());
    }
    let tau = config.tau_c.saturating_sub(config.tau_p);
    let y = music::snapshots(&sensing, rap, w, tau, noise, &mut stream(config.seed, domain::TRIAL, rap as u64));
    let grid = AngleAxis::default();
    let result = music::spectrum(&y, config.clutters + 1, config.rx_rows, config.rx_cols, grid, grid)?;
    let link = sc.rx_target[rap];
    let truth = (link.psi.to_degrees(), link.theta.to_degrees());
    let rmse = music::nearest_peak(&result.peaks, truth)
        .map_or(f64::INFINITY, |p| music::rmse_unambiguous(truth, (p.azimuth, p.elevation)));
    Ok(MusicRun { result, truth, rmse })
}
