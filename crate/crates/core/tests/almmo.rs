use cfisac_core::almmo::*;
use cfisac_core::channel::{build_scene, sample_channels, sensing_response, ChannelStats, SensingResponse};
use cfisac_core::linalg::{c64, CMat, CVec};
use cfisac_core::metrics::{scnr_rap, sinr_user, Regime, RegimeSpec};
use cfisac_core::rng::{complex_normal, domain, stream, Stream};
use cfisac_core::SystemConfig;
use rand::Rng;

struct Instance {
    config: SystemConfig,
    f: Vec<CVec>,
    sensing: SensingResponse,
}

fn instance(config: SystemConfig, sample: u64) -> Instance {
    let seed = config.seed;
    let scene = build_scene(&config, &mut stream(seed, domain::SCENE, 0)).unwrap();
    let stats = ChannelStats::new(&scene, &config).unwrap();
    let sensing = sensing_response(&scene, &config, &mut stream(seed, domain::SENSING, 0));
    let f = sample_channels(&stats, &mut stream(seed, domain::SAMPLE, sample)).stacked_all();
    Instance { config, f, sensing }
}

fn desk(sample: u64) -> Instance {
    instance(SystemConfig::desk(), sample)
}

fn problem(inst: &Instance, spec: RegimeSpec) -> Lifted {
    Lifted::new(&inst.f, &inst.sensing, inst.config.power_budget(), spec).unwrap()
}

fn specs(kappa: f64) -> Vec<RegimeSpec> {
    vec![
        RegimeSpec::sensing_centric(1.0, kappa),
        RegimeSpec::comm_centric(0.1, kappa),
        RegimeSpec::joint(0.5, kappa),
    ]
}

fn random_point(rows: usize, cols: usize, rng: &mut Stream) -> CMat {
    retract(&CMat::from_fn(rows, cols, |_, _| complex_normal(rng)))
}

fn fd_gradient(p: &Lifted, v: &CMat, mu: &Auxiliary, mult: &Multipliers) -> CMat {
    let h = 1e-6;
    let mut g = CMat::zeros(v.nrows(), v.ncols());
    for r in 0..v.nrows() {
        for c in 0..v.ncols() {
            let mut d = [0.0; 2];
            for (slot, unit) in [c64(1.0), c64(0.0) + num_complex::Complex64::i()]
                .into_iter()
                .enumerate()
            {
                let mut plus = v.clone();
                plus[(r, c)] += unit * h;
                let mut minus = v.clone();
                minus[(r, c)] -= unit * h;
                d[slot] = (cost(p, &plus, mu, mult) - cost(p, &minus, mu, mult)) / (2.0 * h);
            }
            g[(r, c)] = num_complex::Complex64::new(d[0], d[1]);
        }
    }
    g
}

#[test]
fn euclidean_gradient_matches_finite_differences() {
    let mut rng = stream(21, domain::TRIAL, 0);
    for spec in specs(SystemConfig::desk().kappa()) {
        for trial in 0..20 {
            let inst = desk(trial);
            let p = problem(&inst, spec);
            let v = random_point(p.rows(), p.users() + 1, &mut rng);
            let mu = mu_update(&p, &random_point(p.rows(), p.users() + 1, &mut rng));
            let mut mult = Multipliers::new(p.constraints(), 100.0);
            for l in &mut mult.lambda {
                *l = rng.random_range(0.0..5.0);
            }
            let ev = euclidean_grad(&p, &v, &mu, &mult);
            let fd = fd_gradient(&p, &v, &mu, &mult);
            let rel = (&ev.grad - &fd).norm() / fd.norm().max(1e-12);
            assert!(rel < 1e-5, "{} trial {trial}: rel err {rel:e}", spec.regime);
            assert!((ev.value - cost(&p, &v, &mu, &mult)).abs() < 1e-12 * ev.value.abs().max(1.0));
        }
    }
}

#[test]
fn tangent_projection_and_retraction() {
    let mut rng = stream(22, domain::TRIAL, 0);
    for _ in 0..50 {
        let v = random_point(9, 4, &mut rng);
        let g = CMat::from_fn(9, 4, |_, _| complex_normal(&mut rng) * 3.0);
        let xi = project_tangent(&v, &g);
        assert!(v.dotc(&xi).re.abs() < 1e-10);
        let moved = retract(&(&v - &xi * c64(0.7)));
        assert!((moved.norm_squared() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn accepted_armijo_steps_decrease_the_cost() {
    let mut rng = stream(23, domain::TRIAL, 0);
    let opts = AlmOptions::default();
    let kappa = SystemConfig::desk().kappa();
    let mut accepted = 0;
    for trial in 0..100u64 {
        let spec = specs(kappa)[(trial % 3) as usize];
        let inst = desk(trial);
        let p = problem(&inst, spec);
        let v = random_point(p.rows(), p.users() + 1, &mut rng);
        let mu = mu_update(&p, &v);
        let mult = Multipliers::new(p.constraints(), 100.0);
        let ev = euclidean_grad(&p, &v, &mu, &mult);
        let xi = project_tangent(&v, &ev.grad);
        let out = riemannian_step(&v, ev.value, &xi, 1.0, |c| cost(&p, c, &mu, &mult), &opts);
        if out.accepted {
            accepted += 1;
            assert!(out.cost <= ev.value);
            assert!((out.point.norm_squared() - 1.0).abs() < 1e-12);
        }
    }
    assert!(accepted >= 95, "{accepted}");
}

#[test]
fn mu_update_returns_current_ratios() {
    let inst = desk(3);
    let p = problem(&inst, RegimeSpec::joint(0.5, inst.config.kappa()));
    let mut rng = stream(24, domain::TRIAL, 0);
    let v = random_point(p.rows(), p.users() + 1, &mut rng);
    let mu = mu_update(&p, &v);
    let w = p.beamformer(&v);
    for k in 0..p.users() {
        let oracle = sinr_user(&inst.f, &w, k);
        assert!((mu.comm[k] - oracle).abs() < 1e-10 * oracle.max(1.0));
    }
    for j in 0..p.raps() {
        let oracle = scnr_rap(
            &inst.sensing.g_target[j],
            &inst.sensing.g_clutter[j],
            &w,
            inst.sensing.rx_antennas(),
        );
        assert!((mu.sensing[j] - oracle).abs() < 1e-10 * oracle.max(1.0));
    }

    let mut zero = CMat::zeros(p.rows(), p.users() + 1);
    zero[(p.rows() - 1, 0)] = c64(1.0);
    let mu0 = mu_update(&p, &zero);
    assert!(mu0.comm.iter().chain(&mu0.sensing).all(|&m| m == 0.0));
}

#[test]
fn surrogate_peaks_at_current_ratios() {
    let mut rng = stream(25, domain::TRIAL, 0);
    for trial in 0..10 {
        let inst = desk(trial);
        let p = problem(&inst, RegimeSpec::joint(0.4, inst.config.kappa()));
        let v = random_point(p.rows(), p.users() + 1, &mut rng);
        let t = Terms::new(&p, &v);
        let mu = mu_update(&p, &v);
        let best = fp_surrogate(&p, &t, &mu);
        for idx in 0..(p.users() + p.raps()) {
            for delta in [-0.05, 0.05] {
                let mut m = mu.clone();
                let slot = if idx < p.users() {
                    &mut m.comm[idx]
                } else {
                    &mut m.sensing[idx - p.users()]
                };
                if *slot + delta < 0.0 {
                    continue;
                }
                *slot += delta;
                assert!(fp_surrogate(&p, &t, &m) < best);
            }
        }
    }
}

#[test]
fn lift_keeps_ratios_and_power() {
    let mut rng = stream(26, domain::TRIAL, 0);
    let inst = desk(4);
    let budget = inst.config.power_budget();
    let p = problem(&inst, RegimeSpec::joint(0.5, inst.config.kappa()));
    for scale in [0.3, 1.0] {
        let w = random_start(p.rows() - 1, p.users() + 1, budget * scale, &mut rng);
        let v = p.lift(&w);
        assert!((v.norm_squared() - 1.0).abs() < 1e-12);
        let back = p.beamformer(&v);
        assert!(back.norm_squared() <= budget * (1.0 + 1e-12));
        let t = Terms::new(&p, &v);
        for k in 0..p.users() {
            let oracle = sinr_user(&inst.f, &w, k);
            assert!((t.sinr(k) - oracle).abs() < 1e-9 * oracle.max(1.0), "{} {}", t.sinr(k), oracle);
        }
    }
}

#[test]
fn cost_examples() {
    let inst = desk(5);
    let kappa = inst.config.kappa();
    let mut rng = stream(27, domain::TRIAL, 0);

    // Threshold far below anything achievable: every constraint slack.
    let p = problem(&inst, RegimeSpec::sensing_centric(1e-9, kappa));
    let v = random_point(p.rows(), p.users() + 1, &mut rng);
    let mu = mu_update(&p, &v);
    let mult = Multipliers::new(p.constraints(), 10.0);
    let t = Terms::new(&p, &v);
    assert_eq!(cost(&p, &v, &mu, &mult), fp_objective(&p, &t, &mu));

    // Unreachable threshold: penalty doubles with ζ.
    let p = problem(&inst, RegimeSpec::sensing_centric(50.0, kappa));
    let t = Terms::new(&p, &v);
    let base = fp_objective(&p, &t, &mu);
    let u = constraint_values(&p, &t);
    assert!(u.iter().all(|&x| x > 0.0));
    let pen = |z: f64| cost(&p, &v, &mu, &Multipliers::new(p.constraints(), z)) - base;
    let oracle: f64 = u.iter().map(|x| x * x).sum::<f64>() * 10.0 / 2.0;
    assert!((pen(10.0) - oracle).abs() < 1e-9 * oracle);
    assert!((pen(20.0) - 2.0 * pen(10.0)).abs() < 1e-9 * oracle);
}

#[test]
fn multiplier_update_examples() {
    let opts = AlmOptions::default();
    let m = multiplier_update(&Multipliers { lambda: vec![0.0], zeta: 10.0 }, &[0.1], f64::INFINITY, &opts);
    assert!((m.lambda[0] - 1.0).abs() < 1e-15);
    assert_eq!(m.zeta, 10.0);

    let m = multiplier_update(&Multipliers { lambda: vec![0.5, 2.0], zeta: 10.0 }, &[-1.0, -0.1], 1.0, &opts);
    assert_eq!(m.lambda, vec![0.0, 1.0]);

    // Violation did not shrink enough: penalty doubles, up to the cap.
    let m = multiplier_update(&Multipliers { lambda: vec![0.0], zeta: 10.0 }, &[0.5], 0.5, &opts);
    assert_eq!(m.zeta, 20.0);
    let m = multiplier_update(&Multipliers { lambda: vec![0.0], zeta: 8e5 }, &[0.5], 0.5, &opts);
    assert_eq!(m.zeta, opts.zeta_max);
}

fn monotone(trace: &[TraceRow]) -> bool {
    trace
        .windows(2)
        .all(|w| w[1].objective >= w[0].objective - 1e-3 * w[0].objective.abs())
}

#[test]
fn solve_keeps_the_sphere_and_power_budget() {
    let kappa = SystemConfig::desk().kappa();
    for (i, spec) in specs(kappa).into_iter().enumerate() {
        let inst = desk(40 + i as u64);
        let p = problem(&inst, spec);
        let budget = inst.config.power_budget();
        let w0 = random_start(p.rows() - 1, p.users() + 1, budget, &mut stream(1, domain::INIT, i as u64));
        let sol = solve(&p, &w0, &AlmOptions::default());
        assert!(sol.sphere_drift < 1e-10);
        assert!(sol.w.norm_squared() <= budget + 1e-9);
        assert!(sol.converged, "{}", p.spec.regime);
        assert!(monotone(&sol.trace));
        assert!(sol.trace.len() <= 50);
    }
}

#[test]
fn constrained_solves_end_feasible() {
    let kappa = SystemConfig::desk().kappa();
    for spec in [RegimeSpec::sensing_centric(1.0, kappa), RegimeSpec::comm_centric(0.1, kappa)] {
        for s in 0..5 {
            let inst = desk(60 + s);
            let p = problem(&inst, spec);
            let w0 = random_start(p.rows() - 1, p.users() + 1, inst.config.power_budget(), &mut stream(2, domain::INIT, s));
            let sol = solve(&p, &w0, &AlmOptions::default());
            let last = sol.trace.last().unwrap();
            assert!(last.max_violation < 1e-3, "{} {s}: {}", spec.regime, last.max_violation);
        }
    }
}

#[test]
fn single_user_solution_is_the_matched_filter() {
    let mut config = SystemConfig::desk();
    config.users = 1;
    config.clutters = 0;
    let inst = instance(config, 0);
    let p = problem(&inst, RegimeSpec::from_parts(Regime::Joint, 1.0, 0.0, 0.0, inst.config.kappa()));
    let w0 = random_start(p.rows() - 1, 2, inst.config.power_budget(), &mut stream(3, domain::INIT, 0));
    let sol = solve(&p, &w0, &AlmOptions::default());
    let w1 = sol.w.column(1);
    let f = &inst.f[0];
    let cosine = f.dotc(&w1).norm() / (f.norm() * w1.norm());
    assert!(cosine > 0.99, "{cosine}");
}

#[test]
fn trace_csv_has_expected_header() {
    let inst = desk(7);
    let p = problem(&inst, RegimeSpec::joint(0.5, inst.config.kappa()));
    let w0 = random_start(p.rows() - 1, p.users() + 1, inst.config.power_budget(), &mut stream(4, domain::INIT, 0));
    let sol = solve(&p, &w0, &AlmOptions::default());
    let mut buf = Vec::new();
    sol.write_trace(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("outer_iter,objective,max_violation,grad_norm,seconds"));
    assert_eq!(lines.count(), sol.trace.len());
}
