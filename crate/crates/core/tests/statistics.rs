//! Monte-Carlo checks of the channel, pilot and estimation models.

use cfisac_core::channel::{build_scene, sample_channels, ChannelSet, ChannelStats};
use cfisac_core::estimation::*;
use cfisac_core::linalg::{c64, CMat, CVec};
use cfisac_core::rng::{complex_normal, domain, stream};
use cfisac_core::SystemConfig;
use num_complex::Complex64;

const DRAWS: usize = 10_000;

fn full_stats() -> (SystemConfig, ChannelStats) {
    let config = SystemConfig::full();
    let scene = build_scene(&config, &mut stream(config.seed, domain::SCENE, 0)).unwrap();
    let stats = ChannelStats::new(&scene, &config).unwrap();
    (config, stats)
}

fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

fn rel_frobenius(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn channel_mean_and_covariance_match_the_model() {
    let (_, stats) = full_stats();
    let (i, k) = (1, 2);
    let c = &stats.los[i][k];
    let m = c.len();
    let mut rng = stream(31, domain::TRIAL, 0);
    let mut mean = CVec::zeros(m);
    let mut cov = CMat::zeros(m, m);
    for _ in 0..DRAWS {
        let h = &sample_channels(&stats, &mut rng).h[i][k];
        mean += h;
        let d = h - c;
        cov += outer(&d, &d);
    }
    mean /= c64(DRAWS as f64);
    cov /= c64(DRAWS as f64);

    let expected = stats.covariance(i, k);
    // Each entry of the sample mean has standard deviation √(e/N).
    let sigma = (stats.scattered[i][k] / DRAWS as f64).sqrt();
    for (a, b) in mean.iter().zip(c.iter()) {
        assert!((a - b).norm() < 3.0 * sigma * std::f64::consts::SQRT_2);
    }
    assert!(rel_frobenius(&cov, &expected) < 0.05, "{}", rel_frobenius(&cov, &expected));
}

#[test]
fn received_pilot_noise_is_unit_variance() {
    let (config, stats) = full_stats();
    let book = make_pilots(config.users, 8).unwrap();
    let energy = pilot_energy(config.pilot_snr(), 8, config.users);
    let channels = sample_channels(&stats, &mut stream(32, domain::SAMPLE, 0));
    let clean = receive_pilots(&channels, &book, energy, false, &mut stream(0, 0, 0));

    let mut rng = stream(32, domain::TRIAL, 0);
    let shape = clean[0].shape();
    let mut mean = CMat::zeros(shape.0, shape.1);
    let mut var = 0.0;
    for _ in 0..DRAWS {
        let y = &receive_pilots(&channels, &book, energy, true, &mut rng)[0];
        mean += y;
        var += (y - &clean[0]).norm_squared();
    }
    mean /= c64(DRAWS as f64);
    var /= (DRAWS * shape.0 * shape.1) as f64;
    assert!((var - 1.0).abs() < 0.05, "{var}");
    let band = 3.0 * (1.0 / DRAWS as f64).sqrt();
    assert!(mean.iter().zip(clean[0].iter()).all(|(a, b)| (a - b).norm() < band * 1.5));
}

struct ErrorSample {
    err: Vec<CVec>,
    h_hat: Vec<CVec>,
    c_eps: CMat,
    mean: CVec,
}

fn estimation_errors(tau_p: usize, draws: usize) -> ErrorSample {
    let (config, stats) = full_stats();
    let (i, k) = (0, 1);
    let book = make_pilots(config.users, tau_p).unwrap();
    let energy = pilot_energy(config.pilot_snr(), tau_p, config.users);
    let mut rng = stream(33, domain::TRIAL, tau_p as u64);
    let mut err = Vec::with_capacity(draws);
    let mut h_hat = Vec::with_capacity(draws);
    let mut c_eps = None;
    for _ in 0..draws {
        let channels: ChannelSet = sample_channels(&stats, &mut rng);
        let est = estimate_channels(&stats, &channels, &book, energy, &mut rng).unwrap();
        let link = &est.links[i][k];
        err.push(&channels.h[i][k] - &link.h_hat);
        h_hat.push(link.h_hat.clone());
        c_eps.get_or_insert_with(|| link.c_eps.clone());
    }
    ErrorSample {
        err,
        h_hat,
        c_eps: c_eps.unwrap(),
        mean: stats.los[i][k].clone(),
    }
}

#[test]
fn estimation_error_covariance_matches_c_eps() {
    let s = estimation_errors(8, DRAWS);
    let m = s.mean.len();
    let mut cov = CMat::zeros(m, m);
    for e in &s.err {
        cov += outer(e, e);
    }
    cov /= c64(DRAWS as f64);
    assert!(rel_frobenius(&cov, &s.c_eps) < 0.05, "{}", rel_frobenius(&cov, &s.c_eps));
}

#[test]
fn estimates_are_unbiased_and_orthogonal_to_their_errors() {
    let s = estimation_errors(8, DRAWS);
    let m = s.mean.len();
    let n = DRAWS as f64;
    let mut mean = CVec::zeros(m);
    for h in &s.h_hat {
        mean += h;
    }
    mean /= c64(n);
    let scale = s.c_eps.trace().re.max(1e-30).sqrt();
    assert!((&mean - &s.mean).norm() < 0.1 * s.mean.norm().max(scale));

    let mut cross = CMat::zeros(m, m);
    let mut err_mean = CVec::zeros(m);
    for (e, h) in s.err.iter().zip(&s.h_hat) {
        cross += outer(e, &(h - &mean));
        err_mean += e;
    }
    cross /= c64(n);
    err_mean /= c64(n);
    let hat_spread: f64 = s.h_hat.iter().map(|h| (h - &mean).norm_squared()).sum::<f64>() / n;
    let err_spread: f64 = s.err.iter().map(|e| e.norm_squared()).sum::<f64>() / n;
    let bound = 5.0 * (hat_spread * err_spread / n).sqrt();
    assert!(cross.norm() < bound, "{} vs {}", cross.norm(), bound);
    assert!(err_mean.norm() < 5.0 * (err_spread / n).sqrt());
}

#[test]
fn error_norm_shrinks_with_longer_pilots() {
    let mut previous = f64::INFINITY;
    for tau_p in [4, 8, 16, 32] {
        let s = estimation_errors(tau_p, 2000);
        let avg = s.err.iter().map(|e| e.norm()).sum::<f64>() / s.err.len() as f64;
        assert!(avg <= previous, "tau_p {tau_p}: {avg} > {previous}");
        previous = avg;
    }
}

#[test]
fn corrupted_csi_has_the_requested_variance() {
    let g = Complex64::new(0.3, -1.1);
    let chi = 0.5;
    let mut rng = stream(34, domain::TRIAL, 0);
    let draws: Vec<Complex64> = (0..DRAWS).map(|_| corrupt_csi(g, chi, &mut rng)).collect();
    let mean = draws.iter().sum::<Complex64>() / DRAWS as f64;
    let var = draws.iter().map(|d| (d - g).norm_sqr()).sum::<f64>() / DRAWS as f64;
    let target = chi * g.norm_sqr();
    assert!((var - target).abs() < 0.05 * target, "{var} vs {target}");
    assert!((mean - g).norm() < 3.0 * (target / DRAWS as f64).sqrt() * std::f64::consts::SQRT_2);

    let v = CVec::from_fn(6, |_, _| complex_normal(&mut rng));
    assert_eq!(corrupt_vector(&v, 0.0, &mut rng), v);
}
