//! Deployment geometry, spatially correlated Rician channels and radar
//! response matrices.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::config::{db_to_linear, SystemConfig};
use crate::error::{CoreError, Result};
use crate::linalg::{c64, psd_sqrt, vstack, CMat, CVec, PSD_TOL};
use crate::rng::{complex_normal, Stream};

pub type Point = [f64; 3];

/// Geometry of one AP→node link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    /// Azimuth in radians.
    pub psi: f64,
    /// Angle from the array normal (pointing down) in radians.
    pub theta: f64,
    pub distance: f64,
}

impl Link {
    pub fn between(ap: Point, node: Point) -> Self {
        let dx = node[0] - ap[0];
        let dy = node[1] - ap[1];
        let dz = node[2] - ap[2];
        let horizontal = dx.hypot(dy);
        Self {
            psi: dy.atan2(dx),
            theta: horizontal.atan2(-dz),
            distance: (horizontal * horizontal + dz * dz).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub tx_aps: Vec<Point>,
    pub rx_aps: Vec<Point>,
    pub users: Vec<Point>,
    pub target: Point,
    pub clutters: Vec<Point>,
    /// `[i][k]` TAP→user links.
    pub tx_user: Vec<Vec<Link>>,
    /// `[i]` TAP→target.
    pub tx_target: Vec<Link>,
    /// `[i][c]` TAP→clutter.
    pub tx_clutter: Vec<Vec<Link>>,
    /// `[j]` RAP→target.
    pub rx_target: Vec<Link>,
    /// `[j][c]` RAP→clutter.
    pub rx_clutter: Vec<Vec<Link>>,
    /// `[i][k]` Rician factors.
    pub rician: Vec<Vec<f64>>,
    /// `[i][k]` large-scale coefficients, relative to the noise floor.
    pub large_scale: Vec<Vec<f64>>,
}

/// Minimum AP–node separation in metres; closer draws are re-sampled.
pub const MIN_DISTANCE: f64 = 1.0;

/// Linear pathloss `10^(PL(d)/10)` with `PL(d) = L0 − 10·α·log10(d)`.
pub fn pathloss_linear(distance: f64, config: &SystemConfig) -> f64 {
    let pl_db = config.pathloss_ref_db - 10.0 * config.pathloss_exponent * distance.log10();
    db_to_linear(pl_db)
}

/// Large-scale coefficient of a link normalized by the receiver noise floor.
pub fn large_scale_coefficient(distance: f64, config: &SystemConfig) -> f64 {
    pathloss_linear(distance, config) / db_to_linear(config.noise_floor_db)
}

fn ground_point(rng: &mut Stream, config: &SystemConfig, height: f64) -> Point {
    [
        rng.random_range(0.0..config.area_side),
        rng.random_range(0.0..config.area_side),
        height,
    ]
}

fn node_clear_of(rng: &mut Stream, config: &SystemConfig, aps: &[Point]) -> Point {
    loop {
        let p = ground_point(rng, config, config.node_height);
        if aps.iter().all(|a| Link::between(*a, p).distance >= MIN_DISTANCE) {
            return p;
        }
    }
}

pub fn build_scene(config: &SystemConfig, rng: &mut Stream) -> Result<Scene> {
    config.validate()?;
    let tx_aps: Vec<Point> = (0..config.n_tx_aps)
        .map(|_| ground_point(rng, config, config.ap_height))
        .collect();
    let rx_aps: Vec<Point> = (0..config.n_rx_aps)
        .map(|_| ground_point(rng, config, config.ap_height))
        .collect();
    let all_aps: Vec<Point> = tx_aps.iter().chain(&rx_aps).copied().collect();
    let users: Vec<Point> = (0..config.users)
        .map(|_| node_clear_of(rng, config, &all_aps))
        .collect();
    let target = node_clear_of(rng, config, &all_aps);
    let clutters: Vec<Point> = (0..config.clutters)
        .map(|_| node_clear_of(rng, config, &all_aps))
        .collect();
    let rician = (0..config.n_tx_aps)
        .map(|_| {
            (0..config.users)
                .map(|_| {
                    if config.rician_max > config.rician_min {
                        rng.random_range(config.rician_min..=config.rician_max)
                    } else {
                        config.rician_min
                    }
                })
                .collect()
        })
        .collect();
    Ok(Scene::from_positions(
        config, tx_aps, rx_aps, users, target, clutters, rician,
    ))
}

impl Scene {
    /// Derive links and large-scale coefficients from explicit positions.
    pub fn from_positions(
        config: &SystemConfig,
        tx_aps: Vec<Point>,
        rx_aps: Vec<Point>,
        users: Vec<Point>,
        target: Point,
        clutters: Vec<Point>,
        rician: Vec<Vec<f64>>,
    ) -> Self {
        let links = |aps: &[Point], nodes: &[Point]| -> Vec<Vec<Link>> {
            aps.iter()
                .map(|a| nodes.iter().map(|n| Link::between(*a, *n)).collect())
                .collect()
        };
        let tx_user = links(&tx_aps, &users);
        let large_scale = tx_user
            .iter()
            .map(|row| {
                row.iter()
                    .map(|l| large_scale_coefficient(l.distance, config))
                    .collect()
            })
            .collect();
        Self {
            tx_target: tx_aps.iter().map(|a| Link::between(*a, target)).collect(),
            rx_target: rx_aps.iter().map(|a| Link::between(*a, target)).collect(),
            tx_clutter: links(&tx_aps, &clutters),
            rx_clutter: links(&rx_aps, &clutters),
            tx_user,
            large_scale,
            rician,
            tx_aps,
            rx_aps,
            users,
            target,
            clutters,
        }
    }

    /// LoS scale `√(Kς/(K+1))` and scattered power `e = ς/(K+1)` of link `(i,k)`.
    pub fn rician_split(&self, i: usize, k: usize) -> (f64, f64) {
        let kf = self.rician[i][k];
        let s = self.large_scale[i][k];
        ((kf * s / (kf + 1.0)).sqrt(), s / (kf + 1.0))
    }
}

/// Per-axis phase increments of a planar array.
pub fn steering_phase(psi: f64, theta: f64) -> (f64, f64) {
    (PI * psi.cos() * theta.sin(), PI * psi.sin() * theta.sin())
}

/// `vec(b1 b2ᴴ)` with `b_x[m] = exp(−j·m·r_x)`; element `(m1, m2)` sits at
/// index `m1 + m2·M1`.
pub fn planar_steering(psi: f64, theta: f64, m1: usize, m2: usize) -> CVec {
    let (r1, r2) = steering_phase(psi, theta);
    CVec::from_fn(m1 * m2, |idx, _| {
        let a = (idx % m1) as f64;
        let b = (idx / m1) as f64;
        Complex64::from_polar(1.0, -a * r1 + b * r2)
    })
}

/// Element positions of an `m1 × m2` half-wavelength grid in the array plane,
/// ordered like [`planar_steering`].
pub fn element_positions(m1: usize, m2: usize, wavelength: f64) -> Vec<Point> {
    let d = wavelength / 2.0;
    (0..m1 * m2)
        .map(|idx| [(idx % m1) as f64 * d, (idx / m1) as f64 * d, 0.0])
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Isotropic-scattering correlation `sinc(2‖u_m − u_n‖/λ)`, clipped to PSD.
pub fn correlation_matrix(positions: &[Point], wavelength: f64) -> Result<CMat> {
    let n = positions.len();
    let r = CMat::from_fn(n, n, |a, b| {
        let d = (0..3)
            .map(|t| (positions[a][t] - positions[b][t]).powi(2))
            .sum::<f64>()
            .sqrt();
        c64(sinc(2.0 * d / wavelength))
    });
    let min = crate::linalg::min_eigenvalue(&r);
    if min < -PSD_TOL {
        return Err(CoreError::NotPsd(min));
    }
    crate::linalg::clip_to_psd(&r)
}

/// Second-order statistics of every TAP→user channel, fixed per scene.
#[derive(Clone, Debug)]
pub struct ChannelStats {
    /// `[i][k]` LoS mean `c_ik`.
    pub los: Vec<Vec<CVec>>,
    /// `[i][k]` scattered power `e_ik`.
    pub scattered: Vec<Vec<f64>>,
    /// Normalized correlation shared by all links (element-geometry model).
    pub rtilde: CMat,
    /// PSD square root of `A·R̃`.
    pub sqrt_corr: CMat,
    pub antenna_area: f64,
}

impl ChannelStats {
    pub fn new(scene: &Scene, config: &SystemConfig) -> Result<Self> {
        let rtilde = correlation_matrix(
            &element_positions(config.tx_rows, config.tx_cols, config.wavelength),
            config.wavelength,
        )?;
        let sqrt_corr = psd_sqrt(&(&rtilde * c64(config.antenna_area)))?;
        let mut los = Vec::with_capacity(config.n_tx_aps);
        let mut scattered = Vec::with_capacity(config.n_tx_aps);
        for (i, row) in scene.tx_user.iter().enumerate() {
            let mut l = Vec::with_capacity(row.len());
            let mut e = Vec::with_capacity(row.len());
            for (k, link) in row.iter().enumerate() {
                let (amp, ek) = scene.rician_split(i, k);
                l.push(
                    planar_steering(link.psi, link.theta, config.tx_rows, config.tx_cols)
                        * c64(amp),
                );
                e.push(ek);
            }
            los.push(l);
            scattered.push(e);
        }
        Ok(Self {
            los,
            scattered,
            rtilde,
            sqrt_corr,
            antenna_area: config.antenna_area,
        })
    }

    /// Covariance `C_h = e·A·R̃` of link `(i,k)`.
    pub fn covariance(&self, i: usize, k: usize) -> CMat {
        &self.rtilde * c64(self.scattered[i][k] * self.antenna_area)
    }

    pub fn n_tx_aps(&self) -> usize {
        self.los.len()
    }

    pub fn users(&self) -> usize {
        self.los.first().map_or(0, Vec::len)
    }
}

/// One channel realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// `[i][k]`, length `M_T`.
    pub h: Vec<Vec<CVec>>,
}

impl ChannelSet {
    /// Stacked `f_k = [h_1k; …; h_{N_T}k]`.
    pub fn stacked(&self, k: usize) -> CVec {
        let parts: Vec<CVec> = self.h.iter().map(|row| row[k].clone()).collect();
        vstack(&parts)
    }

    pub fn stacked_all(&self) -> Vec<CVec> {
        let users = self.h.first().map_or(0, Vec::len);
        (0..users).map(|k| self.stacked(k)).collect()
    }
}

/// `h_ik = c_ik + √e_ik · L z` with `z ~ CN(0, I)`.
pub fn sample_channels(stats: &ChannelStats, rng: &mut Stream) -> ChannelSet {
    let m = stats.sqrt_corr.nrows();
    let h = stats
        .los
        .iter()
        .zip(&stats.scattered)
        .map(|(los_row, e_row)| {
            los_row
                .iter()
                .zip(e_row)
                .map(|(c, &e)| {
                    let z = CVec::from_fn(m, |_, _| complex_normal(rng));
                    c + &stats.sqrt_corr * z * c64(e.sqrt())
                })
                .collect()
        })
        .collect();
    ChannelSet { h }
}

/// Radar response of the target and clutter at every RAP.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingResponse {
    /// `[j]`, `M_R × N_T·M_T`.
    pub g_target: Vec<CMat>,
    /// `[j][c]`.
    pub g_clutter: Vec<Vec<CMat>>,
    /// `[i][j]`.
    pub alpha_target: Vec<Vec<Complex64>>,
    /// `[c][i][j]`.
    pub alpha_clutter: Vec<Vec<Vec<Complex64>>>,
    /// `[i]` TAP steering towards the target.
    pub a_tx_target: Vec<CVec>,
    /// `[j]` RAP steering towards the target.
    pub a_rx_target: Vec<CVec>,
    pub a_tx_clutter: Vec<Vec<CVec>>,
    pub a_rx_clutter: Vec<Vec<CVec>>,
}

impl SensingResponse {
    pub fn rx_antennas(&self) -> usize {
        self.g_target.first().map_or(0, CMat::nrows)
    }

    pub fn n_rx_aps(&self) -> usize {
        self.g_target.len()
    }
}

/// Reflection amplitude `√(λ²σ²/((4π)³ d_i² d_j²))`, noise-normalized.
pub fn reflection_scale(d_tx: f64, d_rx: f64, rcs: f64, config: &SystemConfig) -> f64 {
    let lambda = config.wavelength;
    let num = lambda * lambda * rcs;
    let den = (4.0 * PI).powi(3) * d_tx * d_tx * d_rx * d_rx;
    (num / den / db_to_linear(config.sensing_noise_floor_db)).sqrt()
}

fn response_matrix(alphas: &[Complex64], a_rx: &CVec, a_tx: &[CVec]) -> CMat {
    let mt = a_tx.first().map_or(0, CVec::len);
    let mut g = CMat::zeros(a_rx.len(), mt * a_tx.len());
    for (i, (al, at)) in alphas.iter().zip(a_tx).enumerate() {
        let block = a_rx * at.adjoint() * *al;
        g.columns_mut(i * mt, mt).copy_from(&block);
    }
    g
}

pub fn sensing_response(
    scene: &Scene,
    config: &SystemConfig,
    rng: &mut Stream,
) -> SensingResponse {
    let (tr, tc, rr, rc) = (config.tx_rows, config.tx_cols, config.rx_rows, config.rx_cols);
    let a_tx_target: Vec<CVec> = scene
        .tx_target
        .iter()
        .map(|l| planar_steering(l.psi, l.theta, tr, tc))
        .collect();
    let a_rx_target: Vec<CVec> = scene
        .rx_target
        .iter()
        .map(|l| planar_steering(l.psi, l.theta, rr, rc))
        .collect();
    let a_tx_clutter: Vec<Vec<CVec>> = (0..scene.clutters.len())
        .map(|c| {
            scene
                .tx_clutter
                .iter()
                .map(|row| planar_steering(row[c].psi, row[c].theta, tr, tc))
                .collect()
        })
        .collect();
    let a_rx_clutter: Vec<Vec<CVec>> = (0..scene.clutters.len())
        .map(|c| {
            scene
                .rx_clutter
                .iter()
                .map(|row| planar_steering(row[c].psi, row[c].theta, rr, rc))
                .collect()
        })
        .collect();

    let alpha_target: Vec<Vec<Complex64>> = scene
        .tx_target
        .iter()
        .map(|lt| {
            scene
                .rx_target
                .iter()
                .map(|lr| {
                    complex_normal(rng)
                        * reflection_scale(lt.distance, lr.distance, config.rcs_target, config)
                })
                .collect()
        })
        .collect();
    let alpha_clutter: Vec<Vec<Vec<Complex64>>> = (0..scene.clutters.len())
        .map(|c| {
            scene
                .tx_clutter
                .iter()
                .map(|lt| {
                    scene
                        .rx_clutter
                        .iter()
                        .map(|lr| {
                            complex_normal(rng)
                                * reflection_scale(
                                    lt[c].distance,
                                    lr[c].distance,
                                    config.rcs_clutter,
                                    config,
                                )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let g_target = (0..scene.rx_aps.len())
        .map(|j| {
            let al: Vec<Complex64> = alpha_target.iter().map(|row| row[j]).collect();
            response_matrix(&al, &a_rx_target[j], &a_tx_target)
        })
        .collect();
    let g_clutter = (0..scene.rx_aps.len())
        .map(|j| {
            (0..scene.clutters.len())
                .map(|c| {
                    let al: Vec<Complex64> =
                        alpha_clutter[c].iter().map(|row| row[j]).collect();
                    response_matrix(&al, &a_rx_clutter[c][j], &a_tx_clutter[c])
                })
                .collect()
        })
        .collect();

    SensingResponse {
        g_target,
        g_clutter,
        alpha_target,
        alpha_clutter,
        a_tx_target,
        a_rx_target,
        a_tx_clutter,
        a_rx_clutter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pathloss_reference_points() {
        let c = SystemConfig::desk();
        assert!(close(pathloss_linear(1.0, &c), 1e-4, 1e-18));
        assert!(close(pathloss_linear(10.0, &c), 1e-7, 1e-20));
    }

    #[test]
    fn steering_phase_examples() {
        let (r1, r2) = steering_phase(0.0, PI / 2.0);
        assert!(close(r1, PI, 1e-15) && close(r2, 0.0, 1e-15));
        let (r1, r2) = steering_phase(1.3, 0.0);
        assert_eq!((r1, r2), (0.0, 0.0));
        let mut rng = stream(5, 0, 0);
        for _ in 0..20 {
            let psi: f64 = rng.random_range(-PI..PI);
            let theta: f64 = rng.random_range(0.0..PI / 2.0);
            let (r1, r2) = steering_phase(psi, theta);
            assert!(close(r1, PI * psi.cos() * theta.sin(), 1e-15));
            assert!(close(r2, PI * psi.sin() * theta.sin(), 1e-15));
        }
    }

    #[test]
    fn steering_examples() {
        let s = planar_steering(0.7, 0.3, 1, 1);
        assert_eq!(s.len(), 1);
        assert!((s[0] - c64(1.0)).norm() < 1e-15);
        let s = planar_steering(0.4, 0.0, 3, 2);
        assert!(s.iter().all(|z| (z - c64(1.0)).norm() < 1e-15));
        let s = planar_steering(0.0, PI / 2.0, 2, 1);
        assert!((s[0] - c64(1.0)).norm() < 1e-15);
        assert!((s[1] - c64(-1.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_is_vec_of_outer_product() {
        let (psi, theta, m1, m2) = (0.9, 0.6, 3, 2);
        let (r1, r2) = steering_phase(psi, theta);
        let b1 = CVec::from_fn(m1, |m, _| Complex64::from_polar(1.0, -(m as f64) * r1));
        let b2 = CVec::from_fn(m2, |m, _| Complex64::from_polar(1.0, -(m as f64) * r2));
        let outer = &b1 * b2.adjoint();
        let s = planar_steering(psi, theta, m1, m2);
        for c in 0..m2 {
            for r in 0..m1 {
                assert!((s[r + c * m1] - outer[(r, c)]).norm() < 1e-14);
            }
        }
        assert!(close(s.norm_squared(), 6.0, 1e-12));
    }

    #[test]
    fn correlation_examples() {
        let lambda = 0.1;
        let pos = element_positions(2, 2, lambda);
        let r = correlation_matrix(&pos, lambda).unwrap();
        for m in 0..4 {
            assert!(close(r[(m, m)].re, 1.0, 1e-9));
        }
        // adjacent elements are λ/2 apart
        assert!(r[(0, 1)].norm() < 1e-9);
        assert!(r[(0, 2)].norm() < 1e-9);
        for a in 0..4 {
            for b in 0..4 {
                let d = ((pos[a][0] - pos[b][0]).powi(2) + (pos[a][1] - pos[b][1]).powi(2)).sqrt();
                let x = 2.0 * d / lambda;
                let want = if d == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                assert!(close(r[(a, b)].re, want, 1e-9), "{a},{b}");
                assert!(r[(a, b)].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scene_is_deterministic_and_valid() {
        let c = SystemConfig::full();
        let a = build_scene(&c, &mut stream(9, 1, 0)).unwrap();
        let b = build_scene(&c, &mut stream(9, 1, 0)).unwrap();
        assert_eq!(a, b);
        for (i, row) in a.tx_user.iter().enumerate() {
            for (k, l) in row.iter().enumerate() {
                assert!(l.distance >= MIN_DISTANCE && l.psi.is_finite() && l.theta.is_finite());
                assert!(a.large_scale[i][k] > 0.0);
                assert!((c.rician_min..=c.rician_max).contains(&a.rician[i][k]));
            }
        }
    }

    #[test]
    fn los_only_limit_returns_mean() {
        let c = SystemConfig::desk();
        let scene = build_scene(&c, &mut stream(1, 1, 0)).unwrap();
        let mut stats = ChannelStats::new(&scene, &c).unwrap();
        for row in &mut stats.scattered {
            row.iter_mut().for_each(|e| *e = 0.0);
        }
        let ch = sample_channels(&stats, &mut stream(1, 3, 0));
        for (hr, cr) in ch.h.iter().zip(&stats.los) {
            for (h, cv) in hr.iter().zip(cr) {
                assert_eq!(h, cv);
            }
        }
    }

    #[test]
    fn stacked_channel_concatenates_taps() {
        let c = SystemConfig::desk();
        let scene = build_scene(&c, &mut stream(2, 1, 0)).unwrap();
        let stats = ChannelStats::new(&scene, &c).unwrap();
        let ch = sample_channels(&stats, &mut stream(2, 3, 0));
        let f = ch.stacked(1);
        assert_eq!(f.len(), c.stacked_dim());
        for i in 0..c.n_tx_aps {
            for m in 0..c.tx_antennas() {
                assert_eq!(f[i * c.tx_antennas() + m], ch.h[i][1][m]);
            }
        }
    }

    #[test]
    fn response_blocks_are_rank_one() {
        let c = SystemConfig::full();
        let scene = build_scene(&c, &mut stream(3, 1, 0)).unwrap();
        let s = sensing_response(&scene, &c, &mut stream(3, 2, 0));
        let mt = c.tx_antennas();
        for g in s.g_target.iter().chain(s.g_clutter.iter().flatten()) {
            assert_eq!(g.shape(), (c.rx_antennas(), c.stacked_dim()));
            for i in 0..c.n_tx_aps {
                let block = g.columns(i * mt, mt).into_owned();
                let sv = block.singular_values();
                let mut v: Vec<f64> = sv.iter().copied().collect();
                v.sort_by(|a, b| b.total_cmp(a));
                assert!(v[1] <= 1e-10 * v[0]);
            }
        }
    }

    #[test]
    fn reflection_scale_halves_with_distance() {
        let c = SystemConfig::desk();
        let a = reflection_scale(20.0, 30.0, 1.0, &c);
        let b = reflection_scale(40.0, 30.0, 1.0, &c);
        assert!(close(b / a, 0.5, 1e-12));
    }
}
