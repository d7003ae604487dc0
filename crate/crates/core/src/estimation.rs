//! Uplink pilot training, per-TAP MMSE channel estimation and the parametric
//! CSI-error model.

use std::f64::consts::PI;

use nalgebra::Cholesky;
use num_complex::Complex64;

use crate::channel::{ChannelSet, ChannelStats};
use crate::error::{CoreError, Result};
use crate::linalg::{c64, hermitian_eig, vstack, CMat, CVec};
use crate::rng::{complex_normal, Stream};

/// Condition number of `C_ỹỹ` above which an estimate is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Orthonormal pilot rows, one per user.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    pub phi: Vec<CVec>,
}

impl PilotBook {
    pub fn tau_p(&self) -> usize {
        self.phi.first().map_or(0, CVec::len)
    }

    /// `Φ Φᴴ`, the identity for an orthonormal book.
    pub fn gram(&self) -> CMat {
        let k = self.phi.len();
        CMat::from_fn(k, k, |a, b| self.phi[b].dotc(&self.phi[a]))
    }
}

/// First `users` rows of the unitary DFT basis of size `tau_p`.
pub fn make_pilots(users: usize, tau_p: usize) -> Result<PilotBook> {
    if tau_p < users {
        return Err(CoreError::PilotsTooShort { tau_p, users });
    }
    let s = 1.0 / (tau_p as f64).sqrt();
    let phi = (0..users)
        .map(|k| {
            CVec::from_fn(tau_p, |n, _| {
                Complex64::from_polar(s, -2.0 * PI * (k * n) as f64 / tau_p as f64)
            })
        })
        .collect();
    Ok(PilotBook { phi })
}

/// Per-user pilot energy when the pilot power `ρ_p` over `τ_p` symbols is
/// shared by `users` simultaneous transmitters.
pub fn pilot_energy(rho_p: f64, tau_p: usize, users: usize) -> f64 {
    rho_p * tau_p as f64 / users.max(1) as f64
}

/// `Y_i = √E · Σ_k h_ik φ_kᵀ + N_i` for every TAP. With `noise = false` the
/// AWGN term is omitted.
pub fn receive_pilots(
    channels: &ChannelSet,
    pilots: &PilotBook,
    energy: f64,
    noise: bool,
    rng: &mut Stream,
) -> Vec<CMat> {
    let tau = pilots.tau_p();
    let amp = c64(energy.sqrt());
    channels
        .h
        .iter()
        .map(|row| {
            let m = row.first().map_or(0, CVec::len);
            let mut y = CMat::zeros(m, tau);
            for (h, phi) in row.iter().zip(&pilots.phi) {
                y += h * phi.transpose() * amp;
            }
            if noise {
                y.iter_mut().for_each(|e| *e += complex_normal(rng));
            }
            y
        })
        .collect()
}

/// Project onto one pilot: `ỹ = Y φ*`.
pub fn despread(y: &CMat, phi: &CVec) -> CVec {
    y * phi.map(|z| z.conj())
}

#[derive(Clone, Debug)]
pub struct LinkEstimate {
    pub h_hat: CVec,
    pub c_hhat: CMat,
    pub c_eps: CMat,
}

/// MMSE estimate of one link from its despread pilot observation.
pub fn mmse_estimate(y: &CVec, mean: &CVec, c_h: &CMat, energy: f64) -> Result<LinkEstimate> {
    let m = mean.len();
    if y.len() != m || c_h.shape() != (m, m) {
        return Err(CoreError::Dimension(format!(
            "observation {} / mean {} / covariance {:?}",
            y.len(),
            m,
            c_h.shape()
        )));
    }
    let root = energy.sqrt();
    let c_hy = c_h * c64(root);
    let c_yy = c_h * c64(energy) + CMat::identity(m, m);
    let eig = hermitian_eig(&c_yy);
    let (lo, hi) = (eig.values[0], eig.values[m - 1]);
    if lo <= 0.0 || hi / lo > MAX_CONDITION {
        return Err(CoreError::IllConditioned(hi / lo.max(f64::MIN_POSITIVE)));
    }
    let chol = Cholesky::new(c_yy).ok_or(CoreError::NotPsd(lo))?;
    let innovation = y - mean * c64(root);
    let h_hat = mean + &c_hy * chol.solve(&innovation);
    let c_hhat = &c_hy * chol.solve(&c_hy);
    let c_hhat = (&c_hhat + c_hhat.adjoint()) * c64(0.5);
    let c_eps = c_h - &c_hhat;
    Ok(LinkEstimate {
        h_hat,
        c_hhat,
        c_eps,
    })
}

/// Estimates for every TAP→user link of one realization.
#[derive(Clone, Debug)]
pub struct ChannelEstimate {
    /// `[i][k]`.
    pub links: Vec<Vec<LinkEstimate>>,
}

impl ChannelEstimate {
    pub fn stacked(&self, k: usize) -> CVec {
        let parts: Vec<CVec> = self.links.iter().map(|row| row[k].h_hat.clone()).collect();
        vstack(&parts)
    }

    pub fn stacked_all(&self) -> Vec<CVec> {
        let users = self.links.first().map_or(0, Vec::len);
        (0..users).map(|k| self.stacked(k)).collect()
    }
}

/// Pilot phase followed by per-link MMSE estimation at every TAP.
pub fn estimate_channels(
    stats: &ChannelStats,
    channels: &ChannelSet,
    pilots: &PilotBook,
    energy: f64,
    rng: &mut Stream,
) -> Result<ChannelEstimate> {
    let received = receive_pilots(channels, pilots, energy, true, rng);
    let links = received
        .iter()
        .enumerate()
        .map(|(i, y)| {
            pilots
                .phi
                .iter()
                .enumerate()
                .map(|(k, phi)| {
                    mmse_estimate(&despread(y, phi), &stats.los[i][k], &stats.covariance(i, k), energy)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelEstimate { links })
}

/// `g + ε` with `ε ~ CN(0, χ|g|²)`.
pub fn corrupt_csi(g: Complex64, chi: f64, rng: &mut Stream) -> Complex64 {
    g + complex_normal(rng) * (chi * g.norm_sqr()).sqrt()
}

/// Entrywise [`corrupt_csi`].
pub fn corrupt_vector(v: &CVec, chi: f64, rng: &mut Stream) -> CVec {
    v.map(|g| corrupt_csi(g, chi, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_scene, sample_channels};
    use crate::config::SystemConfig;
    use crate::rng::stream;

    #[test]
    fn pilot_books_are_orthonormal() {
        let b = make_pilots(1, 1).unwrap();
        assert!((b.phi[0][0] - c64(1.0)).norm() < 1e-15);
        for (k, tau) in [(4, 4), (4, 20), (3, 7)] {
            let g = make_pilots(k, tau).unwrap().gram();
            assert!((g - CMat::identity(k, k)).norm() < 1e-12);
        }
        assert!(matches!(
            make_pilots(4, 3),
            Err(CoreError::PilotsTooShort { .. })
        ));
    }

    fn toy() -> (ChannelStats, ChannelSet) {
        let c = SystemConfig::desk();
        let scene = build_scene(&c, &mut stream(4, 1, 0)).unwrap();
        let stats = ChannelStats::new(&scene, &c).unwrap();
        let ch = sample_channels(&stats, &mut stream(4, 3, 0));
        (stats, ch)
    }

    #[test]
    fn noiseless_single_user_reception() {
        let (_, mut ch) = toy();
        for row in &mut ch.h {
            row.truncate(1);
        }
        let book = make_pilots(1, 4).unwrap();
        let e = pilot_energy(10.0, 4, 1);
        let y = receive_pilots(&ch, &book, e, false, &mut stream(0, 0, 0));
        for (yi, row) in y.iter().zip(&ch.h) {
            let want = &row[0] * book.phi[0].transpose() * c64(e.sqrt());
            assert!((yi - want).norm() < 1e-12);
            let d = despread(yi, &book.phi[0]);
            assert!((d - &row[0] * c64(e.sqrt())).norm() < 1e-12);
        }
    }

    #[test]
    fn despreading_removes_other_users() {
        let (_, ch) = toy();
        let book = make_pilots(3, 5).unwrap();
        let y = receive_pilots(&ch, &book, 2.0, false, &mut stream(0, 0, 0));
        for (i, yi) in y.iter().enumerate() {
            for k in 0..3 {
                let d = despread(yi, &book.phi[k]);
                assert!((d - &ch.h[i][k] * c64(2f64.sqrt())).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn despread_matches_matrix_vector_loop() {
        let mut rng = stream(6, 0, 0);
        let y = CMat::from_fn(3, 5, |_, _| complex_normal(&mut rng));
        let phi = CVec::from_fn(5, |_, _| complex_normal(&mut rng));
        let d = despread(&y, &phi);
        for r in 0..3 {
            let want: Complex64 = (0..5).map(|n| y[(r, n)] * phi[n].conj()).sum();
            assert!((d[r] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_covariance_returns_the_mean() {
        let mean = CVec::from_vec(vec![c64(1.0), Complex64::new(0.0, 2.0)]);
        let y = CVec::from_vec(vec![c64(-7.0), c64(3.0)]);
        let est = mmse_estimate(&y, &mean, &CMat::zeros(2, 2), 40.0).unwrap();
        assert_eq!(est.h_hat, mean);
        assert!(est.c_eps.norm() < 1e-15);
    }

    #[test]
    fn high_energy_recovers_the_channel() {
        let (stats, ch) = toy();
        let energy: f64 = 1e9;
        let h = &ch.h[0][0];
        let y = h * c64(energy.sqrt());
        let est = mmse_estimate(&y, &stats.los[0][0], &stats.covariance(0, 0), energy).unwrap();
        assert!((&est.h_hat - h).norm() / h.norm() < 1e-3);
    }

    #[test]
    fn error_covariance_is_psd_difference() {
        let (stats, _) = toy();
        let c_h = stats.covariance(1, 2);
        let y = CVec::zeros(c_h.nrows());
        let est = mmse_estimate(&y, &stats.los[1][2], &c_h, 13.0).unwrap();
        assert!((&est.c_eps - (&c_h - &est.c_hhat)).norm() < 1e-14);
        assert!(crate::linalg::min_eigenvalue(&est.c_eps) > -1e-8);
    }

    #[test]
    fn zero_chi_is_identity() {
        let mut rng = stream(1, 0, 0);
        let g = Complex64::new(0.3, -1.2);
        assert_eq!(corrupt_csi(g, 0.0, &mut rng), g);
    }
}
