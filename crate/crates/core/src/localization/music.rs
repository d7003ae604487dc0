//! 2D MUSIC over an azimuth × elevation grid.

use std::io::Write;

use crate::channel::{planar_steering, SensingResponse};
use crate::error::{CoreError, Result};
use crate::linalg::{c64, CMat, CVec};
use crate::localization::eig::hermitian_eig;
use crate::rng::{complex_normal, qpsk, Stream};

/// Uniform grid on one angular axis, degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleAxis {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for AngleAxis {
    fn default() -> Self {
        Self {
            start: -100.0,
            stop: 100.0,
            step: 0.5,
        }
    }
}

impl AngleAxis {
    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }
}

/// `τ` received snapshots `y = (G_t + Σ_c G_c) W x + n` at one RAP, as the
/// columns of an `M_R × τ` matrix. Symbols are unit-power QPSK.
pub fn snapshots(
    sensing: &SensingResponse,
    rap: usize,
    w: &CMat,
    tau: usize,
    noise: bool,
    rng: &mut Stream,
) -> CMat {
    let mut g = sensing.g_target[rap].clone();
    for gc in &sensing.g_clutter[rap] {
        g += gc;
    }
    let gw = g * w;
    let mut y = CMat::zeros(gw.nrows(), tau);
    for t in 0..tau {
        let x = CVec::from_fn(w.ncols(), |_, _| qpsk(rng));
        let mut col = &gw * x;
        if noise {
            col.iter_mut().for_each(|e| *e += complex_normal(rng));
        }
        y.set_column(t, &col);
    }
    y
}

/// `R = (1/τ) Σ y yᴴ`.
pub fn sample_covariance(y: &CMat) -> CMat {
    y * y.adjoint() * c64(1.0 / y.ncols().max(1) as f64)
}

/// Signal and noise subspaces of a covariance with `sources` emitters.
#[derive(Clone, Debug)]
pub struct Subspaces {
    pub signal: CMat,
    pub noise: CMat,
    pub eigenvalues: Vec<f64>,
}

pub fn subspaces(r: &CMat, sources: usize) -> Result<Subspaces> {
    let m = r.nrows();
    if m <= sources {
        return Err(CoreError::NoNoiseSubspace {
            rx_antennas: m,
            sources,
        });
    }
    let e = hermitian_eig(r);
    let n_noise = m - sources;
    Ok(Subspaces {
        noise: e.vectors.columns(0, n_noise).into_owned(),
        signal: e.vectors.columns(n_noise, sources).into_owned(),
        eigenvalues: e.values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub azimuth: f64,
    pub elevation: f64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct MusicResult {
    pub azimuth: AngleAxis,
    pub elevation: AngleAxis,
    /// Row-major: index `a · n_elevation + e`.
    pub values: Vec<f64>,
    /// Strongest local maxima, descending.
    pub peaks: Vec<Peak>,
    pub subspaces: Subspaces,
}

impl MusicResult {
    pub fn value(&self, a: usize, e: usize) -> f64 {
        self.values[a * self.elevation.len() + e]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "azimuth_deg,elevation_deg,value")?;
        for a in 0..self.azimuth.len() {
            for e in 0..self.elevation.len() {
                writeln!(
                    out,
                    "{},{},{:e}",
                    self.azimuth.at(a),
                    self.elevation.at(e),
                    self.value(a, e)
                )?;
            }
        }
        Ok(())
    }
}

/// Pseudo-spectrum `1/(aᴴ N Nᴴ a)` over the grid with the strongest
/// `sources` local maxima as peaks.
pub fn spectrum(
    snapshots: &CMat,
    sources: usize,
    rows: usize,
    cols: usize,
    azimuth: AngleAxis,
    elevation: AngleAxis,
) -> Result<MusicResult> {
    if snapshots.nrows() != rows * cols {
        return Err(CoreError::Dimension(format!(
            "{} snapshot rows for a {rows}×{cols} array",
            snapshots.nrows()
        )));
    }
    let sub = subspaces(&sample_covariance(snapshots), sources)?;
    let nh = sub.noise.adjoint();
    let (na, ne) = (azimuth.len(), elevation.len());
    let mut values = Vec::with_capacity(na * ne);
    for a in 0..na {
        let psi = azimuth.at(a).to_radians();
        for e in 0..ne {
            let theta = elevation.at(e).to_radians();
            let s = planar_steering(psi, theta, rows, cols);
            let p = &nh * s;
            values.push(1.0 / p.norm_squared().max(1e-300));
        }
    }

    let mut maxima = Vec::new();
    for a in 0..na {
        for e in 0..ne {
            let v = values[a * ne + e];
            let mut is_max = true;
            'nb: for da in -1i64..=1 {
                for de in -1i64..=1 {
                    if da == 0 && de == 0 {
                        continue;
                    }
                    let (x, y) = (a as i64 + da, e as i64 + de);
                    if x < 0 || y < 0 || x >= na as i64 || y >= ne as i64 {
                        continue;
                    }
                    if values[x as usize * ne + y as usize] > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                maxima.push(Peak {
                    azimuth: azimuth.at(a),
                    elevation: elevation.at(e),
                    value: v,
                });
            }
        }
    }
    maxima.sort_by(|x, y| y.value.total_cmp(&x.value));
    maxima.truncate(sources);
    Ok(MusicResult {
        azimuth,
        elevation,
        values,
        peaks: maxima,
        subspaces: sub,
    })
}

/// `√((ψ − ψ̂)² + (θ − θ̂)²)` in degrees.
pub fn rmse(truth: (f64, f64), estimate: (f64, f64)) -> f64 {
    (truth.0 - estimate.0).hypot(truth.1 - estimate.1)
}

/// Directions `(ψ, θ)` and `(ψ ± 180°, −θ)` give the same planar steering
/// vector, as do `θ` and `±180° − θ`. Returns the smallest [`rmse`] over the
/// equivalent representations of `estimate`.
pub fn rmse_unambiguous(truth: (f64, f64), estimate: (f64, f64)) -> f64 {
    let (p, t) = estimate;
    let mut best = f64::INFINITY;
    for (pp, tt) in [(p, t), (p + 180.0, -t), (p - 180.0, -t)] {
        for t2 in [tt, 180.0 - tt, -180.0 - tt] {
            best = best.min(rmse(truth, (pp, t2)));
        }
    }
    best
}

/// Peak closest to the true direction.
pub fn nearest_peak(peaks: &[Peak], truth: (f64, f64)) -> Option<Peak> {
    peaks.iter().copied().min_by(|a, b| {
        rmse_unambiguous(truth, (a.azimuth, a.elevation))
            .total_cmp(&rmse_unambiguous(truth, (b.azimuth, b.elevation)))
    })
}

/// Steering vectors of the given directions (degrees) as columns.
pub fn steering_matrix(directions: &[(f64, f64)], rows: usize, cols: usize) -> CMat {
    let mut s = CMat::zeros(rows * cols, directions.len());
    for (c, &(p, t)) in directions.iter().enumerate() {
        s.set_column(c, &planar_steering(p.to_radians(), t.to_radians(), rows, cols));
    }
    s
}

/// Largest `|Nᴴ s|` over the columns of `s`, each normalized.
pub fn noise_leakage(noise: &CMat, s: &CMat) -> f64 {
    (0..s.ncols())
        .map(|c| {
            let col = s.column(c);
            (noise.adjoint() * col).norm() / col.norm()
        })
        .fold(0.0, f64::max)
}
