//! Lifted problem data, the fractional-programming objective, rate
//! constraints and the augmented-Lagrangian cost with its gradient.
//!
//! Gradients are taken as `2·∂L/∂V̄`, so a real perturbation `dV` changes the
//! cost by `Re Tr(Gᴴ dV)`.

use crate::channel::SensingResponse;
use crate::error::{CoreError, Result};
use crate::linalg::{c64, frobenius_sq, CMat, CVec};
use crate::metrics::{Regime, RegimeSpec};

/// Problem data rescaled to live on the unit complex sphere.
#[derive(Clone, Debug)]
pub struct Lifted {
    /// `√(ρN_T)`.
    pub scale: f64,
    /// `f̃_k = s·[f̂_k; 0]` as the columns of an `(N+1) × K` matrix.
    pub f: CMat,
    /// `G̃_tᴴ G̃_t` per RAP.
    pub target_gram: Vec<CMat>,
    /// `Σ_c G̃_cᴴ G̃_c` per RAP.
    pub clutter_gram: Vec<CMat>,
    pub rx_antennas: usize,
    pub spec: RegimeSpec,
}

impl Lifted {
    pub fn new(
        f_hat: &[CVec],
        sensing: &SensingResponse,
        budget: f64,
        spec: RegimeSpec,
    ) -> Result<Self> {
        let n = f_hat
            .first()
            .map(CVec::len)
            .ok_or_else(|| CoreError::Dimension("no users".into()))?;
        if f_hat.iter().any(|f| f.len() != n)
            || sensing.g_target.iter().any(|g| g.ncols() != n)
        {
            return Err(CoreError::Dimension(
                "channel and response widths differ".into(),
            ));
        }
        spec.validate()?;
        let scale = budget.sqrt();
        let mut f = CMat::zeros(n + 1, f_hat.len());
        for (k, fk) in f_hat.iter().enumerate() {
            f.view_mut((0, k), (n, 1)).copy_from(&(fk * c64(scale)));
        }
        let lift = |g: &CMat| -> CMat {
            let mut out = CMat::zeros(g.nrows(), n + 1);
            out.view_mut((0, 0), (g.nrows(), n)).copy_from(&(g * c64(scale)));
            out
        };
        let target_gram = sensing
            .g_target
            .iter()
            .map(|g| {
                let gl = lift(g);
                gl.adjoint() * gl
            })
            .collect();
        let clutter_gram = sensing
            .g_clutter
            .iter()
            .map(|gcs| {
                let mut acc = CMat::zeros(n + 1, n + 1);
                for g in gcs {
                    let gl = lift(g);
                    acc += gl.adjoint() * gl;
                }
                acc
            })
            .collect();
        Ok(Self {
            scale,
            f,
            target_gram,
            clutter_gram,
            rx_antennas: sensing.rx_antennas(),
            spec,
        })
    }

    pub fn users(&self) -> usize {
        self.f.ncols()
    }

    pub fn raps(&self) -> usize {
        self.target_gram.len()
    }

    /// Rows of the manifold point, `N_T·M_T + 1`.
    pub fn rows(&self) -> usize {
        self.f.nrows()
    }

    /// Number of rate constraints handled by the augmented Lagrangian.
    pub fn constraints(&self) -> usize {
        match self.spec.regime {
            Regime::SensingCentric => self.users(),
            Regime::CommCentric => self.raps(),
            Regime::Joint => 0,
        }
    }

    /// Recover `W = s·V[..N, :]`.
    pub fn beamformer(&self, v: &CMat) -> CMat {
        v.rows(0, v.nrows() - 1) * c64(self.scale)
    }

    /// Point on the sphere for `W`, padding the last row so `‖V‖_F = 1`
    /// when `‖W‖² < s²` and normalizing otherwise.
    pub fn lift(&self, w: &CMat) -> CMat {
        let n = w.nrows();
        let mut v = CMat::zeros(n + 1, w.ncols());
        v.rows_mut(0, n).copy_from(&(w * c64(1.0 / self.scale)));
        let used = frobenius_sq(&v);
        if used < 1.0 {
            v[(n, 0)] = c64((1.0 - used).sqrt());
        }
        let norm = v.norm();
        v / c64(norm)
    }
}

/// Per-point quadratic quantities shared by the cost and its gradient.
#[derive(Clone, Debug)]
pub struct Terms {
    /// `f̃_kᴴ V e_j`, `K × (K+1)`.
    pub a: CMat,
    /// `|a_{k,k+1}|²`.
    pub signal: Vec<f64>,
    /// `Σ_j |a_kj|²`.
    pub total: Vec<f64>,
    /// `‖G̃_t V‖²` per RAP.
    pub target: Vec<f64>,
    /// `Σ_c ‖G̃_c V‖²` per RAP.
    pub clutter: Vec<f64>,
    pub gt_v: Vec<CMat>,
    pub gc_v: Vec<CMat>,
}

impl Terms {
    pub fn new(p: &Lifted, v: &CMat) -> Self {
        let a = p.f.adjoint() * v;
        let k = p.users();
        let signal = (0..k).map(|u| a[(u, u + 1)].norm_sqr()).collect();
        let total = (0..k).map(|u| a.row(u).norm_squared()).collect();
        let gt_v: Vec<CMat> = p.target_gram.iter().map(|g| g * v).collect();
        let gc_v: Vec<CMat> = p.clutter_gram.iter().map(|g| g * v).collect();
        let quad = |gv: &CMat| v.dotc(gv).re;
        Self {
            signal,
            total,
            target: gt_v.iter().map(quad).collect(),
            clutter: gc_v.iter().map(quad).collect(),
            a,
            gt_v,
            gc_v,
        }
    }

    pub fn sinr(&self, k: usize) -> f64 {
        self.signal[k] / (self.total[k] - self.signal[k] + 1.0)
    }

    pub fn scnr(&self, j: usize, rx_antennas: usize) -> f64 {
        self.target[j] / (self.clutter[j] + rx_antennas as f64)
    }
}

/// Gradient `2·∂|a_kj|²/∂V̄` restricted to column `j`: `2 a_kj f̃_k`.
fn grad_signal(p: &Lifted, t: &Terms, k: usize, out: &mut CMat, weight: f64) {
    let col = k + 1;
    let coef = t.a[(k, col)] * (2.0 * weight);
    let mut c = out.column_mut(col);
    c.axpy(coef, &p.f.column(k), c64(1.0));
}

/// Gradient of `Σ_j |a_kj|²`: `2 f̃_k a_kᵀ` as an outer product.
fn grad_total(p: &Lifted, t: &Terms, k: usize, out: &mut CMat, weight: f64) {
    let fk = p.f.column(k);
    for j in 0..out.ncols() {
        let coef = t.a[(k, j)] * (2.0 * weight);
        out.column_mut(j).axpy(coef, &fk, c64(1.0));
    }
}

/// Auxiliary variables of the Lagrangian dual transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Auxiliary {
    /// One per user, `μ_C,k = γ_C,k`.
    pub comm: Vec<f64>,
    /// One per RAP, `μ_S,j = γ_S,j`.
    pub sensing: Vec<f64>,
}

/// Optimal auxiliaries at the current point.
pub fn mu_update(p: &Lifted, v: &CMat) -> Auxiliary {
    let t = Terms::new(p, v);
    Auxiliary {
        comm: (0..p.users()).map(|k| t.sinr(k)).collect(),
        sensing: (0..p.raps()).map(|j| t.scnr(j, p.rx_antennas)).collect(),
    }
}

/// Weights of the communication and sensing parts of the FP objective.
fn objective_weights(spec: &RegimeSpec) -> (f64, f64) {
    match spec.regime {
        Regime::SensingCentric => (0.0, 1.0),
        Regime::CommCentric => (1.0, 0.0),
        Regime::Joint => (spec.eta, 1.0 - spec.eta),
    }
}

/// Transformed sum-log objective for fixed auxiliaries, to be minimized:
/// `−wc·Σ (1+μ_C,k) S_k/(P_k+1) − ws·Σ (1+μ_S,j) T_j/(T_j+C_j+M_R)`.
pub fn fp_objective(p: &Lifted, t: &Terms, mu: &Auxiliary) -> f64 {
    let (wc, ws) = objective_weights(&p.spec);
    let m = p.rx_antennas as f64;
    let comm: f64 = (0..p.users())
        .map(|k| (1.0 + mu.comm[k]) * t.signal[k] / (t.total[k] + 1.0))
        .sum();
    let sens: f64 = (0..p.raps())
        .map(|j| (1.0 + mu.sensing[j]) * t.target[j] / (t.target[j] + t.clutter[j] + m))
        .sum();
    -(wc * comm + ws * sens)
}

/// `f̄(W, μ)` before eliminating constant terms, natural-log units divided
/// by `ln 2`; maximized over `μ` at `μ = γ`.
pub fn fp_surrogate(p: &Lifted, t: &Terms, mu: &Auxiliary) -> f64 {
    let (wc, ws) = objective_weights(&p.spec);
    let part = |mu: f64, gamma: f64| {
        (1.0 + mu).log2() + (-mu + (1.0 + mu) * gamma / (1.0 + gamma)) / std::f64::consts::LN_2
    };
    let comm: f64 = (0..p.users()).map(|k| part(mu.comm[k], t.sinr(k))).sum();
    let sens: f64 = (0..p.raps())
        .map(|j| part(mu.sensing[j], t.scnr(j, p.rx_antennas)))
        .sum();
    wc * comm + ws * sens
}

/// Ratio threshold the constrained SINRs or SCNRs must reach.
fn ratio_threshold(spec: &RegimeSpec) -> f64 {
    match spec.regime {
        Regime::SensingCentric => spec.sinr_threshold(),
        Regime::CommCentric => spec.scnr_threshold(),
        Regime::Joint => 1.0,
    }
}

/// Constraint functions `û = 1 − γ/γ_th ≤ 0`, the relative SINR or SCNR
/// shortfall.
pub fn constraint_values(p: &Lifted, t: &Terms) -> Vec<f64> {
    let th = ratio_threshold(&p.spec);
    match p.spec.regime {
        Regime::SensingCentric => (0..p.users()).map(|k| 1.0 - t.sinr(k) / th).collect(),
        Regime::CommCentric => (0..p.raps())
            .map(|j| 1.0 - t.scnr(j, p.rx_antennas) / th)
            .collect(),
        Regime::Joint => Vec::new(),
    }
}

/// Multipliers and penalty of the augmented Lagrangian.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers {
    pub lambda: Vec<f64>,
    pub zeta: f64,
}

impl Multipliers {
    pub fn new(count: usize, zeta: f64) -> Self {
        Self {
            lambda: vec![0.0; count],
            zeta,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CostEval {
    pub value: f64,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub grad: CMat,
}

/// `L = f̂(V) + ζ/2 Σ max{0, λ/ζ + û}²`.
pub fn cost(p: &Lifted, v: &CMat, mu: &Auxiliary, mult: &Multipliers) -> f64 {
    let t = Terms::new(p, v);
    let objective = fp_objective(p, &t, mu);
    let u = constraint_values(p, &t);
    objective + penalty(&u, mult)
}

fn penalty(u: &[f64], mult: &Multipliers) -> f64 {
    let z = mult.zeta;
    u.iter()
        .zip(&mult.lambda)
        .map(|(&u, &l)| (l / z + u).max(0.0).powi(2))
        .sum::<f64>()
        * z
        / 2.0
}

/// Cost together with its Euclidean gradient `2·∂L/∂V̄`.
pub fn euclidean_grad(p: &Lifted, v: &CMat, mu: &Auxiliary, mult: &Multipliers) -> CostEval {
    let t = Terms::new(p, v);
    let (wc, ws) = objective_weights(&p.spec);
    let m = p.rx_antennas as f64;
    let mut g = CMat::zeros(v.nrows(), v.ncols());

    if wc != 0.0 {
        for k in 0..p.users() {
            // −wc·μ̂ S/(P+1): d = −wc·μ̂ [dS (P+1) − S dP] / (P+1)²
            let den = t.total[k] + 1.0;
            let base = -wc * (1.0 + mu.comm[k]) / (den * den);
            grad_signal(p, &t, k, &mut g, base * den);
            grad_total(p, &t, k, &mut g, -base * t.signal[k]);
        }
    }
    if ws != 0.0 {
        for j in 0..p.raps() {
            let a1 = t.target[j] + t.clutter[j] + m;
            let base = -ws * (1.0 + mu.sensing[j]) / (a1 * a1);
            // d T = 2 G_tᴴG_t V, d C = 2 Σ G_cᴴG_c V
            g += &t.gt_v[j] * c64(2.0 * base * (a1 - t.target[j]));
            g -= &t.gc_v[j] * c64(2.0 * base * t.target[j]);
        }
    }

    let u = constraint_values(p, &t);
    for (idx, (&uk, &lk)) in u.iter().zip(&mult.lambda).enumerate() {
        let active = lk / mult.zeta + uk;
        if active <= 0.0 {
            continue;
        }
        let w = mult.zeta * active / ratio_threshold(&p.spec);
        match p.spec.regime {
            Regime::SensingCentric => {
                // û·th = th − S/(I+1), I = P − S
                let k = idx;
                let den = t.total[k] - t.signal[k] + 1.0;
                let s = t.signal[k];
                // dû = −[dS·den − S·(dP − dS)]/den² = −[(den + S) dS − S dP]/den²
                grad_signal(p, &t, k, &mut g, -w * (den + s) / (den * den));
                grad_total(p, &t, k, &mut g, w * s / (den * den));
            }
            Regime::CommCentric => {
                let j = idx;
                let den = t.clutter[j] + m;
                g -= &t.gt_v[j] * c64(2.0 * w / den);
                g += &t.gc_v[j] * c64(2.0 * w * t.target[j] / (den * den));
            }
            Regime::Joint => {}
        }
    }

    let objective = fp_objective(p, &t, mu);
    CostEval {
        value: objective + penalty(&u, mult),
        objective,
        constraints: u,
        grad: g,
    }
}
