//! Communication SINR/rates, sensing SCNR/rates, the weighted objective and
//! constraint checks, all in complex arithmetic.

use crate::channel::SensingResponse;
use crate::error::{CoreError, Result};
use crate::linalg::{frobenius_sq, CMat, CVec};

/// Power-budget slack below which a beamformer counts as infeasible.
pub const POWER_TOL: f64 = 1e-9;

/// Column 0 is the sensing stream, column `k + 1` serves user `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Beamformer {
    pub w: CMat,
}

impl Beamformer {
    pub fn new(w: CMat) -> Self {
        Self { w }
    }

    pub fn power(&self) -> f64 {
        frobenius_sq(&self.w)
    }

    pub fn users(&self) -> usize {
        self.w.ncols().saturating_sub(1)
    }

    pub fn is_power_feasible(&self, budget: f64) -> bool {
        self.power() <= budget + POWER_TOL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Maximize sensing subject to per-user rate floors.
    SensingCentric,
    /// Maximize communication subject to per-RAP sensing floors.
    CommCentric,
    /// Weighted sum without rate floors.
    Joint,
}

impl std::str::FromStr for Regime {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sc" => Ok(Self::SensingCentric),
            "cc" => Ok(Self::CommCentric),
            "joint" => Ok(Self::Joint),
            other => Err(CoreError::Config(format!(
                "unknown regime `{other}` (expected sc, cc or joint)"
            ))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SensingCentric => "sc",
            Self::CommCentric => "cc",
            Self::Joint => "joint",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeSpec {
    pub regime: Regime,
    pub eta: f64,
    pub beta_c: bool,
    pub beta_s: bool,
    /// Per-user rate floor, bps/Hz.
    pub vartheta_th: f64,
    /// Per-RAP sensing-rate floor, bps/Hz.
    pub zeta_th: f64,
    pub kappa: f64,
}

impl RegimeSpec {
    pub fn sensing_centric(vartheta_th: f64, kappa: f64) -> Self {
        Self {
            regime: Regime::SensingCentric,
            eta: 0.0,
            beta_c: true,
            beta_s: false,
            vartheta_th,
            zeta_th: 0.0,
            kappa,
        }
    }

    pub fn comm_centric(zeta_th: f64, kappa: f64) -> Self {
        Self {
            regime: Regime::CommCentric,
            eta: 1.0,
            beta_c: false,
            beta_s: true,
            vartheta_th: 0.0,
            zeta_th,
            kappa,
        }
    }

    pub fn joint(eta: f64, kappa: f64) -> Self {
        Self {
            regime: Regime::Joint,
            eta,
            beta_c: false,
            beta_s: false,
            vartheta_th: 0.0,
            zeta_th: 0.0,
            kappa,
        }
    }

    /// Build from a regime tag and the matching threshold or weight.
    pub fn from_parts(regime: Regime, eta: f64, vth: f64, zth: f64, kappa: f64) -> Self {
        match regime {
            Regime::SensingCentric => Self::sensing_centric(vth, kappa),
            Regime::CommCentric => Self::comm_centric(zth, kappa),
            Regime::Joint => Self::joint(eta, kappa),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(CoreError::Config(format!("eta {} outside [0, 1]", self.eta)));
        }
        if self.vartheta_th < 0.0 || self.zeta_th < 0.0 {
            return Err(CoreError::Config("rate thresholds must be non-negative".into()));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(CoreError::Config(format!("kappa {} outside (0, 1]", self.kappa)));
        }
        Ok(())
    }

    /// SINR floor equivalent to the user rate floor, `2^(ϑ/κ) − 1`.
    pub fn sinr_threshold(&self) -> f64 {
        (self.vartheta_th / self.kappa).exp2() - 1.0
    }

    /// SCNR floor equivalent to the sensing rate floor.
    pub fn scnr_threshold(&self) -> f64 {
        (self.zeta_th / self.kappa).exp2() - 1.0
    }
}

/// SINR of user `k` (0-based; served by column `k + 1`).
pub fn sinr_user(f: &[CVec], w: &CMat, k: usize) -> f64 {
    let fk = &f[k];
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..w.ncols() {
        let g = fk.dotc(&w.column(j)).norm_sqr();
        if j == k + 1 {
            signal = g;
        } else {
            interference += g;
        }
    }
    signal / (interference + 1.0)
}

pub fn comm_rate(sinr: f64, kappa: f64) -> f64 {
    kappa * (1.0 + sinr).log2()
}

/// SCNR `‖G_t W‖² / (Σ_c ‖G_c W‖² + M_R)`.
pub fn scnr_rap(g_target: &CMat, g_clutter: &[CMat], w: &CMat, rx_antennas: usize) -> f64 {
    let signal = frobenius_sq(&(g_target * w));
    let clutter: f64 = g_clutter.iter().map(|g| frobenius_sq(&(g * w))).sum();
    signal / (clutter + rx_antennas as f64)
}

pub fn sensing_rate(scnr: f64, kappa: f64) -> f64 {
    kappa * (1.0 + scnr).log2()
}

/// All SINRs, SCNRs and rates of one beamformer.
#[derive(Clone, Debug, PartialEq)]
pub struct Rates {
    pub sinr: Vec<f64>,
    pub scnr: Vec<f64>,
    /// `κ·log2(1 + SINR)` per user.
    pub comm: Vec<f64>,
    /// `κ·log2(1 + SCNR)` per RAP.
    pub sensing: Vec<f64>,
}

impl Rates {
    pub fn comm_sum(&self) -> f64 {
        self.comm.iter().sum()
    }

    pub fn sensing_sum(&self) -> f64 {
        self.sensing.iter().sum()
    }
}

pub fn evaluate(f: &[CVec], sensing: &SensingResponse, w: &CMat, kappa: f64) -> Rates {
    let m_r = sensing.rx_antennas();
    let sinr: Vec<f64> = (0..f.len()).map(|k| sinr_user(f, w, k)).collect();
    let scnr: Vec<f64> = sensing
        .g_target
        .iter()
        .zip(&sensing.g_clutter)
        .map(|(gt, gc)| scnr_rap(gt, gc, w, m_r))
        .collect();
    Rates {
        comm: sinr.iter().map(|&g| comm_rate(g, kappa)).collect(),
        sensing: scnr.iter().map(|&g| sensing_rate(g, kappa)).collect(),
        sinr,
        scnr,
    }
}

/// `η·Σ log2(1+γ_C) + (1−η)·Σ log2(1+γ_S)`.
pub fn objective(spec: &RegimeSpec, rates: &Rates) -> f64 {
    let c: f64 = rates.sinr.iter().map(|g| (1.0 + g).log2()).sum();
    let s: f64 = rates.scnr.iter().map(|g| (1.0 + g).log2()).sum();
    spec.eta * c + (1.0 - spec.eta) * s
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintReport {
    pub feasible: bool,
    /// Per-user shortfall in bps/Hz (zero when the floor is inactive).
    pub comm_violation: Vec<f64>,
    /// Per-RAP shortfall in bps/Hz.
    pub sensing_violation: Vec<f64>,
    /// `ρN_T − ‖W‖²`.
    pub power_slack: f64,
}

impl ConstraintReport {
    /// Largest rate shortfall.
    pub fn max_violation(&self) -> f64 {
        self.comm_violation
            .iter()
            .chain(&self.sensing_violation)
            .fold(0.0, |a, &b| a.max(b))
    }

    /// Mean shortfall over the active rate constraints.
    pub fn mean_violation(&self) -> f64 {
        let v: Vec<f64> = self
            .comm_violation
            .iter()
            .chain(&self.sensing_violation)
            .copied()
            .collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    /// Rate floors met, ignoring the power budget.
    pub fn rates_met(&self) -> bool {
        self.max_violation() == 0.0
    }
}

pub fn check_constraints(spec: &RegimeSpec, rates: &Rates, w: &CMat, budget: f64) -> ConstraintReport {
    let comm_violation: Vec<f64> = if spec.beta_c {
        rates.comm.iter().map(|r| (spec.vartheta_th - r).max(0.0)).collect()
    } else {
        Vec::new()
    };
    let sensing_violation: Vec<f64> = if spec.beta_s {
        rates.sensing.iter().map(|r| (spec.zeta_th - r).max(0.0)).collect()
    } else {
        Vec::new()
    };
    let power_slack = budget - frobenius_sq(w);
    let feasible = power_slack >= -POWER_TOL
        && comm_violation.iter().chain(&sensing_violation).all(|&v| v == 0.0);
    ConstraintReport {
        feasible,
        comm_violation,
        sensing_violation,
        power_slack,
    }
}
