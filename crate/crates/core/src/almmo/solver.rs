use std::io::Write;
use std::time::Instant;

use crate::linalg::{c64, frobenius_sq, CMat};
use crate::metrics::Regime;
use crate::rng::{complex_normal, Stream};

use super::problem::{cost, euclidean_grad, mu_update, Auxiliary, Lifted, Multipliers, Terms};

#[derive(Clone, Debug, PartialEq)]
pub struct AlmOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Inner stop on the Riemannian gradient norm.
    pub grad_tol: f64,
    /// Outer stop on the relative change of the objective.
    pub rel_tol: f64,
    /// Largest rate shortfall (bps/Hz) accepted at termination.
    pub violation_tol: f64,
    pub zeta0: f64,
    pub zeta_growth: f64,
    pub zeta_max: f64,
    /// Required shrink of the worst violation before `ζ` stays put.
    pub violation_decrease: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub max_backtracks: usize,
}

impl Default for AlmOptions {
    fn default() -> Self {
        Self {
            max_outer: 50,
            max_inner: 200,
            grad_tol: 1e-6,
            rel_tol: 1e-5,
            violation_tol: 1e-4,
            zeta0: 100.0,
            zeta_growth: 2.0,
            zeta_max: 1e6,
            violation_decrease: 0.9,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

/// Remove the radial component: `ξ = G − Re Tr(Vᴴ G)·V`.
pub fn project_tangent(v: &CMat, egrad: &CMat) -> CMat {
    let radial = v.dotc(egrad).re;
    egrad - v * c64(radial)
}

/// Map back to the sphere by normalization.
pub fn retract(v: &CMat) -> CMat {
    v / c64(v.norm())
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub point: CMat,
    pub cost: f64,
    pub step: f64,
    pub accepted: bool,
}

/// One steepest-descent step along `−ξ` with Armijo backtracking from the
/// trial step `t0`.
pub fn riemannian_step(
    v: &CMat,
    current: f64,
    xi: &CMat,
    t0: f64,
    eval: impl Fn(&CMat) -> f64,
    opts: &AlmOptions,
) -> StepOutcome {
    let slope = frobenius_sq(xi);
    let mut t = t0;
    for _ in 0..opts.max_backtracks {
        let cand = retract(&(v - xi * c64(t)));
        let c = eval(&cand);
        if c <= current - opts.armijo_c * t * slope {
            return StepOutcome {
                point: cand,
                cost: c,
                step: t,
                accepted: true,
            };
        }
        t *= opts.armijo_shrink;
    }
    StepOutcome {
        point: v.clone(),
        cost: current,
        step: 0.0,
        accepted: false,
    }
}

/// `λ ← max(0, λ + ζ·û)`; `ζ` grows when the worst violation did not shrink
/// enough since the previous round.
pub fn multiplier_update(
    mult: &Multipliers,
    u: &[f64],
    previous_violation: f64,
    opts: &AlmOptions,
) -> Multipliers {
    let lambda = mult
        .lambda
        .iter()
        .zip(u)
        .map(|(&l, &uk)| (l + mult.zeta * uk).max(0.0))
        .collect();
    let worst = u.iter().fold(0.0f64, |a, &b| a.max(b));
    let zeta = if worst > opts.violation_decrease * previous_violation && worst > 0.0 {
        (mult.zeta * opts.zeta_growth).min(opts.zeta_max)
    } else {
        mult.zeta
    };
    Multipliers { lambda, zeta }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    /// Regime objective (sum-log, bits) at the end of the round.
    pub objective: f64,
    /// Largest rate shortfall in bps/Hz.
    pub max_violation: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub w: CMat,
    pub v: CMat,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// Set when the first round made no progress at all.
    pub stalled: bool,
    /// Largest `|‖V‖² − 1|` over all accepted steps.
    pub sphere_drift: f64,
}

impl Solution {
    pub fn write_trace<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "outer_iter,objective,max_violation,grad_norm,seconds")?;
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.outer_iter, r.objective, r.max_violation, r.grad_norm, r.seconds
            )?;
        }
        Ok(())
    }
}

/// Random complex beamformer scaled to the full power budget.
pub fn random_start(rows: usize, cols: usize, budget: f64, rng: &mut Stream) -> CMat {
    let z = CMat::from_fn(rows, cols, |_, _| complex_normal(rng));
    let n = z.norm();
    z * c64(budget.sqrt() / n)
}

/// Regime objective in bits and the worst rate shortfall in bps/Hz.
fn report(p: &Lifted, v: &CMat) -> (f64, f64) {
    let t = Terms::new(p, v);
    let kappa = p.spec.kappa;
    let comm: Vec<f64> = (0..p.users()).map(|k| (1.0 + t.sinr(k)).log2()).collect();
    let sens: Vec<f64> = (0..p.raps())
        .map(|j| (1.0 + t.scnr(j, p.rx_antennas)).log2())
        .collect();
    let (objective, shortfall) = match p.spec.regime {
        Regime::SensingCentric => (
            sens.iter().sum(),
            comm.iter()
                .map(|c| (p.spec.vartheta_th - kappa * c).max(0.0))
                .fold(0.0, f64::max),
        ),
        Regime::CommCentric => (
            comm.iter().sum(),
            sens.iter()
                .map(|s| (p.spec.zeta_th - kappa * s).max(0.0))
                .fold(0.0, f64::max),
        ),
        Regime::Joint => (
            p.spec.eta * comm.iter().sum::<f64>() + (1.0 - p.spec.eta) * sens.iter().sum::<f64>(),
            0.0,
        ),
    };
    (objective, shortfall)
}

/// Steer an infeasible start into the feasible set by descending the
/// penalty alone, with the objective scaled away by the largest `ζ`.
fn restore_feasibility(p: &Lifted, mut v: CMat, opts: &AlmOptions) -> CMat {
    if p.constraints() == 0 {
        return v;
    }
    let mu = mu_update(p, &v);
    let mult = Multipliers::new(p.constraints(), opts.zeta_max);
    let mut step = 1.0;
    for _ in 0..opts.max_inner {
        let ev = euclidean_grad(p, &v, &mu, &mult);
        if ev.constraints.iter().all(|&u| u <= 0.0) {
            break;
        }
        let xi = project_tangent(&v, &ev.grad);
        let out = riemannian_step(&v, ev.value, &xi, step * 2.0, |c| cost(p, c, &mu, &mult), opts);
        if !out.accepted {
            break;
        }
        step = out.step;
        v = out.point;
    }
    v
}

/// Barzilai-Borwein trial step `⟨s, s⟩ / Re⟨s, y⟩` from the last move `s`
/// and gradient change `y`, when the curvature estimate is positive.
fn bb_step(s: &CMat, y: &CMat) -> Option<f64> {
    let sy = s.dotc(y).re;
    (sy > 0.0).then(|| (frobenius_sq(s) / sy).min(1e3))
}

/// Alternate `μ = γ`, inner Riemannian descent on the augmented Lagrangian
/// and multiplier updates until the objective settles with all rate floors
/// met, or the outer budget runs out.
pub fn solve(p: &Lifted, w0: &CMat, opts: &AlmOptions) -> Solution {
    let start = Instant::now();
    let mut v = restore_feasibility(p, p.lift(w0), opts);
    let mut mult = Multipliers::new(p.constraints(), opts.zeta0);
    let mut trace = Vec::new();
    let mut previous: Option<f64> = None;
    let mut previous_violation = f64::INFINITY;
    let mut step = 1.0;
    let mut converged = false;
    let mut stalled = false;
    let mut drift: f64 = (frobenius_sq(&v) - 1.0).abs();
    let mut best: Option<(bool, f64, CMat)> = None;

    for outer in 0..opts.max_outer {
        let mu: Auxiliary = mu_update(p, &v);
        let mut ev = euclidean_grad(p, &v, &mu, &mult);
        let mut xi = project_tangent(&v, &ev.grad);
        let mut moved = false;
        let mut trial = step * 2.0;
        for _ in 0..opts.max_inner {
            if xi.norm() < opts.grad_tol {
                break;
            }
            let out = riemannian_step(
                &v,
                ev.value,
                &xi,
                trial,
                |cand| cost(p, cand, &mu, &mult),
                opts,
            );
            if !out.accepted {
                break;
            }
            moved = true;
            step = out.step;
            let s = &out.point - &v;
            v = out.point;
            drift = drift.max((frobenius_sq(&v) - 1.0).abs());
            ev = euclidean_grad(p, &v, &mu, &mult);
            let xi_next = project_tangent(&v, &ev.grad);
            trial = bb_step(&s, &(&xi_next - &xi)).unwrap_or(step * 2.0);
            xi = xi_next;
        }
        if !moved && outer == 0 {
            stalled = true;
        }

        let worst_u = ev.constraints.iter().fold(0.0f64, |a, &b| a.max(b));
        mult = multiplier_update(&mult, &ev.constraints, previous_violation, opts);
        previous_violation = worst_u;

        let (objective, shortfall) = report(p, &v);
        let ok = shortfall <= opts.violation_tol;
        let better = match &best {
            None => true,
            Some((bok, bobj, _)) => (ok && !bok) || (ok == *bok && objective > *bobj),
        };
        if better {
            best = Some((ok, objective, v.clone()));
        }
        trace.push(TraceRow {
            outer_iter: outer + 1,
            objective,
            max_violation: shortfall,
            grad_norm: xi.norm(),
            seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(prev) = previous {
            let rel = (objective - prev).abs() / prev.abs().max(1e-12);
            if rel < opts.rel_tol && shortfall <= opts.violation_tol {
                converged = true;
                break;
            }
        }
        previous = Some(objective);
    }

    // A run that did not settle hands back its best iterate.
    if !converged {
        if let Some((_, _, b)) = best {
            v = b;
        }
    }
    Solution {
        w: p.beamformer(&v),
        v,
        trace,
        converged,
        stalled,
        sphere_drift: drift,
    }
}
