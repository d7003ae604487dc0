//! Differentiable communication and sensing rates and the three training
//! losses.
//!
//! Complex products are composed from real blocks:
//! `fᴴw = (f_re·w_re + f_im·w_im) + j(f_re·w_im − f_im·w_re)` and
//! `Gw = (G_re w_re − G_im w_im) + j(G_re w_im + G_im w_re)`.

use cfisac_autodiff::{Graph, Tensor, Var};
use cfisac_core::channel::SensingResponse;
use cfisac_core::linalg::{CMat, CVec};
use cfisac_core::metrics::{Regime, RegimeSpec};

use crate::error::{Result, StcibError};

/// Constant channel data of a mini-batch placed on a graph.
pub struct BatchData {
    /// `B × K × N` real and imaginary parts of `f̂_kᵀ`.
    f_re: Var,
    f_im: Var,
    /// Selects entry `(k, k+1)` of the `K × (K+1)` gain matrix.
    mask: Var,
    /// Per RAP, `(re, im)` of `G_t`, each `1 × M_R × N`.
    target: Vec<(Var, Var)>,
    /// Per RAP and clutter.
    clutter: Vec<Vec<(Var, Var)>>,
    rx_antennas: usize,
    batch: usize,
}

fn split_matrix(g: &CMat) -> (Tensor, Tensor) {
    (
        Tensor::matrix_fn(g.nrows(), g.ncols(), |r, c| g[(r, c)].re),
        Tensor::matrix_fn(g.nrows(), g.ncols(), |r, c| g[(r, c)].im),
    )
}

impl BatchData {
    pub fn new(g: &mut Graph, f: &[Vec<CVec>], sensing: &SensingResponse) -> Result<Self> {
        let batch = f.len();
        let users = f.first().map_or(0, Vec::len);
        let n = f.first().and_then(|s| s.first()).map_or(0, CVec::len);
        if batch == 0 || users == 0 {
            return Err(StcibError::Spec("empty batch".into()));
        }
        let mut re = Tensor::zeros([batch, users, n]);
        let mut im = Tensor::zeros([batch, users, n]);
        for (b, sample) in f.iter().enumerate() {
            for (k, fk) in sample.iter().enumerate() {
                for (i, z) in fk.iter().enumerate() {
                    re.set(b, k, i, z.re);
                    im.set(b, k, i, z.im);
                }
            }
        }
        let mask = Tensor::matrix_fn(users, users + 1, |k, j| if j == k + 1 { 1.0 } else { 0.0 });
        let mut place = |m: &CMat| {
            let (r, i) = split_matrix(m);
            (g.constant(r), g.constant(i))
        };
        let target = sensing.g_target.iter().map(&mut place).collect();
        let clutter = sensing
            .g_clutter
            .iter()
            .map(|row| row.iter().map(&mut place).collect())
            .collect();
        Ok(Self {
            f_re: g.constant(re),
            f_im: g.constant(im),
            mask: g.constant(mask),
            target,
            clutter,
            rx_antennas: sensing.rx_antennas(),
            batch,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Per-sample rates of a batch: `comm` is `B × K × 1`, `sensing` is
/// `B × 1 × N_R`, both already scaled by `κ`.
pub struct RateNodes {
    pub sinr: Var,
    pub comm: Var,
    pub scnr: Var,
    pub sensing: Var,
}

/// Split the `B × (K+1) × 2N` output rows into `B × N × (K+1)` real and
/// imaginary beam matrices.
pub fn beam_parts(g: &mut Graph, output: Var) -> Result<(Var, Var)> {
    let n = g.shape(output)[2] / 2;
    let re = g.slice_cols(output, 0, n)?;
    let im = g.slice_cols(output, n, n)?;
    Ok((g.transpose(re), g.transpose(im)))
}

/// `‖Gw‖_F²` per sample, `B × 1 × 1`.
fn response_power(g: &mut Graph, gm: (Var, Var), w: (Var, Var)) -> Result<Var> {
    let a = g.matmul(gm.0, w.0)?;
    let b = g.matmul(gm.1, w.1)?;
    let re = g.sub(a, b)?;
    let a = g.matmul(gm.0, w.1)?;
    let b = g.matmul(gm.1, w.0)?;
    let im = g.add(a, b)?;
    let re2 = g.square(re);
    let im2 = g.square(im);
    let p = g.add(re2, im2)?;
    let p = g.sum_axis(p, 1)?;
    Ok(g.sum_axis(p, 2)?)
}

pub fn rates(g: &mut Graph, data: &BatchData, output: Var, kappa: f64) -> Result<RateNodes> {
    let w = beam_parts(g, output)?;

    let a = g.matmul(data.f_re, w.0)?;
    let b = g.matmul(data.f_im, w.1)?;
    let a_re = g.add(a, b)?;
    let a = g.matmul(data.f_re, w.1)?;
    let b = g.matmul(data.f_im, w.0)?;
    let a_im = g.sub(a, b)?;
    let re2 = g.square(a_re);
    let im2 = g.square(a_im);
    let gains = g.add(re2, im2)?;
    let signal = g.mul(gains, data.mask)?;
    let signal = g.sum_axis(signal, 2)?;
    let total = g.sum_axis(gains, 2)?;
    let interference = g.sub(total, signal)?;
    let den = g.offset(interference, 1.0);
    let sinr = g.div(signal, den)?;
    let comm = rate(g, sinr, kappa);

    let mut scnrs = Vec::with_capacity(data.target.len());
    for (j, &gt) in data.target.iter().enumerate() {
        let t = response_power(g, gt, w)?;
        let mut c = None;
        for &gc in &data.clutter[j] {
            let p = response_power(g, gc, w)?;
            c = Some(match c {
                None => p,
                Some(acc) => g.add(acc, p)?,
            });
        }
        let den = match c {
            Some(c) => g.offset(c, data.rx_antennas as f64),
            None => {
                let zero = g.scale(t, 0.0);
                g.offset(zero, data.rx_antennas as f64)
            }
        };
        scnrs.push(g.div(t, den)?);
    }
    let scnr = g.concat_cols(&scnrs)?;
    let sensing = rate(g, scnr, kappa);
    Ok(RateNodes {
        sinr,
        comm,
        scnr,
        sensing,
    })
}

fn rate(g: &mut Graph, ratio: Var, kappa: f64) -> Var {
    let one_plus = g.offset(ratio, 1.0);
    let bits = g.log2(one_plus);
    g.scale(bits, kappa)
}

/// Weights of the squared shortfall penalties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalty {
    /// `ξ_k`, on user rates below `ϑ_th`.
    pub comm: f64,
    /// `ϱ_j`, on RAP rates below `ζ_th`.
    pub sensing: f64,
    /// Relative headroom: shortfalls are measured against `(1 + margin)·th`.
    pub margin: f64,
}

impl Default for Penalty {
    fn default() -> Self {
        Self {
            comm: 1000.0,
            sensing: 1000.0,
            margin: 0.2,
        }
    }
}

/// `Σ max(0, th − r)²` over the last two axes, `B × 1 × 1`.
fn shortfall(g: &mut Graph, r: Var, th: f64) -> Result<Var> {
    let neg = g.scale(r, -1.0);
    let gap = g.offset(neg, th);
    let gap = g.clamp_min_zero(gap);
    let sq = g.square(gap);
    let s = g.sum_axis(sq, 1)?;
    Ok(g.sum_axis(s, 2)?)
}

fn sum_rows_cols(g: &mut Graph, x: Var) -> Result<Var> {
    let s = g.sum_axis(x, 1)?;
    Ok(g.sum_axis(s, 2)?)
}

/// Per-sample loss `B × 1 × 1`; the batch loss is its mean.
pub fn sample_loss(
    g: &mut Graph,
    r: &RateNodes,
    spec: &RegimeSpec,
    penalty: Penalty,
) -> Result<Var> {
    let comm_sum = sum_rows_cols(g, r.comm)?;
    let sens_sum = sum_rows_cols(g, r.sensing)?;
    Ok(match spec.regime {
        Regime::SensingCentric => {
            let short = shortfall(g, r.comm, spec.vartheta_th * (1.0 + penalty.margin))?;
            let pen = g.scale(short, penalty.comm);
            g.sub(pen, sens_sum)?
        }
        Regime::CommCentric => {
            let short = shortfall(g, r.sensing, spec.zeta_th * (1.0 + penalty.margin))?;
            let pen = g.scale(short, penalty.sensing);
            g.sub(pen, comm_sum)?
        }
        Regime::Joint => {
            let c = g.scale(comm_sum, spec.eta);
            let s = g.scale(sens_sum, 1.0 - spec.eta);
            let obj = g.add(c, s)?;
            g.scale(obj, -1.0)
        }
    })
}

/// Scalar mean loss over the batch.
pub fn batch_loss(
    g: &mut Graph,
    r: &RateNodes,
    spec: &RegimeSpec,
    penalty: Penalty,
) -> Result<Var> {
    let per = sample_loss(g, r, spec, penalty)?;
    Ok(g.mean_all(per))
}
