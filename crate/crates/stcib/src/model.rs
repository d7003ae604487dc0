//! Set Transformer mapping a set of estimated user channels to a beamformer.
//!
//! Each user contributes one row `[Re f̂_k; Im f̂_k]` of width
//! `d = 2·N_T·M_T`. The encoder is two induced set attention blocks, the
//! decoder pools the set onto `K + 1` learned seeds (one per beam column,
//! column 0 being the sensing stream) and refines them with two self-attention
//! blocks. Rows of the output are read back as I/Q halves of the beam columns
//! after norm clipping to the power budget.

use std::collections::HashMap;

use cfisac_autodiff::{Graph, Tensor, Var};
use cfisac_core::linalg::{CMat, CVec};
use cfisac_core::SystemConfig;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, StcibError};

/// Hyperparameters fixing every parameter shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    /// `N_T·M_T`.
    pub antennas: usize,
    pub users: usize,
    pub heads: usize,
    pub inducing: usize,
    /// Hidden width of every row-wise feed-forward layer.
    pub hidden: usize,
}

impl Architecture {
    pub fn new(antennas: usize, users: usize, heads: usize, inducing: usize) -> Result<Self> {
        let arch = Self {
            antennas,
            users,
            heads,
            inducing,
            hidden: 4 * antennas,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Defaults for a deployment: 2 heads up to `d = 16`, 4 beyond, 16
    /// inducing points.
    pub fn for_config(config: &SystemConfig) -> Result<Self> {
        let d = 2 * config.stacked_dim();
        Self::new(config.stacked_dim(), config.users, if d <= 16 { 2 } else { 4 }, 16)
    }

    pub fn d(&self) -> usize {
        2 * self.antennas
    }

    pub fn head_dim(&self) -> usize {
        self.d() / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(StcibError::Architecture(m));
        if self.antennas == 0 || self.users == 0 || self.heads == 0 || self.inducing == 0 {
            return bad("all dimensions must be positive".into());
        }
        if !self.d().is_multiple_of(self.heads) {
            return bad(format!("d = {} is not divisible by {} heads", self.d(), self.heads));
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive".into());
        }
        Ok(())
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl Params {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_parts(parts: Vec<(String, Tensor)>) -> Self {
        let mut p = Self::new();
        for (n, t) in parts {
            p.push(&n, t);
        }
        p
    }

    fn push(&mut self, name: &str, t: Tensor) {
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(t);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

type ShapeList = Vec<(String, [usize; 3])>;

fn push_rff(out: &mut ShapeList, p: &str, d: usize, h: usize) {
    out.push((format!("{p}.w1"), [1, d, h]));
    out.push((format!("{p}.b1"), [1, 1, h]));
    out.push((format!("{p}.w2"), [1, h, d]));
    out.push((format!("{p}.b2"), [1, 1, d]));
}

fn push_ln(out: &mut ShapeList, p: &str, d: usize) {
    out.push((format!("{p}.gain"), [1, 1, d]));
    out.push((format!("{p}.bias"), [1, 1, d]));
}

fn push_mab(out: &mut ShapeList, p: &str, d: usize, h: usize) {
    for w in ["wq", "wk", "wv", "wo"] {
        out.push((format!("{p}.{w}"), [1, d, d]));
    }
    push_ln(out, &format!("{p}.ln1"), d);
    push_rff(out, &format!("{p}.rff"), d, h);
    push_ln(out, &format!("{p}.ln2"), d);
}

/// Shapes of every parameter, in registration order.
pub fn parameter_shapes(arch: &Architecture) -> ShapeList {
    let (d, h) = (arch.d(), arch.hidden);
    let mut out = Vec::new();
    push_ln(&mut out, "pre.ln", d);
    push_rff(&mut out, "pre.rff", d, h);
    for e in ["enc0", "enc1"] {
        out.push((format!("{e}.inducing"), [1, arch.inducing, d]));
        push_mab(&mut out, &format!("{e}.mab0"), d, h);
        push_mab(&mut out, &format!("{e}.mab1"), d, h);
    }
    out.push(("pma.seeds".into(), [1, arch.users + 1, d]));
    push_rff(&mut out, "pma.rff", d, h);
    push_mab(&mut out, "pma.mab", d, h);
    push_mab(&mut out, "sab0", d, h);
    push_mab(&mut out, "sab1", d, h);
    push_rff(&mut out, "out.rff", d, h);
    out
}

fn init_tensor(name: &str, shape: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    let mut t = Tensor::zeros(shape);
    match leaf {
        "gain" => t = Tensor::filled(shape, 1.0),
        "bias" | "b1" | "b2" => {}
        "inducing" | "seeds" => {
            for v in t.data_mut() {
                *v = rng.sample::<f64, _>(StandardNormal) * 0.02;
            }
        }
        _ => {
            let limit = (6.0 / (shape[1] + shape[2]) as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
    }
    t
}

/// Parameters placed on a graph, as trainable leaves or constants.
pub struct Bound {
    vars: HashMap<String, Var>,
    order: Vec<Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        self.vars[name]
    }

    /// Handles in the order of [`Params::tensors`].
    pub fn vars(&self) -> &[Var] {
        &self.order
    }
}

/// Nodes of one forward pass.
pub struct Forward {
    /// Layer-normalized, projected input features, `B × K × d`.
    pub features: Var,
    /// Encoder output `U`, `B × K × d`.
    pub encoded: Var,
    /// Decoder output before the power projection, `B × (K+1) × d`.
    pub raw: Var,
    /// Power-projected output `W̃`.
    pub output: Var,
    /// Matrix-product flops spent inside decoder attention.
    pub decoder_attention_flops: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: Params,
}

struct Ctx<'a> {
    g: &'a mut Graph,
    p: &'a Bound,
    arch: &'a Architecture,
    attention_flops: u64,
}

impl Ctx<'_> {
    fn linear(&mut self, x: Var, w: &str, b: &str) -> Result<Var> {
        let y = self.g.matmul(x, self.p.var(w))?;
        Ok(self.g.add(y, self.p.var(b))?)
    }

    fn rff(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let h = self.linear(x, &format!("{prefix}.w1"), &format!("{prefix}.b1"))?;
        let h = self.g.relu(h);
        self.linear(h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
    }

    fn layer_norm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let gain = self.p.var(&format!("{prefix}.gain"));
        let bias = self.p.var(&format!("{prefix}.bias"));
        Ok(self.g.layer_norm(x, gain, bias)?)
    }

    fn multihead(&mut self, x: Var, y: Var, prefix: &str) -> Result<Var> {
        let w = |n: &str| self.p.var(&format!("{prefix}.{n}"));
        let (wq, wk, wv, wo) = (w("wq"), w("wk"), w("wv"), w("wo"));
        let q = self.g.matmul(x, wq)?;
        let k = self.g.matmul(y, wk)?;
        let v = self.g.matmul(y, wv)?;
        let before = self.g.matmul_flops();
        let cat = split_heads_attention(self.g, q, k, v, self.arch.heads)?;
        self.attention_flops += self.g.matmul_flops() - before;
        Ok(self.g.matmul(cat, wo)?)
    }

    fn mab(&mut self, x: Var, y: Var, prefix: &str) -> Result<Var> {
        let att = self.multihead(x, y, prefix)?;
        let j = self.g.add(x, att)?;
        let j = self.layer_norm(j, &format!("{prefix}.ln1"))?;
        let f = self.rff(j, &format!("{prefix}.rff"))?;
        let o = self.g.add(j, f)?;
        self.layer_norm(o, &format!("{prefix}.ln2"))
    }

    fn isab(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let inducing = self.p.var(&format!("{prefix}.inducing"));
        let h = self.mab(inducing, x, &format!("{prefix}.mab0"))?;
        self.mab(x, h, &format!("{prefix}.mab1"))
    }
}

/// `softmax(scale · Q Kᵀ) V` with the softmax taken along each row.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var, scale: f64) -> Result<Var> {
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, scale);
    let weights = g.softmax_rows(scores);
    Ok(g.matmul(weights, v)?)
}

/// Split projected `q`, `k`, `v` into `heads` column blocks, attend within
/// each with scale `1/√(d/heads)` and concatenate the results.
pub fn split_heads_attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    let d = g.shape(q)[2];
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(StcibError::Architecture(format!("{d} columns over {heads} heads")));
    }
    let (qs, ks, vs) = (g.split_cols(q, heads)?, g.split_cols(k, heads)?, g.split_cols(v, heads)?);
    let scale = 1.0 / ((d / heads) as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for i in 0..heads {
        outs.push(attention(g, qs[i], ks[i], vs[i], scale)?);
    }
    Ok(g.concat_cols(&outs)?)
}

/// Multi-head attention of queries `x` over keys and values `y` with `d × d`
/// projections `[W_q, W_k, W_v, W_o]`.
pub fn multihead(g: &mut Graph, x: Var, y: Var, w: [Var; 4], heads: usize) -> Result<Var> {
    let q = g.matmul(x, w[0])?;
    let k = g.matmul(y, w[1])?;
    let v = g.matmul(y, w[2])?;
    let cat = split_heads_attention(g, q, k, v, heads)?;
    Ok(g.matmul(cat, w[3])?)
}

impl Model {
    /// Fresh parameters: Xavier-uniform weights, zero biases, unit gains,
    /// inducing points and seeds drawn from `N(0, 0.02²)`.
    pub fn init(arch: Architecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        arch.validate()?;
        let mut params = Params::new();
        for (name, shape) in parameter_shapes(&arch) {
            let t = init_tensor(&name, shape, rng);
            params.push(&name, t);
        }
        Ok(Self { arch, params })
    }

    /// Place the parameters on `g`; `trainable` decides whether gradients
    /// flow into them.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let mut vars = HashMap::with_capacity(self.params.len());
        let mut order = Vec::with_capacity(self.params.len());
        for (n, t) in self.params.names.iter().zip(&self.params.tensors) {
            let v = if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            };
            vars.insert(n.clone(), v);
            order.push(v);
        }
        Bound { vars, order }
    }

    /// Full forward pass on a `B × K × d` input node.
    pub fn forward(&self, g: &mut Graph, p: &Bound, input: Var, budget: f64) -> Result<Forward> {
        let s = g.shape(input);
        if s[1] != self.arch.users || s[2] != self.arch.d() {
            return Err(StcibError::Architecture(format!(
                "input {:?} does not match {} users × d = {}",
                s,
                self.arch.users,
                self.arch.d()
            )));
        }
        let mut cx = Ctx {
            g,
            p,
            arch: &self.arch,
            attention_flops: 0,
        };
        let x = cx.layer_norm(input, "pre.ln")?;
        let features = cx.rff(x, "pre.rff")?;
        let u = cx.isab(features, "enc0")?;
        let encoded = cx.isab(u, "enc1")?;

        cx.attention_flops = 0;
        let pooled_in = cx.rff(encoded, "pma.rff")?;
        let seeds = cx.p.var("pma.seeds");
        let z = cx.mab(seeds, pooled_in, "pma.mab")?;
        let z = cx.mab(z, z, "sab0")?;
        let z = cx.mab(z, z, "sab1")?;
        let raw = cx.rff(z, "out.rff")?;
        let decoder_attention_flops = cx.attention_flops;
        let output = cx.g.power_project(raw, budget);
        Ok(Forward {
            features,
            encoded,
            raw,
            output,
            decoder_attention_flops,
        })
    }

    /// Beamformers for a batch of channel sets. Parameters are not modified.
    pub fn infer(&self, f_hat: &[Vec<CVec>], budget: f64) -> Result<Vec<CMat>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let input = g.constant(encode_inputs(f_hat, self.arch.antennas)?);
        let fw = self.forward(&mut g, &p, input, budget)?;
        Ok(decode_outputs(g.value(fw.output), self.arch.antennas))
    }
}

/// `B × K × 2N` tensor with row `k` of sample `b` equal to
/// `[Re f̂_k; Im f̂_k]`.
pub fn encode_inputs(f_hat: &[Vec<CVec>], antennas: usize) -> Result<Tensor> {
    let users = f_hat.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(f_hat.len() * users * 2 * antennas);
    for sample in f_hat {
        if sample.len() != users || sample.iter().any(|f| f.len() != antennas) {
            return Err(StcibError::Architecture(format!(
                "expected {users} channels of length {antennas}"
            )));
        }
        for f in sample {
            data.extend(f.iter().map(|z| z.re));
            data.extend(f.iter().map(|z| z.im));
        }
    }
    Ok(Tensor::from_vec([f_hat.len(), users, 2 * antennas], data)?)
}

/// Inverse of the I/Q row layout: row `j` of each sample becomes beam
/// column `j` of an `N × (K+1)` complex matrix.
pub fn decode_outputs(z: &Tensor, antennas: usize) -> Vec<CMat> {
    let cols = z.rows();
    (0..z.batch())
        .map(|b| {
            CMat::from_fn(antennas, cols, |n, j| {
                Complex64::new(z.at(b, j, n), z.at(b, j, antennas + n))
            })
        })
        .collect()
}

/// Beam matrices back to the `B × (K+1) × 2N` row layout.
pub fn encode_outputs(w: &[CMat]) -> Tensor {
    let (n, cols) = w.first().map_or((0, 0), |m| m.shape());
    let mut t = Tensor::zeros([w.len(), cols, 2 * n]);
    for (b, m) in w.iter().enumerate() {
        for j in 0..cols {
            for r in 0..n {
                t.set(b, j, r, m[(r, j)].re);
                t.set(b, j, n + r, m[(r, j)].im);
            }
        }
    }
    t
}
