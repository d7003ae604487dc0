//! Tape of operations and the reverse sweep.
//!
//! Nodes are appended in evaluation order, so the tape index order is a
//! topological order and `backward` simply walks it in reverse.

use crate::tensor::{broadcast_index, broadcast_shape, Shape, Tensor};
use crate::ShapeError;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Variance epsilon used by [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Relu(Var),
    Concat(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Square(Var),
    Sqrt(Var),
    Log2(Var),
    SumAll(Var),
    SumAxis(Var),
    MeanAll(Var),
    ClampMinZero(Var),
    FrobeniusNorm(Var),
    PowerProject {
        x: Var,
        budget: f64,
        norms: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-writer computation graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    matmul_flops: u64,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Floating point operations spent in matrix products so far (2 per multiply-add).
    pub fn matmul_flops(&self) -> u64 {
        self.matmul_flops
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf; no gradient is tracked for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracks(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa[2] != sb[1] || !(sa[0] == sb[0] || sa[0] == 1 || sb[0] == 1) {
            return Err(ShapeError::Incompatible {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let out = batched_matmul(self.value(a), self.value(b), false, false);
        self.matmul_flops += 2 * (out.batch() * sa[1] * sa[2] * sb[2]) as u64;
        let tracked = self.tracks(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), tracked))
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, a: Var) -> Var {
        let out = transpose(self.value(a));
        let tracked = self.tracks(&[a]);
        self.push(out, Op::Transpose(a), tracked)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, ShapeError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let shape = broadcast_shape(sa, sb).ok_or(ShapeError::Incompatible {
            op: name,
            lhs: sa,
            rhs: sb,
        })?;
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let mut out = Vec::with_capacity(shape.iter().product());
        for bi in 0..shape[0] {
            for r in 0..shape[1] {
                for c in 0..shape[2] {
                    out.push(f(
                        va[broadcast_index(sa, bi, r, c)],
                        vb[broadcast_index(sb, bi, r, c)],
                    ));
                }
            }
        }
        let tracked = self.tracks(&[a, b]);
        Ok(self.push(Tensor::from_vec(shape, out)?, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| k * x);
        let tracked = self.tracks(&[a]);
        self.push(out, Op::Scale(a, k), tracked)
    }

    /// `a + k` elementwise.
    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        let tracked = self.tracks(&[a]);
        self.push(out, Op::Offset(a), tracked)
    }

    /// Softmax along the last axis.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let cols = x.cols();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(cols) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let tracked = self.tracks(&[a]);
        self.push(out, Op::Softmax(a), tracked)
    }

    /// Layer normalization over the last axis with learnable `gain` and `bias`
    /// of shape `[1, 1, cols]`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, ShapeError> {
        let sx = self.shape(x);
        for p in [gain, bias] {
            let sp = self.shape(p);
            if sp != [1, 1, sx[2]] {
                return Err(ShapeError::Incompatible {
                    op: "layer_norm",
                    lhs: sx,
                    rhs: sp,
                });
            }
        }
        let cols = sx[2];
        let xv = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(sx[0] * sx[1]);
        for row in xhat.data_mut().chunks_mut(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let mut out = xhat.clone();
        for row in out.data_mut().chunks_mut(cols) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * g[c] + b[c];
            }
        }
        let tracked = self.tracks(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            tracked,
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let tracked = self.tracks(&[a]);
        self.push(out, Op::Relu(a), tracked)
    }

    /// Concatenate along the last axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, ShapeError> {
        let first = parts.first().ok_or(ShapeError::Empty("concat_cols"))?;
        let s0 = self.shape(*first);
        let mut cols = 0;
        for &p in parts {
            let sp = self.shape(p);
            if sp[0] != s0[0] || sp[1] != s0[1] {
                return Err(ShapeError::Incompatible {
                    op: "concat_cols",
                    lhs: s0,
                    rhs: sp,
                });
            }
            cols += sp[2];
        }
        let shape = [s0[0], s0[1], cols];
        let mut out = Tensor::zeros(shape);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            let pc = v.cols();
            for b in 0..s0[0] {
                for r in 0..s0[1] {
                    for c in 0..pc {
                        out.set(b, r, offset + c, v.at(b, r, c));
                    }
                }
            }
            offset += pc;
        }
        let tracked = self.tracks(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), tracked))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, ShapeError> {
        let s = self.shape(x);
        if start + len > s[2] || len == 0 {
            return Err(ShapeError::Slice {
                shape: s,
                start,
                len,
            });
        }
        let v = self.value(x);
        let mut out = Tensor::zeros([s[0], s[1], len]);
        for b in 0..s[0] {
            for r in 0..s[1] {
                for c in 0..len {
                    out.set(b, r, c, v.at(b, r, start + c));
                }
            }
        }
        let tracked = self.tracks(&[x]);
        Ok(self.push(out, Op::SliceCols { x, start }, tracked))
    }

    /// Split the last axis into equal consecutive chunks.
    pub fn split_cols(&mut self, x: Var, parts: usize) -> Result<Vec<Var>, ShapeError> {
        let s = self.shape(x);
        if parts == 0 || !s[2].is_multiple_of(parts) {
            return Err(ShapeError::Split { shape: s, parts });
        }
        let w = s[2] / parts;
        (0..parts).map(|p| self.slice_cols(x, p * w, w)).collect()
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let tracked = self.tracks(&[a]);
        self.push(out, Op::Square(a), tracked)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::sqrt);
        let tracked = self.tracks(&[a]);
        self.push(out, Op::Sqrt(a), tracked)
    }

    pub fn log2(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::log2);
        let tracked = self.tracks(&[a]);
        self.push(out, Op::Log2(a), tracked)
    }

    /// Sum of every entry, shape `[1, 1, 1]`.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let tracked = self.tracks(&[a]);
        self.push(out, Op::SumAll(a), tracked)
    }

    /// Mean of every entry, shape `[1, 1, 1]`.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        let tracked = self.tracks(&[a]);
        self.push(out, Op::MeanAll(a), tracked)
    }

    /// Sum along `axis` (0 = batch, 1 = rows, 2 = cols), keeping it with size 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, ShapeError> {
        if axis > 2 {
            return Err(ShapeError::Axis(axis));
        }
        let s = self.shape(a);
        let mut target = s;
        target[axis] = 1;
        let out = self.value(a).reduce_to(target);
        let tracked = self.tracks(&[a]);
        Ok(self.push(out, Op::SumAxis(a), tracked))
    }

    /// `max(0, x)` elementwise; same forward as [`Graph::relu`], kept separate
    /// so hinge penalties read as such in model code.
    pub fn clamp_min_zero(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let tracked = self.tracks(&[a]);
        self.push(out, Op::ClampMinZero(a), tracked)
    }

    /// Frobenius norm of each batch element, shape `[batch, 1, 1]`.
    pub fn frobenius_norm(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let b = v.batch();
        let data = (0..b)
            .map(|i| v.batch_slice(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::from_vec([b, 1, 1], data).expect("shape");
        let tracked = self.tracks(&[a]);
        self.push(out, Op::FrobeniusNorm(a), tracked)
    }

    /// Per batch element: identity when `‖x‖_F² ≤ budget`, otherwise rescale to
    /// `sqrt(budget)·x/‖x‖_F`.
    pub fn power_project(&mut self, x: Var, budget: f64) -> Var {
        let v = self.value(x);
        let b = v.batch();
        let per = v.rows() * v.cols();
        let mut out = v.clone();
        let mut norms = Vec::with_capacity(b);
        for i in 0..b {
            let sq: f64 = v.batch_slice(i).iter().map(|x| x * x).sum();
            norms.push(sq.sqrt());
            if sq > budget {
                let k = budget.sqrt() / sq.sqrt();
                for e in &mut out.data_mut()[i * per..(i + 1) * per] {
                    *e *= k;
                }
            }
        }
        let tracked = self.tracks(&[x]);
        self.push(out, Op::PowerProject { x, budget, norms }, tracked)
    }

    /// Reverse sweep from a scalar node. Gradients from any previous sweep are
    /// discarded first.
    pub fn backward(&mut self, loss: Var) -> Result<(), ShapeError> {
        let s = self.shape(loss);
        if s != [1, 1, 1] {
            return Err(ShapeError::NotScalar(s));
        }
        self.grads.clear();
        self.grads.resize_with(self.nodes.len(), || None);
        self.grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let contributions = self.local_grads(i, &g);
            self.grads[i] = Some(g);
            for (v, t) in contributions {
                if !self.nodes[v.0].needs_grad {
                    continue;
                }
                match &mut self.grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let mut res = Vec::with_capacity(2);
                if self.nodes[a.0].needs_grad {
                    let ga = batched_matmul(g, vb, false, true);
                    res.push((*a, ga.reduce_to(va.shape())));
                }
                if self.nodes[b.0].needs_grad {
                    let gb = batched_matmul(va, g, true, false);
                    res.push((*b, gb.reduce_to(vb.shape())));
                }
                res
            }
            Op::Transpose(a) => vec![(*a, transpose(g))],
            Op::Add(a, b) => vec![
                (*a, g.reduce_to(self.shape(*a))),
                (*b, g.reduce_to(self.shape(*b))),
            ],
            Op::Sub(a, b) => vec![
                (*a, g.reduce_to(self.shape(*a))),
                (*b, g.map(|x| -x).reduce_to(self.shape(*b))),
            ],
            Op::Mul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let shape = g.shape();
                let mut ga = Tensor::zeros(shape);
                let mut gb = Tensor::zeros(shape);
                let mut k = 0;
                for bi in 0..shape[0] {
                    for r in 0..shape[1] {
                        for c in 0..shape[2] {
                            let gv = g.data()[k];
                            ga.data_mut()[k] = gv * vb[broadcast_index(sb, bi, r, c)];
                            gb.data_mut()[k] = gv * va[broadcast_index(sa, bi, r, c)];
                            k += 1;
                        }
                    }
                }
                vec![(*a, ga.reduce_to(sa)), (*b, gb.reduce_to(sb))]
            }
            Op::Div(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let vb = self.value(*b).data();
                let shape = g.shape();
                let mut ga = Tensor::zeros(shape);
                let mut gb = Tensor::zeros(shape);
                let mut k = 0;
                for bi in 0..shape[0] {
                    for r in 0..shape[1] {
                        for c in 0..shape[2] {
                            let gv = g.data()[k];
                            let den = vb[broadcast_index(sb, bi, r, c)];
                            ga.data_mut()[k] = gv / den;
                            gb.data_mut()[k] = -gv * out.data()[k] / den;
                            k += 1;
                        }
                    }
                }
                vec![(*a, ga.reduce_to(sa)), (*b, gb.reduce_to(sb))]
            }
            Op::Scale(a, k) => vec![(*a, g.map(|x| k * x))],
            Op::Offset(a) => vec![(*a, g.clone())],
            Op::Softmax(a) => {
                let cols = out.cols();
                let mut gx = g.clone();
                for (gr, yr) in gx.data_mut().chunks_mut(cols).zip(out.data().chunks(cols)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (gv, y) in gr.iter_mut().zip(yr) {
                        *gv = y * (*gv - dot);
                    }
                }
                vec![(*a, gx)]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let cols = out.cols();
                let gain_v = self.value(*gain).data();
                let mut gx = Tensor::zeros(xhat.shape());
                let mut ggain = Tensor::zeros([1, 1, cols]);
                let mut gbias = Tensor::zeros([1, 1, cols]);
                let n = cols as f64;
                for (row, ((gr, xr), is)) in g
                    .data()
                    .chunks(cols)
                    .zip(xhat.data().chunks(cols))
                    .zip(inv_std)
                    .enumerate()
                {
                    let mut mean_d = 0.0;
                    let mut mean_dx = 0.0;
                    for c in 0..cols {
                        let d = gr[c] * gain_v[c];
                        mean_d += d;
                        mean_dx += d * xr[c];
                        ggain.data_mut()[c] += gr[c] * xr[c];
                        gbias.data_mut()[c] += gr[c];
                    }
                    mean_d /= n;
                    mean_dx /= n;
                    let dst = &mut gx.data_mut()[row * cols..(row + 1) * cols];
                    for c in 0..cols {
                        let d = gr[c] * gain_v[c];
                        dst[c] = is * (d - mean_d - xr[c] * mean_dx);
                    }
                }
                vec![(*x, gx), (*gain, ggain), (*bias, gbias)]
            }
            Op::Relu(a) | Op::ClampMinZero(a) => {
                let x = self.value(*a).data();
                let mut gx = g.clone();
                for (gv, xv) in gx.data_mut().iter_mut().zip(x) {
                    if *xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                vec![(*a, gx)]
            }
            Op::Concat(parts) => {
                let mut res = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let sp = self.shape(p);
                    let mut gp = Tensor::zeros(sp);
                    for b in 0..sp[0] {
                        for r in 0..sp[1] {
                            for c in 0..sp[2] {
                                gp.set(b, r, c, g.at(b, r, offset + c));
                            }
                        }
                    }
                    offset += sp[2];
                    res.push((p, gp));
                }
                res
            }
            Op::SliceCols { x, start } => {
                let sx = self.shape(*x);
                let mut gx = Tensor::zeros(sx);
                for b in 0..sx[0] {
                    for r in 0..sx[1] {
                        for c in 0..g.cols() {
                            gx.set(b, r, start + c, g.at(b, r, c));
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                let mut gx = g.clone();
                for (gv, xv) in gx.data_mut().iter_mut().zip(x) {
                    *gv *= 2.0 * xv;
                }
                vec![(*a, gx)]
            }
            Op::Sqrt(a) => {
                let mut gx = g.clone();
                for (gv, y) in gx.data_mut().iter_mut().zip(out.data()) {
                    *gv /= 2.0 * y;
                }
                vec![(*a, gx)]
            }
            Op::Log2(a) => {
                let x = self.value(*a).data();
                let mut gx = g.clone();
                for (gv, xv) in gx.data_mut().iter_mut().zip(x) {
                    *gv /= xv * std::f64::consts::LN_2;
                }
                vec![(*a, gx)]
            }
            Op::SumAll(a) => vec![(*a, Tensor::filled(self.shape(*a), g.item()))],
            Op::MeanAll(a) => {
                let s = self.shape(*a);
                let n: usize = s.iter().product();
                vec![(*a, Tensor::filled(s, g.item() / n as f64))]
            }
            Op::SumAxis(a) => {
                let s = self.shape(*a);
                let gs = g.shape();
                let mut gx = Tensor::zeros(s);
                for b in 0..s[0] {
                    for r in 0..s[1] {
                        for c in 0..s[2] {
                            gx.set(b, r, c, g.data()[broadcast_index(gs, b, r, c)]);
                        }
                    }
                }
                vec![(*a, gx)]
            }
            Op::FrobeniusNorm(a) => {
                let x = self.value(*a);
                let per = x.rows() * x.cols();
                let mut gx = x.clone();
                for b in 0..x.batch() {
                    let n = out.data()[b];
                    let k = if n > 0.0 { g.data()[b] / n } else { 0.0 };
                    for e in &mut gx.data_mut()[b * per..(b + 1) * per] {
                        *e *= k;
                    }
                }
                vec![(*a, gx)]
            }
            Op::PowerProject { x, budget, norms } => {
                let xv = self.value(*x);
                let per = xv.rows() * xv.cols();
                let mut gx = g.clone();
                for (b, &n) in norms.iter().enumerate() {
                    if n * n <= *budget {
                        continue;
                    }
                    let xs = xv.batch_slice(b);
                    let gs = &mut gx.data_mut()[b * per..(b + 1) * per];
                    let dot: f64 = xs.iter().zip(gs.iter()).map(|(a, b)| a * b).sum();
                    let k = budget.sqrt() / n;
                    for (gv, xe) in gs.iter_mut().zip(xs) {
                        *gv = k * (*gv - dot * xe / (n * n));
                    }
                }
                vec![(*x, gx)]
            }
        }
    }
}

fn transpose(x: &Tensor) -> Tensor {
    let [b, r, c] = x.shape();
    let mut out = Tensor::zeros([b, c, r]);
    for bi in 0..b {
        for ri in 0..r {
            for ci in 0..c {
                out.set(bi, ci, ri, x.at(bi, ri, ci));
            }
        }
    }
    out
}

/// `op(a) · op(b)` per batch element with batch broadcasting, where `op`
/// optionally transposes the last two axes.
fn batched_matmul(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Tensor {
    let [ba, ar, ac] = a.shape();
    let [bb, br, bc] = b.shape();
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    debug_assert_eq!(k, k2);
    let batch = ba.max(bb);
    let mut out = Tensor::zeros([batch, m, n]);
    let od = out.data_mut();
    let (ad, bd) = (a.data(), b.data());
    for bi in 0..batch {
        let ao = if ba == 1 { 0 } else { bi * ar * ac };
        let bo = if bb == 1 { 0 } else { bi * br * bc };
        let oo = bi * m * n;
        for i in 0..m {
            for p in 0..k {
                let av = if ta {
                    ad[ao + p * ac + i]
                } else {
                    ad[ao + i * ac + p]
                };
                let orow = &mut od[oo + i * n..oo + (i + 1) * n];
                if tb {
                    for (j, o) in orow.iter_mut().enumerate() {
                        *o += av * bd[bo + j * bc + p];
                    }
                } else {
                    let brow = &bd[bo + p * bc..bo + (p + 1) * bc];
                    for (o, bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
        }
    }
    out
}
