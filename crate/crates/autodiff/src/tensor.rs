//! Dense row-major tensors with exactly three axes: `batch × rows × cols`.

use std::fmt;

use crate::ShapeError;

/// Shape of a [`Tensor`], always `[batch, rows, cols]`.
pub type Shape = [usize; 3];

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self, ShapeError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ShapeError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// A single-batch matrix built from a closure over `(row, col)`.
    pub fn matrix_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self {
            shape: [1, rows, cols],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: [1, 1, 1],
            data: vec![value],
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, b: usize, r: usize, c: usize) -> f64 {
        self.data[(b * self.shape[1] + r) * self.shape[2] + c]
    }

    #[inline]
    pub fn set(&mut self, b: usize, r: usize, c: usize, value: f64) {
        let idx = (b * self.shape[1] + r) * self.shape[2] + c;
        self.data[idx] = value;
    }

    /// Value of a `[1, 1, 1]` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Slice of batch element `b` as a contiguous `rows × cols` block.
    pub fn batch_slice(&self, b: usize) -> &[f64] {
        let n = self.shape[1] * self.shape[2];
        &self.data[b * n..(b + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// In-place `self += other` for equal shapes.
    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Sum over broadcast axes so that the result has `target` shape.
    pub(crate) fn reduce_to(&self, target: Shape) -> Tensor {
        if self.shape == target {
            return self.clone();
        }
        let mut out = Tensor::zeros(target);
        let [b, r, c] = self.shape;
        for bi in 0..b {
            let tb = if target[0] == 1 { 0 } else { bi };
            for ri in 0..r {
                let tr = if target[1] == 1 { 0 } else { ri };
                for ci in 0..c {
                    let tc = if target[2] == 1 { 0 } else { ci };
                    let v = self.at(bi, ri, ci);
                    let idx = (tb * target[1] + tr) * target[2] + tc;
                    out.data[idx] += v;
                }
            }
        }
        out
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// Broadcast two shapes axis by axis (each axis equal, or one of them 1).
pub(crate) fn broadcast_shape(a: Shape, b: Shape) -> Option<Shape> {
    let mut out = [0; 3];
    for i in 0..3 {
        out[i] = match (a[i], b[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Element index into a tensor of `shape` for output position `(b, r, c)` under broadcasting.
#[inline]
pub(crate) fn broadcast_index(shape: Shape, b: usize, r: usize, c: usize) -> usize {
    let bb = if shape[0] == 1 { 0 } else { b };
    let rr = if shape[1] == 1 { 0 } else { r };
    let cc = if shape[2] == 1 { 0 } else { c };
    (bb * shape[1] + rr) * shape[2] + cc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_to_sums_broadcast_axes() {
        let t = Tensor::from_vec([2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let r = t.reduce_to([1, 1, 3]);
        assert_eq!(r.data(), &[18.0, 22.0, 26.0]);
        let r = t.reduce_to([2, 1, 1]);
        assert_eq!(r.data(), &[15.0, 51.0]);
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape([1, 3, 4], [5, 3, 1]), Some([5, 3, 4]));
        assert_eq!(broadcast_shape([2, 3, 4], [5, 3, 4]), None);
    }

    #[test]
    fn rejects_bad_length() {
        assert!(Tensor::from_vec([1, 2, 2], vec![0.0; 3]).is_err());
    }
}
