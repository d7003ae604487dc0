//! Hermitian eigendecomposition by cyclic Jacobi rotations.
//!
//! The `n × n` Hermitian matrix `A + iB` is embedded as the real symmetric
//! `2n × 2n` matrix `[[A, −B], [B, A]]`. Every eigenvalue of the complex
//! matrix appears twice in the embedding, with real eigenvectors `[x; y]`
//! and `[−y; x]` that both map to the complex line through `x + iy`.
//! After the real sweep, one complex eigenvector per pair is kept by
//! Gram–Schmidt in ascending eigenvalue order.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::CMat;

/// Convergence threshold on the off-diagonal Frobenius mass, relative to the
/// matrix norm.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> CMat {
        let n = self.values.len();
        let mut lam = CMat::zeros(n, n);
        for (i, &v) in self.values.iter().enumerate() {
            lam[(i, i)] = Complex64::new(v, 0.0);
        }
        &self.vectors * lam * self.vectors.adjoint()
    }
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
///
/// Only the Hermitian part `(M + Mᴴ)/2` is used.
pub fn hermitian_eig(m: &CMat) -> HermitianEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "hermitian_eig needs a square matrix");
    if n == 0 {
        return HermitianEigen {
            values: Vec::new(),
            vectors: CMat::zeros(0, 0),
        };
    }
    let mut s = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let h = (m[(r, c)] + m[(c, r)].conj()) * 0.5;
            s[(r, c)] = h.re;
            s[(r + n, c + n)] = h.re;
            s[(r, c + n)] = -h.im;
            s[(r + n, c)] = h.im;
        }
    }
    let (vals, vecs) = jacobi_symmetric(s);

    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));

    let mut values = Vec::with_capacity(n);
    let mut kept: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for &k in &order {
        if kept.len() == n {
            break;
        }
        let mut u: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(vecs[(i, k)], vecs[(i + n, k)]))
            .collect();
        for q in &kept {
            let proj: Complex64 = q.iter().zip(&u).map(|(a, b)| a.conj() * b).sum();
            for (ui, qi) in u.iter_mut().zip(q) {
                *ui -= proj * qi;
            }
        }
        let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        // each real vector has unit norm; a surviving component below 1/2
        // means this direction is already represented
        if norm > 0.5 {
            for z in &mut u {
                *z /= norm;
            }
            kept.push(u);
            values.push(vals[k]);
        }
    }
    debug_assert_eq!(kept.len(), n);

    let vectors = CMat::from_fn(n, n, |r, c| kept[c][r]);
    HermitianEigen { values, vectors }
}

/// Cyclic Jacobi for a real symmetric matrix. Returns eigenvalues (unsorted)
/// and the matrix of eigenvectors as columns.
fn jacobi_symmetric(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| a[(r, c)] * a[(r, c)])
            .sum::<f64>()
            .sqrt();
        if off <= OFF_DIAGONAL_TOL * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}
