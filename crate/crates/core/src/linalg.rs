//! Complex dense matrix helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{CoreError, Result};
pub use crate::localization::eig::{hermitian_eig, HermitianEigen};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Tolerance for treating slightly negative eigenvalues as zero.
pub const PSD_TOL: f64 = 1e-8;

#[inline]
pub fn c64(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Hermitian PSD square root `L = U diag(√λ) Uᴴ`, clipping eigenvalues that
/// are negative within `PSD_TOL · ‖M‖`.
pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    let e = hermitian_eig(m);
    let scale = m.norm().max(1.0);
    let n = e.values.len();
    let mut d = CMat::zeros(n, n);
    for (i, &v) in e.values.iter().enumerate() {
        if v < -PSD_TOL * scale {
            return Err(CoreError::NotPsd(v));
        }
        d[(i, i)] = c64(v.max(0.0).sqrt());
    }
    Ok(&e.vectors * d * e.vectors.adjoint())
}

/// Project onto the PSD cone by clipping negative eigenvalues at zero.
pub fn clip_to_psd(m: &CMat) -> Result<CMat> {
    let e = hermitian_eig(m);
    let scale = m.norm().max(1.0);
    let n = e.values.len();
    let mut d = CMat::zeros(n, n);
    for (i, &v) in e.values.iter().enumerate() {
        if v < -PSD_TOL * scale {
            return Err(CoreError::NotPsd(v));
        }
        d[(i, i)] = c64(v.max(0.0));
    }
    Ok(&e.vectors * d * e.vectors.adjoint())
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eig(m)
        .values
        .first()
        .copied()
        .unwrap_or(0.0)
}

/// Stack column vectors vertically.
pub fn vstack(parts: &[CVec]) -> CVec {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = CVec::zeros(n);
    let mut o = 0;
    for p in parts {
        out.rows_mut(o, p.len()).copy_from(p);
        o += p.len();
    }
    out
}

/// `‖Aᴴ A‖`-free squared Frobenius norm.
pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Real-embedded copy of a real matrix as complex.
pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(c64)
}
