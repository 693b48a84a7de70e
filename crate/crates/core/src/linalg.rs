//! Small dense linear algebra helpers built on nalgebra.
//!
//! Every inverse and square root here goes through a symmetric
//! eigendecomposition. A matrix whose smallest eigenvalue falls below
//! [`RANK_TOL`] times its largest is treated as singular and reported as an
//! error; no pseudo-inverse fallback is ever taken.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a symmetric matrix is singular.
pub const RANK_TOL: f64 = 1e-12;

/// Relative tolerance for clipping slightly negative eigenvalues of a PSD
/// matrix to zero.
pub const PSD_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    Ok(SymmetricEigen::new(symmetrize(m)))
}

fn check_nonsingular(values: &DVector<f64>, what: &str) -> Result<()> {
    let max = values.max();
    let min = values.min();
    if !(max > 0.0) || min <= RANK_TOL * max {
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        return Err(Error::RankDeficient {
            what: what.to_string(),
            ratio,
        });
    }
    Ok(())
}

fn rebuild(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = &eig.eigenvectors;
    let d = eig.eigenvalues.map(f);
    let scaled = v * DMatrix::from_diagonal(&d);
    symmetrize(&(scaled * v.transpose()))
}

/// Errors unless `m` is symmetric positive definite in the rank sense.
pub fn check_full_rank(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let eig = eigen(m, what)?;
    check_nonsingular(&eig.eigenvalues, what)
}

pub fn sym_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = eigen(m, what)?;
    check_nonsingular(&eig.eigenvalues, what)?;
    Ok(rebuild(&eig, |l| 1.0 / l))
}

/// Symmetric inverse square root `m^{-1/2}`.
pub fn sym_inv_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = eigen(m, what)?;
    check_nonsingular(&eig.eigenvalues, what)?;
    Ok(rebuild(&eig, |l| 1.0 / l.sqrt()))
}

/// Symmetric square root of a PSD matrix. Eigenvalues down to
/// `-PSD_TOL * max` are clipped to zero; anything more negative is an error.
pub fn sym_sqrt_psd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = eigen(m, what)?;
    let max = eig.eigenvalues.max().max(0.0);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * max {
        return Err(Error::Numerical(format!(
            "{what} is not positive semidefinite (smallest eigenvalue {min:.3e})"
        )));
    }
    Ok(rebuild(&eig, |l| l.max(0.0).sqrt()))
}

/// Column-stacking `vec` operator.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// `(b ⊗ I_k)' S (b ⊗ I_k)` for a `(len(b)·k)`-square `S`, i.e. the
/// `b`-weighted sum of its `k×k` blocks.
pub fn kron_quad(s: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> DMatrix<f64> {
    let m = b.len();
    debug_assert_eq!(s.nrows(), m * k);
    let mut out = DMatrix::zeros(k, k);
    for a in 0..m {
        for c in 0..m {
            let w = b[a] * b[c];
            if w != 0.0 {
                out += s.view((a * k, c * k), (k, k)) * w;
            }
        }
    }
    out
}

/// `(B' ⊗ I_k) S (B ⊗ I_k)` for a square `B` of size `m` and `S` of size `m·k`.
pub fn kron_congruence(s: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let bk = b.kronecker(&DMatrix::identity(k, k));
    symmetrize(&(bk.transpose() * s * bk))
}

/// Least-squares residuals of each column of `y` on `x`.
pub fn ols_residuals(y: &DMatrix<f64>, x: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let xtx = x.transpose() * x;
    let inv = sym_inverse(&xtx, what)?;
    let coef = inv * (x.transpose() * y);
    Ok(y - x * coef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let h = sym_inv_sqrt(&m, "m").unwrap();
        let inv = sym_inverse(&m, "m").unwrap();
        assert_relative_eq!(&h * &h, inv, epsilon = 1e-12);
        assert_relative_eq!(&h * &m * &h, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn singular_is_refused() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            sym_inverse(&m, "m"),
            Err(Error::RankDeficient { .. })
        ));
        assert!(sym_inverse(&DMatrix::zeros(1, 1), "z").is_err());
    }

    #[test]
    fn psd_sqrt_clips_roundoff() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = sym_sqrt_psd(&m, "m").unwrap();
        assert_relative_eq!(&s * &s, m, epsilon = 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(sym_sqrt_psd(&bad, "bad").is_err());
    }

    #[test]
    fn kron_quad_matches_explicit_kronecker() {
        let k = 2;
        let s = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 + if i == j { 4.0 } else { 0.0 });
        let s = symmetrize(&s);
        let b = DVector::from_vec(vec![1.0, -0.5, 2.0]);
        let bk = DMatrix::from_column_slice(3, 1, b.as_slice()).kronecker(&DMatrix::identity(k, k));
        let explicit = bk.transpose() * &s * &bk;
        assert_relative_eq!(kron_quad(&s, &b, k), explicit, epsilon = 1e-12);
    }
}
