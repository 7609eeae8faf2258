//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

/// Relative singular-value threshold used by [`rank`].
pub const RANK_REL_TOL: f64 = 1e-9;

/// Smallest eigenvalue a matrix must exceed to count as positive definite.
pub const PD_TOL: f64 = 1e-12;

/// Numerical rank: number of singular values above `RANK_REL_TOL * sigma_max`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_REL_TOL * max).count()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = symmetrized(m);
    s.symmetric_eigen().eigenvalues.min()
}

/// Errors unless `m` is square, symmetric to 1e-9 (relative) and has
/// smallest eigenvalue above [`PD_TOL`].
pub fn ensure_positive_definite(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(dim_err(name, "square", format!("{}x{}", m.nrows(), m.ncols())));
    }
    ensure_finite(m, name)?;
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::InvalidParameter {
            name,
            reason: "matrix is not symmetric".into(),
        });
    }
    let min = min_symmetric_eigenvalue(m);
    if min <= PD_TOL {
        return Err(Error::NotPositiveDefinite {
            name,
            min_eigenvalue: min,
        });
    }
    Ok(())
}

pub fn ensure_finite(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

pub fn ensure_finite_vec(v: &DVector<f64>, name: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

pub fn ensure_shape(m: &DMatrix<f64>, rows: usize, cols: usize, name: &'static str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(dim_err(
            name,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn ensure_len(v: &DVector<f64>, len: usize, name: &'static str) -> Result<()> {
    if v.len() != len {
        return Err(dim_err(name, len, v.len()));
    }
    Ok(())
}

/// `(m + m^T) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    s
}

/// Moore-Penrose left inverse `(W^T W)^{-1} W^T` of a full-column-rank matrix.
pub fn pseudo_inverse(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = rank(w);
    if r < w.ncols() {
        return Err(Error::RankDeficient {
            what: "pseudo-inverse argument",
            rank: r,
            required: w.ncols(),
        });
    }
    // SVD route: stays accurate when W^T W is poorly conditioned.
    w.clone()
        .svd(true, true)
        .pseudo_inverse(0.0)
        .map_err(|_| Error::Singular {
            context: "pseudo-inverse",
        })
}

/// Block-diagonal `[[a, 0], [0, b]]`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn matrix_power(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = &out * a;
    }
    out
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let chol = a.clone().cholesky().ok_or(Error::Singular { context })?;
    Ok(chol.solve(b))
}

/// Solves `a x = b` for a general square `a` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or(Error::Singular { context })?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular { context })
    }
}

/// `diag(values)` as a dense matrix.
pub fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// Builds a matrix from row-major nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
