//! Dense symmetric linear algebra shared by every diagnostic.
//!
//! Matrices here are small (p, q up to a few hundred), so everything is
//! dense `nalgebra::DMatrix<f64>`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for treating a singular value as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Relative tolerance for the symmetry check on user-supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Spectral decomposition `M = V diag(values) V^T` of a symmetric matrix,
/// eigenvalues sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

pub(crate) fn ensure_square(name: &str, m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(format!("{name} (square)"), m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidArgument(format!("{name} is empty")));
    }
    Ok(m.nrows())
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest relative deviation from symmetry, `max|M - M^T| / max|M|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Checks symmetry within `tol` and returns the exactly symmetric `(M + M^T)/2`.
pub fn symmetrize_checked(name: &str, m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    ensure_square(name, m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
    }
    let asym = asymmetry(m);
    if asym > tol {
        return Err(Error::NotSymmetric {
            matrix: name.to_string(),
            asymmetry: asym,
        });
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Eigendecomposition of a symmetric matrix, values in descending order.
pub fn eig_sym(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let sym = symmetrize_checked("M", m, SYMMETRY_TOL)?;
    Ok(eig_sym_unchecked(sym))
}

/// Same as [`eig_sym`] for matrices that are symmetric by construction
/// (products like `R A R` accumulate asymmetry at rounding level).
pub(crate) fn eig_sym_unchecked(m: DMatrix<f64>) -> EigenDecomposition {
    let n = m.nrows();
    let sym = (&m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    EigenDecomposition { values, vectors }
}

/// Eigenvalues only, descending.
pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    eig_sym_unchecked(m.clone()).values
}

/// Fails with `NotPositiveDefinite` unless every eigenvalue is strictly positive.
pub(crate) fn ensure_spd(name: &str, m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let eig = eig_sym_unchecked(m.clone());
    let min = eig.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite {
            matrix: name.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(eig)
}

/// `M^{-1/2}` for a symmetric positive definite `M`.
pub fn inv_sqrt_sym(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrize_checked("M", m, SYMMETRY_TOL)?;
    let eig = ensure_spd("M", &sym)?;
    let d = eig.values.map(|v| 1.0 / v.sqrt());
    let r = &eig.vectors * DMatrix::from_diagonal(&d) * eig.vectors.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Singular values in descending order.
pub fn singular_values(h: &DMatrix<f64>) -> DVector<f64> {
    let mut sv: Vec<f64> = h.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(sv)
}

/// Numerical rank with threshold `RANK_TOL * largest singular value`.
pub fn rank(h: &DMatrix<f64>) -> usize {
    let sv = singular_values(h);
    if sv.is_empty() || sv[0] == 0.0 {
        return 0;
    }
    let cut = RANK_TOL * sv[0];
    sv.iter().filter(|&&s| s > cut).count()
}

/// Ratio of the largest to the smallest singular value of `h`.
pub fn condition_number(h: &DMatrix<f64>) -> Result<f64> {
    let sv = singular_values(h);
    if sv.is_empty() {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let largest = sv[0];
    let smallest = sv[sv.len() - 1];
    if !(smallest > RANK_TOL * largest) {
        return Err(Error::RankDeficient { smallest, largest });
    }
    Ok(largest / smallest)
}

/// Ensures `h` (q x p) has full row rank q, which needs q <= p.
pub(crate) fn ensure_full_row_rank(h: &DMatrix<f64>) -> Result<()> {
    let sv = singular_values(h);
    let largest = sv.get(0).copied().unwrap_or(0.0);
    if h.nrows() > h.ncols() {
        return Err(Error::RankDeficient {
            smallest: 0.0,
            largest,
        });
    }
    let smallest = sv[sv.len() - 1];
    if !(smallest > RANK_TOL * largest) {
        return Err(Error::RankDeficient { smallest, largest });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Identifiability {
    /// `rank(H) == p`
    pub injective: bool,
    /// `p <= n_obs * q`
    pub count_ok: bool,
}

pub fn identifiability_check(h: &DMatrix<f64>, n_obs: usize) -> Identifiability {
    let (q, p) = h.shape();
    Identifiability {
        injective: rank(h) == p,
        count_ok: p <= n_obs * q,
    }
}

pub(crate) fn cholesky(name: &str, m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    nalgebra::Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        matrix: name.to_string(),
        min_eigenvalue: sym_eigenvalues(m).iter().copied().fold(f64::INFINITY, f64::min),
    })
}

pub(crate) fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
