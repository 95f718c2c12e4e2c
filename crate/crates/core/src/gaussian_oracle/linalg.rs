use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below `-NEG_TOL * max(1, |lambda|_max)` mean "not PSD".
pub(crate) const NEG_TOL: f64 = 1e-10;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Applies `h` to the eigenvalues of a symmetric matrix, clamping small
/// negative eigenvalues to zero.
fn spectral_map(op: &str, m: &DMatrix<f64>, h: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &l| a.max(l.abs()));
    let mut vals = eig.eigenvalues.clone();
    for l in vals.iter_mut() {
        if *l < -NEG_TOL * scale {
            return Err(Error::Numerical(format!("{op}: matrix is not positive semidefinite (eigenvalue {l})")));
        }
        *l = h(l.max(0.0));
    }
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * DMatrix::from_diagonal(&vals) * q.transpose())))
}

/// Principal square root of a symmetric PSD matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spectral_map("sym_sqrt", m, f64::sqrt)
}

/// Inverse principal square root; fails on (numerically) singular input.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let min = eig.eigenvalues.min();
    if !(min > 1e-12 * max.max(1e-300)) {
        return Err(Error::Numerical(format!("matrix is singular (smallest eigenvalue {min})")));
    }
    spectral_map("sym_inv_sqrt", m, |l| 1.0 / l.sqrt())
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Lower-triangular `L` with `L L^T = A` for symmetric PSD `A`.
///
/// A pivot at or below `1e-10 * max diag` zeroes its column, so rank
/// deficient matrices (deterministic couplings) factor exactly; a pivot
/// below `-1e-8 * max diag` is an error.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::shape("psd_cholesky", &[a.nrows(), a.ncols()], &[n, n]));
    }
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let tiny = 1e-10 * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -1e-8 * max_diag {
            return Err(Error::Numerical(format!(
                "psd_cholesky: matrix is not positive semidefinite (pivot {d} at {j})"
            )));
        }
        if d <= tiny {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}
