//! Small dense helpers on top of nalgebra.

use crate::{CMat, Error, Result, C64};
use nalgebra::DMatrix;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

pub fn dist(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a - b))
}

pub fn det(m: &CMat) -> C64 {
    m.clone().lu().determinant()
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Invalid("singular matrix".into()))
}

/// Eigenvalues through the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    let n = m.nrows();
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    match m.clone().try_schur(1e-15, 10_000) {
        Some(s) => {
            let (_, t) = s.unpack();
            (0..n).map(|i| t[(i, i)]).collect()
        }
        None => Vec::new(),
    }
}

/// Eigen-decomposition `m = c d c^-1` with eigenvectors by inverse iteration on the Schur values.
pub fn eigen_decomposition(m: &CMat) -> Option<(Vec<C64>, CMat)> {
    let n = m.nrows();
    let vals = eigenvalues(m);
    if vals.len() != n {
        return None;
    }
    let mut c = CMat::zeros(n, n);
    let scale = max_abs(m).max(1.0);
    for (k, &ev) in vals.iter().enumerate() {
        let shift = ev + C64::new(1e-10 * scale, 1e-10 * scale);
        let a = m - CMat::identity(n, n) * shift;
        let lu = a.lu();
        let mut v = nalgebra::DVector::<C64>::from_element(n, C64::new(1.0, 0.0));
        for i in 0..n {
            v[i] += C64::new(0.1 * i as f64, 0.07 * (k + i) as f64);
        }
        for _ in 0..4 {
            let w = lu.solve(&v)?;
            let nn = w.norm();
            if !(nn.is_finite()) || nn == 0.0 {
                return None;
            }
            v = w / C64::new(nn, 0.0);
        }
        c.set_column(k, &v);
    }
    Some((vals, c))
}

/// Singular values of a real matrix, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let top = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > rel_tol * top.max(1e-300)).count()
}

/// Minimum-norm least squares solution of a real system.
pub fn lstsq(a: &DMatrix<f64>, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let rhs = nalgebra::DVector::from_column_slice(b);
    match svd.solve(&rhs, rel_tol * top.max(1e-300)) {
        Ok(x) => x.iter().copied().collect(),
        Err(_) => vec![0.0; a.ncols()],
    }
}

/// Real symmetric positive definiteness via Cholesky, with the smallest eigenvalue.
pub fn min_eigen_sym(m: &DMatrix<f64>) -> f64 {
    let e = m.clone().symmetric_eigen();
    e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Minimum-norm complex least squares (pseudo-inverse).
pub fn pinv_solve(a: &CMat, b: &[C64], rel_tol: f64) -> Vec<C64> {
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let rhs = nalgebra::DVector::from_column_slice(b);
    match svd.solve(&rhs, rel_tol * top.max(1e-300)) {
        Ok(x) => x.iter().copied().collect(),
        Err(_) => vec![C64::new(0.0, 0.0); a.ncols()],
    }
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}
