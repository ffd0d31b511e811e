//! Quasi-permutation monodromy representations and the affine correspondence
//! between kernel parameters (p, q, r) and monodromy matrices.

use crate::covering::{self, BranchedCovering, PermutationRepresentation};
use crate::linalg;
use crate::{CMat, Error, Result, C64, TWO_PI_I};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Row j has its only nonzero entry `entries[j]` in column `support[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiPermMatrix {
    pub support: Vec<usize>,
    pub entries: Vec<C64>,
}

impl QuasiPermMatrix {
    pub fn new(support: Vec<usize>, entries: Vec<C64>) -> Result<Self> {
        if support.len() != entries.len() || !covering::is_permutation(&support) {
            return Err(Error::NotQuasiPermutation { index: 0, reason: "support is not a permutation".into() });
        }
        if let Some(j) = entries.iter().position(|e| e.norm() == 0.0 || !e.is_finite()) {
            return Err(Error::NotQuasiPermutation { index: j, reason: "vanishing or non-finite entry".into() });
        }
        Ok(QuasiPermMatrix { support, entries })
    }

    pub fn identity(n: usize) -> Self {
        QuasiPermMatrix { support: (0..n).collect(), entries: vec![C64::new(1.0, 0.0); n] }
    }

    pub fn n(&self) -> usize {
        self.support.len()
    }

    /// Read a dense matrix, treating entries below `tol·max` as zero.
    pub fn from_dense(m: &CMat, tol: f64) -> Result<Self> {
        let n = m.nrows();
        let scale = linalg::max_abs(m);
        let mut support = Vec::with_capacity(n);
        let mut entries = Vec::with_capacity(n);
        for j in 0..n {
            let nz: Vec<usize> = (0..n).filter(|&l| m[(j, l)].norm() > tol * scale).collect();
            if nz.len() != 1 {
                return Err(Error::NotQuasiPermutation { index: j, reason: format!("{} nonzero entries in row", nz.len()) });
            }
            support.push(nz[0]);
            entries.push(m[(j, nz[0])]);
        }
        Self::new(support, entries)
    }

    pub fn to_dense(&self) -> CMat {
        let n = self.n();
        let mut m = CMat::zeros(n, n);
        for j in 0..n {
            m[(j, self.support[j])] = self.entries[j];
        }
        m
    }

    /// self · other
    pub fn mul(&self, other: &QuasiPermMatrix) -> QuasiPermMatrix {
        let support = self.support.iter().map(|&k| other.support[k]).collect();
        let entries = (0..self.n()).map(|j| self.entries[j] * other.entries[self.support[j]]).collect();
        QuasiPermMatrix { support, entries }
    }

    pub fn is_diagonal(&self) -> bool {
        self.support.iter().enumerate().all(|(j, &s)| j == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonodromyRepresentation {
    pub n: usize,
    pub lambdas: Vec<C64>,
    pub lambda0: C64,
    pub matrices: Vec<QuasiPermMatrix>,
}

impl MonodromyRepresentation {
    pub fn new(n: usize, lambdas: Vec<C64>, lambda0: C64, matrices: Vec<QuasiPermMatrix>) -> Result<Self> {
        if lambdas.len() != matrices.len() {
            return Err(Error::Invalid("one matrix per singular point required".into()));
        }
        for (m, a) in matrices.iter().enumerate() {
            if a.n() != n {
                return Err(Error::NotQuasiPermutation { index: m, reason: format!("size {} instead of {n}", a.n()) });
            }
        }
        let scale = lambdas.iter().fold(1.0 + lambda0.norm(), |s, l| s.max(l.norm()));
        for i in 0..lambdas.len() {
            if (lambdas[i] - lambda0).norm() < 1e-12 * scale {
                return Err(Error::Invalid(format!("λ₀ coincides with λ_{}", i + 1)));
            }
            for j in 0..i {
                if (lambdas[i] - lambdas[j]).norm() < 1e-12 * scale {
                    return Err(Error::Invalid(format!("λ_{} and λ_{} coincide", j + 1, i + 1)));
                }
            }
        }
        Ok(MonodromyRepresentation { n, lambdas, lambda0, matrices })
    }

    /// M_M ··· M₁.
    pub fn product(&self) -> QuasiPermMatrix {
        self.matrices.iter().fold(QuasiPermMatrix::identity(self.n), |acc, m| m.mul(&acc))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub closure_ok: bool,
    pub product_residual: f64,
    pub transitive: bool,
    pub nontrivial: bool,
    pub valid: bool,
}

/// Checks the product relation, connectedness (transitivity of the permutation
/// action) and that the matrices are not simultaneously diagonal.
pub fn validate_representation(rep: &MonodromyRepresentation, tol: f64) -> Result<ValidationReport> {
    // closure on words of length ≤ 2: products of quasi-permutation matrices stay quasi-permutation
    let mut closure_ok = true;
    for a in &rep.matrices {
        for b in &rep.matrices {
            closure_ok &= QuasiPermMatrix::from_dense(&(a.to_dense() * b.to_dense()), 1e-300).is_ok();
        }
    }
    let prod = rep.product().to_dense();
    let residual = linalg::dist(&prod, &linalg::identity(rep.n));
    let scale = rep.matrices.iter().fold(1.0f64, |s, m| s.max(linalg::max_abs(&m.to_dense())));
    if residual > tol * scale {
        return Err(Error::RejectsIdentityProductViolation { residual });
    }
    let perm = PermutationRepresentation { n: rep.n, perms: rep.matrices.iter().map(|m| m.support.clone()).collect() };
    let transitive = perm.is_transitive();
    let nontrivial = rep.matrices.iter().any(|m| !m.is_diagonal());
    if !nontrivial && rep.n > 1 {
        return Err(Error::SimultaneouslyDiagonal);
    }
    if rep.n > 1 && !transitive {
        return Err(Error::RejectsDisconnected);
    }
    Ok(ValidationReport { closure_ok, product_residual: residual, transitive, nontrivial, valid: true })
}

pub fn project_to_permutation(rep: &MonodromyRepresentation) -> PermutationRepresentation {
    PermutationRepresentation { n: rep.n, perms: rep.matrices.iter().map(|m| m.support.clone()).collect() }
}

/// Kernel parameters: characteristic (p, q), one constant r per marked point of
/// the covering (the same for all sheets glued at it) and the spin twist p⁰, q⁰.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationParameters {
    pub p: Vec<C64>,
    pub q: Vec<C64>,
    pub r: Vec<C64>,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
}

impl RepresentationParameters {
    pub fn zero(cov: &BranchedCovering) -> Self {
        let g = cov.genus;
        let (p0, q0) = cov.realization.as_ref().map(|r| (r.p0.clone(), r.q0.clone())).unwrap_or((vec![0.0; g], vec![0.0; g]));
        RepresentationParameters {
            p: vec![C64::new(0.0, 0.0); g],
            q: vec![C64::new(0.0, 0.0); g],
            r: vec![C64::new(0.0, 0.0); cov.points.len()],
            p0,
            q0,
        }
    }

    /// r_m^{(j)}.
    pub fn r_at(&self, cov: &BranchedCovering, m: usize, j: usize) -> C64 {
        self.r[cov.point_of[m][j]]
    }

    /// Σ_R k_R r_R, which must vanish.
    pub fn r_sum(&self, cov: &BranchedCovering) -> C64 {
        cov.points.iter().zip(&self.r).map(|(pt, r)| r * pt.k() as f64).sum()
    }
}

/// Per-point constants from per-sheet ones, rejecting mismatches at glued sheets.
pub fn r_from_sheets(cov: &BranchedCovering, r_mj: &[Vec<C64>], tol: f64) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(cov.points.len());
    for pt in &cov.points {
        let v = r_mj[pt.m][pt.sheets[0]];
        for &j in &pt.sheets {
            if (r_mj[pt.m][j] - v).norm() > tol {
                return Err(Error::InconsistentBranchData(format!("r differs on sheets glued over λ_{}", pt.m + 1)));
            }
        }
        out.push(v);
    }
    Ok(out)
}

fn tables(cov: &BranchedCovering) -> Result<&crate::covering::Realization> {
    cov.realization.as_ref().ok_or_else(|| Error::UnsupportedTopology("covering has no realised index tables".into()))
}

/// Exponent of (M_m)_{j,s(j)} divided by 2πi, split into the constant part and
/// the real coefficient rows for (p, q, r).
fn affine_row(cov: &BranchedCovering, m: usize, j: usize) -> Result<(f64, Vec<f64>)> {
    let re = tables(cov)?;
    let t = &re.tables;
    let g = cov.genus;
    let mut row = vec![0.0; 2 * g + cov.points.len()];
    let mut c = 0.5 * t.l[m][j] as f64;
    for a in 0..g {
        row[a] = -(t.j[m][j][a] as f64);
        row[g + a] = -(t.i[m][j][a] as f64);
        c += row[a] * re.p0[a] + row[g + a] * re.q0[a];
    }
    for (ri, pt) in cov.points.iter().enumerate() {
        row[2 * g + ri] = (pt.k() as i64 * t.k[m][j][ri]) as f64;
    }
    Ok((c, row))
}

/// (M_n)_{j,s_n(j)} = exp 2πi{ Σ_R k_R r_R K_n^{(j)}[R] − J·(p+p⁰) − I·(q+q⁰) + L/2 }.
pub fn monodromy_from_parameters(params: &RepresentationParameters, cov: &BranchedCovering) -> Result<MonodromyRepresentation> {
    let g = cov.genus;
    if params.p.len() != g || params.q.len() != g || params.r.len() != cov.points.len() {
        return Err(Error::Invalid("parameter dimensions do not match the covering".into()));
    }
    let scale = params.r.iter().fold(1.0f64, |s, r| s.max(r.norm()));
    if params.r_sum(cov).norm() > 1e-10 * scale {
        return Err(Error::InconsistentBranchData(format!("Σ k r = {} ≠ 0", params.r_sum(cov))));
    }
    let mut x = params.p.clone();
    x.extend(params.q.iter().copied());
    x.extend(params.r.iter().copied());
    let mut mats = Vec::new();
    for (m, s) in cov.perm.perms.iter().enumerate() {
        let mut entries = Vec::with_capacity(cov.n());
        for j in 0..cov.n() {
            let (c, row) = affine_row(cov, m, j)?;
            let e: C64 = row.iter().zip(&x).map(|(a, b)| b * *a).sum::<C64>() + c;
            entries.push((TWO_PI_I * e).exp());
        }
        mats.push(QuasiPermMatrix::new(s.clone(), entries)?);
    }
    MonodromyRepresentation::new(cov.n(), cov.lambdas.clone(), cov.lambda0, mats)
}

/// Real coefficient matrix of (p, q, r) ↦ exponents, rows ordered (m, j).
pub fn affine_matrix(cov: &BranchedCovering) -> Result<DMatrix<f64>> {
    let n = cov.n();
    let mm = cov.perm.perms.len();
    let cols = 2 * cov.genus + cov.points.len();
    let mut a = DMatrix::zeros(mm * n, cols);
    for m in 0..mm {
        for j in 0..n {
            let (_, row) = affine_row(cov, m, j)?;
            for (c, v) in row.into_iter().enumerate() {
                a[(m * n + j, c)] = v;
            }
        }
    }
    Ok(a)
}

/// Rank of the parameter map restricted to Σ k r = 0; equals MN − 2N + 1 for a
/// non-degenerate realisation.
pub fn affine_rank(cov: &BranchedCovering) -> Result<usize> {
    let a = affine_matrix(cov)?;
    let g2 = 2 * cov.genus;
    let np = cov.points.len();
    // basis of the constraint subspace: all (p, q) directions and r differences
    let dim = g2 + np - 1;
    let mut basis = DMatrix::zeros(g2 + np, dim);
    for i in 0..g2 {
        basis[(i, i)] = 1.0;
    }
    let k0 = cov.points[0].k() as f64;
    for i in 1..np {
        basis[(g2 + i, g2 + i - 1)] = 1.0;
        basis[(g2, g2 + i - 1)] = -(cov.points[i].k() as f64) / k0;
    }
    Ok(linalg::rank(&(a * basis), 1e-10))
}

/// Parameters recovered from a representation, with the integer shifts of the
/// logarithm branches and the gauge (diagonal conjugation) that was factored out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovered {
    pub params: RepresentationParameters,
    /// shifts[m][j]: integer added to log(M_m)_{j,s(j)}/2πi.
    pub shifts: Vec<Vec<i64>>,
    /// Conjugation exponents: D = diag(exp 2πi δ_j).
    pub gauge: Vec<C64>,
    pub residual: f64,
}

/// Invert the affine map. Logarithms are taken on the entries divided by their
/// constant (spin/L) factor, principal branch; the sums of logs along the closed
/// sheet paths of the product relation fix the integer shifts.
pub fn parameters_from_monodromy(rep: &MonodromyRepresentation, cov: &BranchedCovering) -> Result<Recovered> {
    let n = cov.n();
    let mm = rep.matrices.len();
    let g = cov.genus;
    let np = cov.points.len();
    for (m, a) in rep.matrices.iter().enumerate() {
        if a.support != cov.perm.perms[m] {
            return Err(Error::InconsistentBranchData(format!("support of M_{} differs from the covering", m + 1)));
        }
    }
    let ncols = 2 * g + np + n;
    let nrows = mm * n + 1;
    let mut a = DMatrix::<f64>::zeros(nrows, ncols);
    let mut b = vec![C64::new(0.0, 0.0); nrows];
    for m in 0..mm {
        let s = &cov.perm.perms[m];
        for j in 0..n {
            let (c, row) = affine_row(cov, m, j)?;
            let r = m * n + j;
            for (k, v) in row.into_iter().enumerate() {
                a[(r, k)] = v;
            }
            // gauge: D M D^{-1} multiplies entry (j, s(j)) by d_j / d_{s(j)}
            a[(r, 2 * g + np + j)] += 1.0;
            a[(r, 2 * g + np + s[j])] -= 1.0;
            let z = rep.matrices[m].entries[j] * (-TWO_PI_I * c).exp();
            b[r] = z.ln() / TWO_PI_I;
        }
    }
    for (i, pt) in cov.points.iter().enumerate() {
        a[(mm * n, 2 * g + i)] = pt.k() as f64;
    }
    // product relation paths: row j of M_M, then row s_M(j) of M_{M−1}, ...
    let mut shifts = vec![vec![0i64; n]; mm];
    for j0 in 0..n {
        let mut j = j0;
        let mut sum = C64::new(0.0, 0.0);
        for m in (0..mm).rev() {
            sum += b[m * n + j];
            j = cov.perm.perms[m][j];
        }
        let t = sum.re.round();
        if (sum - t).norm() > 1e-6 {
            return Err(Error::RejectsIdentityProductViolation { residual: (sum - t).norm() });
        }
        shifts[mm - 1][j0] = -(t as i64);
        b[(mm - 1) * n + j0] -= t;
    }
    let bre: Vec<f64> = b.iter().map(|z| z.re).collect();
    let bim: Vec<f64> = b.iter().map(|z| z.im).collect();
    let xr = linalg::lstsq(&a, &bre, 1e-11);
    let xi = linalg::lstsq(&a, &bim, 1e-11);
    let x: Vec<C64> = xr.iter().zip(&xi).map(|(r, i)| C64::new(*r, *i)).collect();
    let fitted: Vec<C64> = (0..nrows).map(|r| (0..ncols).map(|c| x[c] * a[(r, c)]).sum()).collect();
    let residual = fitted.iter().zip(&b).map(|(f, v)| (f - v).norm()).fold(0.0, f64::max);
    if residual > 1e-8 {
        return Err(Error::SingularSystem { rank: linalg::rank(&a, 1e-10), expected: ncols - 1 });
    }
    let re = tables(cov)?;
    Ok(Recovered {
        params: RepresentationParameters {
            p: x[..g].to_vec(),
            q: x[g..2 * g].to_vec(),
            r: x[2 * g..2 * g + np].to_vec(),
            p0: re.p0.clone(),
            q0: re.q0.clone(),
        },
        shifts,
        gauge: x[2 * g + np..].to_vec(),
        residual,
    })
}

/// Diagonal det-1 conjugation D M D^{-1} with D = diag(d).
pub fn conjugate(rep: &MonodromyRepresentation, d: &[C64]) -> MonodromyRepresentation {
    let mut out = rep.clone();
    for m in out.matrices.iter_mut() {
        for j in 0..m.n() {
            m.entries[j] *= d[j] / d[m.support[j]];
        }
    }
    out
}

/// Representative of the diagonal-conjugation orbit whose first off-diagonal
/// entry of M₁ (scanning rows, then later generators if M₁ is diagonal) is
/// positive real. The remaining freedom is left untouched.
pub fn canonical_representative(rep: &MonodromyRepresentation) -> MonodromyRepresentation {
    let n = rep.n;
    for m in &rep.matrices {
        if let Some(j) = (0..n).find(|&j| m.support[j] != j) {
            let e = m.entries[j];
            let phase = e / e.norm();
            // entry (j, s) scales by d_j/d_s; put the whole phase on d_j and balance det
            let mut d = vec![C64::new(1.0, 0.0); n];
            d[j] = phase.conj();
            let det: C64 = d.iter().product();
            let corr = det.powf(-1.0 / n as f64);
            let d: Vec<C64> = d.iter().map(|x| x * corr).collect();
            return conjugate(rep, &d);
        }
    }
    rep.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn offdiag(d: C64) -> QuasiPermMatrix {
        QuasiPermMatrix::new(vec![1, 0], vec![d, -C64::new(1.0, 0.0) / d]).unwrap()
    }

    #[test]
    fn off_diagonal_genus_one_is_valid() {
        let j = offdiag(c(1.0, 0.0));
        let rep = MonodromyRepresentation::new(2, vec![c(-2.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)], c(0.0, 1.0), vec![j.clone(); 4]).unwrap();
        let rep_ok = validate_representation(&rep, 1e-10).unwrap();
        assert!(rep_ok.transitive && rep_ok.closure_ok);
        let perm = project_to_permutation(&rep);
        assert!(perm.perms.iter().all(|p| p == &vec![1, 0]));
    }

    #[test]
    fn identity_and_decomposable_rejected() {
        let id = QuasiPermMatrix::identity(2);
        let rep = MonodromyRepresentation::new(2, vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.0, 1.0), vec![id.clone(), id]).unwrap();
        assert_eq!(validate_representation(&rep, 1e-10), Err(Error::SimultaneouslyDiagonal));
        let b = QuasiPermMatrix::new(vec![0, 2, 1], vec![c(1.0, 0.0); 3]).unwrap();
        let rep = MonodromyRepresentation::new(3, vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.0, 1.0), vec![b.clone(), b]).unwrap();
        assert_eq!(validate_representation(&rep, 1e-10), Err(Error::RejectsDisconnected));
        let bad = MonodromyRepresentation::new(2, vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.0, 1.0), vec![offdiag(c(1.0, 0.0)), offdiag(c(2.0, 0.0))]).unwrap();
        assert!(matches!(validate_representation(&bad, 1e-10), Err(Error::RejectsIdentityProductViolation { .. })));
    }

    #[test]
    fn three_cycle_projection() {
        let a = QuasiPermMatrix::new(vec![1, 2, 0], vec![c(2.0, 0.0), c(0.5, 1.0), c(1.0, -1.0)]).unwrap();
        let d = a.to_dense();
        assert_eq!(QuasiPermMatrix::from_dense(&d, 1e-14).unwrap(), a);
        assert_eq!(crate::covering::cycles(&a.support), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn every_quasi_permutation_is_diagonalisable() {
        let a = QuasiPermMatrix::new(vec![1, 2, 0], vec![c(2.0, 0.3), c(0.5, 1.0), c(1.0, -1.0)]).unwrap().to_dense();
        let (vals, cm) = linalg::eigen_decomposition(&a).unwrap();
        let dm = CMat::from_diagonal(&nalgebra::DVector::from_vec(vals));
        let back = &cm * dm * linalg::inverse(&cm).unwrap();
        assert!(linalg::dist(&back, &a) < 1e-10);
    }
}
