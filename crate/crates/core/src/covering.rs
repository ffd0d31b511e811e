//! Combinatorial branched coverings: sheet permutations, branch points, passport,
//! genus and the intersection-index tables of the lifted generator loops.

use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

/// Permutations s₁…s_M of the sheets {0..N−1}; `perms[m][j] = s_m(j)`.
///
/// The monodromy matrix of s is P with P_{j,s(j)} = 1, so P_a P_b is the matrix of
/// s_b∘s_a and M_M···M₁ = I reads s₁∘s₂∘…∘s_M = id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationRepresentation {
    pub n: usize,
    pub perms: Vec<Vec<usize>>,
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &x in p {
        if x >= p.len() || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

pub fn compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    // (a∘b)(j) = a(b(j))
    b.iter().map(|&j| a[j]).collect()
}

pub fn invert(a: &[usize]) -> Vec<usize> {
    let mut out = vec![0; a.len()];
    for (j, &x) in a.iter().enumerate() {
        out[x] = j;
    }
    out
}

/// Cycles of a permutation, each starting at its smallest element.
pub fn cycles(p: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; p.len()];
    let mut out = Vec::new();
    for s in 0..p.len() {
        if seen[s] {
            continue;
        }
        let mut c = vec![s];
        seen[s] = true;
        let mut j = p[s];
        while j != s {
            seen[j] = true;
            c.push(j);
            j = p[j];
        }
        out.push(c);
    }
    out
}

impl PermutationRepresentation {
    pub fn new(n: usize, perms: Vec<Vec<usize>>) -> Result<Self> {
        for (m, p) in perms.iter().enumerate() {
            if p.len() != n || !is_permutation(p) {
                return Err(Error::Invalid(format!("generator {m} is not a permutation of {n} sheets")));
            }
        }
        let r = PermutationRepresentation { n, perms };
        if !r.product_is_identity() {
            return Err(Error::RejectsIdentityProductViolation { residual: 1.0 });
        }
        Ok(r)
    }

    pub fn product_is_identity(&self) -> bool {
        let mut acc: Vec<usize> = (0..self.n).collect();
        for p in &self.perms {
            acc = compose(&acc, p);
        }
        acc.iter().enumerate().all(|(j, &x)| j == x)
    }

    pub fn is_transitive(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for p in &self.perms {
                for x in [p[j], invert(p)[j]] {
                    if !seen[x] {
                        seen[x] = true;
                        stack.push(x);
                    }
                }
            }
        }
        seen.iter().all(|&b| b)
    }

    /// Riemann–Hurwitz: g = Σ(k−1)/2 − N + 1.
    pub fn genus(&self) -> Result<usize> {
        let ram: usize = self
            .perms
            .iter()
            .map(|p| cycles(p).iter().map(|c| c.len() - 1).sum::<usize>())
            .sum();
        if ram % 2 != 0 || ram / 2 + 1 < self.n {
            return Err(Error::InconsistentBranchData(format!("total ramification {ram} is not admissible for N={}", self.n)));
        }
        Ok(ram / 2 + 1 - self.n)
    }
}

/// A point of the surface over λ_m: one cycle of s_m (sheets in cycle order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub m: usize,
    pub sheets: Vec<usize>,
}

impl MarkedPoint {
    pub fn k(&self) -> usize {
        self.sheets.len()
    }
}

/// Intersection indices of the lifted loops, indexed by generator m and row j of
/// M_m (the lift that ends on sheet j). `i`/`j` per α, `k` per marked point R,
/// `l` ∈ {0,1}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexTables {
    pub i: Vec<Vec<Vec<i64>>>,
    pub j: Vec<Vec<Vec<i64>>>,
    pub k: Vec<Vec<Vec<i64>>>,
    pub l: Vec<Vec<i64>>,
}

/// Everything the monodromy formula needs beyond the parameters: index tables
/// and the spin twist of √dλ, both tied to a concrete realisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub tables: IndexTables,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchedCovering {
    pub perm: PermutationRepresentation,
    pub lambdas: Vec<C64>,
    pub lambda0: C64,
    pub points: Vec<MarkedPoint>,
    /// point_of[m][j]: index of the marked point λ_m^{(j)}.
    pub point_of: Vec<Vec<usize>>,
    pub genus: usize,
    /// Ramification profile over each λ_m, descending.
    pub passport: Vec<Vec<usize>>,
    pub realization: Option<Realization>,
}

pub fn build_covering(perm: &PermutationRepresentation, lambdas: &[C64], lambda0: C64) -> Result<BranchedCovering> {
    if lambdas.len() != perm.perms.len() {
        return Err(Error::Invalid(format!("{} positions for {} generators", lambdas.len(), perm.perms.len())));
    }
    if !perm.is_transitive() {
        return Err(Error::RejectsDisconnected);
    }
    let genus = perm.genus()?;
    let mut points = Vec::new();
    let mut point_of = vec![vec![0; perm.n]; lambdas.len()];
    let mut passport = Vec::new();
    for (m, p) in perm.perms.iter().enumerate() {
        let cs = cycles(p);
        let mut prof: Vec<usize> = cs.iter().map(|c| c.len()).collect();
        prof.sort_unstable_by(|a, b| b.cmp(a));
        passport.push(prof);
        for c in cs {
            for &j in &c {
                point_of[m][j] = points.len();
            }
            points.push(MarkedPoint { m, sheets: c });
        }
    }
    Ok(BranchedCovering {
        perm: perm.clone(),
        lambdas: lambdas.to_vec(),
        lambda0,
        points,
        point_of,
        genus,
        passport,
        realization: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftedPath {
    pub m: usize,
    pub start: usize,
    pub end: usize,
    pub closed: bool,
}

impl BranchedCovering {
    pub fn n(&self) -> usize {
        self.perm.n
    }

    pub fn branch_points(&self) -> impl Iterator<Item = &MarkedPoint> {
        self.points.iter().filter(|p| p.k() > 1)
    }

    /// Lift of l_m from λ₀^{(j)}. Continuing Ψ along l_m turns column c into a
    /// multiple of column s_m^{-1}(c), so the lift ends on sheet s_m^{-1}(j).
    pub fn lift_loop(&self, m: usize, j: usize) -> LiftedPath {
        let end = invert(&self.perm.perms[m])[j];
        LiftedPath { m, start: j, end, closed: end == j }
    }

    /// Number of free parameters 2g + #points − 1 (= MN − 2N + 1).
    pub fn parameter_count(&self) -> usize {
        2 * self.genus + self.points.len() - 1
    }

    pub fn with_realization(mut self, r: Realization) -> Self {
        self.realization = Some(r);
        self
    }
}

/// Stored index tables; coverings without an analytic realisation have none.
pub fn intersection_indices(cov: &BranchedCovering) -> Result<&IndexTables> {
    cov.realization.as_ref().map(|r| &r.tables).ok_or_else(|| {
        Error::UnsupportedTopology(format!(
            "no analytic realisation attached (N={}, g={}); build the solution setup from a surface model",
            cov.n(),
            cov.genus
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn genus_examples() {
        let t = vec![1, 0];
        let p = PermutationRepresentation::new(2, vec![t.clone(); 4]).unwrap();
        assert_eq!(p.genus().unwrap(), 1);
        let p = PermutationRepresentation::new(2, vec![t; 6]).unwrap();
        assert_eq!(p.genus().unwrap(), 2);
        // (123), (132)
        let p = PermutationRepresentation::new(3, vec![vec![1, 2, 0], vec![2, 0, 1], vec![0, 1, 2]]).unwrap();
        assert_eq!(p.genus().unwrap(), 0);
        let cov = build_covering(&p, &[c(0.0), c(1.0), c(2.0)], c(-1.0)).unwrap();
        assert_eq!(cov.branch_points().count(), 2);
        assert_eq!(cov.passport[0], vec![3]);
        assert_eq!(cov.passport[2], vec![1, 1, 1]);
    }

    #[test]
    fn lifts_and_unsupported_indices() {
        let p = PermutationRepresentation::new(3, vec![vec![1, 2, 0], vec![2, 0, 1], vec![0, 1, 2]]).unwrap();
        let cov = build_covering(&p, &[c(0.0), c(1.0), c(2.0)], c(-1.0)).unwrap();
        assert!(cov.lift_loop(2, 1).closed);
        let l = cov.lift_loop(0, 0);
        assert!(!l.closed);
        assert_eq!(l.end, 2);
        // following every lift in order returns to the start sheet
        for j in 0..3 {
            let mut s = j;
            for m in 0..3 {
                s = cov.lift_loop(m, s).end;
            }
            assert_eq!(s, j);
        }
        assert!(matches!(intersection_indices(&cov), Err(Error::UnsupportedTopology(_))));
    }

    #[test]
    fn disconnected_rejected() {
        let p = PermutationRepresentation::new(3, vec![vec![0, 2, 1], vec![0, 2, 1]]).unwrap();
        assert!(matches!(build_covering(&p, &[c(0.0), c(1.0)], c(-1.0)), Err(Error::RejectsDisconnected)));
    }
}
