//! Genus-zero coverings λ = P(t)/Q(t) with deg P = N, Q monic of degree N − 1.

use crate::linalg;
use crate::poly;
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crit {
    pub t: C64,
    /// Ramification index (local degree).
    pub k: usize,
    pub lam: C64,
}

#[derive(Debug, Clone)]
pub struct Rational {
    pub num: Vec<C64>,
    pub den: Vec<C64>,
    pub n: usize,
    pub crit: Vec<Crit>,
    /// Finite poles with residues of f.
    pub poles: Vec<(C64, C64)>,
}

impl Rational {
    pub fn new(num: &[C64], den: &[C64]) -> Result<Self> {
        let n = num.len().saturating_sub(1);
        if n < 2 || den.len() != n {
            return Err(Error::UnsupportedGeometry(format!(
                "need deg P = N ≥ 2 and deg Q = N − 1, got {} and {}",
                num.len() as i64 - 1,
                den.len() as i64 - 1
            )));
        }
        let lead = den[n - 1];
        if lead.norm() == 0.0 || num[n].norm() == 0.0 {
            return Err(Error::UnsupportedGeometry("vanishing leading coefficient".into()));
        }
        let num: Vec<C64> = num.iter().map(|c| c / lead).collect();
        let den: Vec<C64> = den.iter().map(|c| c / lead).collect();
        let mut r = Rational { num, den, n, crit: Vec::new(), poles: Vec::new() };
        r.poles = r.find_poles()?;
        r.crit = r.find_crit(None)?;
        Ok(r)
    }

    fn scale(&self) -> f64 {
        self.num.iter().chain(self.den.iter()).fold(1.0f64, |m, z| m.max(z.norm()))
    }

    fn find_poles(&self) -> Result<Vec<(C64, C64)>> {
        let z = poly::roots(&self.den);
        let dq = poly::deriv(&self.den);
        let mut out = Vec::new();
        let sc = self.scale();
        for (i, &p) in z.iter().enumerate() {
            for &q in &z[..i] {
                if (p - q).norm() < 1e-8 * (1.0 + p.norm()) {
                    return Err(Error::UnsupportedGeometry("ramified point over infinity".into()));
                }
            }
            let pv = poly::eval(&self.num, p);
            if pv.norm() < 1e-10 * sc * (1.0 + p.norm()).powi(self.n as i32) {
                return Err(Error::UnsupportedGeometry("numerator and denominator share a root".into()));
            }
            out.push((p, pv / poly::eval(&dq, p)));
        }
        Ok(out)
    }

    /// Roots of P′Q − PQ′ grouped by multiplicity; with `prev` the new points
    /// are ordered to follow the previous ones.
    fn find_crit(&self, prev: Option<&[Crit]>) -> Result<Vec<Crit>> {
        let w = self.wronskian();
        let rm = poly::roots_with_multiplicity(&w, 1e-5);
        let mut crit: Vec<Crit> = rm.into_iter().map(|(t, m)| Crit { t, k: m + 1, lam: self.f(t) }).collect();
        if let Some(p) = prev {
            if p.len() != crit.len() {
                return Err(Error::FiniteDifferenceUnstable("critical points merged".into()));
            }
            let mut out = Vec::with_capacity(p.len());
            for c in p {
                let (idx, _) = crit
                    .iter()
                    .enumerate()
                    .map(|(i, d)| (i, (d.t - c.t).norm()))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                out.push(crit.remove(idx));
            }
            crit = out;
        }
        Ok(crit)
    }

    fn wronskian(&self) -> Vec<C64> {
        poly::sub(
            &poly::mul(&poly::deriv(&self.num), &self.den),
            &poly::mul(&self.num, &poly::deriv(&self.den)),
        )
    }

    pub fn f(&self, t: C64) -> C64 {
        poly::eval(&self.num, t) / poly::eval(&self.den, t)
    }

    pub fn df(&self, t: C64) -> C64 {
        let q = poly::eval(&self.den, t);
        poly::eval(&self.wronskian(), t) / (q * q)
    }

    /// Taylor coefficients of f at t0 up to `order`.
    pub fn taylor(&self, t0: C64, order: usize) -> Vec<C64> {
        let shift = |c: &[C64]| -> Vec<C64> {
            // coefficients of c(t0 + s) by repeated synthetic division
            let mut a = c.to_vec();
            let mut out = Vec::with_capacity(a.len());
            while !a.is_empty() {
                let mut rem = C64::new(0.0, 0.0);
                let mut q = vec![C64::new(0.0, 0.0); a.len().saturating_sub(1)];
                for i in (0..a.len()).rev() {
                    rem = rem * t0 + a[i];
                    if i > 0 {
                        q[i - 1] = rem;
                    }
                }
                out.push(rem);
                a = q;
            }
            out
        };
        let p = shift(&self.num);
        let q = shift(&self.den);
        let mut s = vec![C64::new(0.0, 0.0); order + 1];
        for i in 0..=order {
            let mut v = p.get(i).copied().unwrap_or_default();
            for j in 1..=i {
                v -= q.get(j).copied().unwrap_or_default() * s[i - j];
            }
            s[i] = v / q[0];
        }
        s
    }

    /// Leading coefficient: f(t) ~ a·t at t = ∞.
    pub fn lead(&self) -> C64 {
        self.num[self.n]
    }

    /// All preimages of λ.
    pub fn fiber(&self, lam: C64) -> Vec<C64> {
        let c: Vec<C64> = (0..=self.n)
            .map(|i| self.num[i] - lam * self.den.get(i).copied().unwrap_or_default())
            .collect();
        let mut z = poly::roots(&c);
        for t in z.iter_mut() {
            for _ in 0..3 {
                let d = self.df(*t);
                if d.norm() == 0.0 {
                    break;
                }
                let s = (self.f(*t) - lam) / d;
                if s.is_finite() && s.norm() < 1e-3 * (1.0 + t.norm()) {
                    *t -= s;
                }
            }
        }
        z
    }

    /// Newton continuation of a preimage from `t` (over some nearby λ) to λ.
    pub fn track(&self, t: C64, lam: C64) -> Option<C64> {
        let mut x = t;
        for _ in 0..60 {
            let s = (self.f(x) - lam) / self.df(x);
            if !s.is_finite() {
                return None;
            }
            x -= s;
            if s.norm() <= 1e-15 * (1.0 + x.norm()) {
                return Some(x);
            }
        }
        if (self.f(x) - lam).norm() < 1e-13 * (1.0 + lam.norm()) {
            Some(x)
        } else {
            None
        }
    }

    pub fn dist_crit_t(&self, t: C64) -> f64 {
        self.crit.iter().map(|c| (c.t - t).norm()).fold(f64::INFINITY, f64::min)
    }

    /// The nearby map whose critical values are `targets` (same order as `crit`).
    /// Only simple critical points can be moved independently.
    pub fn with_critical_values(&self, targets: &[C64]) -> Result<Rational> {
        if self.crit.iter().any(|c| c.k != 2) {
            return Err(Error::UnsupportedGeometry("deformation with higher ramification".into()));
        }
        let n = self.n;
        let mut cur = self.clone();
        let sc = targets.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        for _ in 0..40 {
            let res: Vec<C64> = cur.crit.iter().zip(targets).map(|(c, &t)| t - c.lam).collect();
            let rmax = res.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            if rmax < 1e-14 * sc {
                return Ok(cur);
            }
            // unknowns: num[0..=n], den[0..n-1]
            let mut jac = CMat::zeros(cur.crit.len(), 2 * n);
            for (i, c) in cur.crit.iter().enumerate() {
                let q = poly::eval(&cur.den, c.t);
                let fv = c.lam;
                let mut p = C64::new(1.0, 0.0);
                for k in 0..=n {
                    jac[(i, k)] = p / q;
                    if k < n - 1 {
                        jac[(i, n + 1 + k)] = -fv * p / q;
                    }
                    p *= c.t;
                }
            }
            let d = linalg::pinv_solve(&jac, &res, 1e-13);
            let mut next = cur.clone();
            for k in 0..=n {
                next.num[k] += d[k];
            }
            for k in 0..n - 1 {
                next.den[k] += d[n + 1 + k];
            }
            next.poles = next.find_poles()?;
            next.crit = next.find_crit(Some(&cur.crit))?;
            cur = next;
        }
        Err(Error::FiniteDifferenceUnstable("critical value deformation did not converge".into()))
    }
}
