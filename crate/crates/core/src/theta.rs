//! Riemann theta functions with characteristics.
//!
//! θ[p,q](z|B) = Σ_n exp{πi (n+p)ᵀB(n+p) + 2πi (n+p)ᵀ(z+q)}

use crate::{CMat, Error, Result, C64, TWO_PI_I};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaConfig {
    /// Relative tail tolerance with respect to the largest lattice term.
    pub tol: f64,
    /// Maximal truncation radius (in lattice units along the weakest direction).
    pub radius_cap: f64,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        ThetaConfig { tol: 1e-18, radius_cap: 40.0 }
    }
}

/// Half-integer characteristic stored as twice its entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HalfChar {
    pub p2: Vec<i32>,
    pub q2: Vec<i32>,
}

impl HalfChar {
    pub fn zero(g: usize) -> Self {
        HalfChar { p2: vec![0; g], q2: vec![0; g] }
    }

    /// 0 for even, 1 for odd.
    pub fn parity(&self) -> i32 {
        let s: i32 = self.p2.iter().zip(&self.q2).map(|(a, b)| a * b).sum();
        s.rem_euclid(2)
    }

    pub fn to_char(&self) -> Characteristic {
        Characteristic {
            p: self.p2.iter().map(|&v| C64::new(v as f64 / 2.0, 0.0)).collect(),
            q: self.q2.iter().map(|&v| C64::new(v as f64 / 2.0, 0.0)).collect(),
        }
    }

    /// Scan order: index bits are p then q, lowest entry first.
    pub fn from_index(g: usize, idx: usize) -> Self {
        let p2 = (0..g).map(|a| ((idx >> a) & 1) as i32).collect();
        let q2 = (0..g).map(|a| ((idx >> (g + a)) & 1) as i32).collect();
        HalfChar { p2, q2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characteristic {
    pub p: Vec<C64>,
    pub q: Vec<C64>,
}

impl Characteristic {
    pub fn zero(g: usize) -> Self {
        Characteristic { p: vec![C64::new(0.0, 0.0); g], q: vec![C64::new(0.0, 0.0); g] }
    }
    pub fn genus(&self) -> usize {
        self.p.len()
    }
}

#[derive(Debug, Clone)]
pub struct ThetaEval {
    pub value: C64,
    pub grad: Vec<C64>,
    /// Row-major g×g.
    pub hess: Vec<C64>,
    pub radius: f64,
    pub err_bound: f64,
    /// Modulus of the largest term.
    pub scale: f64,
}

impl ThetaEval {
    pub fn h(&self, a: usize, b: usize) -> C64 {
        let g = self.grad.len();
        self.hess[a * g + b]
    }
    pub fn log_grad(&self) -> Vec<C64> {
        self.grad.iter().map(|d| d / self.value).collect()
    }
    /// ∂² ln θ.
    pub fn log_hess(&self, a: usize, b: usize) -> C64 {
        let v = self.value;
        self.h(a, b) / v - self.grad[a] * self.grad[b] / (v * v)
    }
}

fn im_part(b: &CMat) -> DMatrix<f64> {
    DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)].im)
}

pub fn check_period_matrix(b: &CMat) -> Result<f64> {
    let y = im_part(b);
    let y = (&y + y.transpose()) * 0.5;
    let lmin = crate::linalg::min_eigen_sym(&y);
    if !(lmin > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(lmin)
}

/// Lattice sum with derivatives up to `order` (0, 1 or 2).
pub fn theta(z: &[C64], b: &CMat, ch: &Characteristic, cfg: &ThetaConfig, order: usize) -> Result<ThetaEval> {
    let g = z.len();
    let lmin = check_period_matrix(b)?;
    let y = im_part(b);
    // quadratic form in n: Re E(n) = -π (n-c)ᵀY(n-c) + const
    let w: Vec<C64> = (0..g)
        .map(|a| {
            let mut s = z[a] + ch.q[a];
            for c in 0..g {
                s += b[(a, c)] * ch.p[c];
            }
            s
        })
        .collect();
    let yinv = y.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let center: Vec<f64> = (0..g)
        .map(|a| -(0..g).map(|c| yinv[(a, c)] * w[c].im).sum::<f64>())
        .collect();
    let t = (1.0 / cfg.tol).ln() + 8.0 + 2.0 * order as f64;
    let radius = (t / (PI * lmin)).sqrt();
    if radius > cfg.radius_cap {
        return Err(Error::TruncationOverflow { radius, cap: cfg.radius_cap });
    }
    let lo: Vec<i64> = center.iter().map(|c| (c - radius).floor() as i64).collect();
    let hi: Vec<i64> = center.iter().map(|c| (c + radius).ceil() as i64).collect();
    let zq: Vec<C64> = (0..g).map(|a| z[a] + ch.q[a]).collect();

    // exponent shift to keep terms finite: subtract the maximal real part
    let re_exp = |n: &[i64]| -> f64 {
        let mut s = 0.0;
        for a in 0..g {
            for c in 0..g {
                s += (n[a] as f64 - center[a]) * y[(a, c)] * (n[c] as f64 - center[c]);
            }
        }
        -PI * s
    };
    let mut terms: Vec<(Vec<i64>, C64)> = Vec::new();
    let mut n = lo.clone();
    let mut max_re = f64::NEG_INFINITY;
    'outer: loop {
        if -re_exp(&n) <= t {
            let x: Vec<C64> = (0..g).map(|a| ch.p[a] + n[a] as f64).collect();
            let mut e = C64::new(0.0, 0.0);
            for a in 0..g {
                let mut bx = C64::new(0.0, 0.0);
                for c in 0..g {
                    bx += b[(a, c)] * x[c];
                }
                e += x[a] * (bx * 0.5 + zq[a]);
            }
            let e = e * TWO_PI_I;
            max_re = max_re.max(e.re);
            terms.push((n.clone(), e));
        }
        for a in 0..g {
            n[a] += 1;
            if n[a] <= hi[a] {
                continue 'outer;
            }
            n[a] = lo[a];
        }
        break;
    }
    let mut value = C64::new(0.0, 0.0);
    let mut grad = vec![C64::new(0.0, 0.0); g];
    let mut hess = vec![C64::new(0.0, 0.0); g * g];
    for (n, e) in &terms {
        let term = (e - max_re).exp();
        value += term;
        if order >= 1 {
            let x: Vec<C64> = (0..g).map(|a| (ch.p[a] + n[a] as f64) * TWO_PI_I).collect();
            for a in 0..g {
                grad[a] += x[a] * term;
            }
            if order >= 2 {
                for a in 0..g {
                    for c in 0..g {
                        hess[a * g + c] += x[a] * x[c] * term;
                    }
                }
            }
        }
    }
    let f = C64::new(max_re, 0.0).exp();
    let scale = f.re;
    value *= f;
    for v in grad.iter_mut().chain(hess.iter_mut()) {
        *v *= f;
    }
    let err_bound = scale * (-t).exp() * (1.0 + radius).powi(g as i32 + 2 * order as i32);
    Ok(ThetaEval { value, grad, hess, radius, err_bound, scale })
}

pub fn theta_value(z: &[C64], b: &CMat, ch: &Characteristic, cfg: &ThetaConfig) -> Result<C64> {
    Ok(theta(z, b, ch, cfg, 0)?.value)
}

/// max_{α,β} |∂²θ/∂z_α∂z_β − 4πi ∂θ/∂B_{αβ}| with central differences in B.
pub fn heat_check(z: &[C64], b: &CMat, ch: &Characteristic, h: f64, cfg: &ThetaConfig) -> Result<f64> {
    let g = z.len();
    let ev = theta(z, b, ch, cfg, 2)?;
    let mut res: f64 = 0.0;
    for a in 0..g {
        for c in a..g {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[(a, c)] += h;
            bm[(a, c)] -= h;
            if a != c {
                bp[(c, a)] += h;
                bm[(c, a)] -= h;
            }
            let tp = theta_value(z, &bp, ch, cfg)?;
            let tm = theta_value(z, &bm, ch, cfg)?;
            let mut d = (tp - tm) / (2.0 * h);
            if a != c {
                d *= 0.5;
            }
            let lhs = ev.h(a, c);
            let rhs = d * C64::new(0.0, 4.0 * PI);
            res = res.max((lhs - rhs).norm());
        }
    }
    Ok(res)
}

/// All odd half-integer characteristics that are non-singular at `b`, in scan order.
pub fn odd_nonsingular_characteristics(b: &CMat, cfg: &ThetaConfig) -> Result<Vec<HalfChar>> {
    let g = b.nrows();
    let zero = vec![C64::new(0.0, 0.0); g];
    let mut out = Vec::new();
    for idx in 0..(1usize << (2 * g)) {
        let hc = HalfChar::from_index(g, idx);
        if hc.parity() != 1 {
            continue;
        }
        let ev = theta(&zero, b, &hc.to_char(), cfg, 1)?;
        let gn = ev.grad.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if ev.value.norm() <= 1e-12 * ev.scale && gn > 1e-8 * ev.scale {
            out.push(hc);
        }
    }
    Ok(out)
}

pub fn find_odd_nonsingular_characteristic(b: &CMat, cfg: &ThetaConfig) -> Result<HalfChar> {
    odd_nonsingular_characteristics(b, cfg)?.into_iter().next().ok_or(Error::NoneFound)
}

/// Number of odd half-characteristics in genus g by the parity count.
pub fn count_odd(g: usize) -> usize {
    (0..(1usize << (2 * g))).filter(|&i| HalfChar::from_index(g, i).parity() == 1).count()
}

/// Jacobi θ₁'(0|μ) = 2π q^{1/4} Π(1−q^{2n})³ with q = e^{πiμ}, via the lattice sum.
pub fn theta1_prime(mu: C64, cfg: &ThetaConfig) -> Result<C64> {
    let b = CMat::from_element(1, 1, mu);
    let ch = HalfChar { p2: vec![1], q2: vec![1] }.to_char();
    let ev = theta(&[C64::new(0.0, 0.0)], &b, &ch, cfg, 1)?;
    // θ[1/2,1/2](z) = -θ₁(πz)/π-normalised: θ₁'(0) = -dθ[1/2,1/2]/dz
    Ok(-ev.grad[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn gauss_value_at_i() {
        let b = CMat::from_element(1, 1, c(0.0, 1.0));
        let v = theta_value(&[c(0.0, 0.0)], &b, &Characteristic::zero(1), &ThetaConfig::default()).unwrap();
        // π^{1/4}/Γ(3/4)
        let oracle = PI.powf(0.25) / 1.225416702465177645129098303362890526851239;
        assert!((v - c(oracle, 0.0)).norm() < 1e-15);
        assert!((v.re - 1.086434811213308).abs() < 1e-14);
    }

    #[test]
    fn odd_count_and_g1_char() {
        assert_eq!(count_odd(1), 1);
        assert_eq!(count_odd(2), 6);
        assert_eq!(count_odd(3), 28);
        let b = CMat::from_element(1, 1, c(0.0, 1.0));
        let hc = find_odd_nonsingular_characteristic(&b, &ThetaConfig::default()).unwrap();
        assert_eq!(hc, HalfChar { p2: vec![1], q2: vec![1] });
    }

    #[test]
    fn theta1_prime_product_formula() {
        let mu = c(0.2, 1.1);
        let q = (c(0.0, PI) * mu).exp();
        let mut prod = c(1.0, 0.0);
        for n in 1..60 {
            let f = c(1.0, 0.0) - q.powi(2 * n);
            prod *= f * f * f;
        }
        let oracle = (c(0.0, PI / 4.0) * mu).exp() * 2.0 * prod;
        let v = theta1_prime(mu, &ThetaConfig::default()).unwrap();
        // θ₁ in the variable πz carries an extra factor π
        assert!((v - oracle * PI).norm() < 1e-12, "{v} {}", oracle * PI);
    }

    #[test]
    fn not_positive_definite() {
        let b = CMat::from_element(1, 1, c(0.0, -1.0));
        assert_eq!(theta_value(&[c(0.0, 0.0)], &b, &Characteristic::zero(1), &ThetaConfig::default()), Err(Error::NotPositiveDefinite));
    }
}
