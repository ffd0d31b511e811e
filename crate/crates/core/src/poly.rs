//! Complex polynomials in ascending coefficient order.

use crate::C64;

pub fn eval(c: &[C64], t: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * t + a)
}

pub fn deriv(c: &[C64]) -> Vec<C64> {
    if c.len() <= 1 {
        return vec![C64::new(0.0, 0.0)];
    }
    c.iter().enumerate().skip(1).map(|(k, &a)| a * k as f64).collect()
}

pub fn mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or_default() - b.get(i).copied().unwrap_or_default())
        .collect()
}

fn trim(c: &[C64]) -> Vec<C64> {
    let scale = c.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut v = c.to_vec();
    while v.len() > 1 && v.last().unwrap().norm() <= 1e-15 * scale {
        v.pop();
    }
    v
}

/// All roots by Aberth-Ehrlich iteration followed by Newton polishing.
pub fn roots(coeffs: &[C64]) -> Vec<C64> {
    let c = trim(coeffs);
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let monic: Vec<C64> = c.iter().map(|a| a / lead).collect();
    let dc = deriv(&monic);
    // Fujiwara-style bound for the initial circle
    let r = (0..n)
        .map(|k| monic[k].norm().powf(1.0 / (n - k) as f64))
        .fold(0.0f64, f64::max)
        .max(1e-3);
    let mut z: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(r, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4))
        .collect();
    for _ in 0..500 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let p = eval(&monic, z[i]);
            let dp = eval(&dc, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    s += C64::new(1.0, 0.0) / (z[i] - z[j]);
                }
            }
            let w = ratio / (C64::new(1.0, 0.0) - ratio * s);
            if w.is_finite() {
                z[i] -= w;
                moved = moved.max(w.norm() / (1.0 + z[i].norm()));
            }
        }
        if moved < 1e-16 {
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let dp = eval(&dc, *zi);
            if dp.norm() == 0.0 {
                break;
            }
            let step = eval(&monic, *zi) / dp;
            if step.is_finite() && step.norm() < 1e-3 * (1.0 + zi.norm()) {
                *zi -= step;
            }
        }
    }
    z
}

/// Roots grouped into clusters of (near-)multiple roots, each refined on the
/// derivative of matching order. Returns (root, multiplicity).
pub fn roots_with_multiplicity(coeffs: &[C64], cluster_tol: f64) -> Vec<(C64, usize)> {
    let z = roots(coeffs);
    let mut used = vec![false; z.len()];
    let mut out = Vec::new();
    for i in 0..z.len() {
        if used[i] {
            continue;
        }
        let mut group = vec![i];
        used[i] = true;
        for j in i + 1..z.len() {
            if !used[j] && (z[j] - z[i]).norm() < cluster_tol * (1.0 + z[i].norm()) {
                used[j] = true;
                group.push(j);
            }
        }
        let k = group.len();
        let mut c = group.iter().map(|&g| z[g]).sum::<C64>() / k as f64;
        let mut d = coeffs.to_vec();
        for _ in 0..k - 1 {
            d = deriv(&d);
        }
        let dd = deriv(&d);
        for _ in 0..8 {
            let den = eval(&dd, c);
            if den.norm() == 0.0 {
                break;
            }
            let s = eval(&d, c) / den;
            if !s.is_finite() {
                break;
            }
            c -= s;
            if s.norm() < 1e-17 * (1.0 + c.norm()) {
                break;
            }
        }
        out.push((c, k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn roots_of_product() {
        let rs = [c(1.0, 0.0), c(-2.0, 0.5), c(0.3, -1.1), c(0.0, 2.0)];
        let mut p = vec![c(1.0, 0.0)];
        for r in rs {
            p = mul(&p, &[-r, c(1.0, 0.0)]);
        }
        let found = roots(&p);
        for r in rs {
            let d = found.iter().map(|z| (z - r).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-13, "{r} {d}");
        }
    }

    #[test]
    fn double_root_cluster() {
        // t^2 (t - 1)(t + 2)
        let p = mul(&mul(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], &[c(-1.0, 0.0), c(1.0, 0.0)]), &[c(2.0, 0.0), c(1.0, 0.0)]);
        let rm = roots_with_multiplicity(&p, 1e-5);
        assert_eq!(rm.len(), 3);
        let zero = rm.iter().find(|(z, _)| z.norm() < 0.1).unwrap();
        assert_eq!(zero.1, 2);
        assert!(zero.0.norm() < 1e-14);
    }
}
