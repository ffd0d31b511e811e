//! Hyperelliptic curves w² = Π(λ − λ_m) with a canonical homology basis.

use crate::linalg;
use crate::quad;
use crate::{CMat, Error, Result, C64};
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Hyperelliptic {
    /// Branch points in homology order.
    pub e: Vec<C64>,
    pub g: usize,
    /// a-periods of λ^{β−1}dλ/w.
    pub a_mat: CMat,
    pub a_inv: CMat,
    pub b: CMat,
    /// ‖B − Bᵀ‖ before symmetrisation.
    pub b_asym: f64,
    pub period_err: f64,
    /// b-cycles reversed to make Im B positive.
    pub flip: bool,
    /// Left-bank value of w at the midpoint of the first segment.
    pub y_mid1: C64,
}

/// Integration tolerance relative to the magnitude of the integrand scale.
const QTOL: f64 = 1e-14;

impl Hyperelliptic {
    /// Branch points sorted by (re, im).
    pub fn new(points: &[C64]) -> Result<Self> {
        let mut e = points.to_vec();
        e.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        Self::with_order(e, None)
    }

    /// Keep the given order; with a reference curve the sheet and orientation
    /// choices follow it continuously.
    pub fn with_order(e: Vec<C64>, reference: Option<&Hyperelliptic>) -> Result<Self> {
        let n = e.len();
        if n < 4 || n % 2 != 0 {
            return Err(Error::UnsupportedGeometry(format!("hyperelliptic curve needs an even number ≥ 4 of branch points, got {n}")));
        }
        let g = n / 2 - 1;
        let mut diam: f64 = 0.0;
        let mut sep = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let d = (e[i] - e[j]).norm();
                diam = diam.max(d);
                sep = sep.min(d);
            }
        }
        if sep < 1e-6 * diam {
            return Err(Error::NearDegenerateCurve { separation: sep });
        }
        let mut curve = Hyperelliptic {
            e,
            g,
            a_mat: CMat::zeros(g, g),
            a_inv: CMat::zeros(g, g),
            b: CMat::zeros(g, g),
            b_asym: 0.0,
            period_err: 0.0,
            flip: false,
            y_mid1: C64::new(0.0, 0.0),
        };
        curve.compute_periods(reference)?;
        Ok(curve)
    }

    pub fn y2(&self, lam: C64) -> C64 {
        self.e.iter().fold(C64::new(1.0, 0.0), |acc, &x| acc * (lam - x))
    }

    /// Continue w from `a` to `b` along the straight segment (which must avoid all branch points).
    pub fn step_y(&self, a: C64, ya: C64, b: C64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for &x in &self.e {
            s += ((b - x) / (a - x)).ln();
        }
        ya * (s * 0.5).exp()
    }

    pub fn dist_branch(&self, lam: C64) -> f64 {
        self.e.iter().map(|&x| (lam - x).norm()).fold(f64::INFINITY, f64::min)
    }

    /// λ^{β−1}/w for β = 1..g.
    pub fn raw(&self, lam: C64, y: C64) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.g);
        let mut p = C64::new(1.0, 0.0) / y;
        for _ in 0..self.g {
            out.push(p);
            p *= lam;
        }
        out
    }

    pub fn normalize(&self, raw: &[C64]) -> Vec<C64> {
        (0..self.g)
            .map(|a| (0..self.g).map(|b| self.a_inv[(b, a)] * raw[b]).sum())
            .collect()
    }

    /// Normalised holomorphic differentials divided by dλ.
    pub fn v(&self, lam: C64, y: C64) -> Vec<C64> {
        self.normalize(&self.raw(lam, y))
    }

    /// d/dλ of [`Self::v`] along the sheet.
    pub fn dv(&self, lam: C64, y: C64) -> Vec<C64> {
        let lw: C64 = self.e.iter().map(|&x| C64::new(1.0, 0.0) / (lam - x)).sum::<C64>() * 0.5;
        let raw: Vec<C64> = (0..self.g)
            .map(|b| {
                let pb = if b == 0 { C64::new(0.0, 0.0) } else { lam.powu(b as u32 - 1) * b as f64 };
                (pb - lam.powu(b as u32) * lw) / y
            })
            .collect();
        self.normalize(&raw)
    }

    /// ∫ from `a` (with w = ya) to branch point `k` along the straight segment,
    /// of λ^{β−1}dλ/w. Returns (integrals, error estimate).
    pub fn raw_to_branch(&self, a: C64, ya: C64, k: usize) -> (Vec<C64>, f64) {
        let ek = self.e[k];
        let da = a - ek;
        let g = self.g;
        let scale = (2.0 * da.norm() / ya.norm()) * (1.0 + a.norm()).powi(g as i32);
        let f = |tau: f64, out: &mut [C64]| {
            let lam = ek + da * (tau * tau);
            let mut s = C64::new(0.0, 0.0);
            for (n, &x) in self.e.iter().enumerate() {
                if n != k {
                    s += ((lam - x) / (a - x)).ln();
                }
            }
            // w = ya·τ·exp(s/2); the factor τ cancels against dλ = 2 da τ dτ
            let base = da * 2.0 / (ya * (s * 0.5).exp());
            let mut p = base;
            for o in out.iter_mut().take(g) {
                *o = -p;
                p *= lam;
            }
        };
        quad::adaptive(f, 0.0, 1.0, g, QTOL * scale, 16)
    }

    /// ∫ of λ^{β−1}dλ/w along a straight segment between regular points.
    pub fn raw_segment(&self, a: C64, ya: C64, b: C64) -> (Vec<C64>, f64) {
        let d = b - a;
        let g = self.g;
        let scale = d.norm() / ya.norm().max(1e-300) * (1.0 + a.norm().max(b.norm())).powi(g as i32);
        let f = |s: f64, out: &mut [C64]| {
            let lam = a + d * s;
            let y = self.step_y(a, ya, lam);
            let mut p = d / y;
            for o in out.iter_mut().take(g) {
                *o = p;
                p *= lam;
            }
        };
        quad::adaptive(f, 0.0, 1.0, g, QTOL * scale, 16)
    }

    fn compute_periods(&mut self, reference: Option<&Hyperelliptic>) -> Result<()> {
        let e = self.e.clone();
        let n = e.len();
        let g = self.g;
        let mids: Vec<C64> = (0..n - 1).map(|k| (e[k] + e[k + 1]) * 0.5).collect();
        let mut ym = vec![C64::new(0.0, 0.0); n - 1];
        ym[0] = self.y2(mids[0]).sqrt();
        if let Some(r) = reference {
            if (ym[0] + r.y_mid1).norm() < (ym[0] - r.y_mid1).norm() {
                ym[0] = -ym[0];
            }
        }
        self.y_mid1 = ym[0];
        // left-bank continuation through the vertices
        for k in 0..n - 2 {
            let v = e[k + 1];
            let din = (e[k + 1] - e[k]) / (e[k + 1] - e[k]).norm();
            let dout = (e[k + 2] - e[k + 1]) / (e[k + 2] - e[k + 1]).norm();
            let others = e
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k + 1)
                .map(|(_, &x)| (x - v).norm())
                .fold(f64::INFINITY, f64::min);
            let rho = 0.2 * others.min((e[k + 1] - e[k]).norm()).min((e[k + 2] - e[k + 1]).norm());
            let bm = v - din * rho;
            let bp = v + dout * rho;
            let y1 = self.step_y(mids[k], ym[k], bm);
            let phis = (-din).arg();
            let delta = (phis - dout.arg()).rem_euclid(2.0 * PI);
            let mut s = C64::new(0.0, -delta);
            for (i, &x) in e.iter().enumerate() {
                if i != k + 1 {
                    s += ((bp - x) / (bm - x)).ln();
                }
            }
            let y2 = y1 * (s * 0.5).exp();
            ym[k + 1] = self.step_y(bp, y2, mids[k + 1]);
        }
        let mut seg = Vec::with_capacity(n - 1);
        let mut err: f64 = 0.0;
        for k in 0..n - 1 {
            let (r1, e1) = self.raw_to_branch(mids[k], ym[k], k + 1);
            let (r0, e0) = self.raw_to_branch(mids[k], ym[k], k);
            err = err.max(e1 + e0);
            seg.push((0..g).map(|b| r1[b] - r0[b]).collect::<Vec<C64>>());
        }
        let mut a = CMat::zeros(g, g);
        let mut braw = CMat::zeros(g, g);
        for al in 0..g {
            for be in 0..g {
                a[(al, be)] = seg[2 * al][be] * 2.0;
                let mut s = C64::new(0.0, 0.0);
                for k in (2 * al + 1..2 * g).step_by(2) {
                    s += seg[k][be];
                }
                braw[(al, be)] = s * 2.0;
            }
        }
        let a_inv = linalg::inverse(&a).map_err(|_| Error::NearDegenerateCurve { separation: 0.0 })?;
        let mut b = (&braw * &a_inv).transpose();
        let mut flip = false;
        let yim = nalgebra::DMatrix::from_fn(g, g, |i, j| 0.5 * (b[(i, j)].im + b[(j, i)].im));
        let lmin = linalg::min_eigen_sym(&yim);
        let want_flip = match reference {
            Some(r) => r.flip,
            None => lmin < 0.0,
        };
        if want_flip {
            b = -b;
            flip = true;
        }
        self.b_asym = linalg::max_abs(&(&b - b.transpose()));
        let bs = (&b + b.transpose()) * C64::new(0.5, 0.0);
        crate::theta::check_period_matrix(&bs)?;
        self.a_mat = a;
        self.a_inv = a_inv;
        self.b = bs;
        self.flip = flip;
        self.period_err = err;
        Ok(())
    }

    /// Closed loop around the slit of a_α on the reference sheet, as
    /// (start point, w at start, path). Integrates to e_α.
    pub fn a_cycle(&self, alpha: usize) -> (C64, C64, super::path::Path) {
        use super::path::Piece;
        let e0 = self.e[2 * alpha];
        let e1 = self.e[2 * alpha + 1];
        let d = e1 - e0;
        let u = d / d.norm();
        let left = u * C64::new(0.0, 1.0);
        let others = self
            .e
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 2 * alpha && *i != 2 * alpha + 1)
            .map(|(_, &x)| {
                let s = ((x - e0) * u.conj()).re.clamp(0.0, d.norm());
                (x - (e0 + u * s)).norm()
            })
            .fold(f64::INFINITY, f64::min);
        let rho = 0.3 * others.min(d.norm());
        let mid = (e0 + e1) * 0.5;
        let ym = self.left_bank_mid(2 * alpha);
        let start = mid + left * rho;
        let ys = self.step_y(mid, ym, start);
        // clockwise stadium: forward on the left, around e1, back on the right, around e0
        let th = u.arg();
        let path = vec![
            Piece::Seg(start, e1 + left * rho),
            Piece::Arc { c: e1, r: rho, a0: th + PI / 2.0, a1: th - PI / 2.0 },
            Piece::Seg(e1 - left * rho, e0 - left * rho),
            Piece::Arc { c: e0, r: rho, a0: th - PI / 2.0, a1: th - 3.0 * PI / 2.0 },
            Piece::Seg(e0 + left * rho, start),
        ];
        (start, ys, path)
    }

    /// Left-bank w at the midpoint of segment k.
    pub fn left_bank_mid(&self, k: usize) -> C64 {
        let e = &self.e;
        let mids: Vec<C64> = (0..e.len() - 1).map(|i| (e[i] + e[i + 1]) * 0.5).collect();
        let mut y = self.y_mid1;
        for i in 0..k {
            let v = e[i + 1];
            let din = (e[i + 1] - e[i]) / (e[i + 1] - e[i]).norm();
            let dout = (e[i + 2] - e[i + 1]) / (e[i + 2] - e[i + 1]).norm();
            let others = e
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i + 1)
                .map(|(_, &x)| (x - v).norm())
                .fold(f64::INFINITY, f64::min);
            let rho = 0.2 * others.min((e[i + 1] - e[i]).norm()).min((e[i + 2] - e[i + 1]).norm());
            let bm = v - din * rho;
            let bp = v + dout * rho;
            let y1 = self.step_y(mids[i], y, bm);
            let delta = ((-din).arg() - dout.arg()).rem_euclid(2.0 * PI);
            let mut s = C64::new(0.0, -delta);
            for (j, &x) in e.iter().enumerate() {
                if j != i + 1 {
                    s += ((bp - x) / (bm - x)).ln();
                }
            }
            y = self.step_y(bp, y1 * (s * 0.5).exp(), mids[i + 1]);
        }
        y
    }

    /// b_α as a sum of closed loops: for each gap segment between slits α..g,
    /// along its left bank, once around the far end, back, once around the near end.
    pub fn b_cycle(&self, alpha: usize) -> Vec<(C64, C64, super::path::Path)> {
        use super::path::{circle_from, Piece};
        let e = &self.e;
        let sep = (0..e.len())
            .flat_map(|i| (0..e.len()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| (e[i] - e[j]).norm())
            .fold(f64::INFINITY, f64::min);
        let rho = 0.15 * sep;
        (2 * alpha + 1..2 * self.g)
            .step_by(2)
            .map(|k| {
                let d = (e[k + 1] - e[k]) / (e[k + 1] - e[k]).norm();
                let start = e[k] + d * rho;
                let end = e[k + 1] - d * rho;
                let path = vec![
                    Piece::Seg(start, end),
                    circle_from(e[k + 1], end),
                    Piece::Seg(end, start),
                    circle_from(e[k], start),
                ];
                let ys = self.step_y((e[k] + e[k + 1]) * 0.5, self.left_bank_mid(k), start);
                (start, ys, path)
            })
            .collect()
    }
}
