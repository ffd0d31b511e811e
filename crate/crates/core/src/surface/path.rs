//! Piecewise paths in the λ-plane.

use crate::C64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Seg(C64, C64),
    /// Arc around `c` of radius `r` from angle `a0` to `a1` (counterclockwise when `a1 > a0`).
    Arc { c: C64, r: f64, a0: f64, a1: f64 },
}

impl Piece {
    pub fn at(&self, s: f64) -> C64 {
        match *self {
            Piece::Seg(a, b) => a + (b - a) * s,
            Piece::Arc { c, r, a0, a1 } => c + C64::from_polar(r, a0 + (a1 - a0) * s),
        }
    }
    pub fn deriv(&self, s: f64) -> C64 {
        match *self {
            Piece::Seg(a, b) => b - a,
            Piece::Arc { r, a0, a1, .. } => {
                let th = a0 + (a1 - a0) * s;
                C64::new(0.0, 1.0) * C64::from_polar(r, th) * (a1 - a0)
            }
        }
    }
    pub fn start(&self) -> C64 {
        self.at(0.0)
    }
    pub fn end(&self) -> C64 {
        self.at(1.0)
    }
    pub fn length(&self) -> f64 {
        match *self {
            Piece::Seg(a, b) => (b - a).norm(),
            Piece::Arc { r, a0, a1, .. } => r * (a1 - a0).abs(),
        }
    }
    pub fn reversed(&self) -> Piece {
        match *self {
            Piece::Seg(a, b) => Piece::Seg(b, a),
            Piece::Arc { c, r, a0, a1 } => Piece::Arc { c, r, a0: a1, a1: a0 },
        }
    }
    /// Sub-piece on parameter range [s0, s1].
    pub fn sub(&self, s0: f64, s1: f64) -> Piece {
        match *self {
            Piece::Seg(_, _) => Piece::Seg(self.at(s0), self.at(s1)),
            Piece::Arc { c, r, a0, a1 } => Piece::Arc { c, r, a0: a0 + (a1 - a0) * s0, a1: a0 + (a1 - a0) * s1 },
        }
    }
}

pub type Path = Vec<Piece>;

pub fn reverse(p: &[Piece]) -> Path {
    p.iter().rev().map(|q| q.reversed()).collect()
}

/// Full counterclockwise circle around `c` starting and ending at `start`.
pub fn circle_from(c: C64, start: C64) -> Piece {
    let r = (start - c).norm();
    let a0 = (start - c).arg();
    Piece::Arc { c, r, a0, a1: a0 + 2.0 * PI }
}

/// Straight path from `a` to `b` with semicircular detours around every point of
/// `avoid` that lies closer than `rho` to the segment. Detours pass on the left.
pub fn segment_with_detours(a: C64, b: C64, avoid: &[C64], rho: f64) -> Path {
    let d = b - a;
    let len = d.norm();
    if len == 0.0 {
        return Vec::new();
    }
    let u = d / len;
    let mut hits: Vec<(f64, f64)> = avoid
        .iter()
        .filter_map(|&p| {
            let s = ((p - a) * u.conj()).re;
            let off = ((p - a) * u.conj()).im;
            let rr = rho + off.abs();
            if s > rr && s < len - rr && off.abs() < rho {
                Some((s, rr))
            } else {
                None
            }
        })
        .collect();
    hits.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut out = Vec::new();
    let mut cur = a;
    for (s, rr) in hits {
        let proj = a + u * s;
        let enter = proj - u * rr;
        if (enter - cur).norm() > 0.0 {
            out.push(Piece::Seg(cur, enter));
        }
        // semicircle around the projection through the left side
        let a0 = (-u).arg();
        out.push(Piece::Arc { c: proj, r: rr, a0, a1: a0 - PI });
        cur = proj + u * rr;
    }
    if (b - cur).norm() > 0.0 {
        out.push(Piece::Seg(cur, b));
    }
    out
}
