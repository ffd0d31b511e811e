//! Compact Riemann surfaces realised as branched coverings of the sphere, with
//! continuation of points, sheets and Abel map along paths.

pub mod hyperelliptic;
pub mod path;
pub mod rational;

pub use hyperelliptic::Hyperelliptic;
pub use path::{Path, Piece};
pub use rational::Rational;

use crate::quad;
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone)]
pub enum Surface {
    Hyper(Hyperelliptic),
    Rational(Rational),
}

/// A point of the surface away from branch points: base coordinate, sheet
/// coordinate (w for hyperelliptic curves, t for rational maps) and the Abel
/// map accumulated from wherever the walk started.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfPt {
    pub lam: C64,
    pub y: C64,
    pub u: Vec<C64>,
}

impl Surface {
    pub fn genus(&self) -> usize {
        match self {
            Surface::Hyper(h) => h.g,
            Surface::Rational(_) => 0,
        }
    }

    pub fn sheets(&self) -> usize {
        match self {
            Surface::Hyper(_) => 2,
            Surface::Rational(r) => r.n,
        }
    }

    /// Period matrix (0×0 in genus zero).
    pub fn b(&self) -> CMat {
        match self {
            Surface::Hyper(h) => h.b.clone(),
            Surface::Rational(_) => CMat::zeros(0, 0),
        }
    }

    /// Distinct critical values.
    pub fn branch_values(&self) -> Vec<C64> {
        match self {
            Surface::Hyper(h) => h.e.clone(),
            Surface::Rational(r) => {
                let mut out: Vec<C64> = Vec::new();
                for c in &r.crit {
                    if !out.iter().any(|&x| (x - c.lam).norm() < 1e-9 * (1.0 + x.norm())) {
                        out.push(c.lam);
                    }
                }
                out
            }
        }
    }

    pub fn dist_crit(&self, lam: C64) -> f64 {
        match self {
            Surface::Hyper(h) => h.dist_branch(lam),
            Surface::Rational(r) => r.crit.iter().map(|c| (c.lam - lam).norm()).fold(f64::INFINITY, f64::min),
        }
    }

    /// Sheet coordinates over a regular λ.
    pub fn fiber(&self, lam: C64) -> Vec<C64> {
        match self {
            Surface::Hyper(h) => {
                let w = h.y2(lam).sqrt();
                vec![w, -w]
            }
            Surface::Rational(r) => r.fiber(lam),
        }
    }

    pub fn point(&self, lam: C64, y: C64) -> SurfPt {
        SurfPt { lam, y, u: vec![C64::new(0.0, 0.0); self.genus()] }
    }

    /// Normalised holomorphic differentials over dλ.
    pub fn v(&self, p: &SurfPt) -> Vec<C64> {
        match self {
            Surface::Hyper(h) => h.v(p.lam, p.y),
            Surface::Rational(_) => Vec::new(),
        }
    }

    pub fn dv(&self, p: &SurfPt) -> Vec<C64> {
        match self {
            Surface::Hyper(h) => h.dv(p.lam, p.y),
            Surface::Rational(_) => Vec::new(),
        }
    }

    /// Abel map at branch point `k` (hyperelliptic numbering), reached along a
    /// straight segment from `p`.
    pub fn u_at_branch(&self, p: &SurfPt, k: usize) -> Vec<C64> {
        match self {
            Surface::Hyper(h) => {
                let (raw, _) = h.raw_to_branch(p.lam, p.y, k);
                let d = h.normalize(&raw);
                p.u.iter().zip(d).map(|(a, b)| a + b).collect()
            }
            Surface::Rational(_) => Vec::new(),
        }
    }

    fn step(&self, p: &SurfPt, sub: &Piece) -> Option<SurfPt> {
        let lam1 = sub.end();
        match self {
            Surface::Hyper(h) => {
                let lam0 = p.lam;
                let y0 = p.y;
                let g = h.g;
                let (du, _) = quad::gk15(
                    |s, out| {
                        let lam = sub.at(s);
                        let y = h.step_y(lam0, y0, lam);
                        let v = h.v(lam, y);
                        let dl = sub.deriv(s);
                        for a in 0..g {
                            out[a] = v[a] * dl;
                        }
                    },
                    0.0,
                    1.0,
                    g,
                );
                let y1 = h.step_y(lam0, y0, lam1);
                Some(SurfPt { lam: lam1, y: y1, u: p.u.iter().zip(du).map(|(a, b)| a + b).collect() })
            }
            Surface::Rational(r) => {
                let dt = (lam1 - p.lam) / r.df(p.y);
                let t1 = r.track(p.y + dt, lam1)?;
                if (t1 - p.y - dt).norm() > 0.25 * dt.norm() + 1e-14 * (1.0 + p.y.norm()) {
                    return None;
                }
                Some(SurfPt { lam: lam1, y: t1, u: Vec::new() })
            }
        }
    }

    /// Continue a point and attached data along one piece. Steps stay well inside
    /// the disc free of critical values and of the `avoid` points; `upd` extends
    /// the attached data over a step or rejects it, which halves the step.
    pub fn walk_piece<T, F>(&self, start: &SurfPt, data: &T, piece: &Piece, avoid: &[C64], upd: &mut F) -> Result<(SurfPt, T)>
    where
        T: Clone,
        F: FnMut(&SurfPt, &T, &SurfPt) -> Option<T>,
    {
        let mut p = start.clone();
        let mut d = data.clone();
        if (piece.start() - p.lam).norm() > 1e-9 * (1.0 + p.lam.norm()) {
            return Err(Error::Invalid("path does not start at the point".into()));
        }
        let len = piece.length();
        if len == 0.0 {
            return Ok((p, d));
        }
        let mut s = 0.0;
        let mut ds = 1.0f64;
        while s < 1.0 {
            let dc = self.dist_crit(p.lam);
            let da = avoid.iter().map(|&a| (a - p.lam).norm()).fold(f64::INFINITY, f64::min);
            let tiny = 1e-10 * (1.0 + p.lam.norm());
            if dc < tiny {
                return Err(Error::PathThroughBranchPoint(format!("near {}", p.lam)));
            }
            if da < tiny {
                return Err(Error::PathThroughSingularity(format!("near {}", p.lam)));
            }
            let dmax = 0.2 * dc.min(da) / len;
            ds = (2.0 * ds).min(dmax).min(1.0 - s);
            loop {
                if ds < 1e-13 {
                    return Err(Error::StepSizeUnderflow(format!("at {}", p.lam)));
                }
                let s1 = if s + ds >= 1.0 - 1e-15 { 1.0 } else { s + ds };
                let sub = piece.sub(s, s1);
                let next = self.step(&p, &sub).and_then(|q| upd(&p, &d, &q).map(|nd| (q, nd)));
                match next {
                    Some((q, nd)) => {
                        p = q;
                        d = nd;
                        s = s1;
                        break;
                    }
                    None => ds *= 0.5,
                }
            }
        }
        // land exactly on the end point
        p.lam = piece.end();
        Ok((p, d))
    }

    pub fn walk<T, F>(&self, start: &SurfPt, data: &T, path: &[Piece], avoid: &[C64], upd: &mut F) -> Result<(SurfPt, T)>
    where
        T: Clone,
        F: FnMut(&SurfPt, &T, &SurfPt) -> Option<T>,
    {
        let mut cur = (start.clone(), data.clone());
        for piece in path {
            cur = self.walk_piece(&cur.0, &cur.1, piece, avoid, upd)?;
        }
        Ok(cur)
    }

    /// Continue a bare point.
    pub fn walk_point(&self, start: &SurfPt, path: &[Piece]) -> Result<SurfPt> {
        Ok(self.walk(start, &(), path, &[], &mut |_, _, _| Some(()))?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn genus2() -> Hyperelliptic {
        Hyperelliptic::new(&[c(-2.0, 0.3), c(-1.1, -0.4), c(-0.2, 0.5), c(0.6, -0.3), c(1.4, 0.2), c(2.3, -0.1)]).unwrap()
    }

    #[test]
    fn a_and_b_cycles_integrate_to_lattice_vectors() {
        let h = genus2();
        assert!(h.b_asym < 1e-11, "asym {}", h.b_asym);
        let s = Surface::Hyper(h.clone());
        for al in 0..2 {
            let (st, ys, path) = h.a_cycle(al);
            let q = s.walk_point(&s.point(st, ys), &path).unwrap();
            for be in 0..2 {
                let want = if al == be { 1.0 } else { 0.0 };
                assert!((q.u[be] - want).norm() < 1e-11, "a{al}: {:?}", q.u);
            }
            assert!((q.y - ys).norm() < 1e-10 * ys.norm());
            let mut tot = vec![C64::new(0.0, 0.0); 2];
            for (st, ys, path) in h.b_cycle(al) {
                let q = s.walk_point(&s.point(st, ys), &path).unwrap();
                assert!((q.y - ys).norm() < 1e-10 * ys.norm());
                for be in 0..2 {
                    tot[be] += q.u[be];
                }
            }
            let sign = if h.flip { -1.0 } else { 1.0 };
            for be in 0..2 {
                assert!((tot[be] - h.b[(al, be)] * sign).norm() < 1e-10, "b{al}: {:?} vs {}", tot, h.b);
            }
        }
    }
}
