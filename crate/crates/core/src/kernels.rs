//! Prime form, Szegő kernels, Bergmann kernel and projective connection on a
//! surface model, with continuation of the multivalued pieces along paths.
//!
//! All kernels are returned as scalar parts in λ-charts unless a chart is named.
//! The spinor h(P) solves h² = Σ_α ∂_αθ*(0) v_α(P) (dλ-chart) for the chosen odd
//! characteristic θ*; in genus zero h² = dt/dλ for the uniformising coordinate t.

use crate::quad;
use crate::surface::{Path, Piece, SurfPt, Surface};
use crate::theta::{self, Characteristic, HalfChar, ThetaConfig, ThetaEval};
use crate::{CMat, Error, Result, C64};

/// A point used as an anchor of the multivalued factors E(P, R): its Abel image
/// (genus ≥ 1) or uniformising coordinate (genus 0), and the odd characteristic
/// (index into [`Frame::alts`]) whose spinor does not vanish there.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub u: Vec<C64>,
    pub t: C64,
    pub alt: usize,
}

/// Point with spinor value h and continuous logs
/// ℓ_R(P) = ln θ_R(U(P) − U_R) − ln h_R(P) (genus 0: ln(t − t_R) − ln h),
/// θ_R the odd theta function of site R and h_R its spinor, kept in `hs`.
#[derive(Debug, Clone, PartialEq)]
pub struct KState {
    pub pt: SurfPt,
    pub h: C64,
    pub ell: Vec<C64>,
    pub hs: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub surface: Surface,
    pub b: CMat,
    pub odd: HalfChar,
    pub star: Characteristic,
    /// ∇θ*(0).
    pub grad0: Vec<C64>,
    /// Odd nonsingular characteristics with ∇θ(0); θ* first.
    pub alts: Vec<(Characteristic, Vec<C64>)>,
    pub cfg: ThetaConfig,
}

impl Frame {
    pub fn new(surface: Surface, cfg: ThetaConfig, odd: Option<HalfChar>) -> Result<Frame> {
        let b = surface.b();
        let g = b.nrows();
        let odd = match (g, odd) {
            (0, _) => HalfChar::zero(0),
            (_, Some(o)) => o,
            _ => theta::find_odd_nonsingular_characteristic(&b, &cfg)?,
        };
        let star = odd.to_char();
        let zero = vec![C64::new(0.0, 0.0); g];
        let grad0 = if g == 0 {
            Vec::new()
        } else {
            let ev = theta::theta(&zero, &b, &star, &cfg, 1)?;
            if ev.grad.iter().map(|x| x.norm()).fold(0.0, f64::max) < 1e-8 * ev.scale {
                return Err(Error::SingularCharacteristic);
            }
            ev.grad
        };
        let mut alts = vec![(star.clone(), grad0.clone())];
        if g >= 2 {
            for hc in theta::odd_nonsingular_characteristics(&b, &cfg)? {
                if hc != odd {
                    let ch = hc.to_char();
                    let ev = theta::theta(&zero, &b, &ch, &cfg, 1)?;
                    alts.push((ch, ev.grad));
                }
            }
        }
        Ok(Frame { surface, b, odd, star, grad0, alts, cfg })
    }

    pub fn g(&self) -> usize {
        self.b.nrows()
    }

    pub fn theta_star(&self, z: &[C64], order: usize) -> Result<ThetaEval> {
        theta::theta(z, &self.b, &self.star, &self.cfg, order)
    }

    pub fn theta_ch(&self, z: &[C64], ch: &Characteristic, order: usize) -> Result<ThetaEval> {
        theta::theta(z, &self.b, ch, &self.cfg, order)
    }

    fn rational(&self) -> Option<&crate::surface::Rational> {
        match &self.surface {
            Surface::Rational(r) => Some(r),
            _ => None,
        }
    }

    /// h² in the λ-chart.
    pub fn h2(&self, p: &SurfPt) -> C64 {
        self.h2_alt(p, 0)
    }

    /// Square of the spinor of odd characteristic `alt`.
    pub fn h2_alt(&self, p: &SurfPt, alt: usize) -> C64 {
        match self.rational() {
            Some(r) => C64::new(1.0, 0.0) / r.df(p.y),
            None => self.surface.v(p).iter().zip(&self.alts[alt].1).map(|(a, b)| a * b).sum(),
        }
    }

    /// ∂_λ ln h.
    pub fn dlog_h(&self, p: &SurfPt) -> C64 {
        self.dlog_h_alt(p, 0)
    }

    pub fn dlog_h_alt(&self, p: &SurfPt, alt: usize) -> C64 {
        match self.rational() {
            Some(r) => {
                let tc = r.taylor(p.y, 2);
                // h² = 1/f′, d/dλ = (1/f′) d/dt
                -(tc[2] * 2.0) / (tc[1] * tc[1]) * 0.5
            }
            None => {
                let gr = &self.alts[alt].1;
                let v: C64 = self.surface.v(p).iter().zip(gr).map(|(a, b)| a * b).sum();
                let dv: C64 = self.surface.dv(p).iter().zip(gr).map(|(a, b)| a * b).sum();
                dv / v * 0.5
            }
        }
    }

    /// First odd characteristic whose spinor does not vanish at the branch point
    /// e_k of a hyperelliptic model (θ* whenever possible).
    pub fn alt_for_branch(&self, k: usize) -> usize {
        let h = match &self.surface {
            Surface::Hyper(h) => h,
            _ => return 0,
        };
        for (i, (_, gr)) in self.alts.iter().enumerate() {
            // y·h² is a polynomial; compare its value at e_k with its size on the branch set
            let val = |l: C64| -> f64 { h.v(l, C64::new(1.0, 0.0)).iter().zip(gr).map(|(a, b)| a * b).sum::<C64>().norm() };
            let top = h.e.iter().map(|&l| val(l)).fold(0.0, f64::max);
            if val(h.e[k]) > 1e-6 * top {
                return i;
            }
        }
        0
    }

    pub fn site_of(&self, p: &SurfPt) -> Site {
        Site { u: p.u.clone(), t: p.y, alt: 0 }
    }

    /// θ_R(U_P − U_R) (genus 0: t_P − t_R).
    pub fn anchor_value(&self, p: &SurfPt, s: &Site) -> Result<C64> {
        if self.g() == 0 {
            return Ok(p.y - s.t);
        }
        let z: Vec<C64> = p.u.iter().zip(&s.u).map(|(a, b)| a - b).collect();
        Ok(self.theta_ch(&z, &self.alts[s.alt].0, 0)?.value)
    }

    /// ∂_λ ℓ_R(P).
    pub fn dlog_anchor(&self, p: &SurfPt, s: &Site) -> Result<C64> {
        if let Some(r) = self.rational() {
            return Ok(C64::new(1.0, 0.0) / (r.df(p.y) * (p.y - s.t)) - self.dlog_h(p));
        }
        let z: Vec<C64> = p.u.iter().zip(&s.u).map(|(a, b)| a - b).collect();
        let ev = self.theta_ch(&z, &self.alts[s.alt].0, 1)?;
        let v = self.surface.v(p);
        let mut d = -self.dlog_h_alt(p, s.alt);
        for a in 0..self.g() {
            d += ev.grad[a] / ev.value * v[a];
        }
        Ok(d)
    }

    /// State at a point with principal h and ℓ, or with values continuous to a
    /// reference state (used when the geometry is perturbed slightly).
    pub fn start_state(&self, pt: SurfPt, sites: &[Site], reference: Option<&KState>) -> Result<KState> {
        let flip = |h: C64, r: Option<C64>| match r {
            Some(r) if (h + r).norm() < (h - r).norm() => -h,
            _ => h,
        };
        let h = flip(self.h2(&pt).sqrt(), reference.map(|r| r.h));
        if h.norm() == 0.0 {
            return Err(Error::SingularCharacteristic);
        }
        let mut ell = Vec::with_capacity(sites.len());
        let mut hs = Vec::with_capacity(sites.len());
        for (i, s) in sites.iter().enumerate() {
            let hr = flip(self.h2_alt(&pt, s.alt).sqrt(), reference.map(|r| r.hs[i]));
            let mut l = (self.anchor_value(&pt, s)? / hr).ln();
            if let Some(r) = reference {
                let k = ((r.ell[i] - l).im / (2.0 * std::f64::consts::PI)).round();
                l += C64::new(0.0, 2.0 * std::f64::consts::PI * k);
            }
            ell.push(l);
            hs.push(hr);
        }
        Ok(KState { pt, h, ell, hs })
    }

    /// Continue a state along a path; `avoid` should contain the projections of
    /// all anchor points.
    pub fn walk(&self, st: &KState, sites: &[Site], path: &Path, avoid: &[C64]) -> Result<KState> {
        let mut vals = Vec::with_capacity(sites.len());
        for s in sites {
            vals.push(self.anchor_value(&st.pt, s)?);
        }
        let spin = |p: &SurfPt, h: C64| (h, h * self.dlog_h(p));
        let spins: Vec<(C64, C64)> = sites.iter().zip(&st.hs).map(|(s, &h)| (h, h * self.dlog_h_alt(&st.pt, s.alt))).collect();
        let data = (spin(&st.pt, st.h), st.ell.clone(), vals, spins);
        let mut err: Option<Error> = None;
        type D = ((C64, C64), Vec<C64>, Vec<C64>, Vec<(C64, C64)>);
        // a spinor branch continued with a linear predictor, which keeps the
        // branch through zeros of h
        let track = |h2: C64, (h0, dh0): (C64, C64), dl: C64| -> Option<C64> {
            let pred = h0 + dh0 * dl;
            let mut h = h2.sqrt();
            if (h + pred).norm() < (h - pred).norm() {
                h = -h;
            }
            if (h - pred).norm() > 0.5 * (h + pred).norm() {
                return None;
            }
            Some(h)
        };
        let mut upd = |old: &SurfPt, d: &D, new: &SurfPt| -> Option<D> {
            let (s0, ell0, v0, sp0) = d;
            let dl = new.lam - old.lam;
            let h = track(self.h2(new), *s0, dl)?;
            let mut ell = Vec::with_capacity(ell0.len());
            let mut vals = Vec::with_capacity(v0.len());
            let mut sps = Vec::with_capacity(v0.len());
            for (i, s) in sites.iter().enumerate() {
                let hr = if s.alt == 0 { h } else { track(self.h2_alt(new, s.alt), sp0[i], dl)? };
                let v = match self.anchor_value(new, s) {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(e);
                        return None;
                    }
                };
                // θ_R(U_P − U_R)/h_R(P) stays away from zero off R
                let dlg = (v / v0[i] * (sp0[i].0 / hr)).ln();
                if dlg.norm() > 0.5 {
                    return None;
                }
                ell.push(ell0[i] + dlg);
                vals.push(v);
                sps.push((hr, hr * self.dlog_h_alt(new, s.alt)));
            }
            Some(((h, h * self.dlog_h(new)), ell, vals, sps))
        };
        let res = self.surface.walk(&st.pt, &data, path, avoid, &mut upd);
        if let Some(e) = err {
            return Err(e);
        }
        let (pt, ((h, _), ell, _, sps)) = res?;
        Ok(KState { pt, h, ell, hs: sps.into_iter().map(|x| x.0).collect() })
    }

    /// Scalar prime form e(P,Q) in λ-charts: θ*(U_P − U_Q)/(h_P h_Q).
    pub fn prime(&self, a: &KState, b: &KState) -> Result<C64> {
        let num = if self.g() == 0 {
            a.pt.y - b.pt.y
        } else {
            let z: Vec<C64> = a.pt.u.iter().zip(&b.pt.u).map(|(x, y)| x - y).collect();
            self.theta_star(&z, 0)?.value
        };
        Ok(num / (a.h * b.h))
    }

    /// Szegő kernel s(P,Q) = θ[p,q](U_P − U_Q)/(θ[p,q](0) e(P,Q)).
    pub fn szego(&self, ch: &Characteristic, a: &KState, b: &KState) -> Result<C64> {
        let e = self.prime(a, b)?;
        if self.g() == 0 {
            return Ok(C64::new(1.0, 0.0) / e);
        }
        let g = self.g();
        let t0 = self.theta_ch(&vec![C64::new(0.0, 0.0); g], ch, 0)?;
        if t0.value.norm() < 1e-10 * t0.scale {
            return Err(Error::ThetaDivisorHit { ratio: t0.value.norm() / t0.scale });
        }
        let z: Vec<C64> = a.pt.u.iter().zip(&b.pt.u).map(|(x, y)| x - y).collect();
        Ok(self.theta_ch(&z, ch, 0)?.value / (t0.value * e))
    }

    /// Bergmann kernel w(P,Q)/(dλ_P dλ_Q).
    pub fn bergmann(&self, a: &SurfPt, b: &SurfPt) -> Result<C64> {
        if let Some(r) = self.rational() {
            let d = a.y - b.y;
            return Ok(C64::new(1.0, 0.0) / (r.df(a.y) * r.df(b.y) * d * d));
        }
        let g = self.g();
        let z: Vec<C64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
        let ev = self.theta_star(&z, 2)?;
        let va = self.surface.v(a);
        let vb = self.surface.v(b);
        let mut s = C64::new(0.0, 0.0);
        for al in 0..g {
            for be in 0..g {
                s -= ev.log_hess(al, be) * va[al] * vb[be];
            }
        }
        Ok(s)
    }

    /// Σ_{αβ} ∂²ln θ[p,q](z) v_α(P) v_β(Q).
    pub fn theta_hess_form(&self, ch: &Characteristic, z: &[C64], a: &SurfPt, b: &SurfPt) -> Result<C64> {
        let g = self.g();
        if g == 0 {
            return Ok(C64::new(0.0, 0.0));
        }
        let ev = self.theta_ch(z, ch, 2)?;
        let va = self.surface.v(a);
        let vb = self.surface.v(b);
        let mut s = C64::new(0.0, 0.0);
        for al in 0..g {
            for be in 0..g {
                s += ev.log_hess(al, be) * va[al] * vb[be];
            }
        }
        Ok(s)
    }
}

/// Slope of e(P,Q) at P = Q in the λ-chart by central differences; equals 1.
pub fn prime_slope(fr: &Frame, q: &KState, sites: &[Site], avoid: &[C64], eps: f64) -> Result<C64> {
    let lam = q.pt.lam;
    let step = |d: f64| -> Result<C64> {
        let p = fr.walk(q, sites, &vec![Piece::Seg(lam, lam + C64::new(d, 0.0))], avoid)?;
        fr.prime(&p, q)
    };
    Ok((step(eps)? - step(-eps)?) / (2.0 * eps))
}

/// Fay's identity for the Szegő kernel with characteristic `ch`:
/// relative residual of det S(P_j,Q_k) against
/// θ(Σ U(P_j) − U(Q_j))/θ(0) · Π_{j<k} E(P_j,P_k)E(Q_k,Q_j) / Π_{j,k} E(P_j,Q_k).
pub fn fay_determinant_check(fr: &Frame, ch: &Characteristic, ps: &[KState], qs: &[KState]) -> Result<f64> {
    let n = ps.len();
    let mut s = CMat::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            s[(j, k)] = fr.szego(ch, &ps[j], &qs[k])?;
        }
    }
    let lhs = crate::linalg::det(&s);
    let g = fr.g();
    let tf = if g == 0 {
        C64::new(1.0, 0.0)
    } else {
        let mut z = vec![C64::new(0.0, 0.0); g];
        for j in 0..n {
            for a in 0..g {
                z[a] += ps[j].pt.u[a] - qs[j].pt.u[a];
            }
        }
        fr.theta_ch(&z, ch, 0)?.value / fr.theta_ch(&vec![C64::new(0.0, 0.0); g], ch, 0)?.value
    };
    let mut rhs = tf;
    for j in 0..n {
        for k in j + 1..n {
            rhs *= fr.prime(&ps[j], &ps[k])? * fr.prime(&qs[k], &qs[j])?;
        }
        for k in 0..n {
            rhs /= fr.prime(&ps[j], &qs[k])?;
        }
    }
    Ok((lhs - rhs).norm() / lhs.norm().max(rhs.norm()))
}

/// Projective connection R = 6H(0,0) of the Bergmann kernel at the simple branch
/// point `k` of a hyperelliptic model, in the chart x = √(λ − λ_k), by Richardson
/// extrapolation of H(ε, −ε) over ε ∈ {1e-3, 5e-4, 2.5e-4}.
/// Odd θ(z) with gradient and Hessian (row-major) for small z, summed as the
/// odd series −Σ_n e^{πi mBm} sin(2π m·q*) sin(2π m·z), m = n + p*, which keeps
/// full relative precision as z → 0.
fn odd_theta_small(fr: &Frame, ch: &Characteristic, z: &[C64]) -> (C64, Vec<C64>, Vec<C64>) {
    let g = fr.g();
    let b = &fr.b;
    let lmin = (0..g)
        .map(|i| b[(i, i)].im)
        .fold(f64::INFINITY, f64::min)
        .min(crate::linalg::min_eigen_sym(&nalgebra::DMatrix::from_fn(g, g, |i, j| b[(i, j)].im)));
    let nmax = ((fr.cfg.radius_cap).min((45.0 / (std::f64::consts::PI * lmin)).sqrt() + 2.0)) as i64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut val = C64::new(0.0, 0.0);
    let mut grad = vec![C64::new(0.0, 0.0); g];
    let mut hess = vec![C64::new(0.0, 0.0); g * g];
    let mut n = vec![-nmax; g];
    loop {
        let m: Vec<f64> = (0..g).map(|i| n[i] as f64 + ch.p[i].re).collect();
        let mut quad = C64::new(0.0, 0.0);
        for i in 0..g {
            for j in 0..g {
                quad += b[(i, j)] * m[i] * m[j];
            }
        }
        let sa = (two_pi * (0..g).map(|i| m[i] * ch.q[i].re).sum::<f64>()).sin();
        let coef = -(C64::new(0.0, std::f64::consts::PI) * quad).exp() * sa;
        let phi: C64 = (0..g).map(|i| z[i] * m[i]).sum::<C64>() * two_pi;
        let (sp, cp) = (phi.sin(), phi.cos());
        val += coef * sp;
        for i in 0..g {
            grad[i] += coef * cp * two_pi * m[i];
            for j in 0..g {
                hess[i * g + j] -= coef * sp * two_pi * two_pi * m[i] * m[j];
            }
        }
        let mut k = 0;
        loop {
            if k == g {
                return (val, grad, hess);
            }
            n[k] += 1;
            if n[k] <= nmax {
                break;
            }
            n[k] = -nmax;
            k += 1;
        }
    }
}

pub fn projective_connection(fr: &Frame, k: usize) -> Result<C64> {
    let h = match &fr.surface {
        Surface::Hyper(h) => h,
        _ => return Err(Error::UnsupportedGeometry("projective connection needs a hyperelliptic model".into())),
    };
    let ek = h.e[k];
    let g = h.g;
    // direction of approach away from the other branch points
    let others: C64 = h.e.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, &x)| (ek - x) / (ek - x).norm()).sum();
    let dir = if others.norm() > 1e-8 { others / others.norm() } else { C64::new(1.0, 0.0) };
    let phi = |lam: C64| -> C64 {
        let mut s = C64::new(1.0, 0.0);
        for (i, &x) in h.e.iter().enumerate() {
            if i != k {
                s *= lam - x;
            }
        }
        s
    };
    // branch of φ = √Π_{n≠k}(λ − e_n) continued from λ_k along the approach direction
    let phi0 = phi(ek).sqrt();
    let phi_at = |lam: C64| -> C64 {
        let r = (phi(lam) / phi(ek)).sqrt();
        phi0 * r
    };
    let cvec = |lam: C64| -> Vec<C64> {
        let mut raw = Vec::with_capacity(g);
        let mut p = C64::new(1.0, 0.0);
        for _ in 0..g {
            raw.push(p);
            p *= lam;
        }
        h.normalize(&raw)
    };
    let sqd = dir.sqrt();
    // an odd characteristic whose spinor is nonzero at e_k
    let ch = &fr.alts[fr.alt_for_branch(k)].0;
    let hval = |eps: f64| -> Result<C64> {
        // x ∈ [−ε, ε] along x = s·√dir, λ = λ_k + x²
        let (du, _) = quad::adaptive(
            |s, out| {
                let x = sqd * s;
                let lam = ek + x * x;
                let cv = cvec(lam);
                let ph = phi_at(lam);
                for a in 0..g {
                    out[a] = cv[a] * 2.0 / ph * sqd;
                }
            },
            -eps,
            eps,
            g,
            1e-17,
            8,
        );
        let x = sqd * eps;
        let lam = ek + x * x;
        let cv = cvec(lam);
        let ph = phi_at(lam);
        let (t, gr, he) = odd_theta_small(fr, ch, &du);
        let mut w = C64::new(0.0, 0.0);
        for a in 0..g {
            for b in 0..g {
                let lh = he[a * g + b] / t - gr[a] * gr[b] / (t * t);
                w -= lh * (cv[a] * 2.0 / ph) * (cv[b] * 2.0 / ph);
            }
        }
        Ok(w - C64::new(1.0, 0.0) / (x * x * 4.0))
    };
    let e = [1e-3, 5e-4, 2.5e-4];
    let v: Vec<C64> = e.iter().map(|&x| hval(x)).collect::<Result<_>>()?;
    // errors O(ε²): two Richardson levels
    let r1 = (v[1] * 4.0 - v[0]) / 3.0;
    let r2 = (v[2] * 4.0 - v[1]) / 3.0;
    let r = (r2 * 16.0 - r1) / 15.0;
    if (r2 - r1).norm() > (v[1] - v[0]).norm() + 1e-12 * (1.0 + r.norm()) {
        return Err(Error::ExtrapolationUnstable);
    }
    Ok(r * 6.0)
}

/// Closed form of R at a simple branch point for the hyperelliptic model using an
/// even non-singular characteristic T:
/// R(λ_k) = 3 ε_k Σ_{n≠k} ε_n/(λ_k − λ_n) − 6 Σ ∂²θ[T](0)/θ[T](0) V_α V_β,
/// where V = 2c(λ_k)/φ(λ_k) and ε_n = ±1 for membership in the set defining T.
pub fn projective_connection_closed(fr: &Frame, k: usize, set: &[usize], ch_t: &Characteristic) -> Result<C64> {
    let h = match &fr.surface {
        Surface::Hyper(h) => h,
        _ => return Err(Error::UnsupportedGeometry("closed form needs a hyperelliptic model".into())),
    };
    let g = h.g;
    let ek = h.e[k];
    let mut phi = C64::new(1.0, 0.0);
    for (i, &x) in h.e.iter().enumerate() {
        if i != k {
            phi *= ek - x;
        }
    }
    let phi = phi.sqrt();
    let mut raw = Vec::with_capacity(g);
    let mut p = C64::new(1.0, 0.0);
    for _ in 0..g {
        raw.push(p);
        p *= ek;
    }
    let cv = h.normalize(&raw);
    let eps = |i: usize| if set.contains(&i) { 1.0 } else { -1.0 };
    let mut first = C64::new(0.0, 0.0);
    for (i, &x) in h.e.iter().enumerate() {
        if i != k {
            first += eps(i) / (ek - x);
        }
    }
    first *= 3.0 * eps(k);
    let ev = fr.theta_ch(&vec![C64::new(0.0, 0.0); g], ch_t, 2)?;
    let mut second = C64::new(0.0, 0.0);
    for a in 0..g {
        for b in 0..g {
            second += ev.h(a, b) / ev.value * (cv[a] * 2.0 / phi) * (cv[b] * 2.0 / phi);
        }
    }
    Ok(first - second * 6.0)
}
