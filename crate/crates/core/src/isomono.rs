//! Schlesinger residues, isomonodromic Hamiltonians and tau-functions, with the
//! variational identities used to check them.
//!
//! Derivatives in λ_m are central differences over full rebuilds of the
//! geometry (periods, Abel map, kernels) at λ_m ± h.

use crate::kernels::{Frame, KState};
use crate::linalg;
use crate::rhp::{PsiSolution, Setup};
use crate::surface::path::Piece;
use crate::surface::{Hyperelliptic, Surface};
use crate::theta::{self, Characteristic, HalfChar};
use crate::{CMat, Error, Result, C64, TWO_PI_I};
use std::f64::consts::PI;

pub const CONTOUR_NODES: usize = 256;
pub const CONTOUR_FRACTION: f64 = 0.05;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Default finite-difference step: 1e-4 times the size of the configuration.
pub fn default_step(lambdas: &[C64], lambda0: C64) -> f64 {
    1e-4 * lambdas.iter().fold(lambda0.norm(), |s, l| s.max(l.norm())).max(1.0)
}

/// 0.05 × distance from λ_m to the nearest other singular point or λ₀.
pub fn contour_radius(lambdas: &[C64], lambda0: C64, m: usize) -> f64 {
    let l = lambdas[m];
    let d = lambdas
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != m)
        .map(|(_, o)| (o - l).norm())
        .fold((lambda0 - l).norm(), f64::min);
    CONTOUR_FRACTION * d
}

/// States on every sheet at equispaced nodes of the circle of radius `r`
/// around λ_m, reached along the ray from λ₀ and then counterclockwise.
pub fn contour_states(s: &Setup, m: usize, r: f64, nodes: usize) -> Result<Vec<(C64, Vec<KState>)>> {
    let l = s.lambdas[m];
    let u = (l - s.lambda0) / (l - s.lambda0).norm();
    let start = l - u * r;
    let a0 = (-u).arg();
    let mut cur: Vec<KState> = s
        .canon
        .iter()
        .map(|st| s.frame.walk(st, &s.sites, &vec![Piece::Seg(s.lambda0, start)], &s.lambdas))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(nodes);
    let dth = 2.0 * PI / nodes as f64;
    for k in 0..nodes {
        let th = a0 + dth * k as f64;
        if k > 0 {
            let arc = vec![Piece::Arc { c: l, r, a0: th - dth, a1: th }];
            cur = cur.iter().map(|st| s.frame.walk(st, &s.sites, &arc, &s.lambdas)).collect::<Result<_>>()?;
        }
        out.push((l + C64::from_polar(r, th), cur.clone()));
    }
    Ok(out)
}

/// (1/2πi)∮ f dλ over the circle by the trapezoidal rule.
fn trapezoid<T, F>(nodes: &[(C64, T)], centre: C64, mut f: F) -> Result<Vec<C64>>
where
    F: FnMut(C64, &T) -> Result<Vec<C64>>,
{
    let mut acc: Vec<C64> = Vec::new();
    for (lam, data) in nodes {
        let v = f(*lam, data)?;
        if acc.is_empty() {
            acc = vec![c(0.0, 0.0); v.len()];
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x * (lam - centre);
        }
    }
    let n = nodes.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Residues A_m of Ψ_λΨ⁻¹ at λ_m.
#[derive(Debug, Clone)]
pub struct SchlesingerData {
    pub a: Vec<CMat>,
    pub lambdas: Vec<C64>,
    pub lambda0: C64,
}

/// A_m and H_m = ½ res tr(Ψ_λΨ⁻¹)² at one singular point by contour quadrature.
pub fn local_residues(sol: &PsiSolution, m: usize) -> Result<(CMat, C64)> {
    let s = &sol.setup;
    let r = contour_radius(&s.lambdas, s.lambda0, m);
    if r < 1e-12 {
        return Err(Error::ContourTooClose);
    }
    let nodes = contour_states(s, m, r, CONTOUR_NODES)?;
    let n = s.n();
    let v = trapezoid(&nodes, s.lambdas[m], |_, xs| {
        let (_, dp) = sol.psi_and_derivative(xs)?;
        let f = dp * sol.psi_inverse_from_states(xs)?;
        let mut out: Vec<C64> = f.iter().copied().collect();
        out.push((&f * &f).trace() * 0.5);
        Ok(out)
    })?;
    let a = CMat::from_iterator(n, n, v[..n * n].iter().copied());
    Ok((a, v[n * n]))
}

pub fn residues_contour(sol: &PsiSolution) -> Result<SchlesingerData> {
    let s = &sol.setup;
    let a = (0..s.lambdas.len()).map(|m| local_residues(sol, m).map(|x| x.0)).collect::<Result<_>>()?;
    Ok(SchlesingerData { a, lambdas: s.lambdas.clone(), lambda0: s.lambda0 })
}

pub fn hamiltonians(sol: &PsiSolution) -> Result<Vec<C64>> {
    (0..sol.setup.lambdas.len()).map(|m| local_residues(sol, m).map(|x| x.1)).collect()
}

/// The same problem over the geometry with λ_m moved by `dl`.
pub fn perturbed_solution(sol: &PsiSolution, m: usize, dl: C64) -> Result<PsiSolution> {
    let s = sol.setup.perturbed(m, dl)?;
    PsiSolution::new(s, sol.params.p.clone(), sol.params.q.clone(), sol.params.r.clone())
}

/// a₀ at λ₀^{(k)}: ŝ(λ^{(k)}, λ₀^{(k)}) = 1/(λ − λ₀) + a₀ + O(λ − λ₀).
pub fn a0(sol: &PsiSolution, k: usize) -> Result<C64> {
    let s = &sol.setup;
    let st = &s.canon[k];
    let mut a = c(0.0, 0.0);
    if s.g() > 0 {
        let ev = s.frame.theta_ch(&sol.omega, &sol.ch, 1)?;
        let v = s.frame.surface.v(&st.pt);
        for al in 0..s.g() {
            a += ev.grad[al] / ev.value * v[al];
        }
    }
    for (i, site) in s.sites.iter().enumerate() {
        a += sol.r_eff[i] * s.frame.dlog_anchor(&st.pt, site)?;
    }
    Ok(a)
}

/// The matrix of ŝ(λ₀^{(j)}, λ₀^{(k)}) (entry (k,j)) with a₀^{(k)} on the diagonal.
fn base_kernel(sol: &PsiSolution) -> Result<CMat> {
    let n = sol.setup.n();
    let mut m = CMat::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            m[(k, j)] = if j == k { a0(sol, k)? } else { sol.shat(&sol.setup.canon[j], &sol.setup.canon[k])? };
        }
    }
    Ok(m)
}

/// A_m from derivatives of ŝ and a₀ at λ₀ in λ_m (central differences, step h).
pub fn residues(sol: &PsiSolution, h: f64) -> Result<SchlesingerData> {
    let s = &sol.setup;
    let mut a = Vec::with_capacity(s.lambdas.len());
    for m in 0..s.lambdas.len() {
        let kp = base_kernel(&perturbed_solution(sol, m, c(h, 0.0))?)?;
        let km = base_kernel(&perturbed_solution(sol, m, c(-h, 0.0))?)?;
        let f = (s.lambda0 - s.lambdas[m]).powi(2) / (2.0 * h);
        a.push((kp - km) * f);
    }
    Ok(SchlesingerData { a, lambdas: s.lambdas.clone(), lambda0: s.lambda0 })
}

/// Right-hand side of the Schlesinger system normalised at λ₀: ∂A_n/∂λ_m.
pub fn schlesinger_rhs(d: &SchlesingerData, n: usize, m: usize) -> CMat {
    let l = &d.lambdas;
    if n != m {
        let k = linalg::commutator(&d.a[n], &d.a[m]);
        &k / (l[n] - l[m]) - &k / (d.lambda0 - l[m])
    } else {
        let sz = d.a[m].nrows();
        let mut out = CMat::zeros(sz, sz);
        for j in 0..l.len() {
            if j != m {
                let k = linalg::commutator(&d.a[j], &d.a[m]);
                out -= &k / (l[j] - l[m]);
            }
        }
        out
    }
}

/// max over (n, m) of ‖FD ∂A_n/∂λ_m − RHS‖ with contour residues.
pub fn schlesinger_residual(sol: &PsiSolution, h: f64) -> Result<f64> {
    let base = residues_contour(sol)?;
    let mut worst: f64 = 0.0;
    for m in 0..base.lambdas.len() {
        let p = residues_contour(&perturbed_solution(sol, m, c(h, 0.0))?)?;
        let q = residues_contour(&perturbed_solution(sol, m, c(-h, 0.0))?)?;
        for n in 0..base.lambdas.len() {
            let fd = (&p.a[n] - &q.a[n]) / c(2.0 * h, 0.0);
            worst = worst.max(linalg::max_abs(&(fd - schlesinger_rhs(&base, n, m))));
        }
    }
    Ok(worst)
}

/// r_mn = Σ_j r_m^{(j)} r_n^{(j)}.
pub fn r_matrix(sol: &PsiSolution) -> CMat {
    let s = &sol.setup;
    let mm = s.lambdas.len();
    CMat::from_fn(mm, mm, |a, b| (0..s.n()).map(|j| sol.params.r_at(&s.cov, a, j) * sol.params.r_at(&s.cov, b, j)).sum())
}

/// ln τ as Σ coef·ln(value); kept unexpanded so that finite differences can
/// follow each logarithm continuously.
#[derive(Debug, Clone, Default)]
pub struct LogTerms(pub Vec<(C64, C64)>);

impl LogTerms {
    fn push(&mut self, coef: C64, value: C64) {
        self.0.push((coef, value));
    }

    pub fn value(&self) -> C64 {
        self.0.iter().map(|(k, v)| k * v.ln()).sum()
    }

    /// (ln τ₊ − ln τ₋) with each logarithm continued through the short step.
    pub fn difference(plus: &LogTerms, minus: &LogTerms) -> Result<C64> {
        if plus.0.len() != minus.0.len() {
            return Err(Error::FiniteDifferenceUnstable("tau factors changed".into()));
        }
        Ok(plus.0.iter().zip(&minus.0).map(|((k, a), (_, b))| k * (a / b).ln()).sum())
    }
}

#[derive(Debug, Clone)]
pub struct TauData {
    pub r_mn: CMat,
    /// θ[p,q](Ω|B) (1 in genus 0).
    pub theta_factor: C64,
    /// ln F, when a closed form is available.
    pub log_f: Option<LogTerms>,
    /// ln τ = ln F + Σ_{R<R'} ρ_R ρ_R' ln E(R,R') + ln θ[p,q](Ω), the prime form taken
    /// in the local parameters (λ − λ_m)^{1/k} at the marked points.
    pub log_tau: Option<LogTerms>,
    /// The same with Σ_{m<n} r_mn ln(λ_m − λ_n) in place of the prime-form sum; the
    /// two agree when r = 0 or N = 1.
    pub log_tau_rmn: Option<LogTerms>,
}

fn hyper(s: &Setup) -> Option<&Hyperelliptic> {
    match &s.frame.surface {
        Surface::Hyper(h) => Some(h),
        _ => None,
    }
}

/// F for two-sheeted coverings: (det 𝒜)^{-1/2} Π_{m<n}(λ_m − λ_n)^{-1/8}, product
/// over the branch points.
pub fn log_f_hyperelliptic(h: &Hyperelliptic) -> LogTerms {
    let mut t = LogTerms::default();
    t.push(c(-0.5, 0.0), linalg::det(&h.a_mat));
    for i in 0..h.e.len() {
        for j in i + 1..h.e.len() {
            t.push(c(-0.125, 0.0), h.e[i] - h.e[j]);
        }
    }
    t
}

/// Genus 0: F = {Π_m (dU/dx_m)^{(k_m−1)/2} / Π_{poles} dU/dζ}^{1/12}, U = t.
fn log_f_genus0(s: &Setup) -> Result<LogTerms> {
    let r = match &s.frame.surface {
        Surface::Rational(r) => r,
        _ => return Err(Error::UnsupportedGeometry("genus-0 formula needs the rational model".into())),
    };
    let mut t = LogTerms::default();
    for cr in &r.crit {
        // λ − λ_m = c_k (t − t_c)^k + …, so dU/dx = c_k^{-1/k}
        let ck = r.taylor(cr.t, cr.k)[cr.k];
        let kf = cr.k as f64;
        t.push(c(-(kf - 1.0) / (2.0 * kf) / 12.0, 0.0), ck);
    }
    for &(_, res) in &r.poles {
        // λ ≈ res/(t − t_p) near a pole: ζ = 1/λ, dU/dζ = res
        t.push(c(-1.0 / 12.0, 0.0), res);
    }
    Ok(t)
}

/// Genus 1 on the two-sheeted model: dU/dx_m = 2c/φ(λ_m), dU/dζ at the two
/// infinities = ∓c, and the factor θ₁′(0|μ)^{-1/3}.
fn log_f_genus1(s: &Setup) -> Result<LogTerms> {
    let h = hyper(s).filter(|h| h.g == 1).ok_or_else(|| Error::UnsupportedGeometry("genus-1 formula needs a two-sheeted model".into()))?;
    let cc = h.a_inv[(0, 0)];
    let mut t = LogTerms::default();
    for (k, &ek) in h.e.iter().enumerate() {
        let mut phi2 = c(1.0, 0.0);
        for (i, &x) in h.e.iter().enumerate() {
            if i != k {
                phi2 *= ek - x;
            }
        }
        // ((2c)² / φ²)^{1/2 · 1/2 · 1/12}
        t.push(c(1.0 / 48.0, 0.0), cc * cc * 4.0 / phi2);
    }
    t.push(c(-1.0 / 12.0, 0.0), -(cc * cc));
    t.push(c(-1.0 / 3.0, 0.0), theta::theta1_prime(h.b[(0, 0)], &s.frame.cfg)?);
    Ok(t)
}

/// Square of the spinor of odd characteristic `alt` at site `i`, in the local
/// parameter (λ − λ_m)^{1/k}, as log terms.
fn log_spinor_local(s: &Setup, i: usize, alt: usize, coef: C64, out: &mut LogTerms) -> Result<()> {
    let pt = &s.cov.points[i];
    let lam = s.lambdas[pt.m];
    let site = &s.sites[i];
    match &s.frame.surface {
        Surface::Rational(r) => {
            // h² = dt/dx = c_k^{-1/k}
            let k = pt.k();
            out.push(coef * (-1.0 / k as f64), r.taylor(site.t, k)[k]);
        }
        Surface::Hyper(h) => {
            let gr = &s.frame.alts[alt].1;
            if pt.k() == 1 {
                out.push(coef, h.v(lam, site.t).iter().zip(gr).map(|(a, b)| a * b).sum());
            } else {
                // w ≈ φ x near the branch point, dλ = 2x dx
                let mut phi2 = c(1.0, 0.0);
                for &x in &h.e {
                    if (x - lam).norm() > 1e-12 * (1.0 + lam.norm()) {
                        phi2 *= lam - x;
                    }
                }
                out.push(coef, h.v(lam, c(1.0, 0.0)).iter().zip(gr).map(|(a, b)| a * b).sum::<C64>() * 2.0);
                out.push(coef * -0.5, phi2);
            }
        }
    }
    Ok(())
}

/// ln E(R_i, R_j) in the local parameters at both points, as log terms scaled by `coef`.
fn log_prime_local(s: &Setup, i: usize, j: usize, coef: C64, out: &mut LogTerms) -> Result<()> {
    let (a, b) = (&s.sites[i], &s.sites[j]);
    if s.g() == 0 {
        out.push(coef, a.t - b.t);
        log_spinor_local(s, i, 0, coef * -0.5, out)?;
        return log_spinor_local(s, j, 0, coef * -0.5, out);
    }
    let z: Vec<C64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    // any odd characteristic gives the same E; take the first one not vanishing
    // at the difference and with nonzero spinors at both points
    let mut best = (0, f64::NEG_INFINITY);
    for alt in 0..s.frame.alts.len() {
        let ev = s.frame.theta_ch(&z, &s.frame.alts[alt].0, 0)?;
        let mut tmp = LogTerms::default();
        log_spinor_local(s, i, alt, c(1.0, 0.0), &mut tmp)?;
        log_spinor_local(s, j, alt, c(1.0, 0.0), &mut tmp)?;
        let score = (ev.value.norm() / ev.scale).min(tmp.value().exp().norm());
        if score > 1e-3 {
            best = (alt, score);
            break;
        }
        if score > best.1 {
            best = (alt, score);
        }
    }
    let alt = best.0;
    out.push(coef, s.frame.theta_ch(&z, &s.frame.alts[alt].0, 0)?.value);
    log_spinor_local(s, i, alt, coef * -0.5, out)?;
    log_spinor_local(s, j, alt, coef * -0.5, out)
}

/// Σ_{R<R'} ρ_R ρ_R' ln E(R,R') over pairs of marked points, ρ_R = k_R r_R.
pub fn log_prime_product(sol: &PsiSolution) -> Result<LogTerms> {
    let s = &sol.setup;
    let mut t = LogTerms::default();
    for i in 0..s.sites.len() {
        for j in i + 1..s.sites.len() {
            let w = sol.r_eff[i] * sol.r_eff[j];
            if w != c(0.0, 0.0) {
                log_prime_local(s, i, j, w, &mut t)?;
            }
        }
    }
    Ok(t)
}

/// Σ_{m<n} r_mn ln(λ_m − λ_n).
pub fn log_lambda_product(sol: &PsiSolution) -> LogTerms {
    let r = r_matrix(sol);
    let l = &sol.setup.lambdas;
    let mut t = LogTerms::default();
    for a in 0..l.len() {
        for b in a + 1..l.len() {
            if r[(a, b)] != c(0.0, 0.0) {
                t.push(r[(a, b)], l[a] - l[b]);
            }
        }
    }
    t
}

pub fn tau_closed_form(sol: &PsiSolution) -> Result<TauData> {
    let s = &sol.setup;
    let r_mn = r_matrix(sol);
    let g = s.g();
    let theta_factor = sol.theta_omega;
    let log_f = match g {
        0 => Some(log_f_genus0(s)?),
        1 if hyper(s).is_some() => Some(log_f_genus1(s)?),
        _ => match hyper(s) {
            Some(h) if s.n() == 2 => Some(log_f_hyperelliptic(h)),
            _ => None,
        },
    };
    let assemble = |f: &LogTerms, mid: LogTerms| {
        let mut t = f.clone();
        t.0.extend(mid.0);
        if g > 0 {
            t.push(c(1.0, 0.0), theta_factor);
        }
        t
    };
    let (log_tau, log_tau_rmn) = match &log_f {
        Some(f) => (Some(assemble(f, log_prime_product(sol)?)), Some(assemble(f, log_lambda_product(sol)))),
        None => (None, None),
    };
    Ok(TauData { r_mn, theta_factor, log_f, log_tau, log_tau_rmn })
}

/// Hyperelliptic closed form τ = F·θ[p,q](0|B), valid for r = 0.
pub fn log_tau_hyperelliptic(sol: &PsiSolution) -> Result<LogTerms> {
    let h = hyper(&sol.setup).ok_or_else(|| Error::UnsupportedGeometry("needs a two-sheeted model".into()))?;
    if sol.params.r.iter().any(|r| r.norm() > 0.0) {
        return Err(Error::UnsupportedGeometry("closed form requires r = 0".into()));
    }
    let mut t = log_f_hyperelliptic(h);
    t.push(c(1.0, 0.0), sol.theta_omega);
    Ok(t)
}

/// For each m: (FD ∂_{λ_m} ln τ, H_m) for the given closed form.
pub fn tau_derivative_check<F>(sol: &PsiSolution, h: f64, log_tau: F) -> Result<Vec<(C64, C64)>>
where
    F: Fn(&PsiSolution) -> Result<LogTerms>,
{
    let hs = hamiltonians(sol)?;
    let mut out = Vec::with_capacity(hs.len());
    for (m, hm) in hs.into_iter().enumerate() {
        let p = log_tau(&perturbed_solution(sol, m, c(h, 0.0))?)?;
        let q = log_tau(&perturbed_solution(sol, m, c(-h, 0.0))?)?;
        out.push((LogTerms::difference(&p, &q)? / (2.0 * h), hm));
    }
    Ok(out)
}

pub fn closed_form_log_tau(sol: &PsiSolution) -> Result<LogTerms> {
    tau_closed_form(sol)?.log_tau.ok_or_else(|| Error::UnsupportedGeometry("no closed form for F".into()))
}

/// Thomae: θ[p^T,q^T]⁴(0) / ((det 𝒜)² Π_{T}(λ−λ) Π_{∉T}(λ−λ)) over the divisors T of
/// g+1 branch points containing the first one. Returns the ratios and the
/// largest relative spread (up to sign) among them.
pub fn thomae_check(s: &Setup) -> Result<(Vec<C64>, f64)> {
    let h = hyper(s).ok_or_else(|| Error::UnsupportedGeometry("Thomae needs a two-sheeted model".into()))?;
    let g = h.g;
    let m = h.e.len();
    let det2 = linalg::det(&h.a_mat).powi(2);
    let mut ratios = Vec::new();
    for mask in 0u32..(1 << m) {
        if mask & 1 == 0 || mask.count_ones() as usize != g + 1 {
            continue;
        }
        let set: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let hc = s.characteristic_of_set(&set)?;
        let th = s.frame.theta_ch(&vec![c(0.0, 0.0); g], &hc.to_char(), 0)?;
        let mut prod = det2;
        for i in 0..m {
            for j in i + 1..m {
                if (mask >> i & 1) == (mask >> j & 1) {
                    prod *= h.e[i] - h.e[j];
                }
            }
        }
        ratios.push(th.value.powi(4) / prod);
    }
    let r0 = ratios[0];
    let spread = ratios.iter().map(|r| (r - r0).norm().min((r + r0).norm()) / r0.norm()).fold(0.0, f64::max);
    Ok((ratios, spread))
}

/// Two-sheeted model with one branch point moved, continuous with `h`.
pub fn moved_curve(h: &Hyperelliptic, k: usize, dl: C64) -> Result<Hyperelliptic> {
    let mut e = h.e.clone();
    e[k] += dl;
    Hyperelliptic::with_order(e, Some(h))
}

fn frame_for(fr: &Frame, h: Hyperelliptic) -> Result<Frame> {
    Frame::new(Surface::Hyper(h), fr.cfg, Some(fr.odd.clone()))
}

/// (FD ∂_{λ_k} ln F, R(λ_k)/24) for the two-sheeted model, with R by limit
/// extraction in the chart x = √(λ − λ_k).
pub fn fhe_check(fr: &Frame, k: usize, h: f64) -> Result<(C64, C64)> {
    let hy = match &fr.surface {
        Surface::Hyper(x) => x,
        _ => return Err(Error::UnsupportedGeometry("needs a two-sheeted model".into())),
    };
    let p = log_f_hyperelliptic(&moved_curve(hy, k, c(h, 0.0))?);
    let q = log_f_hyperelliptic(&moved_curve(hy, k, c(-h, 0.0))?);
    let fd = LogTerms::difference(&p, &q)? / (2.0 * h);
    Ok((fd, crate::kernels::projective_connection(fr, k)? / 24.0))
}

/// res at λ_m of Σ_{j<k} w(λ^{(j)}, λ^{(k)})/(dλ)², by contour.
pub fn bergmann_residue(s: &Setup, m: usize) -> Result<C64> {
    let r = contour_radius(&s.lambdas, s.lambda0, m);
    let nodes = contour_states(s, m, r, CONTOUR_NODES)?;
    let n = s.n();
    let v = trapezoid(&nodes, s.lambdas[m], |_, xs| {
        let mut acc = c(0.0, 0.0);
        for j in 0..n {
            for k in j + 1..n {
                acc += s.frame.bergmann(&xs[j].pt, &xs[k].pt)?;
            }
        }
        Ok(vec![acc])
    })?;
    Ok(v[0])
}

/// Identity between the projective connection and the Bergmann residue at a
/// simple branch point: returns (R(λ_m)/24, −res Σ_{j<k} w/(dλ)²).
pub fn f1_check(s: &Setup, m: usize) -> Result<(C64, C64)> {
    let h = hyper(s).ok_or_else(|| Error::UnsupportedGeometry("needs a two-sheeted model".into()))?;
    let k = h.e.iter().position(|&x| (x - s.lambdas[m]).norm() < 1e-12 * (1.0 + x.norm())).ok_or_else(|| Error::Invalid("λ_m is not a branch point".into()))?;
    Ok((crate::kernels::projective_connection(&s.frame, k)? / 24.0, -bergmann_residue(s, m)?))
}

/// For each m: (H_m − FD ∂_{λ_m} ln{P·θ[p,q](Ω)}, −res Σ_{j<k} w/(dλ)²) where P is
/// the prime-form product over marked points, or Π_{l<n}(λ_l−λ_n)^{r_ln} when
/// `lambda_product` is set.
pub fn hm10_check(sol: &PsiSolution, h: f64, lambda_product: bool) -> Result<Vec<(C64, C64)>> {
    let part = |x: &PsiSolution| -> Result<LogTerms> {
        let mut t = if lambda_product { log_lambda_product(x) } else { log_prime_product(x)? };
        if x.setup.g() > 0 {
            t.push(c(1.0, 0.0), x.theta_omega);
        }
        Ok(t)
    };
    let d = tau_derivative_check(sol, h, part)?;
    let mut out = Vec::with_capacity(d.len());
    for (m, (fd, hm)) in d.into_iter().enumerate() {
        out.push((hm - fd, -bergmann_residue(&sol.setup, m)?));
    }
    Ok(out)
}

/// At states over one λ: (|Σ_j W₁(λ^{(j)})|, |Σ_j W₂(λ^{(j)})² − Σ_{mn} r_mn/((λ−λ_m)(λ−λ_n))|).
/// The second entry vanishes only for r = 0 or one sheet; in general the two sides
/// share their double poles (see [`w2_double_pole`]) but not their simple ones.
pub fn sheet_sum_check(sol: &PsiSolution, xs: &[KState]) -> Result<(f64, f64)> {
    let s = &sol.setup;
    let g = s.g();
    let lam = xs[0].pt.lam;
    let mut w1 = c(0.0, 0.0);
    if g > 0 {
        let ev = s.frame.theta_ch(&sol.omega, &sol.ch, 1)?;
        for x in xs {
            let v = s.frame.surface.v(&x.pt);
            for al in 0..g {
                w1 += ev.grad[al] / ev.value * v[al];
            }
        }
    }
    let w2 = w2_sum_sq(sol, xs)?;
    let r = r_matrix(sol);
    let l = &s.lambdas;
    let mut rhs = c(0.0, 0.0);
    for a in 0..l.len() {
        for b in 0..l.len() {
            rhs += r[(a, b)] / ((lam - l[a]) * (lam - l[b]));
        }
    }
    Ok((w1.norm(), (w2 - rhs).norm()))
}

fn w2_sum_sq(sol: &PsiSolution, xs: &[KState]) -> Result<C64> {
    let s = &sol.setup;
    let mut w2 = c(0.0, 0.0);
    for x in xs {
        let mut w = c(0.0, 0.0);
        for (i, site) in s.sites.iter().enumerate() {
            w += sol.r_eff[i] * s.frame.dlog_anchor(&x.pt, site)?;
        }
        w2 += w * w;
    }
    Ok(w2)
}

/// res_{λ_m} (λ − λ_m) Σ_j W₂(λ^{(j)})², which equals r_mm.
pub fn w2_double_pole(sol: &PsiSolution, m: usize) -> Result<C64> {
    let s = &sol.setup;
    let r = contour_radius(&s.lambdas, s.lambda0, m);
    let nodes = contour_states(s, m, r, CONTOUR_NODES)?;
    let lm = s.lambdas[m];
    let v = trapezoid(&nodes, lm, |lam, xs| Ok(vec![w2_sum_sq(sol, xs)? * (lam - lm)]))?;
    Ok(v[0])
}

/// Residuals of the variational formulas at one branch point.
#[derive(Debug, Clone)]
pub struct VariationalCheck {
    pub h: f64,
    /// ‖FD ∂B − (−2πi res Σ_{j≠k} v_α(λ^{(j)})v_β(λ^{(k)}))‖.
    pub var_b1: f64,
    /// ‖∂_{λ̄_m} B‖ by differences along both real directions.
    pub anti_holomorphic: f64,
    /// |FD ∂v_α(P) − res Σ_j v_α(λ^{(j)}) w(λ^{(j)}, P)| at P = λ₀ on the first sheet.
    pub var_w: f64,
}

/// ∂B/∂λ_m predicted by the residue formula.
pub fn b_derivative_residue(h: &Hyperelliptic, k: usize, r: f64) -> CMat {
    let g = h.g;
    let l = h.e[k];
    let nodes: Vec<(C64, ())> = (0..CONTOUR_NODES).map(|i| (l + C64::from_polar(r, 2.0 * PI * i as f64 / CONTOUR_NODES as f64), ())).collect();
    let v = trapezoid(&nodes, l, |lam, _| {
        // two sheets: Σ_{j≠k} v_α(j)v_β(k) = −2 v_α v_β
        let y = h.y2(lam).sqrt();
        let w = h.v(lam, y);
        let mut out = Vec::with_capacity(g * g);
        for a in 0..g {
            for b in 0..g {
                out.push(-(w[a] * w[b]) * 2.0);
            }
        }
        Ok(out)
    })
    .unwrap();
    CMat::from_iterator(g, g, v.into_iter().map(|x| x * (-TWO_PI_I))).transpose()
}

pub fn rauch_check(s: &Setup, m: usize, h: f64) -> Result<VariationalCheck> {
    let hy = hyper(s).ok_or_else(|| Error::UnsupportedGeometry("needs a two-sheeted model".into()))?;
    let k = hy.e.iter().position(|&x| (x - s.lambdas[m]).norm() < 1e-12 * (1.0 + x.norm())).ok_or_else(|| Error::Invalid("λ_m is not a branch point".into()))?;
    let bx = |d: C64| -> Result<CMat> { Ok(moved_curve(hy, k, d)?.b) };
    let fdx = (bx(c(h, 0.0))? - bx(c(-h, 0.0))?) / c(2.0 * h, 0.0);
    let fdy = (bx(c(0.0, h))? - bx(c(0.0, -h))?) / c(2.0 * h, 0.0);
    let r = contour_radius(&s.lambdas, s.lambda0, m);
    let pred = b_derivative_residue(hy, k, r);
    let var_b1 = linalg::max_abs(&(&fdx - pred));
    let anti_holomorphic = linalg::max_abs(&((&fdx + fdy * c(0.0, 1.0)) * c(0.5, 0.0)));
    // ∂v_α at the first sheet over λ₀
    let p0 = &s.canon[0].pt;
    let vp = |d: C64| -> Result<Vec<C64>> {
        let hh = moved_curve(hy, k, d)?;
        let y = hh.y2(s.lambda0).sqrt();
        let y = if (y - p0.y).norm() < (y + p0.y).norm() { y } else { -y };
        Ok(hh.v(s.lambda0, y))
    };
    let (a, b) = (vp(c(h, 0.0))?, vp(c(-h, 0.0))?);
    let nodes = contour_states(s, m, r, CONTOUR_NODES)?;
    let g = hy.g;
    let res = trapezoid(&nodes, s.lambdas[m], |_, xs| {
        let mut out = vec![c(0.0, 0.0); g];
        for x in xs {
            let v = s.frame.surface.v(&x.pt);
            let w = s.frame.bergmann(&x.pt, p0)?;
            for al in 0..g {
                out[al] += v[al] * w;
            }
        }
        Ok(out)
    })?;
    let var_w = (0..g).map(|al| ((a[al] - b[al]) / (2.0 * h) - res[al]).norm()).fold(0.0, f64::max);
    Ok(VariationalCheck { h, var_b1, anti_holomorphic, var_w })
}

/// ¼{D_m[s(P,P_m)]s(P_m,Q) − s(P,P_m)D_m[s(P_m,Q)]} at a simple branch point λ_m
/// (x = √(λ−λ_m) at P_m), in the λ-chart at P and Q.
pub fn szego_bilinear(s: &Setup, ch: &Characteristic, m: usize, a: &KState, b: &KState) -> Result<C64> {
    let hy = hyper(s).ok_or_else(|| Error::UnsupportedGeometry("needs a two-sheeted model".into()))?;
    let kb = hy.e.iter().position(|&x| (x - s.lambdas[m]).norm() < 1e-12 * (1.0 + x.norm())).ok_or_else(|| Error::Invalid("λ_m is not a branch point".into()))?;
    let fr = &s.frame;
    let g = s.g();
    let um = &s.sites[s.cov.point_of[m][0]].u;
    let alt = fr.alt_for_branch(kb);
    let odd = &fr.alts[alt];
    // w/dx at P_m: 2c(λ_m)/φ(λ_m)
    let mut phi2 = c(1.0, 0.0);
    for (i, &x) in hy.e.iter().enumerate() {
        if i != kb {
            phi2 *= hy.e[kb] - x;
        }
    }
    let vv: Vec<C64> = hy.v(hy.e[kb], phi2.sqrt()).into_iter().map(|x| x * 2.0).collect();
    let hx2: C64 = vv.iter().zip(&odd.1).map(|(a, b)| a * b).sum();
    let t0 = fr.theta_ch(&vec![c(0.0, 0.0); g], ch, 0)?.value;
    // s(P, P_m) and D_m[s(P, P_m)] up to the common factor h_x(P_m)
    let half = |p: &KState, forward: bool| -> Result<(C64, C64)> {
        let z: Vec<C64> = if forward { p.pt.u.iter().zip(um).map(|(a, b)| a - b).collect() } else { um.iter().zip(&p.pt.u).map(|(a, b)| a - b).collect() };
        let e = fr.theta_ch(&z, ch, 1)?;
        let o = fr.theta_ch(&z, &odd.0, 1)?;
        let hp = fr.h2_alt(&p.pt, alt).sqrt();
        let val = e.value * hp / (t0 * o.value);
        let mut dl = c(0.0, 0.0);
        for al in 0..g {
            let d = e.grad[al] / e.value - o.grad[al] / o.value;
            dl += if forward { -d } else { d } * vv[al];
        }
        Ok((val, val * dl))
    };
    let (s1, d1) = half(a, true)?;
    let (s2, d2) = half(b, false)?;
    let mut sign = 1.0;
    if a.pt != b.pt {
        // principal square roots fix h(P)h(Q) only up to sign; match it against the kernel
        let z: Vec<C64> = a.pt.u.iter().zip(&b.pt.u).map(|(x, y)| x - y).collect();
        let direct = fr.theta_ch(&z, ch, 0)?.value * fr.h2_alt(&a.pt, alt).sqrt() * fr.h2_alt(&b.pt, alt).sqrt()
            / (t0 * fr.theta_ch(&z, &odd.0, 0)?.value);
        let sz = fr.szego(ch, a, b)?;
        if (direct - sz).norm() > (direct + sz).norm() {
            sign = -1.0;
        }
    }
    Ok((d1 * s2 - s1 * d2) * hx2 * 0.25 * sign)
}

/// The Szegő kernel between canonical points j, k over λ₀: (FD ∂_{λ_m}, bilinear prediction).
pub fn szego_variation(s: &Setup, ch: &Characteristic, m: usize, j: usize, k: usize, h: f64) -> Result<(C64, C64)> {
    let sz = |x: &Setup| x.frame.szego(ch, &x.canon[j], &x.canon[k]);
    let fd = (sz(&s.perturbed(m, c(h, 0.0))?)? - sz(&s.perturbed(m, c(-h, 0.0))?)?) / (2.0 * h);
    Ok((fd, szego_bilinear(s, ch, m, &s.canon[j], &s.canon[k])?))
}

/// A_m from the bilinear formula (r = 0, simple branch points):
/// (A_m)_{kj} = (λ₀ − λ_m)²·¼{D_m[s(λ₀^{(j)},P_m)]s(P_m,λ₀^{(k)}) − s(λ₀^{(j)},P_m)D_m[s(P_m,λ₀^{(k)})]}.
pub fn residue_bilinear(sol: &PsiSolution, m: usize) -> Result<CMat> {
    let s = &sol.setup;
    if sol.params.r.iter().any(|r| r.norm() > 0.0) {
        return Err(Error::UnsupportedGeometry("bilinear residue formula requires r = 0".into()));
    }
    let ch = sol.ch.clone();
    let n = s.n();
    let f = (s.lambda0 - s.lambdas[m]).powi(2);
    let mut a = CMat::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            a[(k, j)] = szego_bilinear(s, &ch, m, &s.canon[j], &s.canon[k])? * f;
        }
    }
    Ok(a)
}

/// Residual of ∂R_m(P_m)/∂λ_n = ∂R_n(P_n)/∂λ_m with R from the closed form for
/// the divisor `set` (branch point indices of the model).
pub fn compat_check(s: &Setup, m: usize, n: usize, h: f64, set: &[usize]) -> Result<f64> {
    let hy = hyper(s).ok_or_else(|| Error::UnsupportedGeometry("needs a two-sheeted model".into()))?;
    let ch = s.characteristic_of_set(set)?.to_char();
    let r_at = |k: usize, moved: usize, d: f64| -> Result<C64> {
        let fr = frame_for(&s.frame, moved_curve(hy, moved, c(d, 0.0))?)?;
        crate::kernels::projective_connection_closed(&fr, k, set, &ch)
    };
    let d_mn = (r_at(m, n, h)? - r_at(m, n, -h)?) / (2.0 * h);
    let d_nm = (r_at(n, m, h)? - r_at(n, m, -h)?) / (2.0 * h);
    Ok((d_mn - d_nm).norm())
}

/// Flag raised by the divisor probe.
#[derive(Debug, Clone)]
pub struct DivisorFlag {
    pub s: f64,
    pub theta_ratio: f64,
    /// max_m ‖A_m‖ at a point of the flagged neighbourhood.
    pub max_residue_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MalgrangeReport {
    pub samples: Vec<(f64, f64)>,
    pub flags: Vec<DivisorFlag>,
}

/// Relative |θ[p,q](Ω|B)| below which the probe flags the Malgrange divisor.
pub const FLAG_THRESHOLD: f64 = 1e-8;

fn theta_ratio(setup: &Setup, sol: &PsiSolution) -> Result<f64> {
    let ev = setup.frame.theta_ch(&sol.omega, &sol.ch, 0)?;
    Ok(ev.value.norm() / ev.scale)
}

/// Sample |θ[p,q](Ω)| along λ(s), s ∈ [0,1], refine local minima by
/// golden-section search and flag near-zeros; at each flag evaluate the
/// residues at a point `nbhd` away in s.
pub fn malgrange_probe<P>(sol: &PsiSolution, path: P, samples: usize, nbhd: f64) -> Result<MalgrangeReport>
where
    P: Fn(f64) -> Vec<C64>,
{
    let base = &sol.setup;
    let build = |s: f64, reference: &Setup| -> Result<(Setup, f64)> {
        let lams = path(s);
        let surface = match &reference.frame.surface {
            Surface::Hyper(h) => {
                let mut e = h.e.clone();
                for (k, x) in e.iter_mut().enumerate() {
                    let m = reference.lambdas.iter().position(|l| l == x).unwrap_or(k);
                    *x = lams[m];
                }
                Surface::Hyper(Hyperelliptic::with_order(e, Some(h))?)
            }
            Surface::Rational(r) => {
                let targets: Vec<C64> = r
                    .crit
                    .iter()
                    .map(|cr| {
                        let m = reference.lambdas.iter().position(|l| (l - cr.lam).norm() < 1e-9).unwrap_or(0);
                        lams[m]
                    })
                    .collect();
                Surface::Rational(r.with_critical_values(&targets)?)
            }
        };
        let st = Setup::new(surface, &lams, reference.lambda0, None, reference.frame.cfg, Some(reference))?;
        let ratio = match PsiSolution::new(st.clone(), sol.params.p.clone(), sol.params.q.clone(), sol.params.r.clone()) {
            Ok(x) => theta_ratio(&st, &x)?,
            Err(Error::ThetaDivisorHit { ratio }) => ratio,
            Err(e) => return Err(e),
        };
        Ok((st, ratio))
    };
    // chain references along the path so that labels stay continuous
    let mut setups = Vec::with_capacity(samples + 1);
    let mut cur = base.clone();
    let mut out = Vec::with_capacity(samples + 1);
    for i in 0..=samples {
        let s = i as f64 / samples as f64;
        let (st, r) = build(s, &cur)?;
        out.push((s, r));
        cur = st.clone();
        setups.push(st);
    }
    let mut flags = Vec::new();
    for i in 0..=samples {
        let left = if i > 0 { out[i - 1].1 } else { f64::INFINITY };
        let right = if i < samples { out[i + 1].1 } else { f64::INFINITY };
        if !(out[i].1 <= left && out[i].1 <= right) {
            continue;
        }
        let lo = out[i.saturating_sub(1)].0;
        let hi = out[(i + 1).min(samples)].0;
        let reference = &setups[i];
        let f = |s: f64| build(s, reference).map(|x| x.1);
        let (smin, rmin) = golden_min(f, lo, hi, 1e-13)?;
        if rmin < FLAG_THRESHOLD {
            let sn = (smin + nbhd).min(1.0);
            let (st, _) = build(sn, reference)?;
            let norm = PsiSolution::new(st, sol.params.p.clone(), sol.params.q.clone(), sol.params.r.clone())
                .and_then(|x| residues_contour(&x))
                .map(|d| d.a.iter().map(linalg::max_abs).fold(0.0, f64::max));
            let norm = norm.ok();
            flags.push(DivisorFlag { s: smin, theta_ratio: rmin, max_residue_norm: norm });
        }
    }
    Ok(MalgrangeReport { samples: out, flags })
}

fn golden_min<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// q putting Bp + q on the odd half-period ½ + B/2 at the given genus-1 period
/// B*, so that θ[p,q](0|B*) = 0.
pub fn divisor_q(b_star: C64, p: C64) -> C64 {
    c(0.5, 0.0) + b_star * 0.5 - b_star * p
}

/// Characteristic [½,½]: the odd one in genus 1.
pub fn odd_genus1() -> HalfChar {
    HalfChar { p2: vec![1], q2: vec![1] }
}
