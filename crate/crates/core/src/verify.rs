//! Verification suites over a solved problem. Each check reports a value, a
//! residual, the tolerance it is held to and whether it passed; a check that
//! cannot be evaluated fails with the error message as its value.

use crate::config::Config;
use crate::io::{cx_json, cxs_json};
use crate::isomono::{self, LogTerms};
use crate::kernels::{self, KState};
use crate::monodromy;
use crate::rhp::{local_exponents, PsiSolution, Setup};
use crate::surface::Surface;
use crate::theta::{self, Characteristic, HalfChar};
use crate::{linalg, CMat, Error, Result, C64};
use serde::Serialize;
use serde_json::{json, Value};
use std::f64::consts::PI;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    /// `None` when the check could not be evaluated (serialised as null).
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, value: Value, residual: f64, tolerance: f64) -> Check {
        let pass = residual.is_finite() && residual <= tolerance;
        Check { name: name.to_string(), value, residual: residual.is_finite().then_some(residual), tolerance, pass }
    }

    fn failed(name: &str, e: &Error, tolerance: f64) -> Check {
        Check { name: name.to_string(), value: json!({ "error": e.to_string() }), residual: None, tolerance, pass: false }
    }
}

fn guard<F: FnOnce() -> Result<Check>>(name: &str, tol: f64, f: F) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, &e, tol))
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

pub fn mat_json(m: &CMat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| cx_json(m[(i, j)])).collect())).collect())
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn fd_step(sol: &PsiSolution, cfg: &Config) -> f64 {
    cfg.fd_step.unwrap_or_else(|| isomono::default_step(&sol.setup.lambdas, sol.setup.lambda0))
}

/// Distance from λ₀ to the nearest singular point.
fn free_radius(s: &Setup) -> f64 {
    s.lambdas.iter().map(|l| (l - s.lambda0).norm()).fold(f64::INFINITY, f64::min)
}

/// Evaluation points for kernel checks: λ on a circle around λ₀ of radius
/// 0.4·(distance to the nearest singular point), spread over the sheets.
pub fn sample_points(s: &Setup, count: usize) -> Result<Vec<KState>> {
    let r = 0.4 * free_radius(s);
    let n = s.n();
    (0..count)
        .map(|i| {
            let t = 2.0 * PI * (i as f64 + 0.37) / count as f64;
            s.point_at(s.lambda0 + C64::from_polar(r, t), (i * 7 + i / n) % n)
        })
        .collect()
}

/// Default evaluation grid: points around λ₀ at 0.5 and 0.8 of the free radius.
pub fn default_grid(s: &Setup) -> Vec<C64> {
    let r = free_radius(s);
    (0..6).map(|i| s.lambda0 + C64::from_polar(if i % 2 == 0 { 0.5 * r } else { 0.8 * r }, 2.0 * PI * i as f64 / 6.0 + 0.2)).collect()
}

/// Even half-integer characteristic with the largest |θ(0)|, for kernel checks.
pub fn even_characteristic(s: &Setup) -> Result<Characteristic> {
    let g = s.g();
    if g == 0 {
        return Ok(Characteristic::zero(0));
    }
    let zero = vec![c(0.0, 0.0); g];
    let mut best: Option<(f64, HalfChar)> = None;
    for idx in 0..(1usize << (2 * g)) {
        let hc = HalfChar::from_index(g, idx);
        if hc.parity() != 0 {
            continue;
        }
        let ev = s.frame.theta_ch(&zero, &hc.to_char(), 0)?;
        let r = ev.value.norm() / ev.scale;
        if best.as_ref().map_or(true, |b| r > b.0) {
            best = Some((r, hc));
        }
    }
    Ok(best.ok_or(Error::NoneFound)?.1.to_char())
}

fn hyper(s: &Setup) -> bool {
    matches!(s.frame.surface, Surface::Hyper(_))
}

/// Ψ(λ₀) by the mean over a small circle, its determinant against the closed
/// form, continuation monodromies against the parameter formula, their
/// product, and the local exponents.
pub fn rh_checks(sol: &PsiSolution, grid: &[C64], cfg: &Config) -> Vec<Check> {
    let tol = &cfg.tol;
    let s = &sol.setup;
    let n = s.n();
    let mut out = Vec::new();
    out.push(guard("normalization", tol.normalization, || {
        let eps = 1e-3 * free_radius(s);
        let k = 16;
        let mut mean = CMat::zeros(n, n);
        for i in 0..k {
            mean += sol.psi_eval(s.lambda0 + C64::from_polar(eps, 2.0 * PI * i as f64 / k as f64))?;
        }
        mean /= c(k as f64, 0.0);
        let res = linalg::dist(&mean, &linalg::identity(n));
        Ok(Check::new("normalization", json!({ "psi_lambda0": mat_json(&mean) }), res, tol.normalization))
    }));
    let pts: Vec<C64> = if grid.is_empty() { default_grid(s) } else { grid.to_vec() };
    out.push(guard("determinant", tol.determinant, || {
        let mut worst: f64 = 0.0;
        for &lam in &pts {
            let xs = sol.states_along(&s.default_path(lam))?;
            let d = linalg::det(&sol.psi_from_states(&xs)?);
            let cf = sol.det_closed_form(&xs);
            worst = worst.max((d - cf).norm() / cf.norm().max(1e-300));
        }
        Ok(Check::new("determinant", json!({ "points": pts.len() }), worst, tol.determinant))
    }));
    let formula = monodromy::monodromy_from_parameters(&sol.params, &s.cov);
    let extracted: Result<Vec<CMat>> = (0..s.lambdas.len()).map(|m| sol.monodromy_by_continuation(m)).collect();
    out.push(guard("monodromy", tol.monodromy, || {
        let rep = formula.clone()?;
        let ex = extracted.clone()?;
        let mut per = Vec::new();
        for (m, e) in ex.iter().enumerate() {
            let f = rep.matrices[m].to_dense();
            per.push(linalg::dist(e, &f) / linalg::max_abs(&f).max(1.0));
        }
        let worst = per.iter().cloned().fold(0.0, f64::max);
        Ok(Check::new("monodromy", json!({ "per_point": per }), worst, tol.monodromy))
    }));
    out.push(guard("product", tol.product, || {
        let ex = extracted.clone()?;
        let prod = ex.iter().fold(linalg::identity(n), |acc, m| m * acc);
        let scale = ex.iter().map(linalg::max_abs).fold(1.0, f64::max);
        let res = linalg::dist(&prod, &linalg::identity(n)) / scale;
        Ok(Check::new("product", json!({ "product": mat_json(&prod) }), res, tol.product))
    }));
    out.push(guard("exponents", tol.exponents, || {
        let mut worst: f64 = 0.0;
        for m in 0..s.lambdas.len() {
            worst = worst.max(local_exponents(sol, m)?.mismatch_mod1);
        }
        Ok(Check::new("exponents", json!({ "points": s.lambdas.len() }), worst, tol.exponents))
    }));
    out
}

/// Predicted exponents at λ_m, padded with zeros for unmarked sheets.
fn padded_exponents(sol: &PsiSolution, m: usize) -> Vec<C64> {
    let mut t = sol.exponents(m);
    t.resize(sol.setup.n().max(t.len()), c(0.0, 0.0));
    t
}

/// Largest distance in a greedy matching of two multisets.
fn match_distance(a: &[C64], b: &[C64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, y) in b.iter().enumerate() {
            if !used[i] && (x - y).norm() < best.1 {
                best = (i, (x - y).norm());
            }
        }
        if best.0 == usize::MAX {
            return f64::INFINITY;
        }
        used[best.0] = true;
        worst = worst.max(best.1);
    }
    worst
}

/// Residues A_m by contour integration: eigenvalues against the exponents,
/// their sum, and the Schlesinger residual at steps h and h/2.
pub fn residue_checks(sol: &PsiSolution, cfg: &Config) -> (Option<isomono::SchlesingerData>, Vec<Check>) {
    let tol = &cfg.tol;
    let mut out = Vec::new();
    let data = isomono::residues_contour(sol);
    out.push(guard("residue_exponents", tol.residue_exponents, || {
        let d = data.clone()?;
        let mut worst: f64 = 0.0;
        for (m, a) in d.a.iter().enumerate() {
            worst = worst.max(match_distance(&padded_exponents(sol, m), &linalg::eigenvalues(a)));
        }
        Ok(Check::new("residue_exponents", json!({ "points": d.a.len() }), worst, tol.residue_exponents))
    }));
    out.push(guard("residue_sum", tol.product, || {
        let d = data.clone()?;
        let n = sol.setup.n();
        let sum = d.a.iter().fold(CMat::zeros(n, n), |acc, a| acc + a);
        let scale = d.a.iter().map(linalg::max_abs).fold(1.0, f64::max);
        Ok(Check::new("residue_sum", json!({ "sum": mat_json(&sum) }), linalg::max_abs(&sum) / scale, tol.product))
    }));
    let h = fd_step(sol, cfg);
    out.push(guard("schlesinger", tol.schlesinger, || {
        let r1 = isomono::schlesinger_residual(sol, h)?;
        let r2 = isomono::schlesinger_residual(sol, h / 2.0)?;
        // second order: the residual drops by about 4 unless already at round-off
        let converging = r2 <= 0.75 * r1 || r2 < 1e-11;
        let res = if converging { r1 } else { f64::INFINITY };
        Ok(Check::new("schlesinger", json!({ "h": h, "residual_h": r1, "residual_h_half": r2, "converging": converging }), res, tol.schlesinger))
    }));
    (data.ok(), out)
}

fn tau_check<F>(name: &str, sol: &PsiSolution, h: f64, tol: f64, f: F) -> Check
where
    F: Fn(&PsiSolution) -> Result<LogTerms>,
{
    guard(name, tol, || {
        let d = isomono::tau_derivative_check(sol, h, f)?;
        let worst = d.iter().map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let fd: Vec<C64> = d.iter().map(|x| x.0).collect();
        let hm: Vec<C64> = d.iter().map(|x| x.1).collect();
        Ok(Check::new(name, json!({ "fd": cxs_json(&fd), "hamiltonians": cxs_json(&hm) }), worst, tol))
    })
}

/// ∂ ln τ against H_m for the available closed forms, Thomae and the
/// projective-connection identity for F.
pub fn tau_checks(sol: &PsiSolution, cfg: &Config) -> Vec<Check> {
    let tol = &cfg.tol;
    let s = &sol.setup;
    let h = fd_step(sol, cfg);
    let mut out = Vec::new();
    let closed = isomono::tau_closed_form(sol);
    match &closed {
        Ok(t) if t.log_tau.is_some() => out.push(tau_check("tau_closed_form", sol, h, tol.tau, isomono::closed_form_log_tau)),
        Ok(_) => {}
        Err(e) => out.push(Check::failed("tau_closed_form", e, tol.tau)),
    }
    let r0 = sol.params.r.iter().all(|r| r.norm() == 0.0);
    if hyper(s) {
        if r0 && s.n() == 2 {
            out.push(tau_check("tau_hyperelliptic", sol, h, tol.tau, isomono::log_tau_hyperelliptic));
        }
        out.push(guard("thomae", tol.thomae, || {
            let (ratios, spread) = isomono::thomae_check(s)?;
            Ok(Check::new("thomae", json!({ "ratios": cxs_json(&ratios) }), spread, tol.thomae))
        }));
        out.push(guard("projective_connection", tol.tau, || {
            let m = match &s.frame.surface {
                Surface::Hyper(x) => x.e.len(),
                _ => 0,
            };
            let mut worst: f64 = 0.0;
            for k in 0..m {
                let (a, b) = isomono::fhe_check(&s.frame, k, h)?;
                worst = worst.max((a - b).norm());
            }
            Ok(Check::new("projective_connection", json!({ "branch_points": m }), worst, tol.tau))
        }));
    }
    out
}

/// Theta identities at the surface's period matrix, Fay, Szegő–Bergmann,
/// prime-form slope and the sheet sum of the theta part of W.
pub fn kernel_checks(sol: &PsiSolution, cfg: &Config) -> Vec<Check> {
    let tol = &cfg.tol;
    let s = &sol.setup;
    let g = s.g();
    let fr = &s.frame;
    let mut out = Vec::new();
    if g > 0 {
        out.push(guard("period_matrix", tol.normalization, || {
            let b = &fr.b;
            let asym = linalg::dist(b, &b.transpose());
            let lmin = theta::check_period_matrix(b)?;
            Ok(Check::new("period_matrix", json!({ "min_eig_im": lmin }), asym, tol.normalization))
        }));
        let zs: Vec<Vec<C64>> = (0..3).map(|i| (0..g).map(|a| c(0.13 * (i + a) as f64 - 0.2, 0.07 * (i as f64) - 0.05 * a as f64)).collect()).collect();
        out.push(guard("quasi_periodicity", tol.quasi_periodicity, || {
            let mut worst: f64 = 0.0;
            for z in &zs {
                let t = fr.theta_ch(z, &sol.ch, 0)?;
                for j in 0..g {
                    let mut z1 = z.clone();
                    z1[j] += 1.0;
                    let a = fr.theta_ch(&z1, &sol.ch, 0)?.value;
                    let pa = (c(0.0, 2.0 * PI) * sol.ch.p[j]).exp();
                    worst = worst.max((a - pa * t.value).norm() / t.scale);
                    let mut z2 = z.clone();
                    for a in 0..g {
                        z2[a] += fr.b[(a, j)];
                    }
                    let b = fr.theta_ch(&z2, &sol.ch, 0)?.value;
                    let pb = (c(0.0, -PI) * fr.b[(j, j)] - c(0.0, 2.0 * PI) * (z[j] + sol.ch.q[j])).exp();
                    worst = worst.max((b - pb * t.value).norm() / (t.scale * pb.norm()));
                }
            }
            Ok(Check::new("quasi_periodicity", json!({ "points": zs.len() }), worst, tol.quasi_periodicity))
        }));
        out.push(guard("heat", tol.heat, || {
            let mut worst: f64 = 0.0;
            for z in &zs {
                worst = worst.max(theta::heat_check(z, &fr.b, &sol.ch, 1e-5, &fr.cfg)?);
            }
            Ok(Check::new("heat", json!({ "points": zs.len() }), worst, tol.heat))
        }));
    }
    let pts = sample_points(s, 6);
    out.push(guard("fay", tol.fay, || {
        let pts = pts.clone()?;
        let ch = even_characteristic(s)?;
        let mut per = Vec::new();
        for k in 1..=3 {
            per.push(kernels::fay_determinant_check(fr, &ch, &pts[..k], &pts[3..3 + k])?);
        }
        let worst = per.iter().cloned().fold(0.0, f64::max);
        Ok(Check::new("fay", json!({ "per_size": per }), worst, tol.fay))
    }));
    if g > 0 {
        out.push(guard("szego_bergmann", tol.szego_bergmann, || {
            let pts = pts.clone()?;
            let ch = even_characteristic(s)?;
            let zero = vec![c(0.0, 0.0); g];
            let mut worst: f64 = 0.0;
            for i in 0..3 {
                let (a, b) = (&pts[i], &pts[i + 3]);
                let sz = fr.szego(&ch, a, b)?;
                let w = fr.bergmann(&a.pt, &b.pt)?;
                let hf = fr.theta_hess_form(&ch, &zero, &a.pt, &b.pt)?;
                worst = worst.max((sz * sz - w - hf).norm() / (sz * sz).norm());
            }
            Ok(Check::new("szego_bergmann", json!({ "pairs": 3 }), worst, tol.szego_bergmann))
        }));
    }
    out.push(guard("prime_slope", tol.prime_slope, || {
        let pts = pts.clone()?;
        let eps = 1e-5 * free_radius(s).min(1.0);
        let v = kernels::prime_slope(fr, &pts[0], &s.sites, &s.lambdas, eps)?;
        Ok(Check::new("prime_slope", cx_json(v), (v - c(1.0, 0.0)).norm(), tol.prime_slope))
    }));
    if g > 0 {
        out.push(guard("sheet_sum", tol.sheet_sum, || {
            let lam = s.lambda0 + C64::from_polar(0.5 * free_radius(s), 1.1);
            let xs = sol.states_along(&s.default_path(lam))?;
            let (w1, _) = isomono::sheet_sum_check(sol, &xs)?;
            Ok(Check::new("sheet_sum", json!({ "lambda": cx_json(lam) }), w1, tol.sheet_sum))
        }));
    }
    out
}

/// Rauch, anti-holomorphicity, Szegő variation and compatibility, on
/// two-sheeted models.
pub fn variational_checks(sol: &PsiSolution, cfg: &Config) -> Vec<Check> {
    let tol = &cfg.tol;
    let s = &sol.setup;
    if !hyper(s) || s.g() == 0 {
        return Vec::new();
    }
    let m = s.lambdas.len();
    let h = fd_step(sol, cfg);
    let rauch: Result<Vec<isomono::VariationalCheck>> = (0..m).map(|k| isomono::rauch_check(s, k, cfg.rauch_step)).collect();
    let mut out = Vec::new();
    out.push(guard("rauch", tol.rauch, || {
        let r = rauch.clone()?;
        let worst = r.iter().map(|v| v.var_b1.max(v.var_w)).fold(0.0, f64::max);
        Ok(Check::new("rauch", json!({ "h": cfg.rauch_step }), worst, tol.rauch))
    }));
    out.push(guard("anti_holomorphic", tol.anti_holomorphic, || {
        let r = rauch.clone()?;
        let worst = r.iter().map(|v| v.anti_holomorphic).fold(0.0, f64::max);
        Ok(Check::new("anti_holomorphic", json!({ "h": cfg.rauch_step }), worst, tol.anti_holomorphic))
    }));
    out.push(guard("szego_variation", tol.szego_variation, || {
        let ch = even_characteristic(s)?;
        let mut worst: f64 = 0.0;
        for k in 0..m {
            let (a, b) = isomono::szego_variation(s, &ch, k, 0, 1, h)?;
            worst = worst.max((a - b).norm());
        }
        Ok(Check::new("szego_variation", json!({ "h": h }), worst, tol.szego_variation))
    }));
    out.push(guard("compat", tol.compat, || {
        let set: Vec<usize> = (0..=s.g()).collect();
        let res = isomono::compat_check(s, 0, 1, h, &set)?;
        Ok(Check::new("compat", json!({ "pair": [1, 2], "h": h }), res, tol.compat))
    }));
    out
}

/// Full suite for `verify`.
pub fn full_suite(sol: &PsiSolution, grid: &[C64], cfg: &Config) -> Vec<Check> {
    let mut out = rh_checks(sol, grid, cfg);
    out.extend(residue_checks(sol, cfg).1);
    out.extend(tau_checks(sol, cfg));
    out.extend(kernel_checks(sol, cfg));
    out.extend(variational_checks(sol, cfg));
    out
}
