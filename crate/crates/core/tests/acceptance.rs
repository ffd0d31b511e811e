//! Acceptance suite: one line per criterion, all evaluated before asserting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhk::config::Config;
use rhk::io::{self, ProblemForm};
use rhk::isomono;
use rhk::kernels::{self, KState};
use rhk::monodromy;
use rhk::rhp::{local_exponents, PsiSolution, Setup};
use rhk::surface::{Hyperelliptic, Surface};
use rhk::theta::{self, Characteristic, HalfChar, ThetaConfig};
use rhk::{linalg, CMat, Error, C64};
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn load(name: &str) -> io::Problem {
    let path = format!("{}/../../problems/{name}", env!("CARGO_MANIFEST_DIR"));
    io::parse_problem(&std::fs::read(path).unwrap()).unwrap()
}

fn solve(name: &str) -> PsiSolution {
    load(name).solve(&Config::default()).unwrap().0
}

fn with_zero_r(name: &str) -> PsiSolution {
    let mut p = load(name);
    if let ProblemForm::Parameters { r, .. } = &mut p.form {
        *r = None;
    }
    p.solve(&Config::default()).unwrap().0
}

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: String) -> Line {
    Line { pass, detail }
}

fn rand_c(rng: &mut ChaCha8Rng, re: f64, im: f64) -> C64 {
    c(rng.gen_range(-re..re), rng.gen_range(-im..im))
}

// ---------- 1: theta ----------

fn random_b(rng: &mut ChaCha8Rng, g: usize) -> CMat {
    let a = CMat::from_fn(g, g, |_, _| c(rng.gen_range(-0.6..0.6), 0.0));
    let y = &a * a.transpose() + CMat::identity(g, g) * c(0.6, 0.0);
    let x = CMat::from_fn(g, g, |i, j| c(0.3 * ((i + 2 * j) as f64 * 1.7 + rng.gen_range(-1.0..1.0)).sin(), 0.0));
    let x = (&x + x.transpose()) * c(0.5, 0.0);
    x + y * c(0.0, 1.0)
}

fn criterion_theta() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = ThetaConfig::default();
    let (mut qp, mut heat): (f64, f64) = (0.0, 0.0);
    let mut count = 0;
    for g in [1usize, 2] {
        for _ in 0..50 {
            let b = random_b(&mut rng, g);
            let z: Vec<C64> = (0..g).map(|_| rand_c(&mut rng, 1.0, 0.5)).collect();
            let ch = HalfChar::from_index(g, rng.gen_range(0..1usize << (2 * g))).to_char();
            let t = theta::theta(&z, &b, &ch, &cfg, 0).unwrap();
            for j in 0..g {
                let mut z1 = z.clone();
                z1[j] += 1.0;
                let a = theta::theta(&z1, &b, &ch, &cfg, 0).unwrap();
                let pa = (c(0.0, 2.0 * PI) * ch.p[j]).exp();
                qp = qp.max((a.value - pa * t.value).norm() / a.scale);
                let z2: Vec<C64> = (0..g).map(|i| z[i] + b[(i, j)]).collect();
                let e = theta::theta(&z2, &b, &ch, &cfg, 0).unwrap();
                let pb = (c(0.0, -PI) * b[(j, j)] - c(0.0, 2.0 * PI) * (z[j] + ch.q[j])).exp();
                qp = qp.max((e.value - pb * t.value).norm() / e.scale);
            }
            heat = heat.max(theta::heat_check(&z, &b, &ch, 1e-5, &cfg).unwrap());
            count += 1;
        }
    }
    line(qp < 1e-11 && heat < 1e-6, format!("{count} instances: quasi-periodicity {qp:.2e} (< 1e-11), heat {heat:.2e} (< 1e-6)"))
}

// ---------- 2: periods ----------

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..60 {
        if (a - b).abs() <= 4.0 * f64::EPSILON * a {
            break;
        }
        let m = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = m;
    }
    a
}

fn ellk(k2: f64) -> f64 {
    PI / (2.0 * agm(1.0, (1.0 - k2).sqrt()))
}

/// Representative of τ in the standard fundamental domain of SL(2, Z).
fn reduce(mut t: C64) -> C64 {
    for _ in 0..200 {
        t.re -= t.re.round();
        if t.norm_sqr() < 1.0 - 1e-14 {
            t = -c(1.0, 0.0) / t;
        } else {
            break;
        }
    }
    t
}

fn criterion_periods() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut e: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if e.windows(2).any(|w| w[1] - w[0] < 0.1) {
            continue;
        }
        let k2 = (e[2] - e[1]) * (e[3] - e[0]) / ((e[3] - e[1]) * (e[2] - e[0]));
        let tau = c(0.0, ellk(1.0 - k2) / ellk(k2));
        let pts: Vec<C64> = e.iter().map(|&x| c(x, 0.0)).collect();
        let h = Hyperelliptic::new(&pts).unwrap();
        let (a, b) = (reduce(h.b[(0, 0)]), reduce(tau));
        // boundary points of the domain have two representatives
        let d = [b, -b.conj(), b + 1.0, b - 1.0].iter().map(|x| (a - x).norm()).fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut sym: f64 = 0.0;
    let mut min_im = f64::INFINITY;
    let mut instances = 0;
    for g in [1usize, 2, 3] {
        for _ in 0..5 {
            let pts: Vec<C64> = (0..2 * g + 2).map(|_| rand_c(&mut rng, 2.0, 1.0)).collect();
            let Ok(h) = Hyperelliptic::new(&pts) else { continue };
            sym = sym.max(linalg::dist(&h.b, &h.b.transpose()));
            min_im = min_im.min(theta::check_period_matrix(&h.b).unwrap_or(-1.0));
            instances += 1;
        }
    }
    let mut sheet: f64 = 0.0;
    for name in ["genus1.json", "genus2.json"] {
        let sol = solve(name);
        let s = &sol.setup;
        for k in 0..4 {
            let lam = s.lambda0 + C64::from_polar(0.3 + 0.2 * k as f64, 1.0 + 1.3 * k as f64);
            let xs = sol.states_along(&s.default_path(lam)).unwrap();
            sheet = sheet.max(isomono::sheet_sum_check(&sol, &xs).unwrap().0);
        }
    }
    let pass = worst < 1e-10 && sym < 1e-12 && min_im > 0.0 && sheet < 1e-10;
    line(
        pass,
        format!("g=1 vs AGM {worst:.2e} (< 1e-10); {instances} curves symmetric to {sym:.1e}, min eig Im B {min_im:.3}; sheet sum {sheet:.2e} (< 1e-10)"),
    )
}

// ---------- 3: kernels ----------

fn random_points(s: &Setup, rng: &mut ChaCha8Rng, k: usize) -> Vec<KState> {
    let rad = s.lambdas.iter().map(|l| (l - s.lambda0).norm()).fold(f64::INFINITY, f64::min);
    (0..k)
        .map(|_| loop {
            let lam = s.lambda0 + C64::from_polar(rad * rng.gen_range(0.1..0.9), rng.gen_range(0.0..2.0 * PI));
            if let Ok(p) = s.point_at(lam, rng.gen_range(0..s.n())) {
                break p;
            }
        })
        .collect()
}

fn even_char(g: usize) -> Characteristic {
    match g {
        1 => HalfChar { p2: vec![0], q2: vec![1] },
        _ => HalfChar { p2: vec![0, 1], q2: vec![1, 0] },
    }
    .to_char()
}

fn criterion_kernels() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (mut fay, mut szb, mut slope): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut pairs = 0;
    for name in ["genus1.json", "genus2.json"] {
        let sol = solve(name);
        let s = &sol.setup;
        let g = s.g();
        let fr = &s.frame;
        for ch in [even_char(g), sol.ch.clone()] {
            for n in 1..=3 {
                for _ in 0..3 {
                    let p = random_points(s, &mut rng, 2 * n);
                    fay = fay.max(kernels::fay_determinant_check(fr, &ch, &p[..n], &p[n..]).unwrap());
                }
            }
        }
        let ch = even_char(g);
        let zero = vec![c(0.0, 0.0); g];
        for _ in 0..25 {
            let p = random_points(s, &mut rng, 2);
            let sz = fr.szego(&ch, &p[0], &p[1]).unwrap();
            let w = fr.bergmann(&p[0].pt, &p[1].pt).unwrap();
            let hf = fr.theta_hess_form(&ch, &zero, &p[0].pt, &p[1].pt).unwrap();
            szb = szb.max((sz * sz - w - hf).norm() / (sz * sz).norm());
            pairs += 1;
        }
        for q in random_points(s, &mut rng, 3) {
            let v = kernels::prime_slope(fr, &q, &s.sites, &s.lambdas, 1e-5).unwrap();
            slope = slope.max((v - c(1.0, 0.0)).norm());
        }
    }
    line(
        fay < 1e-8 && szb < 1e-9 && slope < 1e-6,
        format!("Fay N=1..3 {fay:.2e} (< 1e-8); Szegő-Bergmann {szb:.2e} on {pairs} pairs (< 1e-9); prime slope {slope:.2e} (< 1e-6)"),
    )
}

// ---------- 4, 5: RH solution and exponents ----------

struct RhNumbers {
    norm: f64,
    det: f64,
    mon: f64,
    prod: f64,
    exp_mon: f64,
    exp_res: f64,
}

fn rh_numbers(sol: &PsiSolution) -> RhNumbers {
    let s = &sol.setup;
    let n = s.n();
    let rad = s.lambdas.iter().map(|l| (l - s.lambda0).norm()).fold(f64::INFINITY, f64::min);
    // Ψ(λ₀) as the mean value over a small circle
    let eps = 1e-3 * rad;
    let mut mean = CMat::zeros(n, n);
    for i in 0..16 {
        mean += sol.psi_eval(s.lambda0 + C64::from_polar(eps, 2.0 * PI * i as f64 / 16.0)).unwrap();
    }
    let norm = linalg::dist(&(mean / c(16.0, 0.0)), &linalg::identity(n));
    let mut det: f64 = 0.0;
    for k in 0..8 {
        let lam = s.lambda0 + C64::from_polar(rad * (0.3 + 0.08 * k as f64), 0.4 + 0.8 * k as f64);
        let xs = sol.states_along(&s.default_path(lam)).unwrap();
        let d = linalg::det(&sol.psi_from_states(&xs).unwrap());
        let cf = sol.det_closed_form(&xs);
        det = det.max((d - cf).norm() / cf.norm());
    }
    let rep = monodromy::monodromy_from_parameters(&sol.params, &s.cov).unwrap();
    let mut mon: f64 = 0.0;
    let mut prod = linalg::identity(n);
    for (m, f) in rep.matrices.iter().enumerate() {
        let e = sol.monodromy_by_continuation(m).unwrap();
        mon = mon.max(linalg::max_abs(&(&e - f.to_dense())));
        prod = &e * prod;
    }
    let prod = linalg::dist(&prod, &linalg::identity(n));
    let mut exp_mon: f64 = 0.0;
    let mut exp_res: f64 = 0.0;
    let d = isomono::residues_contour(sol).unwrap();
    for m in 0..s.lambdas.len() {
        exp_mon = exp_mon.max(local_exponents(sol, m).unwrap().mismatch_mod1);
        let mut t = sol.exponents(m);
        t.resize(n, c(0.0, 0.0));
        let mut ev = linalg::eigenvalues(&d.a[m]);
        for x in t {
            let (i, dist) = ev.iter().enumerate().map(|(i, y)| (i, (x - y).norm())).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            exp_res = exp_res.max(dist);
            ev.remove(i);
        }
    }
    RhNumbers { norm, det, mon, prod, exp_mon, exp_res }
}

fn criteria_rh(sols: &[(&str, &PsiSolution)]) -> (Line, Line) {
    let mut pass4 = true;
    let mut pass5 = true;
    let mut d4 = Vec::new();
    let mut d5 = Vec::new();
    for (name, sol) in sols {
        let r = rh_numbers(sol);
        pass4 &= r.norm < 1e-10 && r.det < 1e-9 && r.mon < 1e-8 && r.prod < 1e-9;
        pass5 &= r.exp_mon < 1e-8 && r.exp_res < 1e-7;
        d4.push(format!("{name}: Ψ(λ₀) {:.1e}, det {:.1e}, M {:.1e}, ΠM {:.1e}", r.norm, r.det, r.mon, r.prod));
        d5.push(format!("{name}: log M {:.1e}, A_m {:.1e}", r.exp_mon, r.exp_res));
    }
    (line(pass4, d4.join("; ")), line(pass5, d5.join("; ")))
}

// ---------- 6: Schlesinger ----------

fn criterion_schlesinger(sols: &[(&str, &PsiSolution)]) -> Line {
    let mut pass = true;
    let mut d = Vec::new();
    for (name, sol) in sols {
        let r1 = isomono::schlesinger_residual(sol, 1e-4).unwrap();
        let r2 = isomono::schlesinger_residual(sol, 5e-5).unwrap();
        pass &= r1 < 1e-5 && r2 <= 0.5 * r1;
        d.push(format!("{name}: {r1:.1e} -> {r2:.1e}"));
    }
    line(pass, format!("h=1e-4 -> 5e-5: {}", d.join("; ")))
}

// ---------- 7: tau ----------

fn tau_residual<F>(sol: &PsiSolution, f: F) -> f64
where
    F: Fn(&PsiSolution) -> rhk::Result<isomono::LogTerms>,
{
    isomono::tau_derivative_check(sol, 1e-4, f).unwrap().iter().map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

fn criterion_tau(g1: &PsiSolution, g1r0: &PsiSolution, g2: &PsiSolution, g0: &PsiSolution) -> Line {
    let he1 = tau_residual(g1r0, isomono::log_tau_hyperelliptic);
    let he2 = tau_residual(g2, isomono::log_tau_hyperelliptic);
    let gen0 = tau_residual(g0, isomono::closed_form_log_tau);
    let gen1 = tau_residual(g1, isomono::closed_form_log_tau);
    let mut thomae: f64 = 0.0;
    let mut fhe: f64 = 0.0;
    for sol in [g1r0, g2] {
        thomae = thomae.max(isomono::thomae_check(&sol.setup).unwrap().1);
        let m = sol.setup.lambdas.len();
        for k in 0..m {
            let (a, b) = isomono::fhe_check(&sol.setup.frame, k, 1e-4).unwrap();
            fhe = fhe.max((a - b).norm());
        }
    }
    let pass = he1.max(he2).max(gen0).max(gen1) < 1e-5 && thomae < 1e-7 && fhe < 1e-5;
    line(
        pass,
        format!("hyperelliptic r=0 g1 {he1:.1e} g2 {he2:.1e}; genus 0 N=3 {gen0:.1e}; genus 1 {gen1:.1e} (< 1e-5); Thomae {thomae:.1e} (< 1e-7); ∂ln F = R/24 {fhe:.1e} (< 1e-5)"),
    )
}

// ---------- 8: variational formulas ----------

fn criterion_variational(g1: &PsiSolution, g2: &PsiSolution) -> Line {
    let (mut rauch, mut anti, mut vars, mut compat): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for sol in [g1, g2] {
        let s = &sol.setup;
        let ch = even_char(s.g());
        for m in 0..s.lambdas.len() {
            let v = isomono::rauch_check(s, m, 1e-5).unwrap();
            rauch = rauch.max(v.var_b1).max(v.var_w);
            anti = anti.max(v.anti_holomorphic);
            let (a, b) = isomono::szego_variation(s, &ch, m, 0, 1, 1e-4).unwrap();
            vars = vars.max((a - b).norm());
        }
        let set: Vec<usize> = (0..=s.g()).collect();
        for (m, n) in [(0, 1), (1, 3), (0, 2)] {
            compat = compat.max(isomono::compat_check(s, m, n, 1e-4, &set).unwrap());
        }
    }
    line(
        rauch < 1e-6 && anti < 1e-8 && vars < 1e-5 && compat < 1e-4,
        format!("Rauch {rauch:.1e} (< 1e-6); anti-holomorphic {anti:.1e} (< 1e-8); Szegő variation {vars:.1e} (< 1e-5); compatibility {compat:.1e} (< 1e-4)"),
    )
}

// ---------- 9: Malgrange divisor ----------

fn criterion_malgrange() -> Line {
    let base = load("genus1.json").setup(&Config::default()).unwrap();
    let idx = base.lambdas.iter().position(|l| (l - c(0.4, 0.6)).norm() < 1e-12).unwrap();
    let dir = c(0.3, -0.2);
    let lams = base.lambdas.clone();
    let path = move |s: f64| {
        let mut l = lams.clone();
        l[idx] += dir * s;
        l
    };
    let mid = base.perturbed(idx, dir * 0.5).unwrap();
    let p = c(0.2, 0.0);
    let q = isomono::divisor_q(mid.frame.b[(0, 0)], p);
    let r0 = vec![c(0.0, 0.0); base.sites.len()];
    let sol = PsiSolution::new(base.clone(), vec![p], vec![q], r0.clone()).unwrap();
    let rep = isomono::malgrange_probe(&sol, &path, 20, 1e-7).unwrap();
    let flag_ok = rep.flags.len() == 1 && (rep.flags[0].s - 0.5).abs() < 1e-6;
    let (s_flag, norm) = rep.flags.first().map(|f| (f.s, f.max_residue_norm.unwrap_or(0.0))).unwrap_or((f64::NAN, 0.0));
    // theta factor of the closed-form τ at the flagged point
    let at = base.perturbed(idx, dir * s_flag);
    let theta_ratio = match at.and_then(|st| PsiSolution::new(st, vec![p], vec![q], r0.clone())) {
        Err(Error::ThetaDivisorHit { ratio }) => ratio,
        Ok(x) => {
            let t = isomono::tau_closed_form(&x).unwrap().theta_factor;
            t.norm() / x.setup.frame.theta_ch(&x.omega, &x.ch, 0).unwrap().scale
        }
        Err(_) => f64::NAN,
    };
    let mut generic_flags = 0;
    for (q, d) in [(c(-0.1, 0.3), dir), (q, c(-0.2, -0.25))] {
        let sol = PsiSolution::new(base.clone(), vec![p], vec![q], r0.clone()).unwrap();
        let lams = base.lambdas.clone();
        let path = move |s: f64| {
            let mut l = lams.clone();
            l[idx] += d * s;
            l
        };
        generic_flags += isomono::malgrange_probe(&sol, path, 20, 1e-7).unwrap().flags.len();
    }
    line(
        flag_ok && theta_ratio < 1e-8 && norm > 1e6 && generic_flags == 0,
        format!("flag at s={s_flag:.6}, |θ| ratio {theta_ratio:.1e}, max‖A_m‖ {norm:.1e} (> 1e6); generic paths: {generic_flags} flags"),
    )
}

// ---------- 10: parameter round trip ----------

fn criterion_round_trip() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let covs: Vec<_> = ["genus1.json", "genus2.json", "rational3.json"].iter().map(|n| load(n).setup(&Config::default()).unwrap().cov).collect();
    let mut worst: f64 = 0.0;
    let mut worst_rep: f64 = 0.0;
    for draw in 0..20 {
        let cov = &covs[draw % 3];
        let g = cov.genus;
        let mut params = monodromy::RepresentationParameters::zero(cov);
        params.p = (0..g).map(|_| rand_c(&mut rng, 0.45, 0.3)).collect();
        params.q = (0..g).map(|_| rand_c(&mut rng, 0.45, 0.3)).collect();
        let np = cov.points.len();
        params.r = (0..np).map(|_| rand_c(&mut rng, 0.2, 0.1)).collect();
        let total = params.r_sum(cov);
        let k = cov.points[np - 1].k() as f64;
        params.r[np - 1] -= total / k;
        let rep = monodromy::monodromy_from_parameters(&params, cov).unwrap();
        let rec = monodromy::parameters_from_monodromy(&rep, cov).unwrap();
        // p, q are fixed modulo integers, r modulo 1/k at a point glued k times
        let frac = |d: C64, unit: f64| ((d.re / unit - (d.re / unit).round()) * unit).abs().max(d.im.abs());
        for (a, b) in params.p.iter().zip(&rec.params.p).chain(params.q.iter().zip(&rec.params.q)) {
            worst = worst.max(frac(a - b, 1.0));
        }
        for (i, (a, b)) in params.r.iter().zip(&rec.params.r).enumerate() {
            worst = worst.max(frac(a - b, 1.0 / cov.points[i].k() as f64));
        }
        let back = monodromy::monodromy_from_parameters(&rec.params, cov).unwrap();
        let d: Vec<C64> = rec.gauge.iter().map(|x| (c(0.0, 2.0 * PI) * x).exp()).collect();
        let back = monodromy::conjugate(&back, &d);
        for (x, y) in back.matrices.iter().zip(&rep.matrices) {
            worst_rep = worst_rep.max(linalg::max_abs(&(x.to_dense() - y.to_dense())));
        }
    }
    line(worst < 1e-10 && worst_rep < 1e-10, format!("20 draws: parameters modulo lattice {worst:.1e}, representation {worst_rep:.1e} (< 1e-10)"))
}

#[test]
fn acceptance() {
    let g1 = solve("genus1.json");
    let g1r0 = with_zero_r("genus1.json");
    let g2 = solve("genus2.json");
    let g0 = solve("rational3.json");
    assert_eq!(g0.setup.n(), 3);
    assert!(matches!(g0.setup.frame.surface, Surface::Rational(_)));
    let sols = [("genus 1", &g1), ("genus 2", &g2), ("genus 0 N=3", &g0)];
    let lines: Vec<(usize, Line)> = std::thread::scope(|sc| {
        let mut hs = Vec::new();
        hs.push((1, sc.spawn(criterion_theta)));
        hs.push((2, sc.spawn(criterion_periods)));
        hs.push((3, sc.spawn(criterion_kernels)));
        let rh = sc.spawn(|| criteria_rh(&sols));
        hs.push((6, sc.spawn(|| criterion_schlesinger(&sols))));
        hs.push((7, sc.spawn(|| criterion_tau(&g1, &g1r0, &g2, &g0))));
        hs.push((8, sc.spawn(|| criterion_variational(&g1, &g2))));
        hs.push((9, sc.spawn(criterion_malgrange)));
        hs.push((10, sc.spawn(criterion_round_trip)));
        let mut out: Vec<(usize, Line)> = hs.into_iter().map(|(i, h)| (i, h.join().unwrap())).collect();
        let (a, b) = rh.join().unwrap();
        out.push((4, a));
        out.push((5, b));
        out.sort_by_key(|x| x.0);
        out
    });
    let names = [
        "",
        "theta correctness",
        "period engine",
        "kernel identities",
        "RH solution",
        "exponents",
        "Schlesinger",
        "tau",
        "variational formulas",
        "Malgrange behaviour",
        "round trip",
    ];
    for (i, l) in &lines {
        println!("criterion {i:2} {:<21} {}  {}", names[*i], if l.pass { "PASS" } else { "FAIL" }, l.detail);
    }
    let failed: Vec<usize> = lines.iter().filter(|l| !l.1.pass).map(|l| l.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
