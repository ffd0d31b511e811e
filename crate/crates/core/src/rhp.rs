//! The solution Ψ(λ₀, λ) of the Riemann–Hilbert problem assembled from the
//! modified Szegő kernel, its analytic continuation along the generator loops,
//! monodromies and local exponents.
//!
//! Ψ_{kj}(λ) = ψ(λ^{(j)}, λ₀^{(k)}) with
//! ψ(P,Q) = θ[p,q](U_P − U_Q + Ω)/θ[p,q](Ω) · (λ_P − λ_Q) · h_P h_Q/θ*(U_P − U_Q)
//!          · exp Σ_R k_R r_R (ℓ_R(P) − ℓ_R(Q)),
//! Ω = Σ_R k_R r_R U_R. Continuation obeys Ψ ↦ Ψ·M.

use crate::covering::{self, BranchedCovering, IndexTables, PermutationRepresentation, Realization};
use crate::kernels::{Frame, KState, Site};
use crate::linalg;
use crate::monodromy::RepresentationParameters;
use crate::surface::path::{circle_from, segment_with_detours};
use crate::surface::{Path, Piece, SurfPt, Surface};
use crate::theta::{self, Characteristic, HalfChar, ThetaConfig};
use crate::{CMat, Error, Result, C64, TWO_PI_I};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Geometry of a realised problem: surface, loops, sheet labels, marked points
/// and canonical states over λ₀. Independent of (p, q, r).
#[derive(Debug, Clone)]
pub struct Setup {
    pub frame: Frame,
    pub lambdas: Vec<C64>,
    pub lambda0: C64,
    pub cov: BranchedCovering,
    pub loops: Vec<Path>,
    /// Radius of the circle of loop m.
    pub rho: Vec<f64>,
    /// Sheet coordinate over λ₀ per sheet label.
    pub sheets0: Vec<C64>,
    pub sites: Vec<Site>,
    /// Canonical states at λ₀^{(j)}.
    pub canon: Vec<KState>,
    /// Spanning tree of the sheets: (sheet, parent sheet, loop).
    pub tree: Vec<(usize, usize, usize)>,
}

fn lex(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap())
}

fn nearest(list: &[C64], z: C64) -> (usize, f64) {
    list.iter()
        .enumerate()
        .map(|(i, &w)| (i, (w - z).norm()))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

impl Setup {
    pub fn new(
        surface: Surface,
        lambdas: &[C64],
        lambda0: C64,
        user: Option<&PermutationRepresentation>,
        cfg: ThetaConfig,
        reference: Option<&Setup>,
    ) -> Result<Setup> {
        let mm = lambdas.len();
        let scale = lambdas.iter().fold(1.0 + lambda0.norm(), |s, l| s.max(l.norm()));
        for (i, &l) in lambdas.iter().enumerate() {
            if (l - lambda0).norm() < 1e-9 * scale {
                return Err(Error::Invalid(format!("λ₀ coincides with λ_{}", i + 1)));
            }
            for &o in &lambdas[..i] {
                if (l - o).norm() < 1e-9 * scale {
                    return Err(Error::Invalid("singular points coincide".into()));
                }
            }
        }
        for cv in surface.branch_values() {
            if nearest(lambdas, cv).1 > 1e-8 * scale {
                return Err(Error::InconsistentBranchData(format!("critical value {cv} is not among the singular points")));
            }
        }
        // generator loops: ray, counterclockwise circle, back
        let mut loops = Vec::with_capacity(mm);
        let mut rho = Vec::with_capacity(mm);
        for (m, &l) in lambdas.iter().enumerate() {
            let d = lambdas
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != m)
                .map(|(_, &o)| (o - l).norm())
                .fold((l - lambda0).norm(), f64::min);
            let r = 0.25 * d;
            let u = (l - lambda0) / (l - lambda0).norm();
            let a = l - u * r;
            for (n, &o) in lambdas.iter().enumerate() {
                if n == m {
                    continue;
                }
                let s = ((o - lambda0) * u.conj()).re.clamp(0.0, (a - lambda0).norm());
                if (o - (lambda0 + u * s)).norm() < 1e-6 * scale {
                    return Err(Error::UnsupportedGeometry(format!("λ_{} lies on the ray from λ₀ to λ_{}", n + 1, m + 1)));
                }
            }
            loops.push(vec![Piece::Seg(lambda0, a), circle_from(l, a), Piece::Seg(a, lambda0)]);
            rho.push(r);
        }
        let frame = Frame::new(surface, cfg, reference.map(|r| r.frame.odd.clone()))?;
        let surface = &frame.surface;
        let n = surface.sheets();
        let mut sheets0 = surface.fiber(lambda0);
        sheets0.sort_by(lex);
        if let Some(r) = reference {
            let mut s = Vec::with_capacity(n);
            for &y in &r.sheets0 {
                s.push(sheets0[nearest(&sheets0, y).0]);
            }
            sheets0 = s;
        }
        let sheet_of = |y: C64| -> Result<usize> {
            let (i, d) = nearest(&sheets0, y);
            let sep = sheets0.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, &w)| (w - sheets0[i]).norm()).fold(f64::INFINITY, f64::min);
            if d > 1e-6 * sep {
                return Err(Error::ContinuationDrift(d));
            }
            Ok(i)
        };
        // realised lift permutations σ_m(j) and s_m = σ_m^{-1}
        let mut perms = Vec::with_capacity(mm);
        for lp in &loops {
            let mut sigma = vec![0; n];
            for (j, sg) in sigma.iter_mut().enumerate() {
                let q = surface.walk_point(&surface.point(lambda0, sheets0[j]), lp)?;
                *sg = sheet_of(q.y)?;
            }
            if !covering::is_permutation(&sigma) {
                return Err(Error::ContinuationDrift(1.0));
            }
            perms.push(covering::invert(&sigma));
        }
        let mut realised = PermutationRepresentation { n, perms };
        if !realised.product_is_identity() {
            return Err(Error::GeneratorOrder);
        }
        if let (Some(u), None) = (user, reference) {
            let pi = match_labels(&realised, u).ok_or_else(|| {
                Error::InconsistentBranchData("covering permutations do not match the surface model up to relabelling".into())
            })?;
            // old sheet j gets label pi[j]
            let mut s0 = vec![C64::new(0.0, 0.0); n];
            for j in 0..n {
                s0[pi[j]] = sheets0[j];
            }
            sheets0 = s0;
            realised = u.clone();
        }
        if let Some(r) = reference {
            if r.cov.perm != realised {
                return Err(Error::FiniteDifferenceUnstable("sheet permutations changed under perturbation".into()));
            }
        }
        let cov = covering::build_covering(&realised, lambdas, lambda0)?;
        if cov.genus != surface.genus() {
            return Err(Error::InconsistentBranchData(format!("covering genus {} but surface genus {}", cov.genus, surface.genus())));
        }
        // spanning tree over the sheets through the lifts
        let mut tree = Vec::new();
        let mut known = vec![false; n];
        known[0] = true;
        let mut queue = vec![0usize];
        while let Some(i) = queue.first().copied() {
            queue.remove(0);
            for m in 0..mm {
                let j = cov.lift_loop(m, i).end;
                if !known[j] {
                    known[j] = true;
                    tree.push((j, i, m));
                    queue.push(j);
                }
            }
        }
        // Abel map at the sheets over λ₀, then at the marked points
        let mut base: Vec<SurfPt> = (0..n).map(|j| surface.point(lambda0, sheets0[j])).collect();
        for &(j, i, m) in &tree {
            let q = surface.walk_point(&base[i], &loops[m])?;
            base[j] = SurfPt { lam: lambda0, y: sheets0[j], u: q.u };
        }
        let mut sites = Vec::with_capacity(cov.points.len());
        for pt in &cov.points {
            let m = pt.m;
            let j = pt.sheets[0];
            let ray = vec![loops[m][0]];
            let q = surface.walk_point(&base[j], &ray)?;
            let l = lambdas[m];
            let mut site = match (surface, pt.k()) {
                (Surface::Hyper(h), 2) => {
                    let k = nearest(&h.e, l).0;
                    Site { u: surface.u_at_branch(&q, k), t: C64::new(0.0, 0.0), alt: frame.alt_for_branch(k) }
                }
                (Surface::Rational(r), k) if k > 1 => {
                    let c = r
                        .crit
                        .iter()
                        .filter(|c| (c.lam - l).norm() < 1e-8 * scale)
                        .min_by(|a, b| (a.t - q.y).norm().partial_cmp(&(b.t - q.y).norm()).unwrap())
                        .ok_or_else(|| Error::InconsistentBranchData("no critical point over a branch value".into()))?;
                    if c.k != k {
                        return Err(Error::InconsistentBranchData(format!("ramification {} of the map but {} in the covering", c.k, k)));
                    }
                    Site { u: Vec::new(), t: c.t, alt: 0 }
                }
                (Surface::Rational(r), 1) => {
                    let t = r.track(q.y, l).ok_or_else(|| Error::ContinuationDrift(l.norm()))?;
                    if r.dist_crit_t(t) < 1e-6 * (1.0 + t.norm()) {
                        return Err(Error::InconsistentBranchData("unramified marked point lands on a critical point".into()));
                    }
                    Site { u: Vec::new(), t, alt: 0 }
                }
                (_, 1) => {
                    let q2 = surface.walk_point(&q, &[Piece::Seg(q.lam, l)])?;
                    Site { u: q2.u.clone(), t: q2.y, alt: 0 }
                }
                _ => return Err(Error::UnsupportedGeometry("ramification not supported by the surface model".into())),
            };
            if let Some(r) = reference {
                site.alt = r.sites[sites.len()].alt;
            }
            sites.push(site);
        }
        let p_start = surface.point(lambda0, sheets0[0]);
        let mut canon: Vec<Option<KState>> = vec![None; n];
        canon[0] = Some(frame.start_state(p_start, &sites, reference.map(|r| &r.canon[0]))?);
        for &(j, i, m) in &tree {
            let st = frame.walk(canon[i].as_ref().unwrap(), &sites, &loops[m], lambdas)?;
            canon[j] = Some(KState { pt: SurfPt { lam: lambda0, y: sheets0[j], u: st.pt.u.clone() }, ..st });
        }
        let canon: Vec<KState> = canon.into_iter().map(|c| c.unwrap()).collect();
        let mut s = Setup { frame, lambdas: lambdas.to_vec(), lambda0, cov, loops, rho, sheets0, sites, canon, tree };
        let (p0, q0) = match reference {
            Some(r) => {
                let re = r.cov.realization.as_ref().unwrap();
                (re.p0.clone(), re.q0.clone())
            }
            None => s.spin_twist()?,
        };
        let tables = s.realise_tables(&p0, &q0)?;
        if let Some(r) = reference {
            if r.cov.realization.as_ref().unwrap().tables != tables {
                return Err(Error::FiniteDifferenceUnstable("index tables changed under perturbation".into()));
            }
        }
        s.cov.realization = Some(Realization { tables, p0, q0 });
        Ok(s)
    }

    pub fn g(&self) -> usize {
        self.frame.g()
    }

    pub fn n(&self) -> usize {
        self.cov.n()
    }

    pub fn avoid(&self) -> &[C64] {
        &self.lambdas
    }

    /// Split U = n + B m into integers.
    fn lattice_coords(&self, du: &[C64]) -> Result<(Vec<i64>, Vec<i64>)> {
        let g = self.g();
        let b = &self.frame.b;
        let y = DMatrix::from_fn(g, g, |i, j| b[(i, j)].im);
        let yi = y.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let mv: Vec<f64> = (0..g).map(|a| (0..g).map(|c| yi[(a, c)] * du[c].im).sum()).collect();
        let mr: Vec<i64> = mv.iter().map(|x| x.round() as i64).collect();
        let mut nr = Vec::with_capacity(g);
        let mut err: f64 = 0.0;
        for a in 0..g {
            let mut v = du[a];
            for c in 0..g {
                v -= b[(a, c)] * mr[c] as f64;
            }
            err = err.max((v.re - v.re.round()).abs()).max(v.im.abs());
            nr.push(v.re.round() as i64);
        }
        err = err.max(mv.iter().zip(&mr).map(|(x, r)| (x - *r as f64).abs()).fold(0.0, f64::max));
        if err > 1e-6 {
            return Err(Error::ContinuationDrift(err));
        }
        Ok((nr, mr))
    }

    /// log of the automorphy factor of an odd θ under z ↦ z + n + Bm.
    fn odd_automorphy(&self, alt: usize, z: &[C64], n: &[i64], m: &[i64]) -> C64 {
        let g = self.g();
        let ps = &self.frame.alts[alt].0.p;
        let qs = &self.frame.alts[alt].0.q;
        let mut e = C64::new(0.0, 0.0);
        for a in 0..g {
            e += TWO_PI_I * (ps[a] * n[a] as f64 - qs[a] * m[a] as f64);
            e -= TWO_PI_I * z[a] * m[a] as f64;
            for c in 0..g {
                e -= C64::new(0.0, PI) * self.frame.b[(a, c)] * (m[a] * m[c]) as f64;
            }
        }
        e
    }

    fn realise_tables(&self, p0: &[f64], q0: &[f64]) -> Result<IndexTables> {
        let n = self.n();
        let g = self.g();
        let mm = self.lambdas.len();
        let np = self.sites.len();
        let mut t = IndexTables {
            i: vec![vec![vec![0; g]; n]; mm],
            j: vec![vec![vec![0; g]; n]; mm],
            k: vec![vec![vec![0; np]; n]; mm],
            l: vec![vec![0; n]; mm],
        };
        for m in 0..mm {
            for row in 0..n {
                let start = self.cov.perm.perms[m][row];
                let x = self.frame.walk(&self.canon[start], &self.sites, &self.loops[m], &self.lambdas)?;
                let can = &self.canon[row];
                if (x.pt.y - can.pt.y).norm() > 1e-7 * (1.0 + can.pt.y.norm()) {
                    return Err(Error::ContinuationDrift((x.pt.y - can.pt.y).norm()));
                }
                let du: Vec<C64> = x.pt.u.iter().zip(&can.pt.u).map(|(a, b)| a - b).collect();
                let (nv, mv) = if g > 0 { self.lattice_coords(&du)? } else { (Vec::new(), Vec::new()) };
                let eps = x.h / can.h;
                if (eps.norm() - 1.0).abs() > 1e-6 || eps.im.abs() > 1e-6 {
                    return Err(Error::ContinuationDrift((eps.norm() - 1.0).abs()));
                }
                // K is read against the θ* multiplier and the sign of h: the
                // prime form's multiplier does not depend on the odd characteristic
                let log_eps = if eps.re < 0.0 { C64::new(0.0, PI) } else { C64::new(0.0, 0.0) };
                for (ri, site) in self.sites.iter().enumerate() {
                    let z: Vec<C64> = can.pt.u.iter().zip(&site.u).map(|(a, b)| a - b).collect();
                    let aut = if g > 0 { self.odd_automorphy(0, &z, &nv, &mv) } else { C64::new(0.0, 0.0) };
                    let kk = (x.ell[ri] - can.ell[ri] - aut + log_eps) / TWO_PI_I;
                    if (kk - kk.re.round()).norm() > 1e-6 {
                        return Err(Error::ContinuationDrift((kk - kk.re.round()).norm()));
                    }
                    t.k[m][row][ri] = kk.re.round() as i64;
                }
                // (−1)^L = ε exp(−2πi((p*+p⁰)·n − (q*+q⁰)·m))
                let mut e = C64::new(0.0, 0.0);
                for a in 0..g {
                    e -= TWO_PI_I * ((self.frame.star.p[a] + p0[a]) * nv[a] as f64 - (self.frame.star.q[a] + q0[a]) * mv[a] as f64);
                }
                let sgn = eps * e.exp();
                if (sgn.norm() - 1.0).abs() > 1e-6 || sgn.im.abs() > 1e-6 {
                    return Err(Error::ContinuationDrift(sgn.im.abs()));
                }
                t.l[m][row] = if sgn.re < 0.0 { 1 } else { 0 };
                for a in 0..g {
                    t.i[m][row][a] = mv[a];
                    t.j[m][row][a] = -nv[a];
                }
            }
        }
        Ok(t)
    }

    fn hyper(&self) -> Option<&crate::surface::Hyperelliptic> {
        match &self.frame.surface {
            Surface::Hyper(h) => Some(h),
            _ => None,
        }
    }

    /// Abel image of the hyperelliptic branch point e_k (model numbering), from P₀.
    pub fn branch_image(&self, k: usize) -> Result<Vec<C64>> {
        let h = self.hyper().ok_or_else(|| Error::UnsupportedGeometry("needs a hyperelliptic model".into()))?;
        let lam = h.e[k];
        let (m, _) = nearest(&self.lambdas, lam);
        let r = self.cov.point_of[m][0];
        Ok(self.sites[r].u.clone())
    }

    /// A point of the surface over λ reached from P₀ on sheet `j` along the
    /// default path; Abel map relative to P₀.
    pub fn point_at(&self, lam: C64, j: usize) -> Result<KState> {
        let path = self.default_path(lam);
        self.frame.walk(&self.canon[j], &self.sites, &path, &self.lambdas)
    }

    /// Straight segment from λ₀ with semicircular detours of radius 0.1·(min
    /// distance between singular points) around each λ_m near it.
    pub fn default_path(&self, lam: C64) -> Path {
        let mut d = f64::INFINITY;
        for (i, a) in self.lambdas.iter().enumerate() {
            d = d.min((a - self.lambda0).norm());
            for b in &self.lambdas[..i] {
                d = d.min((a - b).norm());
            }
        }
        segment_with_detours(self.lambda0, lam, &self.lambdas, 0.1 * d)
    }

    /// Riemann constants Δ with base at the first branch point of a hyperelliptic
    /// model: the half period K with θ(Σ_{i<g} U_e(P_i) − K) = 0 for generic P_i.
    pub fn riemann_constants(&self) -> Result<HalfChar> {
        let g = self.g();
        let ue = self.branch_image(0)?;
        let b = &self.frame.b;
        let cfg = &self.frame.cfg;
        // generic divisors of degree g − 1
        let probes = [C64::new(0.37, 0.61), C64::new(-0.83, 0.29), C64::new(0.11, -0.97), C64::new(1.3, 1.1)];
        let mut divisors: Vec<Vec<C64>> = Vec::new();
        for t in 0..3 {
            let mut z = vec![C64::new(0.0, 0.0); g];
            for i in 0..g.saturating_sub(1) {
                let lam = self.lambda0 + probes[(t + i) % 4] * (1.0 + 0.3 * i as f64);
                let st = self.point_at(lam, (t + i) % self.n())?;
                for a in 0..g {
                    z[a] += st.pt.u[a] - ue[a];
                }
            }
            divisors.push(z);
        }
        let mut best: Option<(f64, HalfChar)> = None;
        let mut second = f64::INFINITY;
        for idx in 0..(1usize << (2 * g)) {
            let hc = HalfChar::from_index(g, idx);
            let kv: Vec<C64> = (0..g)
                .map(|a| {
                    let mut s = C64::new(hc.q2[a] as f64 / 2.0, 0.0);
                    for c in 0..g {
                        s += b[(a, c)] * (hc.p2[c] as f64 / 2.0);
                    }
                    s
                })
                .collect();
            let mut worst: f64 = 0.0;
            for z in &divisors {
                let arg: Vec<C64> = z.iter().zip(&kv).map(|(a, k)| a - k).collect();
                let ev = theta::theta(&arg, b, &Characteristic::zero(g), cfg, 0)?;
                worst = worst.max(ev.value.norm() / ev.scale);
            }
            match &best {
                Some((w, _)) if worst >= *w => second = second.min(worst),
                _ => {
                    if let Some((w, _)) = &best {
                        second = second.min(*w);
                    }
                    best = Some((worst, hc));
                }
            }
        }
        let (w, hc) = best.ok_or(Error::NoneFound)?;
        if w > 1e-8 || second < 1e-4 {
            return Err(Error::NoneFound);
        }
        Ok(hc)
    }

    /// Spin twist p⁰, q⁰ of √dλ. For hyperelliptic models
    /// Bp⁰ + q⁰ = ½ Σ_m U_e(λ_m) − Δ_e, base at the first branch point.
    fn spin_twist(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.g();
        if g == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let h = self.hyper().ok_or_else(|| Error::UnsupportedTopology("spin twist needs a hyperelliptic model".into()))?;
        let ue = self.branch_image(0)?;
        let mut z = vec![C64::new(0.0, 0.0); g];
        for k in 0..h.e.len() {
            let u = self.branch_image(k)?;
            for a in 0..g {
                z[a] += (u[a] - ue[a]) * 0.5;
            }
        }
        let delta = self.riemann_constants()?;
        for a in 0..g {
            z[a] -= delta.q2[a] as f64 / 2.0;
            for c in 0..g {
                z[a] -= self.frame.b[(a, c)] * (delta.p2[c] as f64 / 2.0);
            }
        }
        half_char_of(&self.frame.b, &z)
    }

    /// Characteristic [p^T, q^T] with B p^T + q^T = Σ_{m∈T} U_e(λ_m) − Δ_e
    /// (hyperelliptic model numbering of the branch points).
    pub fn characteristic_of_set(&self, set: &[usize]) -> Result<HalfChar> {
        let g = self.g();
        let ue = self.branch_image(0)?;
        let delta = self.riemann_constants()?;
        let mut z = vec![C64::new(0.0, 0.0); g];
        for &k in set {
            let u = self.branch_image(k)?;
            for a in 0..g {
                z[a] += u[a] - ue[a];
            }
        }
        for a in 0..g {
            z[a] -= delta.q2[a] as f64 / 2.0;
            for c in 0..g {
                z[a] -= self.frame.b[(a, c)] * (delta.p2[c] as f64 / 2.0);
            }
        }
        let (p, q) = half_char_of(&self.frame.b, &z)?;
        Ok(HalfChar {
            p2: p.iter().map(|x| ((2.0 * x).round() as i32).rem_euclid(2)).collect(),
            q2: q.iter().map(|x| ((2.0 * x).round() as i32).rem_euclid(2)).collect(),
        })
    }

    /// Geometry after moving λ_m by `dl`, continuous with this one.
    pub fn perturbed(&self, m: usize, dl: C64) -> Result<Setup> {
        let mut lams = self.lambdas.clone();
        let old = lams[m];
        lams[m] += dl;
        let surface = match &self.frame.surface {
            Surface::Hyper(h) => {
                let mut e = h.e.clone();
                if let Some(k) = e.iter().position(|&x| (x - old).norm() < 1e-12 * (1.0 + x.norm())) {
                    e[k] += dl;
                }
                Surface::Hyper(crate::surface::Hyperelliptic::with_order(e, Some(h))?)
            }
            Surface::Rational(r) => {
                let targets: Vec<C64> =
                    r.crit.iter().map(|c| if (c.lam - old).norm() < 1e-9 * (1.0 + old.norm()) { c.lam + dl } else { c.lam }).collect();
                if targets.iter().zip(&r.crit).all(|(t, c)| *t == c.lam) {
                    Surface::Rational(r.clone())
                } else {
                    Surface::Rational(r.with_critical_values(&targets)?)
                }
            }
        };
        Setup::new(surface, &lams, self.lambda0, None, self.frame.cfg, Some(self))
    }
}

/// (p, q) with B p + q = z, reduced to half-integers in [0, 1).
fn half_char_of(b: &CMat, z: &[C64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = z.len();
    let y = DMatrix::from_fn(g, g, |i, j| b[(i, j)].im);
    let yi = y.try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let p: Vec<f64> = (0..g).map(|a| (0..g).map(|c| yi[(a, c)] * z[c].im).sum()).collect();
    let q: Vec<f64> = (0..g).map(|a| z[a].re - (0..g).map(|c| b[(a, c)].re * p[c]).sum::<f64>()).collect();
    let mut err: f64 = 0.0;
    let red = |x: f64, err: &mut f64| {
        let h = (2.0 * x).round();
        *err = err.max((2.0 * x - h).abs());
        (h / 2.0).rem_euclid(1.0)
    };
    let p: Vec<f64> = p.iter().map(|&x| red(x, &mut err)).collect();
    let q: Vec<f64> = q.iter().map(|&x| red(x, &mut err)).collect();
    if err > 1e-6 {
        return Err(Error::InconsistentBranchData(format!("spin twist is not a half period (defect {err:e})")));
    }
    Ok((p, q))
}

/// Relabelling π (old sheet j ↦ π[j]) with target_m = π∘s_m∘π^{-1} for all m.
fn match_labels(real: &PermutationRepresentation, target: &PermutationRepresentation) -> Option<Vec<usize>> {
    let n = real.n;
    if target.n != n || target.perms.len() != real.perms.len() {
        return None;
    }
    let mut pi: Vec<usize> = (0..n).collect();
    loop {
        let ok = real.perms.iter().zip(&target.perms).all(|(s, t)| (0..n).all(|j| t[pi[j]] == pi[s[j]]));
        if ok {
            return Some(pi);
        }
        // next permutation in lexicographic order
        let mut i = n.checked_sub(1)?;
        while i > 0 && pi[i - 1] >= pi[i] {
            i -= 1;
        }
        if i == 0 {
            return None;
        }
        let mut j = n - 1;
        while pi[j] <= pi[i - 1] {
            j -= 1;
        }
        pi.swap(i - 1, j);
        pi[i..].reverse();
    }
}

/// Setup plus parameters: the evaluator of Ψ.
#[derive(Debug, Clone)]
pub struct PsiSolution {
    pub setup: Setup,
    pub params: RepresentationParameters,
    pub ch: Characteristic,
    /// k_R r_R.
    pub r_eff: Vec<C64>,
    pub omega: Vec<C64>,
    pub theta_omega: C64,
}

/// Relative threshold for |θ[p,q](Ω)| below which Ω is treated as on the theta divisor.
pub const DIVISOR_THRESHOLD: f64 = 1e-10;

impl PsiSolution {
    pub fn new(setup: Setup, p: Vec<C64>, q: Vec<C64>, r: Vec<C64>) -> Result<PsiSolution> {
        let g = setup.g();
        if p.len() != g || q.len() != g || r.len() != setup.sites.len() {
            return Err(Error::Invalid("parameter dimensions do not match the covering".into()));
        }
        let r_eff: Vec<C64> = setup.cov.points.iter().zip(&r).map(|(pt, r)| r * pt.k() as f64).collect();
        let total: C64 = r_eff.iter().sum();
        let rs = r.iter().fold(1.0f64, |s, x| s.max(x.norm()));
        if total.norm() > 1e-10 * rs {
            return Err(Error::InconsistentBranchData(format!("Σ k r = {total} ≠ 0")));
        }
        let mut omega = vec![C64::new(0.0, 0.0); g];
        for (s, re) in setup.sites.iter().zip(&r_eff) {
            for a in 0..g {
                omega[a] += s.u[a] * re;
            }
        }
        let ch = Characteristic { p: p.clone(), q: q.clone() };
        let theta_omega = if g == 0 {
            C64::new(1.0, 0.0)
        } else {
            let ev = setup.frame.theta_ch(&omega, &ch, 0)?;
            if ev.value.norm() < DIVISOR_THRESHOLD * ev.scale {
                return Err(Error::ThetaDivisorHit { ratio: ev.value.norm() / ev.scale });
            }
            ev.value
        };
        let re = setup.cov.realization.as_ref().unwrap();
        let params = RepresentationParameters { p, q, r, p0: re.p0.clone(), q0: re.q0.clone() };
        Ok(PsiSolution { setup, params, ch, r_eff, omega, theta_omega })
    }

    pub fn frame(&self) -> &Frame {
        &self.setup.frame
    }

    fn sum_ell(&self, a: &KState, b: &KState) -> C64 {
        self.r_eff.iter().enumerate().map(|(i, r)| r * (a.ell[i] - b.ell[i])).sum()
    }

    /// ŝ(P,Q) in λ-charts.
    pub fn shat(&self, a: &KState, b: &KState) -> Result<C64> {
        let fr = self.frame();
        let g = fr.g();
        let (phi, t) = if g == 0 {
            (C64::new(1.0, 0.0), a.pt.y - b.pt.y)
        } else {
            let d: Vec<C64> = a.pt.u.iter().zip(&b.pt.u).map(|(x, y)| x - y).collect();
            let z: Vec<C64> = d.iter().zip(&self.omega).map(|(x, o)| x + o).collect();
            (fr.theta_ch(&z, &self.ch, 0)?.value / self.theta_omega, fr.theta_star(&d, 0)?.value)
        };
        Ok(phi * a.h * b.h / t * self.sum_ell(a, b).exp())
    }

    /// ψ(P,Q) = ŝ(P,Q)(λ_P − λ_Q).
    pub fn psi(&self, a: &KState, b: &KState) -> Result<C64> {
        if a.pt.lam == b.pt.lam {
            let same = a.pt.y == b.pt.y && a.pt.u.iter().zip(&b.pt.u).all(|(x, y)| (x - y).norm() < 1e-13);
            return Ok(if same { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        }
        Ok(self.shat(a, b)? * (a.pt.lam - b.pt.lam))
    }

    /// ∂_λ ln ψ(P,Q) with respect to the projection of P.
    pub fn dlog_psi(&self, a: &KState, b: &KState) -> Result<C64> {
        let fr = self.frame();
        let g = fr.g();
        let mut s = C64::new(1.0, 0.0) / (a.pt.lam - b.pt.lam) + fr.dlog_h(&a.pt);
        match &fr.surface {
            Surface::Rational(r) => {
                s -= C64::new(1.0, 0.0) / (r.df(a.pt.y) * (a.pt.y - b.pt.y));
            }
            Surface::Hyper(_) => {
                let v = fr.surface.v(&a.pt);
                let d: Vec<C64> = a.pt.u.iter().zip(&b.pt.u).map(|(x, y)| x - y).collect();
                let z: Vec<C64> = d.iter().zip(&self.omega).map(|(x, o)| x + o).collect();
                let e1 = fr.theta_ch(&z, &self.ch, 1)?;
                let e2 = fr.theta_star(&d, 1)?;
                for al in 0..g {
                    s += (e1.grad[al] / e1.value - e2.grad[al] / e2.value) * v[al];
                }
            }
        }
        for (i, site) in self.setup.sites.iter().enumerate() {
            s += self.r_eff[i] * fr.dlog_anchor(&a.pt, site)?;
        }
        Ok(s)
    }

    /// States over λ reached along `path` from each sheet over λ₀.
    pub fn states_along(&self, path: &Path) -> Result<Vec<KState>> {
        let s = &self.setup;
        s.canon.iter().map(|c| s.frame.walk(c, &s.sites, path, &s.lambdas)).collect()
    }

    /// Ψ from states over a common λ: Ψ_{kj} = ψ(X_j, λ₀^{(k)}).
    pub fn psi_from_states(&self, xs: &[KState]) -> Result<CMat> {
        let n = xs.len();
        let mut m = CMat::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                m[(k, j)] = self.psi(&xs[j], &self.setup.canon[k])?;
            }
        }
        Ok(m)
    }

    /// (Ψ, Ψ_λ) from states over a common λ.
    pub fn psi_and_derivative(&self, xs: &[KState]) -> Result<(CMat, CMat)> {
        let n = xs.len();
        let mut m = CMat::zeros(n, n);
        let mut d = CMat::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let v = self.psi(&xs[j], &self.setup.canon[k])?;
                m[(k, j)] = v;
                d[(k, j)] = v * self.dlog_psi(&xs[j], &self.setup.canon[k])?;
            }
        }
        Ok((m, d))
    }

    /// Ψ⁻¹ through the two-point relation: (Ψ⁻¹)_{jk} = ψ(λ₀^{(k)}, X_j).
    pub fn psi_inverse_from_states(&self, xs: &[KState]) -> Result<CMat> {
        let n = xs.len();
        let mut m = CMat::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                m[(j, k)] = self.psi(&self.setup.canon[k], &xs[j])?;
            }
        }
        Ok(m)
    }

    pub fn psi_eval(&self, lam: C64) -> Result<CMat> {
        let xs = self.states_along(&self.setup.default_path(lam))?;
        self.psi_from_states(&xs)
    }

    pub fn psi_inverse(&self, lam: C64) -> Result<CMat> {
        let xs = self.states_along(&self.setup.default_path(lam))?;
        self.psi_inverse_from_states(&xs)
    }

    /// M̂_m = Ψ(λ*)⁻¹ Ψ_cont(λ*) for λ* halfway along the ray of loop m.
    pub fn monodromy_by_continuation(&self, m: usize) -> Result<CMat> {
        let s = &self.setup;
        let (a, b) = match s.loops[m][0] {
            Piece::Seg(a, b) => (a, b),
            _ => unreachable!(),
        };
        let star = (a + b) * 0.5;
        let to_star = vec![Piece::Seg(a, star)];
        let lp: Path = vec![Piece::Seg(star, b), s.loops[m][1], Piece::Seg(b, star)];
        self.continuation_matrix(&to_star, &lp)
    }

    /// Ψ(λ*)⁻¹Ψ_cont(λ*) for an arbitrary loop based at the end of `to_base`.
    pub fn continuation_matrix(&self, to_base: &Path, lp: &Path) -> Result<CMat> {
        let s = &self.setup;
        let xs = self.states_along(to_base)?;
        let ys: Vec<KState> = xs.iter().map(|x| s.frame.walk(x, &s.sites, lp, &s.lambdas)).collect::<Result<_>>()?;
        let p0 = self.psi_from_states(&xs)?;
        let p1 = self.psi_from_states(&ys)?;
        Ok(linalg::inverse(&p0)? * p1)
    }

    /// Closed-form det Ψ(λ) = exp Σ_j Σ_R k_R r_R (ℓ_R(λ^{(j)}) − ℓ_R(λ₀^{(j)})).
    pub fn det_closed_form(&self, xs: &[KState]) -> C64 {
        xs.iter().zip(&self.setup.canon).map(|(x, c)| self.sum_ell(x, c)).sum::<C64>().exp()
    }

    /// Exponents t_m^{(j)} predicted at λ_m, grouped by marked point.
    pub fn exponents(&self, m: usize) -> Vec<C64> {
        let mut out = Vec::new();
        for (pt, r) in self.setup.cov.points.iter().zip(&self.params.r) {
            if pt.m != m {
                continue;
            }
            let k = pt.k();
            if k == 1 {
                out.push(*r);
            } else {
                for j in 1..=k {
                    out.push(r - 0.5 + (j as f64 - 0.5) / k as f64);
                }
            }
        }
        out
    }
}

/// Exponent data at λ_m: predicted exponents, and eigenvalues of log M̂/2πi
/// matched to them modulo 1 (max mismatch returned).
#[derive(Debug, Clone)]
pub struct ExponentData {
    pub predicted: Vec<C64>,
    pub from_monodromy: Vec<C64>,
    pub mismatch_mod1: f64,
    /// Connection matrix C with M = C^{-1} e^{2πiT} C (T in the order of `predicted`).
    pub connection: Option<CMat>,
    pub connection_residual: f64,
}

pub fn local_exponents(sol: &PsiSolution, m: usize) -> Result<ExponentData> {
    let mh = sol.monodromy_by_continuation(m)?;
    let predicted = sol.exponents(m);
    let eig = linalg::eigenvalues(&mh);
    let logs: Vec<C64> = eig.iter().map(|z| z.ln() / TWO_PI_I).collect();
    let dist_mod1 = |a: C64, b: C64| {
        let d = a - b;
        C64::new(d.re - d.re.round(), d.im).norm()
    };
    // greedy matching
    let mut used = vec![false; logs.len()];
    let mut worst: f64 = 0.0;
    let mut matched = Vec::with_capacity(predicted.len());
    for &t in &predicted {
        let (i, d) = logs
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, &l)| (i, dist_mod1(l, t)))
            .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        if i == usize::MAX {
            worst = f64::INFINITY;
            break;
        }
        used[i] = true;
        worst = worst.max(d);
        matched.push(logs[i]);
    }
    let (connection, connection_residual) = match linalg::eigen_decomposition(&mh) {
        Some((vals, cm)) => {
            let ci = linalg::inverse(&cm)?;
            let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vals));
            let back = &cm * d * &ci;
            (Some(ci), linalg::dist(&back, &mh))
        }
        None => (None, f64::INFINITY),
    };
    Ok(ExponentData { predicted, from_monodromy: matched, mismatch_mod1: worst, connection, connection_residual })
}

/// Indices of the singular points sorted by arg(λ − λ₀): the order in which
/// the ray loops satisfy l_M···l₁ = 1.
pub fn angular_order(lambdas: &[C64], lambda0: C64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..lambdas.len()).collect();
    idx.sort_by(|&a, &b| (lambdas[a] - lambda0).arg().partial_cmp(&(lambdas[b] - lambda0).arg()).unwrap());
    idx
}
