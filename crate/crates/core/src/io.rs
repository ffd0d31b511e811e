//! JSON input: problem specifications, surface models, monodromy representations
//! and configuration files. Errors carry the path of the offending field.
//!
//! Complex numbers are `[re, im]` (a bare number is read as real). Permutation
//! supports are 1-based: `support[j] = s(j)` with (P_s)_{j,s(j)} = 1.

use crate::config::Config;
use crate::covering::BranchedCovering;
use crate::monodromy::{self, MonodromyRepresentation, QuasiPermMatrix, Recovered};
use crate::rhp::{angular_order, PsiSolution, Setup};
use crate::surface::{Hyperelliptic, Rational, Surface};
use crate::{Error, Result, C64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy)]
struct Cx(C64);

impl Cx {
    fn get(self) -> C64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Cx {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> serde::de::Visitor<'de> for V {
            type Value = Cx;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or a pair [re, im]")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Cx, E> {
                Ok(Cx(C64::new(v, 0.0)))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Cx, E> {
                Ok(Cx(C64::new(v as f64, 0.0)))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Cx, E> {
                Ok(Cx(C64::new(v as f64, 0.0)))
            }
            fn visit_seq<A: serde::de::SeqAccess<'de>>(self, mut a: A) -> std::result::Result<Cx, A::Error> {
                use serde::de::Error as _;
                let re: f64 = a.next_element()?.ok_or_else(|| A::Error::invalid_length(0, &self))?;
                let im: f64 = a.next_element()?.ok_or_else(|| A::Error::invalid_length(1, &self))?;
                if a.next_element::<serde::de::IgnoredAny>()?.is_some() {
                    return Err(A::Error::invalid_length(3, &self));
                }
                Ok(Cx(C64::new(re, im)))
            }
        }
        d.deserialize_any(V)
    }
}

fn cxs(v: &[Cx]) -> Vec<C64> {
    v.iter().map(|c| c.get()).collect()
}

pub fn cx_json(z: C64) -> Value {
    json!([z.re, z.im])
}

pub fn cxs_json(z: &[C64]) -> Value {
    Value::Array(z.iter().map(|&c| cx_json(c)).collect())
}

fn malformed(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Malformed { path: path.into(), msg: msg.into() }
}

fn decode<T: DeserializeOwned>(data: &[u8]) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(data);
    let out: T = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        malformed(if path == "." || path == "?" { "$".to_string() } else { path }, e.into_inner().to_string())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixJson {
    support: Vec<usize>,
    entries: Vec<Cx>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RepresentationJson {
    #[serde(rename = "N")]
    n: usize,
    lambdas: Vec<Cx>,
    lambda0: Cx,
    matrices: Vec<MatrixJson>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SurfaceKind {
    Hyperelliptic,
    Elliptic,
    Rational,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceJson {
    #[serde(rename = "type")]
    kind: SurfaceKind,
    branch_points: Option<Vec<Cx>>,
    numerator: Option<Vec<Cx>>,
    denominator: Option<Vec<Cx>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsJson {
    #[serde(default)]
    p: Vec<Cx>,
    #[serde(default)]
    q: Vec<Cx>,
    r: Option<Vec<Cx>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MoveJson {
    index: usize,
    to: Cx,
}

fn default_samples() -> usize {
    40
}

fn default_nbhd() -> f64 {
    1e-7
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MalgrangeJson {
    moves: Vec<MoveJson>,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default = "default_nbhd")]
    neighbourhood: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemJson {
    surface: SurfaceJson,
    lambda0: Option<Cx>,
    #[serde(default)]
    marked_points: Vec<Cx>,
    parameters: Option<ParamsJson>,
    representation: Option<RepresentationJson>,
    #[serde(default)]
    grid: Vec<Cx>,
    malgrange: Option<MalgrangeJson>,
    config: Option<Config>,
}

/// How the monodromy is prescribed.
#[derive(Debug, Clone)]
pub enum ProblemForm {
    /// (p, q) and one r per marked point of the covering, in covering order.
    Parameters { p: Vec<C64>, q: Vec<C64>, r: Option<Vec<C64>> },
    Representation(MonodromyRepresentation),
}

/// Straight-line motion of some singular points, s ∈ [0, 1].
#[derive(Debug, Clone)]
pub struct MalgrangeSpec {
    /// (index into the problem's singular points, target position).
    pub moves: Vec<(usize, C64)>,
    pub samples: usize,
    pub neighbourhood: f64,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub surface: Surface,
    pub lambda0: C64,
    pub marked_points: Vec<C64>,
    pub form: ProblemForm,
    pub grid: Vec<C64>,
    pub malgrange: Option<MalgrangeSpec>,
    pub config: Option<Config>,
}

pub fn parse_config(data: &[u8]) -> Result<Config> {
    let c: Config = decode(data)?;
    validate_config(&c, "")?;
    Ok(c)
}

fn validate_config(c: &Config, prefix: &str) -> Result<()> {
    if !(c.theta.tol > 0.0 && c.theta.tol < 1.0) {
        return Err(malformed(format!("{prefix}theta.tol"), "must lie in (0, 1)"));
    }
    if !(c.theta.radius_cap >= 1.0 && c.theta.radius_cap.is_finite()) {
        return Err(malformed(format!("{prefix}theta.radius_cap"), "must be a finite number ≥ 1"));
    }
    if let Some(h) = c.fd_step {
        if !(h > 0.0 && h < 1.0) {
            return Err(malformed(format!("{prefix}fd_step"), "must lie in (0, 1)"));
        }
    }
    if !(c.rauch_step > 0.0 && c.rauch_step < 1.0) {
        return Err(malformed(format!("{prefix}rauch_step"), "must lie in (0, 1)"));
    }
    Ok(())
}

fn surface_from(s: &SurfaceJson, path: &str) -> Result<Surface> {
    let finite = |v: &[Cx], field: &str| -> Result<Vec<C64>> {
        let z = cxs(v);
        if let Some(i) = z.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(malformed(format!("{path}{field}[{i}]"), "not finite"));
        }
        Ok(z)
    };
    let wrap = |e: Error, field: &str| match e {
        Error::Malformed { .. } => e,
        other => malformed(format!("{path}{field}"), other.to_string()),
    };
    let need = |v: &Option<Vec<Cx>>, field: &str| -> Result<Vec<C64>> {
        match v {
            Some(v) => finite(v, field),
            None => Err(malformed(format!("{path}{field}"), "missing field")),
        }
    };
    let refuse = |v: &Option<Vec<Cx>>, field: &str| -> Result<()> {
        match v {
            Some(_) => Err(malformed(format!("{path}{field}"), "not used by this surface type")),
            None => Ok(()),
        }
    };
    match s.kind {
        SurfaceKind::Hyperelliptic | SurfaceKind::Elliptic => {
            refuse(&s.numerator, "numerator")?;
            refuse(&s.denominator, "denominator")?;
            let e = need(&s.branch_points, "branch_points")?;
            if matches!(s.kind, SurfaceKind::Elliptic) && e.len() != 4 {
                return Err(malformed(format!("{path}branch_points"), "an elliptic model takes four branch points"));
            }
            Ok(Surface::Hyper(Hyperelliptic::new(&e).map_err(|x| wrap(x, "branch_points"))?))
        }
        SurfaceKind::Rational => {
            refuse(&s.branch_points, "branch_points")?;
            let a = need(&s.numerator, "numerator")?;
            let b = need(&s.denominator, "denominator")?;
            Ok(Surface::Rational(Rational::new(&a, &b).map_err(|x| wrap(x, "numerator"))?))
        }
    }
}

fn representation_from(r: &RepresentationJson, path: &str) -> Result<MonodromyRepresentation> {
    let mut mats = Vec::with_capacity(r.matrices.len());
    for (m, a) in r.matrices.iter().enumerate() {
        let here = format!("{path}matrices[{m}]");
        if a.support.len() != r.n {
            return Err(malformed(format!("{here}.support"), format!("expected {} entries", r.n)));
        }
        if a.entries.len() != r.n {
            return Err(malformed(format!("{here}.entries"), format!("expected {} entries", r.n)));
        }
        let mut sup = Vec::with_capacity(r.n);
        for (j, &s) in a.support.iter().enumerate() {
            if s == 0 || s > r.n {
                return Err(malformed(format!("{here}.support[{j}]"), format!("sheet index must lie in 1..={}", r.n)));
            }
            sup.push(s - 1);
        }
        let ent = cxs(&a.entries);
        if let Some(j) = ent.iter().position(|c| !(c.norm() > 0.0 && c.norm().is_finite())) {
            return Err(malformed(format!("{here}.entries[{j}]"), "entries must be finite and nonzero"));
        }
        let q = QuasiPermMatrix::new(sup, ent).map_err(|e| malformed(format!("{here}.support"), e.to_string()))?;
        mats.push(q);
    }
    if r.lambdas.len() != mats.len() {
        return Err(malformed(format!("{path}lambdas"), "one singular point per matrix required"));
    }
    MonodromyRepresentation::new(r.n, cxs(&r.lambdas), r.lambda0.get(), mats).map_err(|e| malformed(format!("{path}lambdas"), e.to_string()))
}

pub fn parse_representation(data: &[u8]) -> Result<MonodromyRepresentation> {
    let r: RepresentationJson = decode(data)?;
    representation_from(&r, "")
}

pub fn parse_surface(data: &[u8]) -> Result<Surface> {
    let s: SurfaceJson = decode(data)?;
    surface_from(&s, "")
}

pub fn parse_problem(data: &[u8]) -> Result<Problem> {
    let p: ProblemJson = decode(data)?;
    let surface = surface_from(&p.surface, "surface.")?;
    let form = match (&p.parameters, &p.representation) {
        (Some(_), Some(_)) => return Err(malformed("$", "give either `parameters` or `representation`, not both")),
        (None, None) => return Err(malformed("$", "missing `parameters` or `representation`")),
        (Some(x), None) => {
            let g = surface.genus();
            if x.p.len() != g {
                return Err(malformed("parameters.p", format!("expected {g} entries for genus {g}")));
            }
            if x.q.len() != g {
                return Err(malformed("parameters.q", format!("expected {g} entries for genus {g}")));
            }
            ProblemForm::Parameters { p: cxs(&x.p), q: cxs(&x.q), r: x.r.as_deref().map(cxs) }
        }
        (None, Some(r)) => ProblemForm::Representation(representation_from(r, "representation.")?),
    };
    let lambda0 = match (&form, p.lambda0) {
        (ProblemForm::Representation(r), None) => r.lambda0,
        (ProblemForm::Representation(r), Some(l)) => {
            if (l.get() - r.lambda0).norm() > 0.0 {
                return Err(malformed("lambda0", "differs from representation.lambda0"));
            }
            r.lambda0
        }
        (_, Some(l)) => l.get(),
        (_, None) => return Err(malformed("lambda0", "missing field")),
    };
    if !(lambda0.re.is_finite() && lambda0.im.is_finite()) {
        return Err(malformed("lambda0", "not finite"));
    }
    let marked_points = cxs(&p.marked_points);
    let grid = cxs(&p.grid);
    if let Some(i) = grid.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(malformed(format!("grid[{i}]"), "not finite"));
    }
    let malgrange = match &p.malgrange {
        None => None,
        Some(mj) => {
            let mut moves = Vec::with_capacity(mj.moves.len());
            for (i, mv) in mj.moves.iter().enumerate() {
                if mv.index == 0 {
                    return Err(malformed(format!("malgrange.moves[{i}].index"), "singular points are numbered from 1"));
                }
                moves.push((mv.index - 1, mv.to.get()));
            }
            if mj.samples < 2 || mj.samples > 10_000 {
                return Err(malformed("malgrange.samples", "must lie in 2..=10000"));
            }
            if !(mj.neighbourhood > 0.0 && mj.neighbourhood < 0.5) {
                return Err(malformed("malgrange.neighbourhood", "must lie in (0, 0.5)"));
            }
            Some(MalgrangeSpec { moves, samples: mj.samples, neighbourhood: mj.neighbourhood })
        }
    };
    if let Some(c) = &p.config {
        validate_config(c, "config.")?;
    }
    Ok(Problem { surface, lambda0, marked_points, form, grid, malgrange, config: p.config })
}

impl Problem {
    /// Singular points in generator order: given by the representation, or the
    /// branch values and extra marked points ordered by angle around λ₀.
    pub fn lambdas(&self) -> Vec<C64> {
        match &self.form {
            ProblemForm::Representation(r) => r.lambdas.clone(),
            ProblemForm::Parameters { .. } => {
                let mut l = self.surface.branch_values();
                l.extend(self.marked_points.iter().copied());
                angular_order(&l, self.lambda0).into_iter().map(|i| l[i]).collect()
            }
        }
    }

    pub fn setup(&self, cfg: &Config) -> Result<Setup> {
        let lambdas = self.lambdas();
        let perm = match &self.form {
            ProblemForm::Representation(r) => Some(monodromy::project_to_permutation(r)),
            _ => None,
        };
        Setup::new(self.surface.clone(), &lambdas, self.lambda0, perm.as_ref(), cfg.theta, None)
    }

    /// The solution, with the recovered parameters when the monodromy was given
    /// as matrices.
    pub fn solve(&self, cfg: &Config) -> Result<(PsiSolution, Option<Recovered>)> {
        let setup = self.setup(cfg)?;
        match &self.form {
            ProblemForm::Parameters { p, q, r } => {
                let np = setup.sites.len();
                let r = match r {
                    Some(r) if r.len() != np => {
                        return Err(malformed("parameters.r", format!("expected one value per marked point ({np})")));
                    }
                    Some(r) => r.clone(),
                    None => vec![C64::new(0.0, 0.0); np],
                };
                Ok((PsiSolution::new(setup, p.clone(), q.clone(), r)?, None))
            }
            ProblemForm::Representation(rep) => {
                let rec = monodromy::parameters_from_monodromy(rep, &setup.cov)?;
                let pr = rec.params.clone();
                Ok((PsiSolution::new(setup, pr.p, pr.q, pr.r)?, Some(rec)))
            }
        }
    }
}

pub fn representation_json(rep: &MonodromyRepresentation) -> Value {
    json!({
        "N": rep.n,
        "lambdas": cxs_json(&rep.lambdas),
        "lambda0": cx_json(rep.lambda0),
        "matrices": rep.matrices.iter().map(|m| json!({
            "support": m.support.iter().map(|s| s + 1).collect::<Vec<_>>(),
            "entries": cxs_json(&m.entries),
        })).collect::<Vec<_>>(),
    })
}

/// Snapshot of the covering: sheets, genus, passport, marked points (1-based
/// sheets) and, when realised, the intersection-index tables.
#[derive(Debug, Clone, Serialize)]
pub struct CoveringSnapshot {
    pub sheets: usize,
    pub genus: usize,
    pub passport: Vec<Vec<usize>>,
    pub lambdas: Vec<[f64; 2]>,
    pub lambda0: [f64; 2],
    /// support of each generator, 1-based.
    pub permutations: Vec<Vec<usize>>,
    /// (singular point, sheets glued there), both 1-based.
    pub marked_points: Vec<(usize, Vec<usize>)>,
    pub realization: Option<crate::covering::Realization>,
}

pub fn covering_snapshot(cov: &BranchedCovering) -> CoveringSnapshot {
    CoveringSnapshot {
        sheets: cov.perm.n,
        genus: cov.genus,
        passport: cov.passport.clone(),
        lambdas: cov.lambdas.iter().map(|z| [z.re, z.im]).collect(),
        lambda0: [cov.lambda0.re, cov.lambda0.im],
        permutations: cov.perm.perms.iter().map(|p| p.iter().map(|s| s + 1).collect()).collect(),
        marked_points: cov.points.iter().map(|p| (p.m + 1, p.sheets.iter().map(|s| s + 1).collect())).collect(),
        realization: cov.realization.clone(),
    }
}
