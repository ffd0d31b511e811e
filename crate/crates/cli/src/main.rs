use clap::{Args, Parser, Subcommand};
use rhk::config::Config;
use rhk::io::{self, cx_json, cxs_json, Problem};
use rhk::isomono;
use rhk::monodromy;
use rhk::rhp::PsiSolution;
use rhk::verify::{self, mat_json, Check};
use rhk::{Error, C64};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;

const SCHEMA: &str = "rhk/1";

/// Riemann-Hilbert problems with quasi-permutation monodromy: solve, verify,
/// residues, tau function and covering data from a JSON problem file.
#[derive(Parser)]
#[command(name = "rhk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ψ on the requested grid plus the monodromy comparison report.
    Solve(Common),
    /// Run the full invariant suite.
    Verify(Common),
    /// Residues A_m, Hamiltonians H_m and the Schlesinger residual.
    Residues(Common),
    /// ln τ in closed form, H_m and the derivative checks.
    Tau(Common),
    /// Sheets, genus, passport and intersection indices of the covering.
    CoveringInfo(Common),
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Configuration file (JSON); overrides the problem's `config` block.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Step for λ-derivatives by finite differences.
    #[arg(long)]
    h: Option<f64>,
    /// One tolerance for every check.
    #[arg(long)]
    tol: Option<f64>,
}

/// Exit codes: 0 all checks pass, 1 a check failed, 2 malformed or invalid input,
/// 3 theta divisor (Malgrange flag), 4 pipeline error.
enum Outcome {
    Pass,
    Fail,
    Divisor,
}

fn module_of(e: &Error) -> &'static str {
    use Error::*;
    match e {
        RejectsIdentityProductViolation { .. } | SimultaneouslyDiagonal | NotQuasiPermutation { .. } | SingularSystem { .. } => "monodromy",
        RejectsDisconnected | InconsistentBranchData(_) | UnsupportedTopology(_) | GeneratorOrder => "covering",
        NearDegenerateCurve { .. } | PathThroughBranchPoint(_) | StepSizeUnderflow(_) | ContinuationDrift(_) => "surface",
        NotPositiveDefinite | TruncationOverflow { .. } | NoneFound | ThetaDivisorHit { .. } => "theta",
        SingularCharacteristic | ExtrapolationUnstable => "kernels",
        PathThroughSingularity(_) => "rhp",
        FiniteDifferenceUnstable(_) | ContourTooClose | UnsupportedGeometry(_) => "isomono",
        Malformed { .. } | Invalid(_) => "input",
    }
}

fn read(path: &PathBuf, flag: &str) -> Result<Vec<u8>, Error> {
    std::fs::read(path).map_err(|e| Error::Malformed { path: flag.to_string(), msg: format!("{}: {e}", path.display()) })
}

fn effective_config(args: &Common, problem: &Problem) -> Result<Config, Error> {
    let mut cfg = match &args.config {
        Some(p) => io::parse_config(&read(p, "--config")?)?,
        None => problem.config.unwrap_or_default(),
    };
    if let Some(h) = args.h {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Malformed { path: "--h".into(), msg: "must lie in (0, 1)".into() });
        }
        cfg.fd_step = Some(h);
    }
    if let Some(t) = args.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Malformed { path: "--tol".into(), msg: "must be positive".into() });
        }
        let tl = &mut cfg.tol;
        for x in [
            &mut tl.normalization,
            &mut tl.determinant,
            &mut tl.monodromy,
            &mut tl.product,
            &mut tl.exponents,
            &mut tl.residue_exponents,
            &mut tl.schlesinger,
            &mut tl.tau,
            &mut tl.thomae,
            &mut tl.fay,
            &mut tl.szego_bergmann,
            &mut tl.heat,
            &mut tl.quasi_periodicity,
            &mut tl.rauch,
            &mut tl.anti_holomorphic,
            &mut tl.szego_variation,
            &mut tl.compat,
            &mut tl.sheet_sum,
            &mut tl.prime_slope,
        ] {
            *x = t;
        }
    }
    Ok(cfg)
}

fn checks_json(checks: &[Check]) -> Value {
    serde_json::to_value(checks).unwrap()
}

fn params_json(sol: &PsiSolution) -> Value {
    json!({
        "p": cxs_json(&sol.params.p),
        "q": cxs_json(&sol.params.q),
        "r": cxs_json(&sol.params.r),
    })
}

fn malgrange_json(rep: &isomono::MalgrangeReport) -> Value {
    json!({
        "samples": rep.samples.iter().map(|(s, r)| json!([s, r])).collect::<Vec<_>>(),
        "flags": rep.flags.iter().map(|f| json!({
            "s": f.s,
            "theta_ratio": f.theta_ratio,
            "max_residue_norm": f.max_residue_norm,
        })).collect::<Vec<_>>(),
    })
}

/// Run the divisor probe along the problem's path, if it has one.
fn probe(problem: &Problem, sol: &PsiSolution) -> Result<Option<isomono::MalgrangeReport>, Error> {
    let Some(mg) = &problem.malgrange else { return Ok(None) };
    let base = sol.setup.lambdas.clone();
    for (i, (m, _)) in mg.moves.iter().enumerate() {
        if *m >= base.len() {
            return Err(Error::Malformed { path: format!("malgrange.moves[{i}].index"), msg: format!("only {} singular points", base.len()) });
        }
    }
    let moves = mg.moves.clone();
    let path = move |s: f64| -> Vec<C64> {
        let mut l = base.clone();
        for &(m, to) in &moves {
            l[m] = base[m] + (to - base[m]) * s;
        }
        l
    };
    isomono::malgrange_probe(sol, path, mg.samples, mg.neighbourhood).map(Some)
}

fn solve_report(problem: &Problem, sol: &PsiSolution, cfg: &Config) -> Result<(Value, Vec<Check>), Error> {
    let s = &sol.setup;
    let grid = if problem.grid.is_empty() { verify::default_grid(s) } else { problem.grid.clone() };
    let mut points = Vec::with_capacity(grid.len());
    for &lam in &grid {
        let psi = sol.psi_eval(lam)?;
        points.push(json!({ "lambda": cx_json(lam), "psi": mat_json(&psi) }));
    }
    let rep = monodromy::monodromy_from_parameters(&sol.params, &s.cov)?;
    let mut mons = Vec::new();
    for (m, q) in rep.matrices.iter().enumerate() {
        let f = q.to_dense();
        let e = sol.monodromy_by_continuation(m)?;
        mons.push(json!({
            "index": m + 1,
            "lambda": cx_json(s.lambdas[m]),
            "formula": mat_json(&f),
            "continuation": mat_json(&e),
            "residual": rhk::linalg::dist(&e, &f),
        }));
    }
    let checks = verify::rh_checks(sol, &problem.grid, cfg);
    Ok((json!({ "grid": points, "monodromy": mons, "representation": io::representation_json(&rep) }), checks))
}

fn residues_report(sol: &PsiSolution, cfg: &Config) -> Result<(Value, Vec<Check>), Error> {
    let (data, checks) = verify::residue_checks(sol, cfg);
    let hs = isomono::hamiltonians(sol);
    let body = match data {
        Some(d) => json!({
            "lambdas": cxs_json(&d.lambdas),
            "residues": d.a.iter().map(mat_json).collect::<Vec<_>>(),
            "hamiltonians": hs.map(|h| cxs_json(&h)).unwrap_or(Value::Null),
        }),
        None => json!({ "residues": Value::Null }),
    };
    Ok((body, checks))
}

fn tau_report(sol: &PsiSolution, cfg: &Config) -> Result<(Value, Vec<Check>), Error> {
    let t = isomono::tau_closed_form(sol)?;
    let hs = isomono::hamiltonians(sol)?;
    let body = json!({
        "log_tau": t.log_tau.as_ref().map(|x| cx_json(x.value())),
        "log_f": t.log_f.as_ref().map(|x| cx_json(x.value())),
        "f_available": t.log_f.is_some(),
        "theta_factor": cx_json(t.theta_factor),
        "r_mn": mat_json(&t.r_mn),
        "hamiltonians": cxs_json(&hs),
    });
    Ok((body, verify::tau_checks(sol, cfg)))
}

fn covering_report(problem: &Problem, cfg: &Config) -> Result<Value, Error> {
    let setup = problem.setup(cfg)?;
    let mut body = json!({
        "covering": serde_json::to_value(io::covering_snapshot(&setup.cov)).unwrap(),
        "period_matrix": if setup.g() > 0 { mat_json(&setup.frame.b) } else { Value::Null },
    });
    if let io::ProblemForm::Representation(rep) = &problem.form {
        let v = monodromy::validate_representation(rep, cfg.tol.product)?;
        body["validation"] = serde_json::to_value(v).unwrap();
        let rec = monodromy::parameters_from_monodromy(rep, &setup.cov)?;
        body["recovered"] = json!({
            "p": cxs_json(&rec.params.p),
            "q": cxs_json(&rec.params.q),
            "r": cxs_json(&rec.params.r),
            "shifts": rec.shifts,
            "gauge": cxs_json(&rec.gauge),
            "residual": rec.residual,
        });
    }
    Ok(body)
}

fn run(cmd: &Command, args: &Common) -> Result<(Value, Outcome), Error> {
    let problem = io::parse_problem(&read(&args.spec, "--spec")?)?;
    let cfg = effective_config(args, &problem)?;
    let mut report = json!({
        "schema": SCHEMA,
        "command": match cmd {
            Command::Solve(_) => "solve",
            Command::Verify(_) => "verify",
            Command::Residues(_) => "residues",
            Command::Tau(_) => "tau",
            Command::CoveringInfo(_) => "covering-info",
        },
        "config": serde_json::to_value(cfg).unwrap(),
    });
    if let Command::CoveringInfo(_) = cmd {
        report["result"] = covering_report(&problem, &cfg)?;
        report["pass"] = json!(true);
        return Ok((report, Outcome::Pass));
    }
    if let io::ProblemForm::Representation(rep) = &problem.form {
        monodromy::validate_representation(rep, cfg.tol.product)?;
    }
    let (sol, recovered) = match problem.solve(&cfg) {
        Ok(x) => x,
        Err(Error::ThetaDivisorHit { ratio }) => {
            report["malgrange"] = json!({ "flags": [{ "s": 0.0, "theta_ratio": ratio, "max_residue_norm": null }] });
            report["error"] = json!(Error::ThetaDivisorHit { ratio }.to_string());
            report["pass"] = json!(false);
            return Ok((report, Outcome::Divisor));
        }
        Err(e) => return Err(e),
    };
    report["lambdas"] = cxs_json(&sol.setup.lambdas);
    report["lambda0"] = cx_json(sol.setup.lambda0);
    report["parameters"] = params_json(&sol);
    if let Some(rec) = &recovered {
        report["recovered"] = json!({ "shifts": rec.shifts, "gauge": cxs_json(&rec.gauge), "residual": rec.residual });
    }
    let (body, checks) = match cmd {
        Command::Solve(_) => solve_report(&problem, &sol, &cfg)?,
        Command::Verify(_) => (Value::Null, verify::full_suite(&sol, &problem.grid, &cfg)),
        Command::Residues(_) => residues_report(&sol, &cfg)?,
        Command::Tau(_) => tau_report(&sol, &cfg)?,
        Command::CoveringInfo(_) => unreachable!(),
    };
    if !body.is_null() {
        report["result"] = body;
    }
    let mut pass = verify::all_pass(&checks);
    report["checks"] = checks_json(&checks);
    let mut outcome = if pass { Outcome::Pass } else { Outcome::Fail };
    if matches!(cmd, Command::Solve(_) | Command::Verify(_)) {
        if let Some(mg) = probe(&problem, &sol)? {
            if !mg.flags.is_empty() {
                pass = false;
                outcome = Outcome::Divisor;
            }
            report["malgrange"] = malgrange_json(&mg);
        }
    }
    report["pass"] = json!(pass);
    Ok((report, outcome))
}

fn emit(report: &Value, out: &Option<PathBuf>) -> Result<(), String> {
    let text = serde_json::to_string_pretty(report).unwrap() + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Solve(a) | Command::Verify(a) | Command::Residues(a) | Command::Tau(a) | Command::CoveringInfo(a) => a,
    };
    match run(&cli.command, args) {
        Ok((report, outcome)) => {
            if let Err(e) = emit(&report, &args.out) {
                eprintln!("error: {e}");
                return ExitCode::from(4);
            }
            match outcome {
                Outcome::Pass => ExitCode::SUCCESS,
                Outcome::Fail => {
                    let failed: Vec<&str> = report["checks"].as_array().into_iter().flatten().filter(|c| c["pass"] == false).filter_map(|c| c["name"].as_str()).collect();
                    eprintln!("failed checks: {}", failed.join(", "));
                    ExitCode::from(1)
                }
                Outcome::Divisor => {
                    eprintln!("theta divisor: Ω on θ[p,q] = 0, see the `malgrange` field of the report");
                    ExitCode::from(3)
                }
            }
        }
        Err(e @ (Error::Malformed { .. } | Error::Invalid(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", module_of(&e));
            ExitCode::from(4)
        }
    }
}
