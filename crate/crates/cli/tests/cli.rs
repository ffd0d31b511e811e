use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn rhk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhk")).args(args).output().expect("run rhk")
}

fn run_json(args: &[&str]) -> (i32, Value) {
    let out = rhk(args);
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), report)
}

fn spec(name: &str) -> String {
    problem(name).to_string_lossy().into_owned()
}

fn failed(report: &Value) -> Vec<String> {
    report["checks"].as_array().unwrap().iter().filter(|c| c["pass"] != true).map(|c| c.to_string()).collect()
}

#[test]
fn verify_genus1_passes() {
    let (code, r) = run_json(&["verify", "--spec", &spec("genus1.json")]);
    assert_eq!(code, 0, "{:?}", failed(&r));
    assert_eq!(r["schema"], "rhk/1");
    assert_eq!(r["pass"], true);
    assert_eq!(r["config"]["tol"]["schlesinger"], 1e-5);
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for n in ["normalization", "monodromy", "schlesinger", "tau_closed_form", "fay", "heat", "rauch"] {
        assert!(names.contains(&n), "missing {n}");
    }
    for c in r["checks"].as_array().unwrap() {
        assert!(c["residual"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap());
    }
}

#[test]
fn tau_and_residues_on_rational_covering() {
    let (code, r) = run_json(&["tau", "--spec", &spec("rational3.json")]);
    assert_eq!(code, 0, "{:?}", failed(&r));
    assert_eq!(r["result"]["f_available"], true);
    assert_eq!(r["result"]["hamiltonians"].as_array().unwrap().len(), 4);
    let (code, r) = run_json(&["residues", "--spec", &spec("rational3.json")]);
    assert_eq!(code, 0, "{:?}", failed(&r));
    let a = r["result"]["residues"].as_array().unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(a[0].as_array().unwrap().len(), 3);
}

#[test]
fn malformed_input_exits_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"surface":{"type":"elliptic","branch_points":[[1,2],[3,"x"],[0,0],[2,1]]},"lambda0":[0,5],"parameters":{"p":[0],"q":[0]}}"#).unwrap();
    let out = rhk(&["solve", "--spec", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("surface.branch_points[1][1]"), "{err}");

    std::fs::write(&p, "{\"surface\": {\"type\": \"elliptic\",\n \"branch_points\": [").unwrap();
    let out = rhk(&["verify", "--spec", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    std::fs::write(&p, r#"{"surface":{"type":"elliptic","branch_points":[[1,2],[3,1],[0,0],[2,1]]},"lambda0":[0,5],"parameters":{"p":[0],"q":[0]},"extra":1}"#).unwrap();
    let out = rhk(&["verify", "--spec", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));

    let out = rhk(&["verify", "--spec", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divisor_hit_exits_3() {
    let (code, r) = run_json(&["solve", "--spec", &spec("divisor.json")]);
    assert_eq!(code, 3);
    let flags = r["malgrange"]["flags"].as_array().unwrap();
    assert_eq!(flags.len(), 1);
    assert!(flags[0]["theta_ratio"].as_f64().unwrap() < 1e-10);
}

#[test]
fn malgrange_path_is_flagged() {
    let (code, r) = run_json(&["solve", "--spec", &spec("malgrange.json")]);
    assert_eq!(code, 3);
    let flags = r["malgrange"]["flags"].as_array().unwrap();
    assert_eq!(flags.len(), 1);
    let f = &flags[0];
    assert!((f["s"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!(f["theta_ratio"].as_f64().unwrap() < 1e-8);
    assert!(f["max_residue_norm"].as_f64().unwrap() > 1e6);
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = rhk(&["solve", "--spec", &spec("genus1.json"), "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn representation_input_round_trip() {
    let (code, r) = run_json(&["solve", "--spec", &spec("genus1.json")]);
    assert_eq!(code, 0);
    let rep = r["result"]["representation"].clone();
    let original: Value = serde_json::from_slice(&std::fs::read(problem("genus1.json")).unwrap()).unwrap();
    let mut p = serde_json::json!({ "surface": original["surface"], "representation": rep });
    p["grid"] = original["grid"].clone();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rep.json");
    std::fs::write(&path, serde_json::to_vec(&p).unwrap()).unwrap();
    let (code, s) = run_json(&["solve", "--spec", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{:?}", failed(&s));
    assert!(s["recovered"]["residual"].as_f64().unwrap() < 1e-10);
    // Ψ is determined by the monodromy: the grids agree
    let g0 = r["result"]["grid"].as_array().unwrap();
    let g1 = s["result"]["grid"].as_array().unwrap();
    for (x, y) in g0.iter().zip(g1) {
        let (x, y) = (x["psi"].as_array().unwrap(), y["psi"].as_array().unwrap());
        for (rx, ry) in x.iter().zip(y) {
            for (a, b) in rx.as_array().unwrap().iter().zip(ry.as_array().unwrap()) {
                for k in 0..2 {
                    assert!((a[k].as_f64().unwrap() - b[k].as_f64().unwrap()).abs() < 1e-9);
                }
            }
        }
    }
    let (code, c) = run_json(&["covering-info", "--spec", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(c["result"]["validation"]["valid"], true);
    assert_eq!(c["result"]["covering"]["genus"], 1);
}

#[test]
fn overrides_reach_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"tol": {"fay": 1e-12}, "rauch_step": 2e-5}"#).unwrap();
    let (code, r) = run_json(&["residues", "--spec", &spec("rational3.json"), "--config", cfg.to_str().unwrap(), "--h", "2e-4"]);
    assert_eq!(code, 0, "{:?}", failed(&r));
    assert_eq!(r["config"]["tol"]["fay"], 1e-12);
    assert_eq!(r["config"]["rauch_step"], 2e-5);
    assert_eq!(r["config"]["fd_step"], 2e-4);
    // an impossible tolerance fails the checks
    let (code, r) = run_json(&["residues", "--spec", &spec("rational3.json"), "--tol", "1e-300"]);
    assert_eq!(code, 1);
    assert_eq!(r["pass"], false);
    std::fs::write(&cfg, r#"{"tol": {"bogus": 1}}"#).unwrap();
    let out = rhk(&["tau", "--spec", &spec("rational3.json"), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tol"));
}

#[test]
fn covering_info_reports_passport() {
    let (code, r) = run_json(&["covering-info", "--spec", &spec("rational3.json")]);
    assert_eq!(code, 0);
    let c = &r["result"]["covering"];
    assert_eq!(c["sheets"], 3);
    assert_eq!(c["genus"], 0);
    for p in c["passport"].as_array().unwrap() {
        assert_eq!(p, &serde_json::json!([2, 1]));
    }
}
