use proptest::prelude::*;
use rhk::io::{self, ProblemForm};
use rhk::monodromy::{MonodromyRepresentation, QuasiPermMatrix};
use rhk::{Error, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = format!("{}/../../fuzz/corpus/{target}", env!("CARGO_MANIFEST_DIR"));
    let mut out: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| std::fs::read(e.unwrap().path()).unwrap()).collect();
    out.sort();
    out
}

fn malformed_path(r: rhk::Result<impl std::fmt::Debug>) -> String {
    match r {
        Err(Error::Malformed { path, .. }) => path,
        other => panic!("expected a malformed-input error, got {other:?}"),
    }
}

const GENUS1: &str = r#"{
  "surface": {"type": "elliptic", "branch_points": [[-1, 0.2], [-0.3, -0.5], [0.4, 0.6], [1.2, -0.1]]},
  "lambda0": [0.1, 1.7],
  "parameters": {"p": [0.2], "q": [-0.1]}
}"#;

#[test]
fn minimal_problem() {
    let p = io::parse_problem(GENUS1.as_bytes()).unwrap();
    assert_eq!(p.lambda0, c(0.1, 1.7));
    assert_eq!(p.lambdas().len(), 4);
    assert!(p.malgrange.is_none() && p.grid.is_empty());
    match p.form {
        ProblemForm::Parameters { p, q, r } => {
            assert_eq!(p, vec![c(0.2, 0.0)]);
            assert_eq!(q, vec![c(-0.1, 0.0)]);
            assert!(r.is_none());
        }
        _ => panic!("parameters expected"),
    }
}

#[test]
fn error_paths() {
    let bad = GENUS1.replace("[0.2]", "[\"x\"]");
    assert_eq!(malformed_path(io::parse_problem(bad.as_bytes())), "parameters.p[0]");
    let bad = GENUS1.replace("\"lambda0\"", "\"lambda_0\"");
    assert_eq!(malformed_path(io::parse_problem(bad.as_bytes())), "lambda_0");
    let bad = GENUS1.replace("[1.2, -0.1]", "[1.2, -0.1, 3]");
    assert!(malformed_path(io::parse_problem(bad.as_bytes())).starts_with("surface.branch_points[3]"));
    assert_eq!(malformed_path(io::parse_surface(br#"{"type": "elliptic", "branch_points": [1, 2, 3]}"#)), "branch_points");
    assert!(matches!(io::parse_problem(b"{"), Err(Error::Malformed { .. })));
    assert!(matches!(io::parse_config(br#"{"theta": {"tol": -1}}"#), Err(Error::Malformed { .. })));
}

#[test]
fn parameters_and_representation_are_exclusive() {
    let both = GENUS1.replace(
        "\"parameters\"",
        r#""representation": {"N": 2, "lambdas": [0, 1], "lambda0": [0, 1], "matrices": []}, "parameters""#,
    );
    assert!(matches!(io::parse_problem(both.as_bytes()), Err(Error::Malformed { .. })));
    let neither = GENUS1.replace(r#""parameters": {"p": [0.2], "q": [-0.1]}"#, r#""grid": []"#);
    assert!(matches!(io::parse_problem(neither.as_bytes()), Err(Error::Malformed { .. })));
}

#[test]
fn shipped_seeds_parse() {
    for s in corpus("parse_config") {
        io::parse_config(&s).unwrap();
    }
    for s in corpus("parse_surface") {
        io::parse_surface(&s).unwrap();
    }
    for s in corpus("parse_representation") {
        io::parse_representation(&s).unwrap();
    }
    let ok = corpus("parse_problem").iter().filter(|s| io::parse_problem(s).is_ok()).count();
    // one seed carries an odd number of branch points on purpose
    assert_eq!(ok, corpus("parse_problem").len() - 1);
}

fn representation() -> impl Strategy<Value = MonodromyRepresentation> {
    (2usize..=4, 1usize..=4).prop_flat_map(|(n, m)| {
        let mat = (Just((0..n).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec((0.1..3.0f64, -3.0..3.0f64), n))
            .prop_map(|(s, e)| QuasiPermMatrix::new(s, e.into_iter().map(|(r, t)| C64::from_polar(r, t)).collect()).unwrap());
        (prop::collection::vec(mat, m), prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), m)).prop_map(move |(ms, ls)| {
            let lambdas = ls.iter().enumerate().map(|(k, (a, b))| c(*a + 20.0 * k as f64, *b)).collect();
            MonodromyRepresentation::new(n, lambdas, c(0.0, 9.0), ms).unwrap()
        })
    })
}

fn mutate(seed: &[u8], edits: &[(usize, u8)]) -> Vec<u8> {
    let mut out = seed.to_vec();
    for &(at, b) in edits {
        if out.is_empty() {
            break;
        }
        let i = at % out.len();
        match b % 3 {
            0 => out[i] = b,
            1 => {
                out.remove(i);
            }
            _ => out.insert(i, b"0123456789-.eE[]{},:\"x "[b as usize % 23]),
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn representation_round_trip(rep in representation()) {
        let text = serde_json::to_vec(&io::representation_json(&rep)).unwrap();
        let back = io::parse_representation(&text).unwrap();
        prop_assert_eq!(back, rep);
    }

    #[test]
    fn arbitrary_bytes_never_panic(data in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = io::parse_problem(&data);
        let _ = io::parse_surface(&data);
        let _ = io::parse_config(&data);
        let _ = io::parse_representation(&data);
    }

    #[test]
    fn mutated_seeds_never_panic(which in 0usize..13, edits in prop::collection::vec((any::<usize>(), any::<u8>()), 1..6)) {
        let all: Vec<(&str, Vec<u8>)> = ["parse_problem", "parse_surface", "parse_config", "parse_representation"]
            .iter()
            .flat_map(|t| corpus(t).into_iter().map(move |s| (*t, s)))
            .collect();
        let (target, seed) = &all[which % all.len()];
        let data = mutate(seed, &edits);
        match *target {
            "parse_problem" => drop(io::parse_problem(&data)),
            "parse_surface" => drop(io::parse_surface(&data)),
            "parse_config" => drop(io::parse_config(&data)),
            _ => drop(io::parse_representation(&data)),
        }
    }
}
