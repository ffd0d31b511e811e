use proptest::prelude::*;
use rhk::config::Config;
use rhk::kernels::KState;
use rhk::rhp::{PsiSolution, Setup};
use rhk::verify;
use rhk::{linalg, C64};
use std::sync::OnceLock;

fn load(name: &str) -> PsiSolution {
    let path = format!("{}/../../problems/{name}", env!("CARGO_MANIFEST_DIR"));
    let p = rhk::io::parse_problem(&std::fs::read(path).unwrap()).unwrap();
    p.solve(&Config::default()).unwrap().0
}

fn solutions() -> &'static [PsiSolution] {
    static SOLS: OnceLock<Vec<PsiSolution>> = OnceLock::new();
    SOLS.get_or_init(|| ["genus1.json", "genus2.json", "rational3.json"].iter().map(|n| load(n)).collect())
}

fn free_radius(s: &Setup) -> f64 {
    s.lambdas.iter().map(|l| (l - s.lambda0).norm()).fold(f64::INFINITY, f64::min)
}

fn state(s: &Setup, rho: f64, phi: f64, sheet: usize) -> KState {
    let lam = s.lambda0 + C64::from_polar(rho * free_radius(s), phi);
    s.point_at(lam, sheet % s.n()).unwrap()
}

#[test]
fn shipped_problems_pass_the_suite() {
    let cfg = Config::default();
    for sol in &solutions()[..1] {
        let grid = verify::default_grid(&sol.setup);
        let checks = verify::full_suite(sol, &grid, &cfg);
        let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        assert!(failed.is_empty(), "{failed:?}");
        let mut names: Vec<_> = checks.iter().map(|c| c.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), checks.len());
    }
    let sol = &solutions()[2];
    let checks = verify::rh_checks(sol, &verify::default_grid(&sol.setup), &cfg);
    assert!(verify::all_pass(&checks));
}

#[test]
fn even_characteristic_is_even() {
    for sol in &solutions()[..2] {
        let ch = verify::even_characteristic(&sol.setup).unwrap();
        let twice: Vec<i32> = ch.p.iter().chain(&ch.q).map(|x| (2.0 * x.re).round() as i32).collect();
        let g = ch.genus();
        let parity: i32 = (0..g).map(|a| twice[a] * twice[g + a]).sum();
        assert_eq!(parity % 2, 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_symmetries(
        which in 0usize..2,
        a in (0.1..0.9f64, 0.0..6.28f64, 0usize..3),
        b in (0.1..0.9f64, 0.0..6.28f64, 0usize..3),
    ) {
        let s = &solutions()[which].setup;
        let (x, y) = (state(s, a.0, a.1, a.2), state(s, b.0, b.1, b.2));
        prop_assume!((x.pt.lam - y.pt.lam).norm() > 1e-2);
        let fr = &s.frame;
        let exy = fr.prime(&x, &y).unwrap();
        let eyx = fr.prime(&y, &x).unwrap();
        prop_assert!((exy + eyx).norm() < 1e-10 * exy.norm());
        let w1 = fr.bergmann(&x.pt, &y.pt).unwrap();
        let w2 = fr.bergmann(&y.pt, &x.pt).unwrap();
        prop_assert!((w1 - w2).norm() < 1e-10 * w1.norm());
        let ch = verify::even_characteristic(s).unwrap();
        let sxy = fr.szego(&ch, &x, &y).unwrap();
        let syx = fr.szego(&ch, &y, &x).unwrap();
        prop_assert!((sxy + syx).norm() < 1e-10 * sxy.norm());
    }

    #[test]
    fn psi_determinant_and_inverse(which in 0usize..3, rho in 0.1..0.9f64, phi in 0.0..6.28f64) {
        let sol = &solutions()[which];
        let s = &sol.setup;
        let lam = s.lambda0 + C64::from_polar(rho * free_radius(s), phi);
        let xs = sol.states_along(&s.default_path(lam)).unwrap();
        let psi = sol.psi_from_states(&xs).unwrap();
        let inv = sol.psi_inverse_from_states(&xs).unwrap();
        let n = s.n();
        prop_assert!(linalg::dist(&(&psi * &inv), &linalg::identity(n)) < 1e-9);
        let d = linalg::det(&psi);
        let cf = sol.det_closed_form(&xs);
        prop_assert!((d - cf).norm() < 1e-9 * cf.norm());
    }
}
