use proptest::prelude::*;
use rhk::config::Config;
use rhk::covering::{self, build_covering, BranchedCovering, PermutationRepresentation};
use rhk::monodromy::{self, RepresentationParameters};
use rhk::{linalg, C64};
use std::f64::consts::PI;
use std::sync::OnceLock;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn coverings() -> &'static [BranchedCovering] {
    static COVS: OnceLock<Vec<BranchedCovering>> = OnceLock::new();
    COVS.get_or_init(|| {
        ["genus1.json", "genus2.json", "rational3.json"]
            .iter()
            .map(|n| {
                let path = format!("{}/../../problems/{n}", env!("CARGO_MANIFEST_DIR"));
                let p = rhk::io::parse_problem(&std::fs::read(path).unwrap()).unwrap();
                p.setup(&Config::default()).unwrap().cov
            })
            .collect()
    })
}

fn perm(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

/// Generators s_1..s_{M-1} at random, s_M closing the product.
fn tuple() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2usize..=5, 2usize..=6).prop_flat_map(|(n, m)| {
        prop::collection::vec(perm(n), m - 1).prop_map(move |mut ps| {
            let mut acc: Vec<usize> = (0..n).collect();
            for p in &ps {
                acc = covering::compose(&acc, p);
            }
            ps.push(covering::invert(&acc));
            (n, ps)
        })
    })
}

fn cx(scale: f64) -> impl Strategy<Value = C64> {
    (-scale..scale, -0.3 * scale..0.3 * scale).prop_map(|(a, b)| c(a, b))
}

fn params_for(cov: &BranchedCovering, p: &[C64], q: &[C64], r: &[C64]) -> RepresentationParameters {
    let mut out = RepresentationParameters::zero(cov);
    out.p = p[..cov.genus].to_vec();
    out.q = q[..cov.genus].to_vec();
    let np = cov.points.len();
    out.r = r[..np].to_vec();
    let total = out.r_sum(cov);
    out.r[np - 1] -= total / cov.points[np - 1].k() as f64;
    out
}

#[test]
fn shipped_coverings() {
    let covs = coverings();
    assert_eq!(covs.iter().map(|c| c.genus).collect::<Vec<_>>(), vec![1, 2, 0]);
    assert_eq!(covs[2].n(), 3);
    for cv in covs {
        assert_eq!(monodromy::affine_rank(cv).unwrap(), 2 * cv.genus + cv.points.len() - 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_algebra(p in perm(6), q in perm(6)) {
        let id: Vec<usize> = (0..6).collect();
        prop_assert_eq!(covering::compose(&p, &covering::invert(&p)), id.clone());
        prop_assert_eq!(covering::invert(&covering::compose(&p, &q)), covering::compose(&covering::invert(&q), &covering::invert(&p)));
        let cs = covering::cycles(&p);
        let mut seen: Vec<usize> = cs.concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, id);
        for cy in cs {
            for w in 0..cy.len() {
                prop_assert_eq!(p[cy[w]], cy[(w + 1) % cy.len()]);
            }
        }
    }

    #[test]
    fn covering_invariants((n, ps) in tuple()) {
        let m = ps.len();
        let rep = PermutationRepresentation::new(n, ps.clone()).unwrap();
        prop_assert!(rep.product_is_identity());
        let lambdas: Vec<C64> = (0..m).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64)).collect();
        match build_covering(&rep, &lambdas, c(0.0, 0.0)) {
            Ok(cov) => {
                let ram: usize = ps.iter().map(|p| n - covering::cycles(p).len()).sum();
                prop_assert_eq!(2 * cov.genus + 2 * n, ram + 2);
                for (k, prof) in cov.passport.iter().enumerate() {
                    prop_assert_eq!(prof.iter().sum::<usize>(), n);
                    for j in 0..n {
                        let pt = &cov.points[cov.point_of[k][j]];
                        prop_assert!(pt.m == k && pt.sheets.contains(&j));
                    }
                }
            }
            Err(e) => {
                prop_assert!(!rep.is_transitive());
                prop_assert_eq!(e, rhk::Error::RejectsDisconnected);
            }
        }
    }

    #[test]
    fn closure_and_gauge_invariance(
        which in 0usize..3,
        p in prop::collection::vec(cx(0.45), 2),
        q in prop::collection::vec(cx(0.45), 2),
        r in prop::collection::vec(cx(0.2), 12),
        d in prop::collection::vec(cx(1.0), 3),
    ) {
        let cov = &coverings()[which];
        let n = cov.n();
        let params = params_for(cov, &p, &q, &r);
        let rep = monodromy::monodromy_from_parameters(&params, cov).unwrap();
        prop_assert!(linalg::dist(&rep.product().to_dense(), &linalg::identity(n)) < 1e-12);
        let v = monodromy::validate_representation(&rep, 1e-10).unwrap();
        prop_assert!(v.closure_ok && v.transitive);

        // a diagonal conjugation changes nothing but the gauge
        let mut dd: Vec<C64> = d[..n].iter().map(|x| (c(0.0, 2.0 * PI) * x).exp()).collect();
        let det: C64 = dd.iter().product();
        let corr = det.powf(-1.0 / n as f64);
        dd.iter_mut().for_each(|x| *x *= corr);
        let moved = monodromy::conjugate(&rep, &dd);
        let a = monodromy::parameters_from_monodromy(&rep, cov).unwrap();
        let b = monodromy::parameters_from_monodromy(&moved, cov).unwrap();
        let near_int = |z: C64| (z.re - z.re.round()).abs().max(z.im.abs());
        for (x, y) in a.params.p.iter().zip(&b.params.p).chain(a.params.q.iter().zip(&b.params.q)) {
            prop_assert!(near_int(x - y) < 1e-9);
        }
        for (i, (x, y)) in a.params.r.iter().zip(&b.params.r).enumerate() {
            let k = cov.points[i].k() as f64;
            prop_assert!(near_int((x - y) * k) < 1e-9);
        }
        let ca = monodromy::canonical_representative(&rep);
        let cb = monodromy::canonical_representative(&moved);
        let ma = ca.matrices.iter().map(|m| m.to_dense());
        let first = ca.matrices.iter().flat_map(|m| (0..n).filter(move |&j| m.support[j] != j).map(move |j| m.entries[j])).next().unwrap();
        prop_assert!(first.im.abs() < 1e-12 * first.norm() && first.re > 0.0);
        // canonical forms agree on the conjugation-invariant traces of products
        for (x, y) in ma.zip(cb.matrices.iter().map(|m| m.to_dense())) {
            prop_assert!((x.trace() - y.trace()).norm() < 1e-9 * (1.0 + x.trace().norm()));
        }
    }
}
