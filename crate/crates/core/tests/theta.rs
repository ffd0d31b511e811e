use proptest::prelude::*;
use rhk::theta::{self, Characteristic, HalfChar, ThetaConfig};
use rhk::{CMat, C64};
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Plain lattice sum over a fixed box, value and gradient.
fn oracle(z: &[C64], b: &CMat, ch: &Characteristic, box_r: i64) -> (C64, Vec<C64>) {
    let g = z.len();
    let mut val = c(0.0, 0.0);
    let mut grad = vec![c(0.0, 0.0); g];
    let mut n = vec![-box_r; g];
    loop {
        let v: Vec<C64> = (0..g).map(|i| c(n[i] as f64, 0.0) + ch.p[i]).collect();
        let mut e = c(0.0, 0.0);
        for i in 0..g {
            for j in 0..g {
                e += c(0.0, PI) * v[i] * b[(i, j)] * v[j];
            }
            e += c(0.0, 2.0 * PI) * v[i] * (z[i] + ch.q[i]);
        }
        let t = e.exp();
        val += t;
        for i in 0..g {
            grad[i] += c(0.0, 2.0 * PI) * v[i] * t;
        }
        let mut k = 0;
        loop {
            if k == g {
                return (val, grad);
            }
            n[k] += 1;
            if n[k] <= box_r {
                break;
            }
            n[k] = -box_r;
            k += 1;
        }
    }
}

fn period_matrix(g: usize) -> impl Strategy<Value = CMat> {
    (prop::collection::vec(-0.5..0.5f64, g * g), prop::collection::vec(-0.5..0.5f64, g * g), 0.7..1.5f64).prop_map(move |(a, x, d)| {
        let a = CMat::from_fn(g, g, |i, j| c(a[i * g + j], 0.0));
        let y = &a * a.transpose() + CMat::identity(g, g) * c(d, 0.0);
        let x = CMat::from_fn(g, g, |i, j| c(x[i * g + j] + x[j * g + i], 0.0));
        x + y * c(0.0, 1.0)
    })
}

fn point(g: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -0.4..0.4f64).prop_map(|(a, b)| c(a, b)), g)
}

fn half_char(g: usize) -> impl Strategy<Value = HalfChar> {
    (0..1usize << (2 * g)).prop_map(move |i| HalfChar::from_index(g, i))
}

#[test]
fn frozen_genus2_value() {
    let b = CMat::from_row_slice(2, 2, &[c(0.1, 1.2), c(0.3, 0.4), c(0.3, 0.4), c(-0.2, 0.9)]);
    let z = [c(0.25, -0.1), c(-0.4, 0.2)];
    let ch = HalfChar { p2: vec![1, 0], q2: vec![0, 1] }.to_char();
    let (o, _) = oracle(&z, &b, &ch, 12);
    let v = theta::theta_value(&z, &b, &ch, &ThetaConfig::default()).unwrap();
    assert!((v - o).norm() < 1e-14, "{v} {o}");
    let frozen = c(0.6629143942112022, -0.18981070092148944);
    assert!((v - frozen).norm() < 1e-13, "{v}");
}

#[test]
fn count_of_characteristics() {
    for g in 1..=3 {
        let even = (0..1usize << (2 * g)).filter(|&i| HalfChar::from_index(g, i).parity() == 0).count();
        assert_eq!(even, (1 << (g - 1)) * ((1 << g) + 1));
        assert_eq!(theta::count_odd(g) + even, 1 << (2 * g));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_lattice_sum((b, z, hc) in (1usize..=2).prop_flat_map(|g| (period_matrix(g), point(g), half_char(g)))) {
        let g = z.len();
        let ch = hc.to_char();
        let ev = theta::theta(&z, &b, &ch, &ThetaConfig::default(), 1).unwrap();
        let (o, og) = oracle(&z, &b, &ch, 14);
        prop_assert!((ev.value - o).norm() < 1e-12 * ev.scale);
        for i in 0..g {
            prop_assert!((ev.grad[i] - og[i]).norm() < 1e-10 * ev.scale);
        }
    }

    #[test]
    fn parity_under_reflection(b in period_matrix(2), z in point(2), hc in half_char(2)) {
        let cfg = ThetaConfig::default();
        let ch = hc.to_char();
        let minus: Vec<C64> = z.iter().map(|x| -x).collect();
        let a = theta::theta(&z, &b, &ch, &cfg, 0).unwrap();
        let m = theta::theta_value(&minus, &b, &ch, &cfg).unwrap();
        let sign = if hc.parity() == 0 { 1.0 } else { -1.0 };
        prop_assert!((m - a.value * sign).norm() < 1e-12 * a.scale);
    }

    #[test]
    fn quasi_periodic(b in period_matrix(2), z in point(2), hc in half_char(2), j in 0usize..2) {
        let cfg = ThetaConfig::default();
        let ch = hc.to_char();
        let t = theta::theta(&z, &b, &ch, &cfg, 0).unwrap();
        let mut z1 = z.clone();
        z1[j] += 1.0;
        let a = theta::theta(&z1, &b, &ch, &cfg, 0).unwrap();
        let pa = (c(0.0, 2.0 * PI) * ch.p[j]).exp();
        prop_assert!((a.value - pa * t.value).norm() < 1e-12 * a.scale);
        let z2: Vec<C64> = (0..2).map(|i| z[i] + b[(i, j)]).collect();
        let e = theta::theta(&z2, &b, &ch, &cfg, 0).unwrap();
        let pb = (c(0.0, -PI) * b[(j, j)] - c(0.0, 2.0 * PI) * (z[j] + ch.q[j])).exp();
        prop_assert!((e.value - pb * t.value).norm() < 1e-11 * e.scale);
    }

    #[test]
    fn heat_equation(b in period_matrix(2), z in point(2), hc in half_char(2)) {
        let r = theta::heat_check(&z, &b, &hc.to_char(), 1e-5, &ThetaConfig::default()).unwrap();
        prop_assert!(r < 1e-6, "{r}");
    }
}
