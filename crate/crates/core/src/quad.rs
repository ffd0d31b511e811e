//! Gauss-Kronrod 7/15 rule for vector-valued integrands.

use crate::C64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Nodes of the 15-point rule on [-1,1] in ascending order.
pub fn nodes() -> [f64; 15] {
    let mut x = [0.0; 15];
    for i in 0..7 {
        x[i] = -XGK[i];
        x[14 - i] = XGK[i];
    }
    x
}

/// Integrate `f` over [a,b] in the real variable `u`. The integrand writes `dim` values.
/// Returns the Kronrod estimate and the Kronrod-Gauss difference (max norm).
pub fn gk15<F: FnMut(f64, &mut [C64])>(mut f: F, a: f64, b: f64, dim: usize) -> (Vec<C64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![C64::new(0.0, 0.0); dim];
    let mut g = vec![C64::new(0.0, 0.0); dim];
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    f(c, &mut buf);
    for d in 0..dim {
        k[d] += buf[d] * WGK[7];
        g[d] += buf[d] * WG[3];
    }
    for i in 0..7 {
        for s in [-1.0, 1.0] {
            f(c + s * h * XGK[i], &mut buf);
            for d in 0..dim {
                k[d] += buf[d] * WGK[i];
                if i % 2 == 1 {
                    g[d] += buf[d] * WG[i / 2];
                }
            }
        }
    }
    let mut err: f64 = 0.0;
    for d in 0..dim {
        k[d] *= h;
        g[d] *= h;
        err = err.max((k[d] - g[d]).norm());
    }
    (k, err)
}

/// Adaptive bisection on top of [`gk15`].
pub fn adaptive<F: FnMut(f64, &mut [C64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    tol: f64,
    max_depth: u32,
) -> (Vec<C64>, f64) {
    fn rec<F: FnMut(f64, &mut [C64])>(
        f: &mut F,
        a: f64,
        b: f64,
        dim: usize,
        tol: f64,
        depth: u32,
    ) -> (Vec<C64>, f64) {
        let (v, e) = gk15(&mut *f, a, b, dim);
        if e <= tol || depth == 0 {
            return (v, e);
        }
        let m = 0.5 * (a + b);
        let (mut l, el) = rec(f, a, m, dim, 0.5 * tol, depth - 1);
        let (r, er) = rec(f, m, b, dim, 0.5 * tol, depth - 1);
        for d in 0..dim {
            l[d] += r[d];
        }
        (l, el + er)
    }
    rec(&mut f, a, b, dim, tol, max_depth)
}
