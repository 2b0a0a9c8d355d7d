//! Globally adaptive Gauss–Kronrod 7–15 quadrature.
//!
//! A classic QAG-style scheme: evaluate the 15-point Kronrod rule on each
//! interval, use |K15 − G7| (with the usual QUADPACK rescaling) as the error
//! indicator, and repeatedly bisect the interval with the largest error until
//! the requested tolerance is met or the subdivision budget is exhausted.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

// Nodes and weights of the 7-point Gauss / 15-point Kronrod pair on [-1, 1]
// (positive half; QUADPACK dqk15 constants).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
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

/// One interval's Kronrod estimate and error indicator.
fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut result_g = WG[3] * fc;
    let mut result_k = WGK[7] * fc;
    let mut resabs = WGK[7] * fc.abs();
    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        fv[j] = f1;
        fv[14 - j] = f2;
        result_k += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * result_k;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }
    let result_k = result_k * h;
    let resabs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut err = ((result_k - result_g * h) * 1.0).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let round = 50.0 * f64::EPSILON * resabs;
    if round > err {
        err = round;
    }
    (result_k, err)
}

#[derive(PartialEq)]
struct Seg {
    err: f64,
    val: f64,
    a: f64,
    b: f64,
}

impl Eq for Seg {}
impl Ord for Seg {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(std::cmp::Ordering::Equal)
    }
}
impl PartialOrd for Seg {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Integral of `f` over `[a, b]` with its error bound.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

/// Adaptively integrate `f` over `[a, b]`.
///
/// Stops when the accumulated error indicator drops below
/// `max(abs_tol, rel_tol * |value|)`. Returns `Error::QuadratureFailure`
/// (carrying the best estimate) when `max_subdivisions` bisections are not
/// enough.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, subdivisions: 0 });
    }
    // Start from several equal segments so that features much narrower than
    // the full interval still land on sample points.
    const INITIAL_SPLITS: usize = 8;
    let mut heap = BinaryHeap::new();
    let mut total_v = 0.0;
    let mut total_e = 0.0;
    for i in 0..INITIAL_SPLITS {
        let x0 = a + (b - a) * i as f64 / INITIAL_SPLITS as f64;
        let x1 = a + (b - a) * (i + 1) as f64 / INITIAL_SPLITS as f64;
        let (v, e) = kronrod(&f, x0, x1);
        total_v += v;
        total_e += e;
        heap.push(Seg { err: e, val: v, a: x0, b: x1 });
    }
    let mut subdivisions = 0;
    loop {
        let tol = abs_tol.max(rel_tol * total_v.abs());
        if total_e <= tol {
            return Ok(QuadResult { value: total_v, error: total_e, subdivisions });
        }
        if subdivisions >= max_subdivisions {
            return Err(Error::QuadratureFailure {
                estimate: total_v,
                error_bound: total_e,
                requested: tol,
            });
        }
        let worst = heap.pop().expect("heap cannot be empty");
        let m = 0.5 * (worst.a + worst.b);
        // Interval collapsed to machine precision: keep its estimate as is.
        if m <= worst.a || m >= worst.b {
            let tol = abs_tol.max(rel_tol * total_v.abs());
            if total_e <= tol + worst.err {
                return Ok(QuadResult { value: total_v, error: total_e, subdivisions });
            }
            return Err(Error::QuadratureFailure {
                estimate: total_v,
                error_bound: total_e,
                requested: tol,
            });
        }
        let (v1, e1) = kronrod(&f, worst.a, m);
        let (v2, e2) = kronrod(&f, m, worst.b);
        total_v += v1 + v2 - worst.val;
        total_e += e1 + e2 - worst.err;
        heap.push(Seg { err: e1, val: v1, a: worst.a, b: m });
        heap.push(Seg { err: e2, val: v2, a: m, b: worst.b });
        subdivisions += 1;
    }
}

/// Convenience wrapper returning the value and folding the quadrature error
/// into `err_acc`.
pub fn integrate_acc<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
    err_acc: &mut f64,
) -> Result<f64> {
    let r = integrate(f, a, b, rel_tol, abs_tol, max_subdivisions)?;
    *err_acc += r.error;
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 1e-14, 100).unwrap();
        assert!((r.value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_normalisation() {
        let r = integrate(
            |x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -10.0,
            10.0,
            1e-12,
            1e-14,
            200,
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "got {}", r.value);
    }

    #[test]
    fn sqrt_singularity_converges() {
        // \int_0^1 1/sqrt(x) = 2; integrable endpoint singularity.
        let r = integrate(|x| 1.0 / x.sqrt().max(1e-300), 0.0, 1.0, 1e-9, 1e-12, 5000).unwrap();
        assert!((r.value - 2.0).abs() < 1e-7, "got {}", r.value);
    }

    #[test]
    fn budget_exhaustion_reports_failure() {
        let e = integrate(|x| (1e6 * x).sin() / (x * x + 1e-12), 0.0, 1.0, 1e-14, 1e-16, 3);
        match e {
            Err(Error::QuadratureFailure { .. }) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
