//! Compactly supported, piecewise-linear test functions and the closed-form
//! action of the heat semigroup on them.
//!
//! A function is a list of breakpoints `x_0 < ... < x_m` with an affine piece
//! `a_i + b_i v` on each `(x_i, x_{i+1})` and zero outside; jumps at
//! breakpoints are allowed (Heaviside-like ramps need them).

use crate::special::{brownian_tail_le, heat_kernel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct TestFunction {
    breaks: Vec<f64>,
    /// `(a_i, b_i)` for the piece on `(breaks[i], breaks[i+1])`.
    pieces: Vec<(f64, f64)>,
}

/// Serialisable construction recipe (used by configs and the CLI).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    /// `G^K_u(v) = (1 - (v-u)/K)^+ 1{v >= u}`: jumps to 1 at `u`, ramps to 0
    /// at `u + K`.
    ClippedRamp { u: f64, k: f64 },
    /// Symmetric triangle bump of the given height.
    Triangle { center: f64, half_width: f64, height: f64 },
    /// `K 1[u, u + 1/K]`.
    Indicator { u: f64, k: f64 },
    /// Continuous piecewise-linear through the given knots (zero outside).
    Knots { knots: Vec<(f64, f64)> },
}

impl TestFunctionSpec {
    pub fn build(&self) -> TestFunction {
        match self {
            TestFunctionSpec::ClippedRamp { u, k } => TestFunction::clipped_ramp(*u, *k),
            TestFunctionSpec::Triangle { center, half_width, height } => {
                TestFunction::triangle(*center, *half_width, *height)
            }
            TestFunctionSpec::Indicator { u, k } => TestFunction::indicator(*u, *k),
            TestFunctionSpec::Knots { knots } => TestFunction::from_knots(knots.clone()),
        }
    }
}

impl TestFunction {
    pub fn from_pieces(breaks: Vec<f64>, pieces: Vec<(f64, f64)>) -> Self {
        assert_eq!(breaks.len(), pieces.len() + 1);
        assert!(breaks.windows(2).all(|w| w[1] > w[0]));
        TestFunction { breaks, pieces }
    }

    pub fn clipped_ramp(u: f64, k: f64) -> Self {
        assert!(k > 0.0);
        Self::from_pieces(vec![u, u + k], vec![(1.0 + u / k, -1.0 / k)])
    }

    pub fn triangle(center: f64, half_width: f64, height: f64) -> Self {
        assert!(half_width > 0.0);
        Self::from_knots(vec![
            (center - half_width, 0.0),
            (center, height),
            (center + half_width, 0.0),
        ])
    }

    pub fn indicator(u: f64, k: f64) -> Self {
        assert!(k > 0.0);
        Self::from_pieces(vec![u, u + 1.0 / k], vec![(k, 0.0)])
    }

    pub fn from_knots(knots: Vec<(f64, f64)>) -> Self {
        assert!(knots.len() >= 2);
        let breaks: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let pieces = knots
            .windows(2)
            .map(|w| {
                let b = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                (w[0].1 - b * w[0].0, b)
            })
            .collect();
        Self::from_pieces(breaks, pieces)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    pub fn eval(&self, v: f64) -> f64 {
        if v < self.breaks[0] || v >= *self.breaks.last().unwrap() {
            return 0.0;
        }
        let i = (self.breaks.partition_point(|&x| x <= v) - 1).min(self.pieces.len() - 1);
        let (a, b) = self.pieces[i];
        a + b * v
    }

    /// `T_t H(u) = \int p_t(u, v) H(v) dv`, exactly (erf closed form).
    ///
    /// `t = 0` returns `H(u)`.
    pub fn semigroup(&self, t: f64, u: f64) -> f64 {
        if t <= 0.0 {
            return self.eval(u);
        }
        let cdf = |x: f64| brownian_tail_le(t, x - u);
        let mut total = 0.0;
        for (i, &(a, b)) in self.pieces.iter().enumerate() {
            let (x0, x1) = (self.breaks[i], self.breaks[i + 1]);
            let c0 = cdf(x0);
            let c1 = cdf(x1);
            // int_{x0}^{x1} v p_t(u,v) dv = u (c1-c0) - 2t (p_t(u,x1) - p_t(u,x0))
            let mean_part = u * (c1 - c0) - 2.0 * t * (heat_kernel(t, u, x1) - heat_kernel(t, u, x0));
            total += a * (c1 - c0) + b * mean_part;
        }
        total
    }

    /// `\partial_u T_t H(u)`, exactly. Jumps contribute kernel terms.
    ///
    /// `t = 0` returns the slope of the piece containing `u`.
    pub fn semigroup_gradient(&self, t: f64, u: f64) -> f64 {
        if t <= 0.0 {
            if u < self.breaks[0] || u >= *self.breaks.last().unwrap() {
                return 0.0;
            }
            let i = (self.breaks.partition_point(|&x| x <= u) - 1).min(self.pieces.len() - 1);
            return self.pieces[i].1;
        }
        let cdf = |x: f64| brownian_tail_le(t, x - u);
        let mut total = 0.0;
        for (i, &(a, b)) in self.pieces.iter().enumerate() {
            let (x0, x1) = (self.breaks[i], self.breaks[i + 1]);
            // -int (a + b v) d/dv p_t(u,v) dv, integrated by parts
            total += (a + b * x0) * heat_kernel(t, u, x0) - (a + b * x1) * heat_kernel(t, u, x1)
                + b * (cdf(x1) - cdf(x0));
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    #[test]
    fn ramp_shape() {
        let g = TestFunction::clipped_ramp(0.5, 2.0);
        assert_eq!(g.eval(0.4), 0.0);
        assert!((g.eval(0.5) - 1.0).abs() < 1e-15);
        assert!((g.eval(1.5) - 0.5).abs() < 1e-15);
        assert_eq!(g.eval(2.5), 0.0);
    }

    #[test]
    fn triangle_shape() {
        let h = TestFunction::triangle(1.0, 0.5, 2.0);
        assert_eq!(h.eval(0.4), 0.0);
        assert!((h.eval(0.75) - 1.0).abs() < 1e-12);
        assert!((h.eval(1.0) - 2.0).abs() < 1e-12);
        assert!((h.eval(1.25) - 1.0).abs() < 1e-12);
        assert_eq!(h.eval(1.6), 0.0);
    }

    #[test]
    fn semigroup_matches_quadrature() {
        let h = TestFunction::triangle(0.3, 0.8, 1.5);
        let g = TestFunction::clipped_ramp(-0.2, 1.0);
        for f in [&h, &g] {
            for &(t, u) in &[(0.13, 0.0), (0.5, 0.4), (2.0, -1.0)] {
                let direct = integrate(
                    |v| heat_kernel(t, u, v) * f.eval(v),
                    u - 12.0 * (2.0 * t as f64).sqrt() - 3.0,
                    u + 12.0 * (2.0 * t as f64).sqrt() + 3.0,
                    1e-11,
                    1e-13,
                    2000,
                )
                .unwrap()
                .value;
                assert!(
                    (f.semigroup(t, u) - direct).abs() < 1e-9,
                    "t={t} u={u}: {} vs {direct}",
                    f.semigroup(t, u)
                );
            }
        }
    }

    #[test]
    fn semigroup_gradient_matches_finite_difference() {
        let f = TestFunction::clipped_ramp(0.0, 2.0);
        let (t, h) = (0.31, 1e-6);
        for &u in &[-0.5, 0.0, 0.7, 1.9, 2.2] {
            let fd = (f.semigroup(t, u + h) - f.semigroup(t, u - h)) / (2.0 * h);
            assert!(
                (f.semigroup_gradient(t, u) - fd).abs() < 1e-6,
                "u={u}: {} vs {fd}",
                f.semigroup_gradient(t, u)
            );
        }
    }

    #[test]
    fn semigroup_mass_is_preserved() {
        // int T_t H = int H for compactly supported H.
        let f = TestFunction::triangle(0.0, 1.0, 1.0);
        let m0 = 1.0; // triangle area
        let t = 0.7;
        let m1 = integrate(|u| f.semigroup(t, u), -15.0, 15.0, 1e-10, 1e-12, 2000)
            .unwrap()
            .value;
        assert!((m1 - m0).abs() < 1e-9);
    }
}
