//! Macroscopic initial density profiles, bounded away from 0 and 1.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The compressibility factor `chi(x) = x (1 - x)`.
pub fn chi(x: f64) -> f64 {
    x * (1.0 - x)
}

/// Initial density profile `rho_0 : R -> (0, 1)`.
///
/// All variants are piecewise-C2 and evaluate into `[rho_min, rho_max]`
/// strictly inside `(0, 1)`:
///
/// * `Constant(c)`
/// * `TanhRamp` interpolating from `a` (left) to `b` (right) over a scale
///   `width` around `center`: `rho(u) = a + (b-a) (1 + tanh((u-c)/w)) / 2`
/// * `PiecewiseLinear` through sorted knots, extended by constants
/// * `Table` sampled on a grid, interpolated by a natural cubic spline,
///   extended by constants
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileKind {
    Constant { value: f64 },
    TanhRamp { a: f64, b: f64, center: f64, width: f64 },
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    Table { grid: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Profile {
    kind: ProfileKind,
    rho_min: f64,
    rho_max: f64,
    // Natural-cubic second derivatives at the table nodes, empty otherwise.
    spline_m: Vec<f64>,
}

impl Profile {
    pub fn new(kind: ProfileKind) -> Result<Self> {
        let mut p = Profile { kind, rho_min: 0.0, rho_max: 1.0, spline_m: Vec::new() };
        p.prepare()?;
        Ok(p)
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(ProfileKind::Constant { value: c })
    }

    pub fn tanh_ramp(a: f64, b: f64, center: f64, width: f64) -> Result<Self> {
        Self::new(ProfileKind::TanhRamp { a, b, center, width })
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(ProfileKind::PiecewiseLinear { knots })
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    /// `(rho_min, rho_max)`, the attained bounds.
    pub fn bounds(&self) -> (f64, f64) {
        (self.rho_min, self.rho_max)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, ProfileKind::Constant { .. })
            || self.rho_max - self.rho_min < 1e-15
    }

    /// Interval outside which the profile is numerically constant (so its
    /// derivative vanishes); `None` for constant profiles.
    pub fn active_range(&self) -> Option<(f64, f64)> {
        match &self.kind {
            ProfileKind::Constant { .. } => None,
            ProfileKind::TanhRamp { center, width, .. } => {
                Some((center - 20.0 * width, center + 20.0 * width))
            }
            ProfileKind::PiecewiseLinear { knots } => {
                Some((knots[0].0, knots[knots.len() - 1].0))
            }
            ProfileKind::Table { grid, .. } => Some((grid[0], grid[grid.len() - 1])),
        }
    }

    fn prepare(&mut self) -> Result<()> {
        match &self.kind {
            ProfileKind::Constant { value } => {
                self.rho_min = *value;
                self.rho_max = *value;
            }
            ProfileKind::TanhRamp { a, b, width, .. } => {
                if !width.is_finite() || *width <= 0.0 {
                    return Err(Error::InvalidProfile(format!(
                        "tanh width must be positive, got {width}"
                    )));
                }
                self.rho_min = a.min(*b);
                self.rho_max = a.max(*b);
            }
            ProfileKind::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(Error::InvalidProfile(
                        "piecewise-linear profile needs at least two knots".into(),
                    ));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidProfile(
                        "piecewise-linear knots must be strictly increasing".into(),
                    ));
                }
                self.rho_min = knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
                self.rho_max = knots.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
            }
            ProfileKind::Table { grid, values } => {
                if grid.len() != values.len() || grid.len() < 3 {
                    return Err(Error::InvalidProfile(
                        "table profile needs matching grid/values of length >= 3".into(),
                    ));
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidProfile(
                        "table grid must be strictly increasing".into(),
                    ));
                }
                self.spline_m = natural_spline_m(grid, values);
                // Spline may overshoot the data; bound via a dense scan.
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let (g0, g1) = (grid[0], *grid.last().unwrap());
                for i in 0..=2000 {
                    let u = g0 + (g1 - g0) * i as f64 / 2000.0;
                    let v = self.eval_raw(u);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                self.rho_min = lo;
                self.rho_max = hi;
            }
        }
        if !(self.rho_min > 0.0 && self.rho_max < 1.0 && self.rho_min <= self.rho_max) {
            return Err(Error::InvalidProfile(format!(
                "profile range [{:.6}, {:.6}] is not strictly inside (0, 1)",
                self.rho_min, self.rho_max
            )));
        }
        Ok(())
    }

    fn eval_raw(&self, u: f64) -> f64 {
        match &self.kind {
            ProfileKind::Constant { value } => *value,
            ProfileKind::TanhRamp { a, b, center, width } => {
                a + (b - a) * 0.5 * (1.0 + ((u - center) / width).tanh())
            }
            ProfileKind::PiecewiseLinear { knots } => {
                if u <= knots[0].0 {
                    return knots[0].1;
                }
                if u >= knots[knots.len() - 1].0 {
                    return knots[knots.len() - 1].1;
                }
                let i = knots.partition_point(|k| k.0 <= u) - 1;
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                y0 + (y1 - y0) * (u - x0) / (x1 - x0)
            }
            ProfileKind::Table { grid, values } => {
                if u <= grid[0] {
                    return values[0];
                }
                if u >= grid[grid.len() - 1] {
                    return values[values.len() - 1];
                }
                let i = grid.partition_point(|&g| g <= u) - 1;
                let h = grid[i + 1] - grid[i];
                let a = (grid[i + 1] - u) / h;
                let b = (u - grid[i]) / h;
                a * values[i]
                    + b * values[i + 1]
                    + ((a * a * a - a) * self.spline_m[i] + (b * b * b - b) * self.spline_m[i + 1])
                        * h
                        * h
                        / 6.0
            }
        }
    }

    /// `rho_0(u)`, clamped into the attained bounds.
    pub fn eval(&self, u: f64) -> f64 {
        self.eval_raw(u).clamp(self.rho_min, self.rho_max)
    }

    /// `rho_0'(u)` (one-sided limits at knots).
    pub fn deriv(&self, u: f64) -> f64 {
        match &self.kind {
            ProfileKind::Constant { .. } => 0.0,
            ProfileKind::TanhRamp { a, b, center, width } => {
                let c = ((u - center) / width).cosh();
                (b - a) * 0.5 / (width * c * c)
            }
            ProfileKind::PiecewiseLinear { knots } => {
                if u < knots[0].0 || u > knots[knots.len() - 1].0 {
                    return 0.0;
                }
                let i = (knots.partition_point(|k| k.0 <= u) - 1).min(knots.len() - 2);
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                (y1 - y0) / (x1 - x0)
            }
            ProfileKind::Table { grid, values } => {
                if u < grid[0] || u > grid[grid.len() - 1] {
                    return 0.0;
                }
                let i = (grid.partition_point(|&g| g <= u) - 1).min(grid.len() - 2);
                let h = grid[i + 1] - grid[i];
                let a = (grid[i + 1] - u) / h;
                let b = (u - grid[i]) / h;
                (values[i + 1] - values[i]) / h
                    + ((3.0 * b * b - 1.0) * self.spline_m[i + 1]
                        - (3.0 * a * a - 1.0) * self.spline_m[i])
                        * h
                        / 6.0
            }
        }
    }
}

fn natural_spline_m(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    // Thomas solve of the standard tridiagonal natural-spline system.
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
        c[i] = h1 / diag;
        d[i] = (rhs - h0 * d[i - 1]) / diag;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_midpoint_is_average() {
        let p = Profile::tanh_ramp(0.3, 0.7, 0.0, 0.5).unwrap();
        assert!((p.eval(0.0) - 0.5).abs() < 1e-15);
        assert!((p.eval(-100.0) - 0.3).abs() < 1e-12);
        assert!((p.eval(100.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn constant_one_is_rejected() {
        assert!(matches!(Profile::constant(1.0), Err(Error::InvalidProfile(_))));
        assert!(matches!(Profile::constant(0.0), Err(Error::InvalidProfile(_))));
        assert!(Profile::constant(0.5).is_ok());
    }

    #[test]
    fn tanh_deriv_matches_finite_difference() {
        let p = Profile::tanh_ramp(0.2, 0.8, 0.3, 0.7).unwrap();
        let h = 1e-6;
        for &u in &[-1.0, 0.0, 0.3, 0.5, 2.0] {
            let fd = (p.eval(u + h) - p.eval(u - h)) / (2.0 * h);
            assert!((p.deriv(u) - fd).abs() < 1e-8, "u={u}");
        }
    }

    #[test]
    fn piecewise_linear_interpolates() {
        let p = Profile::piecewise_linear(vec![(-1.0, 0.2), (0.0, 0.5), (1.0, 0.4)]).unwrap();
        assert!((p.eval(-0.5) - 0.35).abs() < 1e-15);
        assert!((p.deriv(-0.5) - 0.3).abs() < 1e-15);
        assert!((p.deriv(0.5) + 0.1).abs() < 1e-15);
        assert_eq!(p.eval(5.0), 0.4);
    }

    #[test]
    fn table_spline_hits_nodes() {
        let grid: Vec<f64> = (0..9).map(|i| i as f64 * 0.25).collect();
        let values: Vec<f64> = grid.iter().map(|&u| 0.4 + 0.1 * (u * 2.0).sin()).collect();
        let p = Profile::new(ProfileKind::Table { grid: grid.clone(), values: values.clone() })
            .unwrap();
        for (g, v) in grid.iter().zip(&values) {
            assert!((p.eval(*g) - v).abs() < 1e-12);
        }
        let h = 1e-6;
        let fd = (p.eval(1.1 + h) - p.eval(1.1 - h)) / (2.0 * h);
        assert!((p.deriv(1.1) - fd).abs() < 1e-6);
    }
}
