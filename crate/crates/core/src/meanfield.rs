//! Mean density machinery: the continuum heat evolution of the profile, its
//! gradient and the source term `2 (d_u rho)^2`, the discrete density on `Z`
//! through the random-walk kernel, and the exact density on a closed finite
//! window (used for bit-honest centring of simulated observables).

use crate::error::{Error, Result};
use crate::profile::{chi, Profile, ProfileKind};
use crate::quad;
use crate::special::{
    brownian_tail_ge, brownian_tail_le, heat_kernel, poisson_window, walk_kernel,
    walk_kernel_radius,
};
use serde::{Deserialize, Serialize};

/// Tolerances and truncation controls shared by quadrature-based evaluations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Spatial truncation radius in units of `sqrt(2 t)`.
    pub cutoff_radius: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            cutoff_radius: 8.0,
            max_subdivisions: 4000,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if self.rel_tol <= 0.0 || self.abs_tol <= 0.0 {
            return Err(Error::InvalidInput("quadrature tolerances must be positive".into()));
        }
        if self.cutoff_radius < 6.0 {
            return Err(Error::InvalidInput(
                "spatial cutoff radius below 6 sds is not supported".into(),
            ));
        }
        Ok(())
    }
}

/// A value together with a rigorous (truncation + quadrature) error bound.
#[derive(Debug, Clone, Copy)]
pub struct ValueWithError {
    pub value: f64,
    pub error: f64,
}

/// Continuum heat-equation solution `rho(t, u)` for a profile, with gradient
/// and source term. Pure given an immutable profile.
#[derive(Debug, Clone)]
pub struct ContinuumField {
    profile: Profile,
    quad: QuadratureSettings,
}

impl ContinuumField {
    pub fn new(profile: Profile, quad: QuadratureSettings) -> Self {
        ContinuumField { profile, quad }
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn quad(&self) -> &QuadratureSettings {
        &self.quad
    }

    /// `rho(t, u)`.
    pub fn density(&self, t: f64, u: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::InvalidTime(format!("negative time {t}")));
        }
        if t == 0.0 {
            return Ok(self.profile.eval(u));
        }
        match self.profile.kind() {
            ProfileKind::Constant { value } => Ok(*value),
            ProfileKind::PiecewiseLinear { knots } => Ok(self.density_pl_closed(t, u, knots)),
            _ => {
                let l = self.quad.cutoff_radius * (2.0 * t).sqrt();
                let body = quad::integrate(
                    |v| heat_kernel(t, u, v) * self.profile.eval(v),
                    u - l,
                    u + l,
                    self.quad.rel_tol,
                    self.quad.abs_tol,
                    self.quad.max_subdivisions,
                )?;
                // The profile is asymptotically constant on both sides; the
                // clamped-tail contribution below is exact up to the profile
                // variation across the tail, which is < 1e-15 at 8 sds.
                let tail = brownian_tail_ge(t, l);
                let tails = tail * (self.profile.eval(u - l) + self.profile.eval(u + l));
                Ok((body.value + tails).clamp(self.profile.bounds().0, self.profile.bounds().1))
            }
        }
    }

    fn density_pl_closed(&self, t: f64, u: f64, knots: &[(f64, f64)]) -> f64 {
        // Exact: constants outside the knot span, affine pieces inside.
        let first = knots[0];
        let last = knots[knots.len() - 1];
        let mut total = first.1 * brownian_tail_le(t, first.0 - u)
            + last.1 * brownian_tail_ge(t, last.0 - u);
        for w in knots.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            let b = (y1 - y0) / (x1 - x0);
            let a = y0 - b * x0;
            let c0 = brownian_tail_le(t, x0 - u);
            let c1 = brownian_tail_le(t, x1 - u);
            let mean_part =
                u * (c1 - c0) - 2.0 * t * (heat_kernel(t, u, x1) - heat_kernel(t, u, x0));
            total += a * (c1 - c0) + b * mean_part;
        }
        total.clamp(self.profile.bounds().0, self.profile.bounds().1)
    }

    /// `d_u rho(t, u)`, via `T_t rho_0'` (the profile is continuous).
    pub fn gradient(&self, t: f64, u: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::InvalidTime(format!("negative time {t}")));
        }
        if t == 0.0 {
            return Ok(self.profile.deriv(u));
        }
        match self.profile.kind() {
            ProfileKind::Constant { .. } => Ok(0.0),
            ProfileKind::PiecewiseLinear { knots } => {
                let mut total = 0.0;
                for w in knots.windows(2) {
                    let b = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                    total += b
                        * (brownian_tail_le(t, w[1].0 - u) - brownian_tail_le(t, w[0].0 - u));
                }
                Ok(total)
            }
            _ => {
                let l = self.quad.cutoff_radius * (2.0 * t).sqrt();
                let r = quad::integrate(
                    |v| heat_kernel(t, u, v) * self.profile.deriv(v),
                    u - l,
                    u + l,
                    self.quad.rel_tol,
                    self.quad.abs_tol,
                    self.quad.max_subdivisions,
                )?;
                Ok(r.value)
            }
        }
    }

    /// Source term `d_tau chi - Delta chi = 2 (d_u rho)^2` at `(tau, u)`.
    pub fn source(&self, tau: f64, u: f64) -> Result<f64> {
        let g = self.gradient(tau, u)?;
        Ok(2.0 * g * g)
    }

    /// `chi(rho(t, u))`.
    pub fn chi_at(&self, t: f64, u: f64) -> Result<f64> {
        Ok(chi(self.density(t, u)?))
    }
}

/// Rectangular-grid cache of `rho` and `d_u rho` with monotone cubic
/// (Fritsch–Carlson) interpolation; node reads reproduce the direct
/// evaluation. The `bypass` flag routes every read to the direct evaluators
/// for validation runs.
#[derive(Debug, Clone)]
pub struct DensityCache {
    t_nodes: Vec<f64>,
    u_nodes: Vec<f64>,
    rho: Vec<Vec<f64>>,
    drho: Vec<Vec<f64>>,
    pub bypass: bool,
}

impl DensityCache {
    pub fn build(field: &ContinuumField, t_max: f64, u_lo: f64, u_hi: f64, nt: usize, nu: usize) -> Result<Self> {
        assert!(nt >= 4 && nu >= 4);
        let t_nodes: Vec<f64> = (0..nt).map(|i| t_max * i as f64 / (nt - 1) as f64).collect();
        let u_nodes: Vec<f64> =
            (0..nu).map(|i| u_lo + (u_hi - u_lo) * i as f64 / (nu - 1) as f64).collect();
        let mut rho = Vec::with_capacity(nt);
        let mut drho = Vec::with_capacity(nt);
        for &t in &t_nodes {
            let mut row = Vec::with_capacity(nu);
            let mut drow = Vec::with_capacity(nu);
            for &u in &u_nodes {
                row.push(field.density(t, u)?);
                drow.push(field.gradient(t, u)?);
            }
            rho.push(row);
            drho.push(drow);
        }
        Ok(DensityCache { t_nodes, u_nodes, rho, drho, bypass: false })
    }

    pub fn density(&self, field: &ContinuumField, t: f64, u: f64) -> Result<f64> {
        if self.bypass {
            return field.density(t, u);
        }
        Ok(self.interp(&self.rho, t, u))
    }

    pub fn gradient(&self, field: &ContinuumField, t: f64, u: f64) -> Result<f64> {
        if self.bypass {
            return field.gradient(t, u);
        }
        Ok(self.interp(&self.drho, t, u))
    }

    fn interp(&self, table: &[Vec<f64>], t: f64, u: f64) -> f64 {
        // Monotone cubic along u for the four bracketing t rows, then along t.
        let ti = bracket(&self.t_nodes, t);
        let rows: Vec<usize> = neighbourhood(ti, self.t_nodes.len());
        let vals: Vec<f64> = rows.iter().map(|&r| mono_cubic(&self.u_nodes, &table[r], u)).collect();
        let ts: Vec<f64> = rows.iter().map(|&r| self.t_nodes[r]).collect();
        mono_cubic(&ts, &vals, t)
    }
}

fn bracket(nodes: &[f64], x: f64) -> usize {
    let i = nodes.partition_point(|&n| n <= x);
    i.saturating_sub(1).min(nodes.len() - 2)
}

fn neighbourhood(i: usize, len: usize) -> Vec<usize> {
    let lo = i.saturating_sub(1).min(len.saturating_sub(4));
    (lo..(lo + 4).min(len)).collect()
}

/// Fritsch–Carlson monotone cubic interpolation on sorted nodes.
fn mono_cubic(x: &[f64], y: &[f64], xi: f64) -> f64 {
    let n = x.len();
    if xi <= x[0] {
        return y[0];
    }
    if xi >= x[n - 1] {
        return y[n - 1];
    }
    let i = bracket(x, xi);
    let h = x[i + 1] - x[i];
    let d = (y[i + 1] - y[i]) / h;
    let d_prev = if i > 0 { (y[i] - y[i - 1]) / (x[i] - x[i - 1]) } else { d };
    let d_next = if i + 2 < n { (y[i + 2] - y[i + 1]) / (x[i + 2] - x[i + 1]) } else { d };
    let m0 = limited_slope(d_prev, d);
    let m1 = limited_slope(d, d_next);
    let s = (xi - x[i]) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * y[i] + h10 * h * m0 + h01 * y[i + 1] + h11 * h * m1
}

fn limited_slope(d0: f64, d1: f64) -> f64 {
    if d0 * d1 <= 0.0 {
        return 0.0;
    }
    let m = 0.5 * (d0 + d1);
    let lim = 3.0 * d0.abs().min(d1.abs());
    m.clamp(-lim, lim)
}

/// Discrete mean density `rho_t^n` on `Z` and the continuum field, bundled
/// with the scaling parameter `n`.
#[derive(Debug, Clone)]
pub struct HeatField {
    pub n: u32,
    pub continuum: ContinuumField,
}

impl HeatField {
    pub fn new(profile: Profile, n: u32, quad: QuadratureSettings) -> Self {
        HeatField { n, continuum: ContinuumField::new(profile, quad) }
    }

    /// `rho_t^n(x) = sum_y q_t(x, y) rho_0(y/n)` with the rate-`2 n^2` walk
    /// kernel, truncated where the kernel drops below 1e-14; the discarded
    /// mass bounds the error.
    pub fn discrete_density(&self, x: i64, t: f64) -> Result<ValueWithError> {
        if t < 0.0 {
            return Err(Error::InvalidTime(format!("negative time {t}")));
        }
        let profile = self.continuum.profile();
        if t == 0.0 {
            return Ok(ValueWithError { value: profile.eval(x as f64 / self.n as f64), error: 0.0 });
        }
        let z = 2.0 * (self.n as f64) * (self.n as f64) * t;
        let k_max = walk_kernel_radius(z, 1e-14);
        let q = walk_kernel(z, k_max);
        let n = self.n as f64;
        let mut v = q[0] * profile.eval(x as f64 / n);
        let mut mass = q[0];
        for k in 1..=k_max {
            v += q[k] * (profile.eval((x + k as i64) as f64 / n) + profile.eval((x - k as i64) as f64 / n));
            mass += 2.0 * q[k];
        }
        let discarded = (1.0 - mass).max(0.0);
        // Unrepresented sites carry at most rho_max each.
        Ok(ValueWithError { value: v, error: discarded * profile.bounds().1 + 1e-15 })
    }

    /// `\int_0^t rho_s^n(x) ds` by adaptive quadrature.
    pub fn discrete_density_time_integral(&self, x: i64, t: f64) -> Result<ValueWithError> {
        if t < 0.0 {
            return Err(Error::InvalidTime(format!("negative time {t}")));
        }
        if t == 0.0 {
            return Ok(ValueWithError { value: 0.0, error: 0.0 });
        }
        let q = self.continuum.quad();
        let r = quad::integrate(
            |s| self.discrete_density(x, s).map(|v| v.value).unwrap_or(f64::NAN),
            0.0,
            t,
            q.rel_tol,
            q.abs_tol,
            q.max_subdivisions,
        )?;
        Ok(ValueWithError { value: r.value, error: r.error + t * 1e-14 })
    }
}

/// Exact mean density of the stirring dynamics on a closed window, including
/// running time integrals, evaluated by uniformisation of the single-particle
/// chain. This is the law actually simulated, so centring against it carries
/// no truncation-to-`Z` bias.
#[derive(Debug, Clone)]
pub struct WindowDensity {
    pub x_lo: i64,
    /// `rho_{t_k}(x)` for every requested time, indexed `[k][x - x_lo]`.
    pub at_times: Vec<Vec<f64>>,
    /// `\int_0^{t_k} rho_s(x) ds`, same indexing.
    pub integrals: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

impl WindowDensity {
    /// Solve on `{x_lo, ..., x_hi}` (closed boundary) for sorted `times`.
    pub fn solve(profile: &Profile, n: u32, x_lo: i64, x_hi: i64, times: &[f64]) -> Result<Self> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidTime("window density times must be sorted and >= 0".into()));
        }
        let len = (x_hi - x_lo + 1) as usize;
        let nn = n as f64;
        let lambda = 2.0 * nn * nn;
        let mut v: Vec<f64> =
            (0..len).map(|i| profile.eval((x_lo + i as i64) as f64 / nn)).collect();
        let mut cum = vec![0.0f64; len];
        let mut at_times = Vec::with_capacity(times.len());
        let mut integrals = Vec::with_capacity(times.len());
        let mut t_prev = 0.0;
        for &t in times {
            let dt = t - t_prev;
            if dt > 0.0 {
                let (v_new, seg_int) = evolve_segment(&v, lambda, dt);
                for i in 0..len {
                    cum[i] += seg_int[i];
                }
                v = v_new;
            }
            at_times.push(v.clone());
            integrals.push(cum.clone());
            t_prev = t;
        }
        Ok(WindowDensity { x_lo, at_times, integrals, times: times.to_vec() })
    }
}

/// One uniformisation pass returning `e^{dt L} v` and `\int_0^{dt} e^{s L} v ds`
/// for the closed-chain Laplacian with rate `lambda/2` per neighbour.
fn evolve_segment(v: &[f64], lambda: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let mu = lambda * dt;
    let win = poisson_window(mu, 1e-13);
    let m_hi = win.m_lo + win.weights.len() - 1;
    // Suffix tails: tail[j] = P[N > m_lo + j].
    let mut tail_in = vec![0.0f64; win.weights.len()];
    let mut acc = win.discarded * 0.5; // beyond m_hi
    for j in (0..win.weights.len()).rev() {
        tail_in[j] = acc;
        acc += win.weights[j];
    }
    let len = v.len();
    let mut cur = v.to_vec();
    let mut next = vec![0.0f64; len];
    let mut out = vec![0.0f64; len];
    let mut integral = vec![0.0f64; len];
    for m in 0..=m_hi {
        let (w, tail) = if m < win.m_lo {
            (0.0, 1.0)
        } else {
            (win.weights[m - win.m_lo], tail_in[m - win.m_lo])
        };
        let int_w = tail / lambda; // integral weight for P^m
        if w != 0.0 || int_w != 0.0 {
            for i in 0..len {
                out[i] += w * cur[i];
                integral[i] += int_w * cur[i];
            }
        }
        if m == m_hi {
            break;
        }
        // next = P cur, P the lazy reflected walk step.
        for i in 0..len {
            let left = if i > 0 { cur[i - 1] } else { cur[0] };
            let right = if i + 1 < len { cur[i + 1] } else { cur[len - 1] };
            next[i] = 0.5 * (left + right);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    (out, integral)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_field() -> ContinuumField {
        ContinuumField::new(
            Profile::tanh_ramp(0.3, 0.7, 0.0, 0.5).unwrap(),
            QuadratureSettings::default(),
        )
    }

    #[test]
    fn constant_profile_is_stationary() {
        let f = ContinuumField::new(Profile::constant(0.42).unwrap(), QuadratureSettings::default());
        assert_eq!(f.density(1.3, -2.0).unwrap(), 0.42);
        assert_eq!(f.gradient(1.3, -2.0).unwrap(), 0.0);
        assert_eq!(f.source(1.3, -2.0).unwrap(), 0.0);
    }

    #[test]
    fn identity_limit_as_t_to_zero() {
        let f = tanh_field();
        for &u in &[-0.7, 0.0, 0.4] {
            let v = f.density(1e-8, u).unwrap();
            assert!((v - f.profile().eval(u)).abs() < 1e-6, "u={u}");
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let f = tanh_field();
        let h = 1e-5;
        for &(t, u) in &[(0.1, 0.0), (0.5, 0.3), (1.0, -0.8)] {
            let fd = (f.density(t, u + h).unwrap() - f.density(t, u - h).unwrap()) / (2.0 * h);
            let g = f.gradient(t, u).unwrap();
            assert!(
                (g - fd).abs() / fd.abs().max(1e-3) < 1e-5,
                "t={t} u={u}: {g} vs {fd}"
            );
        }
    }

    #[test]
    fn source_term_locally_linear_slope() {
        // Locally linear profile with slope b near u gives 2 b^2.
        let p = Profile::piecewise_linear(vec![(-10.0, 0.2), (10.0, 0.8)]).unwrap();
        let b = (0.8 - 0.2) / 20.0;
        let f = ContinuumField::new(p, QuadratureSettings::default());
        let s = f.source(0.01, 0.0).unwrap();
        assert!((s - 2.0 * b * b).abs() < 1e-6, "{s}");
    }

    #[test]
    fn source_matches_chi_finite_differences() {
        // d_t chi - Delta chi evaluated by central differences.
        let f = tanh_field();
        let (t, u, h) = (0.4, 0.2, 1e-4);
        let chi_at = |t: f64, u: f64| f.chi_at(t, u).unwrap();
        let dt = (chi_at(t + h, u) - chi_at(t - h, u)) / (2.0 * h);
        let lap = (chi_at(t, u + h) - 2.0 * chi_at(t, u) + chi_at(t, u - h)) / (h * h);
        let s = f.source(t, u).unwrap();
        assert!(
            ((dt - lap) - s).abs() / s.abs().max(1e-6) < 1e-4,
            "{} vs {s}",
            dt - lap
        );
    }

    #[test]
    fn maximum_principle_on_grid() {
        let f = tanh_field();
        let (lo, hi) = f.profile().bounds();
        for i in 0..8 {
            for j in 0..8 {
                let t = 0.02 + i as f64 * 0.25;
                let u = -2.0 + j as f64 * 0.55;
                let v = f.density(t, u).unwrap();
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn semigroup_property() {
        // Evolving rho(s, .) for time t-s reproduces rho(t, .).
        let f = tanh_field();
        let (s, t) = (0.3, 0.8);
        for &u in &[-0.5, 0.2, 1.0] {
            let direct = f.density(t, u).unwrap();
            let l = 9.0 * (2.0 * (t - s)).sqrt() + 1.0;
            let two_step = quad::integrate(
                |v| heat_kernel(t - s, u, v) * f.density(s, v).unwrap(),
                u - l,
                u + l,
                1e-9,
                1e-12,
                2000,
            )
            .unwrap()
            .value
                + brownian_tail_ge(t - s, l)
                    * (f.density(s, u - l).unwrap() + f.density(s, u + l).unwrap());
            assert!((direct - two_step).abs() < 1e-8, "u={u}: {direct} vs {two_step}");
        }
    }

    #[test]
    fn discrete_density_constant_profile() {
        let hf = HeatField::new(Profile::constant(0.37).unwrap(), 8, QuadratureSettings::default());
        let v = hf.discrete_density(3, 0.7).unwrap();
        assert!((v.value - 0.37).abs() < 1e-12);
    }

    #[test]
    fn discrete_density_maximum_principle() {
        let hf = HeatField::new(
            Profile::tanh_ramp(0.3, 0.7, 0.0, 0.5).unwrap(),
            6,
            QuadratureSettings::default(),
        );
        for &x in &[-12i64, -3, 0, 5, 20] {
            let v = hf.discrete_density(x, 0.4).unwrap().value;
            assert!(v > 0.3 - 1e-10 && v < 0.7 + 1e-10);
        }
    }

    #[test]
    fn discrete_time_integral_constant() {
        let hf = HeatField::new(Profile::constant(0.25).unwrap(), 10, QuadratureSettings::default());
        let v = hf.discrete_density_time_integral(0, 2.0).unwrap();
        assert!((v.value - 0.5).abs() < 1e-10);
        assert_eq!(hf.discrete_density_time_integral(0, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn discrete_time_integral_tolerance_self_consistency() {
        // Halving tolerances moves the result by less than the reported bound.
        let p = Profile::tanh_ramp(0.3, 0.7, 0.0, 0.5).unwrap();
        let mut q = QuadratureSettings::default();
        q.abs_tol = 1e-8;
        q.rel_tol = 1e-6;
        let hf = HeatField::new(p.clone(), 50, q);
        let a = hf.discrete_density_time_integral(0, 1.0).unwrap();
        q.abs_tol = 5e-9;
        q.rel_tol = 5e-7;
        let hf2 = HeatField::new(p, 50, q);
        let b = hf2.discrete_density_time_integral(0, 1.0).unwrap();
        assert!((a.value - b.value).abs() <= a.error.max(1e-12) * 10.0 + 1e-12);
    }

    #[test]
    fn window_density_matches_z_density_inside_margin() {
        // Closed-window solution agrees with the Z kernel far from boundary.
        let p = Profile::tanh_ramp(0.3, 0.7, 0.0, 0.5).unwrap();
        let n = 6;
        let t = 0.25;
        let margin = (6.0 * n as f64 * (2.0 * t as f64).sqrt()).ceil() as i64;
        let wd = WindowDensity::solve(&p, n, -margin - 2, margin + 2, &[t]).unwrap();
        let hf = HeatField::new(p, n, QuadratureSettings::default());
        for &x in &[-3i64, 0, 4] {
            let win = wd.at_times[0][(x - wd.x_lo) as usize];
            let z = hf.discrete_density(x, t).unwrap().value;
            assert!((win - z).abs() < 1e-9, "x={x}: {win} vs {z}");
        }
    }

    #[test]
    fn window_density_integral_constant() {
        let p = Profile::constant(0.5).unwrap();
        let wd = WindowDensity::solve(&p, 4, 0, 9, &[0.3, 1.0]).unwrap();
        for row in &wd.at_times {
            for v in row {
                assert!((v - 0.5).abs() < 1e-12);
            }
        }
        assert!((wd.integrals[0][3] - 0.15).abs() < 1e-10);
        assert!((wd.integrals[1][3] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn cache_reproduces_direct_at_nodes() {
        let f = tanh_field();
        let cache = DensityCache::build(&f, 1.0, -3.0, 3.0, 9, 33).unwrap();
        for (i, &t) in cache.t_nodes.iter().enumerate().step_by(2) {
            for (j, &u) in cache.u_nodes.iter().enumerate().step_by(7) {
                let direct = f.density(t, u).unwrap();
                assert!((cache.rho[i][j] - direct).abs() < 1e-10);
                let read = cache.density(&f, t, u).unwrap();
                assert!((read - direct).abs() < 1e-10, "t={t} u={u}");
            }
        }
        let mut c2 = cache.clone();
        c2.bypass = true;
        let direct = f.density(0.123, 0.456).unwrap();
        assert_eq!(c2.density(&f, 0.123, 0.456).unwrap(), direct);
    }
}
