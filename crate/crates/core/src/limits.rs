//! Numerical evaluation of the limiting Gaussian covariances of current,
//! occupation time and density field.
//!
//! Conventions, used consistently everywhere:
//!
//! * `p_t(u,v)` is the variance-`2t` Gaussian kernel;
//! * Brownian marginals use `Var(B_t) = 2t`, matching that kernel (this is
//!   what makes the equilibrium current/occupation cancellation exact);
//! * `chi(x) = x(1-x)`, and the source term is
//!   `d_tau chi - Delta chi = 2 (d_u rho)^2`;
//! * time-kernel integrals use the closed form
//!   `G_a(d) = int_0^a p_w(d) dw = 2 a p_a(d) - |d| erfc(|d|/2 sqrt(a))`,
//!   which removes every diagonal `1/sqrt` singularity analytically.
//!
//! The current/occupation covariance evaluators take the observable pairs
//! `(u1, s)` (first observable) and `(u2, t)` (second observable).

use crate::error::Result;
use crate::meanfield::ContinuumField;
use crate::profile::chi;
use crate::quad;
use crate::special::{
    brownian_tail_ge, brownian_tail_le, heat_kernel, heat_kernel_time_integral,
};
use crate::testfn::TestFunction;
use serde::Serialize;

/// A covariance value with an error estimate and per-term contributions.
#[derive(Debug, Clone, Serialize)]
pub struct LimitValue {
    pub value: f64,
    pub error_estimate: f64,
    pub term_breakdown: Vec<(String, f64)>,
}

impl LimitValue {
    fn from_terms(terms: Vec<(String, f64)>, error: f64) -> Self {
        let value = terms.iter().map(|t| t.1).sum();
        LimitValue { value, error_estimate: error, term_breakdown: terms }
    }

    /// Largest |term| in the breakdown.
    pub fn largest_term(&self) -> f64 {
        self.term_breakdown.iter().map(|t| t.1.abs()).fold(0.0, f64::max)
    }
}

struct Ctx<'a> {
    field: &'a ContinuumField,
    rel: f64,
    abs: f64,
    cutoff: f64,
    max_sub: usize,
}

impl<'a> Ctx<'a> {
    fn new(field: &'a ContinuumField) -> Self {
        let q = field.quad();
        Ctx {
            field,
            rel: q.rel_tol,
            abs: q.abs_tol,
            cutoff: q.cutoff_radius,
            max_sub: q.max_subdivisions,
        }
    }

    fn chi0(&self, u: f64) -> f64 {
        chi(self.field.profile().eval(u))
    }

    fn chi_rho(&self, r: f64, u: f64) -> f64 {
        self.field.chi_at(r, u).unwrap_or(f64::NAN)
    }

    fn src(&self, tau: f64, u: f64) -> f64 {
        self.field.source(tau, u).unwrap_or(f64::NAN)
    }

    fn int(&self, f: impl Fn(f64) -> f64, a: f64, b: f64, err: &mut f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        quad::integrate_acc(f, a, b, self.rel, self.abs, self.max_sub, err)
    }

    /// Outer level of a nested quadrature. Its absolute tolerance sits well
    /// above the inner integrals' noise floor, otherwise the outer rule
    /// chases noise and never converges.
    fn int_outer2(&self, f: impl Fn(f64) -> f64, a: f64, b: f64, err: &mut f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        quad::integrate_acc(f, a, b, self.rel.max(1e-8), self.abs.max(1e-9), self.max_sub, err)
    }

    /// Inner level of a nested quadrature (smooth Gaussian-type integrands).
    fn int_inner(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        Ok(quad::integrate(f, a, b, 1e-9, 1e-13, self.max_sub)?.value)
    }

    /// Spatial interval covering the observable locations, the profile's
    /// non-constant region and a Gaussian tail margin for horizon `t_max`.
    fn u_range(&self, centers: &[f64], t_max: f64) -> (f64, f64) {
        let l = self.cutoff * (2.0 * t_max.max(1e-12)).sqrt() + 1.0;
        let mut lo = centers.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if let Some((a, b)) = self.field.profile().active_range() {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo - l, hi + l)
    }

    /// Inner integral `I(r) = int p_a(u,u1) p_b(u,u2) chi(rho_r(u)) du`
    /// through the Gaussian product identity, stable down to `a, b -> 0`.
    fn kernel_pair_integral(&self, a: f64, b: f64, u1: f64, u2: f64, r: f64) -> Result<f64> {
        let c = a + b;
        if c <= 0.0 {
            return Ok(0.0);
        }
        let kern = heat_kernel(c, u1, u2);
        if kern == 0.0 {
            return Ok(0.0);
        }
        let nu = a * b / c;
        let mid = (b * u1 + a * u2) / c;
        if nu < 1e-14 {
            return Ok(kern * self.chi_rho(r, mid));
        }
        let l = self.cutoff * (2.0 * nu).sqrt();
        let body = self.int_inner(|u| heat_kernel(nu, u, mid) * self.chi_rho(r, u), mid - l, mid + l)?;
        let tail = brownian_tail_ge(nu, l);
        let tails = tail * (self.chi_rho(r, mid - l) + self.chi_rho(r, mid + l));
        Ok(kern * (body + tails))
    }
}

/// `E[J_{u1}(s) J_{u2}(t)]`: three static Brownian-tail integrals against
/// `chi(rho_0)` plus the dynamic double integral. The pairs are normalised
/// internally so that the left location is `<=` the right one.
pub fn cov_current_current(
    field: &ContinuumField,
    u1: f64,
    s: f64,
    u2: f64,
    t: f64,
) -> Result<LimitValue> {
    let (u1, s, u2, t) = if u1 <= u2 { (u1, s, u2, t) } else { (u2, t, u1, s) };
    let ctx = Ctx::new(field);
    let mut err = 0.0;
    if s <= 0.0 || t <= 0.0 {
        return Ok(LimitValue::from_terms(
            vec![
                ("static_left".into(), 0.0),
                ("static_middle".into(), 0.0),
                ("static_right".into(), 0.0),
                ("dynamic".into(), 0.0),
            ],
            0.0,
        ));
    }
    let l = ctx.cutoff * (2.0 * s.max(t)).sqrt();
    let t1 = ctx.int(
        |u| brownian_tail_ge(s, u1 - u) * brownian_tail_ge(t, u2 - u) * ctx.chi0(u),
        u1 - l,
        u1,
        &mut err,
    )?;
    err += 0.25 * brownian_tail_ge(s, l);
    let t2 = -ctx.int(
        |u| brownian_tail_le(s, u1 - u) * brownian_tail_ge(t, u2 - u) * ctx.chi0(u),
        u1,
        u2,
        &mut err,
    )?;
    let t3 = ctx.int(
        |u| brownian_tail_le(s, u1 - u) * brownian_tail_le(t, u2 - u) * ctx.chi0(u),
        u2,
        u2 + l,
        &mut err,
    )?;
    err += 0.25 * brownian_tail_ge(s, l);
    // Dynamic term, on the substitution r = (s ^ t) - w^2.
    let m = s.min(t);
    let sqrt_m = m.sqrt();
    let t4 = ctx.int_outer2(
        |w| {
            let r = (m - w * w).max(0.0);
            4.0 * w * ctx.kernel_pair_integral(s - r, t - r, u1, u2, r).unwrap_or(f64::NAN)
        },
        0.0,
        sqrt_m,
        &mut err,
    )?;
    Ok(LimitValue::from_terms(
        vec![
            ("static_left".into(), t1),
            ("static_middle".into(), t2),
            ("static_right".into(), t3),
            ("dynamic".into(), t4),
        ],
        err,
    ))
}

/// `E[Gamma_{u1}(s) Gamma_{u2}(t)]`.
///
/// The double time integral of the density-field covariance collapses, via
/// the closed-form time kernel, to
///
/// ```text
///   int_0^{s^t} [ chi(rho_r(u2)) G_{s-r}(d) + chi(rho_r(u1)) G_{t-r}(d) ] dr
/// - int_0^{s^t} dtau int du 2(d_u rho)^2 G_{s-tau}(u-u1) G_{t-tau}(u-u2)
/// ```
///
/// with `d = u1 - u2`; the chi factor pairs with the *earlier* of the two
/// time variables, which is what makes the expression symmetric under
/// `(u1,s) <-> (u2,t)` and what the joint MC validates.
pub fn cov_occupation_occupation(
    field: &ContinuumField,
    u1: f64,
    s: f64,
    u2: f64,
    t: f64,
) -> Result<LimitValue> {
    let ctx = Ctx::new(field);
    let mut err = 0.0;
    let m = s.min(t);
    if m <= 0.0 {
        return Ok(LimitValue::from_terms(
            vec![("static".into(), 0.0), ("source".into(), 0.0)],
            0.0,
        ));
    }
    let d = u1 - u2;
    let first = ctx.int(
        |r| {
            ctx.chi_rho(r, u2) * heat_kernel_time_integral(s - r, d)
                + ctx.chi_rho(r, u1) * heat_kernel_time_integral(t - r, d)
        },
        0.0,
        m,
        &mut err,
    )?;
    let source = if field.profile().is_constant() {
        0.0
    } else {
        let (ulo, uhi) = ctx.u_range(&[u1, u2], s.max(t));
        -ctx.int_outer2(
            |tau| {
                ctx.int_inner(
                    |u| {
                        ctx.src(tau, u)
                            * heat_kernel_time_integral(s - tau, u - u1)
                            * heat_kernel_time_integral(t - tau, u - u2)
                    },
                    ulo,
                    uhi,
                )
                .unwrap_or(f64::NAN)
            },
            0.0,
            m,
            &mut err,
        )?
    };
    Ok(LimitValue::from_terms(
        vec![("static".into(), first), ("source".into(), source)],
        err,
    ))
}

/// `E[Gamma_{u1}(s) J_{u2}(t)]`: the four-term occupation/current covariance,
/// with the current at `(u2, t)` and the occupation time at `(u1, s)`.
pub fn cov_occupation_current(
    field: &ContinuumField,
    u1: f64,
    s: f64,
    u2: f64,
    t: f64,
) -> Result<LimitValue> {
    let ctx = Ctx::new(field);
    let mut err = 0.0;
    if s <= 0.0 || t < 0.0 {
        return Ok(LimitValue::from_terms(
            vec![
                ("late_static".into(), 0.0),
                ("tail_static".into(), 0.0),
                ("source".into(), 0.0),
                ("initial_static".into(), 0.0),
            ],
            0.0,
        ));
    }
    let l = ctx.cutoff * (2.0 * s.max(t).max(1e-12)).sqrt() + (u1 - u2).abs();
    // Occupation times r in (t, s] see the current's horizon from above.
    let t1 = if s > t {
        ctx.int(
            |u| ctx.chi_rho(t, u) * heat_kernel_time_integral(s - t, u - u1),
            u2,
            u2.max(u1) + l,
            &mut err,
        )?
    } else {
        0.0
    };
    let t2 = ctx.int(
        |r| brownian_tail_ge(t - r, u2 - u1) * ctx.chi_rho(r, u1),
        0.0,
        s.min(t),
        &mut err,
    )?;
    let t3 = if field.profile().is_constant() {
        0.0
    } else {
        let (ulo, uhi) = ctx.u_range(&[u1, u2], s.max(t));
        -ctx.int_outer2(
            |tau| {
                ctx.int_inner(
                    |u| {
                        brownian_tail_ge(t, u2 - u)
                            * heat_kernel_time_integral(s - tau, u - u1)
                            * ctx.src(tau, u)
                    },
                    ulo,
                    uhi,
                )
                .unwrap_or(f64::NAN)
            },
            0.0,
            s.min(t),
            &mut err,
        )?
    };
    let t4 = -ctx.int(
        |u| ctx.chi0(u) * heat_kernel_time_integral(s, u - u1),
        u2,
        u2.max(u1) + l,
        &mut err,
    )?;
    Ok(LimitValue::from_terms(
        vec![
            ("late_static".into(), t1),
            ("tail_static".into(), t2),
            ("source".into(), t3),
            ("initial_static".into(), t4),
        ],
        err,
    ))
}

/// Single-location current covariance in the shifted coordinates of the
/// Jara–Landim formula; an independent numerical route cross-checked against
/// [`cov_current_current`] at `u1 = u2`.
pub fn cov_current_jaralandim(field: &ContinuumField, u: f64, s: f64, t: f64) -> Result<LimitValue> {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    let ctx = Ctx::new(field);
    let mut err = 0.0;
    if s <= 0.0 {
        return Ok(LimitValue::from_terms(
            vec![
                ("static_right".into(), 0.0),
                ("static_left".into(), 0.0),
                ("dynamic".into(), 0.0),
            ],
            0.0,
        ));
    }
    let l = ctx.cutoff * (2.0 * t).sqrt();
    let t1 = ctx.int(
        |v| chi(field.profile().eval(u - v)) * brownian_tail_ge(s, v) * brownian_tail_ge(t, v),
        0.0,
        l,
        &mut err,
    )?;
    let t2 = ctx.int(
        |v| chi(field.profile().eval(u - v)) * brownian_tail_le(s, v) * brownian_tail_le(t, v),
        -l,
        0.0,
        &mut err,
    )?;
    // Dynamic term without the Gaussian-product shortcut: direct kernel
    // product in the shifted variable, r = s - w^2.
    let t3 = ctx.int_outer2(
        |w| {
            let r = (s - w * w).max(0.0);
            let a = t - r;
            let b = s - r;
            let scale = (2.0 * a.min(b).max(1e-300)).sqrt() * ctx.cutoff;
            let inner = ctx
                .int_inner(
                    |v| {
                        self_chi(ctx.field, r, u - v)
                            * heat_kernel(a, 0.0, v)
                            * heat_kernel(b, 0.0, v)
                    },
                    -scale,
                    scale,
                )
                .unwrap_or(f64::NAN);
            4.0 * w * inner
        },
        0.0,
        s.sqrt(),
        &mut err,
    )?;
    Ok(LimitValue::from_terms(
        vec![
            ("static_right".into(), t1),
            ("static_left".into(), t2),
            ("dynamic".into(), t3),
        ],
        err,
    ))
}

fn self_chi(field: &ContinuumField, r: f64, u: f64) -> f64 {
    field.chi_at(r, u).unwrap_or(f64::NAN)
}

/// Both closed forms of the density-field covariance `E[Y_t(H) Y_s(G)]`
/// (`s <= t` required): the semigroup-anchored form and the
/// integrated-by-parts gradient form. They agree analytically; their
/// numerical difference is part of the acceptance gate.
#[derive(Debug, Clone, Serialize)]
pub struct DensityCovariance {
    pub form_semigroup: LimitValue,
    pub form_gradient: LimitValue,
}

impl DensityCovariance {
    pub fn difference(&self) -> f64 {
        self.form_semigroup.value - self.form_gradient.value
    }
}

pub fn cov_density_field(
    field: &ContinuumField,
    h: &TestFunction,
    g: &TestFunction,
    s: f64,
    t: f64,
) -> Result<DensityCovariance> {
    assert!(s <= t, "cov_density_field requires s <= t");
    let ctx = Ctx::new(field);
    let (h_lo, h_hi) = h.support();
    let (g_lo, g_hi) = g.support();
    let centers = [h_lo, h_hi, g_lo, g_hi];
    let (ulo, uhi) = ctx.u_range(&centers, t.max(1e-12));

    // Semigroup form: int (T_{t-s} H) G chi_s - source correction.
    let mut err0 = 0.0;
    let static0 = ctx.int(
        |u| h.semigroup(t - s, u) * g.eval(u) * ctx.chi_rho(s, u),
        g_lo,
        g_hi,
        &mut err0,
    )?;
    let source0 = if field.profile().is_constant() || s == 0.0 {
        0.0
    } else {
        -ctx.int_outer2(
            |r| {
                ctx.int_inner(
                    |u| h.semigroup(t - r, u) * g.semigroup(s - r, u) * ctx.src(r, u),
                    ulo,
                    uhi,
                )
                .unwrap_or(f64::NAN)
            },
            0.0,
            s,
            &mut err0,
        )?
    };
    let form_semigroup = LimitValue::from_terms(
        vec![("static".into(), static0), ("source".into(), source0)],
        err0,
    );

    // Gradient form: int (T_t H)(T_s G) chi_0 + 2 int grad grad chi_r.
    let mut err1 = 0.0;
    let static1 = ctx.int(
        |u| h.semigroup(t, u) * g.semigroup(s, u) * ctx.chi0(u),
        ulo,
        uhi,
        &mut err1,
    )?;
    let dynamic1 = if s == 0.0 {
        0.0
    } else {
        ctx.int_outer2(
            |w| {
                let r = (s - w * w).max(0.0);
                let inner = ctx
                    .int_inner(
                        |u| {
                            h.semigroup_gradient(t - r, u)
                                * g.semigroup_gradient(s - r, u)
                                * ctx.chi_rho(r, u)
                        },
                        ulo,
                        uhi,
                    )
                    .unwrap_or(f64::NAN);
                4.0 * w * inner
            },
            0.0,
            s.sqrt(),
            &mut err1,
        )?
    };
    let form_gradient = LimitValue::from_terms(
        vec![("static".into(), static1), ("dynamic".into(), dynamic1)],
        err1,
    );
    Ok(DensityCovariance { form_semigroup, form_gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::QuadratureSettings;
    use crate::profile::Profile;

    fn eq_field(rho: f64) -> ContinuumField {
        ContinuumField::new(Profile::constant(rho).unwrap(), QuadratureSettings::default())
    }

    fn tanh_field() -> ContinuumField {
        ContinuumField::new(
            Profile::tanh_ramp(0.3, 0.7, 0.0, 0.5).unwrap(),
            QuadratureSettings::default(),
        )
    }

    // Equilibrium closed forms, derived by hand from the covariance formulas:
    //   Var J(t)     = 2 chi sqrt(t / pi)
    //   Var Gamma(t) = 4 chi t^{3/2} / (3 sqrt(pi))
    fn var_jj(chi0: f64, t: f64) -> f64 {
        2.0 * chi0 * (t / std::f64::consts::PI).sqrt()
    }
    fn var_gg(chi0: f64, t: f64) -> f64 {
        4.0 * chi0 * t.powf(1.5) / (3.0 * std::f64::consts::PI.sqrt())
    }

    #[test]
    fn jj_zero_time() {
        let f = eq_field(0.5);
        assert_eq!(cov_current_current(&f, 0.0, 0.0, 0.0, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn jj_equilibrium_variance_closed_form() {
        let f = eq_field(0.5);
        for &t in &[0.5, 1.0, 4.0] {
            let v = cov_current_current(&f, 0.0, t, 0.0, t).unwrap();
            let expect = var_jj(0.25, t);
            assert!(
                (v.value - expect).abs() < 1e-7,
                "t={t}: {} vs {expect}",
                v.value
            );
        }
    }

    #[test]
    fn jj_hurst_quarter_ratio() {
        // Var(4)/Var(1) = 2 for variance ~ sqrt(t).
        let f = eq_field(0.5);
        let v4 = cov_current_current(&f, 0.0, 4.0, 0.0, 4.0).unwrap().value;
        let v1 = cov_current_current(&f, 0.0, 1.0, 0.0, 1.0).unwrap().value;
        assert!((v4 / v1 - 2.0).abs() < 1e-4);
    }

    #[test]
    fn jj_distant_points_decouple() {
        let f = eq_field(0.5);
        let t = 0.5;
        let far = 10.0 * (2.0 * t as f64).sqrt();
        let v = cov_current_current(&f, 0.0, t, far, t).unwrap().value;
        let v0 = cov_current_current(&f, 0.0, t, 0.0, t).unwrap().value;
        assert!(v.abs() < 1e-6 * v0);
    }

    #[test]
    fn gg_zero_time_and_constant_source() {
        let f = tanh_field();
        assert_eq!(cov_occupation_occupation(&f, 0.0, 0.0, 0.0, 1.0).unwrap().value, 0.0);
        let eq = eq_field(0.4);
        let v = cov_occupation_occupation(&eq, 0.3, 0.5, -0.2, 0.8).unwrap();
        let source = v.term_breakdown.iter().find(|t| t.0 == "source").unwrap().1;
        assert_eq!(source, 0.0);
    }

    #[test]
    fn gg_equilibrium_variance_closed_form() {
        let f = eq_field(0.5);
        for &t in &[0.5, 1.0, 2.0] {
            let v = cov_occupation_occupation(&f, 0.0, t, 0.0, t).unwrap();
            let expect = var_gg(0.25, t);
            assert!(
                (v.value - expect).abs() < 1e-8,
                "t={t}: {} vs {expect}",
                v.value
            );
        }
        // Hurst 3/4: Var(2t)/Var(t) = 2^{3/2}.
        let v2 = cov_occupation_occupation(&f, 0.0, 2.0, 0.0, 2.0).unwrap().value;
        let v1 = cov_occupation_occupation(&f, 0.0, 1.0, 0.0, 1.0).unwrap().value;
        assert!((v2 / v1 - 2.0f64.powf(1.5)).abs() < 1e-4);
    }

    #[test]
    fn gg_symmetry_out_of_equilibrium() {
        let f = tanh_field();
        let a = cov_occupation_occupation(&f, 0.0, 0.5, 0.4, 1.0).unwrap().value;
        let b = cov_occupation_occupation(&f, 0.4, 1.0, 0.0, 0.5).unwrap().value;
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn fbm_covariance_structure_in_equilibrium() {
        // C(s,t) = (v(s) + v(t) - v(|t-s|)) / 2 for both observables.
        let f = eq_field(0.5);
        let (s, t) = (0.5, 1.25);
        let jj = cov_current_current(&f, 0.0, s, 0.0, t).unwrap().value;
        let jj_expect = 0.5 * (var_jj(0.25, s) + var_jj(0.25, t) - var_jj(0.25, t - s));
        assert!((jj / jj_expect - 1.0).abs() < 1e-4, "{jj} vs {jj_expect}");
        let gg = cov_occupation_occupation(&f, 0.0, s, 0.0, t).unwrap().value;
        let gg_expect = 0.5 * (var_gg(0.25, s) + var_gg(0.25, t) - var_gg(0.25, t - s));
        assert!((gg / gg_expect - 1.0).abs() < 1e-4, "{gg} vs {gg_expect}");
    }

    #[test]
    fn gj_zero_current_time() {
        let f = tanh_field();
        let v = cov_occupation_current(&f, 0.3, 0.8, -0.1, 0.0).unwrap();
        assert!(v.value.abs() < 1e-10, "{}", v.value);
    }

    #[test]
    fn gj_equilibrium_same_time_cancels() {
        let f = eq_field(0.5);
        for &(u1, u2) in &[(0.0, 0.0), (0.0, 0.7)] {
            let v = cov_occupation_current(&f, u1, 1.0, u2, 1.0).unwrap();
            let scale = v.largest_term();
            assert!(scale > 0.0);
            assert!(v.value.abs() < 1e-6 * scale, "u2={u2}: {} vs {scale}", v.value);
        }
    }

    #[test]
    fn jl_matches_jj_at_equal_locations() {
        for f in [eq_field(0.5), tanh_field()] {
            for &(u, s, t) in &[(0.0, 0.5, 0.5), (0.3, 0.5, 1.0)] {
                let jl = cov_current_jaralandim(&f, u, s, t).unwrap().value;
                let jj = cov_current_current(&f, u, s, u, t).unwrap().value;
                assert!((jl - jj).abs() < 1e-6, "u={u} s={s} t={t}: {jl} vs {jj}");
            }
        }
    }

    #[test]
    fn jl_zero_time() {
        let f = tanh_field();
        assert_eq!(cov_current_jaralandim(&f, 0.0, 0.0, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn density_forms_agree_equilibrium_triangle() {
        let f = eq_field(0.5);
        let h = TestFunction::triangle(0.0, 1.0, 1.0);
        let g = TestFunction::triangle(0.3, 0.8, 1.0);
        let dc = cov_density_field(&f, &h, &g, 0.4, 0.9).unwrap();
        assert!(dc.difference().abs() < 1e-6, "{}", dc.difference());
    }

    #[test]
    fn density_forms_agree_out_of_equilibrium() {
        let f = tanh_field();
        let h = TestFunction::triangle(0.0, 1.0, 1.0);
        let g = TestFunction::triangle(-0.2, 0.6, 0.8);
        let dc = cov_density_field(&f, &h, &g, 0.3, 0.7).unwrap();
        assert!(
            dc.difference().abs() < 1e-6,
            "semigroup {} vs gradient {}",
            dc.form_semigroup.value,
            dc.form_gradient.value
        );
    }

    #[test]
    fn density_zero_function_and_t0() {
        let f = tanh_field();
        let h = TestFunction::triangle(0.0, 1.0, 0.0);
        let g = TestFunction::triangle(0.0, 1.0, 1.0);
        let dc = cov_density_field(&f, &h, &g, 0.2, 0.5).unwrap();
        assert!(dc.form_semigroup.value.abs() < 1e-12);
        // s = t = 0 reduces to int H G chi(rho_0).
        let h = TestFunction::triangle(0.1, 0.9, 1.3);
        let dc = cov_density_field(&f, &h, &g, 0.0, 0.0).unwrap();
        let direct = quad::integrate(
            |u| h.eval(u) * g.eval(u) * chi(f.profile().eval(u)),
            -1.0,
            1.0,
            1e-10,
            1e-13,
            2000,
        )
        .unwrap()
        .value;
        assert!((dc.form_semigroup.value - direct).abs() < 1e-8);
        assert!((dc.form_gradient.value - direct).abs() < 1e-8);
    }

    #[test]
    fn positive_semidefinite_spot_check() {
        // 3x3 covariance of (J_0(s), J_{0.4}(t), Gamma_0(s)) on a ramp.
        let f = tanh_field();
        let (s, t) = (0.5, 1.0);
        let jj = |a: f64, sa: f64, b: f64, tb: f64| {
            cov_current_current(&f, a, sa, b, tb).unwrap().value
        };
        let gg = |a: f64, sa: f64, b: f64, tb: f64| {
            cov_occupation_occupation(&f, a, sa, b, tb).unwrap().value
        };
        let gj = |a: f64, sa: f64, b: f64, tb: f64| {
            cov_occupation_current(&f, a, sa, b, tb).unwrap().value
        };
        let m = [
            [jj(0.0, s, 0.0, s), jj(0.0, s, 0.4, t), gj(0.0, s, 0.0, s)],
            [jj(0.0, s, 0.4, t), jj(0.4, t, 0.4, t), gj(0.0, s, 0.4, t)],
            [gj(0.0, s, 0.0, s), gj(0.0, s, 0.4, t), gg(0.0, s, 0.0, s)],
        ];
        // hand-rolled symmetric 3x3 eigenvalue bound: check leading minors
        let d1 = m[0][0];
        let d2 = m[0][0] * m[1][1] - m[0][1] * m[0][1];
        let d3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[1][2])
            - m[0][1] * (m[0][1] * m[2][2] - m[1][2] * m[0][2])
            + m[0][2] * (m[0][1] * m[1][2] - m[1][1] * m[0][2]);
        assert!(d1 > -1e-8 && d2 > -1e-8 && d3 > -1e-8, "{d1} {d2} {d3}");
    }
}
