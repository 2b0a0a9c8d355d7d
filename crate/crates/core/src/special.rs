//! Gaussian kernels, Brownian tail probabilities, the continuous-time
//! random-walk kernel, and Poisson weights for uniformisation.
//!
//! Throughout, `p_t(u, v) = exp{-(u-v)^2/4t}/sqrt(4 pi t)` is the variance-2t
//! Gaussian kernel and all Brownian marginals use `Var(B_t) = 2t`, matching
//! that kernel.

use libm::erfc;
use statrs::function::gamma::ln_gamma;

pub const SQRT_4PI: f64 = 3.5449077018110318; // sqrt(4 pi)

/// Gaussian heat kernel `p_t(u, v)`, variance `2t`.
pub fn heat_kernel(t: f64, u: f64, v: f64) -> f64 {
    debug_assert!(t > 0.0);
    let d = u - v;
    (-d * d / (4.0 * t)).exp() / (SQRT_4PI * t.sqrt())
}

/// Spatial derivative `\partial_u p_t(u, v)`.
pub fn heat_kernel_du(t: f64, u: f64, v: f64) -> f64 {
    let d = u - v;
    -d / (2.0 * t) * heat_kernel(t, u, v)
}

/// `P[B_t >= a]` for a centred Brownian motion with `Var(B_t) = 2t`.
///
/// At `t = 0` this degenerates to the indicator `1{a <= 0}` (with value 1/2
/// at `a = 0`).
pub fn brownian_tail_ge(t: f64, a: f64) -> f64 {
    if t <= 0.0 {
        return if a > 0.0 {
            0.0
        } else if a < 0.0 {
            1.0
        } else {
            0.5
        };
    }
    0.5 * erfc(a / (4.0 * t).sqrt())
}

/// `P[B_t <= a]`, same convention.
pub fn brownian_tail_le(t: f64, a: f64) -> f64 {
    brownian_tail_ge(t, -a)
}

/// Time-integrated heat kernel `G_a(d) = \int_0^a p_w(u, v) dw`, `d = u - v`.
///
/// Closed form (substitute `y = d^2/4w` and reduce the incomplete gamma):
/// `2 a p_a(d) - (|d|/2) erfc(|d| / 2 sqrt(a))`.
pub fn heat_kernel_time_integral(a: f64, d: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    2.0 * a * heat_kernel(a, d, 0.0) - 0.5 * d.abs() * erfc(d.abs() / (2.0 * a.sqrt()))
}

/// Kernel of the continuous-time simple random walk with total jump rate
/// `2 lambda` (rate `lambda` per direction) at elapsed argument `z = 2 lambda t`:
/// `q(k) = e^{-z} I_k(z)` for `k = 0..=k_max`.
///
/// Computed with Miller's backward recurrence and normalised through
/// `I_0 + 2 sum_{k>=1} I_k = e^z`, so the returned values sum (over all of
/// `Z`, via symmetry) to exactly 1 up to the `k > start` remainder, which is
/// below machine precision by construction.
///
/// Above `z = BESSEL_GAUSSIAN_SWITCH` a local-CLT Gaussian surrogate with the
/// exact variance `z` is used instead; the switchover is validated in tests.
pub fn walk_kernel(z: f64, k_max: usize) -> Vec<f64> {
    assert!(z >= 0.0);
    if z == 0.0 {
        let mut q = vec![0.0; k_max + 1];
        q[0] = 1.0;
        return q;
    }
    if z > BESSEL_GAUSSIAN_SWITCH {
        return gaussian_kernel_surrogate(z, k_max);
    }
    // Start the downward recurrence far enough above k_max that the
    // contamination by the dominant solution, ~ (I_start / I_kmax)^2, is
    // below machine precision.
    let start = (k_max + 2 + (2.5 * z.sqrt()).ceil() as usize + 60)
        .max((z.ceil() as usize) / 4 + k_max + 40);
    let mut q = vec![0.0; k_max + 1];
    let mut f_next = 0.0f64; // I_{k+1}
    let mut f_curr = 1e-280f64; // I_k, arbitrary scale
    let mut sum = 0.0f64; // 2 sum_{k>=1} I_k in the arbitrary scale
    for k in (1..=start).rev() {
        let f_prev = f_next + (2.0 * k as f64 / z) * f_curr;
        if k <= k_max {
            q[k] = f_curr;
        }
        sum += 2.0 * f_curr;
        f_next = f_curr;
        f_curr = f_prev;
        if f_curr > 1e260 {
            let scale = 1e-260;
            f_curr *= scale;
            f_next *= scale;
            sum *= scale;
            for v in q.iter_mut() {
                *v *= scale;
            }
        }
    }
    // f_curr now holds I_0.
    q[0] = f_curr;
    sum += f_curr;
    for v in q.iter_mut() {
        *v /= sum;
    }
    q
}

/// Argument above which [`walk_kernel`] switches to the Gaussian local-CLT
/// form. At this scale the relative difference is far below 1e-10.
pub const BESSEL_GAUSSIAN_SWITCH: f64 = 1e8;

fn gaussian_kernel_surrogate(z: f64, k_max: usize) -> Vec<f64> {
    // e^{-z} I_k(z) ~ exp(-k^2/2z) / sqrt(2 pi z) * (1 + (k^4/z^2 ... ))
    // Sufficient beyond the switch threshold.
    let norm = 1.0 / (2.0 * std::f64::consts::PI * z).sqrt();
    (0..=k_max)
        .map(|k| {
            let x = k as f64;
            norm * (-x * x / (2.0 * z)).exp()
        })
        .collect()
}

/// Radius beyond which `e^{-z} I_k(z) < floor` (Gaussian tail heuristic with
/// a safety margin); used to size kernel truncations.
pub fn walk_kernel_radius(z: f64, floor: f64) -> usize {
    if z <= 0.0 {
        return 1;
    }
    let l = (-floor.ln()).max(1.0) + 0.5 * (1.0 + z).ln();
    ((2.0 * z * l).sqrt().ceil() as usize) + 8
}

/// Poisson weights `w_m = e^{-mu} mu^m / m!` for `m` in a window around the
/// mode covering all but `tail_tol` of the mass.
pub struct PoissonWindow {
    pub m_lo: usize,
    /// `weights[j]` is the pmf at `m_lo + j`.
    pub weights: Vec<f64>,
    /// Total pmf mass outside the window.
    pub discarded: f64,
}

pub fn poisson_window(mu: f64, tail_tol: f64) -> PoissonWindow {
    assert!(mu >= 0.0);
    if mu == 0.0 {
        return PoissonWindow { m_lo: 0, weights: vec![1.0], discarded: 0.0 };
    }
    let mode = mu.floor() as usize;
    let w_mode = (-mu + (mode as f64) * mu.ln() - ln_gamma(mode as f64 + 1.0)).exp();
    // The pmf decays at least geometrically a few sds away from the mode, so
    // a per-term cutoff of tail_tol * small factor bounds each tail sum.
    let cut = tail_tol * 1e-2 / (1.0 + mu.sqrt());
    let mut below = Vec::new();
    let mut w = w_mode;
    let mut m = mode;
    while m > 0 {
        w *= m as f64 / mu; // pmf(m-1)
        below.push(w);
        m -= 1;
        if w < cut {
            break;
        }
    }
    let m_lo = m;
    let mut weights: Vec<f64> = below.into_iter().rev().collect();
    weights.push(w_mode);
    let mut w = w_mode;
    let mut m = mode;
    loop {
        w *= mu / (m as f64 + 1.0); // pmf(m+1)
        weights.push(w);
        m += 1;
        if w < cut {
            break;
        }
    }
    let total: f64 = weights.iter().sum();
    let discarded = (1.0 - total).max(0.0);
    PoissonWindow { m_lo, weights, discarded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    #[test]
    fn kernel_diagonal_and_symmetry() {
        let t = 0.37;
        assert!((heat_kernel(t, 1.2, 1.2) - 1.0 / (SQRT_4PI * t.sqrt())).abs() < 1e-15);
        assert!((heat_kernel(t, 0.3, -0.9) - heat_kernel(t, -0.9, 0.3)).abs() < 1e-16);
    }

    #[test]
    fn kernel_normalises() {
        let t = 0.8;
        let r = integrate(|v| heat_kernel(t, 0.1, v), -30.0, 30.0, 1e-10, 1e-13, 500).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn time_integral_matches_quadrature() {
        for &(a, d) in &[(0.5, 0.0), (0.5, 0.7), (2.0, 3.0), (0.01, 0.1)] {
            let direct = integrate(|w| heat_kernel(w, d, 0.0), 1e-14, a, 1e-10, 1e-13, 20_000)
                .unwrap()
                .value;
            let closed = heat_kernel_time_integral(a, d);
            assert!(
                (direct - closed).abs() < 2e-7,
                "a={a} d={d}: {direct} vs {closed}"
            );
        }
    }

    #[test]
    fn brownian_tail_convention() {
        // Var(B_t) = 2t: P[B_1 >= sqrt(2)] = standard normal tail at 1.
        let q = brownian_tail_ge(1.0, std::f64::consts::SQRT_2);
        assert!((q - 0.15865525393145707).abs() < 1e-12);
        assert_eq!(brownian_tail_ge(0.0, 1.0), 0.0);
        assert_eq!(brownian_tail_ge(0.0, -1.0), 1.0);
    }

    #[test]
    fn walk_kernel_small_z_series() {
        // Direct series I_k(z) = sum_j (z/2)^{2j+k} / (j! (j+k)!)
        let z = 0.3;
        let q = walk_kernel(z, 6);
        for k in 0..=6usize {
            let mut term = (z / 2.0f64).powi(k as i32)
                / (1..=k).map(|i| i as f64).product::<f64>();
            let mut s = term;
            for j in 1..60 {
                term *= (z / 2.0) * (z / 2.0) / (j as f64 * (j + k) as f64);
                s += term;
            }
            let expected = s * (-z).exp();
            assert!(
                (q[k] - expected).abs() < 1e-15,
                "k={k}: {} vs {}",
                q[k],
                expected
            );
        }
    }

    #[test]
    fn walk_kernel_moments() {
        // Sum q = 1 and sum k^2 q = z (variance of the walk).
        for &z in &[1.0, 25.0, 400.0, 4.0e4] {
            let kmax = walk_kernel_radius(z, 1e-16);
            let q = walk_kernel(z, kmax);
            let total: f64 = q[0] + 2.0 * q[1..].iter().sum::<f64>();
            let var: f64 = 2.0 * q.iter().enumerate().map(|(k, v)| (k * k) as f64 * v).sum::<f64>();
            assert!((total - 1.0).abs() < 1e-12, "z={z} total={total}");
            assert!((var - z).abs() / z < 1e-10, "z={z} var={var}");
        }
    }

    #[test]
    fn gaussian_switchover_is_smooth() {
        // Just below the switch the exact series and the surrogate agree.
        let z = BESSEL_GAUSSIAN_SWITCH * 0.999;
        let q_exact = walk_kernel(z, 2000);
        let q_gauss = gaussian_kernel_surrogate(z, 2000);
        for k in (0..2000).step_by(137) {
            let rel = (q_exact[k] - q_gauss[k]).abs() / q_exact[k];
            assert!(rel < 1e-7, "k={k} rel={rel}");
        }
    }

    #[test]
    fn poisson_window_mass_and_moments() {
        for &mu in &[0.3, 7.0, 1500.0, 4.0e4] {
            let w = poisson_window(mu, 1e-12);
            let total: f64 = w.weights.iter().sum();
            // discarded tail + fp accumulation across the ~sqrt(mu)-wide window
            assert!((total - 1.0).abs() < 1e-10, "mu={mu} total={total}");
            let mean: f64 = w
                .weights
                .iter()
                .enumerate()
                .map(|(j, v)| (w.m_lo + j) as f64 * v)
                .sum();
            assert!((mean - mu).abs() / mu.max(1.0) < 1e-9, "mu={mu} mean={mean}");
        }
    }
}
