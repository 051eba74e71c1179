//! Clamp-branch transient sizing.
//!
//! A forward-biased clamp branch forms a series RLC loop with the two module
//! capacitors in series (`c_e = C/2` for equal modules). For an initial
//! voltage difference `v` the underdamped current is
//!
//! ```text
//! i(t) = v / (ω_d L) · exp(-α t) · sin(ω_d t),   α = R/(2L),   ω_d² = 1/(L c_e) - α²
//! ```
//!
//! and peaks at `t_peak = atan(ω_d / α) / ω_d`.

use crate::error::{Error, Result};

/// Damping factor and damped angular frequency of the clamp loop.
pub(crate) fn loop_constants(l: f64, c_e: f64, r_sum: f64) -> Result<(f64, f64)> {
    if !(l > 0.0 && c_e > 0.0 && r_sum >= 0.0) {
        return Err(Error::Domain(format!(
            "clamp loop needs l > 0, c_e > 0, r_sum >= 0 (got l={l:e}, c_e={c_e:e}, r_sum={r_sum:e})"
        )));
    }
    let alpha = r_sum / (2.0 * l);
    let wd2 = 1.0 / (l * c_e) - alpha * alpha;
    if wd2 <= 0.0 {
        return Err(Error::Domain(format!(
            "clamp loop is not underdamped (l={l:e} H, c_e={c_e:e} F, r_sum={r_sum:e} ohm)"
        )));
    }
    Ok((alpha, wd2.sqrt()))
}

/// First-peak clamp current of the damped sine for a voltage step `v_diff_max`.
pub fn peak_clamp_current_bound(v_diff_max: f64, l: f64, c_e: f64, r_sum: f64) -> Result<f64> {
    let (alpha, wd) = loop_constants(l, c_e, r_sum)?;
    let t_peak = wd.atan2(alpha) / wd;
    Ok(v_diff_max / (wd * l) * (-alpha * t_peak).exp() * (wd * t_peak).sin())
}

/// Closed-form inductor sizing rule `L >= (R²/4 + v²/i²)·c_e`. Exact for
/// `r_sum = 0`, conservative otherwise.
pub fn conservative_inductor_bound(v_diff_max: f64, i_p_max: f64, c_e: f64, r_sum: f64) -> f64 {
    (r_sum * r_sum / 4.0 + (v_diff_max / i_p_max).powi(2)) * c_e
}

/// Smallest clamp inductance keeping the first current peak within
/// `i_p_max`. Bisects on the peak formula, which is monotone in `L`.
pub fn size_clamping_inductor(v_diff_max: f64, i_p_max: f64, c_e: f64, r_sum: f64) -> Result<f64> {
    if !(i_p_max > 0.0 && i_p_max.is_finite()) {
        return Err(Error::Domain(format!(
            "peak current rating must be > 0, got {i_p_max}"
        )));
    }
    if !(c_e > 0.0 && r_sum >= 0.0 && v_diff_max >= 0.0) {
        return Err(Error::Domain(format!(
            "need c_e > 0, r_sum >= 0, v_diff_max >= 0 (got c_e={c_e:e}, r_sum={r_sum:e}, v={v_diff_max:e})"
        )));
    }
    if r_sum == 0.0 {
        return Ok(c_e * (v_diff_max / i_p_max).powi(2));
    }

    // Underdamped requires L > R²·c_e/4.
    let l_crit = r_sum * r_sum * c_e / 4.0;
    let peak = |l: f64| peak_clamp_current_bound(v_diff_max, l, c_e, r_sum);

    let mut lo = l_crit * (1.0 + 1e-9);
    if peak(lo)? <= i_p_max {
        // Every underdamped inductance already satisfies the rating.
        return Ok(lo);
    }
    let mut hi = conservative_inductor_bound(v_diff_max, i_p_max, c_e, r_sum).max(2.0 * lo);
    while peak(hi)? > i_p_max {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if peak(mid)? > i_p_max {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * hi {
            break;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Brute-force series RLC: L di/dt = v_c - R i, dv_c/dt = -i / c_e.
    fn integrate_first_peak(v: f64, l: f64, c_e: f64, r: f64) -> f64 {
        let dt = 1e-9;
        let (mut i, mut vc, mut peak) = (0.0f64, v, 0.0f64);
        loop {
            let f = |i: f64, vc: f64| ((vc - r * i) / l, -i / c_e);
            let (a1, b1) = f(i, vc);
            let (a2, b2) = f(i + 0.5 * dt * a1, vc + 0.5 * dt * b1);
            let (a3, b3) = f(i + 0.5 * dt * a2, vc + 0.5 * dt * b2);
            let (a4, b4) = f(i + dt * a3, vc + dt * b3);
            i += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            vc += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            if i < peak {
                return peak;
            }
            peak = i;
        }
    }

    #[test]
    fn lossless_peak_matches_characteristic_impedance() {
        let peak = peak_clamp_current_bound(10.0, 10e-6, 3e-3, 0.0).unwrap();
        assert_relative_eq!(peak, 10.0 * (3e-3f64 / 10e-6).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(peak, 173.205, max_relative = 1e-5);
        let oracle = integrate_first_peak(10.0, 10e-6, 3e-3, 0.0);
        assert_relative_eq!(peak, oracle, max_relative = 1e-5);
    }

    #[test]
    fn lossy_peak_matches_integration() {
        let (v, l, c, r) = (25.0, 10e-6, 3e-3, 0.02);
        let peak = peak_clamp_current_bound(v, l, c, r).unwrap();
        let oracle = integrate_first_peak(v, l, c, r);
        assert_relative_eq!(peak, oracle, max_relative = 1e-5);
    }

    #[test]
    fn zero_difference_zero_current() {
        assert_eq!(peak_clamp_current_bound(0.0, 10e-6, 3e-3, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn doubling_inductance_scales_by_inverse_sqrt2() {
        let a = peak_clamp_current_bound(10.0, 10e-6, 3e-3, 0.0).unwrap();
        let b = peak_clamp_current_bound(10.0, 20e-6, 3e-3, 0.0).unwrap();
        assert_relative_eq!(b / a, 1.0 / 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn overdamped_is_domain_error() {
        assert!(matches!(
            peak_clamp_current_bound(10.0, 1e-6, 3e-3, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lossless_sizing_is_closed_form() {
        let l = size_clamping_inductor(10.0, 173.2, 3e-3, 0.0).unwrap();
        assert_relative_eq!(l, 3e-3 * (10.0f64 / 173.2).powi(2), max_relative = 1e-15);
        assert_relative_eq!(l, 1.0e-5, max_relative = 1e-3);
        assert_eq!(l, conservative_inductor_bound(10.0, 173.2, 3e-3, 0.0));
    }

    #[test]
    fn sizing_is_tight() {
        let (v, i_max, c, r) = (50.0, 300.0, 3e-3, 4.5e-3);
        let l = size_clamping_inductor(v, i_max, c, r).unwrap();
        let peak = peak_clamp_current_bound(v, l, c, r).unwrap();
        assert!(peak <= i_max && peak > 0.999 * i_max, "{peak}");
        assert!(l <= conservative_inductor_bound(v, i_max, c, r));
    }

    #[test]
    fn nonpositive_rating_rejected() {
        assert!(size_clamping_inductor(10.0, 0.0, 3e-3, 0.0).is_err());
        assert!(size_clamping_inductor(10.0, -1.0, 3e-3, 0.0).is_err());
    }

    #[test]
    fn generous_rating_returns_critical_damping() {
        // Peak never exceeds 2v/(e R) in the underdamped range.
        let (v, c, r) = (1.0, 3e-3, 0.1);
        let l = size_clamping_inductor(v, 1e6, c, r).unwrap();
        assert_relative_eq!(l, r * r * c / 4.0, max_relative = 1e-6);
    }
}
