use crate::error::{Error, Result};
use crate::model::loop_constants;
use crate::modulation::Arm;

/// Closed-form clamp current after a voltage step `v_diff` across the
/// series RLC loop. Valid up to the first zero crossing, after which the
/// diode blocks.
pub fn analytic_clamp_current(v_diff: f64, l: f64, c_e: f64, r_sum: f64, t: f64) -> Result<f64> {
    let (alpha, wd) = loop_constants(l, c_e, r_sum)?;
    if t < 0.0 {
        return Err(Error::Domain(format!("negative time {t}")));
    }
    Ok(v_diff / (wd * l) * (-alpha * t).exp() * (wd * t).sin())
}

/// Average current of clamp branch `j` (1-based, `1..N-1`) predicted from
/// the arm current and the level-adjustment span.
#[allow(clippy::too_many_arguments)]
pub fn predicted_avg_clamp_current(
    j: usize,
    t: f64,
    omega: f64,
    m_a: f64,
    i_arm: f64,
    delta_a: f64,
    n: usize,
    arm: Arm,
) -> f64 {
    assert!(j >= 1 && j < n, "branch index {j} outside 1..{n}");
    let s = m_a * (omega * t).sin();
    let bypass = match arm {
        Arm::Upper => 0.5 * (1.0 + s),
        Arm::Lower => 0.5 * (1.0 - s),
    };
    let shape = ((n - j) * j) as f64 / (n - 1) as f64;
    (bypass * i_arm * delta_a * shape).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{PlantParams, PlantState, Stepper, Integrator};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn starts_at_zero() {
        assert_eq!(analytic_clamp_current(10.0, 10e-6, 3e-3, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn lossless_frequency_and_peak() {
        let (_, wd) = loop_constants(10e-6, 3e-3, 0.0).unwrap();
        assert_relative_eq!(wd, 5773.5027, max_relative = 1e-7);
        let peak = analytic_clamp_current(10.0, 10e-6, 3e-3, 0.0, PI / (2.0 * wd)).unwrap();
        assert_relative_eq!(peak, 173.205, max_relative = 1e-5);
    }

    #[test]
    fn overdamped_rejected() {
        assert!(analytic_clamp_current(10.0, 1e-6, 3e-3, 1.0, 1e-4).is_err());
    }

    #[test]
    fn predicted_average_examples() {
        let w = 2.0 * PI * 50.0;
        let t = 0.25 / 50.0;
        assert_eq!(predicted_avg_clamp_current(4, t, w, 0.9, 100.0, 0.0, 8, Arm::Upper), 0.0);
        assert_eq!(predicted_avg_clamp_current(4, t, w, 0.9, -100.0, 0.02, 8, Arm::Upper), 0.0);
        let i = predicted_avg_clamp_current(4, t, w, 0.9, 100.0, 0.02, 8, Arm::Upper);
        assert_relative_eq!(i, 0.95 * 100.0 * 0.02 * 16.0 / 7.0, max_relative = 1e-12);
        assert!((i - 4.34).abs() < 0.01);
        let lower = predicted_avg_clamp_current(4, t, w, 0.9, 100.0, 0.02, 8, Arm::Lower);
        assert_relative_eq!(lower, 0.05 * 100.0 * 0.02 * 16.0 / 7.0, max_relative = 1e-12);
    }

    /// Two modules, arm current held at zero, lower module bypassed: the
    /// simulated branch current must follow the damped sine.
    #[test]
    fn simulated_transient_matches_closed_form() {
        let (c, l, r, v_fd, v_diff) = (6e-3, 10e-6, 0.5e-3, 1.0, 10.0);
        let p = PlantParams {
            n: 2,
            v_dc: 0.0,
            l_arm: 5e-3,
            r_arm: 0.05,
            r_load: 8.0,
            l_load: 1e-4,
            l_clamp: l,
            r_clamp: r,
            r_cap: 0.0,
            v_fd,
            c: [vec![c; 2], vec![c; 2]],
            g_self: [vec![0.0; 2], vec![0.0; 2]],
        };
        let mut s = PlantState::charged(2, 1000.0);
        s.v_c_mut(Arm::Upper)[1] = 1000.0 + v_diff + 2.0 * v_fd;
        let mut stepper = Stepper::new(p, Integrator::Rk4);
        let dt = 1e-6;
        let c_e = c / 2.0;
        let peak = peak_of(v_diff, l, c_e, r);
        let mut worst = 0.0f64;
        let mut steps = 0;
        loop {
            stepper.step(&mut s, &[false, false], &[false, false], dt).unwrap();
            steps += 1;
            let sim = s.i_clamp(Arm::Upper)[0];
            if sim == 0.0 {
                break;
            }
            let exact = analytic_clamp_current(v_diff, l, c_e, r, s.t).unwrap();
            worst = worst.max((sim - exact).abs());
        }
        assert!(steps > 500, "conducted for {steps} steps");
        assert!(worst < 0.01 * peak, "max deviation {worst} vs peak {peak}");
    }

    fn peak_of(v: f64, l: f64, c_e: f64, r: f64) -> f64 {
        crate::model::peak_clamp_current_bound(v, l, c_e, r).unwrap()
    }
}
