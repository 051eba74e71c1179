//! Converter parameterization: configuration, module tolerances, load
//! derivation and clamp-inductor sizing.

mod clamp;
mod config;
mod tolerance;

pub use clamp::{conservative_inductor_bound, peak_clamp_current_bound, size_clamping_inductor};
pub(crate) use clamp::loop_constants;
pub use config::{ConverterConfig, EstimatorTuning, DEFAULT_DT_SIM, DEFAULT_DURATION, DEFAULT_V_FD};
pub use tolerance::{
    apply_tolerances, ModuleParams, ModuleSet, SpreadDistribution, ToleranceSpec,
    NO_SELF_DISCHARGE,
};

use crate::error::{Error, Result};

/// Load resistance drawing `p_rated` at the fundamental output amplitude
/// `m_a·v_dc/2` (load inductance neglected).
pub fn derive_load(cfg: &ConverterConfig) -> Result<f64> {
    if cfg.p_rated.is_nan() || cfg.p_rated <= 0.0 || cfg.m_a.is_nan() || cfg.m_a <= 0.0 {
        return Err(Error::Domain(format!(
            "load derivation needs p_rated > 0 and m_a > 0 (got {} W, {})",
            cfg.p_rated, cfg.m_a
        )));
    }
    let v_peak = cfg.m_a * cfg.v_dc / 2.0;
    Ok(v_peak * v_peak / (2.0 * cfg.p_rated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simulation_load() {
        let cfg = ConverterConfig::table3_simulation();
        let r = derive_load(&cfg).unwrap();
        assert_relative_eq!(r, 4320.0f64.powi(2) / 2.28e6, max_relative = 1e-12);
        assert!((r - 8.19).abs() < 0.01);
    }

    #[test]
    fn experimental_load() {
        let mut cfg = ConverterConfig::table3_experimental();
        cfg.m_a = 0.9;
        let r = derive_load(&cfg).unwrap();
        assert!((r - 2.68).abs() < 0.01, "{r}");
    }

    #[test]
    fn large_power_small_load() {
        let mut cfg = ConverterConfig::table3_simulation();
        cfg.p_rated = 1e15;
        assert!(derive_load(&cfg).unwrap() < 1e-6);
        cfg.p_rated = 0.0;
        assert!(derive_load(&cfg).is_err());
    }
}
