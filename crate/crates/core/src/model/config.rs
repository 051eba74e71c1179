use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Kalman-filter tuning. `None` fields resolve to defaults sized from the
/// converter ratings (see the accessor methods on [`ConverterConfig`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorTuning {
    /// Process-noise variance added to every state per sample (V²).
    pub q_process: f64,
    /// Measurement-noise variance of the arm-voltage sensor (V²).
    pub r_meas: Option<f64>,
    /// Initial standard deviation of each state (V).
    pub p0_std: Option<f64>,
    /// Initial estimate of every module voltage (V).
    pub x0: Option<f64>,
    /// Require `x[i+1] > x[i] + 2·v_fd` (instead of `x[i+1] > x[i]`) before a
    /// clamp branch is considered forward-biased.
    pub clamp_threshold: bool,
    /// Use each module's own capacitance (known from commissioning) instead
    /// of the nominal value for every module.
    pub module_capacitance: bool,
}

impl Default for EstimatorTuning {
    fn default() -> Self {
        Self {
            q_process: 1e-4,
            r_meas: None,
            p0_std: None,
            x0: None,
            clamp_threshold: true,
            module_capacitance: true,
        }
    }
}

/// Physical, control, sensing and run parameters of a single-phase
/// diode-clamped MMC. All quantities are SI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverterConfig {
    pub n_modules_per_arm: usize,
    pub v_dc: f64,
    pub v_sm_rated: f64,
    pub c_nominal: f64,
    pub r_cap: f64,
    pub l_arm: f64,
    pub r_arm: f64,
    pub l_clamp: f64,
    pub r_clamp: f64,
    pub v_fd: f64,
    pub f_carrier: f64,
    pub f_out: f64,
    pub m_a: f64,
    pub delta_a: f64,
    pub sign_adaptive: bool,
    pub p_rated: f64,
    pub l_load: f64,
    pub f_sample: f64,
    pub dt_sim: f64,
    pub sigma_v: f64,
    pub sigma_i: f64,
    pub duration: f64,
    pub rng_seed: u64,
    pub estimator: EstimatorTuning,
}

pub const DEFAULT_V_FD: f64 = 1.0;
pub const DEFAULT_DT_SIM: f64 = 1e-6;
pub const DEFAULT_DURATION: f64 = 1.0;

impl ConverterConfig {
    /// The 16-module (N = 8) simulation system.
    pub fn table3_simulation() -> Self {
        let mut cfg = Self {
            n_modules_per_arm: 8,
            v_dc: 9.6e3,
            v_sm_rated: 1.2e3,
            c_nominal: 6e-3,
            r_cap: 2e-3,
            l_arm: 5e-3,
            r_arm: 50e-3,
            l_clamp: 10e-6,
            r_clamp: 0.5e-3,
            v_fd: DEFAULT_V_FD,
            f_carrier: 2e3,
            f_out: 50.0,
            m_a: 0.9,
            delta_a: 0.0,
            sign_adaptive: false,
            p_rated: 1.14e6,
            l_load: 0.1e-3,
            f_sample: 10e3,
            dt_sim: DEFAULT_DT_SIM,
            sigma_v: 0.0,
            sigma_i: 0.0,
            duration: DEFAULT_DURATION,
            rng_seed: 1,
            estimator: EstimatorTuning::default(),
        };
        cfg.sigma_v = cfg.default_sigma_v();
        cfg.sigma_i = cfg.default_sigma_i();
        cfg
    }

    /// Scaled-down laboratory system (N = 5 per arm, 230 V link).
    pub fn table3_experimental() -> Self {
        let mut cfg = Self {
            n_modules_per_arm: 5,
            v_dc: 230.0,
            v_sm_rated: 45.0,
            c_nominal: 2.7e-3,
            r_cap: 2e-3,
            l_arm: 2e-3,
            r_arm: 20e-3,
            l_clamp: 10e-6,
            r_clamp: 0.5e-3,
            v_fd: DEFAULT_V_FD,
            f_carrier: 2e3,
            f_out: 50.0,
            m_a: 0.9,
            delta_a: 0.0,
            sign_adaptive: false,
            p_rated: 2e3,
            l_load: 0.1e-3,
            f_sample: 10e3,
            dt_sim: DEFAULT_DT_SIM,
            sigma_v: 0.0,
            sigma_i: 0.0,
            duration: DEFAULT_DURATION,
            rng_seed: 1,
            estimator: EstimatorTuning::default(),
        };
        cfg.sigma_v = cfg.default_sigma_v();
        cfg.sigma_i = cfg.default_sigma_i();
        cfg
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_out
    }

    pub fn t_sample(&self) -> f64 {
        1.0 / self.f_sample
    }

    pub fn t_switch(&self) -> f64 {
        1.0 / self.f_carrier
    }

    /// Peak arm current at rated power: DC share plus half the output peak.
    pub fn rated_arm_current(&self) -> f64 {
        let i_dc = self.p_rated / self.v_dc;
        let i_out_peak = 2.0 * self.p_rated / (self.m_a.max(1e-9) * self.v_dc / 2.0);
        i_dc + i_out_peak / 2.0
    }

    /// 0.5 % of the half DC-link voltage.
    pub fn default_sigma_v(&self) -> f64 {
        0.005 * self.v_dc / 2.0
    }

    /// 0.5 % of the rated arm current.
    pub fn default_sigma_i(&self) -> f64 {
        0.005 * self.rated_arm_current()
    }

    pub fn steps_per_sample(&self) -> usize {
        (self.t_sample() / self.dt_sim).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        (self.duration / self.dt_sim).round() as usize
    }

    pub fn r_meas(&self) -> f64 {
        self.estimator
            .r_meas
            .unwrap_or_else(|| self.sigma_v.max(0.01 * self.v_sm_rated).powi(2))
    }

    pub fn p0_std(&self) -> f64 {
        self.estimator.p0_std.unwrap_or(0.1 * self.v_sm_rated)
    }

    pub fn x0(&self) -> f64 {
        self.estimator
            .x0
            .unwrap_or(self.v_dc / self.n_modules_per_arm as f64)
    }

    /// Checks every field. Returns non-fatal warnings on success.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        fn positive(key: &str, unit: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("finite value > 0 ({unit})"), v))
            }
        }
        fn non_negative(key: &str, unit: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("finite value >= 0 ({unit})"), v))
            }
        }

        if self.n_modules_per_arm < 2 {
            return Err(ConfigError::invalid(
                "converter.n_modules_per_arm",
                "integer >= 2 (dimensionless)",
                self.n_modules_per_arm,
            ));
        }
        positive("converter.v_dc", "V", self.v_dc)?;
        positive("converter.v_sm_rated", "V", self.v_sm_rated)?;
        positive("converter.c_nominal", "F", self.c_nominal)?;
        non_negative("converter.r_cap", "ohm", self.r_cap)?;
        positive("converter.l_arm", "H", self.l_arm)?;
        non_negative("converter.r_arm", "ohm", self.r_arm)?;
        positive("converter.l_clamp", "H", self.l_clamp)?;
        non_negative("converter.r_clamp", "ohm", self.r_clamp)?;
        non_negative("converter.v_fd", "V", self.v_fd)?;
        positive("converter.p_rated", "W", self.p_rated)?;
        non_negative("converter.l_load", "H", self.l_load)?;
        positive("modulation.f_carrier", "Hz", self.f_carrier)?;
        positive("modulation.f_out", "Hz", self.f_out)?;
        if !(0.0..=1.0).contains(&self.m_a) {
            return Err(ConfigError::invalid(
                "modulation.m_a",
                "value in [0, 1] (dimensionless)",
                self.m_a,
            ));
        }
        non_negative("modulation.delta_a", "dimensionless", self.delta_a)?;
        positive("sensing.f_sample", "Hz", self.f_sample)?;
        non_negative("sensing.sigma_v", "V", self.sigma_v)?;
        non_negative("sensing.sigma_i", "A", self.sigma_i)?;
        positive("run.dt_sim", "s", self.dt_sim)?;
        non_negative("run.duration", "s", self.duration)?;

        let dt_max = 1.0 / (20.0 * self.f_carrier);
        if self.dt_sim > dt_max * (1.0 + 1e-12) {
            return Err(ConfigError::invalid(
                "run.dt_sim",
                format!("step <= 1/(20 f_carrier) = {dt_max:e} s"),
                self.dt_sim,
            ));
        }
        let ratio = self.t_sample() / self.dt_sim;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(ConfigError::invalid(
                "sensing.f_sample",
                format!(
                    "sampling period that is an integer multiple of run.dt_sim = {:e} s",
                    self.dt_sim
                ),
                self.f_sample,
            ));
        }

        let tuning = &self.estimator;
        non_negative("estimator.q_process", "V^2", tuning.q_process)?;
        if let Some(r) = tuning.r_meas {
            positive("estimator.r_meas", "V^2", r)?;
        }
        if let Some(p) = tuning.p0_std {
            non_negative("estimator.p0_std", "V", p)?;
        }
        if let Some(x) = tuning.x0 {
            non_negative("estimator.x0", "V", x)?;
        }

        let mut warnings = Vec::new();
        let nominal = self.n_modules_per_arm as f64 * self.v_sm_rated;
        if (nominal - self.v_dc).abs() > 1e-6 * self.v_dc {
            let msg = format!(
                "v_dc = {} V differs from N * v_sm_rated = {} V",
                self.v_dc, nominal
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(warnings)
    }
}
