//! Arm-level Kalman estimation of module capacitor voltages from one arm
//! voltage and one arm current measurement.

mod kalman;
mod model;

pub use kalman::{kf_predict, kf_update, EstimatorState, FilterFault};
pub use model::{
    b_coefficients, build_compensated_model, build_conventional_model, exchange_capacitance,
    ModelKind, StateSpaceModel,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ConverterConfig;
use crate::modulation::GateVector;

/// What the controller-side estimator sees at one sample instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    /// Measured arm voltage (V).
    pub z_varm: f64,
    /// Measured arm current representative of the elapsed sample period (A).
    pub u_iarm: f64,
    /// Gate state at the sample instant.
    pub gates_at_sample: GateVector,
    /// Insertion duty of each module over the elapsed sample period.
    pub duty_avg: Vec<f64>,
    pub m_a: f64,
    pub t: f64,
}

/// One Kalman filter over one arm's module voltages.
#[derive(Clone, Debug)]
pub struct ArmEstimator {
    kind: ModelKind,
    state: EstimatorState,
    c: Vec<f64>,
    l_clamp: f64,
    t_sw: f64,
    v_fd: f64,
    samples: usize,
}

impl ArmEstimator {
    /// Filter using the nominal capacitance of `cfg` for every module.
    pub fn new(cfg: &ConverterConfig, kind: ModelKind) -> Self {
        let n = cfg.n_modules_per_arm;
        Self::with_capacitances(cfg, kind, vec![cfg.c_nominal; n])
    }

    pub fn with_capacitances(cfg: &ConverterConfig, kind: ModelKind, c: Vec<f64>) -> Self {
        let state = EstimatorState::new(
            c.len(),
            cfg.x0(),
            cfg.p0_std(),
            cfg.estimator.q_process,
            cfg.r_meas(),
            cfg.t_sample(),
        );
        Self {
            kind,
            state,
            c,
            l_clamp: cfg.l_clamp,
            t_sw: cfg.t_switch(),
            v_fd: if cfg.estimator.clamp_threshold { cfg.v_fd } else { 0.0 },
            samples: 0,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut EstimatorState {
        &mut self.state
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.state.x_hat
    }

    /// The model used to propagate the current estimate over `frame`'s period.
    pub fn model_for(&self, frame: &SampleFrame) -> StateSpaceModel {
        let t_s = self.state.t_sample;
        match self.kind {
            ModelKind::Conventional => build_conventional_model(frame, &self.c, t_s),
            ModelKind::Compensated => build_compensated_model(
                frame,
                self.state.x_hat.as_slice(),
                &self.c,
                self.l_clamp,
                t_s,
                self.t_sw,
                frame.m_a,
                self.v_fd,
            ),
        }
    }

    /// Predict over the elapsed period, then correct with the arm voltage.
    pub fn process(&mut self, frame: &SampleFrame) -> Result<&DVector<f64>> {
        let index = self.samples;
        let fault = |f: FilterFault| Error::EstimatorFault {
            sample: index,
            detail: f.0,
        };
        if frame.duty_avg.len() != self.c.len() || frame.gates_at_sample.len() != self.c.len() {
            return Err(Error::EstimatorFault {
                sample: index,
                detail: format!(
                    "frame carries {} duties and {} gates for {} modules",
                    frame.duty_avg.len(),
                    frame.gates_at_sample.len(),
                    self.c.len()
                ),
            });
        }
        let model = self.model_for(frame);
        self.state.predict(&model, frame.u_iarm).map_err(fault)?;
        let r = self.state.r_meas;
        self.state.update(&model.c, frame.z_varm, r).map_err(fault)?;
        self.samples += 1;
        Ok(&self.state.x_hat)
    }
}

/// Runs one arm's filter over `samples` and returns every posterior estimate.
pub fn estimate_series(
    samples: &[SampleFrame],
    cfg: &ConverterConfig,
    kind: ModelKind,
) -> Result<Vec<DVector<f64>>> {
    let mut est = ArmEstimator::new(cfg, kind);
    samples
        .iter()
        .map(|f| est.process(f).cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::{Arm, Modulator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Frames from a plant that follows the conventional model exactly.
    fn model_plant(cfg: &ConverterConfig, x0: &[f64], samples: usize) -> (Vec<SampleFrame>, Vec<Vec<f64>>) {
        let n = x0.len();
        let modulator = Modulator::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = x0.to_vec();
        let mut frames = Vec::new();
        let mut truth = Vec::new();
        let t_s = cfg.t_sample();
        let steps = cfg.steps_per_sample();
        for k in 1..=samples {
            let mut duty = vec![0.0; n];
            for m in 0..steps {
                let t = (k - 1) as f64 * t_s + m as f64 * cfg.dt_sim;
                for (d, s) in duty.iter_mut().zip(modulator.gates(t, cfg.m_a, Arm::Upper).s) {
                    *d += s as u8 as f64 / steps as f64;
                }
            }
            let u: f64 = rng.random_range(-300.0..300.0);
            for j in 0..n {
                x[j] += duty[j] * t_s / cfg.c_nominal * u;
            }
            let t = k as f64 * t_s;
            let gates = modulator.gates(t, cfg.m_a, Arm::Upper);
            let z = x.iter().zip(&gates.s).filter(|(_, &s)| s).map(|(v, _)| v).sum();
            frames.push(SampleFrame {
                z_varm: z,
                u_iarm: u,
                gates_at_sample: gates,
                duty_avg: duty,
                m_a: cfg.m_a,
                t,
            });
            truth.push(x.clone());
        }
        (frames, truth)
    }

    #[test]
    fn model_in_the_loop_is_exact() {
        let mut cfg = ConverterConfig::table3_simulation();
        cfg.sigma_v = 0.0;
        cfg.sigma_i = 0.0;
        let x0: Vec<f64> = (0..8).map(|j| 1150.0 + 12.0 * j as f64).collect();
        cfg.estimator.x0 = None;
        let (frames, truth) = model_plant(&cfg, &x0, 400);
        let mut est = ArmEstimator::new(&cfg, ModelKind::Conventional);
        est.state_mut().x_hat = DVector::from_column_slice(&x0);
        for (f, x) in frames.iter().zip(&truth) {
            let xh = est.process(f).unwrap();
            let err = xh.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "error {err} at t = {}", f.t);
        }
    }

    #[test]
    fn wrong_start_converges() {
        let mut cfg = ConverterConfig::table3_simulation();
        cfg.sigma_v = 0.0;
        let x0: Vec<f64> = (0..8).map(|j| 1100.0 + 30.0 * j as f64).collect();
        let (frames, truth) = model_plant(&cfg, &x0, 2000);
        let xs = estimate_series(&frames, &cfg, ModelKind::Conventional).unwrap();
        let err = |k: usize| -> f64 {
            xs[k].iter().zip(&truth[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        assert!(err(0) > 10.0);
        assert!(err(1999) < 0.05 * err(0), "{} -> {}", err(0), err(1999));
    }

    #[test]
    fn deterministic() {
        let cfg = ConverterConfig::table3_simulation();
        let (frames, _) = model_plant(&cfg, &[1200.0; 8], 50);
        let a = estimate_series(&frames, &cfg, ModelKind::Compensated).unwrap();
        let b = estimate_series(&frames, &cfg, ModelKind::Compensated).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fault_names_sample() {
        let cfg = ConverterConfig::table3_simulation();
        let (mut frames, _) = model_plant(&cfg, &[1200.0; 8], 5);
        frames[3].z_varm = f64::NAN;
        let err = estimate_series(&frames, &cfg, ModelKind::Conventional).unwrap_err();
        assert!(matches!(err, Error::EstimatorFault { sample: 3, .. }), "{err}");
    }
}
