//! Scenario runner: couples modulation, plant and estimators, aligns truth
//! and estimates on the sample grid, and computes error metrics.

mod metrics;
mod sweep;

pub use metrics::{improvement_ratio, max_error_profile, mean_abs_error, window_mean};
pub use sweep::{sweep_sampling, sweep_switching, thread_limit, KindMetric, SweepRow};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};
use crate::estimator::{ArmEstimator, ModelKind, SampleFrame};
use crate::model::{apply_tolerances, ConverterConfig, ModuleSet, ToleranceSpec};
use crate::modulation::{Arm, GateVector, Modulator};
use crate::plant::{arm_voltage, Integrator, PlantParams, PlantState, Stepper};

/// One simulated operating point plus the estimators to run against it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub cfg: ConverterConfig,
    pub tolerance: ToleranceSpec,
    pub kinds: Vec<ModelKind>,
    /// Piecewise-constant modulation index as `(start time, m_a)`; before
    /// the first entry (or when empty) `cfg.m_a` applies.
    pub ma_schedule: Vec<(f64, f64)>,
    /// Initial module voltages alternate `±initial_spread` around `v_dc/N`,
    /// keeping the arm sum at `v_dc`.
    pub initial_spread: f64,
    /// Seed for the module-parameter draw; `None` uses `cfg.rng_seed`.
    pub module_seed: Option<u64>,
    pub integrator: Integrator,
}

impl Scenario {
    pub fn new(name: impl Into<String>, cfg: ConverterConfig) -> Self {
        Self {
            name: name.into(),
            cfg,
            tolerance: ToleranceSpec::identical(),
            kinds: ModelKind::ALL.to_vec(),
            ma_schedule: Vec::new(),
            initial_spread: 0.0,
            module_seed: None,
            integrator: Integrator::Rk4,
        }
    }

    /// Identical modules on the 16-module 9.6 kV reference system.
    pub fn balanced(delta_a: f64) -> Self {
        let mut cfg = ConverterConfig::table3_simulation();
        cfg.delta_a = delta_a;
        Self::new(format!("balanced_da{delta_a}"), cfg)
    }

    /// ±15 % capacitance spread and boosted self-discharge on modules 2, 4, 7, 8.
    pub fn imbalanced(delta_a: f64) -> Self {
        let mut s = Self::balanced(delta_a);
        s.name = format!("imbalanced_da{delta_a}");
        s.tolerance = ToleranceSpec::imbalanced();
        s
    }

    pub fn with_kinds(mut self, kinds: &[ModelKind]) -> Self {
        self.kinds = kinds.to_vec();
        self
    }

    /// Modulation index in effect at `t`.
    pub fn m_a_at(&self, t: f64) -> f64 {
        self.ma_schedule
            .iter()
            .take_while(|(t0, _)| *t0 <= t)
            .last()
            .map_or(self.cfg.m_a, |&(_, m)| m)
    }

    pub fn validate(&self) -> Result<Vec<String>> {
        let warnings = self.cfg.validate()?;
        self.tolerance.validate(self.cfg.n_modules_per_arm)?;
        if self.kinds.is_empty() {
            return Err(ConfigError::invalid("run.kinds", "at least one of conv, comp", "[]").into());
        }
        for (t, m) in &self.ma_schedule {
            if !(t.is_finite() && *t >= 0.0) {
                return Err(ConfigError::invalid("run.ma_schedule", "start time >= 0 (s)", t).into());
            }
            if !(0.0..=1.0).contains(m) {
                return Err(ConfigError::invalid("run.ma_schedule", "m_a in [0, 1]", m).into());
            }
        }
        if self.ma_schedule.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(ConfigError::invalid(
                "run.ma_schedule",
                "entries in increasing time order",
                format!("{:?}", self.ma_schedule),
            )
            .into());
        }
        if !(0.0..1.0).contains(&self.initial_spread) {
            return Err(ConfigError::invalid(
                "run.initial_spread",
                "value in [0, 1) (dimensionless)",
                self.initial_spread,
            )
            .into());
        }
        Ok(warnings)
    }

    pub fn modules(&self) -> Result<ModuleSet> {
        let seed = self.module_seed.unwrap_or(self.cfg.rng_seed);
        Ok(apply_tolerances(&self.cfg, &self.tolerance, seed)?)
    }
}

/// Estimates and error profile of one estimator kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindTrace {
    pub kind: ModelKind,
    /// `[upper, lower]`, each sample-major with `N` values per sample.
    pub estimates: [Vec<Vec<f64>>; 2],
    /// Max over all modules of both arms of `|true - estimate|` per sample.
    pub max_error: Vec<f64>,
    /// Mean over all samples and modules of `|true - estimate|`.
    pub mae: f64,
}

/// Everything recorded at the sample instants of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub n: usize,
    pub seed: u64,
    pub f_out: f64,
    pub t: Vec<f64>,
    /// True capacitor voltages `[upper, lower]`, sample-major.
    pub truth: [Vec<Vec<f64>>; 2],
    pub kinds: Vec<KindTrace>,
    /// True arm currents `[upper, lower]`.
    pub i_arm: [Vec<f64>; 2],
    /// True arm voltages `[upper, lower]` (before sensor noise).
    pub v_arm: [Vec<f64>; 2],
    pub i_out: Vec<f64>,
    pub v_load: Vec<f64>,
    pub m_a: Vec<f64>,
    /// Clamp-branch currents averaged over each sample period, `[upper, lower]`.
    pub clamp_avg: [Vec<Vec<f64>>; 2],
    /// Smallest clamp-branch current seen after any integration step.
    pub min_clamp_current: f64,
    pub turn_offs: usize,
}

impl RunResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn trace(&self, kind: ModelKind) -> Option<&KindTrace> {
        self.kinds.iter().find(|k| k.kind == kind)
    }

    /// Sample indices of the final half of the run, trimmed to whole
    /// fundamental periods when at least one fits.
    pub fn window(&self) -> std::ops::Range<usize> {
        let Some(&t_end) = self.t.last() else {
            return 0..0;
        };
        let half = 0.5 * t_end;
        let periods = (half * self.f_out + 1e-9).floor();
        let span = if periods >= 1.0 { periods / self.f_out } else { half };
        let t0 = t_end - span;
        let start = self.t.partition_point(|&t| t <= t0 + 1e-12);
        start..self.t.len()
    }

    /// Largest max-error value inside the post-convergence window.
    pub fn steady_max_error(&self, kind: ModelKind) -> Option<f64> {
        let tr = self.trace(kind)?;
        tr.max_error[self.window()].iter().copied().reduce(f64::max)
    }

    /// Mean of the max-error profile inside the post-convergence window.
    pub fn steady_mean_error(&self, kind: ModelKind) -> Option<f64> {
        let tr = self.trace(kind)?;
        window_mean(&tr.max_error[self.window()])
    }

    /// Conventional-vs-compensated improvement over the window.
    pub fn improvement(&self) -> Option<f64> {
        let conv = self.trace(ModelKind::Conventional)?;
        let comp = self.trace(ModelKind::Compensated)?;
        let w = self.window();
        improvement_ratio(&conv.max_error[w.clone()], &comp.max_error[w]).ok()?
    }

    /// Per-module average of the true voltages over the window.
    pub fn window_average_voltages(&self, arm: Arm) -> Vec<f64> {
        let truth = &self.truth[arm_slot(arm)];
        let w = self.window();
        let mut avg = vec![0.0; self.n];
        for row in &truth[w.clone()] {
            for (a, v) in avg.iter_mut().zip(row) {
                *a += v;
            }
        }
        let count = w.len().max(1) as f64;
        avg.iter_mut().for_each(|a| *a /= count);
        avg
    }

    /// Per-branch average of the clamp currents over the window.
    pub fn window_average_clamp(&self, arm: Arm) -> Vec<f64> {
        let rows = &self.clamp_avg[arm_slot(arm)];
        let w = self.window();
        let mut avg = vec![0.0; self.n.saturating_sub(1)];
        for row in &rows[w.clone()] {
            for (a, v) in avg.iter_mut().zip(row) {
                *a += v;
            }
        }
        let count = w.len().max(1) as f64;
        avg.iter_mut().for_each(|a| *a /= count);
        avg
    }
}

pub(crate) fn arm_slot(arm: Arm) -> usize {
    match arm {
        Arm::Upper => 0,
        Arm::Lower => 1,
    }
}

/// Capacitor voltages alternating `±spread` around `v_dc/N`.
fn initial_voltages(cfg: &ConverterConfig, spread: f64) -> Vec<f64> {
    let n = cfg.n_modules_per_arm;
    let v0 = cfg.v_dc / n as f64;
    (0..n)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let pair_complete = j + 1 < n || n % 2 == 0;
            if pair_complete {
                v0 * (1.0 + sign * spread)
            } else {
                v0
            }
        })
        .collect()
}

/// Starts the load and circulating currents at their sinusoidal steady
/// state so the run does not open with an inductive transient.
fn initial_state(cfg: &ConverterConfig, params: &PlantParams, spread: f64, m_a: f64) -> PlantState {
    let n = cfg.n_modules_per_arm;
    let mut state = PlantState::new(n);
    let v = initial_voltages(cfg, spread);
    for arm in Arm::BOTH {
        state.v_c_mut(arm).copy_from_slice(&v);
    }
    let w = cfg.omega();
    let r = params.r_load + 0.5 * params.r_arm;
    let x = w * (0.5 * params.l_arm + params.l_load);
    let z = r.hypot(x);
    let theta = x.atan2(r);
    let e = m_a * cfg.v_dc / 2.0;
    let i_peak = e / z;
    let i_out = -i_peak * theta.sin();
    let p = 0.5 * e * i_peak * theta.cos();
    let i_circ = p / cfg.v_dc;
    state.set_i_arm(Arm::Upper, i_circ + 0.5 * i_out);
    state.set_i_arm(Arm::Lower, i_circ - 0.5 * i_out);
    state
}

fn noise(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

/// Simulates the scenario and runs every requested estimator kind.
pub fn run_scenario(s: &Scenario) -> Result<RunResult> {
    s.validate()?;
    let cfg = &s.cfg;
    let n = cfg.n_modules_per_arm;
    let modules = s.modules()?;
    let params = PlantParams::from_config(cfg, &modules)?;
    let r_cap = params.r_cap;
    let mut state = initial_state(cfg, &params, s.initial_spread, s.m_a_at(0.0));
    let mut stepper = Stepper::new(params, s.integrator);
    let modulator = Modulator::new(cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(1);
    let noise_v = noise(cfg.sigma_v);
    let noise_i = noise(cfg.sigma_i);
    let mut draw = |d: &Option<Normal<f64>>| d.as_ref().map_or(0.0, |d| d.sample(&mut rng));

    let mut estimators: Vec<[ArmEstimator; 2]> = s
        .kinds
        .iter()
        .map(|&k| {
            Arm::BOTH.map(|arm| {
                if cfg.estimator.module_capacitance {
                    ArmEstimator::with_capacitances(cfg, k, stepper.params().capacitances(arm).to_vec())
                } else {
                    ArmEstimator::new(cfg, k)
                }
            })
        })
        .collect();

    let sps = cfg.steps_per_sample();
    let t_s = cfg.t_sample();
    let dt = cfg.dt_sim;
    let samples = cfg.total_steps() / sps;

    let mut out = RunResult {
        name: s.name.clone(),
        n,
        seed: cfg.rng_seed,
        f_out: cfg.f_out,
        t: Vec::with_capacity(samples),
        truth: [Vec::with_capacity(samples), Vec::with_capacity(samples)],
        kinds: s
            .kinds
            .iter()
            .map(|&kind| KindTrace {
                kind,
                estimates: [Vec::with_capacity(samples), Vec::with_capacity(samples)],
                max_error: Vec::with_capacity(samples),
                mae: 0.0,
            })
            .collect(),
        i_arm: [Vec::with_capacity(samples), Vec::with_capacity(samples)],
        v_arm: [Vec::with_capacity(samples), Vec::with_capacity(samples)],
        i_out: Vec::with_capacity(samples),
        v_load: Vec::with_capacity(samples),
        m_a: Vec::with_capacity(samples),
        clamp_avg: [Vec::with_capacity(samples), Vec::with_capacity(samples)],
        min_clamp_current: 0.0,
        turn_offs: 0,
    };

    let mut gates = [vec![false; n], vec![false; n]];
    let mut next = [vec![false; n], vec![false; n]];
    let mut edges: Vec<f64> = Vec::with_capacity(2 * n + 1);
    let mut duty = [vec![0.0; n], vec![0.0; n]];
    let mut clamp = [vec![0.0; n - 1], vec![0.0; n - 1]];
    let mut prev_i_meas = [0.0; 2];
    for (a, arm) in Arm::BOTH.into_iter().enumerate() {
        prev_i_meas[a] = state.i_arm(arm) + draw(&noise_i);
    }
    let mut abs_sum = vec![0.0; s.kinds.len()];
    let mut min_ib = f64::INFINITY;

    for k in 1..=samples {
        for d in duty.iter_mut().chain(clamp.iter_mut()) {
            d.fill(0.0);
        }
        let mut v_load = 0.0;
        for m in 0..sps {
            let t = (k - 1) as f64 * t_s + m as f64 * dt;
            let t_next = (k - 1) as f64 * t_s + (m + 1) as f64 * dt;
            let m_a = s.m_a_at(t);
            // Split the step at gate edges so switching instants do not snap to the grid.
            edges.clear();
            for (a, arm) in Arm::BOTH.into_iter().enumerate() {
                modulator.fill_gates(t, m_a, arm, &mut gates[a]);
                modulator.fill_gates(t_next, m_a, arm, &mut next[a]);
                for j in 0..n {
                    if gates[a][j] != next[a][j] {
                        edges.push(modulator.switching_instant(t, t_next, m_a, arm, j));
                    }
                }
            }
            edges.sort_by(f64::total_cmp);
            edges.push(t_next);
            let split = edges.len() > 1;
            let mut tau = t;
            for &end in &edges {
                let h = end - tau;
                if h <= 0.0 {
                    continue;
                }
                if split {
                    for (a, arm) in Arm::BOTH.into_iter().enumerate() {
                        modulator.fill_gates(tau + 0.5 * h, m_a, arm, &mut gates[a]);
                    }
                }
                let w = h / dt;
                for a in 0..2 {
                    for (d, &g) in duty[a].iter_mut().zip(&gates[a]) {
                        if g {
                            *d += w;
                        }
                    }
                }
                let report = stepper.step(&mut state, &gates[0], &gates[1], h)?;
                if tau == t {
                    v_load = report.v_load;
                }
                out.turn_offs += report.turn_offs;
                for (a, arm) in Arm::BOTH.into_iter().enumerate() {
                    for (q, &ib) in clamp[a].iter_mut().zip(state.i_clamp(arm)) {
                        *q += w * ib;
                        min_ib = min_ib.min(ib);
                    }
                }
                tau = end;
            }
        }

        let t = k as f64 * t_s;
        let m_a = s.m_a_at(t);
        out.t.push(t);
        out.m_a.push(m_a);
        out.i_out.push(state.i_out());
        out.v_load.push(v_load);
        let mut frames: [Option<SampleFrame>; 2] = [None, None];
        for (a, arm) in Arm::BOTH.into_iter().enumerate() {
            modulator.fill_gates(t, m_a, arm, &mut gates[a]);
            let v_c = state.v_c(arm);
            let i_arm = state.i_arm(arm);
            let inserted = gates[a].iter().filter(|&&g| g).count();
            let v_true = arm_voltage(v_c, &gates[a]) + inserted as f64 * r_cap * i_arm;
            let z = v_true + draw(&noise_v);
            let i_meas = i_arm + draw(&noise_i);
            let u = 0.5 * (prev_i_meas[a] + i_meas);
            prev_i_meas[a] = i_meas;

            out.truth[a].push(v_c.to_vec());
            out.i_arm[a].push(i_arm);
            out.v_arm[a].push(v_true);
            out.clamp_avg[a].push(clamp[a].iter().map(|q| q / sps as f64).collect());
            frames[a] = Some(SampleFrame {
                z_varm: z,
                u_iarm: u,
                gates_at_sample: GateVector {
                    s: gates[a].clone(),
                    arm,
                    time: t,
                },
                duty_avg: duty[a].iter().map(|d| d / sps as f64).collect(),
                m_a,
                t,
            });
        }

        for ((pair, trace), abs) in estimators.iter_mut().zip(&mut out.kinds).zip(&mut abs_sum) {
            let mut worst = 0.0f64;
            for (a, est) in pair.iter_mut().enumerate() {
                let frame = frames[a].as_ref().expect("frame built above");
                let x_hat = est.process(frame)?;
                let truth = out.truth[a].last().expect("pushed above");
                for (xh, xt) in x_hat.iter().zip(truth) {
                    let e = (xh - xt).abs();
                    worst = worst.max(e);
                    *abs += e;
                }
                trace.estimates[a].push(x_hat.as_slice().to_vec());
            }
            trace.max_error.push(worst);
        }
    }

    let count = (samples * 2 * n).max(1) as f64;
    for (trace, abs) in out.kinds.iter_mut().zip(abs_sum) {
        trace.mae = abs / count;
    }
    out.min_clamp_current = if min_ib.is_finite() { min_ib } else { 0.0 };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(mut s: Scenario, duration: f64) -> Scenario {
        s.cfg.duration = duration;
        s
    }

    #[test]
    fn zero_duration_is_empty() {
        let r = run_scenario(&short(Scenario::balanced(0.02), 0.0)).unwrap();
        assert!(r.is_empty());
        assert!(r.kinds.iter().all(|k| k.max_error.is_empty()));
        assert_eq!(r.window(), 0..0);
    }

    #[test]
    fn schedule_lookup() {
        let mut s = Scenario::balanced(0.0);
        assert_eq!(s.m_a_at(0.3), 0.9);
        s.ma_schedule = vec![(0.0, 0.95), (0.5, 0.5)];
        assert_eq!(s.m_a_at(0.0), 0.95);
        assert_eq!(s.m_a_at(0.4999), 0.95);
        assert_eq!(s.m_a_at(0.5), 0.5);
        s.ma_schedule = vec![(0.5, 0.5), (0.1, 0.2)];
        assert!(s.validate().is_err());
    }

    #[test]
    fn initial_voltages_keep_arm_sum() {
        let cfg = ConverterConfig::table3_simulation();
        let v = initial_voltages(&cfg, 0.1);
        assert_eq!(v[0], 1320.0);
        assert_eq!(v[1], 1080.0);
        assert!((v.iter().sum::<f64>() - cfg.v_dc).abs() < 1e-9);
    }

    #[test]
    fn sample_grid_and_shapes() {
        let r = run_scenario(&short(Scenario::balanced(0.02), 0.005)).unwrap();
        assert_eq!(r.len(), 50);
        assert!((r.t[0] - 1e-4).abs() < 1e-15);
        assert!((r.t[49] - 5e-3).abs() < 1e-15);
        for a in 0..2 {
            assert_eq!(r.truth[a].len(), 50);
            assert_eq!(r.clamp_avg[a][0].len(), 7);
        }
        assert_eq!(r.kinds.len(), 2);
        assert!(r.kinds.iter().all(|k| k.max_error.iter().all(|&e| e >= 0.0)));
    }

    #[test]
    fn runs_are_deterministic() {
        let s = short(Scenario::imbalanced(0.02), 0.01);
        assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    }

    #[test]
    fn window_is_whole_periods() {
        let r = run_scenario(&short(Scenario::balanced(0.0).with_kinds(&[ModelKind::Conventional]), 0.06)).unwrap();
        let w = r.window();
        assert_eq!(w.len(), 200);
        assert_eq!(w.end, r.len());
    }
}
