//! Fixed-step simulation of the single-phase diode-clamped MMC.
//!
//! Arm and load dynamics use the two-arm formulation referenced to the DC
//! midpoint: the output current `i_u - i_l` flows through the series R-L
//! load, and the circulating current `(i_u + i_l)/2` sees the arm
//! inductance only. Each clamp branch `i` joins modules `i` and `i+1`
//! (1 = top of arm) and can only move charge from `i+1` into `i`.

mod analytic;
mod state;

pub use analytic::{analytic_clamp_current, predicted_avg_clamp_current};
pub use state::PlantState;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_load, ConverterConfig, ModuleSet, NO_SELF_DISCHARGE};
use crate::modulation::{Arm, GateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClampMode {
    /// Diode blocked.
    Open,
    /// Module `i+1` bypassed, balancing current flowing from `C_{i+1}` to `C_i`.
    Conducting,
    /// Module `i+1` inserted, the inductor current decays into `C_i`.
    Decaying,
}

/// Mode of the branch between a lower-index module (`v_low`) and its
/// higher-index neighbour (`v_high`, insertion state `s_high`).
pub fn branch_mode(v_low: f64, v_high: f64, i_b: f64, s_high: bool, v_fd: f64) -> ClampMode {
    if !s_high && (v_high > v_low + 2.0 * v_fd || i_b > 0.0) {
        ClampMode::Conducting
    } else if s_high && i_b > 0.0 {
        ClampMode::Decaying
    } else {
        ClampMode::Open
    }
}

/// `Σ v_c[j]·s[j]`.
pub fn arm_voltage(v_c: &[f64], gates: &[bool]) -> f64 {
    assert_eq!(v_c.len(), gates.len());
    v_c.iter()
        .zip(gates)
        .filter(|(_, &s)| s)
        .map(|(v, _)| v)
        .sum()
}

/// Electrical parameters seen by the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub n: usize,
    pub v_dc: f64,
    pub l_arm: f64,
    pub r_arm: f64,
    pub r_load: f64,
    pub l_load: f64,
    pub l_clamp: f64,
    pub r_clamp: f64,
    pub r_cap: f64,
    pub v_fd: f64,
    /// Capacitance per arm, `[upper, lower]`.
    pub c: [Vec<f64>; 2],
    /// Self-discharge conductance per arm.
    pub g_self: [Vec<f64>; 2],
}

impl PlantParams {
    pub fn from_config(cfg: &ConverterConfig, modules: &ModuleSet) -> Result<Self> {
        let n = cfg.n_modules_per_arm;
        if modules.upper.len() != n || modules.lower.len() != n {
            return Err(Error::Usage(format!(
                "module set has {}/{} modules, config expects {n}",
                modules.upper.len(),
                modules.lower.len()
            )));
        }
        let c = [
            modules.upper.iter().map(|m| m.c).collect(),
            modules.lower.iter().map(|m| m.c).collect(),
        ];
        let g_self = [
            modules.upper.iter().map(|m| leakage(m.r_self)).collect(),
            modules.lower.iter().map(|m| leakage(m.r_self)).collect(),
        ];
        Ok(Self {
            n,
            v_dc: cfg.v_dc,
            l_arm: cfg.l_arm,
            r_arm: cfg.r_arm,
            r_load: derive_load(cfg)?,
            l_load: cfg.l_load,
            l_clamp: cfg.l_clamp,
            r_clamp: cfg.r_clamp,
            r_cap: cfg.r_cap,
            v_fd: cfg.v_fd,
            c,
            g_self,
        })
    }

    /// Resistance of a conducting clamp loop: branch plus both capacitor ESRs.
    pub fn r_loop_conducting(&self) -> f64 {
        self.r_clamp + 2.0 * self.r_cap
    }

    /// Resistance of a decaying clamp loop: branch plus the receiving ESR.
    pub fn r_loop_decaying(&self) -> f64 {
        self.r_clamp + self.r_cap
    }

    fn arm_index(arm: Arm) -> usize {
        match arm {
            Arm::Upper => 0,
            Arm::Lower => 1,
        }
    }

    pub fn capacitances(&self, arm: Arm) -> &[f64] {
        &self.c[Self::arm_index(arm)]
    }
}

/// Self-discharge conductance; the "no self-discharge" sentinel maps to 0.
fn leakage(r_self: f64) -> f64 {
    if r_self >= NO_SELF_DISCHARGE {
        0.0
    } else {
        1.0 / r_self
    }
}

fn modes_for(params: &PlantParams, state: &PlantState, arm: Arm, gates: &[bool], out: &mut [ClampMode]) {
    let v = state.v_c(arm);
    let ib = state.i_clamp(arm);
    for i in 0..params.n - 1 {
        out[i] = branch_mode(v[i], v[i + 1], ib[i], gates[i + 1], params.v_fd);
    }
}

/// Time derivative of the flat state for fixed gates and clamp modes.
/// Returns the instantaneous arm voltages `[upper, lower]` (including ESR drop).
fn derivatives(
    p: &PlantParams,
    x: &[f64],
    gates: [&[bool]; 2],
    modes: [&[ClampMode]; 2],
    dx: &mut [f64],
) -> [f64; 2] {
    let n = p.n;
    let mut v_arm = [0.0; 2];
    for (a, arm) in Arm::BOTH.into_iter().enumerate() {
        let vo = PlantState::vc_offset(n, arm);
        let bo = PlantState::ib_offset(n, arm);
        let i_arm = x[PlantState::i_arm_offset(n, arm)];
        let g = gates[a];
        let mut v = 0.0;
        let mut inserted = 0usize;
        // Accumulate currents into each capacitor first, divide by C below.
        for j in 0..n {
            let vc = x[vo + j];
            let mut i_c = -vc * p.g_self[a][j];
            if g[j] {
                i_c += i_arm;
                v += vc;
                inserted += 1;
            }
            dx[vo + j] = i_c;
        }
        for i in 0..n - 1 {
            let ib = x[bo + i];
            let (v_low, v_high) = (x[vo + i], x[vo + i + 1]);
            dx[bo + i] = match modes[a][i] {
                ClampMode::Open => 0.0,
                ClampMode::Conducting => {
                    dx[vo + i] += ib;
                    dx[vo + i + 1] -= ib;
                    ((v_high - v_low - 2.0 * p.v_fd) - p.r_loop_conducting() * ib) / p.l_clamp
                }
                ClampMode::Decaying => {
                    dx[vo + i] += ib;
                    (-(v_low + 2.0 * p.v_fd) - p.r_loop_decaying() * ib) / p.l_clamp
                }
            };
        }
        for j in 0..n {
            dx[vo + j] /= p.c[a][j];
        }
        v_arm[a] = v + inserted as f64 * p.r_cap * i_arm;
    }

    let iu_o = PlantState::i_arm_offset(n, Arm::Upper);
    let il_o = PlantState::i_arm_offset(n, Arm::Lower);
    let (iu, il) = (x[iu_o], x[il_o]);
    let i_out = iu - il;
    let i_circ = 0.5 * (iu + il);
    let di_out = (0.5 * (v_arm[1] - v_arm[0]) - (0.5 * p.r_arm + p.r_load) * i_out)
        / (0.5 * p.l_arm + p.l_load);
    let di_circ = (0.5 * p.v_dc - 0.5 * (v_arm[0] + v_arm[1]) - p.r_arm * i_circ) / p.l_arm;
    dx[iu_o] = di_circ + 0.5 * di_out;
    dx[il_o] = di_circ - 0.5 * di_out;
    v_arm
}

/// Time derivative of `state`. Clamp modes are evaluated at `state`.
/// The returned value carries `t = 1` (dt/dt).
pub fn plant_derivatives(
    state: &PlantState,
    gates_u: &GateVector,
    gates_l: &GateVector,
    params: &PlantParams,
) -> PlantState {
    let n = params.n;
    let mut modes = [vec![ClampMode::Open; n - 1], vec![ClampMode::Open; n - 1]];
    modes_for(params, state, Arm::Upper, &gates_u.s, &mut modes[0]);
    modes_for(params, state, Arm::Lower, &gates_l.s, &mut modes[1]);
    let mut d = PlantState::new(n);
    derivatives(
        params,
        state.raw(),
        [&gates_u.s, &gates_l.s],
        [&modes[0], &modes[1]],
        d.raw_mut(),
    );
    d.t = 1.0;
    d
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    /// Forward Euler, for debugging.
    Euler,
}

/// Per-step observables beyond the state itself.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Arm voltages `[upper, lower]` at the start of the step, ESR included.
    pub v_arm: [f64; 2],
    /// Load voltage at the start of the step.
    pub v_load: f64,
    /// Number of diode turn-off events handled in this step.
    pub turn_offs: usize,
}

/// Reusable integrator workspace.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: PlantParams,
    integrator: Integrator,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    x0: Vec<f64>,
    modes: [Vec<ClampMode>; 2],
    /// Integrator's own ∫ i_b dt for each branch over the current step.
    branch_charge: [Vec<f64>; 2],
}

fn accumulate_branch_charge(
    n: usize,
    modes: &[Vec<ClampMode>; 2],
    charge: &mut [Vec<f64>; 2],
    y: &[f64],
    weight: f64,
) {
    for (a, arm) in Arm::BOTH.into_iter().enumerate() {
        let bo = PlantState::ib_offset(n, arm);
        for i in 0..n - 1 {
            if modes[a][i] != ClampMode::Open {
                charge[a][i] += weight * y[bo + i];
            }
        }
    }
}

impl Stepper {
    pub fn new(params: PlantParams, integrator: Integrator) -> Self {
        let n = params.n;
        let len = PlantState::len_for(n);
        Self {
            params,
            integrator,
            k: std::array::from_fn(|_| vec![0.0; len]),
            stage: vec![0.0; len],
            x0: vec![0.0; len],
            modes: [vec![ClampMode::Open; n - 1], vec![ClampMode::Open; n - 1]],
            branch_charge: [vec![0.0; n - 1], vec![0.0; n - 1]],
        }
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    /// Clamp modes used by the most recent step (after turn-off handling).
    pub fn modes(&self, arm: Arm) -> &[ClampMode] {
        &self.modes[PlantParams::arm_index(arm)]
    }

    /// Advances `state` by `dt` with gates held over the step.
    pub fn step(
        &mut self,
        state: &mut PlantState,
        gates_u: &[bool],
        gates_l: &[bool],
        dt: f64,
    ) -> Result<StepReport> {
        let Self {
            params,
            integrator,
            k,
            stage,
            x0,
            modes,
            branch_charge,
        } = self;
        let n = params.n;
        modes_for(params, state, Arm::Upper, gates_u, &mut modes[0]);
        modes_for(params, state, Arm::Lower, gates_l, &mut modes[1]);
        for q in branch_charge.iter_mut() {
            q.fill(0.0);
        }
        let gates = [gates_u, gates_l];
        x0.copy_from_slice(state.raw());

        let v_arm = {
            let m = [modes[0].as_slice(), modes[1].as_slice()];
            derivatives(params, x0, gates, m, &mut k[0])
        };
        let iu_o = PlantState::i_arm_offset(n, Arm::Upper);
        let il_o = PlantState::i_arm_offset(n, Arm::Lower);
        let di_out = k[0][iu_o] - k[0][il_o];
        let v_load = params.r_load * state.i_out() + params.l_load * di_out;

        match integrator {
            Integrator::Euler => {
                accumulate_branch_charge(n, modes, branch_charge, x0, dt);
                let x = state.raw_mut();
                for (xi, ki) in x.iter_mut().zip(&k[0]) {
                    *xi += dt * ki;
                }
            }
            Integrator::Rk4 => {
                accumulate_branch_charge(n, modes, branch_charge, x0, dt / 6.0);
                const NODE: [f64; 3] = [0.5, 0.5, 1.0];
                const WEIGHT: [f64; 3] = [2.0, 2.0, 1.0];
                for s in 0..3 {
                    for i in 0..x0.len() {
                        stage[i] = x0[i] + NODE[s] * dt * k[s][i];
                    }
                    accumulate_branch_charge(n, modes, branch_charge, stage, WEIGHT[s] * dt / 6.0);
                    let m = [modes[0].as_slice(), modes[1].as_slice()];
                    derivatives(params, stage, gates, m, &mut k[s + 1]);
                }
                let x = state.raw_mut();
                for i in 0..x.len() {
                    x[i] = x0[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
                }
            }
        }

        let turn_offs = self.diode_turn_off(state, dt);
        state.t += dt;
        if !state.is_finite() {
            return Err(Error::SimulationFault {
                t: state.t,
                detail: format!("non-finite state after step: {:?}", state.raw()),
            });
        }
        Ok(StepReport {
            v_arm,
            v_load,
            turn_offs,
        })
    }

    /// Blocks branches whose current went negative during the step. The
    /// current is taken as linear across the step; the charge the integrator
    /// moved past the zero crossing is returned to the capacitors.
    fn diode_turn_off(&mut self, state: &mut PlantState, dt: f64) -> usize {
        let n = self.params.n;
        let mut events = 0;
        for (a, arm) in Arm::BOTH.into_iter().enumerate() {
            let bo = PlantState::ib_offset(n, arm);
            let vo = PlantState::vc_offset(n, arm);
            for i in 0..n - 1 {
                let mode = self.modes[a][i];
                let x = state.raw_mut();
                if mode == ClampMode::Open || x[bo + i] >= 0.0 {
                    continue;
                }
                let (i0, i1) = (self.x0[bo + i], x[bo + i]);
                let q_true = if i0 > 0.0 {
                    0.5 * i0 * (i0 / (i0 - i1)) * dt
                } else {
                    0.0
                };
                let dq = q_true - self.branch_charge[a][i];
                x[vo + i] += dq / self.params.c[a][i];
                if mode == ClampMode::Conducting {
                    x[vo + i + 1] -= dq / self.params.c[a][i + 1];
                }
                x[bo + i] = 0.0;
                self.modes[a][i] = ClampMode::Open;
                events += 1;
            }
        }
        events
    }
}

/// One integration step of the plant (allocating convenience wrapper).
pub fn step(
    state: &PlantState,
    gates_u: &GateVector,
    gates_l: &GateVector,
    params: &PlantParams,
    dt: f64,
) -> Result<PlantState> {
    let mut stepper = Stepper::new(params.clone(), Integrator::Rk4);
    let mut next = state.clone();
    stepper.step(&mut next, &gates_u.s, &gates_l.s, dt)?;
    Ok(next)
}
