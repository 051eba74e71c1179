//! Level-adjusted phase-shifted carrier modulation.
//!
//! Each module compares its own reference against a symmetric triangle
//! carrier spanning `[0, 1]`; carriers are spaced `2π/N` apart and mirrored
//! between the two arms. Level adjustment subtracts a small offset `δ_j`
//! from each module's reference, biasing insertion time from the top of the
//! arm towards the bottom so that the clamp diodes carry the balancing charge.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::ConverterConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Upper,
    Lower,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Upper, Arm::Lower];

    pub fn tag(self) -> &'static str {
        match self {
            Arm::Upper => "u",
            Arm::Lower => "l",
        }
    }
}

/// Insertion state of every module of one arm (`true` = inserted).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateVector {
    pub s: Vec<bool>,
    pub arm: Arm,
    pub time: f64,
}

impl GateVector {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn inserted(&self) -> usize {
        self.s.iter().filter(|&&s| s).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrierSpec {
    /// Carrier phase of each module (rad, in `[0, 2π)`).
    pub phase_shifts: Vec<f64>,
    pub frequency: f64,
    /// Vertical carrier offsets. The modulator keeps these at zero and
    /// applies level adjustment to the references instead; both forms
    /// produce identical gates.
    pub level_offsets: Vec<f64>,
}

/// Mirrored carrier phase vectors `(upper, lower)`.
pub fn carrier_phases(n: usize) -> (Vec<f64>, Vec<f64>) {
    let step = 2.0 * PI / n as f64;
    let upper = (0..n).map(|j| step * j as f64).collect();
    let lower = (0..n).map(|j| step * (n - 1 - j) as f64).collect();
    (upper, lower)
}

/// Per-module level adjustment `δ_j = Δ_a (1/2 - (j-1)/(N-1))`, optionally
/// multiplied by the arm-current sign.
pub fn level_adjustments(
    n: usize,
    delta_a: f64,
    sign_adaptive: bool,
    arm_current_sign: f64,
) -> Result<Vec<f64>, ConfigError> {
    if delta_a == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if n < 2 {
        return Err(ConfigError::invalid(
            "modulation.delta_a",
            "0 when the arm has a single module",
            delta_a,
        ));
    }
    let sign = if sign_adaptive {
        if arm_current_sign < 0.0 {
            -1.0
        } else {
            1.0
        }
    } else {
        1.0
    };
    let span = (n - 1) as f64;
    Ok((0..n)
        .map(|j| sign * delta_a * (0.5 - j as f64 / span))
        .collect())
}

/// Reference of one module: upper `(1 - m sin ωt)/2 - δ`, lower `(1 + m sin ωt)/2 - δ`.
pub fn module_reference(m_a: f64, omega: f64, t: f64, delta_j: f64, arm: Arm) -> f64 {
    let s = m_a * (omega * t).sin();
    match arm {
        Arm::Upper => 0.5 * (1.0 - s) - delta_j,
        Arm::Lower => 0.5 * (1.0 + s) - delta_j,
    }
}

/// Symmetric triangle in `[0, 1]`, zero at phase 0.
pub fn triangle(frequency: f64, phase: f64, t: f64) -> f64 {
    let x = frequency * t + phase / (2.0 * PI);
    let frac = x - x.floor();
    1.0 - 2.0 * (frac - 0.5).abs()
}

/// Gate signals for one arm: inserted when `reference >= carrier + offset`.
pub fn gate_signals(references: &[f64], carriers: &CarrierSpec, t: f64, arm: Arm) -> GateVector {
    assert_eq!(references.len(), carriers.phase_shifts.len());
    let s = references
        .iter()
        .zip(&carriers.phase_shifts)
        .zip(&carriers.level_offsets)
        .map(|((&r, &phi), &offset)| r >= triangle(carriers.frequency, phi, t) + offset)
        .collect();
    GateVector { s, arm, time: t }
}

/// Mean of the module references: the arm's effective modulation index.
pub fn effective_arm_index(references: &[f64]) -> f64 {
    assert!(!references.is_empty());
    references.iter().sum::<f64>() / references.len() as f64
}

/// Sign of the ideal fundamental arm current. The arm current is a DC share
/// `m_a/4` of the output peak plus half the output current, so it changes
/// sign twice per cycle.
pub fn ideal_arm_current_sign(m_a: f64, omega: f64, t: f64, arm: Arm) -> f64 {
    let s = (omega * t).sin();
    let i = match arm {
        Arm::Upper => 0.5 * m_a + s,
        Arm::Lower => 0.5 * m_a - s,
    };
    if i < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Gate generator for both arms of one phase leg.
#[derive(Clone, Debug)]
pub struct Modulator {
    n: usize,
    omega: f64,
    delta_a: f64,
    sign_adaptive: bool,
    upper: CarrierSpec,
    lower: CarrierSpec,
    delta: Vec<f64>,
}

impl Modulator {
    pub fn new(cfg: &ConverterConfig) -> Result<Self, ConfigError> {
        let n = cfg.n_modules_per_arm;
        let (phi_u, phi_l) = carrier_phases(n);
        let delta = level_adjustments(n, cfg.delta_a, false, 1.0)?;
        let carrier = |phase_shifts| CarrierSpec {
            phase_shifts,
            frequency: cfg.f_carrier,
            level_offsets: vec![0.0; n],
        };
        Ok(Self {
            n,
            omega: cfg.omega(),
            delta_a: cfg.delta_a,
            sign_adaptive: cfg.sign_adaptive,
            upper: carrier(phi_u),
            lower: carrier(phi_l),
            delta,
        })
    }

    pub fn carriers(&self, arm: Arm) -> &CarrierSpec {
        match arm {
            Arm::Upper => &self.upper,
            Arm::Lower => &self.lower,
        }
    }

    fn sign(&self, m_a: f64, t: f64, arm: Arm) -> f64 {
        if self.sign_adaptive && self.delta_a != 0.0 {
            ideal_arm_current_sign(m_a, self.omega, t, arm)
        } else {
            1.0
        }
    }

    pub fn references(&self, t: f64, m_a: f64, arm: Arm) -> Vec<f64> {
        let sign = self.sign(m_a, t, arm);
        self.delta
            .iter()
            .map(|&d| module_reference(m_a, self.omega, t, sign * d, arm))
            .collect()
    }

    pub fn gates(&self, t: f64, m_a: f64, arm: Arm) -> GateVector {
        let mut s = vec![false; self.n];
        self.fill_gates(t, m_a, arm, &mut s);
        GateVector { s, arm, time: t }
    }

    /// Allocation-free variant of [`Modulator::gates`] for the simulation loop.
    pub fn fill_gates(&self, t: f64, m_a: f64, arm: Arm, out: &mut [bool]) {
        let sign = self.sign(m_a, t, arm);
        let base = module_reference(m_a, self.omega, t, 0.0, arm);
        let carriers = self.carriers(arm);
        for (j, s) in out.iter_mut().enumerate() {
            let reference = base - sign * self.delta[j];
            let carrier = triangle(carriers.frequency, carriers.phase_shifts[j], t);
            *s = reference >= carrier + carriers.level_offsets[j];
        }
    }

    /// Gate of module `j` (0-based) alone.
    pub fn gate(&self, t: f64, m_a: f64, arm: Arm, j: usize) -> bool {
        let sign = self.sign(m_a, t, arm);
        let reference = module_reference(m_a, self.omega, t, sign * self.delta[j], arm);
        let carriers = self.carriers(arm);
        reference >= triangle(carriers.frequency, carriers.phase_shifts[j], t) + carriers.level_offsets[j]
    }

    /// Instant in `(t0, t1]` where module `j` leaves the state it has at
    /// `t0`, located by bisection to within `1e-9·(t1 - t0)`.
    pub fn switching_instant(&self, t0: f64, t1: f64, m_a: f64, arm: Arm, j: usize) -> f64 {
        let start = self.gate(t0, m_a, arm, j);
        let (mut lo, mut hi) = (t0, t1);
        let tol = 1e-9 * (t1 - t0);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.gate(mid, m_a, arm, j) == start {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}
