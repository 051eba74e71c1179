use serde::{Deserialize, Serialize};

use crate::modulation::Arm;

/// True simulator state, stored flat for the integrator:
/// `[v_c upper (N), v_c lower (N), i_upper, i_lower, i_b upper (N-1), i_b lower (N-1)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    n: usize,
    x: Vec<f64>,
    pub t: f64,
}

impl PlantState {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            x: vec![0.0; Self::len_for(n)],
            t: 0.0,
        }
    }

    /// All capacitors at `v0`, no current.
    pub fn charged(n: usize, v0: f64) -> Self {
        let mut s = Self::new(n);
        for arm in Arm::BOTH {
            s.v_c_mut(arm).fill(v0);
        }
        s
    }

    pub(crate) fn len_for(n: usize) -> usize {
        2 * n + 2 + 2 * (n - 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn raw(&self) -> &[f64] {
        &self.x
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub(crate) fn vc_offset(n: usize, arm: Arm) -> usize {
        match arm {
            Arm::Upper => 0,
            Arm::Lower => n,
        }
    }

    pub(crate) fn i_arm_offset(n: usize, arm: Arm) -> usize {
        match arm {
            Arm::Upper => 2 * n,
            Arm::Lower => 2 * n + 1,
        }
    }

    pub(crate) fn ib_offset(n: usize, arm: Arm) -> usize {
        match arm {
            Arm::Upper => 2 * n + 2,
            Arm::Lower => 2 * n + 2 + (n - 1),
        }
    }

    pub fn v_c(&self, arm: Arm) -> &[f64] {
        let o = Self::vc_offset(self.n, arm);
        &self.x[o..o + self.n]
    }

    pub fn v_c_mut(&mut self, arm: Arm) -> &mut [f64] {
        let o = Self::vc_offset(self.n, arm);
        &mut self.x[o..o + self.n]
    }

    pub fn i_arm(&self, arm: Arm) -> f64 {
        self.x[Self::i_arm_offset(self.n, arm)]
    }

    pub fn set_i_arm(&mut self, arm: Arm, i: f64) {
        let o = Self::i_arm_offset(self.n, arm);
        self.x[o] = i;
    }

    pub fn i_clamp(&self, arm: Arm) -> &[f64] {
        let o = Self::ib_offset(self.n, arm);
        &self.x[o..o + self.n - 1]
    }

    pub fn i_clamp_mut(&mut self, arm: Arm) -> &mut [f64] {
        let o = Self::ib_offset(self.n, arm);
        &mut self.x[o..o + self.n - 1]
    }

    /// Output (load) current `i_u - i_l`.
    pub fn i_out(&self) -> f64 {
        self.i_arm(Arm::Upper) - self.i_arm(Arm::Lower)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}
