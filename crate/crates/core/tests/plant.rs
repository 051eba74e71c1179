use dcmmc::model::ModuleSet;
use dcmmc::plant::Integrator;
use dcmmc::{run_scenario, Arm, ClampMode, ConverterConfig, ModelKind, PlantParams, PlantState, Scenario, Stepper};
use proptest::prelude::*;

/// Without clamp conduction or leakage every capacitor integrates exactly
/// its share of the arm current.
#[test]
fn charge_bookkeeping_without_clamping() {
    let cfg = ConverterConfig::table3_simulation();
    let mut p = PlantParams::from_config(&cfg, &ModuleSet::nominal(&cfg)).unwrap();
    p.g_self = [vec![0.0; 8], vec![0.0; 8]];
    let c = p.c.clone();
    let mut state = PlantState::new(8);
    for arm in Arm::BOTH {
        for (j, v) in state.v_c_mut(arm).iter_mut().enumerate() {
            *v = 1230.0 - 6.0 * j as f64;
        }
    }
    let gates_u = [true, false, true, false, false, true, false, false];
    let gates_l = [true, true, false, true, false, true, true, false];
    let start = [state.v_c(Arm::Upper).to_vec(), state.v_c(Arm::Lower).to_vec()];
    let mut charge = [0.0; 2];
    let mut stepper = Stepper::new(p, Integrator::Rk4);
    let dt = 1e-6;
    // Simpson's rule over pairs of steps.
    let mut samples = vec![[state.i_arm(Arm::Upper), state.i_arm(Arm::Lower)]];
    for _ in 0..200 {
        stepper.step(&mut state, &gates_u, &gates_l, dt).unwrap();
        samples.push([state.i_arm(Arm::Upper), state.i_arm(Arm::Lower)]);
        for arm in Arm::BOTH {
            assert!(stepper.modes(arm).iter().all(|&m| m == ClampMode::Open));
        }
    }
    for pair in samples.windows(3).step_by(2) {
        for a in 0..2 {
            charge[a] += dt / 3.0 * (pair[0][a] + 4.0 * pair[1][a] + pair[2][a]);
        }
    }
    assert!(charge[0].abs() > 1e-3, "arm current stayed near zero");
    for (a, (arm, gates)) in [(Arm::Upper, gates_u), (Arm::Lower, gates_l)].into_iter().enumerate() {
        for j in 0..8 {
            let moved = c[a][j] * (state.v_c(arm)[j] - start[a][j]);
            let expected = if gates[j] { charge[a] } else { 0.0 };
            assert!((moved - expected).abs() < 1e-9 + 1e-8 * charge[a].abs(), "{arm:?} {j}: {moved} vs {expected}");
        }
    }
}

#[test]
fn euler_and_rk4_agree_over_a_short_run() {
    let mut s = Scenario::balanced(0.02).with_kinds(&[ModelKind::Conventional]);
    s.cfg.duration = 0.005;
    let a = run_scenario(&s).unwrap();
    s.integrator = Integrator::Euler;
    let b = run_scenario(&s).unwrap();
    for arm in 0..2 {
        for (x, y) in a.truth[arm].last().unwrap().iter().zip(b.truth[arm].last().unwrap()) {
            assert!((x - y).abs() / y < 1e-3, "{x} vs {y}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn clamp_current_never_negative(
        delta_a in 0.0f64..0.05,
        m_a in 0.5f64..1.0,
        spread in 0.0f64..0.1,
        seed in 0u64..1000,
        imbalanced in any::<bool>(),
    ) {
        let mut s = if imbalanced { Scenario::imbalanced(delta_a) } else { Scenario::balanced(delta_a) };
        s = s.with_kinds(&[ModelKind::Compensated]);
        s.cfg.m_a = m_a;
        s.cfg.rng_seed = seed;
        s.cfg.duration = 0.005;
        s.ma_schedule.clear();
        s.initial_spread = spread;
        let r = run_scenario(&s).unwrap();
        prop_assert!(r.min_clamp_current >= 0.0, "{}", r.min_clamp_current);
    }
}
