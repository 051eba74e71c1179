use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dcmmc::model::ModuleSet;
use dcmmc::plant::Integrator;
use dcmmc::{
    run_scenario, Arm, ArmEstimator, ConverterConfig, ModelKind, Modulator, PlantParams, PlantState,
    SampleFrame, Scenario, Stepper,
};

fn plant_step(c: &mut Criterion) {
    let cfg = ConverterConfig::table3_simulation();
    let params = PlantParams::from_config(&cfg, &ModuleSet::nominal(&cfg)).unwrap();
    let mut stepper = Stepper::new(params, Integrator::Rk4);
    let mut state = PlantState::charged(8, 1200.0);
    let modulator = Modulator::new(&cfg).unwrap();
    let gu = modulator.gates(1e-4, cfg.m_a, Arm::Upper).s;
    let gl = modulator.gates(1e-4, cfg.m_a, Arm::Lower).s;
    c.bench_function("plant_step_rk4", |b| {
        b.iter(|| stepper.step(&mut state, black_box(&gu), black_box(&gl), 1e-6).unwrap())
    });
}

fn gates(c: &mut Criterion) {
    let mut cfg = ConverterConfig::table3_simulation();
    cfg.delta_a = 0.02;
    let modulator = Modulator::new(&cfg).unwrap();
    let mut out = [false; 8];
    let mut t = 0.0;
    c.bench_function("fill_gates", |b| {
        b.iter(|| {
            t += 1e-6;
            modulator.fill_gates(black_box(t), 0.9, Arm::Upper, &mut out);
        })
    });
}

fn estimator(c: &mut Criterion) {
    let cfg = ConverterConfig::table3_simulation();
    let modulator = Modulator::new(&cfg).unwrap();
    let frame = SampleFrame {
        z_varm: 5400.0,
        u_iarm: 120.0,
        gates_at_sample: modulator.gates(3e-4, cfg.m_a, Arm::Upper),
        duty_avg: vec![0.5; 8],
        m_a: cfg.m_a,
        t: 3e-4,
    };
    for kind in ModelKind::ALL {
        let est = ArmEstimator::new(&cfg, kind);
        c.bench_function(&format!("kalman_process_{}", kind.tag()), |b| {
            b.iter_batched_ref(
                || est.clone(),
                |e| {
                    e.process(black_box(&frame)).unwrap();
                },
                BatchSize::SmallInput,
            )
        });
    }
}

fn scenario(c: &mut Criterion) {
    let mut s = Scenario::balanced(0.02);
    s.cfg.duration = 0.01;
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    group.bench_function("balanced_10ms", |b| b.iter(|| run_scenario(black_box(&s)).unwrap()));
    group.finish();
}

criterion_group!(benches, plant_step, gates, estimator, scenario);
criterion_main!(benches);
