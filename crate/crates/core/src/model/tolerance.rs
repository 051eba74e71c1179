use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use super::config::ConverterConfig;
use crate::error::ConfigError;

/// Stand-in for "no self-discharge".
pub const NO_SELF_DISCHARGE: f64 = 1e15;

/// Per-module electrical parameters. `index` is 1-based, 1 = top of the arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleParams {
    pub index: usize,
    pub c: f64,
    pub r_self: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadDistribution {
    /// Normal with σ = spread/3, rejected outside ±spread.
    TruncatedNormal,
    Uniform,
}

impl std::str::FromStr for SpreadDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truncated_normal" | "normal" => Ok(Self::TruncatedNormal),
            "uniform" => Ok(Self::Uniform),
            other => Err(other.to_string()),
        }
    }
}

/// Describes how module parameters deviate from nominal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub spread_fraction: f64,
    pub distribution: SpreadDistribution,
    /// `(module index, rank)`, rank 1 = smallest value in the arm. Applied to
    /// both capacitance and self-discharge resistance.
    pub forced_ranking: Vec<(usize, usize)>,
    /// `(module index, multiplier on 1/r_self)`.
    pub discharge_boost: Vec<(usize, f64)>,
    /// Nominal self-discharge resistance before spread and boosts (Ω).
    pub r_self_nominal: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self::identical()
    }
}

impl ToleranceSpec {
    /// Identical modules, no self-discharge.
    pub fn identical() -> Self {
        Self {
            spread_fraction: 0.0,
            distribution: SpreadDistribution::TruncatedNormal,
            forced_ranking: Vec::new(),
            discharge_boost: Vec::new(),
            r_self_nominal: NO_SELF_DISCHARGE,
        }
    }

    /// ±15 % spread, module 1 lowest, boosted leakage on modules 2, 4, 7, 8
    /// with module 8 worst.
    pub fn imbalanced() -> Self {
        Self {
            spread_fraction: 0.15,
            distribution: SpreadDistribution::TruncatedNormal,
            forced_ranking: vec![(1, 1)],
            discharge_boost: vec![(2, 2.0), (4, 3.0), (7, 4.0), (8, 5.0)],
            r_self_nominal: 100e3,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.spread_fraction) {
            return Err(ConfigError::invalid(
                "tolerance.spread_fraction",
                "value in [0, 1) (dimensionless)",
                self.spread_fraction,
            ));
        }
        if !(self.r_self_nominal.is_finite() && self.r_self_nominal > 0.0) {
            return Err(ConfigError::invalid(
                "tolerance.r_self_nominal",
                "finite value > 0 (ohm)",
                self.r_self_nominal,
            ));
        }
        let mut rank_taken = vec![false; n + 1];
        let mut module_taken = vec![false; n + 1];
        for &(module, rank) in &self.forced_ranking {
            if module == 0 || module > n || rank == 0 || rank > n {
                return Err(ConfigError::Conflict(format!(
                    "ranking ({module}, {rank}) outside 1..={n}"
                )));
            }
            if module_taken[module] {
                return Err(ConfigError::Conflict(format!(
                    "module {module} ranked more than once"
                )));
            }
            if rank_taken[rank] {
                return Err(ConfigError::Conflict(format!(
                    "rank {rank} assigned to more than one module"
                )));
            }
            module_taken[module] = true;
            rank_taken[rank] = true;
        }
        for &(module, mult) in &self.discharge_boost {
            if module == 0 || module > n {
                return Err(ConfigError::invalid(
                    "tolerance.discharge_boost",
                    format!("module index in 1..={n}"),
                    module,
                ));
            }
            if !(mult.is_finite() && mult >= 1.0) {
                return Err(ConfigError::invalid(
                    "tolerance.discharge_boost",
                    "multiplier >= 1 (dimensionless)",
                    mult,
                ));
            }
        }
        Ok(())
    }
}

/// Module parameters of both arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleSet {
    pub upper: Vec<ModuleParams>,
    pub lower: Vec<ModuleParams>,
}

impl ModuleSet {
    pub fn nominal(cfg: &ConverterConfig) -> Self {
        let arm: Vec<_> = (1..=cfg.n_modules_per_arm)
            .map(|index| ModuleParams {
                index,
                c: cfg.c_nominal,
                r_self: NO_SELF_DISCHARGE,
            })
            .collect();
        Self {
            upper: arm.clone(),
            lower: arm,
        }
    }
}

fn sample_factors(rng: &mut ChaCha8Rng, spec: &ToleranceSpec, n: usize) -> Vec<f64> {
    let spread = spec.spread_fraction;
    if spread == 0.0 {
        return vec![1.0; n];
    }
    match spec.distribution {
        SpreadDistribution::Uniform => (0..n)
            .map(|_| 1.0 + rng.random_range(-spread..=spread))
            .collect(),
        SpreadDistribution::TruncatedNormal => {
            let normal = Normal::new(0.0, spread / 3.0).expect("finite sigma");
            (0..n)
                .map(|_| loop {
                    let d: f64 = normal.sample(rng);
                    if d.abs() <= spread {
                        break 1.0 + d;
                    }
                })
                .collect()
        }
    }
}

/// Reorders `values` so constrained modules receive the value of their rank;
/// unconstrained modules keep sampling order over the remaining values.
fn apply_ranking(values: &mut [f64], ranking: &[(usize, usize)]) {
    if ranking.is_empty() {
        return;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut used = vec![false; values.len()];
    let mut assigned = vec![None; values.len()];
    for &(module, rank) in ranking {
        assigned[module - 1] = Some(sorted[rank - 1]);
        used[rank - 1] = true;
    }
    // Remaining sorted values, handed out in the original sampling order.
    let remaining: Vec<f64> = sorted
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(&v, _)| v)
        .collect();
    let mut order: Vec<usize> = (0..values.len())
        .filter(|&j| assigned[j].is_none())
        .collect();
    // Rank of each free module among free modules, by its sampled value.
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    for (k, &j) in order.iter().enumerate() {
        assigned[j] = Some(remaining[k]);
    }
    for (v, a) in values.iter_mut().zip(assigned) {
        *v = a.expect("every module assigned");
    }
}

/// Samples per-module capacitance and self-discharge for both arms.
/// Pure in `(cfg, spec, seed)`.
pub fn apply_tolerances(
    cfg: &ConverterConfig,
    spec: &ToleranceSpec,
    seed: u64,
) -> Result<ModuleSet, ConfigError> {
    let n = cfg.n_modules_per_arm;
    spec.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arm = || {
        let mut c_factor = sample_factors(&mut rng, spec, n);
        let mut r_factor = sample_factors(&mut rng, spec, n);
        apply_ranking(&mut c_factor, &spec.forced_ranking);
        apply_ranking(&mut r_factor, &spec.forced_ranking);
        let mut modules: Vec<ModuleParams> = (0..n)
            .map(|j| ModuleParams {
                index: j + 1,
                c: cfg.c_nominal * c_factor[j],
                r_self: spec.r_self_nominal * r_factor[j],
            })
            .collect();
        for &(module, mult) in &spec.discharge_boost {
            modules[module - 1].r_self /= mult;
        }
        modules
    };
    let upper = arm();
    let lower = arm();
    Ok(ModuleSet { upper, lower })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ConverterConfig {
        ConverterConfig::table3_simulation()
    }

    #[test]
    fn zero_spread_is_nominal() {
        let set = apply_tolerances(&cfg(), &ToleranceSpec::identical(), 7).unwrap();
        for m in set.upper.iter().chain(&set.lower) {
            assert_eq!(m.c, 6e-3);
        }
    }

    #[test]
    fn spread_bounds_and_forced_lowest() {
        let mut spec = ToleranceSpec::imbalanced();
        spec.discharge_boost.clear();
        let set = apply_tolerances(&cfg(), &spec, 42).unwrap();
        for arm in [&set.upper, &set.lower] {
            let c1 = arm[0].c;
            for m in arm {
                assert!(m.c >= 5.1e-3 - 1e-15 && m.c <= 6.9e-3 + 1e-15, "{}", m.c);
                assert!(c1 <= m.c);
            }
            assert!(arm.iter().all(|m| arm[0].r_self <= m.r_self));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = ToleranceSpec::imbalanced();
        let a = apply_tolerances(&cfg(), &spec, 42).unwrap();
        let b = apply_tolerances(&cfg(), &spec, 42).unwrap();
        assert_eq!(a, b);
        let c = apply_tolerances(&cfg(), &spec, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn boosted_leakage_worst_last() {
        let mut spec = ToleranceSpec::imbalanced();
        spec.spread_fraction = 0.0;
        let set = apply_tolerances(&cfg(), &spec, 1).unwrap();
        let g: Vec<f64> = set.upper.iter().map(|m| 1.0 / m.r_self).collect();
        let worst = g
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(worst, 7);
        assert!((g[1] * 100e3 - 2.0).abs() < 1e-12);
        assert!((g[0] * 100e3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conflicting_ranks_rejected() {
        let mut spec = ToleranceSpec::imbalanced();
        spec.forced_ranking = vec![(1, 1), (2, 1)];
        assert!(matches!(
            apply_tolerances(&cfg(), &spec, 0),
            Err(ConfigError::Conflict(_))
        ));
        spec.forced_ranking = vec![(1, 1), (1, 2)];
        assert!(apply_tolerances(&cfg(), &spec, 0).is_err());
    }

    #[test]
    fn uniform_within_bounds() {
        let mut spec = ToleranceSpec::imbalanced();
        spec.distribution = SpreadDistribution::Uniform;
        let set = apply_tolerances(&cfg(), &spec, 3).unwrap();
        assert!(set
            .upper
            .iter()
            .all(|m| (5.1e-3 - 1e-15..=6.9e-3 + 1e-15).contains(&m.c)));
    }

    #[test]
    fn ranking_preserves_multiset() {
        let mut v = vec![0.3, 0.1, 0.5, 0.2];
        let mut before = v.clone();
        apply_ranking(&mut v, &[(3, 1)]);
        assert_eq!(v[2], 0.1);
        before.sort_by(f64::total_cmp);
        let mut after = v.clone();
        after.sort_by(f64::total_cmp);
        assert_eq!(before, after);
    }
}
