//! Scenario files: TOML restricted to dotted scalar keys, e.g.
//!
//! ```text
//! converter.v_dc = 9600.0
//! modulation.m_a = 0.9
//! run.kinds = ["conv", "comp"]
//! ```
//!
//! Every key is SI. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{ConfigError, Error, Result};
use crate::estimator::ModelKind;
use crate::harness::Scenario;
use crate::model::{
    ConverterConfig, EstimatorTuning, SpreadDistribution, ToleranceSpec, DEFAULT_DT_SIM,
    DEFAULT_DURATION, DEFAULT_V_FD,
};
use crate::plant::Integrator;

/// Keys without a default, in the order they are reported when missing.
pub const REQUIRED_KEYS: [&str; 15] = [
    "converter.n_modules_per_arm",
    "converter.v_dc",
    "converter.v_sm_rated",
    "converter.c_nominal",
    "converter.r_cap",
    "converter.l_arm",
    "converter.r_arm",
    "converter.l_clamp",
    "converter.r_clamp",
    "converter.p_rated",
    "converter.l_load",
    "modulation.f_carrier",
    "modulation.f_out",
    "modulation.m_a",
    "sensing.f_sample",
];

struct Keys {
    values: BTreeMap<String, toml::Value>,
    missing: Vec<String>,
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

fn describe(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.values.remove(key)
    }

    fn float_opt(&mut self, key: &str, unit: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(f)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(other) => Err(ConfigError::invalid(key, format!("number ({unit})"), describe(&other))),
        }
    }

    fn float(&mut self, key: &str, unit: &str) -> Result<f64, ConfigError> {
        let v = self.float_opt(key, unit)?;
        Ok(v.unwrap_or_else(|| {
            self.missing.push(key.to_string());
            f64::NAN
        }))
    }

    fn float_or(&mut self, key: &str, unit: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float_opt(key, unit)?.unwrap_or(default))
    }

    fn uint_opt(&mut self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(other) => Err(ConfigError::invalid(key, "non-negative integer", describe(&other))),
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(b),
            Some(other) => Err(ConfigError::invalid(key, "true or false", describe(&other))),
        }
    }

    fn string_opt(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(ConfigError::invalid(key, "string", describe(&other))),
        }
    }

    fn pairs<A, B>(
        &mut self,
        key: &str,
        expected: &str,
        parse: impl Fn(&toml::Value, &toml::Value) -> Option<(A, B)>,
    ) -> Result<Option<Vec<(A, B)>>, ConfigError> {
        let Some(v) = self.take(key) else {
            return Ok(None);
        };
        let bad = |v: &toml::Value| ConfigError::invalid(key, expected, describe(v));
        let toml::Value::Array(items) = &v else {
            return Err(bad(&v));
        };
        items
            .iter()
            .map(|item| match item {
                toml::Value::Array(p) if p.len() == 2 => parse(&p[0], &p[1]).ok_or_else(|| bad(&v)),
                _ => Err(bad(&v)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_usize(v: &toml::Value) -> Option<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Some(*i as usize),
        _ => None,
    }
}

/// Reads and validates a scenario file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut s = parse_config_str(&text)?;
    if s.name.is_empty() {
        s.name = path
            .file_stem()
            .map(|n| n.to_string_lossy().trim_end_matches(".cfg").to_string())
            .unwrap_or_default();
    }
    Ok(s)
}

pub fn parse_config_str(text: &str) -> Result<Scenario> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    let mut values = BTreeMap::new();
    flatten("", table, &mut values);
    let mut k = Keys {
        values,
        missing: Vec::new(),
    };

    let n = match k.uint_opt("converter.n_modules_per_arm")? {
        Some(n) => n as usize,
        None => {
            k.missing.push("converter.n_modules_per_arm".into());
            0
        }
    };
    let mut cfg = ConverterConfig {
        n_modules_per_arm: n,
        v_dc: k.float("converter.v_dc", "V")?,
        v_sm_rated: k.float("converter.v_sm_rated", "V")?,
        c_nominal: k.float("converter.c_nominal", "F")?,
        r_cap: k.float("converter.r_cap", "ohm")?,
        l_arm: k.float("converter.l_arm", "H")?,
        r_arm: k.float("converter.r_arm", "ohm")?,
        l_clamp: k.float("converter.l_clamp", "H")?,
        r_clamp: k.float("converter.r_clamp", "ohm")?,
        v_fd: k.float_or("converter.v_fd", "V", DEFAULT_V_FD)?,
        p_rated: k.float("converter.p_rated", "W")?,
        l_load: k.float("converter.l_load", "H")?,
        f_carrier: k.float("modulation.f_carrier", "Hz")?,
        f_out: k.float("modulation.f_out", "Hz")?,
        m_a: k.float("modulation.m_a", "dimensionless")?,
        delta_a: k.float_or("modulation.delta_a", "dimensionless", 0.0)?,
        sign_adaptive: k.bool_or("modulation.sign_adaptive", false)?,
        f_sample: k.float("sensing.f_sample", "Hz")?,
        dt_sim: k.float_or("run.dt_sim", "s", DEFAULT_DT_SIM)?,
        sigma_v: 0.0,
        sigma_i: 0.0,
        duration: k.float_or("run.duration", "s", DEFAULT_DURATION)?,
        rng_seed: k.uint_opt("run.rng_seed")?.unwrap_or(1),
        estimator: EstimatorTuning::default(),
    };
    let sigma_v = k.float_opt("sensing.sigma_v", "V")?;
    let sigma_i = k.float_opt("sensing.sigma_i", "A")?;

    let defaults = EstimatorTuning::default();
    cfg.estimator = EstimatorTuning {
        q_process: k.float_or("estimator.q_process", "V^2", defaults.q_process)?,
        r_meas: k.float_opt("estimator.r_meas", "V^2")?,
        p0_std: k.float_opt("estimator.p0_std", "V")?,
        x0: k.float_opt("estimator.x0", "V")?,
        clamp_threshold: k.bool_or("estimator.clamp_threshold", defaults.clamp_threshold)?,
        module_capacitance: k.bool_or("estimator.module_capacitance", defaults.module_capacitance)?,
    };

    let mut tolerance = ToleranceSpec::identical();
    if let Some(v) = k.float_opt("tolerance.spread_fraction", "dimensionless")? {
        tolerance.spread_fraction = v;
    }
    if let Some(d) = k.string_opt("tolerance.distribution")? {
        tolerance.distribution = d.parse::<SpreadDistribution>().map_err(|d| {
            ConfigError::invalid("tolerance.distribution", "\"truncated_normal\" or \"uniform\"", d)
        })?;
    }
    if let Some(v) = k.pairs("tolerance.forced_ranking", "array of [module, rank] integer pairs", |a, b| {
        Some((as_usize(a)?, as_usize(b)?))
    })? {
        tolerance.forced_ranking = v;
    }
    if let Some(v) = k.pairs("tolerance.discharge_boost", "array of [module, multiplier] pairs", |a, b| {
        Some((as_usize(a)?, as_f64(b)?))
    })? {
        tolerance.discharge_boost = v;
    }
    if let Some(v) = k.float_opt("tolerance.r_self_nominal", "ohm")? {
        tolerance.r_self_nominal = v;
    }

    let name = k.string_opt("run.name")?.unwrap_or_default();
    let kinds = match k.take("run.kinds") {
        None => ModelKind::ALL.to_vec(),
        Some(toml::Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                toml::Value::String(s) => s.parse::<ModelKind>().ok(),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ConfigError::invalid("run.kinds", "array of \"conv\"/\"comp\"", format!("{items:?}")))?,
        Some(other) => {
            return Err(ConfigError::invalid("run.kinds", "array of \"conv\"/\"comp\"", describe(&other)).into())
        }
    };
    let ma_schedule = k
        .pairs("run.ma_schedule", "array of [start time (s), m_a] pairs", |a, b| {
            Some((as_f64(a)?, as_f64(b)?))
        })?
        .unwrap_or_default();
    let initial_spread = k.float_or("run.initial_spread", "dimensionless", 0.0)?;
    let module_seed = k.uint_opt("run.module_seed")?;
    let integrator = match k.string_opt("run.integrator")?.as_deref() {
        None | Some("rk4") => Integrator::Rk4,
        Some("euler") => Integrator::Euler,
        Some(other) => {
            return Err(ConfigError::invalid("run.integrator", "\"rk4\" or \"euler\"", other).into())
        }
    };

    if let Some(key) = k.values.keys().next() {
        return Err(ConfigError::Unknown(key.clone()).into());
    }
    if !k.missing.is_empty() {
        return Err(ConfigError::Missing(k.missing).into());
    }

    cfg.sigma_v = sigma_v.unwrap_or_else(|| cfg.default_sigma_v());
    cfg.sigma_i = sigma_i.unwrap_or_else(|| cfg.default_sigma_i());

    let scenario = Scenario {
        name,
        cfg,
        tolerance,
        kinds,
        ma_schedule,
        initial_spread,
        module_seed,
        integrator,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Serializes a scenario back into the dotted-key format.
pub fn scenario_to_config_string(s: &Scenario) -> String {
    let c = &s.cfg;
    let e = &c.estimator;
    let t = &s.tolerance;
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    let f = |v: f64| format!("{v:?}");
    line("run.name", format!("{:?}", s.name));
    line("converter.n_modules_per_arm", c.n_modules_per_arm.to_string());
    line("converter.v_dc", f(c.v_dc));
    line("converter.v_sm_rated", f(c.v_sm_rated));
    line("converter.c_nominal", f(c.c_nominal));
    line("converter.r_cap", f(c.r_cap));
    line("converter.l_arm", f(c.l_arm));
    line("converter.r_arm", f(c.r_arm));
    line("converter.l_clamp", f(c.l_clamp));
    line("converter.r_clamp", f(c.r_clamp));
    line("converter.v_fd", f(c.v_fd));
    line("converter.p_rated", f(c.p_rated));
    line("converter.l_load", f(c.l_load));
    line("modulation.f_carrier", f(c.f_carrier));
    line("modulation.f_out", f(c.f_out));
    line("modulation.m_a", f(c.m_a));
    line("modulation.delta_a", f(c.delta_a));
    line("modulation.sign_adaptive", c.sign_adaptive.to_string());
    line("sensing.f_sample", f(c.f_sample));
    line("sensing.sigma_v", f(c.sigma_v));
    line("sensing.sigma_i", f(c.sigma_i));
    line("run.dt_sim", f(c.dt_sim));
    line("run.duration", f(c.duration));
    line("run.rng_seed", c.rng_seed.to_string());
    if let Some(seed) = s.module_seed {
        line("run.module_seed", seed.to_string());
    }
    let kinds: Vec<String> = s.kinds.iter().map(|k| format!("{:?}", k.tag())).collect();
    line("run.kinds", format!("[{}]", kinds.join(", ")));
    let sched: Vec<String> = s.ma_schedule.iter().map(|(t, m)| format!("[{}, {}]", f(*t), f(*m))).collect();
    line("run.ma_schedule", format!("[{}]", sched.join(", ")));
    line("run.initial_spread", f(s.initial_spread));
    line(
        "run.integrator",
        match s.integrator {
            Integrator::Rk4 => "\"rk4\"".into(),
            Integrator::Euler => "\"euler\"".into(),
        },
    );
    line("estimator.q_process", f(e.q_process));
    if let Some(v) = e.r_meas {
        line("estimator.r_meas", f(v));
    }
    if let Some(v) = e.p0_std {
        line("estimator.p0_std", f(v));
    }
    if let Some(v) = e.x0 {
        line("estimator.x0", f(v));
    }
    line("estimator.clamp_threshold", e.clamp_threshold.to_string());
    line("estimator.module_capacitance", e.module_capacitance.to_string());
    line("tolerance.spread_fraction", f(t.spread_fraction));
    line(
        "tolerance.distribution",
        match t.distribution {
            SpreadDistribution::TruncatedNormal => "\"truncated_normal\"".into(),
            SpreadDistribution::Uniform => "\"uniform\"".into(),
        },
    );
    let ranks: Vec<String> = t.forced_ranking.iter().map(|(m, r)| format!("[{m}, {r}]")).collect();
    line("tolerance.forced_ranking", format!("[{}]", ranks.join(", ")));
    let boosts: Vec<String> = t.discharge_boost.iter().map(|(m, b)| format!("[{m}, {}]", f(*b))).collect();
    line("tolerance.discharge_boost", format!("[{}]", boosts.join(", ")));
    line("tolerance.r_self_nominal", f(t.r_self_nominal));
    out
}
