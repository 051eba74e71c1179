use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcmmc::harness::{sweep_sampling, sweep_switching, SweepRow};
use dcmmc::io::{
    parse_config, run_metrics, write_manifest, write_sweep, write_timeseries, RunManifest,
};
use dcmmc::model::size_clamping_inductor;
use dcmmc::{run_scenario, Error, ModelKind, Scenario};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_FAULT: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "dcmmc", version, about = "Diode-clamped MMC simulation and capacitor-voltage estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its time series and manifest.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Estimator kinds to run, comma separated.
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<ModelKind>>,
    },
    /// Re-run a scenario across sampling or carrier frequencies.
    Sweep {
        #[arg(value_enum)]
        axis: Axis,
        config: PathBuf,
        /// Frequencies to sweep (Hz), comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        list: Vec<f64>,
        /// Modulation-index schedule as `t:m_a` steps, e.g. `0:0.95,0.5:0.5`.
        /// Repeat for several schedules (switching sweeps only).
        #[arg(long = "ma-schedule", value_parser = parse_schedule)]
        ma_schedules: Vec<Vec<(f64, f64)>>,
        #[command(flatten)]
        common: Common,
    },
    /// Smallest clamp inductance keeping the first current peak within rating.
    SizeInductor {
        /// Largest initial voltage difference across the branch (V).
        #[arg(long)]
        vdiff: f64,
        /// Diode peak current rating (A).
        #[arg(long)]
        ipmax: f64,
        /// Series capacitance of the two modules (F).
        #[arg(long)]
        ce: f64,
        /// Total loop resistance (ohm).
        #[arg(long, default_value_t = 0.0)]
        rsum: f64,
    },
    /// Parse and check a configuration file.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `run.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Sampling,
    Switching,
}

impl Axis {
    fn tag(self) -> &'static str {
        match self {
            Axis::Sampling => "sampling",
            Axis::Switching => "switching",
        }
    }
}

fn parse_schedule(text: &str) -> Result<Vec<(f64, f64)>, String> {
    text.split(',')
        .map(|step| {
            let (t, m) = step
                .split_once(':')
                .ok_or_else(|| format!("`{step}` is not of the form t:m_a"))?;
            let t: f64 = t.trim().parse().map_err(|e| format!("time `{t}`: {e}"))?;
            let m: f64 = m.trim().parse().map_err(|e| format!("m_a `{m}`: {e}"))?;
            Ok((t, m))
        })
        .collect()
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Domain(_) => EXIT_CONFIG,
            Error::SimulationFault { .. } | Error::EstimatorFault { .. } => EXIT_FAULT,
            Error::Usage(_) => EXIT_USAGE,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => EXIT_FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut s = parse_config(path).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    if let Some(seed) = seed {
        s.cfg.rng_seed = seed;
    }
    for w in s.validate().map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))? {
        log::warn!("{w}");
    }
    Ok(s)
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::new(EXIT_FAILURE, format!("cannot create {}: {e}", dir.display())))
}

fn file_stem(name: &str) -> String {
    let stem: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if stem.is_empty() { "run".into() } else { stem }
}

fn simulate(config: &Path, common: &Common, kinds: Option<Vec<ModelKind>>) -> Result<(), Failure> {
    let mut s = load(config, common.seed)?;
    if let Some(kinds) = kinds {
        s = s.with_kinds(&kinds);
        s.validate().map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    }
    prepare_out(&common.out)?;
    let started = RunManifest::now();
    let result = run_scenario(&s)?;

    let stem = file_stem(&s.name);
    let csv = format!("{stem}.csv");
    write_timeseries(&result, common.out.join(&csv))?;
    let mut manifest = RunManifest::new(&s, started);
    manifest.metrics = run_metrics(&result);
    manifest.files.push(csv.clone());
    manifest.finished = RunManifest::now();
    write_manifest(&manifest, common.out.join(format!("{stem}.manifest.json")))?;

    println!("{}: {} samples, seed {}", s.name, result.len(), s.cfg.rng_seed);
    for (key, value) in &manifest.metrics {
        println!("  {key} = {value:.6e}");
    }
    println!("  wrote {}", common.out.join(csv).display());
    Ok(())
}

fn sweep_metrics(rows: &[SweepRow]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for row in rows {
        for m in &row.metrics {
            out.insert(format!("row{:02}_mean_err_{}", row.index, m.kind.tag()), m.mean_error);
            out.insert(format!("row{:02}_max_err_{}", row.index, m.kind.tag()), m.max_error);
        }
    }
    out.insert("rows".into(), rows.len() as f64);
    out.insert("failed_rows".into(), rows.iter().filter(|r| r.error.is_some()).count() as f64);
    out
}

fn sweep(
    axis: Axis,
    config: &Path,
    list: &[f64],
    schedules: &[Vec<(f64, f64)>],
    common: &Common,
) -> Result<(), Failure> {
    let s = load(config, common.seed)?;
    if matches!(axis, Axis::Sampling) && !schedules.is_empty() {
        return Err(Failure::new(EXIT_USAGE, "--ma-schedule applies to switching sweeps only"));
    }
    prepare_out(&common.out)?;
    let started = RunManifest::now();
    let rows = match axis {
        Axis::Sampling => sweep_sampling(&s, list)?,
        Axis::Switching => sweep_switching(&s, list, schedules)?,
    };

    let stem = format!("{}_sweep_{}", file_stem(&s.name), axis.tag());
    let csv = format!("{stem}.csv");
    write_sweep(&rows, &s.kinds, common.out.join(&csv))?;
    let mut manifest = RunManifest::new(&s, started);
    manifest.metrics = sweep_metrics(&rows);
    manifest.files.push(csv.clone());
    manifest.finished = RunManifest::now();
    write_manifest(&manifest, common.out.join(format!("{stem}.manifest.json")))?;

    for row in &rows {
        let cells: Vec<String> = row
            .metrics
            .iter()
            .map(|m| format!("{} mean {:.3} V max {:.3} V", m.kind.tag(), m.mean_error, m.max_error))
            .collect();
        match &row.error {
            Some(e) => println!("row {}: f_sample {} Hz, f_carrier {} Hz: failed: {e}", row.index, row.f_sample, row.f_carrier),
            None => println!(
                "row {}: f_sample {} Hz, f_carrier {} Hz: {}",
                row.index,
                row.f_sample,
                row.f_carrier,
                cells.join(", ")
            ),
        }
    }
    println!("wrote {}", common.out.join(csv).display());
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(Failure::new(EXIT_FAULT, format!("{failed} of {} sweep rows failed", rows.len())));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, common, kinds } => simulate(&config, &common, kinds),
        Command::Sweep {
            axis,
            config,
            list,
            ma_schedules,
            common,
        } => sweep(axis, &config, &list, &ma_schedules, &common),
        Command::SizeInductor { vdiff, ipmax, ce, rsum } => {
            let l = size_clamping_inductor(vdiff, ipmax, ce, rsum)?;
            println!("{l:.4e}");
            Ok(())
        }
        Command::Validate { config } => {
            let s = load(&config, None)?;
            println!(
                "{}: ok ({} modules per arm, {} s at {} Hz sampling)",
                config.display(),
                s.cfg.n_modules_per_arm,
                s.cfg.duration,
                s.cfg.f_sample
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
