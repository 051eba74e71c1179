use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::estimator::ModelKind;
use crate::harness::{RunResult, SweepRow};
use crate::modulation::Arm;

/// Column names of a run CSV, in file order.
pub fn timeseries_columns(n: usize, kinds: &[ModelKind]) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for arm in Arm::BOTH {
        cols.extend((1..=n).map(|j| format!("vc_true_{}_{j:02}", arm.tag())));
    }
    for kind in kinds {
        for arm in Arm::BOTH {
            cols.extend((1..=n).map(|j| format!("vc_est_{}_{}_{j:02}", kind.tag(), arm.tag())));
        }
    }
    cols.extend(["i_u", "i_l", "v_arm_u", "v_arm_l", "i_out"].map(String::from));
    cols.extend(kinds.iter().map(|k| format!("maxerr_{}", k.tag())));
    cols
}

fn sci(v: f64) -> String {
    format!("{v:e}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Usage(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the sample-grid series of `result` as CSV.
pub fn write_timeseries(result: &RunResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let kinds: Vec<ModelKind> = result.kinds.iter().map(|k| k.kind).collect();
    let header = timeseries_columns(result.n, &kinds);
    write_atomic(path, |w| {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        csv.write_record(&header).map_err(|e| csv_err(path, e))?;
        let mut row = Vec::with_capacity(header.len());
        for k in 0..result.len() {
            row.clear();
            row.push(sci(result.t[k]));
            for a in 0..2 {
                row.extend(result.truth[a][k].iter().map(|&v| sci(v)));
            }
            for trace in &result.kinds {
                for a in 0..2 {
                    row.extend(trace.estimates[a][k].iter().map(|&v| sci(v)));
                }
            }
            row.push(sci(result.i_arm[0][k]));
            row.push(sci(result.i_arm[1][k]));
            row.push(sci(result.v_arm[0][k]));
            row.push(sci(result.v_arm[1][k]));
            row.push(sci(result.i_out[k]));
            row.extend(result.kinds.iter().map(|t| sci(t.max_error[k])));
            csv.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}

/// Column-addressable numeric table read back from a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_timeseries(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::Usage(format!("{}: row {}: `{f}` is not a number", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(TimeSeries { columns, rows })
}

pub fn sweep_columns(kinds: &[ModelKind]) -> Vec<String> {
    let mut cols: Vec<String> = ["index", "f_sample", "f_carrier", "m_a_final", "seed"]
        .map(String::from)
        .to_vec();
    for k in kinds {
        cols.push(format!("mean_err_{}", k.tag()));
        cols.push(format!("max_err_{}", k.tag()));
        cols.push(format!("mae_{}", k.tag()));
    }
    cols.push("error".into());
    cols
}

/// One line per sweep row; failed rows carry `nan` metrics and the message.
pub fn write_sweep(rows: &[SweepRow], kinds: &[ModelKind], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = sweep_columns(kinds);
    write_atomic(path, |w| {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        csv.write_record(&header).map_err(|e| csv_err(path, e))?;
        for r in rows {
            let m_final = r.ma_schedule.last().map_or(f64::NAN, |&(_, m)| m);
            let mut rec = vec![
                r.index.to_string(),
                sci(r.f_sample),
                sci(r.f_carrier),
                sci(m_final),
                r.seed.to_string(),
            ];
            for &k in kinds {
                match r.metric(k) {
                    Some(m) => rec.extend([sci(m.mean_error), sci(m.max_error), sci(m.mae)]),
                    None => rec.extend(["NaN".to_string(), "NaN".into(), "NaN".into()]),
                }
            }
            rec.push(r.error.clone().unwrap_or_default());
            csv.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}
