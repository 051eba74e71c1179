//! Scenario files, CSV time series and run manifests.

mod config;
mod manifest;
mod timeseries;

pub use config::{parse_config, parse_config_str, scenario_to_config_string, REQUIRED_KEYS};
pub use manifest::{run_metrics, write_manifest, RunManifest, MANIFEST_VERSION};
pub use timeseries::{
    read_timeseries, sweep_columns, timeseries_columns, write_sweep, write_timeseries, TimeSeries,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes via a temporary file in the target directory, then renames it
/// into place so readers never observe a partial file.
pub(crate) fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
