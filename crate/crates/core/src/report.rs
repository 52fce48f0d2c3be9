//! Plot-ready output: comma-delimited sample series and a TOML summary,
//! each preceded by a `#` header that pins the run's inputs.

use std::io::{self, Write};

use crate::config::{sha256_hex, FileConfig};
use crate::sim::{LoadSample, RunSummary, SimulationConfig, SweepOutput};

pub const TOOL_NAME: &str = "vodsim";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SAMPLE_COLUMNS: &str = "t,normalized_load,normalized_population,active,queued,rejected";
pub const SWEEP_COLUMNS: &str = "rho,t,normalized_load,active,queued";

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_snapshot: String,
    pub config_sha256: String,
}

impl Manifest {
    pub fn new(cfg: &SimulationConfig) -> Self {
        let config_snapshot = FileConfig::from_simulation(cfg).to_toml();
        Self {
            version: TOOL_VERSION.to_string(),
            seed: cfg.seed,
            config_sha256: sha256_hex(&config_snapshot),
            config_snapshot,
        }
    }

    pub fn write_header<W: Write>(&self, w: &mut W, extra: &[(&str, String)]) -> io::Result<()> {
        writeln!(w, "# {TOOL_NAME} {}", self.version)?;
        writeln!(w, "# seed = {}", self.seed)?;
        writeln!(w, "# config_sha256 = {}", self.config_sha256)?;
        for (key, value) in extra {
            writeln!(w, "# {key} = {value}")?;
        }
        writeln!(w, "# --- config ---")?;
        for line in self.config_snapshot.lines() {
            if line.is_empty() {
                writeln!(w, "#")?;
            } else {
                writeln!(w, "# {line}")?;
            }
        }
        writeln!(w, "# --------------")
    }
}

/// Time stamps are printed at nanosecond resolution so tick accumulation
/// noise does not leak into the file.
fn fmt_time(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

pub fn write_samples<W: Write>(
    w: &mut W,
    manifest: &Manifest,
    samples: &[LoadSample],
) -> io::Result<()> {
    manifest.write_header(w, &[])?;
    writeln!(w, "{SAMPLE_COLUMNS}")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_time(s.t),
            s.normalized_load,
            s.normalized_population,
            s.active,
            s.queued,
            s.rejected_cumulative
        )?;
    }
    Ok(())
}

/// Long-format file with one block of rows per demand parameter.
pub fn write_sweep_combined<W: Write>(
    w: &mut W,
    manifest: &Manifest,
    sweep: &SweepOutput,
) -> io::Result<()> {
    let keys: Vec<String> = sweep.series.iter().map(|s| s.rho.to_string()).collect();
    let mut extra = vec![("rho_values", format!("[{}]", keys.join(", ")))];
    for skip in &sweep.skipped {
        extra.push(("skipped", format!("rho {}: {}", skip.rho, skip.reason)));
    }
    manifest.write_header(w, &extra)?;
    writeln!(w, "{SWEEP_COLUMNS}")?;
    for series in &sweep.series {
        for s in &series.output.samples {
            writeln!(
                w,
                "{},{},{},{},{}",
                series.rho,
                fmt_time(s.t),
                s.normalized_load,
                s.active,
                s.queued
            )?;
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(
    w: &mut W,
    manifest: &Manifest,
    summary: &RunSummary,
) -> io::Result<()> {
    manifest.write_header(w, &[])?;
    writeln!(w, "samples = {}", summary.samples)?;
    writeln!(w, "peak_load = {:?}", summary.peak_load)?;
    writeln!(w, "mean_load = {:?}", summary.mean_load)?;
    writeln!(w, "total_arrivals = {}", summary.total_arrivals)?;
    writeln!(w, "total_departed = {}", summary.total_departed)?;
    writeln!(w, "total_rejected = {}", summary.total_rejected)?;
    writeln!(w, "mode_switches = {}", summary.mode_switches)
}

/// File name for one demand parameter's series.
pub fn sweep_file_name(rho: f64) -> String {
    format!("rho_{rho}.csv")
}
