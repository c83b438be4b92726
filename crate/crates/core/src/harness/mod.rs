//! Seeded runs, sweeps and their on-disk artifacts.
//!
//! A run directory holds `config.toml` (a snapshot that reproduces the rest),
//! the spec(s), `metrics.csv`, `summary.json`, `regret.svg` (drawn from the
//! CSV alone) and, when asked for, `trace.csv`.

mod artifacts;
mod config;
mod run;
mod sim;
mod svg;
mod sweep;
mod theory_cmds;

use std::path::Path;

pub use artifacts::{
    mean_curve, metrics_columns, metrics_csv, parse_metrics_csv, trace_csv, MetricsRow, METRICS_HEADER, TRACE_HEADER,
};
pub use config::{
    parse_value, resolve_output_dir, set_dotted, set_dotted_value, EnvironmentConfig, RunConfig, OUTPUT_ROOT_VAR,
};
pub use run::{
    execute, mean_se, prepare_output_dir, regret_svg_from_csv, run, write_run, RunArtifact, RunOutput, RunSummary,
    SeedSummary, SUMMARY_FORMAT,
};
pub use sim::{simulate_seed, InvariantCounts, SeedOutcome, SimOptions, TraceRow, INVARIANT_TOL};
pub use svg::{line_chart, Series};
pub use sweep::{execute_sweep, sweep, write_sweep, CellSummary, SweepConfig, SweepReport, SWEEP_HEADER};
pub use theory_cmds::{
    gapcheck_cmd, hardfamily_cmd, run_gapcheck, run_hardfamily, GapCheckOutput, GapCheckParams, GapRow,
    HardFamilyOutput, AUDIT_HEADER, GAPCHECK_HEADER, GAP_LOWER_SLACK, GAP_UPPER_SLACK,
};

use crate::env::EnvironmentSpec;
use crate::{Error, Result};

/// What [`validate_file`] recognized.
#[derive(Debug, Clone, PartialEq)]
pub enum Validated {
    Run(Box<RunConfig>),
    Sweep { cells: usize, invalid: Vec<(usize, String)> },
    Spec(Box<EnvironmentSpec>),
}

/// Check a run config, sweep config or spec file without simulating.
pub fn validate_file(path: &Path) -> Result<Validated> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse {
        path: origin.clone(),
        message: e.to_string(),
    })?;
    if table.contains_key("grid") {
        let cfg = SweepConfig::read_file(path)?;
        let cells = cfg.cells()?;
        let invalid = cells
            .iter()
            .enumerate()
            .filter_map(|(i, (_, c))| c.as_ref().err().map(|e| (i, e.to_string())))
            .collect();
        return Ok(Validated::Sweep {
            cells: cells.len(),
            invalid,
        });
    }
    if table.contains_key("horizon") {
        let cfg = RunConfig::read_file(path)?;
        cfg.validate()?;
        if let Some(p) = &cfg.environment.spec_file {
            EnvironmentSpec::read_file(p)?;
        }
        return Ok(Validated::Run(Box::new(cfg)));
    }
    if table.contains_key("format_version") {
        return Ok(Validated::Spec(Box::new(EnvironmentSpec::read_file(path)?)));
    }
    Err(Error::Parse {
        path: origin,
        message: "not a run config (`horizon`), sweep config (`grid`) or spec (`format_version`)".into(),
    })
}
