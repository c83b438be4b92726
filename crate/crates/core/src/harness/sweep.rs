//! Grids of run configurations and their aggregate report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use csv::WriterBuilder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{mean_curve, parse_metrics_csv};
use super::config::{set_dotted_value, RunConfig};
use super::run::{execute, mean_se, prepare_output_dir, write, write_run, RunOutput};
use super::svg::{line_chart, Series};
use crate::{Error, Result};

pub const SWEEP_HEADER: &str = "# hcb-sweep v1";

fn d_sweep_id() -> String {
    "sweep".into()
}
fn d_output_dir() -> PathBuf {
    PathBuf::from("hcb-sweep")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "d_sweep_id")]
    pub sweep_id: String,
    #[serde(default = "d_output_dir")]
    pub output_dir: PathBuf,
    /// Run config every cell starts from, as a file...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_file: Option<PathBuf>,
    /// ...or inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<toml::Table>,
    /// Dotted run-config path → values; cells are the Cartesian product in
    /// key order.
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            message: e.to_string(),
        })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = &cfg.base_file {
            if p.is_relative() {
                cfg.base_file = Some(base.join(p));
            }
        }
        if let Some(table) = &mut cfg.base {
            if let Some(toml::Value::Table(env)) = table.get_mut("environment") {
                if let Some(toml::Value::String(p)) = env.get_mut("spec_file") {
                    if Path::new(p.as_str()).is_relative() {
                        *p = base.join(p.as_str()).display().to_string();
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("grid", "is empty"));
        }
        if let Some((k, _)) = self.grid.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::config(format!("grid.{k}"), "has no values"));
        }
        if self.base.is_some() == self.base_file.is_some() {
            return Err(Error::config("base", "give exactly one of `base` or `base_file`"));
        }
        Ok(())
    }

    fn base_value(&self) -> Result<(toml::Value, PathBuf)> {
        if let Some(t) = &self.base {
            return Ok((toml::Value::Table(t.clone()), PathBuf::new()));
        }
        let path = self.base_file.as_ref().expect("validated");
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok((value, path.parent().unwrap_or(Path::new("")).to_path_buf()))
    }

    /// `(cell label values, run config or the reason it is invalid)`.
    pub fn cells(&self) -> Result<Vec<(Vec<toml::Value>, Result<RunConfig>)>> {
        self.validate()?;
        let (base, base_dir) = self.base_value()?;
        let keys: Vec<&String> = self.grid.keys().collect();
        let mut combos: Vec<Vec<toml::Value>> = vec![vec![]];
        for k in &keys {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    self.grid[*k].iter().map(move |v| {
                        let mut c = c.clone();
                        c.push(v.clone());
                        c
                    })
                })
                .collect();
        }
        Ok(combos
            .into_iter()
            .enumerate()
            .map(|(i, values)| {
                let cfg = (|| {
                    let mut v = base.clone();
                    set_dotted_value(&mut v, "run_id", toml::Value::String(format!("{}-{i}", self.sweep_id)))?;
                    for (k, val) in keys.iter().zip(&values) {
                        set_dotted_value(&mut v, k, val.clone())?;
                    }
                    let mut cfg = RunConfig::from_value(v, &format!("sweep cell {i}"))?;
                    cfg.rebase(&base_dir);
                    cfg.validate()?;
                    Ok(cfg)
                })();
                (values, cfg)
            })
            .collect())
    }
}

fn show(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub values: Vec<String>,
    pub error: Option<String>,
    pub seeds: usize,
    pub mean_regret: Option<f64>,
    pub se_regret: Option<f64>,
    pub mean_regret_high: Option<f64>,
    pub mean_regret_low: Option<f64>,
    pub mean_violations: Option<f64>,
    pub se_violations: Option<f64>,
    pub mean_fallback_rounds: Option<f64>,
    pub exponent_of_mean: Option<f64>,
    pub invariant_violations: u64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub keys: Vec<String>,
    pub cells: Vec<CellSummary>,
    pub aggregate_csv: String,
    pub svg: String,
    outputs: Vec<Option<RunOutput>>,
}

impl SweepReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn invariant_violations(&self) -> u64 {
        self.cells.iter().map(|c| c.invariant_violations).sum()
    }
}

fn summarize_cell(cell: usize, values: Vec<String>, out: &Result<RunOutput>) -> CellSummary {
    match out {
        Err(e) => CellSummary {
            cell,
            values,
            error: Some(e.to_string()),
            seeds: 0,
            mean_regret: None,
            se_regret: None,
            mean_regret_high: None,
            mean_regret_low: None,
            mean_violations: None,
            se_violations: None,
            mean_fallback_rounds: None,
            exponent_of_mean: None,
            invariant_violations: 0,
        },
        Ok(o) => {
            let s = &o.summary;
            let per = &s.per_seed;
            let n = per.len() as f64;
            let regrets: Vec<f64> = per.iter().map(|p| p.regret).collect();
            let viol: Vec<f64> = per.iter().map(|p| p.violations.iter().sum::<u64>() as f64).collect();
            let (mean_regret, se_regret) = mean_se(&regrets);
            let (mean_violations, se_violations) = mean_se(&viol);
            CellSummary {
                cell,
                values,
                error: None,
                seeds: per.len(),
                mean_regret: Some(mean_regret),
                se_regret,
                mean_regret_high: Some(per.iter().map(|p| p.regret_high).sum::<f64>() / n),
                mean_regret_low: Some(per.iter().map(|p| p.regret_low).sum::<f64>() / n),
                mean_violations: Some(mean_violations),
                se_violations,
                mean_fallback_rounds: Some(s.mean_fallback_rounds),
                exponent_of_mean: s.exponent_of_mean,
                invariant_violations: s.invariant_violations,
            }
        }
    }
}

fn aggregate_csv(keys: &[String], cells: &[CellSummary]) -> Result<String> {
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v}"));
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["cell".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(
        [
            "status",
            "seeds",
            "mean_regret",
            "se_regret",
            "mean_regret_high",
            "mean_regret_low",
            "mean_violations",
            "se_violations",
            "mean_fallback_rounds",
            "exponent_of_mean",
            "invariant_violations",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for c in cells {
        let mut row = vec![c.cell.to_string()];
        row.extend(c.values.iter().cloned());
        row.push(if c.error.is_some() { "failed" } else { "ok" }.into());
        row.push(c.seeds.to_string());
        for v in [
            c.mean_regret,
            c.se_regret,
            c.mean_regret_high,
            c.mean_regret_low,
            c.mean_violations,
            c.se_violations,
            c.mean_fallback_rounds,
            c.exponent_of_mean,
        ] {
            row.push(opt(v));
        }
        row.push(c.invariant_violations.to_string());
        row.push(c.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    let body = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(format!("{SWEEP_HEADER}\n{}", String::from_utf8(body).expect("utf-8")))
}

/// Run every cell (cells and their seeds in parallel); failed cells are
/// reported, not fatal.
pub fn execute_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    let cells = cfg.cells()?;
    let keys: Vec<String> = cfg.grid.keys().cloned().collect();
    let results: Vec<(Vec<String>, Result<RunOutput>)> = cells
        .into_par_iter()
        .map(|(values, run_cfg)| {
            let labels = values.iter().map(show).collect();
            (labels, run_cfg.and_then(|c| execute(&c)))
        })
        .collect();
    let mut summaries = Vec::with_capacity(results.len());
    let mut outputs = Vec::with_capacity(results.len());
    let mut series = Vec::new();
    for (i, (labels, out)) in results.into_iter().enumerate() {
        let summary = summarize_cell(i, labels, &out);
        if let Ok(o) = &out {
            let rows = parse_metrics_csv(&o.metrics_csv)?;
            series.push(Series {
                label: summary.values.join(", "),
                points: mean_curve(&rows, |r| r.regret)
                    .into_iter()
                    .map(|(t, v)| (t as f64, v))
                    .collect(),
            });
        }
        summaries.push(summary);
        outputs.push(out.ok());
    }
    let svg = line_chart(
        &format!("{}: mean cumulative regret", cfg.sweep_id),
        "t",
        "mean cumulative regret",
        &series,
    );
    Ok(SweepReport {
        aggregate_csv: aggregate_csv(&keys, &summaries)?,
        keys,
        cells: summaries,
        svg,
        outputs,
    })
}

pub fn write_sweep(cfg: &SweepConfig, report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (i, out) in report.outputs.iter().enumerate() {
        if let Some(o) = out {
            files.extend(write_run(o, &dir.join("cells").join(format!("cell-{i:03}")))?.files);
        }
    }
    let mut snapshot = cfg.clone();
    snapshot.output_dir = PathBuf::from(".");
    let text = toml::to_string(&snapshot).map_err(|e| Error::Parse {
        path: "sweep config".into(),
        message: e.to_string(),
    })?;
    write(&dir.join("sweep.toml"), &text, &mut files)?;
    write(&dir.join("aggregate.csv"), &report.aggregate_csv, &mut files)?;
    write(&dir.join("comparison.svg"), &report.svg, &mut files)?;
    Ok(files)
}

pub fn sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    prepare_output_dir(&cfg.output_dir)?;
    let report = execute_sweep(cfg)?;
    write_sweep(cfg, &report, &cfg.output_dir)?;
    Ok(report)
}
