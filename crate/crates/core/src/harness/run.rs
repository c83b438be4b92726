//! A full run: every seed of one configuration, then the artifacts.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{mean_curve, metrics_csv, parse_metrics_csv, trace_csv};
use super::config::RunConfig;
use super::sim::{simulate_seed, InvariantCounts, SeedOutcome, SimOptions};
use super::svg::{line_chart, Series};
use crate::env::EnvironmentSpec;
use crate::metrics::{fit_loglog, sublinearity_summary};
use crate::{Error, Result};

pub const SUMMARY_FORMAT: &str = "hcb-summary v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub spec_seed: u64,
    pub regret: f64,
    pub regret_high: f64,
    pub regret_low: f64,
    pub violations: Vec<u64>,
    pub violations_screened: Vec<u64>,
    pub violating_screened_rounds: u64,
    pub fallback_rounds: u64,
    pub infeasible_rounds: u64,
    pub cumulative_expected_reward: f64,
    pub exponent: Option<f64>,
    pub reward_exit_round: Option<u64>,
    pub cost_exit_round: Option<u64>,
    pub max_potential_ratio: f64,
    pub invariants: InvariantCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format: String,
    pub run_id: String,
    pub agent: String,
    pub horizon: u64,
    pub levels: usize,
    pub seeds: Vec<u64>,
    pub mean_regret: f64,
    pub se_regret: Option<f64>,
    pub mean_violations: Vec<f64>,
    pub mean_fallback_rounds: f64,
    /// Log-log slope of the seed-averaged regret curve.
    pub exponent_of_mean: Option<f64>,
    pub invariant_violations: u64,
    pub per_seed: Vec<SeedSummary>,
}

/// Everything a run produces, before it touches the disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub specs: Vec<(u64, EnvironmentSpec)>,
    pub outcomes: Vec<SeedOutcome>,
    pub metrics_csv: String,
    pub trace_csv: Option<String>,
    pub summary: RunSummary,
    pub summary_json: String,
    pub svg: String,
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: RunSummary,
}

impl RunArtifact {
    pub fn invariant_violations(&self) -> u64 {
        self.summary.invariant_violations
    }
}

/// Sample mean and standard error (`s/√n`; `None` below two values).
pub fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt() / n.sqrt()))
}

/// Regret chart built from the metrics CSV alone.
pub fn regret_svg_from_csv(csv_text: &str) -> Result<String> {
    let rows = parse_metrics_csv(csv_text)?;
    let title = rows.first().map_or("regret".to_string(), |r| format!("{}: cumulative regret", r.run_id));
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.dedup();
    let mut series: Vec<Series> = Vec::new();
    series.push(Series {
        label: "mean".into(),
        points: mean_curve(&rows, |r| r.regret)
            .into_iter()
            .map(|(t, v)| (t as f64, v))
            .collect(),
    });
    // Individual seeds only while the legend stays readable.
    if seeds.len() <= 7 {
        for s in &seeds {
            series.push(Series {
                label: format!("seed {s}"),
                points: rows
                    .iter()
                    .filter(|r| r.seed == *s)
                    .map(|r| (r.t as f64, r.regret))
                    .collect(),
            });
        }
    }
    Ok(line_chart(&title, "t", "cumulative regret", &series))
}

fn summarize(config: &RunConfig, levels: usize, specs: &[(u64, EnvironmentSpec)], outcomes: &[SeedOutcome]) -> RunSummary {
    let per_seed: Vec<SeedSummary> = outcomes
        .iter()
        .zip(specs)
        .map(|(o, (_, spec))| {
            let m = &o.metrics;
            SeedSummary {
                seed: o.seed,
                spec_seed: spec.seed,
                regret: m.cumulative_regret,
                regret_high: m.regret_high,
                regret_low: m.regret_low,
                violations: m.violations.clone(),
                violations_screened: m.violations_screened.clone(),
                violating_screened_rounds: m.violating_screened_rounds,
                fallback_rounds: m.fallback_rounds,
                infeasible_rounds: m.infeasible_rounds,
                cumulative_expected_reward: m.cumulative_expected_reward,
                exponent: sublinearity_summary(m).ok().and_then(|r| r.fit).map(|f| f.exponent),
                reward_exit_round: o.reward_exit_round,
                cost_exit_round: o.cost_exit_round,
                max_potential_ratio: o.max_potential_ratio,
                invariants: o.invariants.clone(),
            }
        })
        .collect();
    let regrets: Vec<f64> = per_seed.iter().map(|s| s.regret).collect();
    let (mean_regret, se_regret) = mean_se(&regrets);
    let n = per_seed.len() as f64;
    let mean_violations = (0..levels)
        .map(|h| per_seed.iter().map(|s| s.violations[h] as f64).sum::<f64>() / n)
        .collect();
    let mean_fallback_rounds = per_seed.iter().map(|s| s.fallback_rounds as f64).sum::<f64>() / n;

    let cps = &outcomes[0].metrics.checkpoints;
    let mean_points: Vec<(f64, f64)> = (0..cps.len())
        .map(|i| {
            let r = outcomes.iter().map(|o| o.metrics.checkpoints[i].regret).sum::<f64>() / n;
            (cps[i].t as f64, r)
        })
        .collect();
    let exponent_of_mean = if mean_points.len() >= 3 {
        fit_loglog(&mean_points).map(|f| f.exponent)
    } else {
        None
    };
    let mut inv = InvariantCounts::default();
    for o in outcomes {
        inv.add(&o.invariants);
    }
    RunSummary {
        format: SUMMARY_FORMAT.into(),
        run_id: config.run_id.clone(),
        agent: config.agent.kind.name().into(),
        horizon: config.horizon,
        levels,
        seeds: config.seeds.clone(),
        mean_regret,
        se_regret,
        mean_violations,
        mean_fallback_rounds,
        exponent_of_mean,
        invariant_violations: inv.total(),
        per_seed,
    }
}

/// Simulate every seed (in parallel) and render the artifacts in memory.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let schedule = config.checkpoint_schedule.resolve(config.horizon)?;
    let specs: Vec<(u64, EnvironmentSpec)> = if config.environment.per_seed {
        config
            .seeds
            .par_iter()
            .map(|&s| Ok((s, config.spec_for_seed(s)?)))
            .collect::<Result<_>>()?
    } else {
        let spec = config.spec_for_seed(0)?;
        config.seeds.iter().map(|&s| (s, spec.clone())).collect()
    };
    let opts = SimOptions {
        comparator: config.comparator,
        schedule,
        trace: config.trace,
        instrument: config.instrument,
    };
    let outcomes: Vec<SeedOutcome> = specs
        .par_iter()
        .map(|(seed, spec)| simulate_seed(spec, &config.agent, config.horizon, *seed, &opts))
        .collect::<Result<_>>()?;

    let levels = specs[0].1.levels;
    let dim = specs[0].1.dim;
    let metrics_csv = metrics_csv(&config.run_id, levels, &outcomes)?;
    let trace_csv = if config.trace {
        Some(trace_csv(&config.run_id, dim, levels, &outcomes)?)
    } else {
        None
    };
    let summary = summarize(config, levels, &specs, &outcomes);
    let summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    let svg = regret_svg_from_csv(&metrics_csv)?;
    Ok(RunOutput {
        config: config.clone(),
        specs,
        outcomes,
        metrics_csv,
        trace_csv,
        summary,
        summary_json,
        svg,
    })
}

/// Create `dir` and make sure files can be written into it.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".hcb-write-probe");
    std::fs::write(&probe, b"").map_err(|e| Error::io(dir, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))?;
    Ok(())
}

pub(crate) fn write(path: &Path, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Write a finished run into `dir`. The config snapshot points at the copied
/// spec and at `.` for output, so re-running it from `dir` reproduces every
/// other file.
pub fn write_run(output: &RunOutput, dir: &Path) -> Result<RunArtifact> {
    let mut files = Vec::new();
    let mut snapshot = output.config.clone();
    snapshot.output_dir = PathBuf::from(".");
    if snapshot.environment.spec_file.is_some() {
        snapshot.environment.spec_file = Some(PathBuf::from("spec.toml"));
    }
    if output.config.environment.per_seed {
        for (seed, spec) in &output.specs {
            write(&dir.join("specs").join(format!("seed-{seed}.toml")), &spec.to_toml_string()?, &mut files)?;
        }
    } else {
        write(&dir.join("spec.toml"), &output.specs[0].1.to_toml_string()?, &mut files)?;
    }
    write(&dir.join("config.toml"), &snapshot.to_toml_string()?, &mut files)?;
    write(&dir.join("metrics.csv"), &output.metrics_csv, &mut files)?;
    write(&dir.join("summary.json"), &output.summary_json, &mut files)?;
    write(&dir.join("regret.svg"), &output.svg, &mut files)?;
    if let Some(trace) = &output.trace_csv {
        write(&dir.join("trace.csv"), trace, &mut files)?;
    }
    Ok(RunArtifact {
        dir: dir.to_path_buf(),
        files,
        summary: output.summary.clone(),
    })
}

/// Validate, check the output directory, simulate, write.
pub fn run(config: &RunConfig) -> Result<RunArtifact> {
    config.validate()?;
    prepare_output_dir(&config.output_dir)?;
    let output = execute(config)?;
    write_run(&output, &config.output_dir)
}
