//! File-producing wrappers around the theory checks.

use std::path::{Path, PathBuf};

use csv::WriterBuilder;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{prepare_output_dir, write};
use crate::rng::{round_rng, Substream};
use crate::theory::{
    gap_check, generate_hard_family, random_pair, tightness_instance, FamilyAudit, GapReport, HardInstanceFamily,
    PairParams,
};
use crate::{Error, Result};

pub const GAPCHECK_HEADER: &str = "# hcb-gapcheck v1";
pub const AUDIT_HEADER: &str = "# hcb-hardfamily-audit v1";

/// Slacks used when judging the gap sandwich.
pub const GAP_LOWER_SLACK: f64 = 1e-9;
pub const GAP_UPPER_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCheckParams {
    pub count: usize,
    pub seed: u64,
    pub pairs: PairParams,
    /// Use the one-step-loss construction instead of random pairs; `γ` and
    /// `ε` are then drawn per row.
    pub tightness: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub index: usize,
    pub states: usize,
    pub actions: usize,
    pub report: GapReport,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapCheckOutput {
    pub rows: Vec<GapRow>,
    pub csv: String,
}

impl GapCheckOutput {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

pub fn run_gapcheck(params: &GapCheckParams) -> Result<GapCheckOutput> {
    if params.count == 0 {
        return Err(Error::config("count", "must be at least 1"));
    }
    params.pairs.validate()?;
    let rows: Vec<GapRow> = (0..params.count)
        .into_par_iter()
        .map(|i| {
            let (mdp, dec) = if params.tightness {
                let mut rng = round_rng(params.seed, Substream::Theory, i as u64);
                let gamma = if params.pairs.gamma_high > params.pairs.gamma_low {
                    rng.random_range(params.pairs.gamma_low..params.pairs.gamma_high)
                } else {
                    params.pairs.gamma_low
                };
                let eps = rng.random_range(0.01..0.5);
                tightness_instance(gamma, eps)?
            } else {
                random_pair(&params.pairs, params.seed, i as u64)?
            };
            let report = gap_check(&mdp, &dec)?;
            Ok(GapRow {
                index: i,
                states: mdp.states,
                actions: mdp.actions,
                holds: report.holds(GAP_LOWER_SLACK, GAP_UPPER_SLACK),
                report,
            })
        })
        .collect::<Result<_>>()?;

    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record([
        "index", "states", "actions", "gamma", "gap", "min_gap", "epsilon", "q_mismatch", "bound", "loose_bound",
        "ratio", "holds",
    ])?;
    for r in &rows {
        let g = &r.report;
        w.write_record([
            r.index.to_string(),
            r.states.to_string(),
            r.actions.to_string(),
            g.gamma.to_string(),
            g.max_gap.to_string(),
            g.min_gap.to_string(),
            g.epsilon.to_string(),
            g.q_mismatch.to_string(),
            g.bound.to_string(),
            g.loose_bound.to_string(),
            g.ratio.map_or_else(|| "NA".into(), |v| v.to_string()),
            r.holds.to_string(),
        ])?;
    }
    let body = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    let csv = format!("{GAPCHECK_HEADER}\n{}", String::from_utf8(body).expect("utf-8"));
    Ok(GapCheckOutput { rows, csv })
}

pub fn gapcheck_cmd(params: &GapCheckParams, dir: &Path) -> Result<(GapCheckOutput, Vec<PathBuf>)> {
    if params.count == 0 {
        return Err(Error::config("count", "must be at least 1"));
    }
    prepare_output_dir(dir)?;
    let out = run_gapcheck(params)?;
    let mut files = Vec::new();
    write(&dir.join("gapcheck.csv"), &out.csv, &mut files)?;
    let params_json = serde_json::to_string_pretty(params).expect("params serialize") + "\n";
    write(&dir.join("gapcheck-params.json"), &params_json, &mut files)?;
    Ok((out, files))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardFamilyOutput {
    pub family: HardInstanceFamily,
    pub audit: FamilyAudit,
    pub audit_csv: String,
}

pub fn run_hardfamily(dim: usize, levels: usize, horizon: u64, sigma: f64, seed: u64) -> Result<HardFamilyOutput> {
    let family = generate_hard_family(dim, levels, horizon, sigma, seed)?;
    let audit = family.audit();
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(["level", "members", "separation", "min_distance", "max_norm", "passed"])?;
    for (h, d) in audit.min_distance.iter().enumerate() {
        w.write_record([
            (h + 1).to_string(),
            audit.count.to_string(),
            audit.separation.to_string(),
            d.to_string(),
            audit.max_norm.to_string(),
            (audit.passed() && *d >= audit.separation).to_string(),
        ])?;
    }
    let body = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    let audit_csv = format!("{AUDIT_HEADER}\n{}", String::from_utf8(body).expect("utf-8"));
    Ok(HardFamilyOutput {
        family,
        audit,
        audit_csv,
    })
}

/// Family, audit and one spec file per member under `dir`.
pub fn hardfamily_cmd(
    dim: usize,
    levels: usize,
    horizon: u64,
    sigma: f64,
    seed: u64,
    dir: &Path,
) -> Result<(HardFamilyOutput, Vec<PathBuf>)> {
    let out = run_hardfamily(dim, levels, horizon, sigma, seed)?;
    prepare_output_dir(dir)?;
    let mut files = Vec::new();
    for (i, spec) in out.family.to_specs()?.iter().enumerate() {
        write(&dir.join("specs").join(format!("member-{i:03}.toml")), &spec.to_toml_string()?, &mut files)?;
    }
    write(&dir.join("audit.csv"), &out.audit_csv, &mut files)?;
    let audit_json = serde_json::to_string_pretty(&out.audit).expect("audit serializes") + "\n";
    write(&dir.join("audit.json"), &audit_json, &mut files)?;
    let family_json = serde_json::to_string_pretty(&out.family).expect("family serializes") + "\n";
    write(&dir.join("family.json"), &family_json, &mut files)?;
    Ok((out, files))
}
