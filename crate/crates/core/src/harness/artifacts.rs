//! CSV schemas (versioned by a leading comment line) and their readers.

use csv::{ReaderBuilder, WriterBuilder};

use super::sim::{SeedOutcome, TraceRow};
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "# hcb-metrics v1";
pub const TRACE_HEADER: &str = "# hcb-trace v1";

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), fmt)
}

fn finish(header: &str, w: csv::Writer<Vec<u8>>) -> Result<String> {
    let body = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    let body = String::from_utf8(body).expect("csv output is utf-8");
    Ok(format!("{header}\n{body}"))
}

pub fn metrics_columns(levels: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["run_id", "seed", "t", "regret", "regret_high", "regret_low"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..=levels).map(|h| format!("violations_l{h}")));
    cols.push("fallback_rounds".into());
    cols.push("avg_regret".into());
    cols
}

/// One row per checkpoint, seeds in the given order.
pub fn metrics_csv(run_id: &str, levels: usize, outcomes: &[SeedOutcome]) -> Result<String> {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(metrics_columns(levels))?;
    for o in outcomes {
        for c in &o.metrics.checkpoints {
            let mut row = vec![
                run_id.to_string(),
                o.seed.to_string(),
                c.t.to_string(),
                fmt(c.regret),
                fmt(c.regret_high),
                fmt(c.regret_low),
            ];
            row.extend(c.violations.iter().map(|v| v.to_string()));
            row.push(c.fallback_rounds.to_string());
            row.push(fmt(c.avg_regret));
            w.write_record(&row)?;
        }
    }
    finish(METRICS_HEADER, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub t: u64,
    pub regret: f64,
    pub regret_high: f64,
    pub regret_low: f64,
    pub violations: Vec<u64>,
    pub fallback_rounds: u64,
    pub avg_regret: f64,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse {
            path: "metrics csv".into(),
            message: format!("bad or missing `{name}` in row {:?}", rec.position().map(|p| p.line())),
        })
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    if !text.starts_with(METRICS_HEADER) {
        return Err(Error::Parse {
            path: "metrics csv".into(),
            message: format!("missing `{METRICS_HEADER}` header"),
        });
    }
    let mut r = ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let levels = headers.iter().filter(|h| h.starts_with("violations_l")).count();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(MetricsRow {
            run_id: rec.get(0).unwrap_or_default().to_string(),
            seed: field(&rec, 1, "seed")?,
            t: field(&rec, 2, "t")?,
            regret: field(&rec, 3, "regret")?,
            regret_high: field(&rec, 4, "regret_high")?,
            regret_low: field(&rec, 5, "regret_low")?,
            violations: (0..levels)
                .map(|h| field(&rec, 6 + h, "violations"))
                .collect::<Result<_>>()?,
            fallback_rounds: field(&rec, 6 + levels, "fallback_rounds")?,
            avg_regret: field(&rec, 7 + levels, "avg_regret")?,
        });
    }
    Ok(rows)
}

/// Mean of a column across seeds at each checkpoint, in checkpoint order.
pub fn mean_curve(rows: &[MetricsRow], value: impl Fn(&MetricsRow) -> f64) -> Vec<(u64, f64)> {
    let mut ts: Vec<u64> = rows.iter().map(|r| r.t).collect();
    ts.sort_unstable();
    ts.dedup();
    ts.into_iter()
        .map(|t| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.t == t).map(&value).collect();
            (t, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

pub fn trace_csv(run_id: &str, dim: usize, levels: usize, outcomes: &[SeedOutcome]) -> Result<String> {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    let mut cols: Vec<String> = ["run_id", "seed", "t", "action", "fallback_used", "explored"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..=dim).map(|i| format!("x{i}")));
    cols.extend(["reward", "expected_reward", "optimum", "regret", "regret_high"].map(String::from));
    for h in 1..=levels {
        cols.push(format!("cost_l{h}"));
        cols.push(format!("expected_cost_l{h}"));
        cols.push(format!("feasible_l{h}"));
    }
    w.write_record(&cols)?;
    for o in outcomes {
        for TraceRow {
            record,
            explored,
            optimum,
            regret,
            regret_high,
            feasible,
        } in &o.trace
        {
            let mut row = vec![
                run_id.to_string(),
                o.seed.to_string(),
                record.t.to_string(),
                record.action.to_string(),
                record.fallback_used.to_string(),
                explored.to_string(),
            ];
            row.extend(record.context.iter().map(|v| fmt(*v)));
            row.extend([
                fmt(record.reward),
                fmt(record.expected_reward),
                fmt_opt(*optimum),
                fmt(*regret),
                fmt(*regret_high),
            ]);
            for ((c, e), f) in record.costs.iter().zip(&record.expected_costs).zip(feasible) {
                row.push(fmt(*c));
                row.push(fmt(*e));
                row.push(f.to_string());
            }
            w.write_record(&row)?;
        }
    }
    finish(TRACE_HEADER, w)
}
