use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hcucb::harness::{
    gapcheck_cmd, hardfamily_cmd, resolve_output_dir, run, set_dotted, set_dotted_value, sweep,
    validate_file, GapCheckParams, RunConfig, SweepConfig, Validated, OUTPUT_ROOT_VAR,
};
use hcucb::theory::PairParams;

/// Exit status when a run or check finished but reported a failed invariant.
const EXIT_CHECK_FAILED: u8 = 2;
/// Exit status when some sweep cells could not run.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "hcucb", version, about = "Hierarchical constrained contextual bandit simulator")]
struct Cli {
    /// Root for relative output directories.
    #[arg(long, global = true, env = OUTPUT_ROOT_VAR)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate every seed of a run config and write its artifacts.
    Run(RunArgs),
    /// Run a grid of configs and aggregate them.
    Sweep(SweepArgs),
    /// Compare flat and hierarchical optimal values on random small MDPs.
    Gapcheck(GapArgs),
    /// Generate and audit a separated family of hard instances.
    Hardfamily(HardArgs),
    /// Check a run config, sweep config or spec file without simulating.
    Validate { path: PathBuf },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Agent kind, e.g. `hcucb` or `uniform-random`.
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    /// Write the per-round trace.
    #[arg(long)]
    trace: bool,
    /// Override any config field: `--set agent.lambda=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GapArgs {
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    min_states: usize,
    #[arg(long, default_value_t = 12)]
    max_states: usize,
    #[arg(long, default_value_t = 2)]
    min_actions: usize,
    #[arg(long, default_value_t = 6)]
    max_actions: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma_low: f64,
    #[arg(long, default_value_t = 0.95)]
    gamma_high: f64,
    /// Use the construction where the bound is met with equality.
    #[arg(long)]
    tightness: bool,
    #[arg(short, long, default_value = "hcb-gapcheck")]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct HardArgs {
    #[arg(short = 'd', long)]
    dim: usize,
    #[arg(short = 'H', long)]
    levels: usize,
    #[arg(short = 'T', long)]
    horizon: u64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, default_value = "hcb-hardfamily")]
    output_dir: PathBuf,
}

fn split_set(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .with_context(|| format!("`--set {s}`: expected KEY=VALUE"))
}

fn load_run_config(args: &RunArgs, root: Option<&Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut value: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(id) = &args.run_id {
        set_dotted_value(&mut value, "run_id", toml::Value::String(id.clone()))?;
    }
    if let Some(h) = args.horizon {
        let h = i64::try_from(h).context("--horizon is too large")?;
        set_dotted_value(&mut value, "horizon", toml::Value::Integer(h))?;
    }
    if let Some(seeds) = &args.seeds {
        let seeds = seeds
            .iter()
            .map(|&s| i64::try_from(s).map(toml::Value::Integer))
            .collect::<Result<Vec<_>, _>>()
            .context("--seeds: seeds above i64::MAX must be given in the config file")?;
        set_dotted_value(&mut value, "seeds", toml::Value::Array(seeds))?;
    }
    if let Some(dir) = &args.output_dir {
        set_dotted_value(&mut value, "output_dir", toml::Value::String(dir.display().to_string()))?;
    }
    if let Some(kind) = &args.agent {
        set_dotted_value(&mut value, "agent.kind", toml::Value::String(kind.clone()))?;
    }
    if let Some(d) = args.delta {
        set_dotted_value(&mut value, "agent.delta", toml::Value::Float(d))?;
    }
    if args.trace {
        set_dotted_value(&mut value, "trace", toml::Value::Boolean(true))?;
    }
    for s in &args.sets {
        let (k, v) = split_set(s)?;
        set_dotted(&mut value, k, v)?;
    }
    let mut cfg = RunConfig::from_value(value, &args.config.display().to_string())?;
    cfg.rebase(args.config.parent().unwrap_or(Path::new("")));
    cfg.output_dir = resolve_output_dir(&cfg.output_dir, root);
    Ok(cfg)
}

fn cmd_run(args: &RunArgs, root: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_run_config(args, root)?;
    let artifact = run(&cfg)?;
    let s = &artifact.summary;
    let se = s.se_regret.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
    println!(
        "{}: agent {}, T={}, {} seed(s), mean regret {:.4} (se {se}), mean fallback rounds {:.1}",
        s.run_id,
        s.agent,
        s.horizon,
        s.seeds.len(),
        s.mean_regret,
        s.mean_fallback_rounds
    );
    println!("wrote {} files to {}", artifact.files.len(), artifact.dir.display());
    if artifact.invariant_violations() > 0 {
        eprintln!("invariant violations: {}", artifact.invariant_violations());
        return Ok(ExitCode::from(EXIT_CHECK_FAILED));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &SweepArgs, root: Option<&Path>) -> Result<ExitCode> {
    let mut cfg = SweepConfig::read_file(&args.config)?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.output_dir = resolve_output_dir(&cfg.output_dir, root);
    let report = sweep(&cfg)?;
    for c in &report.cells {
        match &c.error {
            Some(e) => println!("cell {} [{}]: failed: {e}", c.cell, c.values.join(", ")),
            None => println!(
                "cell {} [{}]: mean regret {:.4}",
                c.cell,
                c.values.join(", "),
                c.mean_regret.unwrap_or(f64::NAN)
            ),
        }
    }
    println!("wrote sweep to {}", cfg.output_dir.display());
    if report.invariant_violations() > 0 {
        eprintln!("invariant violations: {}", report.invariant_violations());
        return Ok(ExitCode::from(EXIT_CHECK_FAILED));
    }
    if report.failed_cells() > 0 {
        eprintln!("{} cell(s) failed", report.failed_cells());
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gapcheck(args: &GapArgs, root: Option<&Path>) -> Result<ExitCode> {
    let params = GapCheckParams {
        count: args.count,
        seed: args.seed,
        pairs: PairParams {
            min_states: args.min_states,
            max_states: args.max_states,
            min_actions: args.min_actions,
            max_actions: args.max_actions,
            gamma_low: args.gamma_low,
            gamma_high: args.gamma_high,
        },
        tightness: args.tightness,
    };
    let dir = resolve_output_dir(&args.output_dir, root);
    let (out, _) = gapcheck_cmd(&params, &dir)?;
    let failed = out.rows.iter().filter(|r| !r.holds).count();
    println!("{} pair(s) checked, {failed} outside the bound; wrote {}", out.rows.len(), dir.display());
    Ok(if failed > 0 {
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_hardfamily(args: &HardArgs, root: Option<&Path>) -> Result<ExitCode> {
    let dir = resolve_output_dir(&args.output_dir, root);
    let (out, _) = hardfamily_cmd(args.dim, args.levels, args.horizon, args.sigma, args.seed, &dir)?;
    let a = &out.audit;
    let min = a.min_distance.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "{} member(s), separation {}, min distance {min}, max norm {}; wrote {}",
        a.count,
        a.separation,
        a.max_norm,
        dir.display()
    );
    Ok(if a.passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("audit failed");
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}

fn cmd_validate(path: &Path) -> Result<ExitCode> {
    match validate_file(path)? {
        Validated::Run(cfg) => println!(
            "run config `{}`: T={}, {} seed(s), agent {}",
            cfg.run_id,
            cfg.horizon,
            cfg.seeds.len(),
            cfg.agent.kind.name()
        ),
        Validated::Spec(spec) => println!(
            "spec: d={}, H={}, {} full action(s)",
            spec.dim,
            spec.levels,
            spec.action_space()?.full_actions().len()
        ),
        Validated::Sweep { cells, invalid } => {
            println!("sweep: {cells} cell(s), {} invalid", invalid.len());
            for (i, e) in &invalid {
                println!("  cell {i}: {e}");
            }
            if !invalid.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.output_root.as_deref();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, root),
        Command::Sweep(a) => cmd_sweep(a, root),
        Command::Gapcheck(a) => cmd_gapcheck(a, root),
        Command::Hardfamily(a) => cmd_hardfamily(a, root),
        Command::Validate { path } => cmd_validate(path),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use hcucb::harness::parse_value;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn set_needs_equals() {
        assert_eq!(split_set("a.b=1").unwrap(), ("a.b", "1"));
        assert!(split_set("a.b").is_err());
        assert_eq!(parse_value("2"), toml::Value::Integer(2));
    }
}
