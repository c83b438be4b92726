//! One seeded trajectory: context → select → pull → update → accumulate.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentConfig, AgentKind, AgentState, Policy};
use crate::env::{best_feasible, draw_context, pull, EnvironmentSpec};
use crate::metrics::{Comparator, RoundRecord, RunMetrics, VIOLATION_TOL};
use crate::model::elliptical_potential_bound;
use crate::rng::{round_rng, Substream};
use crate::Result;

/// Absolute slack for invariants compared across independently rounded sums.
pub const INVARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub comparator: Comparator,
    pub schedule: Vec<u64>,
    pub trace: bool,
    /// Track confidence coverage and the assertions that depend on it.
    pub instrument: bool,
}

/// Counts of rounds (or checkpoints) on which an invariant failed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCounts {
    /// A screened decision reported a cost bound above its threshold.
    pub decision_bound: u64,
    /// Some model's running potential exceeded `2d·ln(1 + n/(λd))`.
    pub elliptical_potential: u64,
    /// Truth inside every ellipsoid, screened conservatively, yet infeasible.
    pub screen_soundness: u64,
    /// Truth inside every ellipsoid and the optimum passes the screen, yet
    /// the chosen reward UCB is below the optimal value.
    pub optimism: u64,
    /// `R_H + R_L ≠ R` or `R` decreased, at a checkpoint.
    pub decomposition: u64,
}

impl InvariantCounts {
    pub fn total(&self) -> u64 {
        self.decision_bound + self.elliptical_potential + self.screen_soundness + self.optimism + self.decomposition
    }

    pub fn add(&mut self, other: &Self) {
        self.decision_bound += other.decision_bound;
        self.elliptical_potential += other.elliptical_potential;
        self.screen_soundness += other.screen_soundness;
        self.optimism += other.optimism;
        self.decomposition += other.decomposition;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub record: RoundRecord,
    pub explored: bool,
    pub optimum: Option<f64>,
    pub regret: f64,
    pub regret_high: f64,
    pub feasible: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: RunMetrics,
    pub invariants: InvariantCounts,
    /// First round whose selection saw a reward parameter outside its
    /// ellipsoid (instrumented runs only); `T + 1` if it left after the last
    /// update.
    pub reward_exit_round: Option<u64>,
    pub cost_exit_round: Option<u64>,
    /// Largest `potential / bound` ratio over all models at the end.
    pub max_potential_ratio: f64,
    pub trace: Vec<TraceRow>,
    pub final_state: AgentState,
}

#[derive(Default)]
struct Coverage {
    reward_out: BTreeSet<Vec<usize>>,
    cost_out: BTreeSet<Vec<usize>>,
}

impl Coverage {
    fn refresh_reward(&mut self, state: &AgentState, spec: &EnvironmentSpec, action: &[usize]) -> Result<()> {
        let theta = spec.reward_theta(action).expect("validated spec");
        if state.covers(&state.reward_models[action], theta)? {
            self.reward_out.remove(action);
        } else {
            self.reward_out.insert(action.to_vec());
        }
        Ok(())
    }

    fn refresh_cost(&mut self, state: &AgentState, spec: &EnvironmentSpec, prefix: &[usize]) -> Result<()> {
        let theta = spec.cost_theta(prefix).expect("validated spec");
        if state.covers(&state.cost_models[prefix], theta)? {
            self.cost_out.remove(prefix);
        } else {
            self.cost_out.insert(prefix.to_vec());
        }
        Ok(())
    }
}

/// Run `horizon` rounds of one agent on one spec with one seed.
pub fn simulate_seed(
    spec: &EnvironmentSpec,
    config: &AgentConfig,
    horizon: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SeedOutcome> {
    let mut agent = Agent::for_spec(config.clone(), spec)?;
    let mut metrics = RunMetrics::new(spec.levels, opts.schedule.clone(), opts.comparator);
    let mut inv = InvariantCounts::default();
    let mut trace = Vec::new();
    let mut reward_exit_round = None;
    let mut cost_exit_round = None;
    let dim = spec.dim;
    let lambda = agent.state.confidence.lambda;

    let mut cov = Coverage::default();
    if opts.instrument {
        let st = &agent.state;
        for a in st.reward_models.keys() {
            cov.refresh_reward(st, spec, a)?;
        }
        for p in st.cost_models.keys() {
            cov.refresh_cost(st, spec, p)?;
        }
    }
    let screened_kind = matches!(config.kind, AgentKind::Hcucb | AgentKind::EpsilonGreedy | AgentKind::Oracle);

    for t in 1..=horizon {
        let x = draw_context(spec, &mut round_rng(seed, Substream::Context, t));
        let decision = agent.select(&x, &mut round_rng(seed, Substream::Agent, t))?;

        if screened_kind && !decision.fallback_used && !decision.explored {
            let over = decision
                .per_level_cost_bound
                .iter()
                .zip(agent.thresholds())
                .any(|(b, tau)| b > tau);
            if over {
                inv.decision_bound += 1;
            }
        }

        if opts.instrument {
            if !cov.reward_out.is_empty() && reward_exit_round.is_none() {
                reward_exit_round = Some(t);
            }
            if !cov.cost_out.is_empty() && cost_exit_round.is_none() {
                cost_exit_round = Some(t);
            }
            let inside = cov.reward_out.is_empty() && cov.cost_out.is_empty();
            if inside && config.kind == AgentKind::Hcucb {
                let st = &agent.state;
                if st.constraint_mode == crate::agents::ConstraintMode::ConservativeUcb && !decision.fallback_used {
                    let costs = spec.expected_costs(&x, &decision.action)?;
                    if costs.iter().zip(&spec.thresholds).any(|(c, tau)| *c > tau + VIOLATION_TOL) {
                        inv.screen_soundness += 1;
                    }
                }
                if let Some(best) = best_feasible(spec, &x)? {
                    let passes = (1..=spec.levels)
                        .all(|len| st.screen_bound(best.action.prefix(len), &x) <= spec.thresholds[len - 1]);
                    let chosen_ucb = *decision.per_level_ucb_reward.last().expect("at least one level");
                    if passes && chosen_ucb < best.value - INVARIANT_TOL {
                        inv.optimism += 1;
                    }
                }
            }
        }

        let obs = pull(spec, &x, &decision.action, &mut round_rng(seed, Substream::Noise, t))?;
        agent.update(&x, &decision, &obs)?;

        let indices = &decision.action.indices;
        {
            let st = &agent.state;
            let touched = std::iter::once(&st.reward_models[indices])
                .chain((1..=spec.levels).map(|len| &st.cost_models[&indices[..len]]));
            for m in touched {
                if m.elliptical_potential > elliptical_potential_bound(dim, lambda, m.count) {
                    inv.elliptical_potential += 1;
                }
            }
            if opts.instrument {
                cov.refresh_reward(st, spec, indices)?;
                for len in 1..=spec.levels {
                    cov.refresh_cost(st, spec, &indices[..len])?;
                }
            }
        }

        let record = RoundRecord {
            t,
            context: x,
            action: decision.action.clone(),
            fallback_used: decision.fallback_used,
            reward: obs.reward,
            costs: obs.costs,
            expected_reward: obs.expected_reward,
            expected_costs: obs.expected_costs,
        };
        let before = metrics.checkpoints.len();
        let prev_regret = metrics.cumulative_regret;
        let round = metrics.accumulate(&record, spec)?;
        if metrics.cumulative_regret < prev_regret {
            inv.decomposition += 1;
        }
        if let Some(c) = metrics.checkpoints.get(before) {
            if (c.regret_high + c.regret_low - c.regret).abs() > INVARIANT_TOL {
                inv.decomposition += 1;
            }
        }
        if opts.trace {
            trace.push(TraceRow {
                feasible: round.violated.iter().map(|v| !v).collect(),
                explored: decision.explored,
                optimum: round.optimum,
                regret: round.regret,
                regret_high: round.level_shares[0],
                record,
            });
        }
    }

    if opts.instrument {
        if !cov.reward_out.is_empty() && reward_exit_round.is_none() {
            reward_exit_round = Some(horizon + 1);
        }
        if !cov.cost_out.is_empty() && cost_exit_round.is_none() {
            cost_exit_round = Some(horizon + 1);
        }
    }

    let st = &agent.state;
    let max_potential_ratio = st
        .reward_models
        .values()
        .chain(st.cost_models.values())
        .filter(|m| m.count > 0)
        .map(|m| m.elliptical_potential / elliptical_potential_bound(dim, lambda, m.count))
        .fold(0.0, f64::max);

    Ok(SeedOutcome {
        seed,
        metrics,
        invariants: inv,
        reward_exit_round,
        cost_exit_round,
        max_potential_ratio,
        trace,
        final_state: agent.state,
    })
}
