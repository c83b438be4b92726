//! Experimental controls sharing the HC-UCB model bookkeeping.

use rand::{Rng, RngCore};

use super::hcucb::{check_context, cost_bounds, hcucb_select, SelectOptions};
use super::{AgentState, ConstraintMode, Decision};
use crate::env::{best_feasible, EnvironmentSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    UniformRandom,
    EpsilonGreedy { epsilon: f64 },
    UnconstrainedUcb,
    Oracle,
}

fn screen_bounds(state: &AgentState, indices: &[usize], context: &[f64]) -> Vec<f64> {
    (1..=indices.len())
        .map(|len| {
            let (lcb, ucb) = cost_bounds(state, &indices[..len], context);
            match state.constraint_mode {
                ConstraintMode::OptimisticLcb => lcb,
                ConstraintMode::ConservativeUcb => ucb,
            }
        })
        .collect()
}

fn uniform(state: &AgentState, context: &[f64], rng: &mut dyn RngCore) -> Result<Decision> {
    let full = state.full_actions();
    if full.is_empty() {
        return Err(Error::EmptyActionSet {
            level: 1,
            prefix: vec![],
        });
    }
    let action = full[rng.random_range(0..full.len())].clone();
    let est = state.reward_models[&action.indices].predict(context);
    Ok(Decision {
        per_level_ucb_reward: vec![est; state.levels()],
        per_level_cost_bound: screen_bounds(state, &action.indices, context),
        action,
        fallback_used: false,
        explored: true,
    })
}

pub fn baseline_select(
    kind: BaselineKind,
    state: &AgentState,
    context: &[f64],
    thresholds: &[f64],
    spec: Option<&EnvironmentSpec>,
    rng: &mut dyn RngCore,
) -> Result<Decision> {
    check_context(state, context)?;
    match kind {
        BaselineKind::UniformRandom => uniform(state, context, rng),
        BaselineKind::EpsilonGreedy { epsilon } => {
            let u: f64 = rng.random();
            if u < epsilon {
                uniform(state, context, rng)
            } else {
                let opts = SelectOptions {
                    reward_bonus: false,
                    unconstrained: false,
                };
                hcucb_select(state, context, thresholds, opts, rng)
            }
        }
        BaselineKind::UnconstrainedUcb => {
            let open = vec![f64::INFINITY; thresholds.len()];
            hcucb_select(state, context, &open, SelectOptions::default(), rng)
        }
        BaselineKind::Oracle => {
            let spec = spec.ok_or_else(|| Error::config("agent.kind", "the oracle needs access to the true spec"))?;
            match best_feasible(spec, context)? {
                Some(best) => Ok(Decision {
                    per_level_ucb_reward: vec![best.value; spec.levels],
                    per_level_cost_bound: spec.expected_costs(context, &best.action)?,
                    action: best.action,
                    fallback_used: false,
                    explored: false,
                }),
                None => {
                    // Nothing feasible: smallest worst-level excess, then reward.
                    let mut pick = None;
                    for action in state.full_actions() {
                        let costs = spec.expected_costs(context, action)?;
                        let excess = costs
                            .iter()
                            .zip(&spec.thresholds)
                            .map(|(c, t)| c - t)
                            .fold(f64::NEG_INFINITY, f64::max);
                        if pick.as_ref().is_none_or(|(e, _, _)| excess < *e) {
                            pick = Some((excess, action.clone(), costs));
                        }
                    }
                    let (_, action, costs) = pick.ok_or(Error::EmptyActionSet {
                        level: 1,
                        prefix: vec![],
                    })?;
                    let value = spec.expected_reward(context, &action)?;
                    Ok(Decision {
                        per_level_ucb_reward: vec![value; spec.levels],
                        per_level_cost_bound: costs,
                        action,
                        fallback_used: true,
                        explored: false,
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Agent, AgentConfig, AgentKind, Policy};
    use crate::env::{draw_context, generate_spec, pull, GenerateParams};
    use crate::rng::{round_rng, stream_rng, Substream};

    fn cfg(kind: AgentKind) -> AgentConfig {
        AgentConfig {
            kind,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn oracle_delegates_to_best_feasible() {
        let params = GenerateParams::new(3, 2, vec![2, 3], vec![0.3, 0.3], 0.0, 4);
        let spec = generate_spec(&params).unwrap();
        let mut agent = Agent::for_spec(cfg(AgentKind::Oracle), &spec).unwrap();
        for t in 0..200 {
            let x = draw_context(&spec, &mut round_rng(2, Substream::Context, t));
            let d = agent.select(&x, &mut round_rng(2, Substream::Agent, t)).unwrap();
            match best_feasible(&spec, &x).unwrap() {
                Some(best) => {
                    assert_eq!(d.action, best.action);
                    assert!(!d.fallback_used);
                }
                None => assert!(d.fallback_used),
            }
        }
    }

    #[test]
    fn uniform_random_frequencies() {
        let params = GenerateParams::new(2, 2, vec![2, 3], vec![1.0, 1.0], 0.0, 4);
        let spec = generate_spec(&params).unwrap();
        let mut agent = Agent::for_spec(cfg(AgentKind::UniformRandom), &spec).unwrap();
        let k = 6usize;
        let n = 100_000u64;
        let mut counts = std::collections::BTreeMap::<Vec<usize>, u64>::new();
        let mut rng = stream_rng(21, Substream::Agent);
        let x = [0.1, 0.2];
        for _ in 0..n {
            let d = agent.select(&x, &mut rng).unwrap();
            assert!(d.explored);
            *counts.entry(d.action.indices).or_default() += 1;
        }
        assert_eq!(counts.len(), k);
        let p = 1.0 / k as f64;
        let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        for c in counts.values() {
            assert!((*c as f64 / n as f64 - p).abs() < tol);
        }
    }

    #[test]
    fn unconstrained_ucb_equals_hcucb_with_open_thresholds() {
        let params = GenerateParams::new(3, 2, vec![2, 2], vec![f64::INFINITY; 2], 0.2, 6);
        let spec = generate_spec(&params).unwrap();
        let mut a = Agent::for_spec(cfg(AgentKind::UnconstrainedUcb), &spec).unwrap();
        let mut b = Agent::for_spec(cfg(AgentKind::Hcucb), &spec).unwrap();
        for t in 0..300 {
            let x = draw_context(&spec, &mut round_rng(8, Substream::Context, t));
            let da = a.select(&x, &mut round_rng(8, Substream::Agent, t)).unwrap();
            let db = b.select(&x, &mut round_rng(8, Substream::Agent, t)).unwrap();
            assert_eq!(da, db);
            let obs = pull(&spec, &x, &da.action, &mut round_rng(8, Substream::Noise, t)).unwrap();
            a.update(&x, &da, &obs).unwrap();
            b.update(&x, &db, &obs).unwrap();
        }
    }

    #[test]
    fn epsilon_extremes() {
        let params = GenerateParams::new(2, 1, vec![3], vec![1.0], 0.0, 2);
        let spec = generate_spec(&params).unwrap();
        let mut always = Agent::for_spec(
            AgentConfig {
                kind: AgentKind::EpsilonGreedy,
                epsilon: 1.0,
                ..AgentConfig::default()
            },
            &spec,
        )
        .unwrap();
        let mut never = Agent::for_spec(
            AgentConfig {
                kind: AgentKind::EpsilonGreedy,
                epsilon: 0.0,
                ..AgentConfig::default()
            },
            &spec,
        )
        .unwrap();
        let mut rng = stream_rng(1, Substream::Agent);
        for _ in 0..50 {
            assert!(always.select(&[0.2, 0.1], &mut rng).unwrap().explored);
            assert!(!never.select(&[0.2, 0.1], &mut rng).unwrap().explored);
        }
    }
}
