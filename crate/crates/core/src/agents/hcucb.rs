//! Constrained UCB selection by greedy descent through the hierarchy.
//!
//! At level `h` every allowed child of the current prefix is scored by the
//! reward UCB of its best completion: the highest-UCB full action extending
//! it whose cost bounds pass the screen at this level and every deeper one.
//! The highest score wins, smallest index on ties. A level where no child has
//! such a completion falls back.

use rand::{Rng, RngCore};

use super::{AgentState, ConstraintMode, Decision, FallbackPolicy};
use crate::env::{CompositeAction, RoundObservation};
use crate::linalg::{all_finite, norm2};
use crate::model::CONTEXT_NORM_TOL;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    /// Add the confidence bonus to reward estimates (off for greedy exploit).
    pub reward_bonus: bool,
    /// Ignore the thresholds entirely.
    pub unconstrained: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            reward_bonus: true,
            unconstrained: false,
        }
    }
}

pub(crate) fn check_context(state: &AgentState, context: &[f64]) -> Result<()> {
    if context.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            actual: context.len(),
        });
    }
    if !all_finite(context) {
        return Err(Error::NonFinite("context"));
    }
    let norm = norm2(context);
    if norm > 1.0 + CONTEXT_NORM_TOL {
        return Err(Error::ContextNorm { norm });
    }
    Ok(())
}

/// Cost bounds `(lower, upper)` for one prefix.
pub(crate) fn cost_bounds(state: &AgentState, prefix: &[usize], context: &[f64]) -> (f64, f64) {
    let model = &state.cost_models[prefix];
    let est = model.predict(context);
    let width = state.radius(model) * model.bonus_unchecked(context);
    (est - width, est + width)
}

pub fn hcucb_select(
    state: &AgentState,
    context: &[f64],
    thresholds: &[f64],
    opts: SelectOptions,
    rng: &mut dyn RngCore,
) -> Result<Decision> {
    check_context(state, context)?;
    let levels = state.levels();
    if thresholds.len() != levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            actual: thresholds.len(),
        });
    }

    // Reward score of every full action, aligned with the lexicographic list,
    // and the screen outcome of each of its prefixes.
    let full = state.full_actions();
    let mut screen_cache = std::collections::BTreeMap::<&[usize], (f64, f64)>::new();
    let mut scores = Vec::with_capacity(full.len());
    let mut passes = Vec::with_capacity(full.len());
    for a in full {
        let model = &state.reward_models[&a.indices];
        let est = model.predict(context);
        scores.push(if opts.reward_bonus {
            est + state.radius(model) * model.bonus_unchecked(context)
        } else {
            est
        });
        let mut ok = Vec::with_capacity(levels);
        for len in 1..=levels {
            let p = &a.indices[..len];
            let (lcb, ucb) = *screen_cache
                .entry(p)
                .or_insert_with(|| cost_bounds(state, p, context));
            let bound = match state.constraint_mode {
                ConstraintMode::OptimisticLcb => lcb,
                ConstraintMode::ConservativeUcb => ucb,
            };
            ok.push(opts.unconstrained || bound <= thresholds[len - 1]);
        }
        passes.push(ok);
    }
    // Best score among completions of `prefix`; with `screened`, only those
    // passing the screen at every level from `prefix.len()` down.
    let best_completion = |prefix: &[usize], screened: bool| -> Option<f64> {
        let from = prefix.len() - 1;
        full.iter()
            .zip(&scores)
            .zip(&passes)
            .filter(|((a, _), ok)| a.indices.starts_with(prefix) && (!screened || ok[from..].iter().all(|&b| b)))
            .map(|((_, s), _)| *s)
            .reduce(f64::max)
    };

    let mut prefix: Vec<usize> = Vec::with_capacity(levels);
    let mut per_level_ucb_reward = Vec::with_capacity(levels);
    let mut per_level_cost_bound = Vec::with_capacity(levels);
    let mut fallback_used = false;

    for h in 0..levels {
        let candidates = state.space().allowed(&prefix);
        if candidates.is_empty() {
            return Err(Error::EmptyActionSet {
                level: h + 1,
                prefix: prefix.clone(),
            });
        }
        // (action, screened score, raw score, screen bound, lcb)
        let mut rows = Vec::with_capacity(candidates.len());
        for &a in &candidates {
            prefix.push(a);
            let (lcb, ucb) = screen_cache
                .get(prefix.as_slice())
                .copied()
                .unwrap_or_else(|| cost_bounds(state, &prefix, context));
            let screened = best_completion(&prefix, true);
            let raw = best_completion(&prefix, false).unwrap_or(f64::NEG_INFINITY);
            prefix.pop();
            let screen = match state.constraint_mode {
                ConstraintMode::OptimisticLcb => lcb,
                ConstraintMode::ConservativeUcb => ucb,
            };
            rows.push((a, screened, raw, screen, lcb));
        }

        let mut chosen: Option<(usize, f64, f64)> = None;
        for &(a, screened, _, screen, _) in &rows {
            if let Some(score) = screened {
                if chosen.is_none_or(|(_, s, _)| score > s) {
                    chosen = Some((a, score, screen));
                }
            }
        }
        let (a, score, screen) = match chosen {
            Some(c) => c,
            None => {
                fallback_used = true;
                match state.fallback_policy {
                    FallbackPolicy::LeastLcbCost => {
                        let mut best = rows[0];
                        for &row in &rows[1..] {
                            if row.4 < best.4 {
                                best = row;
                            }
                        }
                        (best.0, best.2, best.3)
                    }
                    FallbackPolicy::AbstainUniform => {
                        let row = rows[rng.random_range(0..rows.len())];
                        (row.0, row.2, row.3)
                    }
                }
            }
        };
        prefix.push(a);
        per_level_ucb_reward.push(score);
        per_level_cost_bound.push(screen);
    }

    Ok(Decision {
        action: CompositeAction::new(prefix),
        per_level_ucb_reward,
        per_level_cost_bound,
        fallback_used,
        explored: false,
    })
}

/// Feed the round's observation to the chosen action's reward model and to
/// the cost model of every realized prefix.
pub fn hcucb_update(
    state: &mut AgentState,
    context: &[f64],
    decision: &Decision,
    obs: &RoundObservation,
) -> Result<()> {
    check_context(state, context)?;
    let levels = state.levels();
    if obs.costs.len() != levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            actual: obs.costs.len(),
        });
    }
    state.space().validate(&decision.action)?;
    let indices = &decision.action.indices;
    state
        .reward_models
        .get_mut(indices)
        .expect("every allowed action has a model")
        .absorb(context, obs.reward)?;
    for len in 1..=levels {
        state
            .cost_models
            .get_mut(&indices[..len])
            .expect("every allowed prefix has a model")
            .absorb(context, obs.costs[len - 1])?;
    }
    state.round += 1;
    Ok(())
}
