//! HC-UCB and baseline policies behind one [`Policy`] interface.
//!
//! Every agent owns one ridge model per composite action (reward) and one per
//! action prefix (cost at level `prefix.len()`), all sharing `λ` and `d`.

mod baselines;
mod hcucb;

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use baselines::{baseline_select, BaselineKind};
pub use hcucb::{hcucb_select, hcucb_update, SelectOptions};

use crate::env::{ActionSpace, CompositeAction, EnvironmentSpec, RoundObservation};
use crate::model::{ConfidenceConfig, LinearModelState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    /// Screen on `estimate − bonus ≤ τ`.
    OptimisticLcb,
    /// Screen on `estimate + bonus ≤ τ`.
    #[default]
    ConservativeUcb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// Pick the candidate with the smallest cost lower bound.
    #[default]
    LeastLcbCost,
    /// Pick uniformly among the candidates.
    AbstainUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    #[default]
    Hcucb,
    UniformRandom,
    EpsilonGreedy,
    UnconstrainedUcb,
    Oracle,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Hcucb => "hcucb",
            AgentKind::UniformRandom => "uniform-random",
            AgentKind::EpsilonGreedy => "epsilon-greedy",
            AgentKind::UnconstrainedUcb => "unconstrained-ucb",
            AgentKind::Oracle => "oracle",
        }
    }
}

fn d_delta() -> f64 {
    0.1
}
fn d_one() -> f64 {
    1.0
}
fn d_epsilon() -> f64 {
    0.1
}

/// Agent block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub kind: AgentKind,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_one")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub s_bound: f64,
    #[serde(default = "d_one")]
    pub sigma_scale: f64,
    #[serde(default)]
    pub mode: ConstraintMode,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub fallback: FallbackPolicy,
    /// Give each of the `H + 1` model families confidence `δ/(H+1)`.
    #[serde(default)]
    pub split_delta: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kind: AgentKind::Hcucb,
            delta: d_delta(),
            lambda: 1.0,
            s_bound: 1.0,
            sigma_scale: 1.0,
            mode: ConstraintMode::ConservativeUcb,
            epsilon: d_epsilon(),
            fallback: FallbackPolicy::LeastLcbCost,
            split_delta: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("agent.delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config("agent.lambda", format!("must be finite and > 0, got {}", self.lambda)));
        }
        if !(self.s_bound.is_finite() && self.s_bound > 0.0) {
            return Err(Error::config("agent.s_bound", format!("must be finite and > 0, got {}", self.s_bound)));
        }
        if !(self.sigma_scale.is_finite() && self.sigma_scale > 0.0) {
            return Err(Error::config(
                "agent.sigma_scale",
                format!("must be finite and > 0, got {}", self.sigma_scale),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("agent.epsilon", format!("must lie in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Confidence used for every model, after the optional union-bound split.
    pub fn confidence(&self, dim: usize, levels: usize) -> Result<ConfidenceConfig> {
        let delta = if self.split_delta {
            self.delta / (levels as f64 + 1.0)
        } else {
            self.delta
        };
        ConfidenceConfig::new(delta, self.s_bound, self.lambda, dim)?.with_sigma_scale(self.sigma_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub reward_models: BTreeMap<Vec<usize>, LinearModelState>,
    /// Keyed by prefix; the level is the prefix length.
    pub cost_models: BTreeMap<Vec<usize>, LinearModelState>,
    pub confidence: ConfidenceConfig,
    pub constraint_mode: ConstraintMode,
    pub fallback_policy: FallbackPolicy,
    pub round: u64,
    #[serde(skip)]
    space: Option<ActionSpace>,
    #[serde(skip)]
    full_actions: Vec<CompositeAction>,
}

impl AgentState {
    pub fn new(
        space: ActionSpace,
        confidence: ConfidenceConfig,
        constraint_mode: ConstraintMode,
        fallback_policy: FallbackPolicy,
    ) -> Result<Self> {
        confidence.validate()?;
        let fresh = || LinearModelState::new(confidence.dim, confidence.lambda);
        let full_actions = space.full_actions();
        let mut reward_models = BTreeMap::new();
        for a in &full_actions {
            reward_models.insert(a.indices.clone(), fresh()?);
        }
        let mut cost_models = BTreeMap::new();
        for p in space.all_prefixes() {
            cost_models.insert(p, fresh()?);
        }
        Ok(Self {
            reward_models,
            cost_models,
            confidence,
            constraint_mode,
            fallback_policy,
            round: 0,
            space: Some(space),
            full_actions,
        })
    }

    pub fn space(&self) -> &ActionSpace {
        self.space.as_ref().expect("agent state built with an action space")
    }

    pub fn levels(&self) -> usize {
        self.space().levels()
    }

    pub fn dim(&self) -> usize {
        self.confidence.dim
    }

    /// Allowed composite actions in lexicographic order.
    pub fn full_actions(&self) -> &[CompositeAction] {
        &self.full_actions
    }

    pub fn radius(&self, model: &LinearModelState) -> f64 {
        self.confidence.beta(model.count)
    }

    /// Cost bound the screen compares against the threshold for `prefix`.
    pub fn screen_bound(&self, prefix: &[usize], context: &[f64]) -> f64 {
        let (lcb, ucb) = hcucb::cost_bounds(self, prefix, context);
        match self.constraint_mode {
            ConstraintMode::OptimisticLcb => lcb,
            ConstraintMode::ConservativeUcb => ucb,
        }
    }

    /// Whether `theta` lies in the confidence ellipsoid of `model`.
    pub fn covers(&self, model: &LinearModelState, theta: &[f64]) -> Result<bool> {
        Ok(model.ellipsoid_distance(theta)? <= self.radius(model))
    }

    /// Whether every true parameter lies inside its model's confidence
    /// ellipsoid `‖θ̂ − θ*‖_V ≤ β`.
    pub fn coverage(&self, spec: &EnvironmentSpec) -> Result<Coverage> {
        let mut cov = Coverage {
            reward_inside: true,
            cost_inside: true,
        };
        for (action, model) in &self.reward_models {
            let theta = spec.reward_theta(action).ok_or_else(|| Error::InvalidAction {
                action: action.clone(),
                reason: "not in spec".into(),
            })?;
            if !self.covers(model, theta)? {
                cov.reward_inside = false;
            }
        }
        for (prefix, model) in &self.cost_models {
            let theta = spec.cost_theta(prefix).ok_or_else(|| Error::InvalidAction {
                action: prefix.clone(),
                reason: "not in spec".into(),
            })?;
            if !self.covers(model, theta)? {
                cov.cost_inside = false;
            }
        }
        Ok(cov)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    pub reward_inside: bool,
    pub cost_inside: bool,
}

impl Coverage {
    pub fn all(&self) -> bool {
        self.reward_inside && self.cost_inside
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: CompositeAction,
    /// Score of the chosen action at each level (the reward UCB of its best
    /// completion for the UCB agents).
    pub per_level_ucb_reward: Vec<f64>,
    /// Bound used by the cost screen for the chosen prefix at each level.
    pub per_level_cost_bound: Vec<f64>,
    pub fallback_used: bool,
    /// Chosen by random exploration rather than by the screen.
    pub explored: bool,
}

/// What the harness needs from any agent.
pub trait Policy {
    fn select(&mut self, context: &[f64], rng: &mut dyn RngCore) -> Result<Decision>;
    fn update(&mut self, context: &[f64], decision: &Decision, obs: &RoundObservation) -> Result<()>;
    fn state(&self) -> &AgentState;
}

/// A configured agent: models plus selection rule.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub state: AgentState,
    thresholds: Vec<f64>,
    oracle_spec: Option<EnvironmentSpec>,
}

impl Agent {
    /// Build an agent from the problem shape it is allowed to see. The oracle
    /// kind additionally needs the true spec.
    pub fn new(
        config: AgentConfig,
        dim: usize,
        space: ActionSpace,
        thresholds: Vec<f64>,
        oracle_spec: Option<EnvironmentSpec>,
    ) -> Result<Self> {
        config.validate()?;
        if thresholds.len() != space.levels() {
            return Err(Error::DimensionMismatch {
                expected: space.levels(),
                actual: thresholds.len(),
            });
        }
        if config.kind == AgentKind::Oracle && oracle_spec.is_none() {
            return Err(Error::config("agent.kind", "the oracle needs access to the true spec"));
        }
        let confidence = config.confidence(dim, space.levels())?;
        let state = AgentState::new(space, confidence, config.mode, config.fallback)?;
        Ok(Self {
            config,
            state,
            thresholds,
            oracle_spec,
        })
    }

    /// Agent on a known spec; only the oracle keeps a copy of the truth.
    pub fn for_spec(config: AgentConfig, spec: &EnvironmentSpec) -> Result<Self> {
        let oracle = (config.kind == AgentKind::Oracle).then(|| spec.clone());
        Self::new(config, spec.dim, spec.action_space()?, spec.thresholds.clone(), oracle)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

impl Policy for Agent {
    fn select(&mut self, context: &[f64], rng: &mut dyn RngCore) -> Result<Decision> {
        let kind = match self.config.kind {
            AgentKind::Hcucb => {
                return hcucb_select(&self.state, context, &self.thresholds, SelectOptions::default(), rng)
            }
            AgentKind::UniformRandom => BaselineKind::UniformRandom,
            AgentKind::EpsilonGreedy => BaselineKind::EpsilonGreedy {
                epsilon: self.config.epsilon,
            },
            AgentKind::UnconstrainedUcb => BaselineKind::UnconstrainedUcb,
            AgentKind::Oracle => BaselineKind::Oracle,
        };
        baseline_select(
            kind,
            &self.state,
            context,
            &self.thresholds,
            self.oracle_spec.as_ref(),
            rng,
        )
    }

    fn update(&mut self, context: &[f64], decision: &Decision, obs: &RoundObservation) -> Result<()> {
        hcucb_update(&mut self.state, context, decision, obs)
    }

    fn state(&self) -> &AgentState {
        &self.state
    }
}
