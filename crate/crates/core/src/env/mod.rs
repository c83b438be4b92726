//! Synthetic hierarchical constrained linear bandit instances.
//!
//! Rewards are keyed on the full composite action and costs at level `h` on
//! the prefix `a^(1:h)`; both are linear in the context. A spec is immutable
//! once generated and serializes to a versioned TOML document.

mod action;
mod context;

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use action::{ActionSpace, CompositeAction, MaskEntry};
pub use context::{uniform_ball, ContextDistribution};

use crate::linalg::{all_finite, dot, norm2};
use crate::rng::{round_rng, Substream};
use crate::{Error, Result};

pub const SPEC_FORMAT_VERSION: u32 = 1;

/// Exhaustive searches refuse instances with more composite actions than this.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Norm slack for parameters read back from disk.
const PARAM_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform on `[-σ, σ]`.
    BoundedUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardParam {
    pub action: Vec<usize>,
    pub theta: Vec<f64>,
}

/// Cost parameters of one prefix; `level` is 1-based and equals `prefix.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParam {
    pub level: usize,
    pub prefix: Vec<usize>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub format_version: u32,
    pub dim: usize,
    pub levels: usize,
    pub actions_per_level: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    pub seed: u64,
    pub context_distribution: ContextDistribution,
    pub reward_params: Vec<RewardParam>,
    pub cost_params: Vec<CostParam>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub action_mask: Vec<MaskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundObservation {
    pub context: Vec<f64>,
    pub reward: f64,
    pub costs: Vec<f64>,
    pub expected_reward: f64,
    pub expected_costs: Vec<f64>,
}

/// A composite action together with its true expected reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub action: CompositeAction,
    pub value: f64,
}

fn cost_key(prefix: &[usize]) -> (usize, &[usize]) {
    (prefix.len(), prefix)
}

impl EnvironmentSpec {
    pub fn action_space(&self) -> Result<ActionSpace> {
        ActionSpace::new(self.actions_per_level.clone(), &self.action_mask)
    }

    pub fn reward_theta(&self, action: &[usize]) -> Option<&[f64]> {
        self.reward_params
            .binary_search_by(|p| p.action.as_slice().cmp(action))
            .ok()
            .map(|i| self.reward_params[i].theta.as_slice())
    }

    pub fn cost_theta(&self, prefix: &[usize]) -> Option<&[f64]> {
        self.cost_params
            .binary_search_by(|p| cost_key(&p.prefix).cmp(&cost_key(prefix)))
            .ok()
            .map(|i| self.cost_params[i].theta.as_slice())
    }

    pub fn expected_reward(&self, context: &[f64], action: &CompositeAction) -> Result<f64> {
        let theta = self.reward_theta(&action.indices).ok_or_else(|| Error::InvalidAction {
            action: action.indices.clone(),
            reason: "no reward parameters".into(),
        })?;
        Ok(dot(context, theta))
    }

    pub fn expected_costs(&self, context: &[f64], action: &CompositeAction) -> Result<Vec<f64>> {
        (1..=self.levels)
            .map(|len| {
                let theta = self.cost_theta(action.prefix(len)).ok_or_else(|| Error::InvalidAction {
                    action: action.indices.clone(),
                    reason: format!("no cost parameters for level {len}"),
                })?;
                Ok(dot(context, theta))
            })
            .collect()
    }

    /// Whether every level's true expected cost meets its threshold.
    pub fn is_feasible(&self, context: &[f64], action: &CompositeAction) -> Result<bool> {
        let costs = self.expected_costs(context, action)?;
        Ok(costs.iter().zip(&self.thresholds).all(|(c, t)| c <= t))
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != SPEC_FORMAT_VERSION {
            return Err(Error::config(
                "format_version",
                format!("unsupported version {}", self.format_version),
            ));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if self.levels == 0 || self.actions_per_level.len() != self.levels {
            return Err(Error::config(
                "actions_per_level",
                format!("expected {} entries", self.levels),
            ));
        }
        check_thresholds(&self.thresholds, self.levels)?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma", "must be finite and >= 0"));
        }
        self.context_distribution.validate(self.dim)?;
        let space = self.action_space()?;

        let check_theta = |field: &'static str, theta: &[f64]| -> Result<()> {
            if theta.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: theta.len(),
                });
            }
            if !all_finite(theta) {
                return Err(Error::NonFinite(field));
            }
            if norm2(theta) > 1.0 + PARAM_NORM_TOL {
                return Err(Error::config(field, "parameter norm exceeds 1"));
            }
            Ok(())
        };

        if !self.reward_params.windows(2).all(|w| w[0].action < w[1].action) {
            return Err(Error::config("reward_params", "must be sorted and unique"));
        }
        if !self
            .cost_params
            .windows(2)
            .all(|w| cost_key(&w[0].prefix) < cost_key(&w[1].prefix))
        {
            return Err(Error::config("cost_params", "must be sorted by level then prefix and unique"));
        }
        for p in &self.reward_params {
            check_theta("reward_params", &p.theta)?;
        }
        for p in &self.cost_params {
            if p.level != p.prefix.len() {
                return Err(Error::config("cost_params", "level must equal prefix length"));
            }
            check_theta("cost_params", &p.theta)?;
        }
        for action in space.full_actions() {
            if self.reward_theta(&action.indices).is_none() {
                return Err(Error::config(
                    "reward_params",
                    format!("missing entry for action {action}"),
                ));
            }
        }
        for prefix in space.all_prefixes() {
            if self.cost_theta(&prefix).is_none() {
                return Err(Error::config(
                    "cost_params",
                    format!("missing entry for prefix {prefix:?}"),
                ));
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            path: "<environment spec>".into(),
            message: e.to_string(),
        })
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }
}

fn check_thresholds(thresholds: &[f64], levels: usize) -> Result<()> {
    if thresholds.len() != levels {
        return Err(Error::config(
            "thresholds",
            format!("expected {levels} entries, got {}", thresholds.len()),
        ));
    }
    if thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::config("thresholds", "NaN threshold"));
    }
    Ok(())
}

// ── Generation ──────────────────────────────────────────────────────────

fn default_feasibility_sample() -> usize {
    10_000
}
fn default_max_attempts() -> usize {
    1000
}
fn default_true() -> bool {
    true
}
fn default_inflate_after() -> usize {
    32
}

/// Inputs to [`generate_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateParams {
    pub dim: usize,
    pub levels: usize,
    pub actions_per_level: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    #[serde(default)]
    pub context_distribution: ContextDistribution,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub action_mask: Vec<MaskEntry>,
    /// Allow raising thresholds when rejection sampling finds no witness.
    #[serde(default = "default_true")]
    pub inflate_thresholds: bool,
    /// Rejection attempts before falling back to inflation.
    #[serde(default = "default_inflate_after")]
    pub inflate_after: usize,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    /// Contexts checked for a witness when the support is continuous.
    #[serde(default = "default_feasibility_sample")]
    pub feasibility_sample: usize,
}

impl GenerateParams {
    pub fn new(
        dim: usize,
        levels: usize,
        actions_per_level: Vec<usize>,
        thresholds: Vec<f64>,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            dim,
            levels,
            actions_per_level,
            thresholds,
            noise_sigma,
            seed,
            noise_kind: NoiseKind::Gaussian,
            context_distribution: ContextDistribution::UniformBall,
            action_mask: Vec::new(),
            inflate_thresholds: true,
            inflate_after: default_inflate_after(),
            max_attempts: default_max_attempts(),
            feasibility_sample: default_feasibility_sample(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if self.levels == 0 {
            return Err(Error::config("levels", "must be at least 1"));
        }
        if self.actions_per_level.len() != self.levels {
            return Err(Error::config(
                "actions_per_level",
                format!("expected {} entries, got {}", self.levels, self.actions_per_level.len()),
            ));
        }
        check_thresholds(&self.thresholds, self.levels)?;
        if self.thresholds.contains(&f64::NEG_INFINITY) {
            return Err(Error::config("thresholds", "-inf admits no feasible action"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma", "must be finite and >= 0"));
        }
        if self.max_attempts == 0 {
            return Err(Error::config("max_attempts", "must be at least 1"));
        }
        self.context_distribution.validate(self.dim)?;
        let space = ActionSpace::new(self.actions_per_level.clone(), &self.action_mask)?;
        if space.raw_count() > ENUMERATION_LIMIT {
            return Err(Error::Capacity {
                count: space.raw_count(),
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }
}

/// Per-context inflation needed for a witness: `min_a max_h (c_h(a) − τ_h)`.
fn required_inflation(
    space: &ActionSpace,
    costs: &dyn Fn(&[usize]) -> f64,
    thresholds: &[f64],
    prefix: &mut Vec<usize>,
) -> f64 {
    let mut best = f64::INFINITY;
    for a in space.allowed(prefix) {
        prefix.push(a);
        let level = prefix.len() - 1;
        let own = costs(prefix) - thresholds[level];
        let need = if prefix.len() == space.levels() {
            own
        } else {
            own.max(required_inflation(space, costs, thresholds, prefix))
        };
        prefix.pop();
        best = best.min(need);
    }
    best
}

/// Build a random instance with a feasibility witness for every context in
/// the (sampled) support. Deterministic in `params.seed`.
pub fn generate_spec(params: &GenerateParams) -> Result<EnvironmentSpec> {
    params.validate()?;
    let space = ActionSpace::new(params.actions_per_level.clone(), &params.action_mask)?;
    let dim = params.dim;
    let mut param_rng = round_rng(params.seed, Substream::Generation, 0);

    let reward_params: Vec<RewardParam> = space
        .full_actions()
        .into_iter()
        .map(|a| RewardParam {
            action: a.indices,
            theta: uniform_ball(dim, &mut param_rng),
        })
        .collect();

    let mut prefixes = space.all_prefixes();
    prefixes.sort_by(|a, b| cost_key(a).cmp(&cost_key(b)));

    let support: Vec<Vec<f64>> = match params.context_distribution.support() {
        Some(points) => points.to_vec(),
        None => {
            let mut ctx_rng = round_rng(params.seed, Substream::Generation, 1);
            (0..params.feasibility_sample)
                .map(|_| params.context_distribution.sample(dim, &mut ctx_rng))
                .collect()
        }
    };

    let rejection_budget = if params.inflate_thresholds {
        params.inflate_after.clamp(1, params.max_attempts)
    } else {
        params.max_attempts
    };

    let mut best_attempt: Option<(f64, Vec<CostParam>)> = None;
    for _ in 0..rejection_budget {
        let cost_params: Vec<CostParam> = prefixes
            .iter()
            .map(|p| CostParam {
                level: p.len(),
                prefix: p.clone(),
                theta: uniform_ball(dim, &mut param_rng),
            })
            .collect();
        let lookup = |prefix: &[usize]| -> &[f64] {
            let i = cost_params
                .binary_search_by(|c| cost_key(&c.prefix).cmp(&cost_key(prefix)))
                .expect("every prefix has parameters");
            &cost_params[i].theta
        };
        let mut worst = f64::NEG_INFINITY;
        let mut scratch = Vec::with_capacity(space.levels());
        for x in &support {
            let costs = |prefix: &[usize]| dot(x, lookup(prefix));
            let need = required_inflation(&space, &costs, &params.thresholds, &mut scratch);
            worst = worst.max(need);
        }
        if worst <= 0.0 {
            return Ok(assemble(params, reward_params, cost_params, params.thresholds.clone()));
        }
        if best_attempt.as_ref().is_none_or(|(w, _)| worst < *w) {
            best_attempt = Some((worst, cost_params));
        }
    }

    match best_attempt {
        Some((worst, cost_params)) if params.inflate_thresholds && worst.is_finite() => {
            // Smallest uniform shift that gives every sampled context a witness.
            let shift = worst + 1e-12;
            let thresholds = params.thresholds.iter().map(|t| t + shift).collect();
            Ok(assemble(params, reward_params, cost_params, thresholds))
        }
        Some((worst, _)) => Err(Error::FeasibilityRepair {
            attempts: rejection_budget,
            reason: if worst.is_finite() {
                format!("best attempt still needs thresholds raised by {worst:.6}")
            } else {
                "the action mask leaves some prefix without children".into()
            },
        }),
        None => Err(Error::FeasibilityRepair {
            attempts: 0,
            reason: "no attempts made".into(),
        }),
    }
}

fn assemble(
    params: &GenerateParams,
    reward_params: Vec<RewardParam>,
    cost_params: Vec<CostParam>,
    thresholds: Vec<f64>,
) -> EnvironmentSpec {
    EnvironmentSpec {
        format_version: SPEC_FORMAT_VERSION,
        dim: params.dim,
        levels: params.levels,
        actions_per_level: params.actions_per_level.clone(),
        thresholds,
        noise_sigma: params.noise_sigma,
        noise_kind: params.noise_kind,
        seed: params.seed,
        context_distribution: params.context_distribution.clone(),
        reward_params,
        cost_params,
        action_mask: params.action_mask.clone(),
    }
}

// ── Simulation ──────────────────────────────────────────────────────────

pub fn draw_context<R: Rng + ?Sized>(spec: &EnvironmentSpec, rng: &mut R) -> Vec<f64> {
    spec.context_distribution.sample(spec.dim, rng)
}

fn noise<R: Rng + ?Sized>(spec: &EnvironmentSpec, rng: &mut R) -> f64 {
    if spec.noise_sigma == 0.0 {
        return 0.0;
    }
    match spec.noise_kind {
        NoiseKind::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            spec.noise_sigma * z
        }
        NoiseKind::BoundedUniform => rng.random_range(-spec.noise_sigma..=spec.noise_sigma),
    }
}

/// Play `action` under `context`: exact expectations plus independent noise
/// (reward first, then one draw per level).
pub fn pull<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    context: &[f64],
    action: &CompositeAction,
    rng: &mut R,
) -> Result<RoundObservation> {
    if context.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            actual: context.len(),
        });
    }
    spec.action_space()?.validate(action)?;
    let expected_reward = spec.expected_reward(context, action)?;
    let expected_costs = spec.expected_costs(context, action)?;
    let reward = expected_reward + noise(spec, rng);
    let costs = expected_costs.iter().map(|c| c + noise(spec, rng)).collect();
    Ok(RoundObservation {
        context: context.to_vec(),
        reward,
        costs,
        expected_reward,
        expected_costs,
    })
}

fn search(
    spec: &EnvironmentSpec,
    space: &ActionSpace,
    context: &[f64],
    constrained: bool,
    prefix: &mut Vec<usize>,
    best: &mut Option<Optimum>,
) {
    if prefix.len() == spec.levels {
        let value = dot(context, spec.reward_theta(prefix).expect("validated spec"));
        if best.as_ref().is_none_or(|b| value > b.value) {
            *best = Some(Optimum {
                action: CompositeAction::new(prefix.clone()),
                value,
            });
        }
        return;
    }
    for a in space.allowed(prefix) {
        prefix.push(a);
        let level = prefix.len() - 1;
        let pass = !constrained
            || dot(context, spec.cost_theta(prefix).expect("validated spec")) <= spec.thresholds[level];
        if pass {
            search(spec, space, context, constrained, prefix, best);
        }
        prefix.pop();
    }
}

/// Best completion of `prefix` by true expected reward. With `constrained`,
/// only completions whose every prefix meets its threshold count (including
/// the given prefix itself). Ties go to the lexicographically smallest action.
pub fn best_completion(
    spec: &EnvironmentSpec,
    context: &[f64],
    prefix: &[usize],
    constrained: bool,
) -> Result<Option<Optimum>> {
    let space = spec.action_space()?;
    if space.raw_count() > ENUMERATION_LIMIT {
        return Err(Error::Capacity {
            count: space.raw_count(),
            limit: ENUMERATION_LIMIT,
        });
    }
    if context.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            actual: context.len(),
        });
    }
    if constrained {
        for len in 1..=prefix.len() {
            let theta = spec.cost_theta(&prefix[..len]).ok_or_else(|| Error::InvalidAction {
                action: prefix.to_vec(),
                reason: "unknown prefix".into(),
            })?;
            if dot(context, theta) > spec.thresholds[len - 1] {
                return Ok(None);
            }
        }
    }
    let mut best = None;
    let mut scratch = prefix.to_vec();
    search(spec, &space, context, constrained, &mut scratch, &mut best);
    Ok(best)
}

/// The feasible optimum for `context`, or `None` when nothing is feasible.
pub fn best_feasible(spec: &EnvironmentSpec, context: &[f64]) -> Result<Option<Optimum>> {
    best_completion(spec, context, &[], true)
}
