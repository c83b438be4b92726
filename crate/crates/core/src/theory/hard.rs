//! Packed parameter families for minimax lower-bound instances.
//!
//! `N = min(2^(dH), 256)` members, each holding one parameter vector per
//! level. At every level the `N` vectors lie in the unit ball and are pairwise
//! at least `δ_sep = c·√(d/T)` apart, with `c = σ/√(Hd)`. Points are placed by
//! rejection sampling uniformly in the ball.

use serde::{Deserialize, Serialize};

use crate::env::{
    uniform_ball, ActionSpace, ContextDistribution, CostParam, EnvironmentSpec, NoiseKind, RewardParam,
    SPEC_FORMAT_VERSION,
};
use crate::linalg::norm2;
use crate::rng::{round_rng, Substream};
use crate::{Error, Result};

pub const MAX_MEMBERS: usize = 256;
/// Proposal budget per level.
pub const MAX_PROPOSALS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceFamily {
    pub dim: usize,
    pub levels: usize,
    pub horizon: u64,
    pub sigma: f64,
    pub seed: u64,
    pub count: usize,
    pub separation: f64,
    pub c_constant: f64,
    /// `parameter_sets[i][h]` is `θ_h^(i)`.
    pub parameter_sets: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAudit {
    pub count: usize,
    pub separation: f64,
    pub max_norm: f64,
    /// Smallest pairwise distance at each level.
    pub min_distance: Vec<f64>,
    pub pairs_checked: u64,
    pub norms_ok: bool,
    pub separation_ok: bool,
}

impl FamilyAudit {
    pub fn passed(&self) -> bool {
        self.norms_ok && self.separation_ok
    }
}

fn member_count(dim: usize, levels: usize) -> usize {
    let bits = dim.saturating_mul(levels);
    if bits >= 8 {
        MAX_MEMBERS
    } else {
        1 << bits
    }
}

pub fn generate_hard_family(dim: usize, levels: usize, horizon: u64, sigma: f64, seed: u64) -> Result<HardInstanceFamily> {
    if dim == 0 {
        return Err(Error::config("dim", "must be at least 1"));
    }
    if levels == 0 {
        return Err(Error::config("levels", "must be at least 1"));
    }
    if horizon == 0 {
        return Err(Error::config("horizon", "must be at least 1"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::config("sigma", format!("must be finite and > 0, got {sigma}")));
    }
    let count = member_count(dim, levels);
    let c_constant = sigma / ((levels * dim) as f64).sqrt();
    let separation = c_constant * (dim as f64).sqrt() / (horizon as f64).sqrt();

    let mut per_level: Vec<Vec<Vec<f64>>> = Vec::with_capacity(levels);
    for h in 0..levels {
        let mut rng = round_rng(seed, Substream::Theory, h as u64);
        let mut placed: Vec<Vec<f64>> = Vec::with_capacity(count);
        let mut proposals = 0u64;
        while placed.len() < count {
            if proposals == MAX_PROPOSALS {
                return Err(Error::Packing {
                    level: h + 1,
                    placed: placed.len(),
                    wanted: count,
                    separation,
                    proposals,
                });
            }
            proposals += 1;
            let p = uniform_ball(dim, &mut rng);
            if placed.iter().all(|q| distance(&p, q) >= separation) {
                placed.push(p);
            }
        }
        per_level.push(placed);
    }
    let parameter_sets = (0..count)
        .map(|i| per_level.iter().map(|level| level[i].clone()).collect())
        .collect();
    Ok(HardInstanceFamily {
        dim,
        levels,
        horizon,
        sigma,
        seed,
        count,
        separation,
        c_constant,
        parameter_sets,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl HardInstanceFamily {
    /// Exhaustive norm and pairwise-separation check.
    pub fn audit(&self) -> FamilyAudit {
        let mut max_norm = 0.0f64;
        let mut min_distance = vec![f64::INFINITY; self.levels];
        let mut pairs_checked = 0;
        for member in &self.parameter_sets {
            for theta in member {
                max_norm = max_norm.max(norm2(theta));
            }
        }
        for i in 0..self.count {
            for j in i + 1..self.count {
                for (h, md) in min_distance.iter_mut().enumerate() {
                    *md = md.min(distance(&self.parameter_sets[i][h], &self.parameter_sets[j][h]));
                    pairs_checked += 1;
                }
            }
        }
        FamilyAudit {
            count: self.count,
            separation: self.separation,
            max_norm,
            separation_ok: min_distance.iter().all(|&d| d >= self.separation),
            min_distance,
            pairs_checked,
            norms_ok: max_norm <= 1.0,
        }
    }

    /// Member `i` as an environment: two actions per level; composite action
    /// `a` has reward parameter `(1/H) Σ_h s(a_h) θ_h^(i)` with `s(0) = +1`
    /// and `s(1) = −1`. Costs are zero and thresholds `+∞`.
    pub fn member_spec(&self, i: usize) -> Result<EnvironmentSpec> {
        let member = self.parameter_sets.get(i).ok_or_else(|| {
            Error::config("member", format!("index {i} outside 0..{}", self.count))
        })?;
        let apl = vec![2usize; self.levels];
        let space = ActionSpace::new(apl.clone(), &[])?;
        let reward_params = space
            .full_actions()
            .into_iter()
            .map(|a| {
                let mut theta = vec![0.0; self.dim];
                for (h, &ah) in a.indices.iter().enumerate() {
                    let sign = if ah == 0 { 1.0 } else { -1.0 };
                    for (t, v) in theta.iter_mut().zip(&member[h]) {
                        *t += sign * v / self.levels as f64;
                    }
                }
                RewardParam {
                    action: a.indices,
                    theta,
                }
            })
            .collect();
        let cost_params = space
            .all_prefixes()
            .into_iter()
            .map(|p| CostParam {
                level: p.len(),
                prefix: p,
                theta: vec![0.0; self.dim],
            })
            .collect();
        let spec = EnvironmentSpec {
            format_version: SPEC_FORMAT_VERSION,
            dim: self.dim,
            levels: self.levels,
            actions_per_level: apl,
            thresholds: vec![f64::INFINITY; self.levels],
            noise_sigma: self.sigma,
            noise_kind: NoiseKind::Gaussian,
            seed: self.seed,
            context_distribution: ContextDistribution::UniformBall,
            reward_params,
            cost_params,
            action_mask: vec![],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_specs(&self) -> Result<Vec<EnvironmentSpec>> {
        (0..self.count).map(|i| self.member_spec(i)).collect()
    }
}
