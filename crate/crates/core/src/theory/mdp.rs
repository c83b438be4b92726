//! Small discounted MDPs and value iteration.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_STATES: usize = 64;
pub const MAX_ACTIONS: usize = 16;
/// Allowed deviation of a transition row sum from 1.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallMdp {
    pub states: usize,
    pub actions: usize,
    /// `P[s][a][s']`, flattened row-major.
    pub transition: Vec<f64>,
    /// `R[s][a]`, flattened row-major.
    pub reward: Vec<f64>,
    pub gamma: f64,
}

impl SmallMdp {
    pub fn new(states: usize, actions: usize, transition: Vec<f64>, reward: Vec<f64>, gamma: f64) -> Result<Self> {
        let mdp = Self {
            states,
            actions,
            transition,
            reward,
            gamma,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.states, self.actions);
        if s == 0 || s > MAX_STATES {
            return Err(Error::Mdp(format!("states must lie in 1..={MAX_STATES}, got {s}")));
        }
        if a == 0 || a > MAX_ACTIONS {
            return Err(Error::Mdp(format!("actions must lie in 1..={MAX_ACTIONS}, got {a}")));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Mdp(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.transition.len() != s * a * s || self.reward.len() != s * a {
            return Err(Error::Mdp("transition or reward has the wrong shape".into()));
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::Mdp("non-finite reward".into()));
        }
        for si in 0..s {
            for ai in 0..a {
                let row = self.row(si, ai);
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::Mdp(format!("row ({si}, {ai}) has a negative or non-finite entry")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Mdp(format!("row ({si}, {ai}) sums to {sum}, not 1")));
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.transition[start..start + self.states]
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions + a]
    }

    /// `R(s,a) + γ Σ P(s'|s,a) v(s')`.
    pub fn backup(&self, v: &[f64], s: usize, a: usize) -> f64 {
        let next: f64 = self.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
        self.r(s, a) + self.gamma * next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSolution {
    pub v: Vec<f64>,
    /// `Q[s][a]`, flattened row-major.
    pub q: Vec<f64>,
    pub sweeps: usize,
    /// `max_s |max_a Q(s,a) − v(s)|` of the returned pair.
    pub residual: f64,
}

/// Optimal values over the per-state action sets `allowed(s)`.
pub(crate) fn restricted_value_iteration(
    mdp: &SmallMdp,
    choices: &dyn Fn(usize) -> Vec<usize>,
    tolerance: f64,
) -> Result<ValueSolution> {
    mdp.validate()?;
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::Mdp(format!("tolerance must be finite and > 0, got {tolerance}")));
    }
    let sets: Vec<Vec<usize>> = (0..mdp.states).map(choices).collect();
    if let Some(s) = sets.iter().position(|c| c.is_empty()) {
        return Err(Error::Mdp(format!("no action available in state {s}")));
    }
    let sweep = |v: &[f64]| -> Vec<f64> {
        sets.iter()
            .enumerate()
            .map(|(s, acts)| acts.iter().map(|&a| mdp.backup(v, s, a)).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    };
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let scale = mdp.reward.iter().fold(1.0f64, |m, r| m.max(r.abs())) / (1.0 - mdp.gamma);
    let mut v = vec![0.0; mdp.states];
    let mut next = sweep(&v);
    let mut residual = sup(&next, &v);
    let mut sweeps = 1;
    while residual > tolerance {
        v = next;
        next = sweep(&v);
        let r = sup(&next, &v);
        sweeps += 1;
        // Bellman operator contraction, up to rounding.
        if r > mdp.gamma * residual + 4.0 * f64::EPSILON * scale {
            return Err(Error::Mdp(format!(
                "sweep {sweeps} residual {r} exceeds gamma times the previous {residual}"
            )));
        }
        residual = r;
        if sweeps > 1_000_000 {
            return Err(Error::Mdp("value iteration did not converge".into()));
        }
    }
    let v = next;
    let mut q = vec![f64::NEG_INFINITY; mdp.states * mdp.actions];
    for s in 0..mdp.states {
        for a in 0..mdp.actions {
            q[s * mdp.actions + a] = mdp.backup(&v, s, a);
        }
    }
    let residual = sets
        .iter()
        .enumerate()
        .map(|(s, acts)| {
            let best = acts.iter().map(|&a| q[s * mdp.actions + a]).fold(f64::NEG_INFINITY, f64::max);
            (best - v[s]).abs()
        })
        .fold(0.0, f64::max);
    Ok(ValueSolution { v, q, sweeps, residual })
}

/// `V*` and `Q*` with sup-norm Bellman residual at most `tolerance`. Every
/// sweep is checked to shrink the residual by at least a factor `γ`.
pub fn value_iteration(mdp: &SmallMdp, tolerance: f64) -> Result<ValueSolution> {
    let all: Vec<usize> = (0..mdp.actions).collect();
    restricted_value_iteration(mdp, &|_| all.clone(), tolerance)
}
