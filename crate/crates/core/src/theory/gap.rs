//! Loss from restricting an MDP to a hierarchical policy class.
//!
//! A decomposition groups ground states into abstract states and partitions
//! the actions into high-level actions. Each high-level action `g` carries a
//! fixed low-level policy that, in abstract state `x`, plays
//! `low_policy[g][x]` (an action of group `g`). The hierarchical controller
//! picks a group in every ground state, so `V^H` is the optimum of the MDP
//! whose actions in `s` are `{low_policy[g][φ(s)]}`.
//!
//! The reported `ε` is the worst one-step loss of the best high-level action
//! under `Q*`: `max_s (V*(s) − max_g Q*(s, low_policy[g][φ(s)]))`. It gives
//! `0 ≤ V* − V^H ≤ ε/(1−γ)`. The elementwise `|Q* − Q^H|` over the induced
//! action correspondence is reported too, as `q_mismatch`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mdp::{restricted_value_iteration, value_iteration, SmallMdp, ValueSolution};
use crate::rng::{round_rng, Substream};
use crate::{Error, Result};

/// Value iteration tolerance used by [`gap_check`].
pub const GAP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalDecomposition {
    /// `φ(s)`: abstract state of each ground state.
    pub high_states: Vec<usize>,
    /// Group of each action.
    pub high_actions: Vec<usize>,
    /// `low_policy[g][x]`: action played by group `g` in abstract state `x`.
    pub low_policy: Vec<Vec<usize>>,
}

impl HierarchicalDecomposition {
    /// Singleton groups everywhere; loses nothing.
    pub fn identity(states: usize, actions: usize) -> Self {
        Self {
            high_states: (0..states).collect(),
            high_actions: (0..actions).collect(),
            low_policy: (0..actions).map(|a| vec![a; states]).collect(),
        }
    }

    pub fn abstract_states(&self) -> usize {
        self.high_states.iter().max().map_or(0, |m| m + 1)
    }

    pub fn groups(&self) -> usize {
        self.high_actions.iter().max().map_or(0, |m| m + 1)
    }

    pub fn validate(&self, mdp: &SmallMdp) -> Result<()> {
        if self.high_states.len() != mdp.states {
            return Err(Error::Decomposition(format!(
                "state grouping covers {} states, the MDP has {}",
                self.high_states.len(),
                mdp.states
            )));
        }
        if self.high_actions.len() != mdp.actions {
            return Err(Error::Decomposition(format!(
                "action grouping covers {} actions, the MDP has {}",
                self.high_actions.len(),
                mdp.actions
            )));
        }
        let xs = self.abstract_states();
        let gs = self.groups();
        for x in 0..xs {
            if !self.high_states.contains(&x) {
                return Err(Error::Decomposition(format!("abstract state {x} is empty")));
            }
        }
        for g in 0..gs {
            if !self.high_actions.contains(&g) {
                return Err(Error::Decomposition(format!("high-level action {g} is empty")));
            }
        }
        if self.low_policy.len() != gs {
            return Err(Error::Decomposition(format!(
                "{} low-level policies for {gs} high-level actions",
                self.low_policy.len()
            )));
        }
        for (g, policy) in self.low_policy.iter().enumerate() {
            if policy.len() != xs {
                return Err(Error::Decomposition(format!(
                    "low-level policy {g} covers {} abstract states, need {xs}",
                    policy.len()
                )));
            }
            for (x, &a) in policy.iter().enumerate() {
                if a >= mdp.actions || self.high_actions[a] != g {
                    return Err(Error::Decomposition(format!(
                        "low-level policy {g} plays action {a} in abstract state {x}, outside its group"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Ground action played by group `g` in ground state `s`.
    pub fn action(&self, g: usize, s: usize) -> usize {
        self.low_policy[g][self.high_states[s]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalSolution {
    /// `V^H` per ground state.
    pub v: Vec<f64>,
    /// `Q^H[s][g]`, flattened row-major.
    pub q: Vec<f64>,
    pub groups: usize,
}

impl HierarchicalSolution {
    /// `V^H(x)`: the smallest value over the ground states of `x`.
    pub fn abstract_values(&self, decomposition: &HierarchicalDecomposition) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; decomposition.abstract_states()];
        for (s, &x) in decomposition.high_states.iter().enumerate() {
            out[x] = out[x].min(self.v[s]);
        }
        out
    }
}

pub fn hierarchical_value(
    mdp: &SmallMdp,
    decomposition: &HierarchicalDecomposition,
    tolerance: f64,
) -> Result<HierarchicalSolution> {
    decomposition.validate(mdp)?;
    let groups = decomposition.groups();
    let choices = |s: usize| -> Vec<usize> { (0..groups).map(|g| decomposition.action(g, s)).collect() };
    let ValueSolution { v, q: ground_q, .. } = restricted_value_iteration(mdp, &choices, tolerance)?;
    let mut q = Vec::with_capacity(mdp.states * groups);
    for s in 0..mdp.states {
        for g in 0..groups {
            q.push(ground_q[s * mdp.actions + decomposition.action(g, s)]);
        }
    }
    Ok(HierarchicalSolution { v, q, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gamma: f64,
    /// `V*(s) − V^H(s)` per ground state.
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub min_gap: f64,
    pub epsilon: f64,
    pub q_mismatch: f64,
    /// `ε/(1−γ)`.
    pub bound: f64,
    /// `2ε/(1−γ)`.
    pub loose_bound: f64,
    /// `max_gap / bound`; `None` when the bound is zero.
    pub ratio: Option<f64>,
}

impl GapReport {
    /// The sandwich `0 ≤ gap ≤ 2ε/(1−γ)` with absolute slacks.
    pub fn holds(&self, lower_slack: f64, upper_slack: f64) -> bool {
        self.min_gap >= -lower_slack && self.max_gap <= self.loose_bound + upper_slack
    }
}

pub fn gap_check(mdp: &SmallMdp, decomposition: &HierarchicalDecomposition) -> Result<GapReport> {
    let star = value_iteration(mdp, GAP_TOLERANCE)?;
    let high = hierarchical_value(mdp, decomposition, GAP_TOLERANCE)?;
    let groups = high.groups;
    let mut epsilon = 0.0f64;
    let mut q_mismatch = 0.0f64;
    for s in 0..mdp.states {
        let mut best = f64::NEG_INFINITY;
        for g in 0..groups {
            let a = decomposition.action(g, s);
            let qs = star.q[s * mdp.actions + a];
            best = best.max(qs);
            q_mismatch = q_mismatch.max((qs - high.q[s * groups + g]).abs());
        }
        epsilon = epsilon.max(star.v[s] - best);
    }
    let gaps: Vec<f64> = star.v.iter().zip(&high.v).map(|(a, b)| a - b).collect();
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = epsilon / (1.0 - mdp.gamma);
    Ok(GapReport {
        gamma: mdp.gamma,
        gaps,
        max_gap,
        min_gap,
        epsilon,
        q_mismatch,
        bound,
        loose_bound: 2.0 * bound,
        ratio: (bound > 0.0).then(|| max_gap / bound),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    pub min_states: usize,
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    pub gamma_low: f64,
    pub gamma_high: f64,
}

impl Default for PairParams {
    fn default() -> Self {
        Self {
            min_states: 2,
            max_states: 12,
            min_actions: 2,
            max_actions: 6,
            gamma_low: 0.5,
            gamma_high: 0.95,
        }
    }
}

impl PairParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_states == 0 || self.min_states > self.max_states || self.max_states > super::mdp::MAX_STATES {
            return Err(Error::config("states", "need 1 ≤ min ≤ max ≤ 64"));
        }
        if self.min_actions == 0 || self.min_actions > self.max_actions || self.max_actions > super::mdp::MAX_ACTIONS {
            return Err(Error::config("actions", "need 1 ≤ min ≤ max ≤ 16"));
        }
        if !(0.0 <= self.gamma_low && self.gamma_low <= self.gamma_high && self.gamma_high < 1.0) {
            return Err(Error::config("gamma", "need 0 ≤ low ≤ high < 1"));
        }
        Ok(())
    }
}

/// Random surjection of `n` items onto `0..k`.
fn surjection<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut map: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        map.swap(i, rng.random_range(0..=i));
    }
    map
}

/// The `index`-th random (MDP, decomposition) pair for `seed`.
pub fn random_pair(params: &PairParams, seed: u64, index: u64) -> Result<(SmallMdp, HierarchicalDecomposition)> {
    params.validate()?;
    let mut rng = round_rng(seed, Substream::Theory, index);
    let states = rng.random_range(params.min_states..=params.max_states);
    let actions = rng.random_range(params.min_actions..=params.max_actions);
    let gamma = if params.gamma_high > params.gamma_low {
        rng.random_range(params.gamma_low..params.gamma_high)
    } else {
        params.gamma_low
    };
    let mut transition = Vec::with_capacity(states * actions * states);
    for _ in 0..states * actions {
        // Sparse-ish rows make the decomposition lossier.
        let raw: Vec<f64> = (0..states)
            .map(|_| if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 })
            .collect();
        let sum: f64 = raw.iter().sum();
        if sum == 0.0 {
            let j = rng.random_range(0..states);
            transition.extend((0..states).map(|i| if i == j { 1.0 } else { 0.0 }));
        } else {
            transition.extend(raw.iter().map(|p| p / sum));
        }
    }
    let reward = (0..states * actions).map(|_| rng.random::<f64>()).collect();
    let mdp = SmallMdp::new(states, actions, transition, reward, gamma)?;

    let xs = rng.random_range(1..=states);
    let gs = rng.random_range(1..=actions);
    let high_states = surjection(states, xs, &mut rng);
    let high_actions = surjection(actions, gs, &mut rng);
    let members: Vec<Vec<usize>> = (0..gs)
        .map(|g| (0..actions).filter(|&a| high_actions[a] == g).collect())
        .collect();
    let low_policy = members
        .iter()
        .map(|m| (0..xs).map(|_| m[rng.random_range(0..m.len())]).collect())
        .collect();
    let decomposition = HierarchicalDecomposition {
        high_states,
        high_actions,
        low_policy,
    };
    decomposition.validate(&mdp)?;
    Ok((mdp, decomposition))
}

/// A decomposition that loses exactly `ε` per step forever.
///
/// One self-looping state and three actions with rewards `1`, `1 − ε` and
/// `1 − 2ε`. High-level action 0 groups the first two and its low-level
/// policy plays the second; high-level action 1 holds the third. The optimum
/// earns `1/(1−γ)` while the hierarchy earns `(1−ε)/(1−γ)`.
pub fn tightness_instance(gamma: f64, epsilon: f64) -> Result<(SmallMdp, HierarchicalDecomposition)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config("epsilon", format!("must be finite and > 0, got {epsilon}")));
    }
    let mdp = SmallMdp::new(
        1,
        3,
        vec![1.0, 1.0, 1.0],
        vec![1.0, 1.0 - epsilon, 1.0 - 2.0 * epsilon],
        gamma,
    )?;
    let decomposition = HierarchicalDecomposition {
        high_states: vec![0],
        high_actions: vec![0, 0, 1],
        low_policy: vec![vec![1], vec![2]],
    };
    decomposition.validate(&mdp)?;
    Ok((mdp, decomposition))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_loses_nothing() {
        for i in 0..20 {
            let (mdp, _) = random_pair(&PairParams::default(), 4, i).unwrap();
            let id = HierarchicalDecomposition::identity(mdp.states, mdp.actions);
            let star = value_iteration(&mdp, GAP_TOLERANCE).unwrap();
            let high = hierarchical_value(&mdp, &id, GAP_TOLERANCE).unwrap();
            assert_eq!(star.v, high.v);
            let rep = gap_check(&mdp, &id).unwrap();
            assert_eq!(rep.max_gap, 0.0);
            assert_eq!(rep.epsilon, 0.0);
            assert_eq!(rep.ratio, None);
        }
    }

    #[test]
    fn tightness_ratio_is_one() {
        for (gamma, eps) in [(0.9, 0.1), (0.5, 0.25), (0.0, 0.3), (0.99, 0.01)] {
            let (mdp, dec) = tightness_instance(gamma, eps).unwrap();
            let rep = gap_check(&mdp, &dec).unwrap();
            assert!((rep.epsilon - eps).abs() < 1e-9);
            assert!((rep.max_gap - eps / (1.0 - gamma)).abs() < 1e-6);
            assert!((rep.ratio.unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn random_pairs_sandwich() {
        for i in 0..60 {
            let (mdp, dec) = random_pair(&PairParams::default(), 9, i).unwrap();
            let rep = gap_check(&mdp, &dec).unwrap();
            assert!(rep.holds(1e-9, 1e-6), "pair {i}: {rep:?}");
            assert!(rep.max_gap <= rep.bound + 1e-6);
            let star = value_iteration(&mdp, GAP_TOLERANCE).unwrap();
            let high = hierarchical_value(&mdp, &dec, GAP_TOLERANCE).unwrap();
            for (x, vh) in high.abstract_values(&dec).iter().enumerate() {
                for s in (0..mdp.states).filter(|&s| dec.high_states[s] == x) {
                    assert!(*vh <= star.v[s] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn deterministic_pairs() {
        let a = random_pair(&PairParams::default(), 3, 5).unwrap();
        let b = random_pair(&PairParams::default(), 3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_decompositions() {
        let (mdp, mut dec) = tightness_instance(0.5, 0.1).unwrap();
        dec.low_policy[1] = vec![0];
        assert!(matches!(gap_check(&mdp, &dec), Err(Error::Decomposition(_))));
        let (mdp, mut dec) = tightness_instance(0.5, 0.1).unwrap();
        dec.high_actions = vec![0, 0, 2];
        assert!(dec.validate(&mdp).is_err());
        let (mdp, mut dec) = tightness_instance(0.5, 0.1).unwrap();
        dec.high_states = vec![];
        assert!(dec.validate(&mdp).is_err());
    }
}
