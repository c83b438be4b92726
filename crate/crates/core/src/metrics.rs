//! Regret, its high/low-level decomposition, and constraint violations.
//!
//! Per-round regret is measured against the best feasible composite action
//! (or the unconstrained best, see [`Comparator`]). It is split along the
//! chosen prefixes: with `W_h` the best achievable value once `a^(1:h)` is
//! fixed, level `h` is charged `W_{h-1} − W_h`, so the shares telescope to
//! the total. `regret_high` is the level-1 share and `regret_low` the rest.

use serde::{Deserialize, Serialize};

use crate::env::{best_completion, CompositeAction, EnvironmentSpec};
use crate::{Error, Result};

/// Slack on thresholds when counting violations.
pub const VIOLATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparator {
    /// Best action meeting every threshold.
    #[default]
    Constrained,
    /// Best action ignoring thresholds.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointSchedule {
    /// `t ∈ {2^k} ∪ {T}`.
    #[default]
    PowersOfTwo,
    Explicit(Vec<u64>),
}

impl CheckpointSchedule {
    pub fn resolve(&self, horizon: u64) -> Result<Vec<u64>> {
        let mut ts = match self {
            CheckpointSchedule::PowersOfTwo => {
                let mut ts: Vec<u64> = (0..64)
                    .map(|k| 1u64 << k)
                    .take_while(|&t| t <= horizon)
                    .collect();
                ts.push(horizon);
                ts
            }
            CheckpointSchedule::Explicit(list) => {
                if list.is_empty() {
                    return Err(Error::config("checkpoint_schedule", "explicit list is empty"));
                }
                if let Some(bad) = list.iter().find(|&&t| t == 0 || t > horizon) {
                    return Err(Error::config(
                        "checkpoint_schedule",
                        format!("checkpoint {bad} outside 1..={horizon}"),
                    ));
                }
                list.clone()
            }
        };
        ts.sort_unstable();
        ts.dedup();
        Ok(ts)
    }
}

/// Everything observed in one round, with the environment's true means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub context: Vec<f64>,
    pub action: CompositeAction,
    pub fallback_used: bool,
    pub reward: f64,
    pub costs: Vec<f64>,
    pub expected_reward: f64,
    pub expected_costs: Vec<f64>,
}

/// Per-round bookkeeping returned by [`RunMetrics::accumulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRegret {
    /// `None` when no action is feasible for the context.
    pub optimum: Option<f64>,
    pub regret: f64,
    pub level_shares: Vec<f64>,
    pub violated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub regret: f64,
    pub regret_high: f64,
    pub regret_low: f64,
    pub violations: Vec<u64>,
    pub fallback_rounds: u64,
    pub avg_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub comparator: Comparator,
    pub rounds: u64,
    pub cumulative_regret: f64,
    pub regret_high: f64,
    pub regret_low: f64,
    /// Telescoped share of each level; the first entry is `regret_high`.
    pub level_regret: Vec<f64>,
    pub violations: Vec<u64>,
    /// Violations on rounds where the screen (not a fallback) chose.
    pub violations_screened: Vec<u64>,
    /// Rounds with at least one violation and no fallback.
    pub violating_screened_rounds: u64,
    pub fallback_rounds: u64,
    pub infeasible_rounds: u64,
    pub cumulative_expected_reward: f64,
    pub checkpoints: Vec<Checkpoint>,
    schedule: Vec<u64>,
}

impl RunMetrics {
    pub fn new(levels: usize, schedule: Vec<u64>, comparator: Comparator) -> Self {
        Self {
            comparator,
            rounds: 0,
            cumulative_regret: 0.0,
            regret_high: 0.0,
            regret_low: 0.0,
            level_regret: vec![0.0; levels],
            violations: vec![0; levels],
            violations_screened: vec![0; levels],
            violating_screened_rounds: 0,
            fallback_rounds: 0,
            infeasible_rounds: 0,
            cumulative_expected_reward: 0.0,
            checkpoints: Vec::new(),
            schedule,
        }
    }

    /// Fold one round in; records a checkpoint when `record.t` is scheduled.
    pub fn accumulate(&mut self, record: &RoundRecord, spec: &EnvironmentSpec) -> Result<RoundRegret> {
        let levels = spec.levels;
        if record.expected_costs.len() != levels || record.action.levels() != levels {
            return Err(Error::DimensionMismatch {
                expected: levels,
                actual: record.expected_costs.len(),
            });
        }
        let constrained = self.comparator == Comparator::Constrained;
        let achieved = record.expected_reward;

        let optimum = best_completion(spec, &record.context, &[], constrained)?.map(|o| o.value);
        let (regret, level_shares) = match optimum {
            None => {
                self.infeasible_rounds += 1;
                (0.0, vec![0.0; levels])
            }
            Some(best) => {
                // An infeasible pick can out-earn the feasible optimum; such
                // rounds are charged zero regret and show up as violations.
                let floor = achieved.min(best);
                let mut shares = Vec::with_capacity(levels);
                let mut upper = best;
                for len in 1..levels {
                    let w = best_completion(spec, &record.context, record.action.prefix(len), constrained)?
                        .map_or(f64::NEG_INFINITY, |o| o.value);
                    let next = w.min(upper).max(floor);
                    shares.push(upper - next);
                    upper = next;
                }
                shares.push(upper - floor);
                (best - floor, shares)
            }
        };

        let high = level_shares[0];
        self.rounds += 1;
        self.cumulative_regret += regret;
        self.regret_high += high;
        self.regret_low += regret - high;
        for (acc, s) in self.level_regret.iter_mut().zip(&level_shares) {
            *acc += s;
        }
        self.cumulative_expected_reward += achieved;

        let violated: Vec<bool> = record
            .expected_costs
            .iter()
            .zip(&spec.thresholds)
            .map(|(c, t)| *c > t + VIOLATION_TOL)
            .collect();
        for (h, &v) in violated.iter().enumerate() {
            if v {
                self.violations[h] += 1;
                if !record.fallback_used {
                    self.violations_screened[h] += 1;
                }
            }
        }
        if !record.fallback_used && violated.iter().any(|&v| v) {
            self.violating_screened_rounds += 1;
        }
        if record.fallback_used {
            self.fallback_rounds += 1;
        }

        if self.schedule.binary_search(&record.t).is_ok() {
            self.checkpoints.push(Checkpoint {
                t: record.t,
                regret: self.cumulative_regret,
                regret_high: self.regret_high,
                regret_low: self.regret_low,
                violations: self.violations.clone(),
                fallback_rounds: self.fallback_rounds,
                avg_regret: self.cumulative_regret / record.t as f64,
            });
        }

        Ok(RoundRegret {
            optimum,
            regret,
            level_shares,
            violated,
        })
    }
}

/// `R ≈ C·t^κ` fitted by least squares on `(ln t, ln R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
}

/// Least-squares line through `(ln t, ln R)` over points with `R > 0`.
/// `None` when fewer than two such points exist.
pub fn fit_loglog(points: &[(f64, f64)]) -> Option<PowerFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, r)| *t > 0.0 && *r > 0.0)
        .map(|(t, r)| (t.ln(), r.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    Some(PowerFit {
        exponent,
        prefactor: (my - exponent * mx).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: u64,
    pub regret: f64,
    pub avg_regret: f64,
    /// `R_H / R_L`; `None` when `R_L = 0`.
    pub high_low_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublinearityReport {
    pub rows: Vec<SummaryRow>,
    /// `None` when regret is identically zero (not applicable).
    pub fit: Option<PowerFit>,
    pub fit_from: u64,
}

pub fn sublinearity_summary(metrics: &RunMetrics) -> Result<SublinearityReport> {
    sublinearity_summary_from(&metrics.checkpoints, 1)
}

/// Summary with the slope fitted over checkpoints `t ≥ fit_from` only.
pub fn sublinearity_summary_from(checkpoints: &[Checkpoint], fit_from: u64) -> Result<SublinearityReport> {
    if checkpoints.len() < 3 {
        return Err(Error::config(
            "checkpoints",
            format!("need at least 3 checkpoints, have {}", checkpoints.len()),
        ));
    }
    let rows = checkpoints
        .iter()
        .map(|c| SummaryRow {
            t: c.t,
            regret: c.regret,
            avg_regret: c.avg_regret,
            high_low_ratio: (c.regret_low > 0.0).then(|| c.regret_high / c.regret_low),
        })
        .collect();
    let points: Vec<(f64, f64)> = checkpoints
        .iter()
        .filter(|c| c.t >= fit_from)
        .map(|c| (c.t as f64, c.regret))
        .collect();
    Ok(SublinearityReport {
        rows,
        fit: fit_loglog(&points),
        fit_from,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        draw_context, pull, ContextDistribution, CostParam, NoiseKind, RewardParam,
        SPEC_FORMAT_VERSION,
    };
    use crate::rng::{stream_rng, Substream};
    use rand::Rng;

    /// H = 2, actions [2, 2]; rewards at x = e1 are 0.9, 0.4 | 0.6, 0.5.
    fn spec(thresholds: Vec<f64>) -> EnvironmentSpec {
        let r = |a: Vec<usize>, v: f64| RewardParam {
            action: a,
            theta: vec![v, 0.0],
        };
        let c = |p: Vec<usize>, v: f64| CostParam {
            level: p.len(),
            prefix: p,
            theta: vec![v, 0.0],
        };
        EnvironmentSpec {
            format_version: SPEC_FORMAT_VERSION,
            dim: 2,
            levels: 2,
            actions_per_level: vec![2, 2],
            thresholds,
            noise_sigma: 0.0,
            noise_kind: NoiseKind::Gaussian,
            seed: 0,
            context_distribution: ContextDistribution::UniformBall,
            reward_params: vec![
                r(vec![0, 0], 0.9),
                r(vec![0, 1], 0.4),
                r(vec![1, 0], 0.6),
                r(vec![1, 1], 0.5),
            ],
            cost_params: vec![
                c(vec![0], 0.1),
                c(vec![1], 0.1),
                c(vec![0, 0], 0.1),
                c(vec![0, 1], 0.1),
                c(vec![1, 0], 0.1),
                c(vec![1, 1], 0.9),
            ],
            action_mask: vec![],
        }
    }

    fn record(spec: &EnvironmentSpec, t: u64, x: &[f64], a: Vec<usize>) -> RoundRecord {
        let action = CompositeAction::new(a);
        let obs = pull(spec, x, &action, &mut stream_rng(0, Substream::Noise)).unwrap();
        RoundRecord {
            t,
            context: x.to_vec(),
            action,
            fallback_used: false,
            reward: obs.reward,
            costs: obs.costs,
            expected_reward: obs.expected_reward,
            expected_costs: obs.expected_costs,
        }
    }

    #[test]
    fn optimal_choice_has_zero_regret() {
        let s = spec(vec![0.5, 0.5]);
        let mut m = RunMetrics::new(2, vec![1], Comparator::Constrained);
        let out = m.accumulate(&record(&s, 1, &[1.0, 0.0], vec![0, 0]), &s).unwrap();
        assert_eq!(out.regret, 0.0);
        assert_eq!(out.level_shares, vec![0.0, 0.0]);
        assert_eq!(m.checkpoints.len(), 1);
    }

    #[test]
    fn low_level_mistake_is_low_regret() {
        let s = spec(vec![0.5, 0.5]);
        let mut m = RunMetrics::new(2, vec![], Comparator::Constrained);
        m.accumulate(&record(&s, 1, &[1.0, 0.0], vec![0, 1]), &s).unwrap();
        assert_eq!(m.regret_high, 0.0);
        assert!((m.regret_low - 0.5).abs() < 1e-15);
        assert!((m.cumulative_regret - 0.5).abs() < 1e-15);
    }

    #[test]
    fn high_level_mistake_splits() {
        let s = spec(vec![0.5, 0.5]);
        let mut m = RunMetrics::new(2, vec![], Comparator::Constrained);
        // best given a1 = 1 is 0.6; chose 0.5
        m.accumulate(&record(&s, 1, &[1.0, 0.0], vec![1, 1]), &s).unwrap();
        // (1,1) costs 0.9 > 0.5: infeasible, but still below the optimum
        assert!((m.regret_high - 0.3).abs() < 1e-12);
        assert!((m.regret_low - 0.1).abs() < 1e-12);
        assert_eq!(m.violations, vec![0, 1]);
        assert_eq!(m.violating_screened_rounds, 1);
    }

    #[test]
    fn infeasible_context_is_excluded() {
        let s = spec(vec![f64::NEG_INFINITY, 0.5]);
        let mut m = RunMetrics::new(2, vec![], Comparator::Constrained);
        let out = m.accumulate(&record(&s, 1, &[1.0, 0.0], vec![0, 1]), &s).unwrap();
        assert_eq!(out.optimum, None);
        assert_eq!(m.infeasible_rounds, 1);
        assert_eq!(m.cumulative_regret, 0.0);
        assert_eq!(m.violations, vec![1, 0]);
    }

    #[test]
    fn infeasible_overachiever_is_clamped() {
        // prefix 0 now breaks the level-1 threshold
        let mut s = spec(vec![0.5, 0.5]);
        s.cost_params[0].theta = vec![0.8, 0.0];
        let mut m = RunMetrics::new(2, vec![], Comparator::Constrained);
        let out = m.accumulate(&record(&s, 1, &[1.0, 0.0], vec![0, 0]), &s).unwrap();
        assert_eq!(out.optimum, Some(0.6));
        assert_eq!(out.regret, 0.0);
        assert_eq!(m.violations, vec![1, 0]);

        let mut m = RunMetrics::new(2, vec![], Comparator::Unconstrained);
        let out = m.accumulate(&record(&s, 1, &[1.0, 0.0], vec![1, 0]), &s).unwrap();
        assert_eq!(out.optimum, Some(0.9));
        assert!((out.regret - 0.3).abs() < 1e-12);
    }

    #[test]
    fn totals_match_independent_second_pass() {
        let params = crate::env::GenerateParams::new(3, 3, vec![2, 3, 2], vec![0.2, 0.3, 0.2], 0.1, 3);
        let s = crate::env::generate_spec(&params).unwrap();
        let space = s.action_space().unwrap();
        let all = space.full_actions();
        let schedule = CheckpointSchedule::PowersOfTwo.resolve(1000).unwrap();
        let mut m = RunMetrics::new(3, schedule, Comparator::Constrained);
        let mut rng = stream_rng(5, Substream::Agent);
        let mut ctx = stream_rng(5, Substream::Context);
        let mut per_round = Vec::new();
        for t in 1..=1000 {
            let x = draw_context(&s, &mut ctx);
            let a = all[rng.random_range(0..all.len())].indices.clone();
            let out = m.accumulate(&record(&s, t, &x, a), &s).unwrap();
            assert!(out.regret >= 0.0);
            let sum: f64 = out.level_shares.iter().sum();
            assert!((sum - out.regret).abs() < 1e-12);
            assert!(out.level_shares.iter().all(|&v| v >= 0.0));
            per_round.push(out.regret);
        }
        let second: f64 = per_round.iter().sum();
        assert!((second - m.cumulative_regret).abs() < 1e-9);
        assert!((m.regret_high + m.regret_low - m.cumulative_regret).abs() < 1e-9);
        let lv: f64 = m.level_regret.iter().sum();
        assert!((lv - m.cumulative_regret).abs() < 1e-9);
        for w in m.checkpoints.windows(2) {
            assert!(w[1].regret >= w[0].regret);
        }
        for c in &m.checkpoints {
            assert!((c.regret_high + c.regret_low - c.regret).abs() < 1e-9);
        }
        assert_eq!(m.checkpoints.last().unwrap().t, 1000);
        assert_eq!(m.checkpoints.len(), 11);
    }

    #[test]
    fn schedules() {
        assert_eq!(CheckpointSchedule::PowersOfTwo.resolve(1).unwrap(), vec![1]);
        assert_eq!(CheckpointSchedule::PowersOfTwo.resolve(10).unwrap(), vec![1, 2, 4, 8, 10]);
        assert_eq!(CheckpointSchedule::PowersOfTwo.resolve(8).unwrap(), vec![1, 2, 4, 8]);
        assert_eq!(
            CheckpointSchedule::Explicit(vec![5, 2, 5]).resolve(5).unwrap(),
            vec![2, 5]
        );
        assert!(CheckpointSchedule::Explicit(vec![6]).resolve(5).is_err());
        assert!(CheckpointSchedule::Explicit(vec![]).resolve(5).is_err());
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> Vec<Checkpoint> {
        (0..14)
            .map(|k| {
                let t = 1u64 << k;
                let r = f(t as f64);
                Checkpoint {
                    t,
                    regret: r,
                    regret_high: r / 2.0,
                    regret_low: r / 2.0,
                    violations: vec![],
                    fallback_rounds: 0,
                    avg_regret: r / t as f64,
                }
            })
            .collect()
    }

    #[test]
    fn exponent_of_constructed_curves() {
        let rep = sublinearity_summary_from(&synthetic(f64::sqrt), 1).unwrap();
        assert!((rep.fit.unwrap().exponent - 0.5).abs() < 1e-6);
        let rep = sublinearity_summary_from(&synthetic(|t| t), 1).unwrap();
        assert!((rep.fit.unwrap().exponent - 1.0).abs() < 1e-6);
        assert!(rep.rows.iter().all(|r| r.high_low_ratio == Some(1.0)));
        let rep = sublinearity_summary_from(&synthetic(|_| 0.0), 1).unwrap();
        assert!(rep.fit.is_none());
        assert!(rep.rows.iter().all(|r| r.high_low_ratio.is_none()));
        assert!(sublinearity_summary_from(&synthetic(f64::sqrt)[..2], 1).is_err());
    }
}
