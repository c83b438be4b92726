use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::norm2;
use crate::model::CONTEXT_NORM_TOL;
use crate::{Error, Result};

/// How contexts are drawn. Every variant stays inside the closed unit ball.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContextDistribution {
    /// Uniform over the unit ball.
    #[default]
    UniformBall,
    /// Uniform over a finite list of points.
    FixedSet { points: Vec<Vec<f64>> },
    /// Isotropic Gaussian with per-coordinate `std`, projected onto the unit
    /// sphere when it lands outside the ball.
    GaussianClipped { std: f64 },
}

impl ContextDistribution {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ContextDistribution::UniformBall => Ok(()),
            ContextDistribution::FixedSet { points } => {
                if points.is_empty() {
                    return Err(Error::config("context_distribution.points", "must be non-empty"));
                }
                for p in points {
                    if p.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            actual: p.len(),
                        });
                    }
                    if !p.iter().all(|v| v.is_finite()) {
                        return Err(Error::NonFinite("context_distribution.points"));
                    }
                    let norm = norm2(p);
                    if norm > 1.0 + CONTEXT_NORM_TOL {
                        return Err(Error::ContextNorm { norm });
                    }
                }
                Ok(())
            }
            ContextDistribution::GaussianClipped { std } => {
                if std.is_finite() && *std > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(
                        "context_distribution.std",
                        format!("must be finite and > 0, got {std}"),
                    ))
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        match self {
            ContextDistribution::UniformBall => uniform_ball(dim, rng),
            ContextDistribution::FixedSet { points } => {
                points[rng.random_range(0..points.len())].clone()
            }
            ContextDistribution::GaussianClipped { std } => {
                let mut x: Vec<f64> = (0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        std * z
                    })
                    .collect();
                let n = norm2(&x);
                if n > 1.0 {
                    x.iter_mut().for_each(|v| *v /= n);
                }
                x
            }
        }
    }

    /// Finite support, when there is one.
    pub fn support(&self) -> Option<&[Vec<f64>]> {
        match self {
            ContextDistribution::FixedSet { points } => Some(points),
            _ => None,
        }
    }
}

/// Gaussian direction scaled by `U^{1/d}`.
pub fn uniform_ball<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&dir);
        if n == 0.0 || !n.is_finite() {
            continue;
        }
        let u: f64 = rng.random();
        let r = u.powf(1.0 / dim as f64);
        return dir.iter().map(|v| v / n * r).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_ball_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in 1..8 {
            for _ in 0..2000 {
                assert!(norm2(&uniform_ball(dim, &mut rng)) <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn fixed_set_singleton_is_constant() {
        let dist = ContextDistribution::FixedSet {
            points: vec![vec![0.3, -0.4]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            assert_eq!(dist.sample(2, &mut rng), vec![0.3, -0.4]);
        }
    }

    #[test]
    fn gaussian_clipped_mean_is_zero() {
        let dist = ContextDistribution::GaussianClipped { std: 0.6 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let dim = 3;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for _ in 0..n {
            let x = dist.sample(dim, &mut rng);
            assert!(norm2(&x) <= 1.0 + 1e-15);
            for i in 0..dim {
                sum[i] += x[i];
                sq[i] += x[i] * x[i];
            }
        }
        for i in 0..dim {
            let mean = sum[i] / n as f64;
            let sd = (sq[i] / n as f64 - mean * mean).sqrt();
            assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt(), "coord {i}: {mean}");
        }
    }

    #[test]
    fn validation() {
        assert!(ContextDistribution::FixedSet { points: vec![] }.validate(2).is_err());
        assert!(ContextDistribution::FixedSet {
            points: vec![vec![1.0, 1.0]]
        }
        .validate(2)
        .is_err());
        assert!(ContextDistribution::GaussianClipped { std: 0.0 }.validate(2).is_err());
    }
}
