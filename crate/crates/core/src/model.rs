//! Online ridge regression with a self-normalized confidence radius.
//!
//! Each [`LinearModelState`] tracks `V = λI + Σ x xᵀ`, its inverse (updated
//! by Sherman–Morrison and periodically re-factorized), `b = Σ y x` and the
//! estimate `θ̂ = V⁻¹ b`. Matrices are stored dense and row-major.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{all_finite, dot, mat_vec, norm2, quad_form};
use crate::{Error, Result};

/// Number of rank-one updates between dense re-factorizations of `V⁻¹`.
pub const REFACTOR_EVERY: u64 = 512;

/// Slack allowed on the unit-ball context precondition.
pub const CONTEXT_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelState {
    pub dim: usize,
    pub lambda: f64,
    pub v_matrix: Vec<f64>,
    pub v_inverse: Vec<f64>,
    pub b_vector: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub count: u64,
    /// Running `Σ ‖x_s‖²_{V_{s-1}⁻¹}` over absorbed contexts.
    pub elliptical_potential: f64,
}

impl LinearModelState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::config("lambda", format!("must be finite and > 0, got {lambda}")));
        }
        let mut v_matrix = vec![0.0; dim * dim];
        let mut v_inverse = vec![0.0; dim * dim];
        for i in 0..dim {
            v_matrix[i * dim + i] = lambda;
            v_inverse[i * dim + i] = 1.0 / lambda;
        }
        Ok(Self {
            dim,
            lambda,
            v_matrix,
            v_inverse,
            b_vector: vec![0.0; dim],
            theta_hat: vec![0.0; dim],
            count: 0,
            elliptical_potential: 0.0,
        })
    }

    fn check_context(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if !all_finite(x) {
            return Err(Error::NonFinite("context"));
        }
        Ok(())
    }

    /// Absorb one observation `(x, y)`.
    pub fn absorb(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.check_context(x)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("response"));
        }
        let norm = norm2(x);
        if norm > 1.0 + CONTEXT_NORM_TOL {
            return Err(Error::ContextNorm { norm });
        }
        let d = self.dim;

        // Sherman–Morrison: (V + x xᵀ)⁻¹ = V⁻¹ − (V⁻¹x)(V⁻¹x)ᵀ / (1 + xᵀV⁻¹x)
        let u = mat_vec(&self.v_inverse, x);
        let q = dot(x, &u).max(0.0);
        self.elliptical_potential += q;
        let denom = 1.0 + q;
        for i in 0..d {
            for j in 0..d {
                self.v_inverse[i * d + j] -= u[i] * u[j] / denom;
                self.v_matrix[i * d + j] += x[i] * x[j];
            }
            self.b_vector[i] += y * x[i];
        }
        self.count += 1;
        if self.count.is_multiple_of(REFACTOR_EVERY) {
            self.refactor();
        }
        self.theta_hat = mat_vec(&self.v_inverse, &self.b_vector);
        Ok(())
    }

    /// Recompute `V⁻¹` from `V` by a dense Cholesky factorization.
    pub fn refactor(&mut self) {
        let d = self.dim;
        let v = DMatrix::from_row_slice(d, d, &self.v_matrix);
        // V ⪰ λI with λ > 0, so the factorization exists.
        let inv = v
            .cholesky()
            .expect("design matrix is positive definite")
            .inverse();
        for i in 0..d {
            for j in 0..d {
                self.v_inverse[i * d + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
    }

    /// Point prediction `xᵀθ̂`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(x, &self.theta_hat)
    }

    /// `‖x‖_{V⁻¹}`; zero exactly when `x` is the zero vector.
    pub fn mahalanobis_bonus(&self, x: &[f64]) -> Result<f64> {
        self.check_context(x)?;
        Ok(self.bonus_unchecked(x))
    }

    pub(crate) fn bonus_unchecked(&self, x: &[f64]) -> f64 {
        quad_form(&self.v_inverse, x).max(0.0).sqrt()
    }

    /// `‖θ̂ − θ‖_V`, the distance used by the confidence ellipsoid.
    pub fn ellipsoid_distance(&self, theta: &[f64]) -> Result<f64> {
        self.check_context(theta)?;
        let diff: Vec<f64> = self.theta_hat.iter().zip(theta).map(|(a, b)| a - b).collect();
        Ok(quad_form(&self.v_matrix, &diff).max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    pub delta: f64,
    pub s_bound: f64,
    pub lambda: f64,
    pub dim: usize,
    /// Multiplier on the martingale term of the radius (sub-Gaussian scale).
    #[serde(default = "default_sigma_scale")]
    pub sigma_scale: f64,
}

fn default_sigma_scale() -> f64 {
    1.0
}

impl ConfidenceConfig {
    pub fn new(delta: f64, s_bound: f64, lambda: f64, dim: usize) -> Result<Self> {
        let cfg = Self {
            delta,
            s_bound,
            lambda,
            dim,
            sigma_scale: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_sigma_scale(mut self, sigma_scale: f64) -> Result<Self> {
        self.sigma_scale = sigma_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.s_bound.is_finite() && self.s_bound > 0.0) {
            return Err(Error::config("s_bound", format!("must be finite and > 0, got {}", self.s_bound)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config("lambda", format!("must be finite and > 0, got {}", self.lambda)));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if !(self.sigma_scale.is_finite() && self.sigma_scale > 0.0) {
            return Err(Error::config(
                "sigma_scale",
                format!("must be finite and > 0, got {}", self.sigma_scale),
            ));
        }
        Ok(())
    }

    /// The radius `β_t(δ)` after `t` observations.
    pub fn beta(&self, t: u64) -> f64 {
        compute_beta(self, t)
    }
}

/// `√λ·S + σ·√(2 ln(1/δ) + d ln(1 + t/(λd)))`.
pub fn compute_beta(cfg: &ConfidenceConfig, t: u64) -> f64 {
    let d = cfg.dim as f64;
    let log_det = d * (t as f64 / (cfg.lambda * d)).ln_1p();
    cfg.lambda.sqrt() * cfg.s_bound
        + cfg.sigma_scale * (2.0 * (1.0 / cfg.delta).ln() + log_det).sqrt()
}

/// Upper bound `2 d ln(1 + T/(λd))` on the elliptical potential after `T`
/// absorptions (valid for `λ ≥ 1` and unit-ball contexts).
pub fn elliptical_potential_bound(dim: usize, lambda: f64, t: u64) -> f64 {
    let d = dim as f64;
    2.0 * d * (t as f64 / (lambda * d)).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gaussian elimination with partial pivoting; kept separate from the
    /// Cholesky path used by the model.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    fn batch_theta(dim: usize, lambda: f64, data: &[(Vec<f64>, f64)]) -> Vec<f64> {
        let mut a = vec![vec![0.0; dim]; dim];
        let mut rhs = vec![0.0; dim];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = lambda;
        }
        for (x, y) in data {
            for i in 0..dim {
                for j in 0..dim {
                    a[i][j] += x[i] * x[j];
                }
                rhs[i] += y * x[i];
            }
        }
        dense_solve(a, rhs)
    }

    fn random_unit_ball(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
        loop {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if norm2(&x) <= 1.0 {
                return x;
            }
        }
    }

    #[test]
    fn zero_data_state() {
        let m = LinearModelState::new(3, 1.0).unwrap();
        assert_eq!(m.theta_hat, vec![0.0; 3]);
        assert_eq!(m.v_matrix, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.count, 0);

        let m = LinearModelState::new(1, 2.5).unwrap();
        assert_eq!(m.v_matrix, vec![2.5]);
        assert_eq!(m.v_inverse, vec![0.4]);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(LinearModelState::new(0, 1.0), Err(Error::Config { .. })));
        assert!(LinearModelState::new(2, 0.0).is_err());
        assert!(LinearModelState::new(2, -1.0).is_err());
        assert!(LinearModelState::new(2, f64::NAN).is_err());
    }

    #[test]
    fn single_absorb_matches_dense_solve() {
        let mut m = LinearModelState::new(2, 1.0).unwrap();
        m.absorb(&[1.0, 0.0], 1.0).unwrap();
        // (I + e1 e1ᵀ) θ = e1  →  θ = (0.5, 0)
        let oracle = batch_theta(2, 1.0, &[(vec![1.0, 0.0], 1.0)]);
        assert_eq!(oracle, vec![0.5, 0.0]);
        assert!((m.theta_hat[0] - 0.5).abs() < 1e-15);
        assert_eq!(m.theta_hat[1], 0.0);
    }

    #[test]
    fn zero_context_changes_nothing_but_count() {
        let mut m = LinearModelState::new(3, 1.0).unwrap();
        m.absorb(&[0.3, -0.2, 0.1], 0.7).unwrap();
        let before = m.theta_hat.clone();
        m.absorb(&[0.0, 0.0, 0.0], 123.0).unwrap();
        assert_eq!(m.theta_hat, before);
        assert_eq!(m.count, 2);
    }

    #[test]
    fn rejects_bad_contexts() {
        let mut m = LinearModelState::new(2, 1.0).unwrap();
        assert!(matches!(m.absorb(&[f64::NAN, 0.0], 1.0), Err(Error::NonFinite(_))));
        assert!(matches!(m.absorb(&[1.0, 1.0], 1.0), Err(Error::ContextNorm { .. })));
        assert!(matches!(m.absorb(&[1.0], 1.0), Err(Error::DimensionMismatch { .. })));
        // just inside the tolerance
        m.absorb(&[1.0 + 5e-13, 0.0], 1.0).unwrap();
        assert!(m.mahalanobis_bonus(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn fifty_absorptions_match_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 4;
        let mut m = LinearModelState::new(dim, 1.0).unwrap();
        let mut data = Vec::new();
        for _ in 0..50 {
            let x = random_unit_ball(&mut rng, dim);
            let y = rng.random_range(-2.0..2.0);
            m.absorb(&x, y).unwrap();
            data.push((x, y));
        }
        let oracle = batch_theta(dim, 1.0, &data);
        for (a, b) in m.theta_hat.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn inverse_stays_inverse_across_refactor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 3;
        let mut m = LinearModelState::new(dim, 0.5).unwrap();
        for _ in 0..(REFACTOR_EVERY as usize + 40) {
            let x = random_unit_ball(&mut rng, dim);
            m.absorb(&x, rng.random_range(-1.0..1.0)).unwrap();
            for i in 0..dim {
                for j in 0..dim {
                    let p: f64 = (0..dim)
                        .map(|k| m.v_matrix[i * dim + k] * m.v_inverse[k * dim + j])
                        .sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((p - id).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn bonus_examples() {
        let m = LinearModelState::new(2, 1.0).unwrap();
        assert_eq!(m.mahalanobis_bonus(&[1.0, 0.0]).unwrap(), 1.0);
        let m = LinearModelState::new(2, 4.0).unwrap();
        assert_eq!(m.mahalanobis_bonus(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(m.mahalanobis_bonus(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn bonus_shrinks_along_observed_direction() {
        let mut m = LinearModelState::new(2, 1.0).unwrap();
        for _ in 0..100 {
            m.absorb(&[1.0, 0.0], 0.0).unwrap();
        }
        // dense-inverse oracle: V = diag(101, 1)
        let along = m.mahalanobis_bonus(&[1.0, 0.0]).unwrap();
        let across = m.mahalanobis_bonus(&[0.0, 1.0]).unwrap();
        assert!((along - (1.0f64 / 101.0).sqrt()).abs() < 1e-12);
        assert!((across - 1.0).abs() < 1e-12);
        assert!(along < across);
    }

    #[test]
    fn beta_examples() {
        let cfg = ConfidenceConfig::new((-1.0f64).exp(), 1.0, 1.0, 1).unwrap();
        assert!((compute_beta(&cfg, 0) - (1.0 + 2f64.sqrt())).abs() < 1e-12);

        // 50-digit evaluation of 1 + sqrt(2 ln 10 + 5 ln 201)
        let cfg = ConfidenceConfig::new(0.1, 1.0, 1.0, 5).unwrap();
        #[allow(clippy::excessive_precision)]
        let oracle = 6.578_682_167_526_975_193_968_320_065_144_699_f64;
        assert!((compute_beta(&cfg, 1000) - oracle).abs() < 1e-10);

        // t = 0: only the δ term remains under the root
        let cfg = ConfidenceConfig::new(0.3, 2.0, 7.0, 9).unwrap();
        let expected = 7f64.sqrt() * 2.0 + (2.0 * (1.0f64 / 0.3).ln()).sqrt();
        assert!((compute_beta(&cfg, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn sigma_scale_multiplies_martingale_term() {
        let cfg = ConfidenceConfig::new(0.1, 1.0, 1.0, 5).unwrap();
        let scaled = cfg.with_sigma_scale(0.5).unwrap();
        let root = compute_beta(&cfg, 77) - 1.0;
        assert!((compute_beta(&scaled, 77) - (1.0 + 0.5 * root)).abs() < 1e-12);
    }

    #[test]
    fn confidence_config_validation() {
        assert!(ConfidenceConfig::new(0.0, 1.0, 1.0, 1).is_err());
        assert!(ConfidenceConfig::new(1.0, 1.0, 1.0, 1).is_err());
        assert!(ConfidenceConfig::new(1.5, 1.0, 1.0, 1).is_err());
        assert!(ConfidenceConfig::new(0.1, 0.0, 1.0, 1).is_err());
        assert!(ConfidenceConfig::new(0.1, 1.0, 0.0, 1).is_err());
        assert!(ConfidenceConfig::new(0.1, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn elliptical_potential_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trace in 0..100 {
            let dim = 1 + trace % 6;
            let mut m = LinearModelState::new(dim, 1.0).unwrap();
            let steps = 50 + 13 * trace;
            for _ in 0..steps {
                let x = random_unit_ball(&mut rng, dim);
                m.absorb(&x, 0.0).unwrap();
            }
            let bound = elliptical_potential_bound(dim, 1.0, m.count);
            assert!(m.elliptical_potential < bound, "{} vs {bound}", m.elliptical_potential);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-1.0f64..1.0, dim).prop_map(|v| {
                let n = norm2(&v);
                if n > 1.0 {
                    v.iter().map(|x| x / n).collect()
                } else {
                    v
                }
            })
        }

        fn trace() -> impl Strategy<Value = (usize, Vec<(Vec<f64>, f64)>)> {
            (1usize..=6).prop_flat_map(|dim| {
                (
                    Just(dim),
                    prop::collection::vec((unit_vec(dim), -3.0f64..3.0), 0..120),
                )
            })
        }

        proptest! {
            #[test]
            fn incremental_matches_batch((dim, data) in trace(), lambda in 0.2f64..4.0) {
                let mut m = LinearModelState::new(dim, lambda).unwrap();
                for (x, y) in &data {
                    m.absorb(x, *y).unwrap();
                }
                let oracle = batch_theta(dim, lambda, &data);
                let scale = oracle.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
                for (a, b) in m.theta_hat.iter().zip(&oracle) {
                    prop_assert!((a - b).abs() <= 1e-8 * scale);
                }
            }

            #[test]
            fn bonus_never_increases(dim in 1usize..5, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let probe = random_unit_ball(&mut rng, dim);
                let mut m = LinearModelState::new(dim, 1.0).unwrap();
                let mut last = m.mahalanobis_bonus(&probe).unwrap();
                for _ in 0..60 {
                    let x = random_unit_ball(&mut rng, dim);
                    m.absorb(&x, 0.0).unwrap();
                    let now = m.mahalanobis_bonus(&probe).unwrap();
                    prop_assert!(now <= last + 1e-12);
                    last = now;
                }
            }

            #[test]
            fn beta_monotone(t in 0u64..1_000_000, d1 in 0.001f64..0.5, gap in 0.001f64..0.49, dim in 1usize..20) {
                let lo = ConfidenceConfig::new(d1, 1.0, 1.0, dim).unwrap();
                let hi = ConfidenceConfig::new(d1 + gap, 1.0, 1.0, dim).unwrap();
                prop_assert!(compute_beta(&lo, t + 1) > compute_beta(&lo, t));
                prop_assert!(compute_beta(&lo, t) > compute_beta(&hi, t));
            }
        }
    }
}
