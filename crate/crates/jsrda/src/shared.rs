//! Shared-feature learning.
//!
//! A single linear map `W` is fit in closed form against the expectation of
//! infinitely many feature-dropout corruptions of the training pool, with the
//! sample-affinity matrix weighting the cross-view reconstruction target.
//! The corrupted matrix is never materialized: with keep probability
//! `q = 1 - noise_prob`, the two second-moment matrices the least-squares
//! solution needs have exact expectations
//!
//! ```text
//! P = q (X S X^T)
//! Q = q^2 (X X^T) + q (1 - q) diag(X X^T)
//! ```
//!
//! and `W = P (Q + eps I)^{-1}`. Shared features are `tanh(W X)`, which are
//! then concatenated with the raw (private) features.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MsdaConfig {
    /// Probability of zeroing each feature entry, in `[0, 1)`.
    pub noise_prob: f64,
    /// Number of stacked layers; each layer refits on the previous layer's
    /// squashed output.
    pub layers: usize,
    /// Relative ridge: the solve adds `ridge * trace(Q) / d` to `Q`'s
    /// diagonal for invertibility.
    pub ridge: f64,
}

impl Default for MsdaConfig {
    fn default() -> Self {
        Self {
            noise_prob: 0.6,
            layers: 1,
            ridge: 1e-8,
        }
    }
}

impl MsdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise_prob) {
            return Err(Error::InvalidConfig(format!(
                "noise_prob must lie in [0, 1), got {}",
                self.noise_prob
            )));
        }
        if self.layers < 1 {
            return Err(Error::InvalidConfig("layers must be >= 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

/// The fitted `d x d` reconstruction map of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedMapping {
    w: DMatrix<f64>,
}

impl SharedMapping {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "mapping must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        Ok(Self { w })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }
}

/// `2d x n` stack `[H_s; H_p]`: squashed shared features over raw private
/// features.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedPrivateFeatures {
    h: DMatrix<f64>,
    feature_dim: usize,
}

impl SharedPrivateFeatures {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.h
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn shared(&self) -> DMatrix<f64> {
        self.h.rows(0, self.feature_dim).into()
    }

    pub fn private(&self) -> DMatrix<f64> {
        self.h.rows(self.feature_dim, self.feature_dim).into()
    }
}

/// Exact expectations of the corrupted second moments.
///
/// `x` is the `d x VN` training pool, sample-major column order matching
/// `weights` (normally the dense sample-affinity matrix).
pub fn corruption_expectations(
    x: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    cfg: &MsdaConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    cfg.validate()?;
    let n = x.ncols();
    if weights.nrows() != n || weights.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix is {}x{} but the pool has {} columns",
            weights.nrows(),
            weights.ncols(),
            n
        )));
    }
    let q = 1.0 - cfg.noise_prob;
    let p = q * (x * weights * x.transpose());
    let gram = x * x.transpose();
    let mut qm = q * q * &gram;
    for i in 0..qm.nrows() {
        qm[(i, i)] += q * (1.0 - q) * gram[(i, i)];
    }
    Ok((p, qm))
}

/// Closed-form solve `W = P (Q + eps I)^{-1}` with `eps = ridge tr(Q)/d`.
///
/// Solves rather than inverting; fails if the ridged system is numerically
/// singular or the solve residual exceeds `1e-10` relative.
pub fn solve_mapping(p: &DMatrix<f64>, q: &DMatrix<f64>, cfg: &MsdaConfig) -> Result<SharedMapping> {
    cfg.validate()?;
    let d = q.nrows();
    if q.ncols() != d || p.nrows() != d || p.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "expected square {d}x{d} moment matrices"
        )));
    }
    let eps = cfg.ridge * q.trace() / d as f64;
    let mut ridged = q.clone();
    for i in 0..d {
        ridged[(i, i)] += eps;
    }
    // Symmetrize away accumulation noise before factorizing.
    let ridged = (&ridged + ridged.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(ridged.clone()).ok_or(Error::SingularSystem)?;
    // W (Q + eps I) = P, taken transposed so the SPD factor sits on the left.
    let wt = chol.solve(&p.transpose());
    let w = wt.transpose();
    let residual = (&w * &ridged - p).norm();
    let scale = p.norm().max(f64::MIN_POSITIVE);
    if residual > 1e-10 * scale {
        return Err(Error::SingularSystem);
    }
    SharedMapping::new(w)
}

/// `[tanh(W X); X]` for one view's `d x n` columns.
pub fn shared_private(x_view: &DMatrix<f64>, mapping: &SharedMapping) -> Result<SharedPrivateFeatures> {
    apply_shared(x_view, std::slice::from_ref(mapping))
}

/// Fits the per-layer mappings on a training pool. Layer `l` refits on the
/// previous layer's squashed output, reusing the same affinity weights.
pub fn fit_shared(
    x: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    cfg: &MsdaConfig,
) -> Result<Vec<SharedMapping>> {
    cfg.validate()?;
    let mut layers = Vec::with_capacity(cfg.layers);
    let mut h = x.clone();
    for _ in 0..cfg.layers {
        let (p, q) = corruption_expectations(&h, weights, cfg)?;
        let mapping = solve_mapping(&p, &q, cfg)?;
        h = (mapping.as_matrix() * &h).map(f64::tanh);
        layers.push(mapping);
    }
    Ok(layers)
}

/// Applies fitted layers to any columns (training or held out) and stacks
/// the result over the raw input.
pub fn apply_shared(
    x_view: &DMatrix<f64>,
    layers: &[SharedMapping],
) -> Result<SharedPrivateFeatures> {
    let d = x_view.nrows();
    if x_view.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if layers.is_empty() {
        return Err(Error::InvalidConfig("no fitted layers supplied".into()));
    }
    for layer in layers {
        if layer.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "mapping is {}x{} but features have dimension {d}",
                layer.dim(),
                layer.dim()
            )));
        }
    }
    let mut h = x_view.clone();
    for layer in layers {
        h = (layer.as_matrix() * &h).map(f64::tanh);
    }
    let mut stacked = DMatrix::zeros(2 * d, x_view.ncols());
    stacked.rows_mut(0, d).copy_from(&h);
    stacked.rows_mut(d, d).copy_from(x_view);
    Ok(SharedPrivateFeatures {
        h: stacked,
        feature_dim: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Zero-diagonal symmetric block weights shaped like a two-view
    /// affinity matrix over `n/2` samples.
    fn random_affinity(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        assert!(n % 2 == 0);
        let mut s = DMatrix::zeros(n, n);
        for b in 0..n / 2 {
            let v: f64 = rng.gen_range(0.0..1.0);
            s[(2 * b, 2 * b + 1)] = v;
            s[(2 * b + 1, 2 * b)] = v;
        }
        s
    }

    /// Monte-Carlo estimate of the corrupted second moments.
    fn monte_carlo_moments(
        x: &DMatrix<f64>,
        s: &DMatrix<f64>,
        noise_prob: f64,
        trials: usize,
        rng: &mut ChaCha8Rng,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = x.nrows();
        let xs = x * s;
        let mut p_acc = DMatrix::zeros(d, d);
        let mut q_acc = DMatrix::zeros(d, d);
        let mut corrupted = x.clone();
        for _ in 0..trials {
            for v in corrupted.iter_mut().zip(x.iter()) {
                *v.0 = if rng.gen::<f64>() < noise_prob { 0.0 } else { *v.1 };
            }
            p_acc += &xs * corrupted.transpose();
            q_acc += &corrupted * corrupted.transpose();
        }
        (p_acc / trials as f64, q_acc / trials as f64)
    }

    #[test]
    fn no_corruption_recovers_plain_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 3, 8);
        let s = random_affinity(&mut rng, 8);
        let cfg = MsdaConfig {
            noise_prob: 0.0,
            ..MsdaConfig::default()
        };
        let (p, q) = corruption_expectations(&x, &s, &cfg).unwrap();
        let p_exact = &x * &s * x.transpose();
        let q_exact = &x * x.transpose();
        assert!((p - &p_exact).norm() <= 1e-14 * p_exact.norm());
        assert!((q - &q_exact).norm() <= 1e-14 * q_exact.norm());
    }

    #[test]
    fn expectations_match_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = random_matrix(&mut rng, 3, 8);
        let s = random_affinity(&mut rng, 8);
        let cfg = MsdaConfig::default();
        let (p, q) = corruption_expectations(&x, &s, &cfg).unwrap();
        let (p_mc, q_mc) = monte_carlo_moments(&x, &s, cfg.noise_prob, 100_000, &mut rng);
        assert!((&p - &p_mc).norm() / p.norm() < 1e-2, "P disagrees with Monte-Carlo");
        assert!((&q - &q_mc).norm() / q.norm() < 1e-2, "Q disagrees with Monte-Carlo");
    }

    #[test]
    fn single_nonzero_entry_scalar_case() {
        let mut x = DMatrix::zeros(3, 8);
        x[(1, 3)] = 2.5;
        let s = DMatrix::zeros(8, 8);
        let cfg = MsdaConfig::default();
        let (_, q) = corruption_expectations(&x, &s, &cfg).unwrap();
        let keep = 1.0 - cfg.noise_prob;
        for r in 0..3 {
            for c in 0..3 {
                let expected = if (r, c) == (1, 1) { keep * 2.5 * 2.5 } else { 0.0 };
                assert!((q[(r, c)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_weights_full_rank_recover_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 4, 20);
        let s = DMatrix::identity(20, 20);
        let cfg = MsdaConfig {
            noise_prob: 0.0,
            ridge: 0.0,
            ..MsdaConfig::default()
        };
        let (p, q) = corruption_expectations(&x, &s, &cfg).unwrap();
        let w = solve_mapping(&p, &q, &cfg).unwrap();
        let err = (w.as_matrix() - DMatrix::identity(4, 4)).norm();
        assert!(err < 1e-10, "deviation from identity: {err}");
    }

    #[test]
    fn solve_satisfies_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = random_matrix(&mut rng, 5, 12);
            let s = random_affinity(&mut rng, 12);
            let cfg = MsdaConfig::default();
            let (p, q) = corruption_expectations(&x, &s, &cfg).unwrap();
            let w = solve_mapping(&p, &q, &cfg).unwrap();
            let d = q.nrows();
            let eps = cfg.ridge * q.trace() / d as f64;
            let mut ridged = q.clone();
            for i in 0..d {
                ridged[(i, i)] += eps;
            }
            let residual = (w.as_matrix() * ridged - &p).norm() / p.norm();
            assert!(residual <= 1e-10, "residual {residual}");
        }
    }

    #[test]
    fn rank_deficient_without_ridge_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let col = random_matrix(&mut rng, 4, 1);
        let x = &col * random_matrix(&mut rng, 1, 9); // rank one
        let s = DMatrix::identity(9, 9);
        let cfg = MsdaConfig {
            noise_prob: 0.0,
            ridge: 0.0,
            ..MsdaConfig::default()
        };
        let (p, q) = corruption_expectations(&x, &s, &cfg).unwrap();
        assert!(matches!(
            solve_mapping(&p, &q, &cfg),
            Err(Error::SingularSystem)
        ));
    }

    #[test]
    fn zero_mapping_stacks_zero_over_input() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 4.0, 0.0, -1.0]);
        let w = SharedMapping::new(DMatrix::zeros(2, 2)).unwrap();
        let out = shared_private(&x, &w).unwrap();
        assert_eq!(out.shared(), DMatrix::zeros(2, 3));
        assert_eq!(out.private(), x);
    }

    #[test]
    fn scalar_tanh_case() {
        let x = DMatrix::from_element(1, 1, 1.0);
        let w = SharedMapping::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let out = shared_private(&x, &w).unwrap();
        assert!((out.as_matrix()[(0, 0)] - 0.9640275800758169).abs() < 1e-12);
        assert_eq!(out.as_matrix()[(1, 0)], 1.0);
    }

    #[test]
    fn shared_rows_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_matrix(&mut rng, 4, 10);
        let w = SharedMapping::new(random_matrix(&mut rng, 4, 4)).unwrap();
        let out = shared_private(&x, &w).unwrap();
        for v in out.shared().iter() {
            assert!(*v > -1.0 && *v < 1.0);
        }
    }

    #[test]
    fn stacking_composes_layers_and_single_layer_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_matrix(&mut rng, 3, 10);
        let s = random_affinity(&mut rng, 10);
        let one = MsdaConfig {
            layers: 1,
            ..MsdaConfig::default()
        };
        let two = MsdaConfig {
            layers: 2,
            ..MsdaConfig::default()
        };
        let l1 = fit_shared(&x, &s, &one).unwrap();
        let l2 = fit_shared(&x, &s, &two).unwrap();
        assert_eq!(l1[0], l2[0], "first layer identical across depths");
        assert_eq!(
            apply_shared(&x, &l1).unwrap(),
            shared_private(&x, &l1[0]).unwrap()
        );
        // Second layer must equal a refit on the first layer's output.
        let h1 = (l2[0].as_matrix() * &x).map(f64::tanh);
        let (p, q) = corruption_expectations(&h1, &s, &two).unwrap();
        let w2 = solve_mapping(&p, &q, &two).unwrap();
        assert_eq!(l2[1], w2);
        // Transductive reuse is deterministic.
        assert_eq!(apply_shared(&x, &l2).unwrap(), apply_shared(&x, &l2).unwrap());
    }
}
