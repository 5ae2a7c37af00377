//! Sample-affinity matrix: Gaussian similarities between the views of each
//! sample, arranged block-diagonally so that cross-view reconstruction is
//! weighted per sample and no information flows between different samples.

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use crate::corpus::MultiViewCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AffinityConfig {
    /// Gaussian bandwidth `c` in `exp(-||x_u - x_v||^2 / (2c))`.
    pub bandwidth: f64,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self { bandwidth: 2.0 }
    }
}

impl AffinityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "affinity bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }
}

/// `VN x VN` block-diagonal similarity matrix: one `V x V` zero-diagonal
/// block per sample, under the sample-major column ordering
/// `[x_1^1 .. x_1^V, x_2^1 .. x_2^V, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleAffinityMatrix {
    n_samples: usize,
    n_views: usize,
    dense: DMatrix<f64>,
}

impl SampleAffinityMatrix {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn dim(&self) -> usize {
        self.n_samples * self.n_views
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// The `V x V` block for one sample.
    pub fn block(&self, sample: usize) -> DMatrix<f64> {
        let v = self.n_views;
        self.dense.view((sample * v, sample * v), (v, v)).into()
    }
}

/// `exp(-||x_v - x_u||^2 / (2c))`; equals 1 for identical vectors and decays
/// monotonically with distance.
pub fn pair_affinity(x_u: DVectorView<f64>, x_v: DVectorView<f64>, c: f64) -> Result<f64> {
    if x_u.len() != x_v.len() {
        return Err(Error::DimensionMismatch(format!(
            "affinity inputs have lengths {} and {}",
            x_u.len(),
            x_v.len()
        )));
    }
    let sq_dist = (x_v - x_u).norm_squared();
    Ok((-sq_dist / (2.0 * c)).exp())
}

/// Builds the full block-diagonal matrix from a corpus.
pub fn build_sam(corpus: &MultiViewCorpus, cfg: &AffinityConfig) -> Result<SampleAffinityMatrix> {
    cfg.validate()?;
    let n = corpus.n_samples();
    let v = corpus.n_views();
    // Samples as columns, one d x N matrix per view.
    let columns: Vec<DMatrix<f64>> = corpus
        .views()
        .iter()
        .map(|view| view.features.to_columns())
        .collect();
    let mut dense = DMatrix::zeros(n * v, n * v);
    for i in 0..n {
        for u in 0..v {
            for w in (u + 1)..v {
                let s = pair_affinity(
                    columns[u].column(i).as_view(),
                    columns[w].column(i).as_view(),
                    cfg.bandwidth,
                )?;
                dense[(i * v + u, i * v + w)] = s;
                dense[(i * v + w, i * v + u)] = s;
            }
        }
    }
    Ok(SampleAffinityMatrix {
        n_samples: n,
        n_views: v,
        dense,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, FeatureMatrix, MultiViewCorpus, SynthConfig, ViewDataset};
    use nalgebra::DVector;

    fn corpus_from_columns(views: &[Vec<Vec<f64>>]) -> MultiViewCorpus {
        // Each view: list of samples (as vectors).
        let built = views
            .iter()
            .enumerate()
            .map(|(v, samples)| {
                let data = DMatrix::from_fn(samples.len(), samples[0].len(), |r, c| samples[r][c]);
                ViewDataset {
                    view_id: format!("v{v}"),
                    features: FeatureMatrix::new(data).unwrap(),
                    labels: vec![1; samples.len()],
                }
            })
            .collect();
        MultiViewCorpus::new(built, 1).unwrap()
    }

    #[test]
    fn identical_vectors_give_one() {
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let s = pair_affinity(x.as_view(), x.as_view(), 2.0).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_four_bandwidth_two() {
        // ||diff||^2 = 4, c = 2 -> exp(-1).
        let a = DVector::from_vec(vec![0.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 0.0]);
        let s = pair_affinity(a.as_view(), b.as_view(), 2.0).unwrap();
        assert!((s - (-1.0f64).exp()).abs() < 1e-12);
        assert!((s - 0.36787944117144233).abs() < 1e-12);
    }

    #[test]
    fn affinity_decays_monotonically() {
        let origin = DVector::from_vec(vec![0.0]);
        let mut prev = 1.0;
        for step in 1..20 {
            let x = DVector::from_vec(vec![step as f64 * 0.5]);
            let s = pair_affinity(origin.as_view(), x.as_view(), 2.0).unwrap();
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = DVector::from_vec(vec![0.0, 1.0]);
        let b = DVector::from_vec(vec![0.0]);
        assert!(pair_affinity(a.as_view(), b.as_view(), 2.0).is_err());
    }

    #[test]
    fn single_sample_block_matches_hand_computation() {
        // Two views of one sample at squared distance 4 with c = 2.
        let corpus = corpus_from_columns(&[vec![vec![0.0, 0.0]], vec![vec![2.0, 0.0]]]);
        let sam = build_sam(&corpus, &AffinityConfig { bandwidth: 2.0 }).unwrap();
        let e = (-1.0f64).exp();
        let block = sam.block(0);
        assert!((block[(0, 0)]).abs() < 1e-15);
        assert!((block[(1, 1)]).abs() < 1e-15);
        assert!((block[(0, 1)] - e).abs() < 1e-12);
        assert!((block[(1, 0)] - e).abs() < 1e-12);
    }

    #[test]
    fn identical_views_give_unit_off_diagonal() {
        let samples = vec![vec![1.0, 2.0], vec![-0.5, 0.25]];
        let corpus = corpus_from_columns(&[samples.clone(), samples]);
        let sam = build_sam(&corpus, &AffinityConfig::default()).unwrap();
        for i in 0..2 {
            let block = sam.block(i);
            assert!((block[(0, 1)] - 1.0).abs() < 1e-15);
            assert!((block[(1, 0)] - 1.0).abs() < 1e-15);
        }
    }

    fn assert_structure(sam: &SampleAffinityMatrix) {
        let m = sam.as_matrix();
        let v = sam.n_views();
        for a in 0..sam.dim() {
            assert!(m[(a, a)].abs() == 0.0, "diagonal must be zero");
            for b in 0..sam.dim() {
                assert_eq!(m[(a, b)], m[(b, a)], "symmetry");
                assert!((0.0..=1.0).contains(&m[(a, b)]), "entries in [0,1]");
                if a / v != b / v {
                    assert_eq!(m[(a, b)], 0.0, "off-block entries must be zero");
                }
            }
        }
    }

    #[test]
    fn structural_invariants_on_synthetic_corpus() {
        let corpus = synth_corpus(&SynthConfig {
            seed: 77,
            views: 3,
            classes: 2,
            samples_per_class: 4,
            latent_dim: 3,
            view_noise: 0.2,
            observation_dim: 5,
            shared_transform: false,
        })
        .unwrap();
        let sam = build_sam(&corpus, &AffinityConfig::default()).unwrap();
        assert_eq!(sam.dim(), 8 * 3);
        assert_structure(&sam);
    }

    #[test]
    fn permuting_samples_permutes_blocks() {
        let corpus = synth_corpus(&SynthConfig {
            seed: 3,
            views: 2,
            classes: 2,
            samples_per_class: 3,
            latent_dim: 2,
            view_noise: 0.1,
            observation_dim: 4,
            shared_transform: false,
        })
        .unwrap();
        let sam = build_sam(&corpus, &AffinityConfig::default()).unwrap();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permuted = corpus.subset(&perm).unwrap();
        let sam_p = build_sam(&permuted, &AffinityConfig::default()).unwrap();
        for (new_pos, &old_pos) in perm.iter().enumerate() {
            assert_eq!(sam_p.block(new_pos), sam.block(old_pos));
        }
    }
}
