//! Data model and I/O for multi-view feature corpora.
//!
//! A corpus holds one feature matrix per camera view plus per-sample class
//! labels. Sample index `i` refers to the same physical action instance in
//! every view, so labels must agree across views index by index. Feature
//! files are plain CSV with one sample per row; the exact decimal
//! serialization used by [`write_matrix_csv`] round-trips every `f64`
//! bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense feature matrix with one sample per row.
///
/// Storage is row-per-sample for CSV inspectability; the learning stages
/// work sample-per-column and use [`FeatureMatrix::to_columns`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    /// Validates finiteness and non-emptiness.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        for row in 0..data.nrows() {
            for col in 0..data.ncols() {
                if !data[(row, col)].is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        Ok(Self { data })
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// `d x N` layout (samples as columns) used by every learning stage.
    pub fn to_columns(&self) -> DMatrix<f64> {
        self.data.transpose()
    }

    /// Row-subset copy preserving `indices` order.
    pub fn select_samples(&self, indices: &[usize]) -> FeatureMatrix {
        let d = self.feature_dim();
        let mut out = DMatrix::zeros(indices.len(), d);
        for (r, &idx) in indices.iter().enumerate() {
            out.set_row(r, &self.data.row(idx));
        }
        FeatureMatrix { data: out }
    }
}

/// One camera view: features plus 1-based class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDataset {
    pub view_id: String,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

/// Corresponding feature matrices across `V >= 2` views.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewCorpus {
    views: Vec<ViewDataset>,
    class_count: usize,
}

impl MultiViewCorpus {
    /// Validates every corpus invariant; violations are errors, never
    /// silently accepted.
    pub fn new(views: Vec<ViewDataset>, class_count: usize) -> Result<Self> {
        if views.len() < 2 {
            return Err(Error::TooFewViews(views.len()));
        }
        if class_count == 0 {
            return Err(Error::InvalidConfig("class_count must be >= 1".into()));
        }
        let counts: Vec<usize> = views.iter().map(|v| v.features.n_samples()).collect();
        if counts.iter().any(|&c| c != counts[0]) {
            return Err(Error::SampleCountMismatch { counts });
        }
        for view in &views {
            if view.labels.len() != view.features.n_samples() {
                return Err(Error::LabelCountMismatch {
                    view_id: view.view_id.clone(),
                    n_labels: view.labels.len(),
                    n_samples: view.features.n_samples(),
                });
            }
            for (index, &label) in view.labels.iter().enumerate() {
                if label < 1 || label > class_count {
                    return Err(Error::LabelOutOfRange {
                        view_id: view.view_id.clone(),
                        index,
                        label,
                        class_count,
                    });
                }
            }
        }
        let reference = &views[0].labels;
        for view in &views[1..] {
            for (index, (&a, &b)) in reference.iter().zip(&view.labels).enumerate() {
                if a != b {
                    return Err(Error::LabelDisagreement { index, a, b });
                }
            }
        }
        Ok(Self { views, class_count })
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].features.n_samples()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn views(&self) -> &[ViewDataset] {
        &self.views
    }

    pub fn view(&self, index: usize) -> &ViewDataset {
        &self.views[index]
    }

    pub fn view_index(&self, id: &str) -> Result<usize> {
        self.views
            .iter()
            .position(|v| v.view_id == id)
            .ok_or_else(|| Error::UnknownView(id.to_string()))
    }

    /// Labels shared by all views (agreement is a constructor invariant).
    pub fn labels(&self) -> &[usize] {
        &self.views[0].labels
    }

    /// New corpus containing only the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<MultiViewCorpus> {
        let views = self
            .views
            .iter()
            .map(|v| ViewDataset {
                view_id: v.view_id.clone(),
                features: v.features.select_samples(indices),
                labels: indices.iter().map(|&i| v.labels[i]).collect(),
            })
            .collect();
        MultiViewCorpus::new(views, self.class_count)
    }
}

// ---------------------------------------------------------------------------
// CSV and manifest I/O
// ---------------------------------------------------------------------------

/// Reads a headerless CSV of equal-length numeric rows.
pub fn read_matrix_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for token in line.split(',') {
            let token = token.trim();
            let value: f64 = token.parse().map_err(|_| Error::BadToken {
                path: path.to_path_buf(),
                line: line_no,
                token: token.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::BadToken {
                    path: path.to_path_buf(),
                    line: line_no,
                    token: token.to_string(),
                });
            }
            row.push(value);
        }
        if rows.is_empty() {
            width = row.len();
        } else if row.len() != width {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                line: line_no,
                expected: width,
                found: row.len(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let data = DMatrix::from_fn(rows.len(), width, |r, c| rows[r][c]);
    FeatureMatrix::new(data)
}

/// Writes one sample per line using the shortest decimal form that parses
/// back to the identical `f64`.
pub fn write_matrix_csv(path: &Path, matrix: &FeatureMatrix) -> Result<()> {
    let data = matrix.as_matrix();
    let mut out = String::new();
    for r in 0..data.nrows() {
        for c in 0..data.ncols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", data[(r, c)]);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a labels file: one integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut labels = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let label: usize = token.parse().map_err(|_| Error::BadToken {
            path: path.to_path_buf(),
            line: line_idx + 1,
            token: token.to_string(),
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for label in labels {
        let _ = writeln!(out, "{label}");
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// On-disk description of a corpus: class count plus per-view file names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub class_count: usize,
    pub views: Vec<ManifestView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestView {
    pub id: String,
    pub features_csv: String,
    pub labels_csv: String,
}

/// Loads a corpus from a JSON manifest; relative file names resolve against
/// the manifest's directory. All corpus invariants are re-verified.
pub fn load_corpus(manifest_path: &Path) -> Result<MultiViewCorpus> {
    let text = fs::read_to_string(manifest_path).map_err(|source| Error::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| Error::BadManifest {
            path: manifest_path.to_path_buf(),
            message: e.to_string(),
        })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut views = Vec::new();
    for entry in &manifest.views {
        let features = read_matrix_csv(&resolve(base, &entry.features_csv))?;
        let labels = read_labels(&resolve(base, &entry.labels_csv))?;
        views.push(ViewDataset {
            view_id: entry.id.clone(),
            features,
            labels,
        });
    }
    MultiViewCorpus::new(views, manifest.class_count)
}

fn resolve(base: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Writes per-view CSVs plus `manifest.json` into `dir`; returns the
/// manifest path. `load_corpus` on the result reproduces the corpus exactly.
pub fn save_corpus(corpus: &MultiViewCorpus, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for view in corpus.views() {
        let features_csv = format!("{}_features.csv", view.view_id);
        let labels_csv = format!("{}_labels.csv", view.view_id);
        write_matrix_csv(&dir.join(&features_csv), &view.features)?;
        write_labels(&dir.join(&labels_csv), &view.labels)?;
        entries.push(ManifestView {
            id: view.view_id.clone(),
            features_csv,
            labels_csv,
        });
    }
    let manifest = CorpusManifest {
        class_count: corpus.class_count(),
        views: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

/// Generator settings for a desk-scale multi-view corpus.
///
/// Each class is a Gaussian cluster in a shared latent space; each view
/// observes the latent points through its own random linear map plus
/// isotropic noise, so corresponding indices across views derive from the
/// same latent sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub views: usize,
    pub classes: usize,
    pub samples_per_class: usize,
    pub latent_dim: usize,
    pub view_noise: f64,
    pub observation_dim: usize,
    /// When true every view uses the same linear map, making views
    /// identical at `view_noise = 0` (the no-shift degenerate case).
    #[serde(default)]
    pub shared_transform: bool,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views < 2 {
            return Err(Error::InvalidConfig(format!(
                "views must be >= 2, got {}",
                self.views
            )));
        }
        for (name, v) in [
            ("classes", self.classes),
            ("samples_per_class", self.samples_per_class),
            ("latent_dim", self.latent_dim),
            ("observation_dim", self.observation_dim),
        ] {
            if v < 1 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1, got {v}")));
            }
        }
        if !(self.view_noise >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "view_noise must be >= 0, got {}",
                self.view_noise
            )));
        }
        Ok(())
    }
}

const CLASS_SPREAD: f64 = 2.0;
const WITHIN_CLASS_SPREAD: f64 = 0.35;

/// Deterministic synthetic corpus: a pure function of the config.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<MultiViewCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.classes * cfg.samples_per_class;

    let centers: Vec<DVector<f64>> = (0..cfg.classes)
        .map(|_| CLASS_SPREAD * gaussian_vector(&mut rng, cfg.latent_dim))
        .collect();

    let mut latents = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..cfg.samples_per_class {
            latents.push(center + WITHIN_CLASS_SPREAD * gaussian_vector(&mut rng, cfg.latent_dim));
            labels.push(c + 1);
        }
    }

    let scale = 1.0 / (cfg.latent_dim as f64).sqrt();
    let n_maps = if cfg.shared_transform { 1 } else { cfg.views };
    let maps: Vec<DMatrix<f64>> = (0..n_maps)
        .map(|_| scale * gaussian_matrix(&mut rng, cfg.observation_dim, cfg.latent_dim))
        .collect();

    let mut views = Vec::with_capacity(cfg.views);
    for v in 0..cfg.views {
        let map = &maps[if cfg.shared_transform { 0 } else { v }];
        let mut data = DMatrix::zeros(n, cfg.observation_dim);
        for (i, z) in latents.iter().enumerate() {
            let x = map * z + cfg.view_noise * gaussian_vector(&mut rng, cfg.observation_dim);
            data.set_row(i, &x.transpose());
        }
        views.push(ViewDataset {
            view_id: format!("view{v}"),
            features: FeatureMatrix::new(data)?,
            labels: labels.clone(),
        });
    }
    MultiViewCorpus::new(views, cfg.classes)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major fill order so the stream is independent of storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = rng.sample(StandardNormal);
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Protocol splitting
// ---------------------------------------------------------------------------

/// Leave-one-class-out split.
///
/// `feature_learning` indexes every sample not of the held class; those are
/// the only samples representation fitting is allowed to see. `test` indexes
/// the held class, evaluated in the target view. The final classifier trains
/// on the full corpus, held class included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldOutSplit {
    pub held_class: usize,
    pub feature_learning: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn hold_out_class(corpus: &MultiViewCorpus, held_class: usize) -> Result<HoldOutSplit> {
    if held_class < 1 || held_class > corpus.class_count() {
        return Err(Error::InvalidConfig(format!(
            "held class {held_class} outside [1..{}]",
            corpus.class_count()
        )));
    }
    let mut feature_learning = Vec::new();
    let mut test = Vec::new();
    for (i, &label) in corpus.labels().iter().enumerate() {
        if label == held_class {
            test.push(i);
        } else {
            feature_learning.push(i);
        }
    }
    if test.is_empty() {
        return Err(Error::EmptyClass { class: held_class });
    }
    Ok(HoldOutSplit {
        held_class,
        feature_learning,
        test,
    })
}
