//! Transferable dictionary learning.
//!
//! The per-view feature matrices are stacked vertically and a single
//! dictionary is trained on the stack with K-SVD, so the rows decompose into
//! per-view dictionary blocks while every corresponding sample across views
//! shares one sparse code. Encoding against an individual view block then
//! maps unseen samples of that view into the shared code space.
//!
//! Orthogonal matching pursuit does all the coding: greedy atom selection by
//! maximal absolute correlation with the residual (lowest index on ties),
//! least-squares refit on the selected support each step.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms whose norm falls below this are unusable for selection.
const ATOM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DictConfig {
    /// Dictionary size K.
    pub atoms: usize,
    /// Sparsity factor: maximum atoms per code.
    pub sparsity: usize,
    /// Maximum K-SVD sweeps.
    pub ksvd_iters: usize,
    pub seed: u64,
    /// Residual norm at which pursuit stops early.
    pub omp_tol: f64,
}

impl Default for DictConfig {
    fn default() -> Self {
        Self {
            atoms: 1000,
            sparsity: 50,
            ksvd_iters: 30,
            seed: 0,
            omp_tol: 0.0,
        }
    }
}

impl DictConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sparsity < 1 {
            return Err(Error::InvalidConfig("sparsity must be >= 1".into()));
        }
        if self.sparsity > self.atoms {
            return Err(Error::SparsityExceedsAtoms {
                sparsity: self.sparsity,
                atoms: self.atoms,
            });
        }
        if self.ksvd_iters < 1 {
            return Err(Error::InvalidConfig("ksvd_iters must be >= 1".into()));
        }
        if !(self.omp_tol >= 0.0) {
            return Err(Error::InvalidConfig("omp_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// `m x K` atom matrix. Trained stacked dictionaries have unit-norm columns;
/// sliced view blocks are used exactly as sliced and may contain weak atoms,
/// which pursuit skips.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        let usable = (0..atoms.ncols()).any(|j| atoms.column(j).norm() > ATOM_EPS);
        if !usable {
            return Err(Error::ZeroDictionary);
        }
        Ok(Self { atoms })
    }

    pub fn row_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    /// True when every column has unit norm to `1e-10` (trained stacked
    /// dictionaries must satisfy this).
    pub fn has_unit_atoms(&self) -> bool {
        (0..self.n_atoms()).all(|j| (self.atoms.column(j).norm() - 1.0).abs() <= 1e-10)
    }
}

/// `K x N` code matrix with at most `sparsity` nonzeros per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes {
    codes: DMatrix<f64>,
    sparsity: usize,
}

impl SparseCodes {
    pub fn new(codes: DMatrix<f64>, sparsity: usize) -> Result<Self> {
        for c in 0..codes.ncols() {
            let nnz = codes.column(c).iter().filter(|v| **v != 0.0).count();
            if nnz > sparsity {
                return Err(Error::InvalidConfig(format!(
                    "code column {c} has {nnz} nonzeros, limit {sparsity}"
                )));
            }
            if codes.column(c).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: 0, col: c });
            }
        }
        Ok(Self { codes, sparsity })
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.codes
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn support(&self, column: usize) -> Vec<usize> {
        self.codes
            .column(column)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stacked multi-view dictionary: the trained stack plus its per-view row
/// blocks, ordered sources first, target last.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferDictionary {
    pub stacked: Dictionary,
    pub view_blocks: Vec<Dictionary>,
}

impl TransferDictionary {
    /// The blocks re-concatenate to the stack bit-exactly by construction;
    /// this re-checks it.
    pub fn blocks_match_stack(&self) -> bool {
        let mut row = 0;
        for block in &self.view_blocks {
            let rows = block.row_dim();
            if self.stacked.as_matrix().rows(row, rows) != *block.as_matrix() {
                return false;
            }
            row += rows;
        }
        row == self.stacked.row_dim()
    }
}

// ---------------------------------------------------------------------------
// Orthogonal matching pursuit
// ---------------------------------------------------------------------------

/// Greedy pursuit of one column. Selection normalizes correlations by atom
/// norm so sliced (non-unit) blocks behave sensibly; coefficients come from
/// a least-squares refit on the support, so atom scale is absorbed.
pub fn omp(dict: &Dictionary, y: &DVector<f64>, sparsity: usize, tol: f64) -> Result<DVector<f64>> {
    let d = dict.as_matrix();
    if y.len() != d.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "signal has length {}, dictionary rows {}",
            y.len(),
            d.nrows()
        )));
    }
    if sparsity < 1 {
        return Err(Error::InvalidConfig("sparsity must be >= 1".into()));
    }
    let k = d.ncols();
    let norms: Vec<f64> = (0..k).map(|j| d.column(j).norm()).collect();
    if norms.iter().all(|&n| n <= ATOM_EPS) {
        return Err(Error::ZeroDictionary);
    }

    let mut code = DVector::zeros(k);
    let y_norm = y.norm();
    if y_norm == 0.0 {
        return Ok(code);
    }

    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut in_support = vec![false; k];
    let mut residual = y.clone();
    let mut coeffs = DVector::zeros(0);

    while support.len() < sparsity {
        if residual.norm() <= tol.max(1e-13 * y_norm) {
            break;
        }
        let correlations = d.transpose() * &residual;
        let mut best = None;
        let mut best_score = 0.0;
        for j in 0..k {
            if in_support[j] || norms[j] <= ATOM_EPS {
                continue;
            }
            let score = correlations[j].abs() / norms[j];
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        if best_score <= 1e-13 * y_norm {
            break;
        }
        support.push(j);
        in_support[j] = true;
        coeffs = least_squares_on_support(d, &support, y)?;
        residual = y - reconstruct(d, &support, &coeffs);
    }

    for (pos, &j) in support.iter().enumerate() {
        code[j] = coeffs[pos];
    }
    Ok(code)
}

fn reconstruct(d: &DMatrix<f64>, support: &[usize], coeffs: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(d.nrows());
    for (pos, &j) in support.iter().enumerate() {
        out.axpy(coeffs[pos], &d.column(j).into_owned(), 1.0);
    }
    out
}

/// Normal-equation solve on the selected atoms, with an SVD fallback for
/// nearly dependent supports.
fn least_squares_on_support(
    d: &DMatrix<f64>,
    support: &[usize],
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = support.len();
    let mut sub = DMatrix::zeros(d.nrows(), s);
    for (pos, &j) in support.iter().enumerate() {
        sub.set_column(pos, &d.column(j));
    }
    let gram = sub.transpose() * &sub;
    let rhs = sub.transpose() * y;
    if let Some(chol) = nalgebra::Cholesky::new(gram) {
        return Ok(chol.solve(&rhs));
    }
    let svd = nalgebra::SVD::new(sub, true, true);
    svd.solve(y, 1e-12)
        .map_err(|_| Error::SingularSystem)
}

// ---------------------------------------------------------------------------
// K-SVD
// ---------------------------------------------------------------------------

/// Output of a K-SVD fit, with the squared-Frobenius objective after every
/// sweep (non-increasing by construction).
#[derive(Debug, Clone)]
pub struct KsvdFit {
    pub dictionary: Dictionary,
    pub codes: SparseCodes,
    pub objective_trace: Vec<f64>,
}

/// Alternates pursuit coding with per-atom rank-one updates.
///
/// Deterministic for a fixed seed. A recoded column is kept only when it
/// does not worsen that column's residual, which makes the objective
/// non-increasing sweep over sweep. Dead atoms are replaced by the currently
/// worst-reconstructed data column.
pub fn ksvd(y: &DMatrix<f64>, cfg: &DictConfig) -> Result<KsvdFit> {
    cfg.validate()?;
    let (m, n) = (y.nrows(), y.ncols());
    if m == 0 || n == 0 {
        return Err(Error::EmptyMatrix);
    }
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::AllZeroInput);
    }
    if n < cfg.sparsity {
        return Err(Error::InvalidConfig(format!(
            "need at least {} training columns, got {n}",
            cfg.sparsity
        )));
    }

    let mut dict = init_dictionary(y, cfg);
    let mut codes = DMatrix::<f64>::zeros(cfg.atoms, n);
    let mut objectives = Vec::with_capacity(cfg.ksvd_iters);
    let mut prev_objective = y.norm_squared();

    for _ in 0..cfg.ksvd_iters {
        // Coding pass with the per-column keep-if-better guard.
        let dict_view = Dictionary::new(dict.clone())?;
        for c in 0..n {
            let target = y.column(c).into_owned();
            let candidate = omp(&dict_view, &target, cfg.sparsity, cfg.omp_tol)?;
            let old_res = (&target - &dict * codes.column(c)).norm_squared();
            let new_res = (&target - &dict * &candidate).norm_squared();
            if new_res <= old_res {
                codes.set_column(c, &candidate);
            }
        }

        // Atom updates, sequential in fixed order.
        for j in 0..cfg.atoms {
            let users: Vec<usize> = (0..n).filter(|&c| codes[(j, c)] != 0.0).collect();
            if users.is_empty() {
                replace_dead_atom(y, &dict.clone(), &codes, &mut dict, j);
                continue;
            }
            // Residual restricted to users, with atom j's contribution
            // added back.
            let mut e = DMatrix::zeros(m, users.len());
            for (pos, &c) in users.iter().enumerate() {
                let mut col = y.column(c).into_owned();
                for r in 0..cfg.atoms {
                    let w = codes[(r, c)];
                    if w != 0.0 && r != j {
                        col.axpy(-w, &dict.column(r).into_owned(), 1.0);
                    }
                }
                e.set_column(pos, &col);
            }
            let svd = nalgebra::SVD::new(e, true, true);
            let u = svd.u.as_ref().expect("svd with u");
            let v_t = svd.v_t.as_ref().expect("svd with v_t");
            let sigma = svd.singular_values[0];
            let mut atom = u.column(0).into_owned();
            let mut row = v_t.row(0).transpose() * sigma;
            if let Some(lead) = atom.iter().find(|v| v.abs() > ATOM_EPS) {
                if *lead < 0.0 {
                    atom.neg_mut();
                    row.neg_mut();
                }
            }
            dict.set_column(j, &atom);
            for (pos, &c) in users.iter().enumerate() {
                codes[(j, c)] = row[pos];
            }
        }

        let objective = (y - &dict * &codes).norm_squared();
        debug_assert!(
            objective <= prev_objective * (1.0 + 1e-12) + 1e-12,
            "objective increased: {prev_objective} -> {objective}"
        );
        objectives.push(objective);
        let decrease = (prev_objective - objective).max(0.0);
        prev_objective = objective;
        if decrease < 1e-6 * prev_objective.max(f64::MIN_POSITIVE) {
            break;
        }
    }

    Ok(KsvdFit {
        dictionary: Dictionary::new(dict)?,
        codes: SparseCodes::new(codes, cfg.sparsity)?,
        objective_trace: objectives,
    })
}

/// Seeded sample of distinct nonzero data columns, normalized; random unit
/// vectors fill in if the data has too few distinct columns.
fn init_dictionary(y: &DMatrix<f64>, cfg: &DictConfig) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nonzero: Vec<usize> = (0..y.ncols())
        .filter(|&c| y.column(c).norm() > ATOM_EPS)
        .collect();
    let mut picks = nonzero;
    picks.shuffle(&mut rng);
    picks.truncate(cfg.atoms);

    let mut dict = DMatrix::zeros(y.nrows(), cfg.atoms);
    for (j, &c) in picks.iter().enumerate() {
        let col = y.column(c);
        dict.set_column(j, &(col / col.norm()));
    }
    for j in picks.len()..cfg.atoms {
        use rand::Rng;
        let mut col = DVector::from_fn(y.nrows(), |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = col.norm();
        if norm > ATOM_EPS {
            col /= norm;
        } else {
            col[0] = 1.0;
        }
        dict.set_column(j, &col);
    }
    dict
}

fn replace_dead_atom(
    y: &DMatrix<f64>,
    dict_snapshot: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    dict: &mut DMatrix<f64>,
    j: usize,
) {
    let mut worst = None;
    let mut worst_res = 0.0;
    for c in 0..y.ncols() {
        let res = (y.column(c) - dict_snapshot * codes.column(c)).norm_squared();
        if res > worst_res && y.column(c).norm() > ATOM_EPS {
            worst_res = res;
            worst = Some(c);
        }
    }
    if let Some(c) = worst {
        let col = y.column(c);
        dict.set_column(j, &(col / col.norm()));
    }
}

// ---------------------------------------------------------------------------
// Stacked transfer dictionaries
// ---------------------------------------------------------------------------

/// Trains the stacked dictionary over `p + 1` view matrices (sources first,
/// target last) and slices it into per-view blocks sharing one code matrix.
pub fn learn_transfer_dictionaries(
    view_features: &[DMatrix<f64>],
    cfg: &DictConfig,
) -> Result<(TransferDictionary, SparseCodes)> {
    cfg.validate()?;
    if view_features.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least one source view and one target view".into(),
        ));
    }
    let n = view_features[0].ncols();
    let rows = view_features[0].nrows();
    for (i, v) in view_features.iter().enumerate() {
        if v.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "view {i} has {} samples, expected {n}",
                v.ncols()
            )));
        }
        if v.nrows() != rows {
            return Err(Error::DimensionMismatch(format!(
                "view {i} has {} feature rows, expected {rows}",
                v.nrows()
            )));
        }
    }

    let mut stacked = DMatrix::zeros(rows * view_features.len(), n);
    for (i, v) in view_features.iter().enumerate() {
        stacked.rows_mut(i * rows, rows).copy_from(v);
    }
    let fit = ksvd(&stacked, cfg)?;
    let blocks = (0..view_features.len())
        .map(|i| Dictionary::new(fit.dictionary.as_matrix().rows(i * rows, rows).into()))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        TransferDictionary {
            stacked: fit.dictionary,
            view_blocks: blocks,
        },
        fit.codes,
    ))
}

/// Codes every column of one view against that view's dictionary block,
/// exactly as sliced.
pub fn encode_view(
    block: &Dictionary,
    y_view: &DMatrix<f64>,
    cfg: &DictConfig,
) -> Result<SparseCodes> {
    cfg.validate()?;
    if y_view.nrows() != block.row_dim() {
        return Err(Error::DimensionMismatch(format!(
            "view rows {} do not match block rows {}",
            y_view.nrows(),
            block.row_dim()
        )));
    }
    let mut codes = DMatrix::zeros(block.n_atoms(), y_view.ncols());
    for c in 0..y_view.ncols() {
        let col = omp(block, &y_view.column(c).into_owned(), cfg.sparsity, cfg.omp_tol)?;
        codes.set_column(c, &col);
    }
    SparseCodes::new(codes, cfg.sparsity)
}
