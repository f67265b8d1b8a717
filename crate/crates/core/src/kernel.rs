//! Kernels between hierarchies of SPD matrices.
//!
//! Every kernel here is a linear reduction of the `T×T` block of base
//! kernel values between two hierarchies, `K[i][j] = κ(S_i^p, S_j^q)`:
//!
//! | integrator | value                    |
//! |------------|--------------------------|
//! | `k_β`      | `βᵀ K β`                 |
//! | `k_M`      | `Σ_ij M_ij K_ij`         |
//! | MKL        | `Σ_j β_j K_jj`           |
//! | EMK        | `(1/T²) Σ_ij K_ij`       |
//!
//! [`BlockCache`] holds the squared log-Euclidean distances for every pair of
//! samples once, so changing the bandwidth or the weights never recomputes a
//! matrix logarithm.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::representation::SiceHierarchy;
use crate::spd::{matrix_log, squared_distance_of_logs, KernelConfig, SymMatrix};

const SIMPLEX_TOL: f64 = 1e-12;

/// Base kernel values between all level pairs of two hierarchies.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlock {
    pub values: DMatrix<f64>,
    pub p: usize,
    pub q: usize,
}

impl GramBlock {
    pub fn depth(&self) -> usize {
        self.values.nrows()
    }

    pub fn transpose(&self) -> GramBlock {
        GramBlock {
            values: self.values.transpose(),
            p: self.q,
            q: self.p,
        }
    }
}

/// Level weights on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsBeta {
    beta: DVector<f64>,
}

impl WeightsBeta {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if beta.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = beta.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self {
            beta: DVector::from_vec(beta),
        })
    }

    pub fn uniform(t: usize) -> Self {
        Self {
            beta: DVector::from_element(t, 1.0 / t as f64),
        }
    }

    pub fn one_hot(t: usize, level: usize) -> Self {
        let mut beta = DVector::zeros(t);
        beta[level] = 1.0;
        Self { beta }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.beta.iter().copied().collect()
    }
}

/// Level-pair weights: symmetric, nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsM {
    m: DMatrix<f64>,
}

impl WeightsM {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.is_empty() {
            return Err(Error::InvalidArgument("weight matrix must be square and nonempty".into()));
        }
        if m.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = m.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        if (&m - m.transpose()).amax() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument("weight matrix must be symmetric".into()));
        }
        Ok(Self { m })
    }

    pub fn uniform(t: usize) -> Self {
        Self {
            m: DMatrix::from_element(t, t, 1.0 / (t * t) as f64),
        }
    }

    /// `ββᵀ`, the rank-one matrix that reproduces `k_β`.
    pub fn outer(beta: &WeightsBeta) -> Self {
        Self {
            m: &beta.beta * beta.beta.transpose(),
        }
    }

    /// `diag(β)`, which reproduces MKL.
    pub fn diagonal(beta: &WeightsBeta) -> Self {
        Self {
            m: DMatrix::from_diagonal(&beta.beta),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

fn check_depth(block: &GramBlock, t: usize) -> Result<()> {
    if block.depth() != t {
        return Err(Error::DimensionError(format!(
            "block has {} levels but weights have {t}",
            block.depth()
        )));
    }
    Ok(())
}

/// `βᵀ K β`.
pub fn k_beta(block: &GramBlock, w: &WeightsBeta) -> Result<f64> {
    check_depth(block, w.len())?;
    Ok(reduce_beta(&block.values, &w.beta))
}

/// `⟨M, K⟩_F`.
pub fn k_m(block: &GramBlock, w: &WeightsM) -> Result<f64> {
    check_depth(block, w.dim())?;
    Ok(reduce_matrix(&block.values, &w.m))
}

/// `Σ_j β_j K_jj`; ignores every cross-level entry.
pub fn k_mkl(block: &GramBlock, w: &WeightsBeta) -> Result<f64> {
    check_depth(block, w.len())?;
    Ok(reduce_mkl(&block.values, &w.beta))
}

/// Mean of all `T²` entries.
pub fn k_emk(block: &GramBlock) -> f64 {
    reduce_emk(&block.values)
}

fn reduce_beta(values: &DMatrix<f64>, beta: &DVector<f64>) -> f64 {
    let t = beta.len();
    let mut acc = 0.0;
    for i in 0..t {
        let mut row = 0.0;
        for j in 0..t {
            row += values[(i, j)] * beta[j];
        }
        acc += beta[i] * row;
    }
    acc
}

fn reduce_matrix(values: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let t = m.nrows();
    let mut acc = 0.0;
    for i in 0..t {
        for j in 0..t {
            acc += m[(i, j)] * values[(i, j)];
        }
    }
    acc
}

fn reduce_mkl(values: &DMatrix<f64>, beta: &DVector<f64>) -> f64 {
    (0..beta.len()).map(|j| beta[j] * values[(j, j)]).sum()
}

fn reduce_emk(values: &DMatrix<f64>) -> f64 {
    let t = values.nrows();
    values.iter().sum::<f64>() / (t * t) as f64
}

/// Reduction applied to every Gram block.
///
/// The variants carry raw weights so the objective can also be evaluated
/// off the simplex (finite differences). [`Integrator::beta`],
/// [`Integrator::matrix`] and [`Integrator::mkl`] build them from validated
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrator {
    Beta(DVector<f64>),
    Matrix(DMatrix<f64>),
    Mkl(DVector<f64>),
    Emk,
}

impl Integrator {
    pub fn beta(w: &WeightsBeta) -> Self {
        Integrator::Beta(w.beta.clone())
    }

    pub fn matrix(w: &WeightsM) -> Self {
        Integrator::Matrix(w.m.clone())
    }

    pub fn mkl(w: &WeightsBeta) -> Self {
        Integrator::Mkl(w.beta.clone())
    }

    /// Number of levels the weights expect, `None` for EMK.
    pub fn depth(&self) -> Option<usize> {
        match self {
            Integrator::Beta(b) | Integrator::Mkl(b) => Some(b.len()),
            Integrator::Matrix(m) => Some(m.nrows()),
            Integrator::Emk => None,
        }
    }

    pub fn reduce(&self, values: &DMatrix<f64>) -> f64 {
        match self {
            Integrator::Beta(b) => reduce_beta(values, b),
            Integrator::Matrix(m) => reduce_matrix(values, m),
            Integrator::Mkl(b) => reduce_mkl(values, b),
            Integrator::Emk => reduce_emk(values),
        }
    }
}

/// Log-domain images of every level of a hierarchy.
#[derive(Debug, Clone)]
pub struct LogHierarchy {
    pub sample_id: String,
    pub logs: Vec<SymMatrix>,
}

impl LogHierarchy {
    pub fn new(h: &SiceHierarchy) -> Result<Self> {
        let logs = h
            .levels()
            .iter()
            .map(matrix_log)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.for_sample(&h.sample_id))?;
        Ok(Self {
            sample_id: h.sample_id.clone(),
            logs,
        })
    }

    pub fn depth(&self) -> usize {
        self.logs.len()
    }

    pub fn dim(&self) -> usize {
        self.logs[0].dim()
    }
}

fn squared_distance_block(p: &LogHierarchy, q: &LogHierarchy) -> Vec<f64> {
    let t = p.depth();
    let mut out = Vec::with_capacity(t * t);
    for a in &p.logs {
        for b in &q.logs {
            out.push(squared_distance_of_logs(a, b));
        }
    }
    out
}

/// `T×T` block of `κ(S_i^p, S_j^q)` computed directly from the matrices.
pub fn gram_block(p: &SiceHierarchy, q: &SiceHierarchy, cfg: KernelConfig) -> Result<GramBlock> {
    if p.depth() != q.depth() || p.dim() != q.dim() {
        return Err(Error::DimensionError(format!(
            "hierarchies have shapes {}x{}d and {}x{}d",
            p.depth(),
            p.dim(),
            q.depth(),
            q.dim()
        )));
    }
    let lp = LogHierarchy::new(p)?;
    let lq = LogHierarchy::new(q)?;
    let t = p.depth();
    let sq = squared_distance_block(&lp, &lq);
    Ok(GramBlock {
        values: DMatrix::from_fn(t, t, |i, j| cfg.eval_squared(sq[i * t + j])),
        p: 0,
        q: 1,
    })
}

/// Index of pair `(i, j)`, `i <= j`, in the fixed upper-triangular order
/// `(0,0), (0,1), …, (0,N−1), (1,1), …`.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * (2 * n - i + 1) / 2 + (j - i)
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push((i, j));
        }
    }
    out
}

fn check_uniform_shape(logs: &[LogHierarchy]) -> Result<(usize, usize)> {
    let first = logs
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    let (t, d) = (first.depth(), first.dim());
    for h in logs {
        if h.depth() != t || h.dim() != d {
            return Err(Error::DimensionError(format!(
                "sample {} has {} levels of dimension {}, expected {t} of dimension {d}",
                h.sample_id,
                h.depth(),
                h.dim()
            )));
        }
    }
    Ok((t, d))
}

/// Squared log-Euclidean distances between every pair of samples at every
/// pair of levels.
#[derive(Debug, Clone)]
pub struct BlockCache {
    n: usize,
    t: usize,
    /// `N(N+1)/2` blocks of `T²` values in [`pair_index`] order, row-major
    /// within a block.
    squared: Vec<f64>,
}

impl BlockCache {
    pub fn build(hierarchies: &[SiceHierarchy]) -> Result<Self> {
        let logs = hierarchies
            .par_iter()
            .map(LogHierarchy::new)
            .collect::<Result<Vec<_>>>()?;
        Self::from_logs(&logs)
    }

    pub fn from_logs(logs: &[LogHierarchy]) -> Result<Self> {
        let (t, _) = check_uniform_shape(logs)?;
        let n = logs.len();
        let blocks: Vec<Vec<f64>> = upper_pairs(n)
            .par_iter()
            .map(|&(i, j)| squared_distance_block(&logs[i], &logs[j]))
            .collect();
        Ok(Self {
            n,
            t,
            squared: blocks.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn depth(&self) -> usize {
        self.t
    }

    fn block_slice(&self, i: usize, j: usize) -> &[f64] {
        let k = pair_index(self.n, i, j);
        let tt = self.t * self.t;
        &self.squared[k * tt..(k + 1) * tt]
    }

    /// Squared distances between distinct samples at equal levels, either
    /// one level or all of them.
    pub fn same_level_squared_distances(&self, level: Option<usize>) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let b = self.block_slice(i, j);
                match level {
                    Some(l) => out.push(b[l * self.t + l]),
                    None => out.extend((0..self.t).map(|l| b[l * self.t + l])),
                }
            }
        }
        out
    }

    /// Applies the bandwidth to every stored distance.
    pub fn kernel_blocks(&self, cfg: KernelConfig) -> KernelBlocks {
        KernelBlocks {
            n: self.n,
            t: self.t,
            values: self.squared.iter().map(|d| cfg.eval_squared(*d)).collect(),
        }
    }
}

/// Base kernel blocks for all sample pairs `i <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlocks {
    n: usize,
    t: usize,
    values: Vec<f64>,
}

impl KernelBlocks {
    /// Wraps raw block data laid out as in [`BlockCache`].
    pub fn from_raw(n: usize, t: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * (n + 1) / 2 * t * t {
            return Err(Error::DimensionError(format!(
                "{} values cannot hold {n} samples with {t} levels",
                values.len()
            )));
        }
        Ok(Self { n, t, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn depth(&self) -> usize {
        self.t
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    /// Block `K(𝕊^i, 𝕊^j)`, transposing the stored block when `i > j`.
    pub fn block(&self, i: usize, j: usize) -> GramBlock {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let k = pair_index(self.n, a, b);
        let tt = self.t * self.t;
        let slice = &self.values[k * tt..(k + 1) * tt];
        let stored = DMatrix::from_row_slice(self.t, self.t, slice);
        let values = if i <= j { stored } else { stored.transpose() };
        GramBlock { values, p: i, q: j }
    }

    fn reduce_pair(&self, i: usize, j: usize, integ: &Integrator) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let k = pair_index(self.n, a, b);
        let tt = self.t * self.t;
        let block = DMatrix::from_row_slice(self.t, self.t, &self.values[k * tt..(k + 1) * tt]);
        integ.reduce(&block)
    }

    /// `N×N` kernel matrix over the given sample subset.
    ///
    /// Entry `(a, b)` with `a <= b` is reduced from the stored block and
    /// mirrored, so the result is exactly symmetric.
    pub fn gram(&self, indices: &[usize], integ: &Integrator) -> Result<DMatrix<f64>> {
        if let Some(t) = integ.depth() {
            if t != self.t {
                return Err(Error::DimensionError(format!(
                    "weights have {t} levels, blocks have {}",
                    self.t
                )));
            }
        }
        let n = indices.len();
        let mut g = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let (i, j) = (indices[a], indices[b]);
                // reduce the block in stored orientation; k_M with a
                // nonsymmetric M would otherwise differ between (i,j) and (j,i)
                let v = self.reduce_pair(i.min(j), i.max(j), integ);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        Ok(g)
    }

    pub fn full_gram(&self, integ: &Integrator) -> Result<DMatrix<f64>> {
        let idx: Vec<usize> = (0..self.n).collect();
        self.gram(&idx, integ)
    }
}

/// Kernel matrix over a dataset of hierarchies, computed from scratch.
pub fn hierarchy_gram(
    dataset: &[SiceHierarchy],
    integ: &Integrator,
    cfg: KernelConfig,
) -> Result<(DMatrix<f64>, KernelBlocks)> {
    let blocks = BlockCache::build(dataset)?.kernel_blocks(cfg);
    let g = blocks.full_gram(integ)?;
    Ok((g, blocks))
}

/// Blocks between one new sample and a set of reference samples, oriented
/// as `K(reference, sample)`.
pub fn cross_blocks(
    reference: &[LogHierarchy],
    sample: &LogHierarchy,
    cfg: KernelConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let t = sample.depth();
    for r in reference {
        if r.depth() != t || r.dim() != sample.dim() {
            return Err(Error::DimensionError(format!(
                "sample {} does not match reference {}",
                sample.sample_id, r.sample_id
            )));
        }
    }
    Ok(reference
        .iter()
        .map(|r| {
            let sq = squared_distance_block(r, sample);
            DMatrix::from_fn(t, t, |i, j| cfg.eval_squared(sq[i * t + j]))
        })
        .collect())
}
