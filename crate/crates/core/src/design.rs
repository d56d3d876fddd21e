//! Grouped design construction: polynomial basis expansion, Kronecker-ordered
//! interaction blocks, and the normalize / QR / rescale preprocessing pipeline.
//!
//! Groups are indexed from zero. Interaction blocks are stored for every pair
//! `(j, k)` with `j < k`, in lexicographic order, and the column for main-effect
//! columns `(a, b)` sits at index `a * p_k + b` so that
//! `X_jk (beta_j ⊗ beta_k) = (X_j beta_j) ⊙ (X_k beta_k)` on raw blocks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Relative threshold on `|R_ii| / max |R_ii|` below which a block is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Response and covariates as read from disk or generated.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub covariate_names: Vec<String>,
}

impl RawDataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, covariate_names: Vec<String>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(input(format!("need at least 2 observations, got {n}")));
        }
        if x.nrows() != n {
            return Err(input(format!(
                "response has {n} rows but covariates have {}",
                x.nrows()
            )));
        }
        if covariate_names.len() != x.ncols() {
            return Err(input(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                x.ncols()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(input("dataset contains non-finite values"));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(input(format!("duplicate covariate name '{name}'")));
            }
        }
        Ok(Self {
            y,
            x,
            covariate_names,
        })
    }

    /// Generic names `x1..xS`.
    pub fn with_default_names(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(y, x, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn num_covariates(&self) -> usize {
        self.x.ncols()
    }
}

/// All `(j, k)` with `j < k < groups`, in lexicographic order.
pub fn pair_list(groups: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(groups * groups.saturating_sub(1) / 2);
    for j in 0..groups {
        for k in (j + 1)..groups {
            pairs.push((j, k));
        }
    }
    pairs
}

/// Position of `(j, k)` in [`pair_list`]; the arguments may come in either order.
pub fn pair_index(groups: usize, j: usize, k: usize) -> usize {
    let (a, b) = if j < k { (j, k) } else { (k, j) };
    debug_assert!(b < groups && a != b);
    // pairs before row a: sum_{i<a} (groups - 1 - i)
    a * (2 * groups - a - 1) / 2 + (b - a - 1)
}

/// Polynomial basis `(x, x^2, ..., x^degree)`.
pub fn expand_basis(x: &DVector<f64>, degree: usize) -> Result<DMatrix<f64>> {
    if degree == 0 {
        return Err(input("basis degree must be at least 1"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(input("covariate contains non-finite values"));
    }
    Ok(DMatrix::from_fn(x.len(), degree, |i, d| {
        x[i].powi(d as i32 + 1)
    }))
}

/// Row-wise Kronecker (face-splitting) product of two blocks.
pub fn interaction_block(left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if left.nrows() != right.nrows() {
        return Err(input(format!(
            "row mismatch in interaction block: {} vs {}",
            left.nrows(),
            right.nrows()
        )));
    }
    let (pl, pr) = (left.ncols(), right.ncols());
    let mut out = DMatrix::zeros(left.nrows(), pl * pr);
    for a in 0..pl {
        for b in 0..pr {
            let mut col = out.column_mut(a * pr + b);
            col.copy_from(&left.column(a));
            col.component_mul_assign(&right.column(b));
        }
    }
    Ok(out)
}

/// Per-column centering and scaling applied by normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub center: f64,
    pub scale: f64,
}

/// Everything needed to move between a normalized block `N` and its
/// preprocessed form `X = N R^{-1} diag(1 / rescale)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockTransform {
    pub normalization: Vec<ColumnStats>,
    /// Upper-triangular factor from the thin QR of the normalized block.
    pub r: DMatrix<f64>,
    /// Sample standard deviation of each orthonormal column before rescaling.
    pub rescale: Vec<f64>,
}

impl BlockTransform {
    /// Maps a preprocessed block back to the normalized (pre-QR) columns.
    pub fn recover_normalized(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = block.clone();
        for (k, s) in self.rescale.iter().enumerate() {
            scaled.column_mut(k).scale_mut(*s);
        }
        scaled * &self.r
    }

    /// Coefficients on the normalized columns that reproduce `X beta`.
    pub fn coefficients_to_normalized(&self, beta: &DVector<f64>) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            beta.len(),
            beta.iter().zip(&self.rescale).map(|(b, s)| b / s),
        );
        self.r
            .solve_upper_triangular(&scaled)
            .unwrap_or_else(|| DVector::zeros(beta.len()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessingRecord {
    pub degree: usize,
    pub y_mean: f64,
    pub main: Vec<BlockTransform>,
    pub interactions: Vec<BlockTransform>,
}

/// Main-effect and interaction blocks ready for fitting.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    main_blocks: Vec<DMatrix<f64>>,
    interaction_blocks: Vec<DMatrix<f64>>,
    pairs: Vec<(usize, usize)>,
    group_sizes: Vec<usize>,
    names: Vec<String>,
    record: Option<PreprocessingRecord>,
    y_centered: DVector<f64>,
}

impl GroupedDesign {
    /// Assembles a design from already-prepared blocks without preprocessing.
    pub fn from_blocks(
        main_blocks: Vec<DMatrix<f64>>,
        interaction_blocks: Vec<DMatrix<f64>>,
        y: DVector<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let groups = main_blocks.len();
        if groups == 0 {
            return Err(input("design needs at least one group"));
        }
        let n = y.len();
        let pairs = pair_list(groups);
        if interaction_blocks.len() != pairs.len() {
            return Err(input(format!(
                "expected {} interaction blocks, got {}",
                pairs.len(),
                interaction_blocks.len()
            )));
        }
        if names.len() != groups {
            return Err(input("one name per group required"));
        }
        let group_sizes: Vec<usize> = main_blocks.iter().map(|b| b.ncols()).collect();
        for (j, block) in main_blocks.iter().enumerate() {
            if block.nrows() != n {
                return Err(input(format!(
                    "main block {j} has {} rows, expected {n}",
                    block.nrows()
                )));
            }
        }
        for (idx, &(j, k)) in pairs.iter().enumerate() {
            let block = &interaction_blocks[idx];
            if block.nrows() != n || block.ncols() != group_sizes[j] * group_sizes[k] {
                return Err(input(format!(
                    "interaction block ({j},{k}) has wrong shape"
                )));
            }
        }
        Ok(Self {
            main_blocks,
            interaction_blocks,
            pairs,
            group_sizes,
            names,
            record: None,
            y_centered: y,
        })
    }

    /// Builds interaction blocks directly from the given main blocks (no
    /// normalization), so the Kronecker identity holds exactly.
    pub fn from_main_blocks(main_blocks: Vec<DMatrix<f64>>, y: DVector<f64>) -> Result<Self> {
        let pairs = pair_list(main_blocks.len());
        let interactions = pairs
            .iter()
            .map(|&(j, k)| interaction_block(&main_blocks[j], &main_blocks[k]))
            .collect::<Result<Vec<_>>>()?;
        let names = (1..=main_blocks.len()).map(|j| format!("x{j}")).collect();
        Self::from_blocks(main_blocks, interactions, y, names)
    }

    pub fn n(&self) -> usize {
        self.y_centered.len()
    }

    pub fn num_groups(&self) -> usize {
        self.main_blocks.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn main_block(&self, j: usize) -> &DMatrix<f64> {
        &self.main_blocks[j]
    }

    pub fn main_blocks(&self) -> &[DMatrix<f64>] {
        &self.main_blocks
    }

    /// Block for pair `(j, k)`, `j < k`.
    pub fn interaction(&self, j: usize, k: usize) -> &DMatrix<f64> {
        &self.interaction_blocks[pair_index(self.num_groups(), j, k)]
    }

    /// Block by position in [`GroupedDesign::pairs`].
    pub fn interaction_at(&self, pair: usize) -> &DMatrix<f64> {
        &self.interaction_blocks[pair]
    }

    pub fn interaction_blocks(&self) -> &[DMatrix<f64>] {
        &self.interaction_blocks
    }

    pub fn record(&self) -> Option<&PreprocessingRecord> {
        self.record.as_ref()
    }

    pub fn y_centered(&self) -> &DVector<f64> {
        &self.y_centered
    }

    pub fn pair_name(&self, pair: usize) -> (String, String) {
        let (j, k) = self.pairs[pair];
        (self.names[j].clone(), self.names[k].clone())
    }

    /// `[X_1 .. X_S | X_12 .. X_{S-1,S}]`, the column layout of the stacked coefficients.
    pub fn stacked(&self) -> DMatrix<f64> {
        let total: usize = self.all_block_sizes().iter().sum();
        let mut z = DMatrix::zeros(self.n(), total);
        let mut offset = 0;
        for block in self.main_blocks.iter().chain(&self.interaction_blocks) {
            z.columns_mut(offset, block.ncols()).copy_from(block);
            offset += block.ncols();
        }
        z
    }

    /// Column counts of the main blocks followed by the interaction blocks.
    pub fn all_block_sizes(&self) -> Vec<usize> {
        self.main_blocks
            .iter()
            .chain(&self.interaction_blocks)
            .map(|b| b.ncols())
            .collect()
    }

    /// Restricts every block (and the stored response) to the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> GroupedDesign {
        let take = |m: &DMatrix<f64>| m.select_rows(rows.iter());
        GroupedDesign {
            main_blocks: self.main_blocks.iter().map(take).collect(),
            interaction_blocks: self.interaction_blocks.iter().map(take).collect(),
            pairs: self.pairs.clone(),
            group_sizes: self.group_sizes.clone(),
            names: self.names.clone(),
            record: self.record.clone(),
            y_centered: self.y_centered.select_rows(rows.iter()),
        }
    }
}

/// Centers each column and scales it to unit sample standard deviation.
/// Returns `None` for a constant column.
pub(crate) fn normalize_columns(block: &mut DMatrix<f64>) -> Option<Vec<ColumnStats>> {
    let n = block.nrows() as f64;
    let mut stats = Vec::with_capacity(block.ncols());
    for mut col in block.column_iter_mut() {
        let center = col.sum() / n;
        col.add_scalar_mut(-center);
        let scale = (col.norm_squared() / (n - 1.0)).sqrt();
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        col.unscale_mut(scale);
        stats.push(ColumnStats { center, scale });
    }
    Some(stats)
}

/// Thin QR with a rank check; returns `(Q, R)`.
pub(crate) fn orthogonalize(block: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    if block.ncols() > block.nrows() {
        return None;
    }
    let qr = block.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.ncols()).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0_f64, f64::max);
    if !(largest > 0.0) || diag.iter().any(|d| *d < RANK_TOLERANCE * largest) {
        return None;
    }
    Some((qr.q(), r))
}

fn sample_sd(col: nalgebra::DVectorView<'_, f64>) -> f64 {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn finish_block(
    normalized: DMatrix<f64>,
    normalization: Vec<ColumnStats>,
    label: impl Fn() -> String,
) -> Result<(DMatrix<f64>, BlockTransform)> {
    let (mut q, r) =
        orthogonalize(&normalized).ok_or_else(|| Error::RankDeficient { group: label() })?;
    let mut rescale = Vec::with_capacity(q.ncols());
    for mut col in q.column_iter_mut() {
        let s = sample_sd(col.as_view());
        if !(s > 0.0) {
            return Err(Error::RankDeficient { group: label() });
        }
        col.unscale_mut(s);
        rescale.push(s);
    }
    Ok((
        q,
        BlockTransform {
            normalization,
            r,
            rescale,
        },
    ))
}

/// Builds the grouped design: expand and normalize main effects, form
/// interactions from the normalized mains, normalize them, orthogonalize every
/// block by QR, center the response, then rescale columns to unit variance.
pub fn preprocess(raw: &RawDataset, degree: usize) -> Result<GroupedDesign> {
    if degree == 0 {
        return Err(input("basis degree must be at least 1"));
    }
    let n = raw.n();
    if n <= degree {
        return Err(input(format!(
            "need more than {degree} observations, got {n}"
        )));
    }
    let groups = raw.num_covariates();
    if groups == 0 {
        return Err(input("no covariates"));
    }
    let names = &raw.covariate_names;

    let mut normalized_mains = Vec::with_capacity(groups);
    let mut main_stats = Vec::with_capacity(groups);
    for (j, name) in names.iter().enumerate() {
        let mut block = expand_basis(&raw.x.column(j).into_owned(), degree)?;
        let stats = normalize_columns(&mut block).ok_or_else(|| Error::RankDeficient {
            group: name.clone(),
        })?;
        normalized_mains.push(block);
        main_stats.push(stats);
    }

    let pairs = pair_list(groups);
    let mut interaction_blocks = Vec::with_capacity(pairs.len());
    let mut interaction_transforms = Vec::with_capacity(pairs.len());
    for &(j, k) in &pairs {
        let label = || format!("{}:{}", names[j], names[k]);
        let mut block = interaction_block(&normalized_mains[j], &normalized_mains[k])?;
        let stats =
            normalize_columns(&mut block).ok_or_else(|| Error::RankDeficient { group: label() })?;
        let (x, transform) = finish_block(block, stats, label)?;
        interaction_blocks.push(x);
        interaction_transforms.push(transform);
    }

    let mut main_blocks = Vec::with_capacity(groups);
    let mut main_transforms = Vec::with_capacity(groups);
    for (j, (block, stats)) in normalized_mains.into_iter().zip(main_stats).enumerate() {
        let (x, transform) = finish_block(block, stats, || names[j].clone())?;
        main_blocks.push(x);
        main_transforms.push(transform);
    }

    let y_mean = raw.y.mean();
    let y_centered = raw.y.add_scalar(-y_mean);

    let group_sizes = vec![degree; groups];
    Ok(GroupedDesign {
        main_blocks,
        interaction_blocks,
        pairs,
        group_sizes,
        names: names.clone(),
        record: Some(PreprocessingRecord {
            degree,
            y_mean,
            main: main_transforms,
            interactions: interaction_transforms,
        }),
        y_centered,
    })
}
