//! K-fold cross-validation over a tuning grid, the min and one-standard-error
//! rules, and extraction of selected terms.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    group_lambda_max, group_lasso_gram, lasso_gram, lasso_lambda_max, split_blocks,
};
use crate::design::GroupedDesign;
use crate::error::{input, Result};
use crate::penalty::PenaltyConfig;
use crate::solver::{fit_problem, FitOptions, ModelState, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Higlasso,
    Lasso,
    GroupLasso,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Higlasso => "higlasso",
            Method::Lasso => "lasso",
            Method::GroupLasso => "group-lasso",
        }
    }

    /// Rule used when none is requested: min for HiGLASSO, one-se for the baselines.
    pub fn default_rule(self) -> Rule {
        match self {
            Method::Higlasso => Rule::Min,
            _ => Rule::OneSe,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "min")]
    Min,
    #[serde(rename = "1se")]
    OneSe,
}

impl FromStr for Rule {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Rule::Min),
            "1se" | "one-se" => Ok(Rule::OneSe),
            other => Err(input(format!(
                "unknown rule '{other}' (expected min or 1se)"
            ))),
        }
    }
}

/// Candidate penalties and the cross-validation protocol.
///
/// The baselines use only `lambda1_values`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
    pub folds: usize,
    pub rule: Rule,
}

/// `size` log-spaced values from `max` down to `ratio * max`.
pub fn log_spaced(max: f64, size: usize, ratio: f64) -> Vec<f64> {
    if size == 1 {
        return vec![max];
    }
    let (hi, lo) = (max.ln(), (max * ratio).ln());
    (0..size)
        .map(|i| (hi + (lo - hi) * i as f64 / (size - 1) as f64).exp())
        .collect()
}

impl TuningGrid {
    pub fn validate(&self, method: Method, n: usize) -> Result<()> {
        let check = |values: &[f64], label: &str| -> Result<()> {
            if values.is_empty() {
                return Err(input(format!("{label} grid is empty")));
            }
            if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(input(format!(
                    "{label} grid must be finite and non-negative"
                )));
            }
            if values.windows(2).any(|w| w[1] >= w[0]) {
                return Err(input(format!("{label} grid must be strictly descending")));
            }
            Ok(())
        };
        check(&self.lambda1_values, "lambda1")?;
        if method == Method::Higlasso {
            check(&self.lambda2_values, "lambda2")?;
        }
        if self.folds < 2 {
            return Err(input("need at least two folds"));
        }
        if self.folds > n {
            return Err(input(format!(
                "{} folds requested for {n} observations",
                self.folds
            )));
        }
        Ok(())
    }

    /// The default path: `size` log-spaced values per axis from the
    /// all-zero penalty down to `1e-3` of it.
    pub fn default_for(
        method: Method,
        design: &GroupedDesign,
        size: usize,
        folds: usize,
        rule: Rule,
    ) -> Result<Self> {
        if size == 0 {
            return Err(input("grid size must be positive"));
        }
        let problem = Problem::new(design, design.y_centered())?;
        let (max1, max2) = lambda_max(method, &problem);
        let positive = |m: f64| if m > 0.0 { m } else { 1.0 };
        Ok(Self {
            lambda1_values: log_spaced(positive(max1), size, 1e-3),
            lambda2_values: if method == Method::Higlasso {
                log_spaced(positive(max2), size, 1e-3)
            } else {
                Vec::new()
            },
            folds,
            rule,
        })
    }

    /// Grid points in evaluation order: lambda1 outer, lambda2 inner, both descending.
    pub fn points(&self, method: Method) -> Vec<(f64, f64)> {
        match method {
            Method::Higlasso => self
                .lambda1_values
                .iter()
                .flat_map(|&l1| self.lambda2_values.iter().map(move |&l2| (l1, l2)))
                .collect(),
            _ => self.lambda1_values.iter().map(|&l| (l, 0.0)).collect(),
        }
    }
}

/// `(lambda1_max, lambda2_max)` for a method on the given statistics.
///
/// HiGLASSO: `max_j ||X_j'y||` over main blocks and over interaction blocks.
/// LASSO: `max |z'y|` over all columns. Group LASSO: `max ||X_g'y||` over all blocks.
pub fn lambda_max(method: Method, problem: &Problem) -> (f64, f64) {
    let zty = problem.zty();
    let mains: usize = problem.group_sizes().iter().sum();
    match method {
        Method::Higlasso => {
            let main = group_lambda_max(&zty.rows(0, mains).into_owned(), problem.group_sizes());
            let sizes: Vec<usize> = (0..problem.pairs().len())
                .map(|p| problem.pair_len(p))
                .collect();
            let pairs =
                group_lambda_max(&zty.rows(mains, problem.dim() - mains).into_owned(), &sizes);
            (main, pairs)
        }
        Method::Lasso => (lasso_lambda_max(zty), 0.0),
        Method::GroupLasso => (group_lambda_max(zty, &all_sizes(problem)), 0.0),
    }
}

fn all_sizes(problem: &Problem) -> Vec<usize> {
    let mut sizes = problem.group_sizes().to_vec();
    sizes.extend((0..problem.pairs().len()).map(|p| problem.pair_len(p)));
    sizes
}

/// Deterministic fold labels: a seeded shuffle, then position modulo `folds`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (position, &row) in order.iter().enumerate() {
        labels[row] = position % folds;
    }
    labels
}

/// Mean held-out squared error and its standard error at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mean_error: f64,
    pub standard_error: f64,
}

/// Index of the chosen grid point.
///
/// `Min` takes the smallest mean error (first in grid order on ties). `OneSe`
/// takes, among points with mean error within one standard error of the
/// minimum, the largest `lambda1` and then the largest `lambda2`.
pub fn apply_rule(table: &[CvPoint], rule: Rule) -> Result<usize> {
    if table.is_empty() {
        return Err(input("empty cross-validation table"));
    }
    let mut best = 0;
    for (i, point) in table.iter().enumerate() {
        if point.mean_error < table[best].mean_error {
            best = i;
        }
    }
    if rule == Rule::Min {
        return Ok(best);
    }
    let threshold = table[best].mean_error + table[best].standard_error;
    let mut chosen = best;
    for (i, point) in table.iter().enumerate() {
        if point.mean_error > threshold {
            continue;
        }
        let current = &table[chosen];
        let larger = point.lambda1 > current.lambda1
            || (point.lambda1 == current.lambda1 && point.lambda2 > current.lambda2);
        if larger {
            chosen = i;
        }
    }
    Ok(chosen)
}

/// A fitted model of any method.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedModel {
    Higlasso(ModelState),
    /// Stacked coefficients split into main blocks followed by interaction blocks.
    Baseline {
        method: Method,
        blocks: Vec<DVector<f64>>,
    },
}

impl FittedModel {
    /// Stacked coefficient vector in the `[mains | interactions]` column layout.
    pub fn theta(&self) -> DVector<f64> {
        let blocks: Vec<&DVector<f64>> = match self {
            FittedModel::Higlasso(state) => state.beta().iter().chain(state.gamma()).collect(),
            FittedModel::Baseline { blocks, .. } => blocks.iter().collect(),
        };
        let total = blocks.iter().map(|b| b.len()).sum();
        let mut theta = DVector::zeros(total);
        let mut offset = 0;
        for b in blocks {
            theta.rows_mut(offset, b.len()).copy_from(b);
            offset += b.len();
        }
        theta
    }
}

/// Selected mains and interaction pairs (0-based group indices).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub mains: BTreeSet<usize>,
    pub interactions: BTreeSet<(usize, usize)>,
}

/// Group `j` is selected iff `||beta_j|| > tau`; a pair iff `||gamma_jk|| > tau`.
pub fn select_from_state(state: &ModelState, tau: f64) -> Selection {
    Selection {
        mains: (0..state.num_groups())
            .filter(|&j| state.beta()[j].norm() > tau)
            .collect(),
        interactions: state
            .pairs()
            .iter()
            .zip(state.gamma())
            .filter(|(_, g)| g.norm() > tau)
            .map(|(&p, _)| p)
            .collect(),
    }
}

/// Selection for baseline coefficient blocks (`groups` main blocks then one block per pair).
/// LASSO selects a term when any of its coefficients exceeds `tau` in
/// magnitude; group LASSO when the block norm does.
pub fn select_from_blocks(
    method: Method,
    blocks: &[DVector<f64>],
    groups: usize,
    pairs: &[(usize, usize)],
    tau: f64,
) -> Selection {
    let active = |b: &DVector<f64>| match method {
        Method::Lasso => b.iter().any(|v| v.abs() > tau),
        _ => b.norm() > tau,
    };
    Selection {
        mains: (0..groups).filter(|&j| active(&blocks[j])).collect(),
        interactions: pairs
            .iter()
            .enumerate()
            .filter(|(idx, _)| active(&blocks[groups + idx]))
            .map(|(_, &p)| p)
            .collect(),
    }
}

pub fn select_terms(
    model: &FittedModel,
    groups: usize,
    pairs: &[(usize, usize)],
    tau: f64,
) -> Selection {
    match model {
        FittedModel::Higlasso(state) => select_from_state(state, tau),
        FittedModel::Baseline { method, blocks } => {
            select_from_blocks(*method, blocks, groups, pairs, tau)
        }
    }
}

/// Result of cross-validation and the full-data refit.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub method: Method,
    pub rule: Rule,
    pub chosen_lambdas: (f64, f64),
    pub selection: Selection,
    pub cv_table: Vec<CvPoint>,
    pub model: FittedModel,
}

/// Settings shared by every fit inside cross-validation.
#[derive(Debug, Clone, Default)]
pub struct CvSettings {
    pub penalty: PenaltyConfig,
    pub fit: FitOptions,
}

/// Fits one method at one grid point on precomputed statistics.
/// `warm` is only used by the baselines.
pub fn fit_method(
    method: Method,
    problem: &Problem,
    lambdas: (f64, f64),
    settings: &CvSettings,
    warm: Option<&DVector<f64>>,
) -> Result<FittedModel> {
    match method {
        Method::Higlasso => {
            let config = PenaltyConfig {
                lambda1: lambdas.0,
                lambda2: lambdas.1,
                ..settings.penalty
            };
            Ok(FittedModel::Higlasso(fit_problem(
                problem,
                &config,
                &settings.fit,
            )?))
        }
        Method::Lasso => {
            let b = lasso_gram(problem.gram(), problem.zty(), lambdas.0, warm);
            Ok(FittedModel::Baseline {
                method,
                blocks: split_blocks(&b, &all_sizes(problem)),
            })
        }
        Method::GroupLasso => {
            let b = group_lasso_gram(
                problem.gram(),
                problem.zty(),
                &all_sizes(problem),
                lambdas.0,
                warm,
            );
            Ok(FittedModel::Baseline {
                method,
                blocks: split_blocks(&b, &all_sizes(problem)),
            })
        }
    }
}

fn fold_errors(
    method: Method,
    design: &GroupedDesign,
    y: &DVector<f64>,
    labels: &[usize],
    fold: usize,
    points: &[(f64, f64)],
    settings: &CvSettings,
) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != fold).collect();
    let test: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == fold).collect();
    let train_design = design.select_rows(&train);
    let y_train = y.select_rows(train.iter());
    let problem = Problem::new(&train_design, &y_train)?;
    let z_test = design.select_rows(&test).stacked();
    let y_test = y.select_rows(test.iter());

    let mse = |model: &FittedModel| {
        (&y_test - &z_test * model.theta()).norm_squared() / test.len() as f64
    };
    match method {
        Method::Higlasso => points
            .par_iter()
            .map(|&lambdas| fit_method(method, &problem, lambdas, settings, None).map(|m| mse(&m)))
            .collect(),
        _ => {
            // baselines walk the descending path with warm starts
            let mut warm: Option<DVector<f64>> = None;
            let mut errors = Vec::with_capacity(points.len());
            for &lambdas in points {
                let model = fit_method(method, &problem, lambdas, settings, warm.as_ref())?;
                errors.push(mse(&model));
                warm = Some(model.theta());
            }
            Ok(errors)
        }
    }
}

/// K-fold cross-validation over `grid`, then a refit on all rows at the chosen point.
///
/// Folds split the rows of the already-preprocessed design.
pub fn cross_validate(
    method: Method,
    design: &GroupedDesign,
    y: &DVector<f64>,
    grid: &TuningGrid,
    settings: &CvSettings,
    seed: u64,
) -> Result<SelectionResult> {
    grid.validate(method, design.n())?;
    if y.len() != design.n() {
        return Err(input("response length does not match the design"));
    }
    let points = grid.points(method);
    let labels = fold_assignment(design.n(), grid.folds, seed);
    let per_fold: Vec<Vec<f64>> = (0..grid.folds)
        .into_par_iter()
        .map(|fold| fold_errors(method, design, y, &labels, fold, &points, settings))
        .collect::<Result<_>>()?;

    let k = grid.folds as f64;
    let cv_table: Vec<CvPoint> = points
        .iter()
        .enumerate()
        .map(|(i, &(lambda1, lambda2))| {
            let errors: Vec<f64> = per_fold.iter().map(|f| f[i]).collect();
            let mean = errors.iter().sum::<f64>() / k;
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
            CvPoint {
                lambda1,
                lambda2,
                mean_error: mean,
                standard_error: (var / k).sqrt(),
            }
        })
        .collect();

    let chosen = apply_rule(&cv_table, grid.rule)?;
    let lambdas = (cv_table[chosen].lambda1, cv_table[chosen].lambda2);
    let problem = Problem::new(design, y)?;
    let model = fit_method(method, &problem, lambdas, settings, None)?;
    let selection = select_terms(
        &model,
        design.num_groups(),
        design.pairs(),
        settings.penalty.tau,
    );
    Ok(SelectionResult {
        method,
        rule: grid.rule,
        chosen_lambdas: lambdas,
        selection,
        cv_table,
        model,
    })
}

/// Selection expressed with covariate names, for reports.
#[derive(Debug, Clone, Serialize)]
pub struct NamedSelection {
    pub selected_mains: Vec<String>,
    pub selected_interactions: Vec<(String, String)>,
}

pub fn name_selection(selection: &Selection, names: &[String]) -> NamedSelection {
    NamedSelection {
        selected_mains: selection.mains.iter().map(|&j| names[j].clone()).collect(),
        selected_interactions: selection
            .interactions
            .iter()
            .map(|&(j, k)| (names[j].clone(), names[k].clone()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{preprocess, RawDataset};
    use nalgebra::DMatrix;
    use rand::Rng;

    fn dataset(seed: u64, n: usize, s: usize) -> GroupedDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: DMatrix<f64> = DMatrix::from_fn(n, s, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |i, _| {
            2.0 * x[(i, 0)] + x[(i, 0)] * x[(i, 1)] + rng.random_range(-1.0..1.0)
        });
        preprocess(&RawDataset::with_default_names(y, x).unwrap(), 2).unwrap()
    }

    fn point(l1: f64, mean: f64, se: f64) -> CvPoint {
        CvPoint {
            lambda1: l1,
            lambda2: 0.0,
            mean_error: mean,
            standard_error: se,
        }
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let labels = fold_assignment(20, 10, 3);
        for k in 0..10 {
            assert_eq!(labels.iter().filter(|&&l| l == k).count(), 2);
        }
        assert_eq!(labels, fold_assignment(20, 10, 3));
        assert_ne!(labels, fold_assignment(20, 10, 4));
        let uneven = fold_assignment(23, 5, 1);
        let counts: Vec<usize> = (0..5)
            .map(|k| uneven.iter().filter(|&&l| l == k).count())
            .collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn one_se_rule_on_fabricated_table() {
        // descending lambda; min at index 3 (mean 1.0, se 0.3) -> threshold 1.3
        let table = vec![
            point(5.0, 2.0, 0.1),
            point(4.0, 1.35, 0.1),
            point(3.0, 1.25, 0.1),
            point(2.0, 1.0, 0.3),
            point(1.0, 1.1, 0.1),
        ];
        assert_eq!(apply_rule(&table, Rule::Min).unwrap(), 3);
        // hand recount: means <= 1.3 are indices 2, 3, 4; largest lambda is index 2
        assert_eq!(apply_rule(&table, Rule::OneSe).unwrap(), 2);
    }

    #[test]
    fn one_se_prefers_larger_lambda2_on_ties() {
        let mut table = vec![
            point(2.0, 1.0, 0.5),
            point(2.0, 1.2, 0.1),
            point(1.0, 0.9, 0.4),
        ];
        table[0].lambda2 = 0.5;
        table[1].lambda2 = 1.0;
        assert_eq!(apply_rule(&table, Rule::OneSe).unwrap(), 1);
    }

    #[test]
    fn min_rule_ties_take_first() {
        let table = vec![point(3.0, 1.0, 0.0), point(2.0, 1.0, 0.0)];
        assert_eq!(apply_rule(&table, Rule::Min).unwrap(), 0);
        assert!(apply_rule(&[], Rule::Min).is_err());
    }

    #[test]
    fn grid_validation() {
        let grid = TuningGrid {
            lambda1_values: vec![2.0, 1.0],
            lambda2_values: vec![1.0],
            folds: 5,
            rule: Rule::Min,
        };
        assert!(grid.validate(Method::Higlasso, 20).is_ok());
        assert!(grid.validate(Method::Higlasso, 4).is_err());
        let mut bad = grid.clone();
        bad.lambda1_values = vec![1.0, 2.0];
        assert!(bad.validate(Method::Lasso, 20).is_err());
        bad.lambda1_values.clear();
        assert!(bad.validate(Method::Lasso, 20).is_err());
    }

    #[test]
    fn log_spaced_endpoints() {
        let v = log_spaced(10.0, 5, 1e-3);
        assert!((v[0] - 10.0).abs() < 1e-12 && (v[4] - 0.01).abs() < 1e-12);
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn single_point_grid_is_chosen_and_refit() {
        let design = dataset(1, 40, 3);
        let y = design.y_centered().clone();
        let grid = TuningGrid {
            lambda1_values: vec![5.0],
            lambda2_values: vec![2.0],
            folds: 4,
            rule: Rule::Min,
        };
        let settings = CvSettings::default();
        let result = cross_validate(Method::Higlasso, &design, &y, &grid, &settings, 7).unwrap();
        assert_eq!(result.chosen_lambdas, (5.0, 2.0));
        let config = PenaltyConfig::new(5.0, 2.0, 1.0).unwrap();
        let direct = crate::solver::fit(&design, &y, &config, &settings.fit).unwrap();
        match result.model {
            FittedModel::Higlasso(state) => assert_eq!(state.beta(), direct.beta()),
            _ => panic!("wrong model kind"),
        }
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let design = dataset(2, 60, 3);
        let y = design.y_centered().clone();
        for method in [Method::Lasso, Method::GroupLasso, Method::Higlasso] {
            let grid =
                TuningGrid::default_for(method, &design, 3, 5, method.default_rule()).unwrap();
            let settings = CvSettings::default();
            let a = cross_validate(method, &design, &y, &grid, &settings, 11).unwrap();
            let b = cross_validate(method, &design, &y, &grid, &settings, 11).unwrap();
            assert_eq!(a.chosen_lambdas, b.chosen_lambdas);
            assert_eq!(a.cv_table, b.cv_table);
            assert_eq!(a.selection, b.selection);
            assert!(
                a.selection.mains.contains(&0),
                "{method} missed the strong main effect"
            );
        }
    }

    #[test]
    fn selection_threshold_semantics() {
        let tau = 1e-6;
        let beta = vec![
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![2.0 * tau]),
            DVector::from_vec(vec![tau / 2.0]),
        ];
        let eta = vec![DVector::from_vec(vec![1.0]); 3];
        let state = ModelState::new(beta, eta, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
        let sel = select_from_state(&state, tau);
        assert_eq!(sel.mains, BTreeSet::from([1]));
        assert!(sel.interactions.iter().all(|&(j, k)| j != 0 && k != 0));

        let zero = ModelState::new(
            vec![DVector::zeros(2); 3],
            vec![DVector::zeros(4); 3],
            vec![(0, 1), (0, 2), (1, 2)],
        )
        .unwrap();
        assert_eq!(select_from_state(&zero, tau), Selection::default());
    }

    #[test]
    fn lasso_selection_is_per_coefficient() {
        let blocks = vec![
            DVector::from_vec(vec![0.0, 1e-3]),
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 0.0, 5e-7]),
        ];
        let sel = select_from_blocks(Method::Lasso, &blocks, 2, &[(0, 1)], 1e-6);
        assert_eq!(sel.mains, BTreeSet::from([0]));
        assert!(sel.interactions.is_empty());
    }
}
