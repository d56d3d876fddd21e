//! Synthetic data from the linear (L), piecewise linear (PL) and nonlinear
//! (NL) scenarios, the four selection error rates, and a replicate driver.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{pair_list, preprocess, RawDataset};
use crate::error::{input, Result};
use crate::selection::{cross_validate, CvSettings, Method, Rule, Selection, TuningGrid};

pub const SCHEMA_VERSION: u32 = 1;

/// Number of leading covariates that carry signal in every family.
pub const ACTIVE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    L,
    PL,
    NL,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::L => "L",
            Family::PL => "PL",
            Family::NL => "NL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub family: Family,
    pub p: usize,
    pub n: usize,
    pub rho: f64,
    pub noise_var: f64,
}

impl Scenario {
    pub fn new(family: Family, p: usize, n: usize) -> Result<Self> {
        if p < ACTIVE {
            return Err(input(format!("scenarios need p >= {ACTIVE}, got {p}")));
        }
        if n < 2 {
            return Err(input("scenarios need n >= 2"));
        }
        Ok(Self {
            family,
            p,
            n,
            rho: 0.3,
            noise_var: 9.0,
        })
    }

    /// `L10`, `NL20`, ...; the sample size is 1000.
    pub fn name(&self) -> String {
        format!("{}{}", self.family.name(), self.p)
    }

    pub fn truth(&self) -> Truth {
        Truth::first_k(ACTIVE)
    }
}

pub const NAMED_SCENARIOS: [&str; 6] = ["L10", "L20", "PL10", "PL20", "NL10", "NL20"];

impl FromStr for Scenario {
    type Err = crate::error::Error;

    /// Accepts the six named scenarios, and `<family><p>[:<n>]` for custom
    /// sizes (for example `NL10:200`).
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || {
            input(format!(
                "unknown scenario '{s}'; valid names: {} (or <L|PL|NL><p>[:<n>], p >= {ACTIVE})",
                NAMED_SCENARIOS.join(", ")
            ))
        };
        let (head, n) = match s.split_once(':') {
            Some((h, n)) => (h, n.parse::<usize>().map_err(|_| unknown())?),
            None => (s, 1000),
        };
        let (family, rest) = if let Some(r) = head.strip_prefix("PL") {
            (Family::PL, r)
        } else if let Some(r) = head.strip_prefix("NL") {
            (Family::NL, r)
        } else if let Some(r) = head.strip_prefix('L') {
            (Family::L, r)
        } else {
            return Err(unknown());
        };
        let p = rest.parse::<usize>().map_err(|_| unknown())?;
        Scenario::new(family, p, n).map_err(|_| unknown())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Rows drawn from `N(0, Sigma)` with unit variances and common correlation `rho`.
pub fn gen_covariates(n: usize, p: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { -1.0 };
    if !(rho > lower && rho < 1.0) {
        return Err(input(format!("rho must lie in ({lower}, 1), got {rho}")));
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
    let chol = sigma
        .cholesky()
        .ok_or_else(|| input("covariance is not positive definite"))?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(p);
    for i in 0..n {
        for k in 0..p {
            z[k] = StandardNormal.sample(&mut rng);
        }
        x.row_mut(i).copy_from(&(&chol * &z).transpose());
    }
    Ok(x)
}

fn pos(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Mean of the response for one covariate row; only the first five entries matter.
pub fn mean_function(family: Family, row: &[f64]) -> f64 {
    assert!(
        row.len() >= ACTIVE,
        "mean functions need at least {ACTIVE} covariates"
    );
    let terms: [f64; ACTIVE] = match family {
        Family::L => [row[0], row[1], row[2], row[3], row[4]],
        Family::PL => [
            row[0] * pos(row[0]),
            row[1] * pos(-row[1]),
            row[2] * pos(row[2] - 0.5),
            row[3] * pos(row[3]),
            row[4] * pos(-0.5 - row[4]),
        ],
        Family::NL => [
            row[0] * pos(row[0]),
            row[1].exp(),
            row[2].abs(),
            row[3] * row[3],
            (row[4] + 1.0).powi(2),
        ],
    };
    let mut total: f64 = terms.iter().sum();
    for j in 0..ACTIVE {
        for k in j + 1..ACTIVE {
            total += terms[j] * terms[k];
        }
    }
    total
}

/// `y_i = f(x_i) + e_i` with `e_i ~ N(0, noise_var)`.
pub fn gen_response(
    x: &DMatrix<f64>,
    family: Family,
    noise_var: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    if !(noise_var >= 0.0) {
        return Err(input("noise variance must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = noise_var.sqrt();
    let mut row = vec![0.0; x.ncols()];
    Ok(DVector::from_fn(x.nrows(), |i, _| {
        for (k, v) in row.iter_mut().enumerate() {
            *v = x[(i, k)];
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        mean_function(family, &row) + sd * e
    }))
}

/// Non-null mains and pairs (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truth {
    pub mains: BTreeSet<usize>,
    pub interactions: BTreeSet<(usize, usize)>,
}

impl Truth {
    /// Mains `0..k` and every pair among them.
    pub fn first_k(k: usize) -> Self {
        Self {
            mains: (0..k).collect(),
            interactions: pair_list(k).into_iter().collect(),
        }
    }
}

/// Error rates in percent; `None` when the denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub fnm: Option<f64>,
    pub fpm: Option<f64>,
    pub fni: Option<f64>,
    pub fpi: Option<f64>,
}

fn rate(count: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * count as f64 / total as f64)
}

/// Scores a selection against the truth over `p` covariates and all `C(p, 2)` pairs.
pub fn compute_metrics(selected: &Selection, truth: &Truth, p: usize) -> Metrics {
    let null_mains = p - truth.mains.len();
    let null_pairs = p * (p - 1) / 2 - truth.interactions.len();
    let missed_mains = truth
        .mains
        .iter()
        .filter(|j| !selected.mains.contains(j))
        .count();
    let false_mains = selected
        .mains
        .iter()
        .filter(|j| !truth.mains.contains(j))
        .count();
    let missed_pairs = truth
        .interactions
        .iter()
        .filter(|pair| !selected.interactions.contains(pair))
        .count();
    let false_pairs = selected
        .interactions
        .iter()
        .filter(|pair| !truth.interactions.contains(pair))
        .count();
    Metrics {
        fnm: rate(missed_mains, truth.mains.len()),
        fpm: rate(false_mains, null_mains),
        fni: rate(missed_pairs, truth.interactions.len()),
        fpi: rate(false_pairs, null_pairs),
    }
}

/// Per-method averages over the replicates that completed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub method: String,
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub replicates: usize,
    pub excluded: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn row(&self, method: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([
            "schema_version",
            "method",
            "scenario",
            "n",
            "p",
            "replicates",
            "excluded",
            "FNM",
            "FPM",
            "FNI",
            "FPI",
        ])?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        for r in &self.rows {
            out.write_record([
                SCHEMA_VERSION.to_string(),
                r.method.clone(),
                r.scenario.clone(),
                r.n.to_string(),
                r.p.to_string(),
                r.replicates.to_string(),
                r.excluded.to_string(),
                fmt(r.metrics.fnm),
                fmt(r.metrics.fpm),
                fmt(r.metrics.fni),
                fmt(r.metrics.fpi),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Seed for replicate `index`, derived from the master seed independently of execution order.
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

/// One simulated dataset of a scenario.
pub fn generate(scenario: &Scenario, seed: u64) -> Result<RawDataset> {
    let x = gen_covariates(scenario.n, scenario.p, scenario.rho, seed)?;
    let y = gen_response(
        &x,
        scenario.family,
        scenario.noise_var,
        seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
    )?;
    RawDataset::with_default_names(y, x)
}

/// Runs `selector` on every replicate and averages the metrics per method.
///
/// `selector` returns one selection per entry of `methods`. A replicate whose
/// selector fails is logged and excluded from every method's average.
pub fn run_study_with<F>(
    scenario: &Scenario,
    methods: &[String],
    replicates: usize,
    seed: u64,
    selector: F,
) -> Result<MetricsReport>
where
    F: Fn(&RawDataset, u64) -> Result<Vec<Selection>> + Sync,
{
    if replicates == 0 {
        return Err(input("replicates must be at least 1"));
    }
    let truth = scenario.truth();
    let outcomes: Vec<Option<Vec<Metrics>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = replicate_seed(seed, r);
            let result = generate(scenario, rep_seed).and_then(|data| selector(&data, rep_seed));
            match result {
                Ok(selections) => Some(
                    selections
                        .iter()
                        .map(|s| compute_metrics(s, &truth, scenario.p))
                        .collect(),
                ),
                Err(e) => {
                    log::warn!("replicate {r} of {} failed: {e}", scenario.name());
                    None
                }
            }
        })
        .collect();
    let completed: Vec<&Vec<Metrics>> = outcomes.iter().flatten().collect();
    let excluded = replicates - completed.len();
    let average = |pick: fn(&Metrics) -> Option<f64>, m: usize| -> Option<f64> {
        let values: Vec<f64> = completed.iter().filter_map(|c| pick(&c[m])).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    let rows = methods
        .iter()
        .enumerate()
        .map(|(m, name)| MetricsRow {
            method: name.clone(),
            scenario: scenario.name(),
            n: scenario.n,
            p: scenario.p,
            replicates: completed.len(),
            excluded,
            metrics: Metrics {
                fnm: average(|x| x.fnm, m),
                fpm: average(|x| x.fpm, m),
                fni: average(|x| x.fni, m),
                fpi: average(|x| x.fpi, m),
            },
        })
        .collect();
    Ok(MetricsReport { rows })
}

/// Tuning protocol applied inside each replicate.
#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    /// Basis degree for HiGLASSO and group LASSO; LASSO always uses the linear design.
    pub degree: usize,
    pub grid_size: usize,
    pub folds: usize,
    /// `None` uses each method's default rule.
    pub rule: Option<Rule>,
    #[serde(skip)]
    pub settings: CvSettings,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            grid_size: 10,
            folds: 10,
            rule: None,
            settings: CvSettings::default(),
        }
    }
}

/// Cross-validated selection for each method on one dataset.
pub fn select_all(
    data: &RawDataset,
    methods: &[Method],
    config: &StudyConfig,
    seed: u64,
) -> Result<Vec<Selection>> {
    let expanded = if methods.iter().any(|m| *m != Method::Lasso) {
        Some(preprocess(data, config.degree)?)
    } else {
        None
    };
    let linear = if methods.contains(&Method::Lasso) {
        Some(preprocess(data, 1)?)
    } else {
        None
    };
    methods
        .iter()
        .map(|&method| {
            let design = match method {
                Method::Lasso => linear.as_ref(),
                _ => expanded.as_ref(),
            }
            .expect("design prepared above");
            let rule = config.rule.unwrap_or(method.default_rule());
            let grid =
                TuningGrid::default_for(method, design, config.grid_size, config.folds, rule)?;
            let result = cross_validate(
                method,
                design,
                design.y_centered(),
                &grid,
                &config.settings,
                seed,
            )?;
            Ok(result.selection)
        })
        .collect()
}

/// Simulation study for the given methods.
pub fn run_study(
    scenario: &Scenario,
    methods: &[Method],
    replicates: usize,
    config: &StudyConfig,
    seed: u64,
) -> Result<MetricsReport> {
    let names: Vec<String> = methods.iter().map(|m| m.name().to_string()).collect();
    run_study_with(scenario, &names, replicates, seed, |data, rep_seed| {
        select_all(data, methods, config, rep_seed)
    })
}
