//! Command-line front end: CSV ingestion, `fit` / `cv` / `simulate`, and
//! report writing.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::design::{preprocess, GroupedDesign, RawDataset};
use crate::error::{input, Error, Result};
use crate::penalty::PenaltyConfig;
use crate::selection::{
    cross_validate, name_selection, select_from_state, CvPoint, CvSettings, FittedModel, Method,
    NamedSelection, Rule, TuningGrid,
};
use crate::simulation::{run_study, Scenario, StudyConfig, SCHEMA_VERSION};
use crate::solver::{fit, kkt_residuals, kkt_summary, FitOptions, KktSummary};

#[derive(Debug, Parser)]
#[command(
    name = "higlasso",
    version,
    about = "Hierarchical integrative group LASSO"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at fixed (lambda1, lambda2) and report the selected terms.
    Fit(FitArgs),
    /// Cross-validate over a tuning grid, refit, and report.
    Cv(CvArgs),
    /// Run a simulation study and write a metrics CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Min,
    #[value(name = "1se")]
    OneSe,
}

impl From<RuleArg> for Rule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Min => Rule::Min,
            RuleArg::OneSe => Rule::OneSe,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Higlasso,
    Lasso,
    GroupLasso,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Higlasso => Method::Higlasso,
            MethodArg::Lasso => Method::Lasso,
            MethodArg::GroupLasso => Method::GroupLasso,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column; every other column is a covariate.
    #[arg(long)]
    pub response: String,
    /// Polynomial basis degree per covariate.
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    /// Natural log of the response and every covariate (values must be positive).
    #[arg(long)]
    pub log_transform: bool,
    /// Center and scale each covariate to unit sample standard deviation.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub lambda1: f64,
    #[arg(long)]
    pub lambda2: f64,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Higlasso)]
    pub method: MethodArg,
    /// Use exactly this lambda1 instead of the default grid.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Use exactly this lambda2 instead of the default grid.
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Defaults to min for higlasso and 1se for the baselines.
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// L10, L20, PL10, PL20, NL10, NL20, or <family><p>[:<n>].
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Higlasso, MethodArg::Lasso, MethodArg::GroupLasso])]
    pub methods: Vec<MethodArg>,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, default_value_t = 10)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Every setting that influenced a run, with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub data_path: Option<PathBuf>,
    pub response_column: Option<String>,
    pub basis_degree: usize,
    pub log_transform: bool,
    pub standardize: bool,
    pub method: Option<String>,
    pub penalty: PenaltyConfig,
    pub fit_options: FitOptions,
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
    pub grid_size: Option<usize>,
    pub folds: Option<usize>,
    pub rule: Option<Rule>,
    pub scenario: Option<Scenario>,
    pub replicates: Option<usize>,
    pub methods: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub output_path: PathBuf,
}

/// Reads a numeric CSV with a header row.
pub fn read_csv(
    path: &Path,
    response: &str,
    log_transform: bool,
    standardize: bool,
) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let response_index = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| input(format!("response column '{response}' not found")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let values = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Parse(format!(
                            "row {}, column '{}': '{field}' is not a finite number",
                            line + 2,
                            headers[col]
                        ))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    let n = rows.len();
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != response_index)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(input("no covariate columns"));
    }
    let mut y = DVector::from_fn(n, |i, _| rows[i][response_index]);
    let covariate_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != response_index)
        .collect();
    let mut x = DMatrix::from_fn(n, covariate_cols.len(), |i, j| rows[i][covariate_cols[j]]);
    if log_transform {
        if y.iter().chain(x.iter()).any(|v| *v <= 0.0) {
            return Err(input("--log-transform requires strictly positive values"));
        }
        y.apply(|v| *v = v.ln());
        x.apply(|v| *v = v.ln());
    }
    if standardize && n >= 2 {
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
    }
    RawDataset::new(y, x, names)
}

/// Writes `contents` to `path` through a temporary file and a rename.
fn write_atomically(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    iterations: usize,
    converged: bool,
    objective: f64,
    kkt: KktSummary,
}

#[derive(Debug, Serialize)]
struct ModelReport {
    schema_version: u32,
    config: RunConfig,
    method: String,
    chosen_lambdas: (f64, f64),
    #[serde(flatten)]
    selection: NamedSelection,
    cv_table: Option<Vec<CvPoint>>,
    diagnostics: Option<Diagnostics>,
    /// Coefficients on the preprocessed (orthogonalized) scale.
    model: FittedModel,
}

fn threads_in_use() -> usize {
    rayon::current_num_threads()
}

fn load(data: &DataArgs, method: Method) -> Result<(RawDataset, GroupedDesign, usize)> {
    let raw = read_csv(
        &data.data,
        &data.response,
        data.log_transform,
        data.standardize,
    )?;
    let degree = if method == Method::Lasso {
        1
    } else {
        data.degree
    };
    if degree == 0 {
        return Err(input("--degree must be at least 1"));
    }
    let design = preprocess(&raw, degree)?;
    Ok((raw, design, degree))
}

fn diagnostics_for(
    model: &FittedModel,
    design: &GroupedDesign,
    config: &PenaltyConfig,
) -> Option<Diagnostics> {
    match model {
        FittedModel::Higlasso(state) => {
            let kkt = kkt_residuals(state, design, design.y_centered());
            Some(Diagnostics {
                iterations: state.iterations,
                converged: state.converged,
                objective: state.objective,
                kkt: kkt_summary(state, &kkt, config, design.n(), 1e-3),
            })
        }
        FittedModel::Baseline { .. } => None,
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let (_, design, degree) = load(&args.data, Method::Higlasso)?;
    let penalty = PenaltyConfig::new(args.lambda1, args.lambda2, args.common.sigma)?;
    let options = FitOptions::default();
    let state = fit(&design, design.y_centered(), &penalty, &options)?;
    let selection = select_from_state(&state, penalty.tau);
    let config = RunConfig {
        command: "fit".into(),
        data_path: Some(args.data.data.clone()),
        response_column: Some(args.data.response.clone()),
        basis_degree: degree,
        log_transform: args.data.log_transform,
        standardize: args.data.standardize,
        method: Some(Method::Higlasso.name().into()),
        penalty,
        fit_options: options,
        lambda1_values: vec![args.lambda1],
        lambda2_values: vec![args.lambda2],
        grid_size: None,
        folds: None,
        rule: None,
        scenario: None,
        replicates: None,
        methods: vec![Method::Higlasso.name().into()],
        seed: args.common.seed,
        threads: threads_in_use(),
        output_path: args.common.out.clone(),
    };
    let model = FittedModel::Higlasso(state);
    let report = ModelReport {
        schema_version: SCHEMA_VERSION,
        method: Method::Higlasso.name().into(),
        chosen_lambdas: (args.lambda1, args.lambda2),
        selection: name_selection(&selection, design.names()),
        cv_table: None,
        diagnostics: diagnostics_for(&model, &design, &penalty),
        model,
        config,
    };
    write_atomically(&args.common.out, &serde_json::to_vec_pretty(&report)?)
}

fn cmd_cv(args: &CvArgs) -> Result<()> {
    let method: Method = args.method.into();
    let (_, design, degree) = load(&args.data, method)?;
    let rule = args.rule.map_or(method.default_rule(), Rule::from);
    let mut grid = TuningGrid::default_for(method, &design, args.grid_size, args.folds, rule)?;
    if let Some(l1) = args.lambda1 {
        grid.lambda1_values = vec![l1];
    }
    if let Some(l2) = args.lambda2 {
        if method == Method::Higlasso {
            grid.lambda2_values = vec![l2];
        }
    }
    let penalty = PenaltyConfig::new(0.0, 0.0, args.common.sigma)?;
    let settings = CvSettings {
        penalty,
        fit: FitOptions::default(),
    };
    let result = cross_validate(
        method,
        &design,
        design.y_centered(),
        &grid,
        &settings,
        args.common.seed,
    )?;
    let chosen = PenaltyConfig {
        lambda1: result.chosen_lambdas.0,
        lambda2: result.chosen_lambdas.1,
        ..penalty
    };
    let config = RunConfig {
        command: "cv".into(),
        data_path: Some(args.data.data.clone()),
        response_column: Some(args.data.response.clone()),
        basis_degree: degree,
        log_transform: args.data.log_transform,
        standardize: args.data.standardize,
        method: Some(method.name().into()),
        penalty: chosen,
        fit_options: settings.fit.clone(),
        lambda1_values: grid.lambda1_values.clone(),
        lambda2_values: grid.lambda2_values.clone(),
        grid_size: Some(args.grid_size),
        folds: Some(args.folds),
        rule: Some(rule),
        scenario: None,
        replicates: None,
        methods: vec![method.name().into()],
        seed: args.common.seed,
        threads: threads_in_use(),
        output_path: args.common.out.clone(),
    };
    let report = ModelReport {
        schema_version: SCHEMA_VERSION,
        method: method.name().into(),
        chosen_lambdas: result.chosen_lambdas,
        selection: name_selection(&result.selection, design.names()),
        cv_table: Some(result.cv_table.clone()),
        diagnostics: diagnostics_for(&result.model, &design, &chosen),
        model: result.model,
        config,
    };
    write_atomically(&args.common.out, &serde_json::to_vec_pretty(&report)?)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let scenario: Scenario = args.scenario.parse()?;
    if args.replicates == 0 {
        return Err(input("--replicates must be at least 1"));
    }
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    let penalty = PenaltyConfig::new(0.0, 0.0, args.common.sigma)?;
    let study = StudyConfig {
        degree: args.degree,
        grid_size: args.grid_size,
        folds: args.folds,
        rule: args.rule.map(Rule::from),
        settings: CvSettings {
            penalty,
            fit: FitOptions::default(),
        },
    };
    let report = run_study(
        &scenario,
        &methods,
        args.replicates,
        &study,
        args.common.seed,
    )?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;

    let config = RunConfig {
        command: "simulate".into(),
        data_path: None,
        response_column: None,
        basis_degree: args.degree,
        log_transform: false,
        standardize: false,
        method: None,
        penalty,
        fit_options: study.settings.fit.clone(),
        lambda1_values: Vec::new(),
        lambda2_values: Vec::new(),
        grid_size: Some(args.grid_size),
        folds: Some(args.folds),
        rule: study.rule,
        scenario: Some(scenario),
        replicates: Some(args.replicates),
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        seed: args.common.seed,
        threads: threads_in_use(),
        output_path: args.common.out.clone(),
    };
    #[derive(Serialize)]
    struct Sidecar {
        schema_version: u32,
        config: RunConfig,
    }
    let mut sidecar_path = args.common.out.as_os_str().to_owned();
    sidecar_path.push(".config.json");
    let sidecar = Sidecar {
        schema_version: SCHEMA_VERSION,
        config,
    };
    write_atomically(
        Path::new(&sidecar_path),
        &serde_json::to_vec_pretty(&sidecar)?,
    )?;
    write_atomically(&args.common.out, &csv)
}

fn common(command: &Command) -> &CommonArgs {
    match command {
        Command::Fit(a) => &a.common,
        Command::Cv(a) => &a.common,
        Command::Simulate(a) => &a.common,
    }
}

/// Parses arguments and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = common(&cli.command).threads;
    let execute = || match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    let result = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| input(e.to_string()))
            .and_then(|pool| pool.install(execute)),
        None => execute(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
