//! Runs a small simulation study and prints the metrics table.
//!
//! cargo run --release --example simulate -- NL10 4

use higlasso::selection::Method;
use higlasso::simulation::{run_study, Scenario, StudyConfig};

fn main() -> higlasso::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario: Scenario = args.next().unwrap_or_else(|| "NL10:300".into()).parse()?;
    let replicates = args
        .next()
        .map_or(2, |r| r.parse().expect("replicate count"));
    let config = StudyConfig {
        grid_size: 5,
        ..StudyConfig::default()
    };
    let methods = [Method::Higlasso, Method::Lasso, Method::GroupLasso];
    let start = std::time::Instant::now();
    let report = run_study(&scenario, &methods, replicates, &config, 2024)?;
    report.write_csv(std::io::stdout())?;
    eprintln!(
        "{replicates} replicates of {scenario} in {:.1?}",
        start.elapsed()
    );
    Ok(())
}
