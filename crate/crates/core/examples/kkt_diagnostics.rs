//! Stationarity residuals of a fitted model.
//!
//! cargo run --release --example kkt_diagnostics

use higlasso::simulation::{generate, Scenario};
use higlasso::solver::{kkt_residuals, kkt_summary};
use higlasso::{fit, preprocess, FitOptions, PenaltyConfig};

fn main() -> higlasso::Result<()> {
    let raw = generate(&"PL10:400".parse::<Scenario>()?, 3)?;
    let design = preprocess(&raw, 3)?;
    let y = design.y_centered();
    let config = PenaltyConfig::new(150.0, 40.0, 1.0)?;
    let options = FitOptions {
        max_outer_iterations: 300,
        delta: 1e-8,
        ..FitOptions::default()
    };
    let state = fit(&design, y, &config, &options)?;
    let residuals = kkt_residuals(&state, &design, y);
    for (j, r) in residuals.groups.iter().enumerate() {
        let status = if state.beta()[j].iter().all(|b| *b == 0.0) {
            "zero"
        } else {
            "active"
        };
        println!("group {j:>2} ({status:>6}): {r:.4}");
    }
    let summary = kkt_summary(&state, &residuals, &config, design.n(), 1e-3);
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
