//! Fits HiGLASSO at a fixed (lambda1, lambda2) and prints the selected terms.
//!
//! cargo run --release --example fit

use higlasso::selection::{name_selection, select_from_state};
use higlasso::simulation::{generate, Scenario};
use higlasso::solver::fit_with_observer;
use higlasso::solver::Problem;
use higlasso::{preprocess, FitOptions, PenaltyConfig};

fn main() -> higlasso::Result<()> {
    let scenario: Scenario = "NL10:500".parse()?;
    let raw = generate(&scenario, 7)?;
    let design = preprocess(&raw, 3)?;
    let problem = Problem::new(&design, design.y_centered())?;
    let config = PenaltyConfig::new(200.0, 50.0, 1.0)?;

    let mut last = f64::INFINITY;
    let state = fit_with_observer(&problem, &config, &FitOptions::default(), |s| {
        if s.iterations % 10 == 0 {
            println!(
                "iteration {:>3}: objective {:.4}",
                s.iterations, s.objective
            );
        }
        assert!(s.objective <= last + 1e-9);
        last = s.objective;
    })?;
    println!(
        "stopped after {} iterations (converged: {})",
        state.iterations, state.converged
    );

    let named = name_selection(&select_from_state(&state, config.tau), design.names());
    println!("mains: {:?}", named.selected_mains);
    println!("interactions: {:?}", named.selected_interactions);
    Ok(())
}
