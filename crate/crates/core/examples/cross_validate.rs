//! Cross-validated tuning over the default grid, then a full-data refit.
//!
//! cargo run --release --example cross_validate

use higlasso::preprocess;
use higlasso::selection::{cross_validate, name_selection, CvSettings, Method, Rule, TuningGrid};
use higlasso::simulation::{generate, Scenario};

fn main() -> higlasso::Result<()> {
    let raw = generate(&"NL10:600".parse::<Scenario>()?, 5)?;
    let design = preprocess(&raw, 3)?;
    let grid = TuningGrid::default_for(Method::Higlasso, &design, 4, 5, Rule::Min)?;
    let result = cross_validate(
        Method::Higlasso,
        &design,
        design.y_centered(),
        &grid,
        &CvSettings::default(),
        5,
    )?;

    for point in &result.cv_table {
        println!(
            "lambda1 {:>10.2} lambda2 {:>10.2}: cv error {:>8.3} (se {:.3})",
            point.lambda1, point.lambda2, point.mean_error, point.standard_error
        );
    }
    println!("chosen {:?}", result.chosen_lambdas);
    let named = name_selection(&result.selection, design.names());
    println!("mains {:?}", named.selected_mains);
    println!("interactions {:?}", named.selected_interactions);
    Ok(())
}
