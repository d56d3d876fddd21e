//! LASSO and group LASSO on the same data, across a short penalty path.
//!
//! cargo run --release --example baselines

use higlasso::baselines::{fit_group_lasso, fit_lasso, group_lambda_max, lasso_lambda_max};
use higlasso::preprocess;
use higlasso::simulation::{generate, Scenario};

fn main() -> higlasso::Result<()> {
    let raw = generate(&"L10:400".parse::<Scenario>()?, 11)?;

    let linear = preprocess(&raw, 1)?;
    let x = nalgebra::DMatrix::from_columns(
        &linear
            .main_blocks()
            .iter()
            .map(|b| b.column(0).into_owned())
            .collect::<Vec<_>>(),
    );
    let y = linear.y_centered();
    let top = lasso_lambda_max(&x.tr_mul(y));
    for fraction in [0.5, 0.1, 0.01] {
        let b = fit_lasso(&x, y, fraction * top);
        let active: Vec<usize> = (0..b.len()).filter(|&i| b[i] != 0.0).collect();
        println!("lasso at {fraction} x lambda_max: active {active:?}");
    }

    let cubic = preprocess(&raw, 3)?;
    let y = cubic.y_centered();
    let blocks = cubic.main_blocks();
    let xty: Vec<f64> = blocks
        .iter()
        .flat_map(|b| b.tr_mul(y).iter().copied().collect::<Vec<_>>())
        .collect();
    let top = group_lambda_max(&nalgebra::DVector::from_vec(xty), cubic.group_sizes());
    for fraction in [0.5, 0.1, 0.01] {
        let groups = fit_group_lasso(blocks, y, fraction * top);
        let active: Vec<usize> = (0..groups.len())
            .filter(|&j| groups[j].norm() > 0.0)
            .collect();
        println!("group lasso (mains only) at {fraction} x lambda_max: active {active:?}");
    }
    Ok(())
}
