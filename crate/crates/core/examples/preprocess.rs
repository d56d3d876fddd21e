//! Builds the grouped design from raw covariates and checks block orthogonality.
//!
//! cargo run --example preprocess

use higlasso::{preprocess, RawDataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> higlasso::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DMatrix::from_fn(200, 3, |_, _| rng.random_range(-2.0..2.0));
    let y = DVector::from_fn(200, |i, _| {
        x[(i, 0)] * x[(i, 1)] + rng.random_range(-1.0..1.0)
    });
    let raw = RawDataset::new(
        y,
        x,
        vec!["lead".into(), "cadmium".into(), "arsenic".into()],
    )?;

    let design = preprocess(&raw, 3)?;
    println!(
        "groups {:?}, sizes {:?}",
        design.names(),
        design.group_sizes()
    );
    for (idx, &(j, k)) in design.pairs().iter().enumerate() {
        let block = design.interaction_at(idx);
        println!(
            "  {} x {}: {} columns",
            design.names()[j],
            design.names()[k],
            block.ncols()
        );
    }
    for (j, block) in design.main_blocks().iter().enumerate() {
        let gram = block.tr_mul(block);
        let off_diagonal = (0..gram.nrows())
            .flat_map(|a| {
                (0..gram.ncols())
                    .filter(move |&b| b != a)
                    .map(move |b| (a, b))
            })
            .map(|(a, b)| gram[(a, b)].abs())
            .fold(0.0, f64::max);
        println!(
            "  main block {j}: diag {:.1}, max |off-diagonal| {off_diagonal:.2e}",
            gram[(0, 0)]
        );
    }
    println!("mean of centered y: {:.2e}", design.y_centered().mean());
    Ok(())
}
