//! Evaluates the integrative weight, the penalty and its convex quadratic
//! surrogate around an anchor.
//!
//! cargo run --example penalty_surrogate

use higlasso::penalty::{glqa_surrogate, group_weight, penalty_value};
use nalgebra::DVector;

fn main() {
    let sigma = 1.0;
    for v in [[0.1, 0.05], [1.0, -0.5], [3.0, 2.0]] {
        let v = DVector::from_row_slice(&v);
        println!(
            "v = {:?}: weight {:.4}, penalty {:.4}",
            v.as_slice(),
            group_weight(&v, sigma),
            penalty_value(&v, 1.0, sigma)
        );
    }

    let anchor = DVector::from_row_slice(&[1.0, -0.5]);
    let surrogate = glqa_surrogate(&anchor, sigma).expect("anchor is non-zero");
    println!("curvature |d| = {:?}", surrogate.d_abs.as_slice());
    for t in [0.5, 0.9, 1.0, 1.1, 1.5] {
        let v = &anchor * t;
        println!(
            "  t = {t}: penalty {:.5}, surrogate {:.5}",
            penalty_value(&v, 1.0, sigma),
            surrogate.value(&v)
        );
    }
}
