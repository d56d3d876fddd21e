use nalgebra::DVector;

use super::FitOptions;

/// Result of a backtracking search along `candidate - current`.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub point: DVector<f64>,
    pub objective: f64,
    /// Accepted step length; `None` when every trial failed and `point` is `current`.
    pub step: Option<f64>,
}

/// Backtracking search over `t in {1, s, s^2, ...}` accepting the first
/// point with `f(current + t d) <= f(current) - c t expected_decrease`.
///
/// `expected_decrease` is the model decrease predicted at the full step; a
/// negative value is clamped to zero so the accepted point never increases
/// the objective.
pub fn line_search<F>(
    current: &DVector<f64>,
    current_objective: f64,
    candidate: &DVector<f64>,
    expected_decrease: f64,
    mut objective: F,
    options: &FitOptions,
) -> LineSearchOutcome
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let direction = candidate - current;
    let predicted = if expected_decrease.is_finite() {
        expected_decrease.max(0.0)
    } else {
        0.0
    };
    let mut t = 1.0;
    for _ in 0..options.max_backtracks {
        let trial = current + &direction * t;
        let value = objective(&trial);
        if value <= current_objective - options.armijo_c * t * predicted {
            return LineSearchOutcome {
                point: trial,
                objective: value,
                step: Some(t),
            };
        }
        t *= options.step_shrink;
    }
    LineSearchOutcome {
        point: current.clone(),
        objective: current_objective,
        step: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn quadratic(x: &DVector<f64>) -> f64 {
        x.iter().map(|v| (v - 1.0).powi(2)).sum()
    }

    #[test]
    fn full_step_when_candidate_is_good() {
        let current = DVector::from_vec(vec![0.0, 0.0]);
        let candidate = DVector::from_vec(vec![1.0, 1.0]);
        let f0 = quadratic(&current);
        let out = line_search(
            &current,
            f0,
            &candidate,
            1.0,
            quadratic,
            &FitOptions::default(),
        );
        assert_eq!(out.step, Some(1.0));
        assert_eq!(out.point, candidate);
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn falls_back_to_current_when_every_step_increases() {
        let current = DVector::from_vec(vec![1.0, 1.0]);
        let candidate = DVector::from_vec(vec![3.0, -2.0]);
        let out = line_search(
            &current,
            0.0,
            &candidate,
            0.5,
            quadratic,
            &FitOptions::default(),
        );
        assert_eq!(out.step, None);
        assert_eq!(out.point, current);
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn backtracks_on_overshoot() {
        let current = DVector::from_vec(vec![0.0]);
        let candidate = DVector::from_vec(vec![3.0]);
        let f0 = quadratic(&current);
        let out = line_search(
            &current,
            f0,
            &candidate,
            1.0,
            quadratic,
            &FitOptions::default(),
        );
        assert_eq!(out.step, Some(0.5));
        assert!(out.objective < f0);
    }

    #[test]
    fn never_increases_on_random_problems() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let options = FitOptions::default();
        for _ in 0..200 {
            let current = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let candidate = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let f = |x: &DVector<f64>| {
                x.iter()
                    .map(|v| (v * v - 1.0).powi(2) + v.sin())
                    .sum::<f64>()
            };
            let f0 = f(&current);
            let out = line_search(
                &current,
                f0,
                &candidate,
                rng.random_range(-1.0..1.0),
                f,
                &options,
            );
            assert!(out.objective <= f0);
        }
    }
}
