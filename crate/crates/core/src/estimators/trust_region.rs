//! Gauss-Newton trust-region minimization of `‖r(θ)‖²`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrustRegionOptions {
    pub max_iters: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Minimum ratio of actual to predicted decrease for a step to be accepted.
    pub eta: f64,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            gradient_tol: 1e-8,
            step_tol: 1e-12,
            initial_radius: 1.0,
            max_radius: 1e6,
            eta: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrustRegionStop {
    GradientSmall,
    StepSmall,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct TrustRegionReport {
    pub theta: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective at the start and after every accepted step; strictly decreasing.
    pub trace: Vec<f64>,
    pub stop: TrustRegionStop,
}

/// Minimizer of `gᵀδ + ½ δᵀBδ` over `‖δ‖ ≤ radius` for positive semidefinite `B`.
fn solve_subproblem(eig: &SymmetricEigen<f64, nalgebra::Dyn>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let lams = &eig.eigenvalues;
    let vecs = &eig.eigenvectors;
    let gamma = vecs.transpose() * g;
    let lmax = lams.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e-12 * lmax.max(f64::MIN_POSITIVE);
    let step_norm = |mu: f64| -> f64 {
        gamma
            .iter()
            .zip(lams.iter())
            .map(|(gi, li)| {
                let d = li.max(0.0) + mu;
                if d <= cutoff {
                    0.0
                } else {
                    (gi / d).powi(2)
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let step_for = |mu: f64| -> DVector<f64> {
        let coeffs = DVector::from_iterator(
            gamma.len(),
            gamma.iter().zip(lams.iter()).map(|(gi, li)| {
                let d = li.max(0.0) + mu;
                if d <= cutoff {
                    0.0
                } else {
                    -gi / d
                }
            }),
        );
        vecs * coeffs
    };
    // A gradient component in the null space makes the unconstrained model unbounded.
    let gnorm = g.norm();
    let null_pull = gamma
        .iter()
        .zip(lams.iter())
        .any(|(gi, li)| *li <= cutoff && gi.abs() > 1e-12 * gnorm);
    if !null_pull && step_norm(0.0) <= radius {
        return step_for(0.0);
    }
    // ‖δ(μ)‖ decreases in μ and is at most ‖g‖/μ.
    let mut lo = 0.0;
    let mut hi = gnorm / radius;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if step_norm(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    step_for(hi)
}

/// Minimizes `‖r(θ)‖²` given `eval(θ) = (r, ∂r/∂θ)`.
pub fn minimize<F>(theta0: DVector<f64>, eval: F, opts: &TrustRegionOptions) -> Result<TrustRegionReport>
where
    F: Fn(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let mut theta = theta0;
    let (mut r, mut j) = eval(&theta)?;
    let mut value = r.norm_squared();
    if !value.is_finite() {
        return Err(Error::Optimization("non-finite objective at the start".into()));
    }
    let mut radius = opts.initial_radius;
    let mut trace = vec![value];
    let mut iterations = 0;
    let stop = loop {
        let g = 2.0 * j.transpose() * &r;
        if g.norm() < opts.gradient_tol {
            break TrustRegionStop::GradientSmall;
        }
        if iterations >= opts.max_iters {
            break TrustRegionStop::MaxIterations;
        }
        iterations += 1;
        let b = 2.0 * j.transpose() * &j;
        let eig = SymmetricEigen::try_new(b.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::Optimization("model Hessian eigensolver failed".into()))?;
        let step = solve_subproblem(&eig, &g, radius);
        let step_norm = step.norm();
        if step_norm < opts.step_tol {
            break TrustRegionStop::StepSmall;
        }
        let predicted = -(g.dot(&step) + 0.5 * step.dot(&(&b * &step)));
        let candidate = &theta + &step;
        let (r_new, j_new) = eval(&candidate)?;
        let value_new = r_new.norm_squared();
        let ratio = if predicted > 0.0 && value_new.is_finite() {
            (value - value_new) / predicted
        } else {
            f64::NEG_INFINITY
        };
        if ratio < 0.25 {
            radius = 0.25 * step_norm;
        } else if ratio > 0.75 && step_norm >= 0.99 * radius {
            radius = (2.0 * radius).min(opts.max_radius);
        }
        if ratio > opts.eta && value_new < value {
            theta = candidate;
            r = r_new;
            j = j_new;
            value = value_new;
            trace.push(value);
        }
        if radius < opts.step_tol {
            break TrustRegionStop::StepSmall;
        }
    };
    Ok(TrustRegionReport {
        theta,
        value,
        iterations,
        trace,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(t: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let r = DVector::from_vec(vec![10.0 * (t[1] - t[0] * t[0]), 1.0 - t[0]]);
        let j = DMatrix::from_row_slice(2, 2, &[-20.0 * t[0], 10.0, -1.0, 0.0]);
        Ok((r, j))
    }

    #[test]
    fn solves_rosenbrock() {
        let rep = minimize(
            DVector::from_vec(vec![-1.2, 1.0]),
            rosenbrock,
            &TrustRegionOptions::default(),
        )
        .unwrap();
        assert!((rep.theta[0] - 1.0).abs() < 1e-8);
        assert!((rep.theta[1] - 1.0).abs() < 1e-8);
        for w in rep.trace.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert_ne!(rep.stop, TrustRegionStop::MaxIterations);
    }

    #[test]
    fn linear_least_squares_with_rank_deficiency() {
        // r = A θ − b with a repeated column; the minimum value is still attained.
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 4.0]);
        let eval = |t: &DVector<f64>| Ok((&a * t - &b, a.clone()));
        let rep = minimize(DVector::zeros(3), eval, &TrustRegionOptions::default()).unwrap();
        let best = {
            let svd = a.clone().svd(true, true);
            let t = svd.solve(&b, 1e-12).unwrap();
            (&a * t - &b).norm_squared()
        };
        assert!((rep.value - best).abs() < 1e-10);
    }

    #[test]
    fn subproblem_respects_radius() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let eig = SymmetricEigen::new(b);
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let d = solve_subproblem(&eig, &g, 0.5);
        assert!((d.norm() - 0.5).abs() < 1e-10);
        assert!(g.dot(&d) < 0.0);
    }
}
