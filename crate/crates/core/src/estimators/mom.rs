//! Method of moments: fit `(x, ρ)` to debiased empirical moments by least squares
//!
//! ```text
//! f(x, p, q) = ‖M2 − Σ_g ρ(g) (g·x)(g·x)ᵀ‖²_F + λ ‖M1 − Σ_g ρ(g) g·x‖²
//! ```
//!
//! with `ρ` parametrized by softmax logits so every iterate stays on the simplex.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::group::{elements, DihedralElement, Signal};
use crate::moments::{debias, empirical_moments, GroupDistribution, MomentPair};
use crate::rng::{stream_rng, Stream};
use crate::simulator::ObservationSet;

use super::trust_region::{minimize, TrustRegionOptions};
use super::{EstimateResult, EstimatorConfig};

/// Gradient of the objective in `(x, p, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomGradient {
    pub dx: Vec<f64>,
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
}

struct Residuals {
    /// `M2 − model`, row-major.
    r2: Vec<f64>,
    /// `M1 − model`.
    r1: Vec<f64>,
    /// `g·x` for every element in canonical order.
    images: Vec<Vec<f64>>,
    group: Vec<DihedralElement>,
}

fn residuals(x: &[f64], weights: &[f64], m: &MomentPair) -> Residuals {
    let l = x.len();
    let group: Vec<DihedralElement> = elements(l).collect();
    let mut r2 = m.m2.clone();
    let mut r1 = m.m1.clone();
    let mut images = Vec::with_capacity(2 * l);
    for (g, &w) in group.iter().zip(weights) {
        let mut u = vec![0.0; l];
        g.apply_into(x, &mut u);
        for a in 0..l {
            r1[a] -= w * u[a];
            for b in 0..l {
                r2[a * l + b] -= w * u[a] * u[b];
            }
        }
        images.push(u);
    }
    Residuals {
        r2,
        r1,
        images,
        group,
    }
}

fn check_inputs(x: &Signal, p: &[f64], q: &[f64], m: &MomentPair) -> Result<()> {
    let l = x.len();
    for (found, what) in [(p.len(), "p"), (q.len(), "q"), (m.order(), "moments")] {
        if found != l {
            return Err(Error::InvalidArgument(format!(
                "{what} has length {found}, expected {l}"
            )));
        }
    }
    if !m.is_debiased() {
        return Err(Error::NotDebiased { sigma2: m.sigma2 });
    }
    Ok(())
}

/// Objective value and its gradient with respect to `x`, `p` and `q` (treated as free
/// real vectors).
pub fn mom_objective(
    x: &Signal,
    p: &[f64],
    q: &[f64],
    m: &MomentPair,
    lambda: f64,
) -> Result<(f64, MomGradient)> {
    check_inputs(x, p, q, m)?;
    let l = x.len();
    let weights: Vec<f64> = p.iter().chain(q).copied().collect();
    let res = residuals(x.as_slice(), &weights, m);
    let value = res.r2.iter().map(|v| v * v).sum::<f64>()
        + lambda * res.r1.iter().map(|v| v * v).sum::<f64>();

    let mut dweights = vec![0.0; 2 * l];
    let mut dx = vec![0.0; l];
    let mut ru = vec![0.0; l];
    let mut back = vec![0.0; l];
    for (k, (g, u)) in res.group.iter().zip(&res.images).enumerate() {
        for a in 0..l {
            ru[a] = (0..l).map(|b| res.r2[a * l + b] * u[b]).sum();
        }
        let quad: f64 = u.iter().zip(&ru).map(|(a, b)| a * b).sum();
        let lin: f64 = u.iter().zip(&res.r1).map(|(a, b)| a * b).sum();
        dweights[k] = -2.0 * quad - 2.0 * lambda * lin;
        // −4 w g⁻¹(R u) − 2λ w g⁻¹ e
        let ginv = g.inverse();
        let w = weights[k];
        let combo: Vec<f64> = ru
            .iter()
            .zip(&res.r1)
            .map(|(a, e)| 4.0 * a + 2.0 * lambda * e)
            .collect();
        ginv.apply_into(&combo, &mut back);
        for (d, b) in dx.iter_mut().zip(&back) {
            *d -= w * b;
        }
    }
    let dq = dweights.split_off(l);
    Ok((
        value,
        MomGradient {
            dx,
            dp: dweights,
            dq,
        },
    ))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Residual vector `[vec(model2 − M2); √λ (model1 − M1)]` and its Jacobian in
/// `θ = (x, logits)`.
fn residual_and_jacobian(
    theta: &DVector<f64>,
    m: &MomentPair,
    lambda: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let l = m.order();
    let x = &theta.as_slice()[..l];
    let rho = softmax(&theta.as_slice()[l..]);
    let res = residuals(x, &rho, m);
    let sl = lambda.sqrt();
    let rows = l * l + l;
    let mut r = DVector::zeros(rows);
    for (k, v) in res.r2.iter().enumerate() {
        r[k] = -v;
    }
    for (k, v) in res.r1.iter().enumerate() {
        r[l * l + k] = -sl * v;
    }

    let mut j = DMatrix::zeros(rows, 3 * l);
    // Derivatives with respect to the weights, before the softmax chain rule.
    let mut jw = DMatrix::zeros(rows, 2 * l);
    for (k, (g, u)) in res.group.iter().zip(&res.images).enumerate() {
        let w = rho[k];
        for a in 0..l {
            for b in 0..l {
                jw[(a * l + b, k)] = u[a] * u[b];
            }
            jw[(l * l + a, k)] = sl * u[a];
        }
        // (g·x)[a] = x[src(a)], so x_c appears at position a with src(a) = c.
        for a in 0..l {
            let c = g.source_index(a);
            for b in 0..l {
                j[(a * l + b, c)] += w * u[b];
                j[(b * l + a, c)] += w * u[b];
            }
            j[(l * l + a, c)] += sl * w;
        }
    }
    // ∂ρ_k/∂a_i = ρ_k (δ_ki − ρ_i)
    for i in 0..2 * l {
        for row in 0..rows {
            let mut acc = 0.0;
            for k in 0..2 * l {
                let s = if k == i { rho[k] * (1.0 - rho[i]) } else { -rho[k] * rho[i] };
                acc += jw[(row, k)] * s;
            }
            j[(row, l + i)] = acc;
        }
    }
    Ok((r, j))
}

struct StartResult {
    x: Vec<f64>,
    rho: Vec<f64>,
    value: f64,
    initial: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn run_start(m: &MomentPair, lambda: f64, config: &EstimatorConfig, start: usize) -> Result<StartResult> {
    let l = m.order();
    let mut rng = stream_rng(config.seed, Stream::MomInit, start as u64);
    let z: Vec<f64> = (0..l).map(|_| rng.sample(StandardNormal)).collect();
    let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let trace_m2: f64 = (0..l).map(|i| m.m2[i * l + i]).sum();
    let scale = trace_m2.abs().sqrt().max(1e-8);
    let logits: Vec<f64> = (0..2 * l).map(|_| rng.sample(StandardNormal)).collect();
    let theta0 = DVector::from_iterator(
        3 * l,
        z.iter().map(|v| v / zn * scale).chain(logits),
    );
    let opts = TrustRegionOptions {
        max_iters: config.mom_max_iters,
        initial_radius: scale.max(1.0),
        ..Default::default()
    };
    let rep = minimize(theta0, |t| residual_and_jacobian(t, m, lambda), &opts)?;
    Ok(StartResult {
        x: rep.theta.as_slice()[..l].to_vec(),
        rho: softmax(&rep.theta.as_slice()[l..]),
        value: rep.value,
        initial: rep.trace[0],
        iterations: rep.iterations,
        trace: rep.trace,
    })
}

/// Multi-start fit to debiased moments; the lowest final objective wins, ties to the
/// lower start index.
pub fn estimate_from_moments(m: &MomentPair, config: &EstimatorConfig) -> Result<EstimateResult> {
    let start = Instant::now();
    if !m.is_debiased() {
        return Err(Error::NotDebiased { sigma2: m.sigma2 });
    }
    let lambda = config.lambda_for(m.order());
    let runs: Vec<Result<StartResult>> = (0..config.mom_starts.max(1))
        .into_par_iter()
        .map(|s| run_start(m, lambda, config, s))
        .collect();
    let mut best: Option<StartResult> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(r) if r.value < r.initial => {
                if best.as_ref().is_none_or(|b| r.value < b.value) {
                    best = Some(r);
                }
            }
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = best.ok_or_else(|| {
        first_err.unwrap_or_else(|| {
            Error::Optimization("no start decreased the moment objective".into())
        })
    })?;
    let l = m.order();
    Ok(EstimateResult {
        x_est: Signal::new(best.x)?,
        rho_est: Some(GroupDistribution::project_flat(l, &best.rho)?),
        iterations: best.iterations,
        objective_trace: best.trace,
        wall_time: start.elapsed(),
    })
}

/// Empirical moments, debiased with the known `sigma`, then [`estimate_from_moments`].
pub fn estimate_by_mom(
    obs: &ObservationSet,
    sigma: f64,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    let start = Instant::now();
    let m = debias(&empirical_moments(obs)?, sigma * sigma)?;
    let mut est = estimate_from_moments(&m, config)?;
    est.wall_time = start.elapsed();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::relative_error;
    use crate::simulator::{sample_distribution, sample_signal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact(l: usize, seed: u64) -> (Signal, GroupDistribution, MomentPair) {
        let x = sample_signal(l, seed).unwrap();
        let rho = sample_distribution(l, seed).unwrap();
        let m = MomentPair::analytic(&x, &rho, 0.0).unwrap();
        (x, rho, m)
    }

    #[test]
    fn zero_at_truth_and_on_the_orbit() {
        let (x, rho, m) = exact(8, 1);
        let (v, _) = mom_objective(&x, rho.p(), rho.q(), &m, 8.0).unwrap();
        assert!(v < 1e-18);
        for g in elements(8) {
            let gx = g.apply(&x).unwrap();
            let t = rho.translated(&g);
            let (v, _) = mom_objective(&gx, t.p(), t.q(), &m, 8.0).unwrap();
            assert!(v < 1e-18, "{g}: {v}");
        }
    }

    #[test]
    fn lambda_zero_drops_first_moment() {
        let (x, rho, m) = exact(6, 2);
        let y = sample_signal(6, 3).unwrap();
        let (v0, _) = mom_objective(&y, rho.p(), rho.q(), &m, 0.0).unwrap();
        let w: Vec<f64> = rho.to_flat();
        let res = residuals(y.as_slice(), &w, &m);
        let frob: f64 = res.r2.iter().map(|v| v * v).sum();
        assert!((v0 - frob).abs() <= 1e-12 * frob);
        let _ = x;
    }

    #[test]
    fn rejects_biased_moments() {
        let (x, rho, m) = exact(5, 4);
        let biased = m.with_noise(0.3);
        assert!(matches!(
            mom_objective(&x, rho.p(), rho.q(), &biased, 1.0),
            Err(Error::NotDebiased { .. })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, _, m) = exact(8, 5);
        for _ in 0..5 {
            let x = Signal::new((0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let p: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..0.2)).collect();
            let q: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..0.2)).collect();
            let (_, g) = mom_objective(&x, &p, &q, &m, 8.0).unwrap();
            let flat: Vec<f64> = g.dx.iter().chain(&g.dp).chain(&g.dq).copied().collect();
            let h = 1e-6;
            for k in 0..24 {
                let eval = |d: f64| {
                    let mut xs = x.as_slice().to_vec();
                    let mut ps = p.clone();
                    let mut qs = q.clone();
                    match k {
                        0..8 => xs[k] += d,
                        8..16 => ps[k - 8] += d,
                        _ => qs[k - 16] += d,
                    }
                    mom_objective(&Signal::new(xs).unwrap(), &ps, &qs, &m, 8.0).unwrap().0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let scale = flat[k].abs().max(fd.abs()).max(1e-8);
                assert!((fd - flat[k]).abs() <= 1e-5 * scale, "k={k}: {fd} vs {}", flat[k]);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (_, _, m) = exact(5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let theta = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let (_, j) = residual_and_jacobian(&theta, &m, 5.0).unwrap();
        let h = 1e-6;
        for c in 0..15 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[c] += h;
            tm[c] -= h;
            let fd = (residual_and_jacobian(&tp, &m, 5.0).unwrap().0
                - residual_and_jacobian(&tm, &m, 5.0).unwrap().0)
                / (2.0 * h);
            assert!((&fd - j.column(c)).norm() < 1e-6 * (1.0 + fd.norm()), "column {c}");
        }
    }

    #[test]
    fn exact_moments_recover_the_orbit() {
        for seed in 0..3 {
            let (x, _, m) = exact(8, 10 + seed);
            let config = EstimatorConfig {
                seed,
                ..Default::default()
            };
            let est = estimate_from_moments(&m, &config).unwrap();
            assert!(relative_error(&est.x_est, &x).unwrap() < 1e-4, "seed {seed}");
            for w in est.objective_trace.windows(2) {
                assert!(w[1] < w[0]);
            }
        }
    }
}
