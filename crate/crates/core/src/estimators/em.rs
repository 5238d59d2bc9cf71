//! Expectation-maximization for the mixture `y ~ Σ_g ρ(g) N(g·x, σ²I)`.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DMatrixView};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::group::{elements, DihedralElement, Signal};
use crate::moments::GroupDistribution;
use crate::rng::{stream_rng, Stream};
use crate::simulator::ObservationSet;

use super::{EstimateResult, EstimatorConfig};

/// Rows per work unit; partial sums are combined in block order.
const ROW_BLOCK: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct EMState {
    pub x: Signal,
    pub rho: GroupDistribution,
    /// `n × 2L` responsibilities, row-major, from the E-step that produced `(x, ρ)`.
    pub weights: Vec<f64>,
}

impl EMState {
    /// Starting point with empty weights.
    pub fn new(x: Signal, rho: GroupDistribution) -> Result<Self> {
        if x.len() != rho.order() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                found: rho.order(),
            });
        }
        Ok(Self {
            x,
            rho,
            weights: Vec::new(),
        })
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        let k = 2 * self.x.len();
        &self.weights[i * k..(i + 1) * k]
    }
}

struct Orbit {
    group: Vec<DihedralElement>,
    /// `g·x` for every element, one per column.
    images: DMatrix<f64>,
    log_rho: Vec<f64>,
    x_norm2: f64,
}

impl Orbit {
    fn new(x: &Signal, rho: &GroupDistribution) -> Self {
        let l = x.len();
        let group: Vec<DihedralElement> = elements(l).collect();
        let mut images = vec![0.0; 2 * l * l];
        for (g, out) in group.iter().zip(images.chunks_exact_mut(l)) {
            g.apply_into(x.as_slice(), out);
        }
        let log_rho = rho.to_flat().iter().map(|w| w.ln()).collect();
        Self {
            group,
            images: DMatrix::from_vec(l, 2 * l, images),
            log_rho,
            x_norm2: x.norm().powi(2),
        }
    }
}

/// Per-block partial results of one E-step plus M-step accumulation.
struct Partial {
    weighted_sums: Vec<f64>,
    counts: Vec<f64>,
    log_lik: f64,
}

fn check_state(state_len: usize, obs: &ObservationSet) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if state_len != obs.signal_len() {
        return Err(Error::LengthMismatch {
            expected: obs.signal_len(),
            found: state_len,
        });
    }
    Ok(())
}

/// E-step for every row, writing responsibilities into `weights` and returning the
/// accumulated M-step sums. `sigma = 0` assigns each row to its nearest element.
fn sweep(
    orbit: &Orbit,
    obs: &ObservationSet,
    sigma: f64,
    weights: Option<&mut [f64]>,
) -> (Vec<f64>, Vec<f64>, f64) {
    let l = obs.signal_len();
    let k = 2 * l;
    let data = obs.data();
    let rows_per_block = ROW_BLOCK;
    let hard = sigma == 0.0;
    let inv2s2 = if hard { 0.0 } else { 1.0 / (2.0 * sigma * sigma) };
    let norm_const = if hard {
        0.0
    } else {
        0.5 * l as f64 * (2.0 * PI * sigma * sigma).ln()
    };

    let process = |block: &[f64], wblock: Option<&mut [f64]>| -> Partial {
        let rows = block.len() / l;
        let y = DMatrixView::from_slice(block, l, rows);
        // Column r holds the k inner products of observation r with the orbit.
        let mut w = orbit.images.tr_mul(&y);
        let mut log_lik = 0.0;
        let mut a = vec![0.0; k];
        let y2: Vec<f64> = y.column_iter().map(|c| c.norm_squared()).collect();
        for (col, y2) in w.as_mut_slice().chunks_exact_mut(k).zip(y2) {
            let base = y2 + orbit.x_norm2;
            if hard {
                for ((aj, &d), &lr) in a.iter_mut().zip(col.iter()).zip(&orbit.log_rho) {
                    *aj = if lr == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        -(base - 2.0 * d).max(0.0)
                    };
                }
                let mut best = 0;
                for j in 1..k {
                    if a[j] > a[best] {
                        best = j;
                    }
                }
                col.fill(0.0);
                col[best] = 1.0;
                log_lik += 0.5 * a[best];
            } else {
                let mut amax = f64::NEG_INFINITY;
                for ((aj, &d), &lr) in a.iter_mut().zip(col.iter()).zip(&orbit.log_rho) {
                    *aj = lr - (base - 2.0 * d).max(0.0) * inv2s2;
                    amax = amax.max(*aj);
                }
                let mut total = 0.0;
                for (c, &aj) in col.iter_mut().zip(&a) {
                    *c = (aj - amax).exp();
                    total += *c;
                }
                let inv = 1.0 / total;
                col.iter_mut().for_each(|c| *c *= inv);
                log_lik += amax + total.ln() - norm_const;
            }
        }
        let sums = y * w.transpose();
        let counts = w.column_sum();
        if let Some(wb) = wblock {
            wb.copy_from_slice(w.as_slice());
        }
        Partial {
            weighted_sums: sums.as_slice().to_vec(),
            counts: counts.as_slice().to_vec(),
            log_lik,
        }
    };

    let partials: Vec<Partial> = match weights {
        Some(w) => data
            .par_chunks(rows_per_block * l)
            .zip(w.par_chunks_mut(rows_per_block * k))
            .map(|(block, wb)| process(block, Some(wb)))
            .collect(),
        None => data
            .par_chunks(rows_per_block * l)
            .map(|block| process(block, None))
            .collect(),
    };
    let mut sums = vec![0.0; k * l];
    let mut counts = vec![0.0; k];
    let mut log_lik = 0.0;
    for p in partials {
        for (a, b) in sums.iter_mut().zip(&p.weighted_sums) {
            *a += b;
        }
        for (a, b) in counts.iter_mut().zip(&p.counts) {
            *a += b;
        }
        log_lik += p.log_lik;
    }
    (sums, counts, log_lik)
}

/// `x = (1/n) Σ_j g_j⁻¹ Σ_i w_ij y_i` and `ρ_j ∝ Σ_i w_ij`.
fn m_step(
    group: &[DihedralElement],
    sums: &[f64],
    counts: &[f64],
    n: usize,
    l: usize,
) -> Result<(Signal, GroupDistribution)> {
    let mut x = vec![0.0; l];
    let mut buf = vec![0.0; l];
    for (g, s) in group.iter().zip(sums.chunks_exact(l)) {
        g.inverse().apply_into(s, &mut buf);
        for (a, b) in x.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    for v in x.iter_mut() {
        *v /= n as f64;
    }
    let total: f64 = counts.iter().sum();
    let flat: Vec<f64> = counts.iter().map(|c| c / total).collect();
    Ok((Signal::new(x)?, GroupDistribution::project_flat(l, &flat)?))
}

/// `Σ_i log Σ_j ρ_j (2πσ²)^{-L/2} exp(-‖y_i − g_j·x‖² / 2σ²)`, evaluated in the log domain.
pub fn log_likelihood(
    x: &Signal,
    rho: &GroupDistribution,
    obs: &ObservationSet,
    sigma: f64,
) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "log-likelihood needs sigma > 0, got {sigma}"
        )));
    }
    check_state(x.len(), obs)?;
    if rho.order() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: rho.order(),
        });
    }
    let orbit = Orbit::new(x, rho);
    Ok(sweep(&orbit, obs, sigma, None).2)
}

/// One EM iteration from `(x_t, ρ_t)`; the returned weights are the E-step
/// responsibilities under `(x_t, ρ_t)`.
pub fn em_step(state: &EMState, obs: &ObservationSet, sigma: f64) -> Result<EMState> {
    em_step_with_likelihood(state, obs, sigma, true).map(|(s, _)| s)
}

/// As [`em_step`], also returning the log-likelihood of the input state (for
/// `sigma = 0`, minus half the sum of nearest-element squared distances). Weights are
/// left empty unless `keep_weights`.
fn em_step_with_likelihood(
    state: &EMState,
    obs: &ObservationSet,
    sigma: f64,
    keep_weights: bool,
) -> Result<(EMState, f64)> {
    check_state(state.x.len(), obs)?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid sigma {sigma}")));
    }
    let l = obs.signal_len();
    let orbit = Orbit::new(&state.x, &state.rho);
    let mut weights = if keep_weights {
        vec![0.0; obs.len() * 2 * l]
    } else {
        Vec::new()
    };
    let slot = keep_weights.then_some(weights.as_mut_slice());
    let (sums, counts, ll) = sweep(&orbit, obs, sigma, slot);
    let (x, rho) = m_step(&orbit.group, &sums, &counts, obs.len(), l)?;
    Ok((EMState { x, rho, weights }, ll))
}

struct Run {
    state: EMState,
    trace: Vec<f64>,
    iterations: usize,
}

fn run_from(
    x0: Signal,
    obs: &ObservationSet,
    sigma: f64,
    config: &EstimatorConfig,
) -> Result<Run> {
    let l = obs.signal_len();
    let mut state = EMState::new(x0, GroupDistribution::uniform(l))?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut prev: Option<f64> = None;
    loop {
        let (next, ll) = em_step_with_likelihood(&state, obs, sigma, false)?;
        trace.push(ll);
        if let Some(p) = prev {
            if ll - p < config.em_tol {
                break;
            }
        }
        if iterations >= config.em_max_iters {
            break;
        }
        prev = Some(ll);
        state = next;
        iterations += 1;
    }
    Ok(Run {
        state,
        trace,
        iterations,
    })
}

/// Random standard-normal start for the given start index.
pub fn initial_signal(signal_len: usize, seed: u64, start: usize) -> Result<Signal> {
    let mut rng = stream_rng(seed, Stream::EmInit, start as u64);
    Signal::new(
        (0..signal_len)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    )
}

/// EM from `config.em_starts` random signals with uniform `ρ`, keeping the run with
/// the highest final log-likelihood.
///
/// Each run stops once the log-likelihood gains less than `config.em_tol` or after
/// `config.em_max_iters` M-steps. The trace holds the log-likelihood of every iterate,
/// starting with the initial point.
pub fn estimate_by_em(
    obs: &ObservationSet,
    sigma: f64,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    let start = Instant::now();
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let l = obs.signal_len();
    let mut best: Option<Run> = None;
    for s in 0..config.em_starts.max(1) {
        let run = run_from(initial_signal(l, config.seed, s)?, obs, sigma, config)?;
        let last = *run.trace.last().unwrap_or(&f64::NEG_INFINITY);
        let better = best
            .as_ref()
            .is_none_or(|b| last > *b.trace.last().unwrap_or(&f64::NEG_INFINITY));
        if better {
            best = Some(run);
        }
    }
    let run = best.ok_or(Error::EmptyObservations)?;
    Ok(EstimateResult {
        x_est: run.state.x,
        rho_est: Some(run.state.rho),
        iterations: run.iterations,
        objective_trace: run.trace,
        wall_time: start.elapsed(),
    })
}
