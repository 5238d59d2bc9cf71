//! Signal estimators from noisy observations.
//!
//! - [`sync`]: pairwise alignment, spectral synchronization, then averaging
//! - [`em`]: expectation-maximization on the Gaussian mixture likelihood
//! - [`mom`]: nonconvex least squares on the first two moments

pub mod em;
pub mod mom;
pub mod sync;
mod trust_region;

use std::time::Duration;

use crate::group::Signal;
use crate::moments::GroupDistribution;

pub use em::{em_step, estimate_by_em, log_likelihood, EMState};
pub use mom::{estimate_by_mom, mom_objective, MomGradient};
pub use sync::{estimate_by_sync, pairwise_align, synchronize, SyncRatios};
pub use trust_region::{TrustRegionOptions, TrustRegionReport, TrustRegionStop};

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    /// Weight of the first-moment term; `None` means `L`.
    pub lambda: Option<f64>,
    pub em_max_iters: usize,
    /// Stop once the log-likelihood gains less than this.
    pub em_tol: f64,
    pub em_starts: usize,
    pub mom_starts: usize,
    pub mom_max_iters: usize,
    /// Root seed for random initializations.
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            em_max_iters: 400,
            em_tol: 1e-4,
            em_starts: 1,
            mom_starts: 10,
            mom_max_iters: 200,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn lambda_for(&self, signal_len: usize) -> f64 {
        self.lambda.unwrap_or(signal_len as f64)
    }
}

#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub x_est: Signal,
    pub rho_est: Option<GroupDistribution>,
    pub iterations: usize,
    /// Log-likelihood per iterate for EM, objective per accepted step for MoM.
    pub objective_trace: Vec<f64>,
    pub wall_time: Duration,
}
