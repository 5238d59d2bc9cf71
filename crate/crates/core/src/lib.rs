//! Dihedral multi-reference alignment.
//!
//! Observations are `y = g·x + ε` where `g` is drawn from a distribution `ρ` on the
//! dihedral group `D_2L` acting on length-`L` signals by cyclic shifts and reversal,
//! and `ε` is white Gaussian noise. The crate covers:
//!
//! - [`group`]: the group, its action, Fourier conventions
//! - [`moments`]: analytic and empirical first/second moments, Fourier moment table
//! - [`simulator`]: reproducible observation generation and a binary dataset format
//! - [`inversion`]: recovery of `(x, ρ)` up to the group from exact moments
//! - [`estimators`]: synchronization, expectation-maximization, method of moments
//! - [`bench`]: relative error, SNR sweeps, slope fits and CSV output
//!
//! ```
//! use dihedral_mra::{generate, sample_distribution, sample_signal, relative_error};
//! use dihedral_mra::estimators::{estimate_by_em, EstimatorConfig};
//!
//! let x = sample_signal(6, 1).unwrap();
//! let rho = sample_distribution(6, 1).unwrap();
//! let obs = generate(&x, &rho, 500, 0.1, 7).unwrap();
//! let est = estimate_by_em(&obs, 0.1, &EstimatorConfig::default()).unwrap();
//! assert!(relative_error(&est.x_est, &x).unwrap() < 0.1);
//! ```

pub mod bench;
pub mod error;
pub mod estimators;
pub mod group;
pub mod inversion;
pub mod moments;
pub mod rng;
pub mod simulator;

pub use bench::{fit_slope, relative_error};
pub use error::{Error, Result};
pub use group::{dft, elements, idft, DihedralElement, FourierSignal, Signal};
pub use inversion::{enumerate_candidates, invert, select_orbit, CandidateSet, InversionOptions};
pub use moments::{
    analytic_m1, analytic_m2, debias, empirical_moments, estimate_sigma2, fourier_moments,
    GroupDistribution, MomentPair,
};
pub use simulator::{generate, sample_distribution, sample_signal, ObservationSet};
