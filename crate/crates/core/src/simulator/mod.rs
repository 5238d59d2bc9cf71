//! Synthetic data from the observation model `y_i = g_i·x + ε_i`, `g_i ~ ρ`,
//! `ε_i ~ N(0, σ² I)`.

mod io;

pub use io::{export_csv, load, save, write_csv, FORMAT_VERSION, MAGIC};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::group::{DihedralElement, Signal, MIN_LEN};
use crate::moments::GroupDistribution;
use crate::rng::{stream_rng, Stream};

/// Observations generated per independent random stream.
const BLOCK: usize = 4096;

/// `n` noisy observations of length `L`, stored row-major, with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    data: Vec<f64>,
    signal_len: usize,
    sigma: f64,
    seed: u64,
    true_elements: Option<Vec<DihedralElement>>,
    true_signal: Option<Signal>,
    true_distribution: Option<GroupDistribution>,
}

impl ObservationSet {
    pub fn new(data: Vec<f64>, signal_len: usize, sigma: f64, seed: u64) -> Result<Self> {
        if signal_len < MIN_LEN {
            return Err(Error::InvalidArgument(format!(
                "signal length {signal_len} is below {MIN_LEN}"
            )));
        }
        if data.is_empty() {
            return Err(Error::EmptyObservations);
        }
        if data.len() % signal_len != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of length {signal_len}",
                data.len()
            )));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid sigma {sigma}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "observation {} has a non-finite entry",
                i / signal_len
            )));
        }
        Ok(Self {
            data,
            signal_len,
            sigma,
            seed,
            true_elements: None,
            true_signal: None,
            true_distribution: None,
        })
    }

    pub fn with_ground_truth(
        mut self,
        elements: Option<Vec<DihedralElement>>,
        signal: Option<Signal>,
        distribution: Option<GroupDistribution>,
    ) -> Result<Self> {
        let l = self.signal_len;
        if let Some(e) = &elements {
            if e.len() != self.len() {
                return Err(Error::LengthMismatch {
                    expected: self.len(),
                    found: e.len(),
                });
            }
            if e.iter().any(|g| g.order() != l) {
                return Err(Error::InvalidArgument("group element of wrong order".into()));
            }
        }
        if let Some(s) = &signal {
            if s.len() != l {
                return Err(Error::LengthMismatch {
                    expected: l,
                    found: s.len(),
                });
            }
        }
        if let Some(d) = &distribution {
            if d.order() != l {
                return Err(Error::LengthMismatch {
                    expected: l,
                    found: d.order(),
                });
            }
        }
        self.true_elements = elements;
        self.true_signal = signal;
        self.true_distribution = distribution;
        Ok(self)
    }

    /// Number of observations `n`.
    pub fn len(&self) -> usize {
        self.data.len() / self.signal_len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.signal_len..(i + 1) * self.signal_len]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.signal_len)
    }

    pub fn true_elements(&self) -> Option<&[DihedralElement]> {
        self.true_elements.as_deref()
    }

    pub fn true_signal(&self) -> Option<&Signal> {
        self.true_signal.as_ref()
    }

    pub fn true_distribution(&self) -> Option<&GroupDistribution> {
        self.true_distribution.as_ref()
    }
}

/// `SNR = ‖x‖² / (L σ²)`.
pub fn snr_for_sigma(x: &Signal, sigma: f64) -> f64 {
    x.norm().powi(2) / (x.len() as f64 * sigma * sigma)
}

pub fn sigma_for_snr(x: &Signal, snr: f64) -> Result<f64> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::InvalidArgument(format!("SNR must be positive, got {snr}")));
    }
    Ok((x.norm().powi(2) / (x.len() as f64 * snr)).sqrt())
}

/// Noise level requested either directly or through the SNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseLevel {
    Sigma(f64),
    Snr(f64),
}

impl NoiseLevel {
    pub fn sigma_for(&self, x: &Signal) -> Result<f64> {
        match *self {
            NoiseLevel::Sigma(s) if s >= 0.0 && s.is_finite() => Ok(s),
            NoiseLevel::Sigma(s) => Err(Error::InvalidArgument(format!("invalid sigma {s}"))),
            NoiseLevel::Snr(snr) => sigma_for_snr(x, snr),
        }
    }
}

/// One experiment: problem size, noise, seeds and estimator knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub signal_len: usize,
    pub n: usize,
    pub noise: NoiseLevel,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<String>,
    pub estimator: crate::estimators::EstimatorConfig,
}

/// i.i.d. standard normal entries.
pub fn sample_signal(signal_len: usize, seed: u64) -> Result<Signal> {
    if signal_len < MIN_LEN {
        return Err(Error::InvalidArgument(format!(
            "signal length {signal_len} is below {MIN_LEN}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Signal, 0);
    Signal::new(
        (0..signal_len)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

/// Uniform point of the `2L`-simplex: normalized i.i.d. exponentials.
pub fn sample_distribution(signal_len: usize, seed: u64) -> Result<GroupDistribution> {
    if signal_len < MIN_LEN {
        return Err(Error::InvalidArgument(format!(
            "signal length {signal_len} is below {MIN_LEN}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Distribution, 0);
    let raw: Vec<f64> = (0..2 * signal_len).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut flat: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // Push the rounding residue into the largest entry so the sum is 1 to the last ulp.
    let excess = flat.iter().sum::<f64>() - 1.0;
    let imax = (0..flat.len())
        .max_by(|&a, &b| flat[a].total_cmp(&flat[b]))
        .unwrap_or(0);
    flat[imax] -= excess;
    GroupDistribution::from_flat(signal_len, &flat)
}

/// Inverse-CDF sampler over the canonical element order.
struct ElementSampler {
    order: usize,
    cdf: Vec<f64>,
}

impl ElementSampler {
    fn new(rho: &GroupDistribution) -> Self {
        let mut acc = 0.0;
        let cdf = rho
            .to_flat()
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self {
            order: rho.order(),
            cdf,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> DihedralElement {
        let total = *self.cdf.last().unwrap();
        let u = rng.random::<f64>() * total;
        // First index whose cumulative weight exceeds u; zero-weight elements are never chosen.
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        DihedralElement::from_index(self.order, idx)
    }
}

/// Draws `n` observations. Deterministic in `seed` and independent of thread count.
pub fn generate(
    x: &Signal,
    rho: &GroupDistribution,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<ObservationSet> {
    let l = x.len();
    if rho.order() != l {
        return Err(Error::LengthMismatch {
            expected: l,
            found: rho.order(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyObservations);
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid sigma {sigma}")));
    }
    let sampler = ElementSampler::new(rho);
    let blocks: Vec<(Vec<f64>, Vec<DihedralElement>)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let count = BLOCK.min(n - b * BLOCK);
            let mut erng = stream_rng(seed, Stream::Elements, b as u64);
            let mut nrng = stream_rng(seed, Stream::Noise, b as u64);
            let mut data = vec![0.0; count * l];
            let mut elems = Vec::with_capacity(count);
            for row in data.chunks_exact_mut(l) {
                let g = sampler.sample(&mut erng);
                g.apply_into(x.as_slice(), row);
                if sigma > 0.0 {
                    for v in row.iter_mut() {
                        *v += sigma * nrng.sample::<f64, _>(StandardNormal);
                    }
                }
                elems.push(g);
            }
            (data, elems)
        })
        .collect();
    let mut data = Vec::with_capacity(n * l);
    let mut elements = Vec::with_capacity(n);
    for (d, e) in blocks {
        data.extend(d);
        elements.extend(e);
    }
    ObservationSet::new(data, l, sigma, seed)?.with_ground_truth(
        Some(elements),
        Some(x.clone()),
        Some(rho.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::elements;

    #[test]
    fn sample_signal_is_deterministic() {
        let a = sample_signal(10, 42).unwrap();
        assert_eq!(a, sample_signal(10, 42).unwrap());
        assert_ne!(a, sample_signal(10, 43).unwrap());
        assert_eq!(a.len(), 10);
        assert!(sample_signal(2, 1).is_err());
    }

    #[test]
    fn sample_signal_mean_is_near_zero() {
        // Mean of 10 standard normals has sd 1/√10; the average over 400 seeds has
        // sd 1/√4000.
        let total: f64 = (0..400)
            .map(|s| sample_signal(10, s).unwrap().as_slice().iter().sum::<f64>() / 10.0)
            .sum();
        let mean = total / 400.0;
        assert!(mean.abs() < 5.0 / 4000f64.sqrt(), "mean {mean}");
    }

    #[test]
    fn sample_distribution_is_on_simplex() {
        for seed in 0..50 {
            let d = sample_distribution(7, seed).unwrap();
            let total: f64 = d.to_flat().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            sample_distribution(5, 9).unwrap(),
            sample_distribution(5, 9).unwrap()
        );
    }

    #[test]
    fn sample_distribution_coordinate_means() {
        // Each coordinate of a uniform simplex point in dimension m = 2L has mean 1/m and
        // variance (m-1)/(m²(m+1)).
        let l = 5;
        let m = 2 * l;
        let draws = 10_000;
        let mut sums = vec![0.0; m];
        for seed in 0..draws {
            for (s, v) in sums.iter_mut().zip(sample_distribution(l, seed).unwrap().to_flat()) {
                *s += v;
            }
        }
        let mf = m as f64;
        let var = (mf - 1.0) / (mf * mf * (mf + 1.0));
        let se = (var / draws as f64).sqrt();
        for s in sums {
            let mean = s / draws as f64;
            assert!((mean - 1.0 / mf).abs() < 3.0 * se + 1e-12, "mean {mean}");
        }
    }

    #[test]
    fn noiseless_identity_rows_equal_signal() {
        let x = sample_signal(6, 1).unwrap();
        let rho = GroupDistribution::point_mass(DihedralElement::identity(6));
        let obs = generate(&x, &rho, 50, 0.0, 3).unwrap();
        for row in obs.rows() {
            assert_eq!(row, x.as_slice());
        }
    }

    #[test]
    fn noiseless_rows_lie_in_orbit() {
        let x = sample_signal(7, 2).unwrap();
        let rho = sample_distribution(7, 2).unwrap();
        let obs = generate(&x, &rho, 500, 0.0, 2).unwrap();
        let elems = obs.true_elements().unwrap();
        for (row, g) in obs.rows().zip(elems) {
            assert_eq!(row, g.apply(&x).unwrap().as_slice());
        }
    }

    #[test]
    fn element_frequencies_match_distribution() {
        let l = 5;
        let n = 100_000;
        let x = sample_signal(l, 4).unwrap();
        let rho = sample_distribution(l, 4).unwrap();
        let obs = generate(&x, &rho, n, 0.1, 4).unwrap();
        let mut counts = vec![0usize; 2 * l];
        for g in obs.true_elements().unwrap() {
            counts[g.index()] += 1;
        }
        for g in elements(l) {
            let p = rho.weight(&g);
            let freq = counts[g.index()] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 5.0 * se + 1e-12, "{g}: {freq} vs {p}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let x = sample_signal(8, 5).unwrap();
        let rho = sample_distribution(8, 5).unwrap();
        let a = generate(&x, &rho, 9000, 0.7, 77).unwrap();
        let b = generate(&x, &rho, 9000, 0.7, 77).unwrap();
        assert_eq!(a, b);
        let c = generate(&x, &rho, 9000, 0.7, 78).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn snr_round_trip() {
        let x = sample_signal(10, 3).unwrap();
        for snr in [0.01, 0.5, 1.0, 37.0, 100.0] {
            let sigma = sigma_for_snr(&x, snr).unwrap();
            assert!((snr_for_sigma(&x, sigma) - snr).abs() <= 1e-12 * snr);
        }
        assert!(sigma_for_snr(&x, 0.0).is_err());
    }

    #[test]
    fn noise_is_isotropic() {
        let l = 4;
        let n = 40_000;
        let sigma = 1.3;
        let x = sample_signal(l, 8).unwrap();
        let rho = sample_distribution(l, 8).unwrap();
        let obs = generate(&x, &rho, n, sigma, 8).unwrap();
        let mut cov = vec![0.0; l * l];
        for (row, g) in obs.rows().zip(obs.true_elements().unwrap()) {
            let gx = g.apply(&x).unwrap();
            let e: Vec<f64> = row.iter().zip(gx.as_slice()).map(|(y, c)| y - c).collect();
            for a in 0..l {
                for b in 0..l {
                    cov[a * l + b] += e[a] * e[b] / n as f64;
                }
            }
        }
        let s2 = sigma * sigma;
        // Entry sd is about σ²·√2/√n on the diagonal and σ²/√n off it.
        let tol = 5.0 * s2 * (2.0 / n as f64).sqrt();
        for a in 0..l {
            for b in 0..l {
                let expect = if a == b { s2 } else { 0.0 };
                assert!((cov[a * l + b] - expect).abs() < tol);
            }
        }
    }

    #[test]
    fn generate_rejects_bad_input() {
        let x = sample_signal(5, 1).unwrap();
        let rho = sample_distribution(5, 1).unwrap();
        assert!(generate(&x, &rho, 0, 1.0, 0).is_err());
        assert!(generate(&x, &rho, 10, -1.0, 0).is_err());
        let other = sample_distribution(6, 1).unwrap();
        assert!(generate(&x, &other, 10, 1.0, 0).is_err());
    }
}
