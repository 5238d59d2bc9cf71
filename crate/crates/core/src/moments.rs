//! First and second moments of dihedral MRA observations: analytic population
//! moments, empirical averages, noise debiasing and the Fourier-domain table
//! `M_{i,j}` read by the inversion.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::group::{dft_complex, dft_slice, DihedralElement, Signal};
use crate::simulator::ObservationSet;

/// Tolerance on `sum(p) + sum(q) = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Probability vector over `D_2L`: `p[k]` for `r^k`, `q[k]` for `r^k s`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupDistribution {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl GroupDistribution {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::LengthMismatch {
                expected: p.len(),
                found: q.len(),
            });
        }
        if p.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some(v) = p.iter().chain(&q).find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {v} is negative or not finite"
            )));
        }
        let total: f64 = p.iter().chain(&q).sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, not 1"
            )));
        }
        Ok(Self { p, q })
    }

    /// Builds from a vector in canonical element order (`p` then `q`).
    pub fn from_flat(order: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * order {
            return Err(Error::LengthMismatch {
                expected: 2 * order,
                found: flat.len(),
            });
        }
        Self::new(flat[..order].to_vec(), flat[order..].to_vec())
    }

    pub fn uniform(order: usize) -> Self {
        let w = 1.0 / (2 * order) as f64;
        Self {
            p: vec![w; order],
            q: vec![w; order],
        }
    }

    pub fn point_mass(g: DihedralElement) -> Self {
        let n = g.order();
        let mut flat = vec![0.0; 2 * n];
        flat[g.index()] = 1.0;
        Self {
            p: flat[..n].to_vec(),
            q: flat[n..].to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn weight(&self, g: &DihedralElement) -> f64 {
        if g.is_reflection() {
            self.q[g.rotation()]
        } else {
            self.p[g.rotation()]
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.p.iter().chain(&self.q).copied().collect()
    }

    /// The distribution `g ↦ ρ(g·h)`. Data generated from `(h⁻¹·x, ρ)` has the
    /// same law as data from `(x, ρ.translated(h⁻¹))`; more usefully, `(h·x,
    /// ρ.translated(h))` has exactly the moments of `(x, ρ)`.
    pub fn translated(&self, h: &DihedralElement) -> Self {
        let n = self.order();
        let mut flat = vec![0.0; 2 * n];
        for g in crate::group::elements(n) {
            let gh = g.compose(h).expect("same order");
            flat[g.index()] = self.weight(&gh);
        }
        Self {
            p: flat[..n].to_vec(),
            q: flat[n..].to_vec(),
        }
    }

    /// Euclidean projection of an arbitrary vector (canonical order) onto the simplex.
    pub fn project_flat(order: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 2 * order {
            return Err(Error::LengthMismatch {
                expected: 2 * order,
                found: v.len(),
            });
        }
        let mut sorted = v.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut cumsum = 0.0;
        let mut theta = 0.0;
        for (k, &u) in sorted.iter().enumerate() {
            cumsum += u;
            let t = (cumsum - 1.0) / (k + 1) as f64;
            if u - t > 0.0 {
                theta = t;
            }
        }
        let mut flat: Vec<f64> = v.iter().map(|&u| (u - theta).max(0.0)).collect();
        let total: f64 = flat.iter().sum();
        flat.iter_mut().for_each(|u| *u /= total);
        Ok(Self {
            p: flat[..order].to_vec(),
            q: flat[order..].to_vec(),
        })
    }
}

fn check_len(x: &Signal, rho: &GroupDistribution) -> Result<usize> {
    if x.len() != rho.order() {
        return Err(Error::LengthMismatch {
            expected: rho.order(),
            found: x.len(),
        });
    }
    Ok(x.len())
}

/// `M¹ = C_p x + C_q (s·x)`.
pub fn analytic_m1(x: &Signal, rho: &GroupDistribution) -> Result<Vec<f64>> {
    let n = check_len(x, rho)?;
    let x = x.as_slice();
    Ok((0..n)
        .map(|l| {
            (0..n)
                .map(|k| rho.p[k] * x[(l + n - k) % n] + rho.q[k] * x[(k + n - l) % n])
                .sum()
        })
        .collect())
}

/// `M² = C_x D_p C_xᵀ + C_{sx} D_q C_{sx}ᵀ + σ² I`, row-major `L×L`.
pub fn analytic_m2(x: &Signal, rho: &GroupDistribution, sigma: f64) -> Result<Vec<f64>> {
    let n = check_len(x, rho)?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma must be finite and nonnegative, got {sigma}"
        )));
    }
    let x = x.as_slice();
    // Column k of C_x is r^k·x, column k of C_{sx} is r^k s·x.
    let cx = |a: usize, k: usize| x[(a + n - k) % n];
    let csx = |a: usize, k: usize| x[(k + n - a) % n];
    let mut m2 = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v: f64 = (0..n)
                .map(|k| rho.p[k] * cx(a, k) * cx(b, k) + rho.q[k] * csx(a, k) * csx(b, k))
                .sum();
            m2[a * n + b] = v;
            m2[b * n + a] = v;
        }
    }
    let s2 = sigma * sigma;
    for a in 0..n {
        m2[a * n + a] += s2;
    }
    Ok(m2)
}

/// First moment, symmetric second moment (row-major) and the noise variance still
/// contained in `m2` (0 once debiased).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPair {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub sigma2: f64,
}

impl MomentPair {
    pub fn order(&self) -> usize {
        self.m1.len()
    }

    pub fn m2_at(&self, i: usize, j: usize) -> f64 {
        self.m2[i * self.order() + j]
    }

    /// Population moments of `(x, ρ)` with noise level `sigma`.
    pub fn analytic(x: &Signal, rho: &GroupDistribution, sigma: f64) -> Result<Self> {
        Ok(Self {
            m1: analytic_m1(x, rho)?,
            m2: analytic_m2(x, rho, sigma)?,
            sigma2: sigma * sigma,
        })
    }

    /// Adds `sigma2 · I` back to the second moment.
    pub fn with_noise(&self, sigma2: f64) -> Self {
        let n = self.order();
        let mut m2 = self.m2.clone();
        for a in 0..n {
            m2[a * n + a] += sigma2;
        }
        Self {
            m1: self.m1.clone(),
            m2,
            sigma2: self.sigma2 + sigma2,
        }
    }

    pub fn is_debiased(&self) -> bool {
        self.sigma2 == 0.0
    }
}

const SUM_BLOCK: usize = 512;

/// Partial sums `(Σ y, Σ y yᵀ upper triangle)` over `rows`, combined pairwise so the
/// result does not depend on how rayon schedules the halves.
fn moment_sums(rows: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let count = rows.len() / n;
    if count <= SUM_BLOCK {
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n * n];
        for y in rows.chunks_exact(n) {
            for a in 0..n {
                s1[a] += y[a];
                let ya = y[a];
                let row = &mut s2[a * n..(a + 1) * n];
                for b in a..n {
                    row[b] += ya * y[b];
                }
            }
        }
        return (s1, s2);
    }
    let mid = (count / 2) * n;
    let ((mut a1, mut a2), (b1, b2)) = rayon::join(
        || moment_sums(&rows[..mid], n),
        || moment_sums(&rows[mid..], n),
    );
    a1.iter_mut().zip(&b1).for_each(|(a, b)| *a += b);
    a2.iter_mut().zip(&b2).for_each(|(a, b)| *a += b);
    (a1, a2)
}

/// `m1 = (1/n) Σ y_i`, `m2 = (1/n) Σ y_i y_iᵀ`; `sigma2` records the dataset's noise level.
pub fn empirical_moments(obs: &ObservationSet) -> Result<MomentPair> {
    let n = obs.len();
    if n == 0 {
        return Err(Error::EmptyObservations);
    }
    let l = obs.signal_len();
    let (mut s1, mut s2) = moment_sums(obs.data(), l);
    let inv = 1.0 / n as f64;
    s1.iter_mut().for_each(|v| *v *= inv);
    for a in 0..l {
        for b in a..l {
            let v = s2[a * l + b] * inv;
            s2[a * l + b] = v;
            s2[b * l + a] = v;
        }
    }
    Ok(MomentPair {
        m1: s1,
        m2: s2,
        sigma2: obs.sigma() * obs.sigma(),
    })
}

/// Unbiased noise-variance estimate: sample variance (denominator `n-1`) of the
/// group-invariant statistic `(1/√L) Σ_l y_i[l]`.
pub fn estimate_sigma2(obs: &ObservationSet) -> Result<f64> {
    let n = obs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 observations to estimate the noise variance, got {n}"
        )));
    }
    let l = obs.signal_len();
    let scale = 1.0 / (l as f64).sqrt();
    let stats: Vec<f64> = obs
        .data()
        .par_chunks_exact(l)
        .map(|y| y.iter().sum::<f64>() * scale)
        .collect();
    let mean = stats.iter().sum::<f64>() / n as f64;
    let ss: f64 = stats.iter().map(|s| (s - mean) * (s - mean)).sum();
    Ok((ss / (n - 1) as f64).max(0.0))
}

/// Removes `sigma2 · I` from the second moment.
pub fn debias(m: &MomentPair, sigma2: f64) -> Result<MomentPair> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma2 must be finite and nonnegative, got {sigma2}"
        )));
    }
    let n = m.order();
    let mut m2 = m.m2.clone();
    for a in 0..n {
        m2[a * n + a] -= sigma2;
    }
    Ok(MomentPair {
        m1: m.m1.clone(),
        m2,
        sigma2: 0.0,
    })
}

/// Read access to the Fourier moment entries `M_{i,j}`; indices are taken mod `L`.
pub trait MomentEntries {
    fn order(&self) -> usize;
    /// `M̂¹[0] = x̂[0]`.
    fn dc(&self) -> f64;
    fn entry(&self, i: i64, j: i64) -> Complex64;
}

/// `M̂¹ = F m1` and the table `M_{i,j} = (F m2 F*)[i, -j]`, which for exact moments
/// equals `p̂[i+j] x̂[i] x̂[j] + q̂[i+j] x̂[-i] x̂[-j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMomentTable {
    order: usize,
    mhat1: Vec<Complex64>,
    /// Row-major `M_{i,j}` for `i, j` in `0..L`.
    entries: Vec<Complex64>,
}

impl FourierMomentTable {
    /// A table from explicit values, e.g. closed-form entries.
    pub fn from_fn(
        order: usize,
        mhat1: Vec<Complex64>,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        if mhat1.len() != order {
            return Err(Error::LengthMismatch {
                expected: order,
                found: mhat1.len(),
            });
        }
        let mut entries = Vec::with_capacity(order * order);
        for i in 0..order {
            for j in 0..order {
                entries.push(f(i, j));
            }
        }
        Ok(Self {
            order,
            mhat1,
            entries,
        })
    }

    pub fn mhat1(&self) -> &[Complex64] {
        &self.mhat1
    }
}

impl MomentEntries for FourierMomentTable {
    fn order(&self) -> usize {
        self.order
    }

    fn dc(&self) -> f64 {
        self.mhat1[0].re
    }

    fn entry(&self, i: i64, j: i64) -> Complex64 {
        let n = self.order as i64;
        let i = i.rem_euclid(n) as usize;
        let j = j.rem_euclid(n) as usize;
        self.entries[i * self.order + j]
    }
}

pub fn fourier_moments(m: &MomentPair) -> Result<FourierMomentTable> {
    if !m.is_debiased() {
        return Err(Error::NotDebiased { sigma2: m.sigma2 });
    }
    let n = m.order();
    if m.m2.len() != n * n {
        return Err(Error::LengthMismatch {
            expected: n * n,
            found: m.m2.len(),
        });
    }
    let mhat1 = dft_slice(&m.m1);
    // A = F m2 (transform each column), then (A F*)[i, j] = conj(F conj(A[i, ·]))[j].
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for col in 0..n {
        let column: Vec<f64> = (0..n).map(|row| m.m2[row * n + col]).collect();
        for (row, v) in dft_slice(&column).into_iter().enumerate() {
            a[row * n + col] = v;
        }
    }
    let mut full = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let conj_row: Vec<Complex64> = a[i * n..(i + 1) * n].iter().map(|c| c.conj()).collect();
        for (j, v) in dft_complex(&conj_row).into_iter().enumerate() {
            full[i * n + j] = v.conj();
        }
    }
    FourierMomentTable::from_fn(n, mhat1, |i, j| full[i * n + (n - j) % n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::elements;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Σ_g ρ(g) (g·x) and Σ_g ρ(g) (g·x)(g·x)ᵀ + σ² I by enumeration.
    fn brute_force(x: &Signal, rho: &GroupDistribution, sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut m1 = vec![0.0; n];
        let mut m2 = vec![0.0; n * n];
        for g in elements(n) {
            let w = rho.weight(&g);
            let gx = g.apply(x).unwrap();
            let gx = gx.as_slice();
            for a in 0..n {
                m1[a] += w * gx[a];
                for b in 0..n {
                    m2[a * n + b] += w * gx[a] * gx[b];
                }
            }
        }
        for a in 0..n {
            m2[a * n + a] += sigma * sigma;
        }
        (m1, m2)
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Signal, GroupDistribution) {
        let x = Signal::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let raw: Vec<f64> = (0..2 * n).map(|_| -rng.random::<f64>().ln()).collect();
        let total: f64 = raw.iter().sum();
        let flat: Vec<f64> = raw.iter().map(|v| v / total).collect();
        (x, GroupDistribution::from_flat(n, &flat).unwrap())
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn m1_examples() {
        let x = Signal::new(vec![1.0, 2.0, 3.0]).unwrap();
        let id = GroupDistribution::point_mass(DihedralElement::identity(3));
        assert_eq!(analytic_m1(&x, &id).unwrap(), vec![1.0, 2.0, 3.0]);
        let m1 = analytic_m1(&x, &GroupDistribution::uniform(3)).unwrap();
        assert!(max_abs_diff(&m1, &[2.0, 2.0, 2.0]) < 1e-15);
        let e = Signal::new(vec![1.0, 0.0, 0.0]).unwrap();
        let r = GroupDistribution::point_mass(DihedralElement::r(3));
        assert_eq!(analytic_m1(&e, &r).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn m2_examples() {
        let x = Signal::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let id = GroupDistribution::point_mass(DihedralElement::identity(4));
        let m2 = analytic_m2(&x, &id, 0.0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(m2[a * 4 + b], x.as_slice()[a] * x.as_slice()[b]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, rho) = random_instance(&mut rng, 5);
        let noisy = analytic_m2(&x, &rho, 2.0).unwrap();
        let clean = analytic_m2(&x, &rho, 0.0).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let expect = clean[a * 5 + b] + if a == b { 4.0 } else { 0.0 };
                assert!((noisy[a * 5 + b] - expect).abs() < 1e-14);
            }
        }
        assert!(analytic_m2(&x, &rho, -1.0).is_err());
    }

    #[test]
    fn oracle_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 3..=10 {
            for _ in 0..100 {
                let (x, rho) = random_instance(&mut rng, n);
                let sigma = rng.random_range(0.0..3.0);
                let (b1, b2) = brute_force(&x, &rho, sigma);
                assert!(max_abs_diff(&analytic_m1(&x, &rho).unwrap(), &b1) < 1e-12);
                assert!(max_abs_diff(&analytic_m2(&x, &rho, sigma).unwrap(), &b2) < 1e-12);
            }
        }
    }

    #[test]
    fn orbit_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..8 {
            let (x, rho) = random_instance(&mut rng, n);
            let base = MomentPair::analytic(&x, &rho, 0.0).unwrap();
            for h in elements(n) {
                let hx = h.apply(&x).unwrap();
                let moved = MomentPair::analytic(&hx, &rho.translated(&h), 0.0).unwrap();
                assert!(max_abs_diff(&base.m1, &moved.m1) < 1e-13);
                assert!(max_abs_diff(&base.m2, &moved.m2) < 1e-13);
            }
        }
    }

    #[test]
    fn debias_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, rho) = random_instance(&mut rng, 6);
        let noisy = MomentPair::analytic(&x, &rho, 1.5).unwrap();
        let clean = MomentPair::analytic(&x, &rho, 0.0).unwrap();
        let d = debias(&noisy, 2.25).unwrap();
        assert!(max_abs_diff(&d.m2, &clean.m2) < 1e-14);
        assert_eq!(d.sigma2, 0.0);
        assert_eq!(debias(&clean, 0.0).unwrap(), clean);
        let back = debias(&noisy, 0.7).unwrap().with_noise(0.7);
        assert!(max_abs_diff(&back.m2, &noisy.m2) <= 1e-15 * 8.0);
        assert!(debias(&noisy, -1.0).is_err());
    }

    #[test]
    fn fourier_moments_require_debiasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, rho) = random_instance(&mut rng, 5);
        let m = MomentPair::analytic(&x, &rho, 1.0).unwrap();
        assert!(matches!(fourier_moments(&m), Err(Error::NotDebiased { .. })));
    }

    #[test]
    fn fourier_table_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [5usize, 6, 9] {
            let (x, rho) = random_instance(&mut rng, n);
            let table = fourier_moments(&MomentPair::analytic(&x, &rho, 0.0).unwrap()).unwrap();
            // Independent route: transform x, p, q directly.
            let xh = dft_slice(x.as_slice());
            let ph = dft_slice(rho.p());
            let qh = dft_slice(rho.q());
            let at = |v: &[Complex64], k: i64| v[k.rem_euclid(n as i64) as usize];
            for i in 0..n as i64 {
                for j in 0..n as i64 {
                    let closed = at(&ph, i + j) * at(&xh, i) * at(&xh, j)
                        + at(&qh, i + j) * at(&xh, -i) * at(&xh, -j);
                    assert!((table.entry(i, j) - closed).norm() < 1e-10);
                }
                let power = table.entry(i, -i);
                assert!((power.re - at(&xh, i).norm_sqr()).abs() < 1e-10);
                assert!(power.im.abs() < 1e-10);
            }
            let sum: f64 = x.as_slice().iter().sum();
            assert!((table.dc() - sum).abs() < 1e-12);
            assert!((ph[0] + qh[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_onto_simplex() {
        let d = GroupDistribution::project_flat(3, &[0.5, -0.2, 0.1, 0.3, 0.4, 0.0]).unwrap();
        let total: f64 = d.to_flat().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(d.to_flat().iter().all(|v| *v >= 0.0));
        let inside = [0.1, 0.2, 0.1, 0.2, 0.3, 0.1];
        let same = GroupDistribution::project_flat(3, &inside).unwrap();
        assert!(max_abs_diff(&same.to_flat(), &inside) < 1e-15);
    }

    #[test]
    fn distribution_validation() {
        assert!(GroupDistribution::new(vec![0.5, 0.5, 0.1], vec![0.0; 3]).is_err());
        assert!(GroupDistribution::new(vec![1.0, -0.1, 0.1], vec![0.0; 3]).is_err());
        assert!(GroupDistribution::new(vec![0.5; 2], vec![0.0; 3]).is_err());
        assert!(GroupDistribution::new(vec![0.25; 2], vec![0.25; 2]).is_ok());
    }
}
