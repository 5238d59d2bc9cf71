//! Orbit recovery from exact (or nearly exact) first and second moments.
//!
//! After dividing out the power spectrum, the unit Fourier phases `z[k]` of the
//! signal satisfy, for every index pair,
//!
//! ```text
//! M_{i,j} = P[i+j] z[i] z[j] + Q[i+j] / (z[i] z[j])
//! ```
//!
//! with unknown per-sum coefficients `P`, `Q` coming from the distribution. Pairs
//! sharing an index sum give linear equations in `(P, Q)` whose consistency pins
//! the phases:
//!
//! 1. `z[2]` solves a real palindromic quadratic whose coefficients `B1`, `B2` are
//!    built from six moment entries (two roots, swapped by reflection).
//! 2. `z[3]` is a rational function of `(z[1], z[2])`.
//! 3. `z[n+1] = a / b` for `n ≥ 3`, rational in `z[1], z[2], z[n-1], z[n]`.
//! 4. All equations are weighted homogeneous (`z[k]` has weight `k`), so `z[1]` is
//!    free; a realness constraint at the middle index leaves `L` choices of the
//!    global phase per branch, hence at most `2L` candidates.
//!
//! Only about `5L/2` entries of the table are read.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::group::{elements, idft_complex, root_of_unity, Signal};
use crate::moments::{analytic_m1, analytic_m2, GroupDistribution, MomentEntries, MomentPair};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionOptions {
    /// A denominator or leading coefficient is treated as zero below this fraction of
    /// the largest monomial in its expression.
    pub degeneracy_tol: f64,
    /// Maximum `‖Im idft‖ / ‖Re idft‖` for a candidate to count as real.
    pub realness_tol: f64,
    /// Maximum relative residual of the two quadratics checked by [`z_next`];
    /// `None` skips the check (useful for empirical moments).
    pub consistency_tol: Option<f64>,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            degeneracy_tol: 1e-10,
            realness_tol: 1e-6,
            consistency_tol: Some(1e-4),
        }
    }
}

fn max_norm(terms: &[Complex64]) -> f64 {
    terms.iter().map(|t| t.norm()).fold(0.0, f64::max)
}

fn check_nonzero(what: &str, value: Complex64, terms: &[Complex64], tol: f64) -> Result<()> {
    let scale = max_norm(terms);
    if !value.is_finite() || value.norm() <= tol * scale || scale == 0.0 {
        return Err(Error::Degenerate {
            what: what.to_string(),
            value: value.norm(),
            scale,
        });
    }
    Ok(())
}

/// The moment table rescaled as if `|x̂[i]| = 1` and `x̂[0] = 1`.
///
/// Entries are rescaled on access so the wrapped table sees exactly the reads the
/// recursion performs.
#[derive(Debug)]
pub struct NormalizedMoments<'a, T: MomentEntries> {
    source: &'a T,
    /// `|x̂[k]|` for `k = 0..=⌊L/2⌋`.
    magnitudes: Vec<f64>,
    dc: f64,
}

impl<T: MomentEntries> NormalizedMoments<'_, T> {
    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// `x̂[0]`, sign included.
    pub fn dc(&self) -> f64 {
        self.dc
    }

    fn scale_of(&self, k: i64) -> f64 {
        let n = self.source.order() as i64;
        let k = k.rem_euclid(n);
        if k == 0 {
            return self.dc;
        }
        let k = k.min(n - k) as usize;
        self.magnitudes[k]
    }
}

impl<T: MomentEntries> MomentEntries for NormalizedMoments<'_, T> {
    fn order(&self) -> usize {
        self.source.order()
    }

    fn dc(&self) -> f64 {
        1.0
    }

    fn entry(&self, i: i64, j: i64) -> Complex64 {
        self.source.entry(i, j) / (self.scale_of(i) * self.scale_of(j))
    }
}

/// Reads the power spectrum `M_{k,-k} = |x̂[k]|²` and the dc term `M̂¹[0]`.
pub fn normalize_by_power_spectrum<T: MomentEntries>(
    table: &T,
    tol: f64,
) -> Result<NormalizedMoments<'_, T>> {
    let n = table.order();
    let half = n / 2;
    let dc = table.dc();
    let power: Vec<f64> = (1..=half as i64).map(|k| table.entry(k, -k).re).collect();
    let scale = power.iter().copied().fold(dc * dc, f64::max);
    if !(dc.abs() > (tol * scale).sqrt()) {
        return Err(Error::Degenerate {
            what: "dc coefficient x̂[0]".into(),
            value: dc.abs(),
            scale: scale.sqrt(),
        });
    }
    let mut magnitudes = vec![dc.abs()];
    for (k, &pw) in power.iter().enumerate() {
        if !(pw > tol * scale) {
            return Err(Error::Degenerate {
                what: format!("power spectrum entry M[{0},-{0}]", k + 1),
                value: pw,
                scale,
            });
        }
        magnitudes.push(pw.sqrt());
    }
    Ok(NormalizedMoments {
        source: table,
        magnitudes,
        dc,
    })
}

/// Coefficients of the palindromic quartic in `z[2]` and of its real reduction
/// `B1 z[1]⁴ + B2 z[1]² z[2] + B1 z[2]² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuarticCoefficients {
    pub a0: Complex64,
    pub a1: Complex64,
    pub a2: Complex64,
    pub b1: f64,
    pub b2: f64,
}

pub fn quartic_coefficients<T: MomentEntries>(t: &T) -> QuarticCoefficients {
    let m10 = t.entry(1, 0);
    let m11 = t.entry(1, 1);
    let m2m1 = t.entry(2, -1);
    let m20 = t.entry(2, 0);
    let m3m2 = t.entry(3, -2);
    let m3m1 = t.entry(3, -1);
    let two = Complex64::new(2.0, 0.0);

    let a0 = m10 * m10 * m20 * m20 - m10 * m20 * m3m2 * m3m1;
    let a1 = -two * m10 * m10 * m11 * m20 - two * m10 * m2m1 * m20 * m20
        + m11 * m20 * m3m2 * m3m2
        + m10 * m11 * m3m2 * m3m1
        + m2m1 * m20 * m3m2 * m3m1
        + m10 * m2m1 * m3m1 * m3m1;
    let a2 = m10 * m10 * m11 * m11
        + two * m10 * m11 * m2m1 * m20
        + two * m10 * m10 * m20 * m20
        + m2m1 * m2m1 * m20 * m20
        - m11 * m11 * m3m2 * m3m2
        - m20 * m20 * m3m2 * m3m2
        - two * m11 * m2m1 * m3m2 * m3m1
        - m10 * m10 * m3m1 * m3m1
        - m2m1 * m2m1 * m3m1 * m3m1;

    QuarticCoefficients {
        a0,
        a1,
        a2,
        b1: 2.0 * (a0.conj() * a1).im,
        b2: 2.0 * (a0.conj() * a2).im,
    }
}

/// Both roots in `z[2]` of `B1 z[1]⁴ + B2 z[1]² z[2] + B1 z[2]² = 0`; their product is `z[1]⁴`.
pub fn solve_z2(z1: Complex64, c: &QuarticCoefficients, tol: f64) -> Result<[Complex64; 2]> {
    let scale = 2.0 * c.a0.norm() * c.a1.norm().max(c.a2.norm());
    if !(c.b1.abs() > tol * scale) {
        return Err(Error::Degenerate {
            what: "palindromic coefficient B1".into(),
            value: c.b1.abs(),
            scale,
        });
    }
    // Roots t of B1 t² + B2 t + B1 = 0, then z[2] = z[1]² t.
    let disc = Complex64::new(c.b2 * c.b2 - 4.0 * c.b1 * c.b1, 0.0).sqrt();
    let denom = 2.0 * c.b1;
    let t1 = (-c.b2 + disc) / denom;
    let t2 = (-c.b2 - disc) / denom;
    let z1sq = z1 * z1;
    Ok([z1sq * t1, z1sq * t2])
}

/// `z[3]` as a rational function of `(z[1], z[2])`.
pub fn z3_from_z1_z2<T: MomentEntries>(
    z1: Complex64,
    z2: Complex64,
    t: &T,
    tol: f64,
) -> Result<Complex64> {
    let m10 = t.entry(1, 0);
    let m11 = t.entry(1, 1);
    let m2m1 = t.entry(2, -1);
    let m20 = t.entry(2, 0);
    let m3m2 = t.entry(3, -2);
    let m3m1 = t.entry(3, -1);
    let z1p2 = z1 * z1;
    let z1p4 = z1p2 * z1p2;
    let z2p2 = z2 * z2;

    let num_terms = [
        m10 * m20 * z1p4,
        -m10 * m11 * z1p2 * z2,
        -m20 * m2m1 * z1p2 * z2,
        m10 * m20 * z2p2,
    ];
    let den_terms = [
        m10 * m3m1 * z1p4,
        -m2m1 * m3m1 * z1p2 * z2,
        -m11 * m3m2 * z1p2 * z2,
        m20 * m3m2 * z2p2,
    ];
    let num: Complex64 = num_terms.iter().sum();
    let den: Complex64 = den_terms.iter().sum();
    check_nonzero("z[3] denominator", den, &den_terms, tol)?;
    Ok(z1 * z2 * num / den)
}

fn check_residual(what: String, terms: &[Complex64], tol: Option<f64>) -> Result<()> {
    let Some(tol) = tol else { return Ok(()) };
    let residual: Complex64 = terms.iter().sum();
    let scale = max_norm(terms);
    if residual.norm() > tol * scale {
        return Err(Error::Inconsistent(format!(
            "{what}: residual {:.3e} relative to scale {scale:.3e}",
            residual.norm()
        )));
    }
    Ok(())
}

/// `z[n+1] = a / b` for `n ≥ 3` from `z[1], z[2], z[n-1], z[n]`.
///
/// The result is checked against the two quadratics it must satisfy (the index-sum-1
/// chain and the index-sum-`(n+1)` triple) when `opts.consistency_tol` is set.
pub fn z_next<T: MomentEntries>(
    n: usize,
    z1: Complex64,
    z2: Complex64,
    z_prev2: Complex64,
    z_prev1: Complex64,
    t: &T,
    opts: &InversionOptions,
) -> Result<Complex64> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "z_next needs n ≥ 3 (use z3_from_z1_z2 for n = 2), got {n}"
        )));
    }
    let k = n as i64;
    let m10 = t.entry(1, 0);
    let m2m1 = t.entry(2, -1);
    let mn1 = t.entry(k, 1);
    let mnm1_2 = t.entry(k - 1, 2);
    let mnp1_mn = t.entry(k + 1, -k);
    let mnp1_0 = t.entry(k + 1, 0);

    let (zn, znm1) = (z_prev1, z_prev2);
    let z1p2 = z1 * z1;
    let z1p3 = z1p2 * z1;
    let z1p4 = z1p2 * z1p2;
    let z1p5 = z1p4 * z1;
    let z2p2 = z2 * z2;
    let z2p3 = z2p2 * z2;
    let znp2 = zn * zn;
    let znp3 = znp2 * zn;
    let znm1p2 = znm1 * znm1;

    let a_terms = [
        m10 * mn1 * z1p2 * z2p2 * znp3,
        -m10 * mn1 * z1p4 * z2p2 * znm1p2 * zn,
        m2m1 * mn1 * z1p2 * z2p3 * znm1p2 * zn,
        -m2m1 * mn1 * z1p4 * z2 * znp3,
        m10 * mnm1_2 * z1p5 * z2 * znm1 * znp2,
        -m10 * mnm1_2 * z1 * z2p3 * znm1 * znp2,
    ];
    let b_terms = [
        mn1 * mnp1_mn * z1 * z2p2 * znp2,
        -mn1 * mnp1_mn * z1p5 * znp2,
        mnm1_2 * mnp1_mn * z1p4 * z2 * znm1 * zn,
        -mnm1_2 * mnp1_mn * z2p3 * znm1 * zn,
        mnp1_0 * m2m1 * z1 * z2p3 * znm1p2,
        -mnp1_0 * m2m1 * z1p3 * z2 * znp2,
        mnp1_0 * m10 * z1p5 * znp2,
        -mnp1_0 * m10 * z1p3 * z2p2 * znm1p2,
    ];
    let a: Complex64 = a_terms.iter().sum();
    let b: Complex64 = b_terms.iter().sum();
    check_nonzero(&format!("z[{}] denominator b", n + 1), b, &b_terms, opts.degeneracy_tol)?;
    let w = a / b;

    let w2 = w * w;
    check_residual(
        format!("index-sum-1 quadratic at z[{}]", n + 1),
        &[
            m2m1 * z1 * z2 * w2,
            -m10 * z1p3 * w2,
            mnp1_mn * z1p4 * zn * w,
            -mnp1_mn * z2p2 * zn * w,
            m10 * z1 * z2p2 * znp2,
            -m2m1 * z1p3 * z2 * znp2,
        ],
        opts.consistency_tol,
    )?;
    check_residual(
        format!("index-sum-{} quadratic at z[{}]", n + 1, n + 1),
        &[
            mn1 * z1 * zn * w2,
            -mnm1_2 * z2 * znm1 * w2,
            mnp1_0 * z2p2 * znm1p2 * w,
            -mnp1_0 * z1p2 * znp2 * w,
            mnm1_2 * z1p2 * z2 * znm1 * znp2,
            -mn1 * z1 * z2p2 * znm1p2 * zn,
        ],
        opts.consistency_tol,
    )?;
    Ok(w)
}

/// Phases `z[1..=len]` starting from `z[1]`, `z[2]`.
fn phase_chain<T: MomentEntries>(
    z1: Complex64,
    z2: Complex64,
    len: usize,
    t: &T,
    opts: &InversionOptions,
) -> Result<Vec<Complex64>> {
    let mut z = vec![Complex64::new(1.0, 0.0), z1, z2];
    if len >= 3 {
        z.push(z3_from_z1_z2(z1, z2, t, opts.degeneracy_tol)?);
    }
    for n in 3..len {
        let next = z_next(n, z1, z2, z[n - 1], z[n], t, opts)?;
        z.push(next);
    }
    z.truncate(len + 1);
    Ok(z)
}

/// Unit Fourier phases `z[1..=⌊L/2⌋]` plus the real dc term.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseVector {
    /// `z[k]` stored at `k - 1`.
    pub z: Vec<Complex64>,
    pub dc: f64,
}

impl PhaseVector {
    pub fn get(&self, k: usize) -> Complex64 {
        self.z[k - 1]
    }
}

/// Candidate signals with their `(global phase index, z[2] branch)` labels.
#[derive(Clone, Debug, Default)]
pub struct CandidateSet {
    pub candidates: Vec<Signal>,
    pub phases: Vec<PhaseVector>,
    pub branch_labels: Vec<(usize, usize)>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Builds every signal consistent with the table, at most `2L` of them.
///
/// `z[1]` is fixed to 1 and each `z[2]` branch is propagated to the middle index.
/// The middle-index realness constraint (`z[L/2]² = 1` for even `L`,
/// `z[(L-1)/2] z[(L+1)/2] = 1` for odd `L`) then fixes the global weighted phase
/// `μ` up to an `L`-th root of unity; each choice is restored with magnitudes and
/// dc, extended by conjugate symmetry, inverted, and kept if real.
pub fn enumerate_candidates<T: MomentEntries>(
    table: &T,
    opts: &InversionOptions,
) -> Result<CandidateSet> {
    let l = table.order();
    if l < 3 {
        return Err(Error::InvalidArgument(format!("signal length {l} is below 3")));
    }
    let norm = normalize_by_power_spectrum(table, opts.degeneracy_tol)?;
    let half = l / 2;
    let chain_len = if l % 2 == 0 { half } else { half + 1 };
    let coeffs = quartic_coefficients(&norm);
    let one = Complex64::new(1.0, 0.0);
    let roots = solve_z2(one, &coeffs, opts.degeneracy_tol)?;

    let mut out = CandidateSet::default();
    let mut first_err = None;
    for (branch, &z2) in roots.iter().enumerate() {
        let chain = match phase_chain(one, z2, chain_len, &norm, opts) {
            Ok(c) => c,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        let constraint = if l % 2 == 0 {
            chain[half] * chain[half]
        } else {
            chain[half] * chain[half + 1]
        };
        // μ^L · constraint = 1.
        let mu0 = Complex64::from_polar(1.0, -constraint.arg() / l as f64);
        for k in 0..l {
            let mu = mu0 * root_of_unity(l, k as i64);
            let mut z = Vec::with_capacity(half);
            let mut mu_pow = one;
            for c in chain.iter().take(half + 1).skip(1) {
                mu_pow *= mu;
                z.push(mu_pow * c);
            }
            let mut xh = vec![Complex64::new(0.0, 0.0); l];
            xh[0] = Complex64::new(norm.dc(), 0.0);
            for (m, zm) in z.iter().enumerate().map(|(i, v)| (i + 1, v)) {
                let phase = if zm.norm() > 0.0 { zm / zm.norm() } else { *zm };
                xh[m] = norm.magnitudes()[m] * phase;
                if m != l - m {
                    xh[l - m] = xh[m].conj();
                }
            }
            let time = idft_complex(&xh);
            let re: Vec<f64> = time.iter().map(|c| c.re).collect();
            let re_norm = re.iter().map(|v| v * v).sum::<f64>().sqrt();
            let im_norm = time.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
            if !(im_norm <= opts.realness_tol * re_norm) {
                continue;
            }
            let Ok(signal) = Signal::new(re) else { continue };
            out.candidates.push(signal);
            out.phases.push(PhaseVector { z, dc: norm.dc() });
            out.branch_labels.push((k, branch));
        }
    }
    if out.is_empty() {
        return Err(first_err.unwrap_or(Error::NoCandidates));
    }
    Ok(out)
}

/// Least-squares distribution for a fixed candidate signal.
#[derive(Clone, Debug)]
pub struct DistributionFit {
    pub distribution: GroupDistribution,
    /// `‖Δm2‖_F + ‖Δm1‖₂` of the moments of `(candidate, distribution)` against the data.
    pub residual: f64,
    /// Ratio of extreme singular values of the reduced system.
    pub condition: f64,
}

/// Rank threshold on `σ_min / σ_max` of the distribution system.
pub const RANK_TOL: f64 = 1e-12;

/// Orthonormal basis of `{v : Σ v = 0}` in `R^m` (Helmert contrasts), column-major.
fn sum_zero_basis(m: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(m, m - 1);
    for k in 1..m {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            basis[(i, k - 1)] = 1.0 / norm;
        }
        basis[(k, k - 1)] = -(k as f64) / norm;
    }
    basis
}

/// Moment residual `‖Δm2‖_F + ‖Δm1‖₂` of `(x, ρ)` against debiased `m`.
pub fn moment_residual(x: &Signal, rho: &GroupDistribution, m: &MomentPair) -> Result<f64> {
    let m1 = analytic_m1(x, rho)?;
    let m2 = analytic_m2(x, rho, m.sigma2.max(0.0).sqrt())?;
    let r1: f64 = m1.iter().zip(&m.m1).map(|(a, b)| (a - b).powi(2)).sum();
    let r2: f64 = m2.iter().zip(&m.m2).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(r1.sqrt() + r2.sqrt())
}

/// Solves the moment equations, which are linear in `(p, q)`, for a fixed signal.
pub fn recover_distribution(candidate: &Signal, m: &MomentPair) -> Result<DistributionFit> {
    let l = candidate.len();
    if m.order() != l {
        return Err(Error::LengthMismatch {
            expected: m.order(),
            found: l,
        });
    }
    let rows = l + l * l;
    let cols = 2 * l;
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    for g in elements(l) {
        let gx = g.apply(candidate)?;
        let gx = gx.as_slice();
        let c = g.index();
        for i in 0..l {
            a[(i, c)] = gx[i];
            for j in 0..l {
                a[(l + i * l + j, c)] = gx[i] * gx[j];
            }
        }
    }
    let mut b = DVector::<f64>::zeros(rows);
    for i in 0..l {
        b[i] = m.m1[i];
        for j in 0..l {
            let noise = if i == j { m.sigma2 } else { 0.0 };
            b[l + i * l + j] = m.m2[i * l + j] - noise;
        }
    }
    // Rotations and reflections give the same mean and autocorrelation, so only
    // Σp + Σq enters the moments and the split between the two blocks is free.
    // Solve with Σp = Σq = 1/2 (θ = θ0 + N w), then move mass along
    // d = (1/L, …, −1/L, …) as little as needed to stay on the simplex.
    let theta0 = DVector::from_element(cols, 1.0 / cols as f64);
    let half = sum_zero_basis(l);
    let mut basis = DMatrix::<f64>::zeros(cols, cols - 2);
    basis.view_mut((0, 0), (l, l - 1)).copy_from(&half);
    basis.view_mut((l, l - 1), (l, l - 1)).copy_from(&half);
    let reduced = &a * &basis;
    let rhs = &b - &a * &theta0;
    let svd = reduced.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(smin > RANK_TOL * smax) {
        return Err(Error::RankDeficient { condition });
    }
    let w = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut theta = theta0 + basis * w;
    let lf = l as f64;
    let lo = (0..l).map(|k| -lf * theta[k]).fold(f64::NEG_INFINITY, f64::max);
    let hi = (0..l).map(|k| lf * theta[l + k]).fold(f64::INFINITY, f64::min);
    let t = if lo <= hi { 0.0f64.clamp(lo, hi) } else { 0.5 * (lo + hi) };
    for k in 0..l {
        theta[k] += t / lf;
        theta[l + k] -= t / lf;
    }
    let distribution = GroupDistribution::project_flat(l, theta.as_slice())?;
    let debiased = MomentPair {
        m1: m.m1.clone(),
        m2: m.m2.clone(),
        sigma2: m.sigma2,
    };
    let residual = moment_residual(candidate, &distribution, &debiased)?;
    Ok(DistributionFit {
        distribution,
        residual,
        condition,
    })
}

#[derive(Clone, Debug)]
pub struct OrbitSelection {
    pub signal: Signal,
    pub distribution: GroupDistribution,
    pub residual: f64,
    /// Index into the candidate set.
    pub index: usize,
}

/// Picks the candidate whose best-fitting distribution reproduces the moments most
/// closely; ties go to the lower index.
pub fn select_orbit(cands: &CandidateSet, m: &MomentPair) -> Result<OrbitSelection> {
    if cands.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut best: Option<OrbitSelection> = None;
    let mut first_err = None;
    for (index, c) in cands.candidates.iter().enumerate() {
        let fit = if cands.len() == 1 {
            // A lone candidate is returned even if the fit fails.
            recover_distribution(c, m).unwrap_or_else(|_| DistributionFit {
                distribution: GroupDistribution::uniform(c.len()),
                residual: f64::INFINITY,
                condition: f64::INFINITY,
            })
        } else {
            match recover_distribution(c, m) {
                Ok(f) => f,
                Err(e) => {
                    first_err.get_or_insert(e);
                    continue;
                }
            }
        };
        if best.as_ref().is_none_or(|b| fit.residual < b.residual) {
            best = Some(OrbitSelection {
                signal: c.clone(),
                distribution: fit.distribution,
                residual: fit.residual,
                index,
            });
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::NoCandidates))
}

/// Full pipeline from moments: Fourier table, candidate enumeration, selection.
pub fn invert(m: &MomentPair, opts: &InversionOptions) -> Result<(CandidateSet, OrbitSelection)> {
    let table = crate::moments::fourier_moments(m)?;
    let cands = enumerate_candidates(&table, opts)?;
    let selection = select_orbit(&cands, m)?;
    Ok((cands, selection))
}
