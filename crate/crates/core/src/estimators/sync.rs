//! Synchronization: align every pair by cross-correlation, recover one group element
//! per observation from the top eigenspace of the ratio matrix, then average the
//! unaligned observations.

use std::time::Instant;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::group::{dft_slice, elements, DihedralElement, Signal};
use crate::simulator::ObservationSet;

use super::EstimateResult;

/// Relative margin below which two correlation values count as tied.
const TIE_TOL: f64 = 1e-12;

/// Pairwise ratio estimates `g_ij ≈ g_i g_j⁻¹` for `i < j`, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncRatios {
    n: usize,
    order: usize,
    ratios: Vec<DihedralElement>,
    scores: Vec<f64>,
}

impl SyncRatios {
    pub fn new(n: usize, order: usize) -> Self {
        let pairs = n * n.saturating_sub(1) / 2;
        Self {
            n,
            order,
            ratios: vec![DihedralElement::identity(order); pairs],
            scores: vec![0.0; pairs],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    pub fn set(&mut self, i: usize, j: usize, g: DihedralElement, score: f64) {
        let (g, i, j) = if i < j { (g, i, j) } else { (g.inverse(), j, i) };
        let k = self.slot(i, j);
        self.ratios[k] = g;
        self.scores[k] = score;
    }

    /// `g_ij`; the inverse is returned for `i > j` and the identity for `i = j`.
    pub fn get(&self, i: usize, j: usize) -> DihedralElement {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.ratios[self.slot(i, j)],
            std::cmp::Ordering::Greater => self.ratios[self.slot(j, i)].inverse(),
            std::cmp::Ordering::Equal => DihedralElement::identity(self.order),
        }
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return f64::NAN;
        }
        self.scores[self.slot(i.min(j), i.max(j))]
    }
}

struct Aligner {
    order: usize,
    ifft: std::sync::Arc<dyn Fft<f64>>,
}

impl Aligner {
    fn new(order: usize) -> Self {
        Self {
            order,
            ifft: FftPlanner::new().plan_fft_inverse(order),
        }
    }

    /// Argmax of `⟨y_i, g·y_j⟩` from the spectra of both signals.
    fn align(
        &self,
        yi: &[Complex64],
        yj: &[Complex64],
        scale: f64,
        rot: &mut [Complex64],
        refl: &mut [Complex64],
    ) -> (DihedralElement, f64) {
        let l = self.order;
        for m in 0..l {
            rot[m] = yi[m] * yj[m].conj();
            refl[m] = yi[m] * yj[m];
        }
        self.ifft.process(rot);
        self.ifft.process(refl);
        let inv = 1.0 / l as f64;
        let tol = TIE_TOL * scale;
        let mut best = (0, f64::NEG_INFINITY);
        for (idx, v) in rot.iter().chain(refl.iter()).enumerate() {
            let v = v.re * inv;
            if v > best.1 + tol {
                best = (idx, v);
            }
        }
        (DihedralElement::from_index(l, best.0), best.1)
    }
}

/// Element `g` maximizing `⟨y_i, g·y_j⟩`, with the attained value. Ties go to the
/// first element in canonical order.
pub fn pairwise_align(yi: &Signal, yj: &Signal) -> Result<(DihedralElement, f64)> {
    if yi.len() != yj.len() {
        return Err(Error::LengthMismatch {
            expected: yi.len(),
            found: yj.len(),
        });
    }
    let l = yi.len();
    let aligner = Aligner::new(l);
    let (a, b) = (dft_slice(yi.as_slice()), dft_slice(yj.as_slice()));
    let mut rot = vec![Complex64::new(0.0, 0.0); l];
    let mut refl = rot.clone();
    Ok(aligner.align(&a, &b, yi.norm() * yj.norm(), &mut rot, &mut refl))
}

/// Aligns every pair of observations.
pub fn align_all(obs: &ObservationSet) -> SyncRatios {
    let n = obs.len();
    let l = obs.signal_len();
    let aligner = Aligner::new(l);
    let spectra: Vec<Vec<Complex64>> = obs.rows().map(dft_slice).collect();
    let norms: Vec<f64> = obs
        .rows()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let rows: Vec<Vec<(DihedralElement, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rot = vec![Complex64::new(0.0, 0.0); l];
            let mut refl = rot.clone();
            ((i + 1)..n)
                .map(|j| {
                    aligner.align(
                        &spectra[i],
                        &spectra[j],
                        norms[i] * norms[j],
                        &mut rot,
                        &mut refl,
                    )
                })
                .collect()
        })
        .collect();
    let mut ratios = SyncRatios::new(n, l);
    let mut k = 0;
    for row in rows {
        for (g, s) in row {
            ratios.ratios[k] = g;
            ratios.scores[k] = s;
            k += 1;
        }
    }
    ratios
}

fn rep(g: &DihedralElement) -> Matrix2<f64> {
    let r = g.representation();
    Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

fn polar(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let svd = m.svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok(u * v_t),
        _ => Err(Error::Eigen("2×2 polar decomposition failed".into())),
    }
}

/// Largest-two eigenvectors of the `2n × 2n` block matrix with blocks `R(g_ij)`,
/// as a row-major `2n × 2` array.
struct TopEigenspace {
    vectors: Vec<[f64; 2]>,
    iterations: usize,
}

/// Block size for subspace iteration; the extra columns speed up convergence.
const BLOCK: usize = 4;
const EIG_MAX_ITERS: usize = 300;
const EIG_TOL: f64 = 1e-10;
/// Below this size the dense symmetric eigensolver is used.
const DENSE_LIMIT: usize = 200;

fn top_eigenspace(idx: &[u16], reps: &[Matrix2<f64>], n: usize) -> Result<TopEigenspace> {
    if n <= DENSE_LIMIT {
        dense_top2(idx, reps, n)
    } else {
        iterative_top2(idx, reps, n)
    }
}

fn dense_top2(idx: &[u16], reps: &[Matrix2<f64>], n: usize) -> Result<TopEigenspace> {
    let dim = 2 * n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            let r = reps[idx[i * n + j] as usize];
            for a in 0..2 {
                for b in 0..2 {
                    h[(2 * i + a, 2 * j + b)] = r[(a, b)];
                }
            }
        }
    }
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vectors = (0..dim)
        .map(|r| [eig.eigenvectors[(r, order[0])], eig.eigenvectors[(r, order[1])]])
        .collect();
    Ok(TopEigenspace {
        vectors,
        iterations: 1,
    })
}

fn iterative_top2(idx: &[u16], reps: &[Matrix2<f64>], n: usize) -> Result<TopEigenspace> {
    let dim = 2 * n;
    // Subspace iteration on H + nI, positive semidefinite since ‖H‖ ≤ n.
    let shift = n as f64;
    let apply = |v: &DMatrix<f64>| -> DMatrix<f64> {
        let cols = v.ncols();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; 2 * cols];
                for j in 0..n {
                    let r = &reps[idx[i * n + j] as usize];
                    for c in 0..cols {
                        let (v0, v1) = (v[(2 * j, c)], v[(2 * j + 1, c)]);
                        acc[c] += r[(0, 0)] * v0 + r[(0, 1)] * v1;
                        acc[cols + c] += r[(1, 0)] * v0 + r[(1, 1)] * v1;
                    }
                }
                acc
            })
            .collect();
        let mut out = v * shift;
        for (i, acc) in rows.iter().enumerate() {
            for c in 0..cols {
                out[(2 * i, c)] += acc[c];
                out[(2 * i + 1, c)] += acc[cols + c];
            }
        }
        out
    };

    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut v = DMatrix::from_fn(dim, BLOCK, |_, _| StandardNormal.sample(&mut rng));
    v = v.qr().q();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let hv = apply(&v);
        // Rayleigh-Ritz on the current block.
        let t = v.transpose() * &hv;
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(t, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen("Ritz eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..BLOCK).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut rot = DMatrix::zeros(BLOCK, BLOCK);
        for (k, &o) in order.iter().enumerate() {
            rot.set_column(k, &eig.eigenvectors.column(o));
        }
        let ritz_vecs = &v * &rot;
        let h_ritz = &hv * &rot;
        let resid = (0..2)
            .map(|k| {
                let theta = eig.eigenvalues[order[k]];
                (h_ritz.column(k) - ritz_vecs.column(k) * theta).norm()
            })
            .fold(0.0, f64::max);
        if !resid.is_finite() {
            return Err(Error::Eigen("non-finite values in subspace iteration".into()));
        }
        if resid <= EIG_TOL * (2.0 * shift + 1.0) || iterations >= EIG_MAX_ITERS {
            let vectors = (0..dim)
                .map(|r| [ritz_vecs[(r, 0)], ritz_vecs[(r, 1)]])
                .collect();
            return Ok(TopEigenspace {
                vectors,
                iterations,
            });
        }
        v = h_ritz.qr().q();
    }
}

/// Index of the candidate whose representation is Frobenius-nearest to `b`.
fn round_block(b: &Matrix2<f64>, reps: &[Matrix2<f64>]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, r) in reps.iter().enumerate() {
        let v = b.component_mul(r).sum();
        if v > best.1 + TIE_TOL {
            best = (k, v);
        }
    }
    best.0
}

const ROUNDING_PASSES: usize = 10;

/// Spectral synchronization. Outputs are normalized so the first element is the
/// identity, which fixes the global right-multiplication.
pub fn synchronize(ratios: &SyncRatios) -> Result<Vec<DihedralElement>> {
    synchronize_with_iterations(ratios).map(|(g, _)| g)
}

fn synchronize_with_iterations(ratios: &SyncRatios) -> Result<(Vec<DihedralElement>, usize)> {
    let n = ratios.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "synchronization needs at least 2 observations, got {n}"
        )));
    }
    let l = ratios.order();
    let group: Vec<DihedralElement> = elements(l).collect();
    let reps: Vec<Matrix2<f64>> = group.iter().map(rep).collect();
    let mut idx = vec![0u16; n * n];
    for i in 0..n {
        for j in 0..n {
            idx[i * n + j] = ratios.get(i, j).index() as u16;
        }
    }
    let eig = top_eigenspace(&idx, &reps, n)?;
    let blocks: Vec<Matrix2<f64>> = eig
        .vectors
        .chunks_exact(2)
        .map(|rows| Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]))
        .collect();

    // Anchor the global frame on the strongest block, then alternate rounding and refit.
    let anchor = (0..n)
        .max_by(|&a, &b| blocks[a].norm().total_cmp(&blocks[b].norm()))
        .unwrap_or(0);
    let mut q = polar(&blocks[anchor])?;
    let mut assign: Vec<usize> = Vec::new();
    for _ in 0..ROUNDING_PASSES {
        let next: Vec<usize> = blocks
            .iter()
            .map(|b| round_block(&(b * q.transpose()), &reps))
            .collect();
        if next == assign {
            break;
        }
        assign = next;
        let m: Matrix2<f64> = blocks
            .iter()
            .zip(&assign)
            .map(|(b, &k)| reps[k].transpose() * b)
            .sum();
        q = polar(&m)?;
    }
    let g0_inv = group[assign[0]].inverse();
    let out = assign
        .iter()
        .map(|&k| group[k].compose(&g0_inv))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, eig.iterations))
}

/// Pairwise alignment, synchronization, and the average of `ĝ_i⁻¹·y_i`.
pub fn estimate_by_sync(obs: &ObservationSet) -> Result<EstimateResult> {
    let start = Instant::now();
    let n = obs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "synchronization needs at least 2 observations, got {n}"
        )));
    }
    let l = obs.signal_len();
    let ratios = align_all(obs);
    let (gs, iterations) = synchronize_with_iterations(&ratios)?;
    let mut acc = vec![0.0; l];
    let mut buf = vec![0.0; l];
    for (row, g) in obs.rows().zip(&gs) {
        g.inverse().apply_into(row, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    let x_est = Signal::new(acc.into_iter().map(|v| v / n as f64).collect())?;
    Ok(EstimateResult {
        x_est,
        rho_est: None,
        iterations,
        objective_trace: Vec::new(),
        wall_time: start.elapsed(),
    })
}
