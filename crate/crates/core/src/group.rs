//! The dihedral group `D_2L` and its action on real length-`L` signals.
//!
//! Elements are stored as `(rotation, reflected)` pairs meaning `r^rotation` or
//! `r^rotation · s`. The time-domain action is
//!
//! ```text
//! (r·x)[l] = x[(l - 1) mod L]
//! (s·x)[l] = x[-l mod L]
//! ```
//!
//! so `(r^k·x)[l] = x[l - k]` and `(r^k s·x)[l] = x[k - l]`.
//!
//! Fourier transforms use the unnormalized forward convention
//! `x̂[m] = Σ_l x[l] exp(-2πi m l / L)` with a `1/L` inverse. Under this convention
//! a rotation multiplies `x̂[m]` by `exp(-2πi m / L)`; the sign is pinned by
//! property tests against the time-domain action.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Smallest signal length the model accepts.
pub const MIN_LEN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DihedralElement {
    order: usize,
    rotation: usize,
    reflected: bool,
}

impl DihedralElement {
    /// `r^rotation` (or `r^rotation · s` when `reflected`) in `D_2L` with `L = order`.
    /// The rotation is reduced modulo `order`; negative values are allowed.
    pub fn new(order: usize, rotation: i64, reflected: bool) -> Self {
        assert!(order > 0, "group order parameter must be positive");
        let rotation = rotation.rem_euclid(order as i64) as usize;
        Self {
            order,
            rotation,
            reflected,
        }
    }

    pub fn identity(order: usize) -> Self {
        Self::new(order, 0, false)
    }

    /// `r^k`.
    pub fn rotation_by(order: usize, k: i64) -> Self {
        Self::new(order, k, false)
    }

    /// `r^k s`.
    pub fn reflection_at(order: usize, k: i64) -> Self {
        Self::new(order, k, true)
    }

    /// The generator `r`.
    pub fn r(order: usize) -> Self {
        Self::rotation_by(order, 1)
    }

    /// The generator `s`.
    pub fn s(order: usize) -> Self {
        Self::reflection_at(order, 0)
    }

    /// Position in the canonical enumeration `{1, r, …, r^{L-1}, s, rs, …, r^{L-1}s}`.
    pub fn from_index(order: usize, index: usize) -> Self {
        assert!(index < 2 * order, "element index out of range");
        if index < order {
            Self::rotation_by(order, index as i64)
        } else {
            Self::reflection_at(order, (index - order) as i64)
        }
    }

    pub fn index(&self) -> usize {
        if self.reflected {
            self.order + self.rotation
        } else {
            self.rotation
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rotation(&self) -> usize {
        self.rotation
    }

    pub fn is_reflection(&self) -> bool {
        self.reflected
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0 && !self.reflected
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::LengthMismatch {
                expected: self.order,
                found: other.order,
            });
        }
        // r^a s^f · r^b s^g = r^{a ± b} s^{f+g}, using s r^b = r^{-b} s.
        let b = other.rotation as i64;
        let rotation = if self.reflected {
            self.rotation as i64 - b
        } else {
            self.rotation as i64 + b
        };
        Ok(Self::new(
            self.order,
            rotation,
            self.reflected ^ other.reflected,
        ))
    }

    pub fn inverse(&self) -> Self {
        if self.reflected {
            *self
        } else {
            Self::new(self.order, -(self.rotation as i64), false)
        }
    }

    /// Index into `x` read by output position `l` of `g·x`.
    #[inline]
    pub fn source_index(&self, l: usize) -> usize {
        let n = self.order;
        if self.reflected {
            (self.rotation + n - l % n) % n
        } else {
            (l + n - self.rotation) % n
        }
    }

    /// Writes `g·x` into `out` without allocating. Both slices must have length `L`.
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.order);
        debug_assert_eq!(out.len(), self.order);
        for (l, o) in out.iter_mut().enumerate() {
            *o = x[self.source_index(l)];
        }
    }

    pub fn apply_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.order {
            return Err(Error::LengthMismatch {
                expected: self.order,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    pub fn apply(&self, x: &Signal) -> Result<Signal> {
        self.apply_slice(x.as_slice()).map(Signal)
    }

    /// The action in the Fourier domain; agrees with `dft(apply(g, idft(xh)))`.
    pub fn fourier_apply(&self, xh: &FourierSignal) -> Result<FourierSignal> {
        let n = self.order;
        if xh.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: xh.len(),
            });
        }
        let c = xh.coeffs();
        let coeffs = (0..n)
            .map(|m| {
                let phase = root_of_unity(n, -((m * self.rotation) as i64));
                let base = if self.reflected { c[(n - m) % n] } else { c[m] };
                phase * base
            })
            .collect();
        Ok(FourierSignal(coeffs))
    }

    /// Image under the faithful 2×2 orthogonal representation
    /// `r ↦ rotation by 2π/L`, `s ↦ diag(1, -1)`, row-major.
    pub fn representation(&self) -> [[f64; 2]; 2] {
        let theta = 2.0 * PI * self.rotation as f64 / self.order as f64;
        let (sin, cos) = theta.sin_cos();
        if self.reflected {
            [[cos, sin], [sin, -cos]]
        } else {
            [[cos, -sin], [sin, cos]]
        }
    }
}

impl fmt::Display for DihedralElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.rotation, self.reflected) {
            (0, false) => write!(f, "1"),
            (0, true) => write!(f, "s"),
            (k, false) => write!(f, "r^{k}"),
            (k, true) => write!(f, "r^{k}s"),
        }
    }
}

/// All `2L` elements in canonical order.
pub fn elements(order: usize) -> impl Iterator<Item = DihedralElement> {
    (0..2 * order).map(move |i| DihedralElement::from_index(order, i))
}

/// `exp(2πi k / n)`.
pub fn root_of_unity(n: usize, k: i64) -> Complex64 {
    let k = k.rem_euclid(n as i64) as f64;
    Complex64::from_polar(1.0, 2.0 * PI * k / n as f64)
}

/// A real signal of length at least 3 with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_LEN {
            return Err(Error::InvalidSignal(format!(
                "length {} is below the minimum {MIN_LEN}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl AsRef<[f64]> for Signal {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Complex Fourier coefficients of a (usually real) signal.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSignal(Vec<Complex64>);

impl FourierSignal {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self(coeffs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    /// `max_i |c[-i] - conj(c[i])|`.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.0.len();
        (0..n)
            .map(|i| (self.0[(n - i) % n] - self.0[i].conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Unnormalized forward DFT of a real slice.
pub fn dft_slice(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Unnormalized forward DFT of a complex slice.
pub fn dft_complex(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse DFT with the `1/L` factor, complex output.
pub fn idft_complex(xh: &[Complex64]) -> Vec<Complex64> {
    let mut buf = xh.to_vec();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    }
    let scale = 1.0 / buf.len().max(1) as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

pub fn dft(x: &Signal) -> FourierSignal {
    FourierSignal(dft_slice(x.as_slice()))
}

/// Relative conjugate-symmetry tolerance accepted by [`idft`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Inverse transform to a real signal. Fails when the input is not the transform of
/// a real vector (relative symmetry residual above [`SYMMETRY_TOL`]).
pub fn idft(xh: &FourierSignal) -> Result<Signal> {
    let scale = xh.coeffs().iter().map(|c| c.norm()).fold(1.0, f64::max);
    let residual = xh.symmetry_residual();
    if residual > SYMMETRY_TOL * scale {
        return Err(Error::NotConjugateSymmetric { residual });
    }
    Signal::new(idft_complex(xh.coeffs()).iter().map(|c| c.re).collect())
}
