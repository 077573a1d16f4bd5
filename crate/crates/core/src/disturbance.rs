//! Trigonometric-polynomial disturbances and their canonical exosystem.
//!
//! A disturbance `d(t) = C0 + Σ_j C_j ∘ sin(ω_j t + φ_j)` (per-axis amplitudes
//! and phases, shared frequency per term) is annihilated by
//! `χ(λ) = λ ∏_j (λ² + ω_j²)`. The exosystem realizes it in companion form with
//! state blocks `d, d', …, d^(2r)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Minimum gap between two frequencies for them to count as distinct.
pub const FREQUENCY_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidTerm<T: Real> {
    /// Angular frequency in rad/s.
    pub frequency: T,
    pub amplitudes: DVector<T>,
    pub phases: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec<T: Real> {
    offset: DVector<T>,
    terms: Vec<SinusoidTerm<T>>,
}

impl<T: Real> DisturbanceSpec<T> {
    pub fn new(offset: DVector<T>, terms: Vec<SinusoidTerm<T>>) -> Result<Self> {
        let d = offset.len();
        for term in &terms {
            if term.amplitudes.len() != d || term.phases.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "sinusoid at {} rad/s has {} amplitudes and {} phases for dimension {d}",
                    term.frequency,
                    term.amplitudes.len(),
                    term.phases.len()
                )));
            }
        }
        let freqs: Vec<T> = terms.iter().map(|t| t.frequency).collect();
        check_frequencies(&freqs)?;
        Ok(Self { offset, terms })
    }

    /// Constant disturbance (no sinusoids).
    pub fn constant(offset: DVector<T>) -> Self {
        Self { offset, terms: Vec::new() }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Number of sinusoids `r`.
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn offset(&self) -> &DVector<T> {
        &self.offset
    }

    pub fn terms(&self) -> &[SinusoidTerm<T>] {
        &self.terms
    }

    pub fn frequencies(&self) -> Vec<T> {
        self.terms.iter().map(|t| t.frequency).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.offset.iter().all(|x| x.is_zero())
            && self.terms.iter().all(|t| t.amplitudes.iter().all(|a| a.is_zero()))
    }

    /// Closed-form value at time `t`.
    pub fn eval(&self, t: T) -> DVector<T> {
        self.derivative(0, t)
    }

    /// Closed-form `k`-th time derivative at `t`.
    pub fn derivative(&self, k: usize, t: T) -> DVector<T> {
        let mut out = if k == 0 { self.offset.clone() } else { DVector::zeros(self.dim()) };
        let shift = T::frac_pi_2() * T::lit(k as f64);
        for term in &self.terms {
            let scale = term.frequency.powi(k as i32);
            for axis in 0..self.dim() {
                out[axis] += term.amplitudes[axis] * scale * (term.frequency * t + term.phases[axis] + shift).sin();
            }
        }
        out
    }
}

/// Free-function form of [`DisturbanceSpec::eval`].
pub fn disturbance_eval<T: Real>(spec: &DisturbanceSpec<T>, t: T) -> DVector<T> {
    spec.eval(t)
}

fn check_frequencies<T: Real>(freqs: &[T]) -> Result<()> {
    for (i, &w) in freqs.iter().enumerate() {
        if w <= T::zero() {
            return Err(Error::NonPositiveFrequency(w.as_f64()));
        }
        if freqs[..i].iter().any(|&o| (o - w).abs() <= T::lit(FREQUENCY_GAP)) {
            return Err(Error::DuplicateFrequency(w.as_f64()));
        }
    }
    Ok(())
}

/// Coefficients `a_1..a_{2r+1}` of `λ ∏_j (λ² + ω_j²)`.
pub fn min_poly_coeffs<T: Real>(frequencies: &[T]) -> Result<Vec<T>> {
    check_frequencies(frequencies)?;
    let mut poly = vec![T::one(), T::zero()];
    for &w in frequencies {
        poly = linalg::poly_mul(&poly, &[T::one(), T::zero(), w * w]);
    }
    poly.remove(0);
    Ok(poly)
}

/// Companion-form realization `ϑ̇ = (Φ ⊗ I_d) ϑ`, `d = (Ψ ⊗ I_d) ϑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalExosystem<T: Real> {
    pub order: usize,
    pub coeffs: Vec<T>,
    pub phi: DMatrix<T>,
    pub psi: DMatrix<T>,
    pub theta0: DVector<T>,
    pub dim: usize,
}

impl<T: Real> CanonicalExosystem<T> {
    /// `2r + 1`.
    pub fn size(&self) -> usize {
        2 * self.order + 1
    }

    pub fn phi_kron(&self) -> DMatrix<T> {
        linalg::kron_eye(&self.phi, self.dim)
    }

    /// Disturbance carried by an exosystem state.
    pub fn output(&self, state: &DVector<T>) -> DVector<T> {
        state.rows(0, self.dim).into_owned()
    }
}

/// Builds `Φ`, `Ψ` and the initial state `ϑ(0) = col(d(0), d'(0), …, d^(2r)(0))`.
pub fn build_canonical<T: Real>(spec: &DisturbanceSpec<T>) -> Result<CanonicalExosystem<T>> {
    let coeffs = min_poly_coeffs(&spec.frequencies())?;
    let q = coeffs.len();
    let phi = linalg::companion(&coeffs);
    let mut psi = DMatrix::zeros(1, q);
    psi[(0, 0)] = T::one();
    let blocks: Vec<_> = (0..q).map(|k| spec.derivative(k, T::zero())).collect();
    Ok(CanonicalExosystem {
        order: spec.order(),
        coeffs,
        phi,
        psi,
        theta0: crate::graph::stack(&blocks),
        dim: spec.dim(),
    })
}
