//! Per-follower internal model: the compensator pair `(M, N)`, the Sylvester
//! solution `T` of `T Φ - M T = N Ψ`, the output row `E = Ψ T⁻¹`, and the
//! linear parameterization of `E` used by the adaptive law.

use nalgebra::{DMatrix, DVector};

use crate::disturbance::CanonicalExosystem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// `σ_min(T)` at or below this value is treated as singular.
pub const SINGULAR_T_THRESHOLD: f64 = 1e-10;
/// Minimum distance between the spectra of `M` and `Φ`.
pub const SPECTRAL_SEPARATION: f64 = 1e-8;

/// Hurwitz, controllable pair `(M, N)` driving the compensator.
///
/// Depends only on the sinusoid count, so it is available to the adaptive
/// controller even when the frequencies are unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Compensator<T: Real> {
    pub m: DMatrix<T>,
    pub n: DMatrix<T>,
    order: usize,
}

impl<T: Real> Compensator<T> {
    pub fn for_order(order: usize) -> Self {
        let (m, n) = choose_mn(order);
        Self { m, n, order }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `2r + 1`.
    pub fn size(&self) -> usize {
        self.m.nrows()
    }
}

/// Companion form of `∏_{k=1}^{2r+1} (λ + k)` with `N = e_{2r+1}`.
pub fn choose_mn<T: Real>(order: usize) -> (DMatrix<T>, DMatrix<T>) {
    let q = 2 * order + 1;
    let mut poly = vec![T::one()];
    for k in 1..=q {
        poly = linalg::poly_mul(&poly, &[T::one(), T::lit(k as f64)]);
    }
    let m = linalg::companion(&poly[1..]);
    let mut n = DMatrix::zeros(q, 1);
    n[(q - 1, 0)] = T::one();
    (m, n)
}

/// Solves `T Φ - M T = N Ψ` through `((Φᵀ ⊗ I) - (I ⊗ M)) vec(T) = vec(N Ψ)`.
pub fn solve_sylvester<T: Real>(
    phi: &DMatrix<T>,
    m: &DMatrix<T>,
    n: &DMatrix<T>,
    psi: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let q = phi.nrows();
    let p = m.nrows();
    if !phi.is_square() || !m.is_square() || n.shape() != (p, 1) || psi.shape() != (1, q) {
        return Err(Error::DimensionMismatch(format!(
            "Phi {:?}, M {:?}, N {:?}, Psi {:?}",
            phi.shape(),
            m.shape(),
            n.shape(),
            psi.shape()
        )));
    }
    let phi_eigs = linalg::eigenvalues(phi);
    let m_eigs = linalg::eigenvalues(m);
    let overlap = phi_eigs
        .iter()
        .any(|a| m_eigs.iter().any(|b| (a.re - b.re).hypot(a.im - b.im) < T::lit(SPECTRAL_SEPARATION)));
    if overlap {
        return Err(Error::SingularSylvesterOperator);
    }

    let op = phi.transpose().kronecker(&DMatrix::identity(p, p)) - DMatrix::identity(q, q).kronecker(m);
    let rhs_mat = n * psi;
    let rhs = DVector::from_column_slice(rhs_mat.as_slice());
    let x = op.lu().solve(&rhs).ok_or(Error::SingularSylvesterOperator)?;
    let t = DMatrix::from_column_slice(p, q, x.as_slice());
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSylvesterOperator);
    }
    let sigma_min = linalg::min_singular_value(&t);
    if sigma_min <= T::lit(SINGULAR_T_THRESHOLD) {
        return Err(Error::SingularT { sigma_min: sigma_min.as_f64() });
    }
    Ok(t)
}

/// `E = Ψ T⁻¹`, computed as the solution of `Tᵀ Eᵀ = Ψᵀ`.
pub fn compute_e<T: Real>(t: &DMatrix<T>, psi: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !t.is_square() || psi.shape() != (1, t.nrows()) {
        return Err(Error::DimensionMismatch(format!("T {:?}, Psi {:?}", t.shape(), psi.shape())));
    }
    let et = t
        .transpose()
        .lu()
        .solve(&psi.transpose())
        .ok_or(Error::SingularT { sigma_min: 0.0 })?;
    Ok(et.transpose())
}

/// Internal model synthesized for known frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalModel<T: Real> {
    pub compensator: Compensator<T>,
    pub t: DMatrix<T>,
    pub e: DMatrix<T>,
}

impl<T: Real> InternalModel<T> {
    pub fn synthesize(exo: &CanonicalExosystem<T>) -> Result<Self> {
        let compensator = Compensator::for_order(exo.order);
        let t = solve_sylvester(&exo.phi, &compensator.m, &compensator.n, &exo.psi)?;
        let e = compute_e(&t, &exo.psi)?;
        Ok(Self { compensator, t, e })
    }

    pub fn m(&self) -> &DMatrix<T> {
        &self.compensator.m
    }

    pub fn n(&self) -> &DMatrix<T> {
        &self.compensator.n
    }

    /// `‖T Φ - M T - N Ψ‖`.
    pub fn sylvester_residual(&self, exo: &CanonicalExosystem<T>) -> T {
        (&self.t * &exo.phi - self.m() * &self.t - self.n() * &exo.psi).norm()
    }
}

/// `E^σ = E° + Σ_j E^j θ^j(σ)` with a known basis.
///
/// The basis here is the canonical one: `E° = 0` and `E^j = e_jᵀ`, so `θ` is
/// simply the entries of `E^σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveParameterization<T: Real> {
    pub e_nominal: DMatrix<T>,
    pub basis: Vec<DMatrix<T>>,
    /// Ground truth, known to the simulator but never to the controller.
    pub theta_true: Option<DVector<T>>,
}

impl<T: Real> AdaptiveParameterization<T> {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    /// `Ê = E° + Σ_j E^j θ̂^j`.
    pub fn estimate(&self, theta_hat: &DVector<T>) -> DMatrix<T> {
        let mut e = self.e_nominal.clone();
        for (basis, &th) in self.basis.iter().zip(theta_hat.iter()) {
            e += basis * th;
        }
        e
    }

    /// Copy with the ground truth removed.
    pub fn controller_view(&self) -> Self {
        Self { theta_true: None, ..self.clone() }
    }
}

pub fn build_parameterization<T: Real>(order: usize, e_sigma: Option<&DMatrix<T>>) -> Result<AdaptiveParameterization<T>> {
    let q = 2 * order + 1;
    if let Some(e) = e_sigma {
        if e.shape() != (1, q) {
            return Err(Error::DimensionMismatch(format!("E has shape {:?}, expected (1, {q})", e.shape())));
        }
    }
    let basis = (0..q)
        .map(|j| {
            let mut row = DMatrix::zeros(1, q);
            row[(0, j)] = T::one();
            row
        })
        .collect();
    Ok(AdaptiveParameterization {
        e_nominal: DMatrix::zeros(1, q),
        basis,
        theta_true: e_sigma.map(|e| DVector::from_iterator(q, e.iter().copied())),
    })
}
