//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::scalar::Real;

/// Multiplies two polynomials given by descending coefficients.
pub fn poly_mul<T: Real>(p: &[T], q: &[T]) -> Vec<T> {
    if p.is_empty() || q.is_empty() {
        return Vec::new();
    }
    let mut out = vec![T::zero(); p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Companion matrix of the monic polynomial `λ^n + a_1 λ^(n-1) + … + a_n`.
///
/// `coeffs` holds `a_1..a_n`. Superdiagonal is the identity and the last row
/// is `(-a_n, …, -a_1)`.
pub fn companion<T: Real>(coeffs: &[T]) -> DMatrix<T> {
    let n = coeffs.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        c[(i, i + 1)] = T::one();
    }
    for j in 0..n {
        c[(n - 1, j)] = -coeffs[n - 1 - j];
    }
    c
}

pub fn block_diag<T: Real>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// `A ⊗ I_d`.
pub fn kron_eye<T: Real>(a: &DMatrix<T>, d: usize) -> DMatrix<T> {
    a.kronecker(&DMatrix::identity(d, d))
}

/// `(A ⊗ I_d) x` without materializing the Kronecker product.
pub fn kron_eye_mul<T: Real>(a: &DMatrix<T>, x: &DVector<T>, d: usize) -> DVector<T> {
    debug_assert_eq!(x.len(), a.ncols() * d);
    let mut out = DVector::zeros(a.nrows() * d);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let c = a[(i, j)];
            if c.is_zero() {
                continue;
            }
            for k in 0..d {
                out[i * d + k] += c * x[j * d + k];
            }
        }
    }
    out
}

pub fn singular_values<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    m.clone().svd(false, false).singular_values
}

pub fn min_singular_value<T: Real>(m: &DMatrix<T>) -> T {
    singular_values(m).min()
}

/// Numerical rank with tolerance relative to the largest singular value.
pub fn rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    let sv = singular_values(m);
    let cutoff = sv.max() * rel_tol;
    sv.iter().filter(|&&s| s > cutoff).count()
}

pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<Complex<T>> {
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa<T: Real>(m: &DMatrix<T>) -> T {
    eigenvalues(m)
        .into_iter()
        .map(|z| z.re)
        .reduce(|a, b| a.max(b))
        .unwrap_or_else(T::zero)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_extremes<T: Real>(m: &DMatrix<T>) -> (T, T) {
    let ev = m.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

pub fn is_positive_definite<T: Real>(m: &DMatrix<T>) -> bool {
    m.is_square() && m.clone().cholesky().is_some() && symmetric_extremes(m).0 > T::zero()
}

/// Controllability matrix `[N, MN, …, M^(q-1) N]`.
pub fn controllability_matrix<T: Real>(m: &DMatrix<T>, n: &DMatrix<T>) -> DMatrix<T> {
    let q = m.nrows();
    let mut out = DMatrix::zeros(q, q * n.ncols());
    let mut block = n.clone();
    for k in 0..q {
        out.view_mut((0, k * n.ncols()), (q, n.ncols())).copy_from(&block);
        block = m * block;
    }
    out
}

/// Popov–Belevitch–Hautus test: `[λI - M, N]` has full row rank at every
/// eigenvalue `λ` of `M`, judged by its smallest singular value against `tol`.
pub fn is_controllable<T: Real>(m: &DMatrix<T>, n: &DMatrix<T>, tol: T) -> bool {
    let q = m.nrows();
    eigenvalues(m).into_iter().all(|lambda| {
        let mut pencil = DMatrix::<Complex<T>>::zeros(q, q + n.ncols());
        for i in 0..q {
            for j in 0..q {
                let diag = if i == j { lambda } else { Complex::new(T::zero(), T::zero()) };
                pencil[(i, j)] = diag - Complex::new(m[(i, j)], T::zero());
            }
            for j in 0..n.ncols() {
                pencil[(i, q + j)] = Complex::new(n[(i, j)], T::zero());
            }
        }
        pencil.singular_values().min() > tol
    })
}

/// Solves `X A + Aᵀ X = -Q` by Kronecker vectorization.
///
/// Returns `None` when the vectorized operator is singular, i.e. when `A` has
/// two eigenvalues summing to zero.
pub fn solve_lyapunov<T: Real>(a: &DMatrix<T>, q: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<T>::identity(n, n);
    // vec(X A) = (Aᵀ ⊗ I) vec X, vec(Aᵀ X) = (I ⊗ Aᵀ) vec X
    let op = at.kronecker(&eye) + eye.kronecker(&at);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|&v| -v));
    let x = op.lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((&x + x.transpose()) * T::lit(0.5))
}
