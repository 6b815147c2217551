//! Matrix exponentials of Hermitian generators through their eigendecomposition.
//!
//! For `H = V diag(λ) V†` the step propagator is `V diag(e^{-iλ dt}) V†`. The
//! same factorization gives the Fréchet derivative of `H ↦ e^{-iH dt}` in the
//! eigenbasis: `D[E] = V (G ∘ V†EV) V†` with the divided-difference kernel
//! `G_ab = (e^{-iλ_a dt} - e^{-iλ_b dt}) / (λ_a - λ_b)`.

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use super::operator::{c, CMatrix, HermitianOperator};
use crate::error::{Error, Result};

/// Eigenvalue gap below which the divided difference uses its analytic limit.
pub const DEGENERACY_TOL: f64 = 1e-12;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Eigendecomposition of one step Hamiltonian plus its exponential.
#[derive(Debug, Clone)]
pub struct StepSpectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMatrix,
    /// `e^{-iλ_a dt}` per eigenvalue.
    pub phases: DVector<Complex64>,
    pub dt: f64,
}

impl StepSpectrum {
    pub fn new(h: &HermitianOperator, dt: f64) -> Result<Self> {
        let m = h.matrix();
        let eig = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
            Error::EigenFailure {
                dim: m.nrows(),
                max_abs: m.iter().map(|z| z.norm()).fold(0.0, f64::max),
            }
        })?;
        let phases = eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * dt));
        Ok(Self { eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors, phases, dt })
    }

    /// `V diag(e^{-iλ dt}) V†`.
    pub fn unitary(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.phases[j];
        }
        scaled * v.adjoint()
    }

    /// Divided-difference kernel `G_ab`.
    pub fn kernel(&self) -> CMatrix {
        let n = self.eigenvalues.len();
        CMatrix::from_fn(n, n, |a, b| {
            let (la, lb) = (self.eigenvalues[a], self.eigenvalues[b]);
            if (la - lb).abs() < DEGENERACY_TOL {
                c(0.0, -self.dt) * self.phases[a]
            } else {
                (self.phases[a] - self.phases[b]) / (la - lb)
            }
        })
    }

    /// Fréchet derivative of the step exponential in direction `e`.
    pub fn frechet(&self, e: &CMatrix) -> CMatrix {
        let v = &self.eigenvectors;
        let rotated = v.adjoint() * e * v;
        let inner = rotated.component_mul(&self.kernel());
        v * inner * v.adjoint()
    }
}

/// `e^{-i h dt}` via the Hermitian eigendecomposition of `h`.
pub fn expm_unitary(h: &HermitianOperator, dt: f64) -> Result<CMatrix> {
    Ok(StepSpectrum::new(h, dt)?.unitary())
}
