use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::operator::{ensure_unitary, CMatrix, HermitianOperator, MatrixJson, UNITARY_TOL};
use crate::error::{invalid, Error, Result};

/// A closed quantum system driven by `N` switchable control Hamiltonians over a
/// uniform grid of `T` steps on `[0, t_f]`.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    qubits: usize,
    steps: usize,
    t_f: f64,
    dt: f64,
    intrinsic: HermitianOperator,
    controls: Vec<HermitianOperator>,
    x_init: CMatrix,
}

impl ControlSystem {
    pub fn new(
        qubits: usize,
        t_f: f64,
        steps: usize,
        intrinsic: HermitianOperator,
        controls: Vec<HermitianOperator>,
        x_init: CMatrix,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("time steps must be positive"));
        }
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(invalid(format!("evolution time must be positive, got {t_f}")));
        }
        if controls.is_empty() {
            return Err(invalid("at least one control Hamiltonian is required"));
        }
        let dim = 1usize << qubits;
        let bad_dim = std::iter::once(&intrinsic)
            .chain(controls.iter())
            .any(|h| h.dim() != dim);
        if bad_dim || x_init.shape() != (dim, dim) {
            return Err(Error::Dimension(format!("all operators must be {dim}x{dim}")));
        }
        ensure_unitary(&x_init, UNITARY_TOL)?;
        Ok(Self { qubits, steps, t_f, dt: t_f / steps as f64, intrinsic, controls, x_init })
    }

    /// Same Hamiltonians on a different time grid over the same horizon.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(
            self.qubits,
            self.t_f,
            steps,
            self.intrinsic.clone(),
            self.controls.clone(),
            self.x_init.clone(),
        )
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }
    pub fn dim(&self) -> usize {
        1 << self.qubits
    }
    pub fn controllers(&self) -> usize {
        self.controls.len()
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn t_f(&self) -> f64 {
        self.t_f
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn intrinsic(&self) -> &HermitianOperator {
        &self.intrinsic
    }
    pub fn controls(&self) -> &[HermitianOperator] {
        &self.controls
    }
    pub fn x_init(&self) -> &CMatrix {
        &self.x_init
    }

    /// `(1 + ξ_0) H^(0) + Σ_j (1 + ξ_j) u_j H^(j)`.
    pub fn assemble_hamiltonian(&self, u_col: &[f64], xi_col: &[f64]) -> Result<HermitianOperator> {
        let n = self.controllers();
        if u_col.len() != n || xi_col.len() != n + 1 {
            return Err(Error::Dimension(format!(
                "expected {n} controls and {} noise values, got {} and {}",
                n + 1,
                u_col.len(),
                xi_col.len()
            )));
        }
        let mut h = self.intrinsic.scaled(1.0 + xi_col[0]);
        for (j, hj) in self.controls.iter().enumerate() {
            let w = (1.0 + xi_col[j + 1]) * u_col[j];
            if w != 0.0 {
                h.add_scaled(hj, w);
            }
        }
        Ok(h)
    }
}

#[derive(Serialize, Deserialize)]
struct ControlSystemJson {
    qubits: usize,
    steps: usize,
    t_f: f64,
    dt: f64,
    intrinsic: HermitianOperator,
    controls: Vec<HermitianOperator>,
    x_init: MatrixJson,
}

impl Serialize for ControlSystem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ControlSystemJson {
            qubits: self.qubits,
            steps: self.steps,
            t_f: self.t_f,
            dt: self.dt,
            intrinsic: self.intrinsic.clone(),
            controls: self.controls.clone(),
            x_init: MatrixJson::from_matrix(&self.x_init),
        }
        .serialize(s)
    }
}

/// What the final evolution operator is scored against.
#[derive(Debug, Clone)]
pub enum TargetSpec {
    /// `1 - ⟨ψ₀|X†H̃X|ψ₀⟩ / E_min`.
    Energy { h_tilde: HermitianOperator, psi0: DVector<Complex64>, e_min: f64 },
    /// `1 - |tr(X_targ† X)| / 2^q`.
    Infidelity { x_targ: CMatrix },
}

impl TargetSpec {
    /// Energy target with `E_min` taken from the spectrum of `h_tilde`.
    pub fn energy(h_tilde: HermitianOperator, psi0: DVector<Complex64>) -> Result<Self> {
        if psi0.len() != h_tilde.dim() {
            return Err(Error::Dimension("initial state does not match Hamiltonian".into()));
        }
        if (psi0.norm() - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("initial state norm {} is not 1", psi0.norm())));
        }
        let e_min = SymmetricEigen::new(h_tilde.matrix().clone()).eigenvalues.min();
        if e_min.abs() < 1e-12 {
            return Err(Error::ZeroGroundEnergy);
        }
        Ok(Self::Energy { h_tilde, psi0, e_min })
    }

    pub fn infidelity(x_targ: CMatrix) -> Result<Self> {
        super::operator::qubits_for_dim(x_targ.nrows())?;
        ensure_unitary(&x_targ, UNITARY_TOL)?;
        Ok(Self::Infidelity { x_targ })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Energy { h_tilde, .. } => h_tilde.dim(),
            Self::Infidelity { x_targ } => x_targ.nrows(),
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TargetJson {
    Energy { h_tilde: HermitianOperator, psi0_re: Vec<f64>, psi0_im: Vec<f64>, e_min: f64 },
    Infidelity { x_targ: MatrixJson },
}

impl Serialize for TargetSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Energy { h_tilde, psi0, e_min } => TargetJson::Energy {
                h_tilde: h_tilde.clone(),
                psi0_re: psi0.iter().map(|z| z.re).collect(),
                psi0_im: psi0.iter().map(|z| z.im).collect(),
                e_min: *e_min,
            },
            Self::Infidelity { x_targ } => {
                TargetJson::Infidelity { x_targ: MatrixJson::from_matrix(x_targ) }
            }
        }
        .serialize(s)
    }
}

/// Noise matrix of zeros, `(N+1) × T`.
pub fn zero_noise(system: &ControlSystem) -> DMatrix<f64> {
    DMatrix::zeros(system.controllers() + 1, system.steps())
}
