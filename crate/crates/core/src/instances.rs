//! Experimental systems: Ising-type energy minimization, gmon-style circuit
//! compilation, and a four-level counterexample where rounding beats the
//! relaxation.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::operator::{c, embed_single_qubit, qubits_for_dim};
use crate::quantum::{pauli_operator, unitarity_residual, CMatrix, ControlSystem, HermitianOperator, MatrixJson, PauliAxis, TargetSpec};
use crate::uncertainty::NormalStream;

/// Residual `‖X†X − I‖_F` accepted for target unitaries read from files.
pub const FILE_UNITARY_TOL: f64 = 1e-8;
/// Gap above `E_min` that separates the first excited level from the ground level.
const EXCITED_GAP: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct EnergyInstance {
    pub system: ControlSystem,
    pub target: TargetSpec,
    pub coupling: DMatrix<f64>,
    pub first_excited: f64,
    /// `1 − E₁/E_min`: cost below which the final state is closer to the ground level than to `E₁`.
    pub dp_threshold: f64,
}

/// Symmetric zero-diagonal coupling matrix: all ones for two qubits,
/// seeded `U[−1, 1]` on the strict upper triangle otherwise.
pub fn coupling_matrix(q: usize, seed: u64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(q, q);
    let mut rng = NormalStream::new(seed, 0);
    for a in 0..q {
        for b in a + 1..q {
            let v = if q == 2 { 1.0 } else { 2.0 * rng.uniform() - 1.0 };
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    j
}

/// Ground state of a Hermitian matrix with its largest-magnitude entry made real positive.
fn ground_state(h: &CMatrix) -> DVector<Complex64> {
    let eig = SymmetricEigen::new(h.clone());
    let idx = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(idx).into_owned();
    let pivot = v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).copied().unwrap_or(c(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    let v = v * phase;
    let norm = v.norm();
    v / c(norm, 0.0)
}

pub fn build_energy_instance(q: usize, seed: u64, t_f: f64, steps: usize) -> Result<EnergyInstance> {
    if q < 2 {
        return Err(invalid(format!("energy instance needs at least 2 qubits, got {q}")));
    }
    let dim = 1usize << q;
    let mut h1 = HermitianOperator::zeros(dim)?;
    for site in 1..=q {
        h1.add_scaled(&pauli_operator(PauliAxis::X, site, q)?, -1.0);
    }
    let coupling = coupling_matrix(q, seed);
    let mut h2 = HermitianOperator::zeros(dim)?;
    for a in 0..q {
        for b in 0..q {
            if a == b || coupling[(a, b)] == 0.0 {
                continue;
            }
            let zz = pauli_operator(PauliAxis::Z, a + 1, q)?.matrix() * pauli_operator(PauliAxis::Z, b + 1, q)?.matrix();
            h2.add_scaled(&HermitianOperator::new(zz)?, coupling[(a, b)]);
        }
    }
    let psi0 = ground_state(h1.matrix());
    let spectrum = SymmetricEigen::new(h2.matrix().clone()).eigenvalues;
    let target = TargetSpec::energy(h2.clone(), psi0)?;
    let TargetSpec::Energy { e_min, .. } = target else { unreachable!() };
    let first_excited = spectrum
        .iter()
        .copied()
        .filter(|e| *e > e_min + EXCITED_GAP)
        .fold(f64::INFINITY, f64::min);
    if !first_excited.is_finite() {
        return Err(invalid("coupling Hamiltonian has a single energy level"));
    }
    let system = ControlSystem::new(q, t_f, steps, HermitianOperator::zeros(dim)?, vec![h1, h2], CMatrix::identity(dim, dim))?;
    Ok(EnergyInstance { system, target, coupling, first_excited, dp_threshold: 1.0 - first_excited / e_min })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitCouplings {
    pub j_c: f64,
    pub j_f: f64,
    pub j_e: f64,
}

impl Default for CircuitCouplings {
    fn default() -> Self {
        Self { j_c: 0.2 * PI, j_f: 3.0 * PI, j_e: 0.1 * PI }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CircuitInstance {
    pub system: ControlSystem,
    pub target: TargetSpec,
    pub topology: Vec<(usize, usize)>,
    pub couplings: CircuitCouplings,
}

/// Charge then flux drive for each qubit, followed by one `σˣσˣ` coupler per edge.
pub fn circuit_controls(q: usize, edges: &[(usize, usize)], k: &CircuitCouplings) -> Result<Vec<HermitianOperator>> {
    let flux = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]));
    let mut out = Vec::with_capacity(2 * q + edges.len());
    for site in 1..=q {
        out.push(pauli_operator(PauliAxis::X, site, q)?.scaled(k.j_c));
        out.push(HermitianOperator::new(embed_single_qubit(&flux, site, q)? * c(k.j_f, 0.0))?);
    }
    let mut seen = std::collections::BTreeSet::new();
    for &(a, b) in edges {
        if a == b || a == 0 || b == 0 || a > q || b > q {
            return Err(invalid(format!("edge ({a}, {b}) is not a pair of distinct qubits in 1..={q}")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(invalid(format!("duplicate edge ({a}, {b})")));
        }
        let xx = pauli_operator(PauliAxis::X, a, q)?.matrix() * pauli_operator(PauliAxis::X, b, q)?.matrix();
        out.push(HermitianOperator::new(xx * c(k.j_e, 0.0))?);
    }
    Ok(out)
}

pub fn build_circuit_instance(
    q: usize,
    edges: &[(usize, usize)],
    x_targ: CMatrix,
    t_f: f64,
    steps: usize,
    couplings: CircuitCouplings,
) -> Result<CircuitInstance> {
    let dim = 1usize << q;
    if x_targ.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "target is {}x{}, {q} qubits need {dim}x{dim}",
            x_targ.nrows(),
            x_targ.ncols()
        )));
    }
    let residual = unitarity_residual(&x_targ);
    if residual > FILE_UNITARY_TOL {
        return Err(Error::NotUnitary { residual });
    }
    let controls = circuit_controls(q, edges, &couplings)?;
    let system = ControlSystem::new(q, t_f, steps, HermitianOperator::zeros(dim)?, controls, CMatrix::identity(dim, dim))?;
    Ok(CircuitInstance { system, target: TargetSpec::Infidelity { x_targ }, topology: edges.to_vec(), couplings })
}

/// Horizontal and vertical neighbours of a row-major `rows × cols` grid, 1-based.
pub fn rect_grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let id = |r: usize, c: usize| r * cols + c + 1;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    edges
}

pub fn counterexample_target() -> CMatrix {
    let mut x = CMatrix::zeros(4, 4);
    for (a, b) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        x[(a, b)] = c(1.0, 0.0);
    }
    x
}

/// Two qubits, intrinsic drift plus `X`- and `Y`-type block controls, `t_f = 8`, one step.
pub fn build_counterexample() -> Result<(ControlSystem, TargetSpec)> {
    let h0 = HermitianOperator::from_real_rows(&[
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, -1.0, 2.0, 0.0],
        &[0.0, 2.0, -1.0, 1.0],
        &[0.0, 0.0, 1.0, 1.0],
    ])?;
    let h1 = HermitianOperator::from_real_rows(&[
        &[0.0, 0.0, 1.0, 0.0],
        &[0.0, 0.0, 0.0, 1.0],
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, 1.0, 0.0, 0.0],
    ])?;
    let mut m2 = CMatrix::zeros(4, 4);
    m2[(0, 2)] = c(0.0, -1.0);
    m2[(1, 3)] = c(0.0, -1.0);
    m2[(2, 0)] = c(0.0, 1.0);
    m2[(3, 1)] = c(0.0, 1.0);
    let h2 = HermitianOperator::new(m2)?;
    let system = ControlSystem::new(2, 8.0, 1, h0, vec![h1, h2], CMatrix::identity(4, 4))?;
    Ok((system, TargetSpec::infidelity(counterexample_target())?))
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases of `R`'s diagonal removed.
pub fn random_unitary(dim: usize, seed: u64) -> CMatrix {
    let mut rng = NormalStream::new(seed, 0);
    let z = CMatrix::from_fn(dim, dim, |_, _| c(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)));
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            col *= d / d.norm();
        }
    }
    q
}

/// Where a circuit target unitary comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TargetSource {
    /// Matrix JSON file, relative paths resolved against the config directory.
    File { path: PathBuf },
    Random { seed: u64 },
    /// The two-qubit permutation target of the counterexample.
    Counterexample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Topology {
    Grid { rows: usize, cols: usize },
    Edges(Vec<(usize, usize)>),
}

impl Topology {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        match self {
            Self::Grid { rows, cols } => rect_grid_edges(*rows, *cols),
            Self::Edges(e) => e.clone(),
        }
    }
}

/// Serializable description of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    Energy {
        q: usize,
        t_f: f64,
        steps: usize,
        #[serde(default)]
        seed: u64,
    },
    Circuit {
        q: usize,
        t_f: f64,
        steps: usize,
        topology: Topology,
        target: TargetSource,
        #[serde(default)]
        couplings: CircuitCouplings,
    },
    Counterexample,
}

/// A built instance ready for solving.
#[derive(Debug, Clone, Serialize)]
pub struct Instance {
    pub system: ControlSystem,
    pub target: TargetSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp_threshold: Option<f64>,
}

impl InstanceSpec {
    /// Builds the instance; file references are resolved relative to `base`.
    pub fn build(&self, base: &Path) -> Result<Instance> {
        match self {
            Self::Energy { q, t_f, steps, seed } => {
                let e = build_energy_instance(*q, *seed, *t_f, *steps)?;
                Ok(Instance { system: e.system, target: e.target, dp_threshold: Some(e.dp_threshold) })
            }
            Self::Circuit { q, t_f, steps, topology, target, couplings } => {
                let x_targ = match target {
                    TargetSource::File { path } => {
                        let m = MatrixJson::load(&base.join(path))?;
                        qubits_for_dim(m.nrows())?;
                        m
                    }
                    TargetSource::Random { seed } => random_unitary(1 << q, *seed),
                    TargetSource::Counterexample => counterexample_target(),
                };
                let c = build_circuit_instance(*q, &topology.edges(), x_targ, *t_f, *steps, *couplings)?;
                Ok(Instance { system: c.system, target: c.target, dp_threshold: None })
            }
            Self::Counterexample => {
                let (system, target) = build_counterexample()?;
                Ok(Instance { system, target, dp_threshold: None })
            }
        }
    }
}
