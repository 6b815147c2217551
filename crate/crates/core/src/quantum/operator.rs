//! Dense complex operators, Pauli constructors and the JSON matrix format.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const UNITARY_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `||X^H X - I||_F`.
pub fn unitarity_residual(x: &CMatrix) -> f64 {
    let n = x.nrows();
    (x.adjoint() * x - CMatrix::identity(n, n)).norm()
}

pub fn max_asymmetry(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn ensure_unitary(x: &CMatrix, tol: f64) -> Result<()> {
    if !x.is_square() {
        return Err(Error::Dimension(format!("unitary must be square, got {:?}", x.shape())));
    }
    let residual = unitarity_residual(x);
    if residual > tol || !residual.is_finite() {
        return Err(Error::NotUnitary { residual });
    }
    Ok(())
}

/// Number of qubits for a `2^q`-dimensional space.
pub fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// A Hermitian matrix on `2^q` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "Hermitian operator must be square, got {:?}",
                matrix.shape()
            )));
        }
        qubits_for_dim(matrix.nrows())?;
        let asym = max_asymmetry(&matrix);
        if asym > HERMITIAN_TOL || !asym.is_finite() {
            return Err(Error::NotHermitian { max_asymmetry: asym });
        }
        Ok(Self { matrix })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(CMatrix::zeros(dim, dim))
    }

    /// Builds from a real symmetric matrix given row by row.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("rows must form a square matrix".into()));
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| c(rows[i][j], 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: self.matrix.map(|z| z * factor) }
    }

    /// Real linear combination of Hermitian operators (stays Hermitian).
    pub fn add_scaled(&mut self, other: &HermitianOperator, factor: f64) {
        self.matrix.zip_apply(&other.matrix, |a, b| *a += b * factor);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

fn single_pauli(axis: PauliAxis) -> CMatrix {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match axis {
        PauliAxis::X => CMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        PauliAxis::Y => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        PauliAxis::Z => CMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    }
}

/// Embeds a single-qubit operator at `site` (1-based, site 1 is the leftmost
/// Kronecker factor) of a `qubits`-qubit register.
pub fn embed_single_qubit(op: &CMatrix, site: usize, qubits: usize) -> Result<CMatrix> {
    if site == 0 || site > qubits {
        return Err(Error::SiteOutOfRange { site, qubits });
    }
    let id = CMatrix::identity(2, 2);
    let mut out = CMatrix::identity(1, 1);
    for s in 1..=qubits {
        out = kron(&out, if s == site { op } else { &id });
    }
    Ok(out)
}

/// `I ⊗ … ⊗ σ_axis ⊗ … ⊗ I` with the Pauli matrix on qubit `site`.
pub fn pauli_operator(axis: PauliAxis, site: usize, qubits: usize) -> Result<HermitianOperator> {
    HermitianOperator::new(embed_single_qubit(&single_pauli(axis), site, qubits)?)
}

/// Row-major JSON form `{"dim": n, "re": [[..]], "im": [[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        Self { dim: m.nrows(), re: rows(|z| z.re), im: rows(|z| z.im) }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.dim;
        let ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !ok(&self.re) || !ok(&self.im) {
            return Err(Error::Dimension(format!("matrix JSON does not match dim {n}")));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| c(self.re[i][j], self.im[i][j])))
    }

    pub fn load(path: &std::path::Path) -> Result<CMatrix> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let parsed: MatrixJson = serde_json::from_str(&text)?;
        parsed.to_matrix()
    }
}

impl Serialize for HermitianOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from_matrix(&self.matrix).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        let m = raw.to_matrix().map_err(serde::de::Error::custom)?;
        HermitianOperator::new(m).map_err(serde::de::Error::custom)
    }
}
