//! Hermitian operators, unitary propagation under piecewise-constant
//! Hamiltonians, terminal costs and their exact control gradients.

pub mod cost;
pub mod expm;
pub mod operator;
pub mod propagation;
pub mod system;

pub use cost::{cost, scenario_gradient};
pub use expm::{expm_unitary, StepSpectrum};
pub use operator::{
    kron, pauli_operator, unitarity_residual, CMatrix, HermitianOperator, MatrixJson, PauliAxis,
};
pub use propagation::{propagate, PropagationResult};
pub use system::{zero_noise, ControlSystem, TargetSpec};
