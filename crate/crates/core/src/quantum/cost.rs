//! Terminal cost functionals and their exact gradients with respect to the
//! piecewise-constant controls.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::operator::{c, CMatrix};
use super::propagation::{check_shapes, PropagationResult};
use super::system::{ControlSystem, TargetSpec};
use crate::control::ControlField;
use crate::error::{Error, Result};

/// Imaginary part of `⟨ψ|X†H̃X|ψ⟩` tolerated as round-off.
pub const EXPECTATION_RESIDUE_TOL: f64 = 1e-9;
/// Below this `|tr(X_targ† X)|` the infidelity gradient is taken as zero.
pub const TRACE_KINK_TOL: f64 = 1e-14;

fn trace_overlap(x_targ: &CMatrix, x: &CMatrix) -> Complex64 {
    x_targ.iter().zip(x.iter()).map(|(a, b)| a.conj() * b).sum()
}

fn energy_expectation(h: &CMatrix, phi: &DVector<Complex64>) -> Result<f64> {
    let e = phi.dotc(&(h * phi));
    if e.im.abs() >= EXPECTATION_RESIDUE_TOL {
        return Err(Error::NonHermitianExpectation { residue: e.im });
    }
    Ok(e.re)
}

/// Cost of a final evolution operator; in `[0, 1]` for unitary input.
pub fn cost(x_final: &CMatrix, target: &TargetSpec) -> Result<f64> {
    if x_final.nrows() != target.dim() || !x_final.is_square() {
        return Err(Error::Dimension(format!(
            "final operator {:?} does not match target dim {}",
            x_final.shape(),
            target.dim()
        )));
    }
    match target {
        TargetSpec::Energy { h_tilde, psi0, e_min } => {
            let phi = x_final * psi0;
            Ok(1.0 - energy_expectation(h_tilde.matrix(), &phi)? / e_min)
        }
        TargetSpec::Infidelity { x_targ } => {
            Ok(1.0 - trace_overlap(x_targ, x_final).norm() / x_targ.nrows() as f64)
        }
    }
}

/// Exact `∂F/∂u_{jk}` for one noise realization.
///
/// Each step derivative is the Fréchet derivative of the step exponential in
/// the eigenbasis of `H_k`, contracted with the forward operator `X_{k-1}` and
/// the backward product `U_T ⋯ U_{k+1}`.
pub fn scenario_gradient(
    system: &ControlSystem,
    u: &ControlField,
    xi: &DMatrix<f64>,
    target: &TargetSpec,
    prop: &PropagationResult,
) -> Result<DMatrix<f64>> {
    check_shapes(system, u, xi)?;
    let (n, t, dim) = (system.controllers(), system.steps(), system.dim());
    if prop.step_unitaries.len() != t {
        return Err(Error::Dimension("propagation does not match the time grid".into()));
    }
    let x_final = prop.final_operator();
    let mut grad = DMatrix::zeros(n, t);

    // tr(M_k dU_k) is the directional derivative of the scalar of interest;
    // `coef` maps it to dF.
    enum Contraction<'a> {
        Trace { x_targ_adj: CMatrix },
        Energy { psi0: &'a DVector<Complex64>, bra: nalgebra::RowDVector<Complex64> },
    }
    let (contraction, coef) = match target {
        TargetSpec::Infidelity { x_targ } => {
            let z = trace_overlap(x_targ, x_final);
            if z.norm() < TRACE_KINK_TOL {
                return Ok(grad);
            }
            let coef = -z.conj() / (z.norm() * dim as f64);
            (Contraction::Trace { x_targ_adj: x_targ.adjoint() }, coef)
        }
        TargetSpec::Energy { h_tilde, psi0, e_min } => {
            let phi = x_final * psi0;
            let bra = phi.adjoint() * h_tilde.matrix();
            (Contraction::Energy { psi0, bra }, c(-2.0 / e_min, 0.0))
        }
    };

    let mut backward = CMatrix::identity(dim, dim);
    for k in (0..t).rev() {
        let forward = &prop.cumulative[k];
        let m = match &contraction {
            Contraction::Trace { x_targ_adj } => forward * x_targ_adj * &backward,
            Contraction::Energy { psi0, bra } => (forward * *psi0) * (bra * &backward),
        };
        let spectrum = &prop.spectra[k];
        let v = &spectrum.eigenvectors;
        let w = v.adjoint() * m * v;
        let weights = w.transpose().component_mul(&spectrum.kernel());
        for (j, hj) in system.controls().iter().enumerate() {
            if hj.is_zero() {
                continue;
            }
            let rotated = v.adjoint() * hj.matrix() * v;
            let directional: Complex64 = weights.iter().zip(rotated.iter()).map(|(a, b)| a * b).sum();
            grad[(j, k)] = (coef * directional).re * (1.0 + xi[(j + 1, k)]);
        }
        backward = &backward * &prop.step_unitaries[k];
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::operator::{pauli_operator, HermitianOperator, PauliAxis};
    use crate::quantum::propagation::propagate;
    use crate::quantum::system::zero_noise;

    #[test]
    fn infidelity_extremes() {
        let x = pauli_operator(PauliAxis::X, 1, 1).unwrap().into_matrix();
        let target = TargetSpec::infidelity(x.clone()).unwrap();
        assert!(cost(&x, &target).unwrap().abs() < 1e-15);
        // tr(X† I) = 0
        assert!((cost(&CMatrix::identity(2, 2), &target).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn energy_ground_state_costs_zero() {
        let z = pauli_operator(PauliAxis::Z, 1, 1).unwrap();
        let ground = DVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let target = TargetSpec::energy(z, ground).unwrap();
        assert!(cost(&CMatrix::identity(2, 2), &target).unwrap().abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let target = TargetSpec::infidelity(CMatrix::identity(2, 2)).unwrap();
        assert!(cost(&CMatrix::identity(4, 4), &target).is_err());
    }

    #[test]
    fn zero_controller_has_zero_gradient() {
        let x = pauli_operator(PauliAxis::X, 1, 1).unwrap();
        let zero = HermitianOperator::zeros(2).unwrap();
        let sys = ControlSystem::new(
            1,
            1.0,
            3,
            pauli_operator(PauliAxis::Z, 1, 1).unwrap(),
            vec![x, zero],
            CMatrix::identity(2, 2),
        )
        .unwrap();
        let target = TargetSpec::infidelity(pauli_operator(PauliAxis::Y, 1, 1).unwrap().into_matrix()).unwrap();
        let u = ControlField::from_rows(&[vec![0.3, 0.6, 0.9], vec![0.5, 0.5, 0.5]]).unwrap();
        let xi = zero_noise(&sys);
        let prop = propagate(&sys, &u, &xi).unwrap();
        let g = scenario_gradient(&sys, &u, &xi, &target, &prop).unwrap();
        assert!(g.row(1).iter().all(|v| *v == 0.0));
        assert!(g.row(0).iter().any(|v| v.abs() > 1e-6));
    }
}
