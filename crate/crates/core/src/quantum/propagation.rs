use nalgebra::DMatrix;

use super::expm::StepSpectrum;
use super::operator::CMatrix;
use super::system::ControlSystem;
use crate::control::ControlField;
use crate::error::{Error, Result};

/// Step propagators, cumulative operators and the per-step spectra reused by
/// the gradient.
#[derive(Debug, Clone)]
pub struct PropagationResult {
    /// `U_k = e^{-i H_k dt}`, `k = 1..T` stored at index `k-1`.
    pub step_unitaries: Vec<CMatrix>,
    /// `X_0 = x_init, X_k = U_k X_{k-1}`; length `T+1`.
    pub cumulative: Vec<CMatrix>,
    pub spectra: Vec<StepSpectrum>,
}

impl PropagationResult {
    pub fn final_operator(&self) -> &CMatrix {
        self.cumulative.last().expect("cumulative always holds x_init")
    }
}

pub(crate) fn check_shapes(system: &ControlSystem, u: &ControlField, xi: &DMatrix<f64>) -> Result<()> {
    let (n, t) = (system.controllers(), system.steps());
    if u.controllers() != n || u.steps() != t {
        return Err(Error::Dimension(format!(
            "control is {}x{}, system expects {n}x{t}",
            u.controllers(),
            u.steps()
        )));
    }
    if xi.shape() != (n + 1, t) {
        return Err(Error::Dimension(format!(
            "noise is {:?}, system expects {}x{t}",
            xi.shape(),
            n + 1
        )));
    }
    Ok(())
}

/// Evolves `x_init` through the piecewise-constant Hamiltonians for control `u`
/// under noise realization `xi` (`(N+1) × T`, row 0 is the intrinsic term).
pub fn propagate(system: &ControlSystem, u: &ControlField, xi: &DMatrix<f64>) -> Result<PropagationResult> {
    check_shapes(system, u, xi)?;
    let t = system.steps();
    let mut step_unitaries = Vec::with_capacity(t);
    let mut spectra = Vec::with_capacity(t);
    let mut cumulative = Vec::with_capacity(t + 1);
    cumulative.push(system.x_init().clone());
    for k in 0..t {
        let u_col = u.column(k);
        let xi_col: Vec<f64> = xi.column(k).iter().copied().collect();
        let h = system.assemble_hamiltonian(&u_col, &xi_col)?;
        let spectrum = StepSpectrum::new(&h, system.dt())?;
        let step = spectrum.unitary();
        let next = &step * &cumulative[k];
        cumulative.push(next);
        step_unitaries.push(step);
        spectra.push(spectrum);
    }
    Ok(PropagationResult { step_unitaries, cumulative, spectra })
}
