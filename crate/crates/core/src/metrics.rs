//! Figures of merit: fidelities, concurrence, purity.
//!
//! All metrics validate their inputs (Hermitian, unit trace, positive
//! semidefinite within the clip window) and clamp rounding excursions so the
//! results stay in [0, 1].

use thiserror::Error;

use crate::opalg::{
    hermitian_eig, matrix_sqrt_psd, tensor_product, ComplexMatrix, ComplexVector, OpalgError,
    HERMITICITY_TOL, PSD_CLIP,
};
use crate::operators::LocalOperator;
use crate::tomography::ProcessMatrix;

/// Allowed deviation of a density matrix trace from one.  Looser than the
/// normalization tolerance for kets because reconstructed matrices may pass
/// through file round trips.
pub const TRACE_TOL: f64 = 1e-8;
/// Kets must be normalized to within this tolerance.
pub const KET_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    WrongDimension { expected: usize, rows: usize, cols: usize },
    #[error("matrix is not a density matrix: trace deviates from 1 by {deviation:.3e}")]
    BadTrace { deviation: f64 },
    #[error("state vector has norm {norm} but must be normalized")]
    NotNormalized { norm: f64 },
    #[error("state dimension {state} does not match matrix dimension {matrix}")]
    MismatchedState { state: usize, matrix: usize },
    #[error("process matrices use different operator bases")]
    BasisMismatch,
    #[error(transparent)]
    Linalg(#[from] OpalgError),
}

/// Checks Hermiticity, unit trace and positivity (within [`PSD_CLIP`]).
pub fn check_density(rho: &ComplexMatrix) -> Result<(), MetricError> {
    if !rho.is_square() {
        return Err(MetricError::WrongDimension {
            expected: rho.rows(),
            rows: rho.rows(),
            cols: rho.cols(),
        });
    }
    let dev = rho.hermitian_deviation();
    if dev > HERMITICITY_TOL {
        return Err(OpalgError::NotHermitian { deviation: dev, tol: HERMITICITY_TOL }.into());
    }
    let trace_dev = (rho.trace().re - 1.0).abs().max(rho.trace().im.abs());
    if trace_dev > TRACE_TOL {
        return Err(MetricError::BadTrace { deviation: trace_dev });
    }
    let eig = hermitian_eig(rho)?;
    if let Some(&min) = eig.eigenvalues.last() {
        if min < -PSD_CLIP {
            return Err(OpalgError::NotPsd { eigenvalue: min, tol: PSD_CLIP }.into());
        }
    }
    Ok(())
}

fn check_ket(psi: &ComplexVector, dim: usize) -> Result<(), MetricError> {
    if psi.dim() != dim {
        return Err(MetricError::MismatchedState { state: psi.dim(), matrix: dim });
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > KET_NORM_TOL {
        return Err(MetricError::NotNormalized { norm });
    }
    Ok(())
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Fidelity <psi|rho|psi> of a state against a pure target.
pub fn state_fidelity(rho: &ComplexMatrix, psi: &ComplexVector) -> Result<f64, MetricError> {
    check_density(rho)?;
    check_ket(psi, rho.rows())?;
    Ok(clamp_unit(psi.inner(&rho.apply(psi)).re))
}

/// Uhlmann fidelity [tr sqrt(sqrt(rho) sigma sqrt(rho))]^2 between two
/// density matrices.  Symmetric in its arguments and reduces to
/// [`state_fidelity`] when either is pure.
///
/// Precision: for rank-deficient inputs the inner square root amplifies
/// eigenvalue rounding from machine epsilon to its square root, so results
/// carry an absolute error of order 1e-8.  Every tolerance asserted on
/// fidelities downstream is orders of magnitude above that.
pub fn uhlmann_fidelity(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64, MetricError> {
    check_density(rho)?;
    check_density(sigma)?;
    if rho.rows() != sigma.rows() {
        return Err(MetricError::WrongDimension {
            expected: rho.rows(),
            rows: sigma.rows(),
            cols: sigma.cols(),
        });
    }
    Ok(clamp_unit(fidelity_of_checked(rho, sigma)?))
}

/// Core of the Uhlmann fidelity, shared with the process-matrix overlap.
/// Inputs must already be validated unit-trace PSD matrices.
pub(crate) fn fidelity_of_checked(
    rho: &ComplexMatrix,
    sigma: &ComplexMatrix,
) -> Result<f64, OpalgError> {
    let root = matrix_sqrt_psd(rho)?;
    // Hermitize before the second root: the triple product accumulates
    // rounding that would otherwise trip the Hermiticity gate.
    let inner = (&(&root * sigma) * &root).hermitized();
    let s = matrix_sqrt_psd(&inner)?;
    Ok(s.trace().re.powi(2))
}

/// Two-qubit concurrence of a density matrix.
///
/// Uses the spin-flip construction: with rho_tilde = (Y(x)Y) conj(rho) (Y(x)Y),
/// the eigenvalues of rho rho_tilde equal those of the Hermitian matrix
/// sqrt(rho) rho_tilde sqrt(rho), whose square roots in descending order give
/// C = max(0, l1 - l2 - l3 - l4).
pub fn concurrence(rho: &ComplexMatrix) -> Result<f64, MetricError> {
    if rho.rows() != 4 || rho.cols() != 4 {
        return Err(MetricError::WrongDimension { expected: 4, rows: rho.rows(), cols: rho.cols() });
    }
    check_density(rho)?;
    let yy = tensor_product(LocalOperator::pauli_y().matrix(), LocalOperator::pauli_y().matrix());
    let tilde = &(&yy * &rho.conj()) * &yy;
    let root = matrix_sqrt_psd(rho)?;
    let h = (&(&root * &tilde) * &root).hermitized();
    let eig = hermitian_eig(&h)?;
    let mut lambdas: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&w| if w < 0.0 { 0.0 } else { w.sqrt() })
        .collect();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let c = lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3];
    Ok(clamp_unit(c))
}

/// Purity tr(rho^2); 1 for pure states, 1/d for the maximally mixed state.
pub fn purity(rho: &ComplexMatrix) -> Result<f64, MetricError> {
    check_density(rho)?;
    Ok(clamp_unit((rho * rho).trace().re))
}

/// Fidelity between two process matrices expressed in the same operator
/// basis.  Normalized process matrices are unit-trace PSD, so the Uhlmann
/// form applies unchanged; against an ideal rank-one chi = |a><a| it reduces
/// to <a|chi|a>.
pub fn process_fidelity(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<f64, MetricError> {
    if a.basis_labels != b.basis_labels {
        return Err(MetricError::BasisMismatch);
    }
    check_density(&a.chi)?;
    check_density(&b.chi)?;
    Ok(clamp_unit(fidelity_of_checked(&a.chi, &b.chi)?))
}
