//! Dense ground truth for `(A + εI) u = f` and the direction metrics used to
//! compare a trial state against it.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::state::Statevector;

/// Largest register solved densely.
pub const MAX_DENSE_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSolution {
    pub u: Vec<f64>,
    pub norm: f64,
    pub u_normalized: Vec<f64>,
}

/// Cholesky solve. Fails if the matrix is not symmetric positive definite.
pub fn solve(matrix: &DMatrix<f64>, f: &[f64]) -> Result<ClassicalSolution> {
    let n = matrix.nrows();
    if matrix.ncols() != n || f.len() != n {
        return invalid(format!("matrix {}x{} does not match rhs of length {}", n, matrix.ncols(), f.len()));
    }
    if n > 1 << MAX_DENSE_QUBITS {
        return invalid(format!("dense solve is limited to {MAX_DENSE_QUBITS} qubits"));
    }
    let chol = matrix
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("matrix is not positive definite".into()))?;
    let rhs = DVector::from_column_slice(f);
    let u = chol.solve(&rhs);
    let residual = (matrix * &u - &rhs).norm();
    if residual > 1e-10 * rhs.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Solver(format!("residual {residual:e} too large")));
    }
    let norm = u.norm();
    if norm == 0.0 {
        return Err(Error::Solver("zero solution (rhs is zero)".into()));
    }
    Ok(ClassicalSolution {
        u_normalized: u.iter().map(|x| x / norm).collect(),
        u: u.as_slice().to_vec(),
        norm,
    })
}

/// `|⟨ψ|ū⟩|²`.
pub fn fidelity(psi: &Statevector, u_normalized: &[f64]) -> Result<f64> {
    if psi.dim() != u_normalized.len() {
        return invalid(format!("state has {} amplitudes, reference has {}", psi.dim(), u_normalized.len()));
    }
    let overlap: num_complex::Complex64 = psi
        .amplitudes()
        .iter()
        .zip(u_normalized)
        .map(|(a, u)| a.conj() * *u)
        .sum();
    Ok(overlap.norm_sqr())
}

/// Pure-state trace distance `√(1 − |⟨ψ|ū⟩|²)`.
pub fn trace_distance(psi: &Statevector, u_normalized: &[f64]) -> Result<f64> {
    Ok((1.0 - fidelity(psi, u_normalized)?).clamp(0.0, 1.0).sqrt())
}

/// Relative L2 error `‖r ψ − u‖ / ‖u‖` of a scaled trial state.
pub fn relative_error(r: f64, psi: &Statevector, u: &[f64]) -> Result<f64> {
    if psi.dim() != u.len() {
        return invalid("state and reference differ in length");
    }
    let diff: f64 = psi.real_parts().iter().zip(u).map(|(p, x)| (r * p - x).powi(2)).sum();
    let base: f64 = u.iter().map(|x| x * x).sum();
    Ok((diff / base).sqrt())
}
