//! Minimum-potential-energy cost `E_h(θ) = −½ num² / den` with
//! `num = Re⟨ψ|f⟩` (ancilla-X on the superposition state) and
//! `den = ⟨ψ|A|ψ⟩`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::ansatz::AnsatzCircuit;
use crate::error::{invalid, Error, Result};
use crate::operators::{ObservableTerm, PoissonOperator};
use crate::source::{prepare_source_state, SourceUnitary};
use crate::state::{prepare_superposition_state, shift_register, Statevector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub numerator: f64,
    pub denominator: f64,
    pub r_opt: f64,
    pub energy: f64,
}

/// Denominators at or below this are treated as zero. Summing the terms of a
/// singular operator leaves round-off of either sign, roughly `1e-16`.
pub const SINGULAR_DENOMINATOR: f64 = 1e-12;

impl CostReport {
    /// Assembles `r_opt` and the energy from the two expectations.
    pub fn from_parts(numerator: f64, denominator: f64) -> Result<Self> {
        if !numerator.is_finite() || !denominator.is_finite() {
            return Err(Error::NonFinite(format!("numerator {numerator}, denominator {denominator}")));
        }
        if denominator <= SINGULAR_DENOMINATOR {
            return Err(Error::SingularOperator { denominator });
        }
        Ok(Self {
            numerator,
            denominator,
            r_opt: numerator / denominator,
            energy: -0.5 * numerator * numerator / denominator,
        })
    }

    /// `E_h(r, θ) = ½ r² den − r num`, the energy before eliminating `r`.
    pub fn energy_at_scale(&self, r: f64) -> f64 {
        0.5 * r * r * self.denominator - r * self.numerator
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineCostReport {
    /// `⟨ψ|A(I − |f⟩⟨f|)A|ψ⟩`.
    pub cost: f64,
    /// Norm estimate `1/√⟨ψ|A²|ψ⟩`.
    pub r: f64,
}

/// A complete problem instance: operator, ansatz, and source vector.
#[derive(Debug, Clone)]
pub struct Problem {
    pub operator: PoissonOperator,
    pub ansatz: AnsatzCircuit,
    pub source: SourceUnitary,
    pub f: Statevector,
}

impl Problem {
    pub fn new(operator: PoissonOperator, ansatz: AnsatzCircuit, source: SourceUnitary) -> Result<Self> {
        if operator.n_qubits != ansatz.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: operator.n_qubits,
                actual: ansatz.n_qubits(),
            });
        }
        let f = prepare_source_state(operator.n_qubits, &source)?;
        Ok(Self {
            operator,
            ansatz,
            source,
            f,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.operator.n_qubits
    }

    pub fn cost(&self, theta: &[f64]) -> Result<CostReport> {
        cost(&self.operator, &self.ansatz, theta, &self.f)
    }
}

/// Applies the term's sub-register shifts to a copy of `state`.
pub(crate) fn shifted_copy(term: &ObservableTerm, state: &Statevector) -> Statevector {
    let mut s = state.clone();
    for sh in &term.axis_shifts {
        shift_register(&mut s, sh.first_qubit, sh.width, sh.power);
    }
    s
}

/// `coefficient · ⟨Sφ| F |Sφ⟩` for a term `c·S^{-1} F S`.
pub fn expectation(term: &ObservableTerm, state: &Statevector) -> Result<f64> {
    if term.n_qubits() != state.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: term.n_qubits(),
            actual: state.n_qubits(),
        });
    }
    let shifted;
    let phi = if term.axis_shifts.is_empty() {
        state
    } else {
        shifted = shifted_copy(term, state);
        &shifted
    };
    let (x_mask, p0_mask) = term.masks();
    let amps = phi.amplitudes();
    // F|j⟩ = [j has 0 on every P0 qubit] |j ⊕ x_mask⟩
    let value: Complex64 = amps
        .iter()
        .enumerate()
        .filter(|(j, _)| j & p0_mask == 0)
        .map(|(j, a)| amps[j ^ x_mask].conj() * a)
        .sum();
    Ok(term.coefficient * value.re)
}

/// `⟨ψ|A|ψ⟩ = offset + Σ ⟨terms⟩`.
pub fn denominator(op: &PoissonOperator, psi: &Statevector) -> Result<f64> {
    let mut total = op.constant_offset;
    for t in &op.terms {
        total += expectation(t, psi)?;
    }
    Ok(total)
}

/// Hadamard-test numerator: ancilla `X` on `(|0⟩|f⟩ + |1⟩|ψ⟩)/√2`, which
/// equals `Re⟨ψ|f⟩`.
pub fn numerator_hadamard(psi: &Statevector, f: &Statevector) -> Result<f64> {
    let sup = prepare_superposition_state(f, psi)?;
    expectation(&ObservableTerm::ancilla_x(psi.n_qubits(), 1.0), &sup)
}

/// Overlap route for real amplitudes: `|⟨ψ|f⟩| = √P(0…0)` after applying
/// `U_f^†` to `ψ`. The sign of the overlap is lost.
pub fn numerator_overlap(psi: &Statevector, u_f: &SourceUnitary) -> Result<f64> {
    let mut s = psi.clone();
    u_f.apply_inverse(&mut s)?;
    Ok(s.amplitudes()[0].norm_sqr().sqrt())
}

/// Exact statevector cost for parameters `theta`.
pub fn cost(op: &PoissonOperator, circuit: &AnsatzCircuit, theta: &[f64], f: &Statevector) -> Result<CostReport> {
    let psi = circuit.prepare(theta)?;
    cost_of_state(op, &psi, f)
}

pub fn cost_of_state(op: &PoissonOperator, psi: &Statevector, f: &Statevector) -> Result<CostReport> {
    CostReport::from_parts(numerator_hadamard(psi, f)?, denominator(op, psi)?)
}

/// Cost through the overlap route. The energy only needs `num²`; the sign of
/// `r_opt` comes from one Hadamard-test evaluation.
pub fn cost_overlap_route(
    op: &PoissonOperator,
    circuit: &AnsatzCircuit,
    theta: &[f64],
    u_f: &SourceUnitary,
) -> Result<CostReport> {
    let psi = circuit.prepare(theta)?;
    let magnitude = numerator_overlap(&psi, u_f)?;
    let f = prepare_source_state(psi.n_qubits(), u_f)?;
    let sign = if numerator_hadamard(&psi, &f)? < 0.0 { -1.0 } else { 1.0 };
    CostReport::from_parts(sign * magnitude, denominator(op, &psi)?)
}

/// Cosine-similarity baseline `⟨ψ|A(I − |f⟩⟨f|)A|ψ⟩` and its norm estimate,
/// evaluated with the dense matrix.
pub fn baseline_cost(a: &DMatrix<f64>, psi: &Statevector, f: &Statevector) -> Result<BaselineCostReport> {
    psi.check_same_size(f)?;
    if a.nrows() != psi.dim() || a.ncols() != psi.dim() {
        return invalid(format!("matrix is {}x{}, state has {} amplitudes", a.nrows(), a.ncols(), psi.dim()));
    }
    let to_vec = |s: &Statevector| DVector::from_iterator(s.dim(), s.amplitudes().iter().copied());
    let a = a.map(|x| Complex64::new(x, 0.0));
    let a_psi = &a * to_vec(psi);
    let a2 = a_psi.norm_squared();
    let proj = to_vec(f).dotc(&a_psi).norm_sqr();
    if a2 <= 0.0 {
        return Err(Error::SingularOperator { denominator: a2 });
    }
    Ok(BaselineCostReport {
        cost: (a2 - proj).max(0.0),
        r: 1.0 / a2.sqrt(),
    })
}
