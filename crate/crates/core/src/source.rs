//! Unitaries preparing the source vector `|f⟩ = U_f |0…0⟩`.

use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::state::{Gate, Statevector};

/// A caller-supplied state preparation. Implementors provide both directions;
/// the overlap route for the cost numerator needs `U_f^†`.
pub trait StatePreparation: Send + Sync {
    fn apply(&self, state: &mut Statevector) -> Result<()>;
    fn apply_inverse(&self, state: &mut Statevector) -> Result<()>;
    /// Gate count declared by the implementor, reported as the encoding depth.
    fn declared_gate_count(&self) -> usize;
}

/// A fixed gate list used as a custom preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSequence(pub Vec<Gate>);

impl StatePreparation for GateSequence {
    fn apply(&self, state: &mut Statevector) -> Result<()> {
        state.apply_all(&self.0)
    }

    fn apply_inverse(&self, state: &mut Statevector) -> Result<()> {
        for g in self.0.iter().rev() {
            state.apply(&g.inverse())?;
        }
        Ok(())
    }

    fn declared_gate_count(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone)]
pub enum SourceUnitary {
    /// `H^{⊗n}` after `X` on qubit `n−1`: a step from `+2^{-n/2}` to `−2^{-n/2}`
    /// across the midpoint of the register.
    StepFunction,
    Custom(Arc<dyn StatePreparation>),
}

impl fmt::Debug for SourceUnitary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceUnitary::StepFunction => f.write_str("StepFunction"),
            SourceUnitary::Custom(p) => write!(f, "Custom({} gates)", p.declared_gate_count()),
        }
    }
}

impl SourceUnitary {
    pub fn custom(prep: impl StatePreparation + 'static) -> Self {
        SourceUnitary::Custom(Arc::new(prep))
    }

    fn step_gates(n: usize) -> Vec<Gate> {
        let mut gates = vec![Gate::X(n - 1)];
        gates.extend((0..n).map(Gate::H));
        gates
    }

    pub fn apply(&self, state: &mut Statevector) -> Result<()> {
        match self {
            SourceUnitary::StepFunction => state.apply_all(&Self::step_gates(state.n_qubits())),
            SourceUnitary::Custom(p) => p.apply(state),
        }
    }

    pub fn apply_inverse(&self, state: &mut Statevector) -> Result<()> {
        match self {
            SourceUnitary::StepFunction => {
                for g in Self::step_gates(state.n_qubits()).iter().rev() {
                    state.apply(g)?;
                }
                Ok(())
            }
            SourceUnitary::Custom(p) => p.apply_inverse(state),
        }
    }

    /// Encoding gate count on `n` qubits, and whether the count is only
    /// declared by a custom implementation.
    pub fn gate_count(&self, n: usize) -> (usize, bool) {
        match self {
            SourceUnitary::StepFunction => (n + 1, false),
            SourceUnitary::Custom(p) => (p.declared_gate_count(), true),
        }
    }
}

/// `U_f |0…0⟩` on `n` qubits.
pub fn prepare_source_state(n: usize, u: &SourceUnitary) -> Result<Statevector> {
    let mut s = Statevector::zero(n)?;
    u.apply(&mut s)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn step_function_n1_and_n2() {
        let f = prepare_source_state(1, &SourceUnitary::StepFunction).unwrap();
        assert_abs_diff_eq!(f.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(f.amplitudes()[1].re, -FRAC_1_SQRT_2, epsilon = 1e-15);
        let f = prepare_source_state(2, &SourceUnitary::StepFunction).unwrap();
        let expect = [0.5, 0.5, -0.5, -0.5];
        for (a, e) in f.amplitudes().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn step_function_n3_halves() {
        let f = prepare_source_state(3, &SourceUnitary::StepFunction).unwrap();
        let a = 1.0 / 8f64.sqrt();
        for (i, amp) in f.amplitudes().iter().enumerate() {
            let expect = if i < 4 { a } else { -a };
            assert_abs_diff_eq!(amp.re, expect, epsilon = 1e-15);
        }
        assert!(f.max_imag() < 1e-12);
    }

    #[test]
    fn inverse_returns_to_zero() {
        for n in 1..6 {
            let u = SourceUnitary::StepFunction;
            let mut s = prepare_source_state(n, &u).unwrap();
            u.apply_inverse(&mut s).unwrap();
            assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn custom_gate_sequence() {
        let u = SourceUnitary::custom(GateSequence(vec![
            Gate::Ry { qubit: 0, angle: 0.7 },
            Gate::Cnot { control: 0, target: 1 },
        ]));
        let mut s = prepare_source_state(2, &u).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[3].re, 0.35f64.sin(), epsilon = 1e-15);
        u.apply_inverse(&mut s).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-15);
        assert_eq!(u.gate_count(2), (2, true));
        assert_eq!(SourceUnitary::StepFunction.gate_count(4), (5, false));
    }
}
