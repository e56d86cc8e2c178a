//! Alternating layered R_Y / controlled-Z ansatz.

use crate::error::{invalid, Result};
use crate::state::{Gate, Statevector};

/// Layered hardware-efficient circuit `U(θ)`.
///
/// Layout: one column of `R_Y` on every qubit, then `n_layers` repetitions of
/// a CZ brick followed by another `R_Y` column. Even layers (0-based) entangle
/// the pairs `(0,1), (2,3), …`; odd layers entangle `(1,2), (3,4), …`. The
/// chain is a line, it does not wrap around.
///
/// Parameter `θ[c * n + q]` drives the rotation on qubit `q` in column `c`.
/// Every gate is a real matrix, so the prepared state has real amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnsatzCircuit {
    n_qubits: usize,
    n_layers: usize,
}

impl AnsatzCircuit {
    /// `n_layers = 0` is accepted and leaves a single rotation column.
    pub fn new(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits == 0 {
            return invalid("ansatz needs at least one qubit");
        }
        Ok(Self { n_qubits, n_layers })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn parameter_count(&self) -> usize {
        self.n_qubits * (self.n_layers + 1)
    }

    /// Circuit depth counting each rotation column and each CZ brick as one.
    pub fn depth(&self) -> usize {
        2 * self.n_layers + 1
    }

    /// CZ pairs of layer `layer` (0-based).
    pub fn entangler_pairs(&self, layer: usize) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n_qubits;
        (layer % 2..n.saturating_sub(1)).step_by(2).map(|q| (q, q + 1))
    }

    /// Gate list of `U(θ)` in application order.
    pub fn gates(&self, theta: &[f64]) -> Result<Vec<Gate>> {
        self.check_theta(theta)?;
        let n = self.n_qubits;
        let mut gates = Vec::with_capacity(self.parameter_count() + self.n_layers * n / 2);
        let column = |c: usize, gates: &mut Vec<Gate>| {
            for q in 0..n {
                gates.push(Gate::Ry {
                    qubit: q,
                    angle: theta[c * n + q],
                });
            }
        };
        column(0, &mut gates);
        for layer in 0..self.n_layers {
            gates.extend(self.entangler_pairs(layer).map(|(a, b)| Gate::Cz(a, b)));
            column(layer + 1, &mut gates);
        }
        Ok(gates)
    }

    /// `U(θ)|0…0⟩`.
    pub fn prepare(&self, theta: &[f64]) -> Result<Statevector> {
        let mut state = Statevector::zero(self.n_qubits)?;
        state.apply_all(&self.gates(theta)?)?;
        Ok(state)
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.parameter_count() {
            return invalid(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                theta.len()
            ));
        }
        Ok(())
    }
}

/// Free-function form of [`AnsatzCircuit::prepare`].
pub fn prepare_ansatz_state(circuit: &AnsatzCircuit, theta: &[f64]) -> Result<Statevector> {
    circuit.prepare(theta)
}
