//! Static circuit accounting: circuits per cost evaluation, gradient
//! circuits, shift-operator gate counts, and the total time-complexity
//! product `T_it · T_P · (T_C + T_G) · T_S`.
//!
//! Gradient convention: one set of `T_C` circuits per parameter (the
//! `π`-shifted ansatz route), so `T_G = parameter_count · T_C`.

use crate::ansatz::AnsatzCircuit;
use crate::operators::BoundaryCondition;
use crate::source::SourceUnitary;
use crate::state::Gate;

/// Numerator circuit plus one circuit per measured operator term.
pub fn count_cost_circuits(bc: BoundaryCondition) -> usize {
    match bc {
        BoundaryCondition::Periodic => 3,
        BoundaryCondition::Dirichlet => 4,
        BoundaryCondition::Neumann => 5,
    }
}

pub fn count_gradient_circuits(n: usize, n_layers: usize, bc: BoundaryCondition) -> usize {
    n * (n_layers + 1) * count_cost_circuits(bc)
}

/// Gate inventory of the `+1 mod 2^n` shift after decomposing every
/// `k`-controlled X with `3 ≤ k ≤ n−1` into `2k−4` relative-phase Toffolis
/// and one Toffoli on `k−2` borrowed ancillas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftResources {
    pub relative_phase_toffolis: usize,
    pub toffolis: usize,
    /// The 2-controlled X of the cascade (present for `n ≥ 3`). It is
    /// already a Toffoli and is not part of the decomposition count above.
    pub two_control_toffolis: usize,
    pub cnots: usize,
    pub xs: usize,
    pub total_qubits: usize,
}

pub fn count_shift_resources(n: usize) -> ShiftResources {
    if n >= 3 {
        ShiftResources {
            relative_phase_toffolis: (n - 2) * (n - 3),
            toffolis: n - 3,
            two_control_toffolis: 1,
            cnots: 1,
            xs: 1,
            total_qubits: 2 * n - 3,
        }
    } else {
        ShiftResources {
            relative_phase_toffolis: 0,
            toffolis: 0,
            two_control_toffolis: 0,
            cnots: usize::from(n == 2),
            xs: usize::from(n >= 1),
            total_qubits: n,
        }
    }
}

/// The shift as a cascade of multi-controlled X gates, most-significant
/// target first.
pub fn shift_circuit(n: usize) -> Vec<Gate> {
    let mut gates: Vec<Gate> = (1..n)
        .rev()
        .map(|k| Gate::Mcx {
            controls: (0..k).collect(),
            target: k,
        })
        .collect();
    if n >= 1 {
        gates.push(Gate::X(0));
    }
    gates
}

/// Depth terms of the state-preparation time `T_P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreparationDepths {
    pub d_ansatz: usize,
    /// Encoding gate count of the configured source unitary.
    pub d_enc: usize,
    /// True when `d_enc` is declared by a custom preparation.
    pub d_enc_declared: bool,
    /// `n²`, the order of the shift-operator depth.
    pub shift_depth_order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceReport {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub boundary: BoundaryCondition,
    pub t_c: usize,
    pub t_g: usize,
    pub shift: ShiftResources,
    /// Register plus shift ancillas, or `n + 1` for the numerator's
    /// superposition register, whichever is larger.
    pub total_qubits_with_ancilla: usize,
    pub depths: PreparationDepths,
}

impl ResourceReport {
    pub fn new(circuit: &AnsatzCircuit, bc: BoundaryCondition, source: &SourceUnitary) -> Self {
        let n = circuit.n_qubits();
        let shift = count_shift_resources(n);
        let (d_enc, d_enc_declared) = source.gate_count(n);
        Self {
            n_qubits: n,
            n_layers: circuit.n_layers(),
            boundary: bc,
            t_c: count_cost_circuits(bc),
            t_g: count_gradient_circuits(n, circuit.n_layers(), bc),
            total_qubits_with_ancilla: shift.total_qubits.max(n + 1),
            shift,
            depths: PreparationDepths {
                d_ansatz: circuit.depth(),
                d_enc,
                d_enc_declared,
                shift_depth_order: n * n,
            },
        }
    }

    /// `T_P = D_ansatz + D_enc + n²`.
    pub fn t_p(&self) -> usize {
        self.depths.d_ansatz + self.depths.d_enc + self.depths.shift_depth_order
    }

    /// `T = T_it · T_P · (T_C + T_G) / ε²`, with `T_S = 1/ε²`.
    pub fn total_time(&self, t_it: f64, epsilon: f64) -> f64 {
        t_it * self.t_p() as f64 * (self.t_c + self.t_g) as f64 / (epsilon * epsilon)
    }

    pub const CSV_HEADER: &'static str =
        "n,layers,bc,t_c,t_g,rel_phase_toffolis,toffolis,two_control_toffolis,cnot,x,total_qubits,d_ansatz,d_enc,d_enc_declared,shift_depth_order,t_p";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n_qubits,
            self.n_layers,
            self.boundary,
            self.t_c,
            self.t_g,
            self.shift.relative_phase_toffolis,
            self.shift.toffolis,
            self.shift.two_control_toffolis,
            self.shift.cnots,
            self.shift.xs,
            self.total_qubits_with_ancilla,
            self.depths.d_ansatz,
            self.depths.d_enc,
            self.depths.d_enc_declared,
            self.depths.shift_depth_order,
            self.t_p()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::decompose;
    use crate::state::{apply_shift, Statevector};

    #[test]
    fn cost_circuits_match_term_counts() {
        for bc in BoundaryCondition::ALL {
            for n in 1..=10 {
                let op = decompose(n, bc, bc.default_epsilon()).unwrap();
                assert_eq!(count_cost_circuits(bc), 1 + op.measured_term_count());
            }
        }
    }

    #[test]
    fn shift_counts() {
        let r = count_shift_resources(5);
        assert_eq!((r.relative_phase_toffolis, r.toffolis, r.total_qubits), (6, 2, 7));
        let r = count_shift_resources(3);
        assert_eq!((r.relative_phase_toffolis, r.toffolis, r.total_qubits), (0, 0, 3));
        let r = count_shift_resources(2);
        assert_eq!((r.relative_phase_toffolis, r.toffolis, r.cnots, r.xs), (0, 0, 1, 1));
    }

    #[test]
    fn decomposition_count_matches_cascade() {
        for n in 3..=12 {
            let gates = shift_circuit(n);
            let mut rel = 0;
            let mut tof = 0;
            for g in &gates {
                if let Gate::Mcx { controls, .. } = g {
                    let k = controls.len();
                    if k >= 3 {
                        rel += 2 * k - 4;
                        tof += 1;
                    }
                }
            }
            let r = count_shift_resources(n);
            assert_eq!((rel, tof), (r.relative_phase_toffolis, r.toffolis));
            let max_k = gates.iter().map(|g| g.qubits().len() - 1).max().unwrap();
            assert_eq!(n + max_k.saturating_sub(2), r.total_qubits);
        }
    }

    #[test]
    fn cascade_is_the_shift() {
        for n in 1..=6 {
            for i in 0..1usize << n {
                let mut s = Statevector::basis(n, i).unwrap();
                s.apply_all(&shift_circuit(n)).unwrap();
                assert_eq!(s, apply_shift(&Statevector::basis(n, i).unwrap(), 1));
            }
        }
    }

    #[test]
    fn gradient_circuits() {
        assert_eq!(count_gradient_circuits(3, 5, BoundaryCondition::Dirichlet), 72);
        assert_eq!(count_gradient_circuits(4, 0, BoundaryCondition::Periodic), 12);
        let a = count_gradient_circuits(4, 10, BoundaryCondition::Neumann);
        let b = count_gradient_circuits(4, 20, BoundaryCondition::Neumann);
        assert!((b as f64 / a as f64 - 2.0).abs() < 0.1);
    }

    #[test]
    fn report_fields() {
        let c = AnsatzCircuit::new(5, 5).unwrap();
        let r = ResourceReport::new(&c, BoundaryCondition::Dirichlet, &SourceUnitary::StepFunction);
        assert_eq!(r.t_c, 4);
        assert_eq!(r.t_g, 5 * 6 * 4);
        assert_eq!(r.depths.d_ansatz, 11);
        assert_eq!(r.depths.d_enc, 6);
        assert_eq!(r.t_p(), 11 + 6 + 25);
        assert!((r.total_time(10.0, 0.1) / (10.0 * 42.0 * 124.0 * 100.0) - 1.0).abs() < 1e-12);
        assert_eq!(r.csv_row().split(',').count(), ResourceReport::CSV_HEADER.split(',').count());
    }
}
