//! Dense statevector simulation.
//!
//! Basis index `i` encodes `|i⟩` with qubit 0 as the least-significant bit.
//! Single-qubit gates are applied with stride-based pair updates, so each
//! costs `O(2^n)`.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Gates understood by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    X(usize),
    H(usize),
    Ry { qubit: usize, angle: f64 },
    Cz(usize, usize),
    Cnot { control: usize, target: usize },
    /// Multi-controlled X. Zero controls is a plain X, one is a CNOT.
    Mcx { controls: Vec<usize>, target: usize },
}

impl Gate {
    /// Qubits touched by the gate, controls first.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::X(q) | Gate::H(q) | Gate::Ry { qubit: q, .. } => vec![*q],
            Gate::Cz(a, b) => vec![*a, *b],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Mcx { controls, target } => {
                let mut qs = controls.clone();
                qs.push(*target);
                qs
            }
        }
    }

    /// The inverse gate.
    pub fn inverse(&self) -> Gate {
        match self {
            Gate::Ry { qubit, angle } => Gate::Ry {
                qubit: *qubit,
                angle: -angle,
            },
            g => g.clone(),
        }
    }
}

/// Dense complex amplitude vector of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_register_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return invalid(format!("basis index {index} out of range for {n_qubits} qubits"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes. The length must be a power of two `>= 2`; the
    /// vector is taken as given (callers normalize when they need to).
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return invalid(format!("amplitude vector length {dim} is not a power of two >= 2"));
        }
        Ok(Self {
            n_qubits: dim.trailing_zeros() as usize,
            amps,
        })
    }

    /// Real amplitudes, normalized to unit length.
    pub fn from_real(values: &[f64]) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        Self::from_amplitudes(values.iter().map(|v| Complex64::new(v / norm, 0.0)).collect())
    }

    /// Uniform superposition `H^{⊗n}|0⟩`.
    pub fn uniform(n_qubits: usize) -> Result<Self> {
        check_register_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        let a = 1.0 / (dim as f64).sqrt();
        Ok(Self {
            n_qubits,
            amps: vec![Complex64::new(a, 0.0); dim],
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Real parts of the amplitudes.
    pub fn real_parts(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.re).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Largest absolute imaginary part over all amplitudes.
    pub fn max_imag(&self) -> f64 {
        self.amps.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Statevector) -> Result<Complex64> {
        self.check_same_size(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn check_same_size(&self, other: &Statevector) -> Result<()> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                actual: other.n_qubits,
            });
        }
        Ok(())
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        self.validate(gate)?;
        match *gate {
            Gate::X(q) => {
                let bit = 1usize << q;
                for i in 0..self.amps.len() {
                    if i & bit == 0 {
                        self.amps.swap(i, i | bit);
                    }
                }
            }
            Gate::H(q) => self.apply_real_2x2(q, [[FRAC_1_SQRT_2, FRAC_1_SQRT_2], [FRAC_1_SQRT_2, -FRAC_1_SQRT_2]]),
            Gate::Ry { qubit, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                self.apply_real_2x2(qubit, [[c, -s], [s, c]]);
            }
            Gate::Cz(a, b) => {
                let mask = (1usize << a) | (1usize << b);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
            Gate::Cnot { control, target } => self.apply_mcx(1usize << control, target),
            Gate::Mcx {
                ref controls,
                target,
            } => {
                let mask = controls.iter().fold(0usize, |m, c| m | (1usize << c));
                self.apply_mcx(mask, target);
            }
        }
        Ok(())
    }

    /// Pure variant of [`Statevector::apply`].
    pub fn apply_gate(&self, gate: &Gate) -> Result<Statevector> {
        let mut out = self.clone();
        out.apply(gate)?;
        Ok(out)
    }

    pub fn apply_all<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        for g in gates {
            self.apply(g)?;
        }
        Ok(())
    }

    fn apply_real_2x2(&mut self, q: usize, m: [[f64; 2]; 2]) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = a0 * m[0][0] + a1 * m[0][1];
                self.amps[i | bit] = a0 * m[1][0] + a1 * m[1][1];
            }
        }
    }

    fn apply_mcx(&mut self, control_mask: usize, target: usize) {
        let bit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & bit == 0 && i & control_mask == control_mask {
                self.amps.swap(i, i | bit);
            }
        }
    }

    fn validate(&self, gate: &Gate) -> Result<()> {
        let qs = gate.qubits();
        for (k, &q) in qs.iter().enumerate() {
            if q >= self.n_qubits {
                return invalid(format!("qubit {q} out of range for {} qubits", self.n_qubits));
            }
            if qs[..k].contains(&q) {
                return invalid(format!("duplicate qubit {q} in {gate:?}"));
            }
        }
        if let Gate::Ry { angle, .. } = gate {
            if !angle.is_finite() {
                return Err(Error::NonFinite(format!("rotation angle {angle}")));
            }
        }
        Ok(())
    }
}

/// Builds `(|0⟩|a⟩ + |1⟩|b⟩)/√2` on `n + 1` qubits. The ancilla is the most
/// significant qubit (index `n`).
pub fn prepare_superposition_state(a: &Statevector, b: &Statevector) -> Result<Statevector> {
    a.check_same_size(b)?;
    let mut amps = Vec::with_capacity(2 * a.dim());
    amps.extend(a.amps.iter().map(|x| x * FRAC_1_SQRT_2));
    amps.extend(b.amps.iter().map(|x| x * FRAC_1_SQRT_2));
    Ok(Statevector {
        n_qubits: a.n_qubits + 1,
        amps,
    })
}

/// Cyclic shift of the whole register: the amplitude at index `i` moves to
/// `(i + power) mod 2^n`.
pub fn apply_shift(state: &Statevector, power: i64) -> Statevector {
    let mut out = state.clone();
    shift_register(&mut out, 0, state.n_qubits, power);
    out
}

/// Cyclic shift restricted to the sub-register of `width` qubits starting at
/// `first_qubit`; the remaining bits of each index are left alone.
pub(crate) fn shift_register(state: &mut Statevector, first_qubit: usize, width: usize, power: i64) {
    let size = 1i64 << width;
    let step = power.rem_euclid(size) as usize;
    if step == 0 {
        return;
    }
    let field = ((1usize << width) - 1) << first_qubit;
    let src = state.amps.clone();
    for (i, amp) in src.into_iter().enumerate() {
        let sub = (i & field) >> first_qubit;
        let moved = ((sub + step) & ((1usize << width) - 1)) << first_qubit;
        state.amps[(i & !field) | moved] = amp;
    }
}

fn check_register_size(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 {
        return invalid("register needs at least one qubit");
    }
    if n_qubits > 30 {
        return invalid(format!("{n_qubits} qubits exceeds the dense simulation limit"));
    }
    Ok(())
}
