//! Discretized Poisson operators and their constant-size observable
//! decompositions.
//!
//! The 1D matrices split into an even pairing `I^{⊗n−1}⊗(I−X)` and its
//! conjugate under the cyclic shift `P|i⟩ = |i+1 mod 2^n⟩`; boundary
//! conditions add one or two projector-string corrections. Identity parts are
//! folded into [`PoissonOperator::constant_offset`], so only the non-trivial
//! terms need measuring.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest register accepted by the dense reassembly check.
pub const DENSE_REASSEMBLY_MAX_QUBITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Periodic,
    Dirichlet,
    Neumann,
}

impl BoundaryCondition {
    pub const ALL: [BoundaryCondition; 3] = [
        BoundaryCondition::Periodic,
        BoundaryCondition::Dirichlet,
        BoundaryCondition::Neumann,
    ];

    /// Regularization used when none is given: the periodic and Neumann
    /// matrices are singular without it.
    pub fn default_epsilon(self) -> f64 {
        match self {
            BoundaryCondition::Dirichlet => 0.0,
            BoundaryCondition::Periodic | BoundaryCondition::Neumann => 1e-3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryCondition::Periodic => "periodic",
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" | "p" => Ok(BoundaryCondition::Periodic),
            "dirichlet" | "d" => Ok(BoundaryCondition::Dirichlet),
            "neumann" | "n" => Ok(BoundaryCondition::Neumann),
            other => invalid(format!("unknown boundary condition '{other}'")),
        }
    }
}

/// Single-qubit factor of an observable string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Factor {
    I,
    X,
    /// The projector `|0⟩⟨0|`.
    P0,
}

impl Factor {
    fn symbol(self) -> char {
        match self {
            Factor::I => 'I',
            Factor::X => 'X',
            Factor::P0 => 'P',
        }
    }

    fn from_symbol(c: char) -> Result<Self> {
        match c {
            'I' => Ok(Factor::I),
            'X' => Ok(Factor::X),
            'P' => Ok(Factor::P0),
            other => invalid(format!("unknown factor symbol '{other}'")),
        }
    }
}

/// Cyclic shift applied to a contiguous sub-register before measuring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisShift {
    pub first_qubit: usize,
    pub width: usize,
    pub power: i64,
}

/// `coefficient · S^{-1} (⊗ factors) S`, where `S` is the product of the
/// listed sub-register shifts. The shift is never materialized as a matrix;
/// it is applied to the state before the factor string is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TermWire", try_from = "TermWire")]
pub struct ObservableTerm {
    pub coefficient: f64,
    /// Indexed by qubit: `factors[0]` acts on the least-significant qubit.
    pub factors: Vec<Factor>,
    pub axis_shifts: Vec<AxisShift>,
    /// Free-form tag such as `"even"` or `"odd"`, used in diagnostics.
    pub label: String,
}

impl ObservableTerm {
    pub fn n_qubits(&self) -> usize {
        self.factors.len()
    }

    /// Shift power on a whole-register term; `0` when unshifted.
    pub fn shift_power(&self) -> i64 {
        self.axis_shifts.iter().map(|s| s.power).sum()
    }

    pub fn is_shifted(&self) -> bool {
        self.axis_shifts.iter().any(|s| s.power.rem_euclid(1i64 << s.width) != 0)
    }

    /// Bit masks of the `X` and `P0` factors.
    pub fn masks(&self) -> (usize, usize) {
        let mut x = 0usize;
        let mut p0 = 0usize;
        for (q, f) in self.factors.iter().enumerate() {
            match f {
                Factor::X => x |= 1 << q,
                Factor::P0 => p0 |= 1 << q,
                Factor::I => {}
            }
        }
        (x, p0)
    }

    /// Factor string with the most-significant qubit first, e.g. `"PPX"`.
    pub fn factor_string(&self) -> String {
        self.factors.iter().rev().map(|f| f.symbol()).collect()
    }

    /// The same term with an extra `X` on a new most-significant ancilla:
    /// measures `Re⟨a|T|b⟩` on `(|0⟩|a⟩ + |1⟩|b⟩)/√2`.
    pub fn with_ancilla_x(&self) -> ObservableTerm {
        let mut t = self.clone();
        t.factors.push(Factor::X);
        t
    }

    /// `coefficient · X` on qubit `ancilla` of an `ancilla + 1` qubit
    /// register: the Hadamard-test numerator observable.
    pub fn ancilla_x(ancilla: usize, coefficient: f64) -> ObservableTerm {
        let mut factors = vec![Factor::I; ancilla + 1];
        factors[ancilla] = Factor::X;
        ObservableTerm {
            coefficient,
            factors,
            axis_shifts: Vec::new(),
            label: "numerator".into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TermWire {
    label: String,
    coefficient: f64,
    factors: String,
    shifts: Vec<AxisShift>,
}

impl From<ObservableTerm> for TermWire {
    fn from(t: ObservableTerm) -> Self {
        TermWire {
            factors: t.factor_string(),
            label: t.label,
            coefficient: t.coefficient,
            shifts: t.axis_shifts,
        }
    }
}

impl TryFrom<TermWire> for ObservableTerm {
    type Error = Error;

    fn try_from(w: TermWire) -> Result<Self> {
        let factors = w
            .factors
            .chars()
            .rev()
            .map(Factor::from_symbol)
            .collect::<Result<Vec<_>>>()?;
        for s in &w.shifts {
            if s.width == 0 || s.first_qubit + s.width > factors.len() {
                return invalid(format!("shift {s:?} does not fit a {}-qubit term", factors.len()));
            }
        }
        Ok(ObservableTerm {
            coefficient: w.coefficient,
            factors,
            axis_shifts: w.shifts,
            label: w.label,
        })
    }
}

/// `A = constant_offset · I + Σ terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonOperator {
    pub n_qubits: usize,
    pub boundary: BoundaryCondition,
    pub constant_offset: f64,
    pub terms: Vec<ObservableTerm>,
}

impl PoissonOperator {
    pub fn measured_term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms_labelled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ObservableTerm> + 'a {
        self.terms.iter().filter(move |t| t.label == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("operator serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let op: PoissonOperator =
            serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("operator JSON: {e}")))?;
        if op.terms.iter().any(|t| t.n_qubits() != op.n_qubits) {
            return invalid("term register size does not match operator");
        }
        Ok(op)
    }

    /// Dense matrix `offset·I + Σ c·S^{-1} F S`, built from explicit Kronecker
    /// products and permutation matrices. Verification path only.
    pub fn reassemble_dense(&self) -> Result<DMatrix<f64>> {
        if self.n_qubits > DENSE_REASSEMBLY_MAX_QUBITS {
            return invalid(format!(
                "dense reassembly is limited to {DENSE_REASSEMBLY_MAX_QUBITS} qubits"
            ));
        }
        let dim = 1usize << self.n_qubits;
        let mut a = DMatrix::<f64>::identity(dim, dim) * self.constant_offset;
        for term in &self.terms {
            let mut f = DMatrix::<f64>::from_element(1, 1, 1.0);
            for factor in term.factors.iter().rev() {
                f = f.kronecker(&factor_matrix(*factor));
            }
            let s = shift_permutation_matrix(self.n_qubits, &term.axis_shifts);
            a += (s.transpose() * f * s) * term.coefficient;
        }
        Ok(a)
    }
}

fn factor_matrix(f: Factor) -> DMatrix<f64> {
    match f {
        Factor::I => DMatrix::identity(2, 2),
        Factor::X => DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        Factor::P0 => DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
    }
}

/// Permutation matrix with `S|j⟩ = |σ(j)⟩` for the composed axis shifts.
fn shift_permutation_matrix(n_qubits: usize, shifts: &[AxisShift]) -> DMatrix<f64> {
    let dim = 1usize << n_qubits;
    let mut s = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..dim {
        let mut k = j;
        for sh in shifts {
            let mask = (1usize << sh.width) - 1;
            let sub = (k >> sh.first_qubit) & mask;
            let moved = ((sub as i64 + sh.power).rem_euclid(1i64 << sh.width)) as usize;
            k = (k & !(mask << sh.first_qubit)) | (moved << sh.first_qubit);
        }
        s[(k, j)] = 1.0;
    }
    s
}

/// The `2^n × 2^n` stiffness matrix for unit elements, plus `εI`.
pub fn build_matrix(n: usize, bc: BoundaryCondition, epsilon: f64) -> Result<DMatrix<f64>> {
    if n == 0 || n > 14 {
        return invalid(format!("matrix size 2^{n} is out of range"));
    }
    let dim = 1usize << n;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    match bc {
        BoundaryCondition::Periodic => {
            // One unit element per edge of the cycle graph, including the wrap.
            for i in 0..dim {
                let j = (i + 1) % dim;
                a[(i, i)] += 1.0;
                a[(j, j)] += 1.0;
                a[(i, j)] -= 1.0;
                a[(j, i)] -= 1.0;
            }
        }
        BoundaryCondition::Dirichlet | BoundaryCondition::Neumann => {
            for i in 0..dim {
                a[(i, i)] = 2.0;
                if i + 1 < dim {
                    a[(i, i + 1)] = -1.0;
                    a[(i + 1, i)] = -1.0;
                }
            }
            if bc == BoundaryCondition::Neumann {
                a[(0, 0)] = 1.0;
                a[(dim - 1, dim - 1)] = 1.0;
            }
        }
    }
    for i in 0..dim {
        a[(i, i)] += epsilon;
    }
    Ok(a)
}

fn string_on(n: usize, low: Factor, rest: Factor) -> Vec<Factor> {
    let mut f = vec![rest; n];
    f[0] = low;
    f
}

fn whole_register_shift(n: usize, power: i64) -> Vec<AxisShift> {
    vec![AxisShift {
        first_qubit: 0,
        width: n,
        power,
    }]
}

/// Decomposes the 1D matrix into measured terms plus a constant offset.
///
/// All boundary conditions share `−⟨I…IX⟩` and its shifted copy; Dirichlet
/// adds `+⟨P…PX⟩` under one shift, Neumann adds `−⟨P…PI⟩` and `+⟨P…PX⟩`
/// under one shift. The offset is `2 + ε`.
pub fn decompose(n: usize, bc: BoundaryCondition, epsilon: f64) -> Result<PoissonOperator> {
    if n == 0 {
        return invalid("operator needs at least one qubit");
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return invalid(format!("regularization {epsilon} must be finite and non-negative"));
    }
    let pauli_x = string_on(n, Factor::X, Factor::I);
    let mut terms = vec![
        ObservableTerm {
            coefficient: -1.0,
            factors: pauli_x.clone(),
            axis_shifts: Vec::new(),
            label: "even".into(),
        },
        ObservableTerm {
            coefficient: -1.0,
            factors: pauli_x,
            axis_shifts: whole_register_shift(n, 1),
            label: "odd".into(),
        },
    ];
    let corner = ObservableTerm {
        coefficient: 1.0,
        factors: string_on(n, Factor::X, Factor::P0),
        axis_shifts: whole_register_shift(n, 1),
        label: "boundary-coupling".into(),
    };
    match bc {
        BoundaryCondition::Periodic => {}
        BoundaryCondition::Dirichlet => terms.push(corner),
        BoundaryCondition::Neumann => {
            terms.push(ObservableTerm {
                coefficient: -1.0,
                factors: string_on(n, Factor::I, Factor::P0),
                axis_shifts: whole_register_shift(n, 1),
                label: "boundary-diagonal".into(),
            });
            terms.push(corner);
        }
    }
    Ok(PoissonOperator {
        n_qubits: n,
        boundary: bc,
        constant_offset: 2.0 + epsilon,
        terms,
    })
}

/// `d`-dimensional finite-difference operator `Σ_k I⊗…⊗A⊗…⊗I` over
/// `d · n_per_axis` qubits; axis `k` occupies qubits `k·n .. (k+1)·n`.
/// Regularization is added once to the whole operator.
pub fn build_fdm_kron(
    n_per_axis: usize,
    d: usize,
    bc: BoundaryCondition,
    epsilon: f64,
) -> Result<PoissonOperator> {
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    let one_d = decompose(n_per_axis, bc, 0.0)?;
    let n = n_per_axis * d;
    let mut terms = Vec::with_capacity(d * one_d.terms.len());
    for axis in 0..d {
        let first = axis * n_per_axis;
        for t in &one_d.terms {
            let mut factors = vec![Factor::I; n];
            factors[first..first + n_per_axis].copy_from_slice(&t.factors);
            terms.push(ObservableTerm {
                coefficient: t.coefficient,
                factors,
                axis_shifts: t
                    .axis_shifts
                    .iter()
                    .map(|s| AxisShift {
                        first_qubit: s.first_qubit + first,
                        ..*s
                    })
                    .collect(),
                label: if d == 1 {
                    t.label.clone()
                } else {
                    format!("axis{axis}:{}", t.label)
                },
            });
        }
    }
    Ok(PoissonOperator {
        n_qubits: n,
        boundary: bc,
        constant_offset: one_d.constant_offset * d as f64 + epsilon,
        terms,
    })
}

/// Structured 2D mesh of `2^{n_x} × 2^{n_y}` nodes; node `i = i_x + i_y·N_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh2D {
    pub n_x: usize,
    pub n_y: usize,
}

impl Mesh2D {
    pub fn new(n_x: usize, n_y: usize) -> Result<Self> {
        if n_x == 0 || n_y == 0 {
            return invalid("each mesh axis needs at least one qubit");
        }
        Ok(Self { n_x, n_y })
    }

    pub fn nodes_x(&self) -> usize {
        1 << self.n_x
    }

    pub fn nodes_y(&self) -> usize {
        1 << self.n_y
    }

    pub fn n_qubits(&self) -> usize {
        self.n_x + self.n_y
    }
}

/// Stiffness matrix of one unit bilinear quadrilateral, local node order
/// `(0,0), (1,0), (0,1), (1,1)`.
pub fn element_stiffness_2d() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            4.0, -1.0, -1.0, -2.0, //
            -1.0, 4.0, -2.0, -1.0, //
            -1.0, -2.0, 4.0, -1.0, //
            -2.0, -1.0, -1.0, 4.0,
        ],
    ) / 6.0
}

/// 2D bilinear FEM operator with periodic wrap in both axes, written as the
/// tessellation-`T0` operator and its three shifted copies. The x register is
/// qubits `0..n_x`, the y register follows.
pub fn build_fem_2d(mesh: Mesh2D, bc: BoundaryCondition, epsilon: f64) -> Result<PoissonOperator> {
    if bc != BoundaryCondition::Periodic {
        return Err(Error::Unsupported(format!(
            "2D FEM decomposition is only available for periodic boundaries, not {bc}"
        )));
    }
    let n = mesh.n_qubits();
    let x_low = 0;
    let y_low = mesh.n_x;
    let with_x = |qs: &[usize]| {
        let mut f = vec![Factor::I; n];
        for &q in qs {
            f[q] = Factor::X;
        }
        f
    };
    let t0 = [
        (-1.0 / 6.0, with_x(&[x_low]), "x"),
        (-1.0 / 6.0, with_x(&[y_low]), "y"),
        (-2.0 / 6.0, with_x(&[x_low, y_low]), "xy"),
    ];
    let mut terms = Vec::with_capacity(12);
    for (tess, (px, py)) in [(0i64, 0i64), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        let mut shifts = Vec::new();
        if px != 0 {
            shifts.push(AxisShift {
                first_qubit: 0,
                width: mesh.n_x,
                power: px,
            });
        }
        if py != 0 {
            shifts.push(AxisShift {
                first_qubit: mesh.n_x,
                width: mesh.n_y,
                power: py,
            });
        }
        for (c, f, tag) in &t0 {
            terms.push(ObservableTerm {
                coefficient: *c,
                factors: f.clone(),
                axis_shifts: shifts.clone(),
                label: format!("T{tess}:{tag}"),
            });
        }
    }
    Ok(PoissonOperator {
        n_qubits: n,
        boundary: bc,
        constant_offset: 4.0 * (4.0 / 6.0) + epsilon,
        terms,
    })
}

/// Element-by-element assembly of the periodic 2D bilinear stiffness matrix.
pub fn assemble_fem_2d(mesh: Mesh2D) -> DMatrix<f64> {
    let (nx, ny) = (mesh.nodes_x(), mesh.nodes_y());
    let ke = element_stiffness_2d();
    let mut a = DMatrix::<f64>::zeros(nx * ny, nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let node = |dx: usize, dy: usize| (ix + dx) % nx + ((iy + dy) % ny) * nx;
            let local = [node(0, 0), node(1, 0), node(0, 1), node(1, 1)];
            for (r, &gr) in local.iter().enumerate() {
                for (c, &gc) in local.iter().enumerate() {
                    a[(gr, gc)] += ke[(r, c)];
                }
            }
        }
    }
    a
}
