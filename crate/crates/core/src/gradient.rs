//! Analytic gradient of the energy.
//!
//! For `R_Y` parameters, `∂ψ/∂θ_i = ½ ψ_{,i}` with `ψ_{,i} = U(θ + π e_i)|0⟩`.
//! The numerator derivative is `½ Re⟨ψ_{,i}|f⟩` (Hadamard test on
//! `|f, ψ_{,i}⟩`), and the denominator derivative is `Re⟨ψ_{,i}|A|ψ⟩`,
//! measured as `X⊗A` on `(|0⟩|ψ_{,i}⟩ + |1⟩|ψ⟩)/√2`.

use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use crate::ansatz::AnsatzCircuit;
use crate::cost::{denominator, expectation, numerator_hadamard, CostReport};
use crate::error::{invalid, Result};
use crate::operators::{ObservableTerm, PoissonOperator};
use crate::state::{prepare_superposition_state, Statevector};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub grad: Vec<f64>,
    pub norm: f64,
}

impl GradientReport {
    pub fn new(grad: Vec<f64>) -> Self {
        let norm = l2(&grad);
        Self { grad, norm }
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// `U(θ_1, …, θ_i + π, …)|0⟩`.
pub fn shifted_state(circuit: &AnsatzCircuit, theta: &[f64], i: usize) -> Result<Statevector> {
    offset_state(circuit, theta, i, PI)
}

fn offset_state(circuit: &AnsatzCircuit, theta: &[f64], i: usize, delta: f64) -> Result<Statevector> {
    circuit.check_theta(theta)?;
    if i >= theta.len() {
        return invalid(format!("parameter index {i} out of range for {} parameters", theta.len()));
    }
    let mut shifted = theta.to_vec();
    shifted[i] += delta;
    circuit.prepare(&shifted)
}

/// `Re⟨a|A|b⟩` term by term through the ancilla-extended observables. The
/// identity part is skipped: for `a = ψ_{,i}`, `b = ψ` it vanishes because
/// `Re⟨∂ψ|ψ⟩ = ½ ∂⟨ψ|ψ⟩ = 0`.
fn cross_expectation(terms: &[ObservableTerm], a: &Statevector, b: &Statevector) -> Result<f64> {
    let sup = prepare_superposition_state(a, b)?;
    let mut total = 0.0;
    for t in terms {
        total += expectation(&t.with_ancilla_x(), &sup)?;
    }
    Ok(total)
}

/// `∂ num / ∂θ_i = ½ ⟨f, ψ_{,i}| X⊗I |f, ψ_{,i}⟩`.
pub fn grad_numerator(circuit: &AnsatzCircuit, theta: &[f64], f: &Statevector) -> Result<Vec<f64>> {
    (0..circuit.parameter_count())
        .into_par_iter()
        .map(|i| Ok(0.5 * numerator_hadamard(&shifted_state(circuit, theta, i)?, f)?))
        .collect()
}

/// `∂ ⟨ψ|A|ψ⟩ / ∂θ_i = ⟨ψ_{,i}, ψ| X⊗A |ψ_{,i}, ψ⟩`.
pub fn grad_denominator(op: &PoissonOperator, circuit: &AnsatzCircuit, theta: &[f64]) -> Result<Vec<f64>> {
    grad_terms(&op.terms, circuit, theta)
}

/// Gradient of `Σ ⟨terms⟩` alone, e.g. one pairing of the operator.
pub fn grad_terms(terms: &[ObservableTerm], circuit: &AnsatzCircuit, theta: &[f64]) -> Result<Vec<f64>> {
    let psi = circuit.prepare(theta)?;
    (0..circuit.parameter_count())
        .into_par_iter()
        .map(|i| cross_expectation(terms, &shifted_state(circuit, theta, i)?, &psi))
        .collect()
}

/// Quotient-rule assembly of `∂E_h/∂θ_i` from the cost at `θ`, the Hadamard
/// numerators on `|f, ψ_{,i}⟩`, and the denominator derivatives.
pub fn assemble_cost_gradient(at: &CostReport, shifted_numerators: &[f64], grad_den: &[f64]) -> GradientReport {
    let num = at.numerator;
    let den = at.denominator;
    let grad = shifted_numerators
        .iter()
        .zip(grad_den)
        .map(|(ni, di)| -0.5 * num * ni / den + 0.5 * num * num * di / (den * den))
        .collect();
    GradientReport::new(grad)
}

/// Analytic gradient of `E_h(θ)` together with the cost at `θ`.
pub fn cost_and_gradient(
    op: &PoissonOperator,
    circuit: &AnsatzCircuit,
    theta: &[f64],
    f: &Statevector,
) -> Result<(CostReport, GradientReport)> {
    let psi = circuit.prepare(theta)?;
    let at = CostReport::from_parts(numerator_hadamard(&psi, f)?, denominator(op, &psi)?)?;
    let parts: Vec<(f64, f64)> = (0..circuit.parameter_count())
        .into_par_iter()
        .map(|i| {
            let psi_i = shifted_state(circuit, theta, i)?;
            Ok((numerator_hadamard(&psi_i, f)?, cross_expectation(&op.terms, &psi_i, &psi)?))
        })
        .collect::<Result<_>>()?;
    let (nums, dens): (Vec<f64>, Vec<f64>) = parts.into_iter().unzip();
    Ok((at, assemble_cost_gradient(&at, &nums, &dens)))
}

pub fn grad_cost(op: &PoissonOperator, circuit: &AnsatzCircuit, theta: &[f64], f: &Statevector) -> Result<GradientReport> {
    Ok(cost_and_gradient(op, circuit, theta, f)?.1)
}

/// Derivatives of the numerator and denominator by the `±π/2` shift rule.
///
/// The numerator is linear in the rotated state, so its shift rule carries
/// `1/(2√2)`; the denominator is quadratic and takes the usual `½`.
pub fn parameter_shift_parts(
    op: &PoissonOperator,
    circuit: &AnsatzCircuit,
    theta: &[f64],
    f: &Statevector,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let parts: Vec<(f64, f64)> = (0..circuit.parameter_count())
        .into_par_iter()
        .map(|i| {
            let plus = offset_state(circuit, theta, i, FRAC_PI_2)?;
            let minus = offset_state(circuit, theta, i, -FRAC_PI_2)?;
            let dn = (numerator_hadamard(&plus, f)? - numerator_hadamard(&minus, f)?) / (2.0 * SQRT_2);
            let dd = 0.5 * (denominator(op, &plus)? - denominator(op, &minus)?);
            Ok((dn, dd))
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().unzip())
}

/// Cost gradient through the `±π/2` shift rule.
pub fn grad_cost_parameter_shift(
    op: &PoissonOperator,
    circuit: &AnsatzCircuit,
    theta: &[f64],
    f: &Statevector,
) -> Result<GradientReport> {
    let psi = circuit.prepare(theta)?;
    let at = CostReport::from_parts(numerator_hadamard(&psi, f)?, denominator(op, &psi)?)?;
    let (dn, dd) = parameter_shift_parts(op, circuit, theta, f)?;
    // ∂num = ½ Re⟨ψ_{,i}|f⟩, so the assembly wants 2·∂num.
    let nums: Vec<f64> = dn.iter().map(|d| 2.0 * d).collect();
    Ok(assemble_cost_gradient(&at, &nums, &dd))
}

/// Step used by the finite-difference checks.
pub const FD_STEP: f64 = 1e-5;

/// Central differences `(f(θ + h e_i) − f(θ − h e_i)) / 2h`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let mut p = theta.to_vec();
            let mut m = theta.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i − b_i| / (1 + |b_i|)`, the finite-difference acceptance metric
/// with `b` the reference.
pub fn max_scaled_difference(a: &[f64], reference: &[f64]) -> f64 {
    a.iter()
        .zip(reference)
        .map(|(x, r)| (x - r).abs() / (1.0 + r.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::cost;
    use crate::operators::{build_matrix, decompose, BoundaryCondition};
    use crate::source::{prepare_source_state, SourceUnitary};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64]) -> Vec<f64> {
        central_difference(f, theta, FD_STEP)
    }

    fn random_theta(rng: &mut ChaCha8Rng, c: &AnsatzCircuit) -> Vec<f64> {
        (0..c.parameter_count()).map(|_| rng.random_range(0.0..4.0 * PI)).collect()
    }

    #[test]
    fn shifted_state_single_rotation() {
        let c = AnsatzCircuit::new(1, 0).unwrap();
        let s = shifted_state(&c, &[0.0], 0).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, 1.0, epsilon = 1e-15);
        assert!(shifted_state(&c, &[0.0], 1).is_err());
    }

    #[test]
    fn double_shift_negates_the_state() {
        let c = AnsatzCircuit::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = random_theta(&mut rng, &c);
        let mut twice = theta.clone();
        twice[4] += 2.0 * PI;
        let a = c.prepare(&theta).unwrap();
        let b = c.prepare(&twice).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert_abs_diff_eq!(x.re, -y.re, epsilon = 1e-12);
        }
    }

    #[test]
    fn shifted_state_is_twice_the_derivative() {
        let c = AnsatzCircuit::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = random_theta(&mut rng, &c);
        for i in 0..c.parameter_count() {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[i] += FD_STEP;
            m[i] -= FD_STEP;
            let (sp, sm) = (c.prepare(&p).unwrap(), c.prepare(&m).unwrap());
            let half = shifted_state(&c, &theta, i).unwrap();
            for k in 0..8 {
                let fd = (sp.amplitudes()[k].re - sm.amplitudes()[k].re) / (2.0 * FD_STEP);
                assert!((fd - 0.5 * half.amplitudes()[k].re).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn numerator_gradient_closed_form() {
        // n = 1, f = |0⟩: num = cos(θ/2), ∂num = −½ sin(θ/2).
        let c = AnsatzCircuit::new(1, 0).unwrap();
        let f = Statevector::zero(1).unwrap();
        for &t in &[0.3, 1.7, 4.0] {
            let g = grad_numerator(&c, &[t], &f).unwrap();
            assert_abs_diff_eq!(g[0], -0.5 * (t / 2.0).sin(), epsilon = 1e-14);
        }
    }

    #[test]
    fn numerator_gradient_matches_finite_differences() {
        let c = AnsatzCircuit::new(3, 3).unwrap();
        let f = prepare_source_state(3, &SourceUnitary::StepFunction).unwrap();
        let theta = vec![0.0; c.parameter_count()];
        let g = grad_numerator(&c, &theta, &f).unwrap();
        let fd = central(|t| numerator_hadamard(&c.prepare(t).unwrap(), &f).unwrap(), &theta);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn denominator_gradient_closed_form() {
        // ψ = (cos θ/2, sin θ/2): ⟨A_D⟩ = 2 − sin θ, derivative −cos θ.
        let c = AnsatzCircuit::new(1, 0).unwrap();
        let op = decompose(1, BoundaryCondition::Dirichlet, 0.0).unwrap();
        for &t in &[0.2, 1.1, 3.9] {
            let psi = c.prepare(&[t]).unwrap();
            assert_abs_diff_eq!(denominator(&op, &psi).unwrap(), 2.0 - t.sin(), epsilon = 1e-14);
            let g = grad_denominator(&op, &c, &[t]).unwrap();
            assert_abs_diff_eq!(g[0], -t.cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn denominator_gradient_neumann_fd() {
        let c = AnsatzCircuit::new(3, 5).unwrap();
        let op = decompose(3, BoundaryCondition::Neumann, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta = random_theta(&mut rng, &c);
        let g = grad_denominator(&op, &c, &theta).unwrap();
        let fd = central(|t| denominator(&op, &c.prepare(t).unwrap()).unwrap(), &theta);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn dense_route_agrees_with_term_route() {
        let n = 3;
        let c = AnsatzCircuit::new(n, 2).unwrap();
        let op = decompose(n, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let a = build_matrix(n, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta = random_theta(&mut rng, &c);
        let psi = nalgebra::DVector::from_vec(c.prepare(&theta).unwrap().real_parts());
        let g = grad_denominator(&op, &c, &theta).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let psi_i = nalgebra::DVector::from_vec(shifted_state(&c, &theta, i).unwrap().real_parts());
            assert_abs_diff_eq!(*gi, psi_i.dot(&(&a * &psi)), epsilon = 1e-12);
        }
    }

    #[test]
    fn orthogonal_state_has_zero_gradient() {
        // ψ(0) = |00⟩ and f = |11⟩: both quotient-rule terms carry num = 0.
        let c = AnsatzCircuit::new(2, 1).unwrap();
        let op = decompose(2, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let f = Statevector::basis(2, 3).unwrap();
        let theta = vec![0.0; 4];
        let g = grad_cost(&op, &c, &theta, &f).unwrap();
        assert_eq!(g.norm, 0.0);
    }

    #[test]
    fn cost_gradient_matches_finite_differences_and_shift_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for bc in BoundaryCondition::ALL {
            let n = 4;
            let c = AnsatzCircuit::new(n, 5).unwrap();
            let op = decompose(n, bc, bc.default_epsilon()).unwrap();
            let f = prepare_source_state(n, &SourceUnitary::StepFunction).unwrap();
            for _ in 0..3 {
                let theta = random_theta(&mut rng, &c);
                let g = grad_cost(&op, &c, &theta, &f).unwrap();
                let fd = central(|t| cost(&op, &c, t, &f).unwrap().energy, &theta);
                let ps = grad_cost_parameter_shift(&op, &c, &theta, &f).unwrap();
                for ((a, b), s) in g.grad.iter().zip(&fd).zip(&ps.grad) {
                    assert!((a - b).abs() / (1.0 + b.abs()) < 1e-5);
                    assert_abs_diff_eq!(*a, *s, epsilon = 1e-12);
                }
                assert_abs_diff_eq!(g.norm, l2(&g.grad));
            }
        }
    }

    #[test]
    fn small_step_along_negative_gradient_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut failures = 0;
        for trial in 0..100 {
            let n = 2 + trial % 4;
            let c = AnsatzCircuit::new(n, 2).unwrap();
            let op = decompose(n, BoundaryCondition::Dirichlet, 0.0).unwrap();
            let f = prepare_source_state(n, &SourceUnitary::StepFunction).unwrap();
            let theta = random_theta(&mut rng, &c);
            let (at, g) = cost_and_gradient(&op, &c, &theta, &f).unwrap();
            if g.norm <= 1e-6 {
                continue;
            }
            let step: Vec<f64> = theta.iter().zip(&g.grad).map(|(t, d)| t - 1e-3 * d).collect();
            if cost(&op, &c, &step, &f).unwrap().energy >= at.energy {
                failures += 1;
            }
        }
        assert_eq!(failures, 0);
    }
}
