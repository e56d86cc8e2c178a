//! Shot-based estimation of the measured terms and the first-order
//! mean-squared-error model for the plug-in cost estimator.
//!
//! Each term is measured by shifting the state, rotating every `X` qubit with
//! a Hadamard, and sampling bitstrings from the resulting distribution. A
//! single shot evaluates to `c · Π(±1 on X qubits) · Π([bit = 0] on P0
//! qubits)`. Terms draw from independent streams derived from
//! `(seed, term index)`, so their estimates are uncorrelated.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, SQRT_2};

use crate::ansatz::AnsatzCircuit;
use crate::cost::{shifted_copy, BaselineCostReport, CostReport, SINGULAR_DENOMINATOR};
use crate::error::{invalid, Error, Result};
use crate::gradient::{assemble_cost_gradient, GradientReport};
use crate::operators::{ObservableTerm, PoissonOperator};
use crate::state::{prepare_superposition_state, Gate, Statevector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotEstimate {
    pub mean: f64,
    /// Unbiased single-shot variance (zero for a single shot).
    pub sample_variance: f64,
    pub shots: u64,
    pub seed: u64,
}

/// SplitMix64 finalizer over `(seed, tag)`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples `shots` single-shot values of `term` on `state`.
pub fn sample_term(term: &ObservableTerm, state: &Statevector, shots: u64, seed: u64) -> Result<ShotEstimate> {
    if shots < 1 {
        return invalid("at least one shot is required");
    }
    if term.n_qubits() != state.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: term.n_qubits(),
            actual: state.n_qubits(),
        });
    }
    let mut phi = shifted_copy(term, state);
    let (x_mask, p0_mask) = term.masks();
    for q in 0..term.n_qubits() {
        if x_mask & (1 << q) != 0 {
            phi.apply(&Gate::H(q))?;
        }
    }
    let value = |j: usize| {
        if j & p0_mask != 0 {
            0.0
        } else if (j & x_mask).count_ones() % 2 == 1 {
            -term.coefficient
        } else {
            term.coefficient
        }
    };
    Ok(sample_outcomes(phi.amplitudes().iter().map(|a| a.norm_sqr()), value, shots, seed))
}

/// Draws `shots` outcome indices from `probabilities` (normalized on the fly)
/// and averages `value` over them.
fn sample_outcomes(
    probabilities: impl Iterator<Item = f64>,
    value: impl Fn(usize) -> f64,
    shots: u64,
    seed: u64,
) -> ShotEstimate {
    let mut cumulative = Vec::new();
    let mut acc = 0.0;
    for p in probabilities {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..shots {
        let u: f64 = rng.random::<f64>() * total;
        let j = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        let v = value(j);
        sum += v;
        sum_sq += v * v;
    }
    let s = shots as f64;
    let mean = sum / s;
    let sample_variance = if shots > 1 {
        ((sum_sq - s * mean * mean) / (s - 1.0)).max(0.0)
    } else {
        0.0
    };
    ShotEstimate {
        mean,
        sample_variance,
        shots,
        seed,
    }
}

/// A real symmetric observable measured in its eigenbasis.
#[derive(Debug, Clone)]
pub struct DenseObservable {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl DenseObservable {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() < 2 || !matrix.nrows().is_power_of_two() {
            return invalid("observable must be square with a power-of-two dimension");
        }
        if (matrix - matrix.transpose()).amax() > 1e-12 * matrix.amax().max(1.0) {
            return invalid("observable must be symmetric");
        }
        let eig = SymmetricEigen::new(matrix.clone());
        Ok(Self {
            eigenvalues: eig.eigenvalues.as_slice().to_vec(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn sample(&self, state: &Statevector, shots: u64, seed: u64) -> Result<ShotEstimate> {
        if shots < 1 {
            return invalid("at least one shot is required");
        }
        if state.dim() != self.eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: self.eigenvalues.len(),
                actual: state.dim(),
            });
        }
        let probabilities = self.eigenvectors.column_iter().map(|v| {
            v.iter()
                .zip(state.amplitudes())
                .map(|(x, a)| a * *x)
                .sum::<num_complex::Complex64>()
                .norm_sqr()
        });
        Ok(sample_outcomes(probabilities, |k| self.eigenvalues[k], shots, seed))
    }
}

/// Dense-backed observables of the cosine-similarity baseline: `A²` on `ψ`
/// and `X⊗A` on `(|0⟩|f⟩ + |1⟩|ψ⟩)/√2`, whose mean is `Re⟨f|A|ψ⟩`.
#[derive(Debug, Clone)]
pub struct BaselineSampler {
    a_squared: DenseObservable,
    x_a: DenseObservable,
}

impl BaselineSampler {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        Ok(Self {
            a_squared: DenseObservable::new(&(a * a))?,
            x_a: DenseObservable::new(&x.kronecker(a))?,
        })
    }

    /// Plug-in estimate `⟨A²⟩ − ⟨X⊗A⟩²` with `shots` on each circuit.
    pub fn sample_cost(&self, psi: &Statevector, f: &Statevector, shots: u64, seed: u64) -> Result<BaselineCostReport> {
        let a2 = self.a_squared.sample(psi, shots, derive_seed(seed, 0))?.mean;
        let sup = prepare_superposition_state(f, psi)?;
        let overlap = self.x_a.sample(&sup, shots, derive_seed(seed, 1))?.mean;
        if a2 <= 0.0 {
            return Err(Error::UnstableEstimate { denominator: a2 });
        }
        Ok(BaselineCostReport {
            cost: a2 - overlap * overlap,
            r: 1.0 / a2.sqrt(),
        })
    }
}

/// Shots per measured circuit: the numerator first, then each operator term.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotPlan {
    pub numerator: u64,
    pub terms: Vec<u64>,
}

impl ShotPlan {
    pub fn uniform(shots: u64, op: &PoissonOperator) -> Self {
        Self {
            numerator: shots,
            terms: vec![shots; op.terms.len()],
        }
    }

    fn validate(&self, op: &PoissonOperator) -> Result<()> {
        if self.terms.len() != op.terms.len() {
            return invalid(format!("shot plan has {} term entries, operator has {}", self.terms.len(), op.terms.len()));
        }
        if self.numerator == 0 || self.terms.contains(&0) {
            return invalid("at least one shot per circuit is required");
        }
        Ok(())
    }
}

/// A shot-estimated cost evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCost {
    pub report: CostReport,
    /// Numerator estimate followed by one estimate per operator term.
    pub estimates: Vec<ShotEstimate>,
    /// Distinct circuits executed for this evaluation.
    pub circuit_executions: usize,
}

/// Plug-in estimate of the cost at the prepared state `psi`.
pub fn sample_cost_of_state(
    op: &PoissonOperator,
    psi: &Statevector,
    f: &Statevector,
    plan: &ShotPlan,
    seed: u64,
) -> Result<SampledCost> {
    plan.validate(op)?;
    let sup = prepare_superposition_state(f, psi)?;
    let numerator_term = ObservableTerm::ancilla_x(psi.n_qubits(), 1.0);
    let mut estimates = Vec::with_capacity(1 + op.terms.len());
    estimates.push(sample_term(&numerator_term, &sup, plan.numerator, derive_seed(seed, 0))?);
    for (k, (t, &shots)) in op.terms.iter().zip(&plan.terms).enumerate() {
        estimates.push(sample_term(t, psi, shots, derive_seed(seed, k as u64 + 1))?);
    }
    let numerator = estimates[0].mean;
    let denominator = op.constant_offset + estimates[1..].iter().map(|e| e.mean).sum::<f64>();
    if denominator <= SINGULAR_DENOMINATOR {
        return Err(Error::UnstableEstimate { denominator });
    }
    let report = CostReport::from_parts(numerator, denominator)?;
    Ok(SampledCost {
        report,
        circuit_executions: estimates.len(),
        estimates,
    })
}

/// Shot-estimated cost with `shots` on every circuit.
pub fn sample_cost(
    op: &PoissonOperator,
    circuit: &AnsatzCircuit,
    theta: &[f64],
    f: &Statevector,
    shots: u64,
    seed: u64,
) -> Result<SampledCost> {
    let psi = circuit.prepare(theta)?;
    sample_cost_of_state(op, &psi, f, &ShotPlan::uniform(shots, op), seed)
}

/// Shot-estimated gradient through the `±π/2` shift rule, assembled with the
/// sampled numerator and denominator at `θ`. Every shifted circuit uses its
/// own derived stream.
pub fn sample_gradient(
    op: &PoissonOperator,
    circuit: &AnsatzCircuit,
    theta: &[f64],
    f: &Statevector,
    shots: u64,
    seed: u64,
) -> Result<(SampledCost, GradientReport)> {
    let at = sample_cost(op, circuit, theta, f, shots, derive_seed(seed, u64::MAX))?;
    let plan = ShotPlan::uniform(shots, op);
    let parts: Vec<(f64, f64, usize)> = (0..circuit.parameter_count())
        .into_par_iter()
        .map(|i| {
            let eval = |delta: f64, tag: u64| -> Result<(f64, f64, usize)> {
                let mut shifted = theta.to_vec();
                shifted[i] += delta;
                let psi = circuit.prepare(&shifted)?;
                let s = sample_parts(op, &psi, f, &plan, derive_seed(seed, tag))?;
                Ok(s)
            };
            let (np, dp, cp) = eval(FRAC_PI_2, 2 * i as u64)?;
            let (nm, dm, cm) = eval(-FRAC_PI_2, 2 * i as u64 + 1)?;
            // 2·∂num, matching the Hadamard numerators on |f, ψ_{,i}⟩.
            Ok(((np - nm) / SQRT_2, 0.5 * (dp - dm), cp + cm))
        })
        .collect::<Result<_>>()?;
    let executions: usize = parts.iter().map(|p| p.2).sum();
    let nums: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let dens: Vec<f64> = parts.iter().map(|p| p.1).collect();
    let grad = assemble_cost_gradient(&at.report, &nums, &dens);
    let mut at = at;
    at.circuit_executions += executions;
    Ok((at, grad))
}

/// Sampled numerator and denominator without the positivity check, used
/// inside difference quotients.
fn sample_parts(
    op: &PoissonOperator,
    psi: &Statevector,
    f: &Statevector,
    plan: &ShotPlan,
    seed: u64,
) -> Result<(f64, f64, usize)> {
    let sup = prepare_superposition_state(f, psi)?;
    let numerator_term = ObservableTerm::ancilla_x(psi.n_qubits(), 1.0);
    let num = sample_term(&numerator_term, &sup, plan.numerator, derive_seed(seed, 0))?.mean;
    let mut den = op.constant_offset;
    for (k, (t, &shots)) in op.terms.iter().zip(&plan.terms).enumerate() {
        den += sample_term(t, psi, shots, derive_seed(seed, k as u64 + 1))?.mean;
    }
    Ok((num, den, 1 + op.terms.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsePrediction {
    pub predicted_mse: f64,
}

/// First-order error model of the plug-in cost estimator:
/// `r²(σ₁²/S₁ + ¼ r² Σ_{i≥2} σ_i²/S_i)`. Index 0 of `variances` and `shots`
/// is the numerator circuit.
pub fn predict_mse(r_opt: f64, variances: &[f64], shots: &[u64]) -> Result<MsePrediction> {
    if variances.is_empty() || variances.len() != shots.len() {
        return invalid("need one shot count per variance, numerator first");
    }
    if shots.contains(&0) {
        return invalid("shot counts must be positive");
    }
    let num = variances[0] / shots[0] as f64;
    let den: f64 = variances[1..].iter().zip(&shots[1..]).map(|(v, &s)| v / s as f64).sum();
    Ok(MsePrediction {
        predicted_mse: r_opt * r_opt * (num + 0.25 * r_opt * r_opt * den),
    })
}

/// [`predict_mse`] with the sample variances of an evaluation plugged in.
pub fn predict_mse_plugin(sampled: &SampledCost) -> Result<MsePrediction> {
    let variances: Vec<f64> = sampled.estimates.iter().map(|e| e.sample_variance).collect();
    let shots: Vec<u64> = sampled.estimates.iter().map(|e| e.shots).collect();
    predict_mse(sampled.report.r_opt, &variances, &shots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{cost, expectation};
    use crate::operators::{decompose, BoundaryCondition, Factor};
    use crate::source::{prepare_source_state, SourceUnitary};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn term(factors: &str, coefficient: f64) -> ObservableTerm {
        ObservableTerm {
            coefficient,
            factors: factors
                .chars()
                .rev()
                .map(|c| match c {
                    'X' => Factor::X,
                    'P' => Factor::P0,
                    _ => Factor::I,
                })
                .collect(),
            axis_shifts: vec![],
            label: String::new(),
        }
    }

    #[test]
    fn eigenstate_gives_exact_mean() {
        let plus = Statevector::uniform(1).unwrap();
        let e = sample_term(&term("X", -0.7), &plus, 37, 1).unwrap();
        assert!((e.mean + 0.7).abs() < 1e-15);
        assert!(e.sample_variance < 1e-14);
    }

    #[test]
    fn projector_miss_is_zero() {
        let s = Statevector::basis(2, 0b10).unwrap();
        let e = sample_term(&term("PI", 1.0), &s, 100, 3).unwrap();
        assert_eq!(e.mean, 0.0);
        assert!(sample_term(&term("PI", 1.0), &s, 0, 3).is_err());
    }

    #[test]
    fn zero_mean_concentrates() {
        let s = Statevector::zero(2).unwrap();
        let shots = 10_000;
        let e = sample_term(&term("IX", 1.0), &s, shots, 42).unwrap();
        assert!(e.mean.abs() < 5.0 / (shots as f64).sqrt());
        assert!((e.sample_variance - 1.0).abs() < 1e-3);
    }

    #[test]
    fn deterministic_given_seed() {
        let op = decompose(3, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let c = AnsatzCircuit::new(3, 2).unwrap();
        let f = prepare_source_state(3, &SourceUnitary::StepFunction).unwrap();
        let theta: Vec<f64> = (0..9).map(|i| 0.37 * i as f64).collect();
        let a = sample_cost(&op, &c, &theta, &f, 500, 9).unwrap();
        let b = sample_cost(&op, &c, &theta, &f, 500, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.circuit_executions, 4);
        let c2 = sample_cost(&op, &c, &theta, &f, 500, 10).unwrap();
        assert_ne!(a.report, c2.report);
    }

    #[test]
    fn term_means_are_unbiased() {
        let c = AnsatzCircuit::new(3, 3).unwrap();
        let theta: Vec<f64> = (0..c.parameter_count()).map(|i| 1.3 * i as f64 + 0.2).collect();
        let psi = c.prepare(&theta).unwrap();
        let op = decompose(3, BoundaryCondition::Neumann, 1e-3).unwrap();
        for (k, t) in op.terms.iter().enumerate() {
            let exact = expectation(t, &psi).unwrap();
            let reps = 200;
            let shots = 1000;
            let est: Vec<ShotEstimate> = (0..reps)
                .map(|r| sample_term(t, &psi, shots, derive_seed(77, (k * 1000 + r) as u64)).unwrap())
                .collect();
            let grand = est.iter().map(|e| e.mean).sum::<f64>() / reps as f64;
            let sigma = (est.iter().map(|e| e.sample_variance).sum::<f64>() / reps as f64).sqrt();
            let bound = 4.0 * sigma / ((reps * shots as usize) as f64).sqrt();
            assert!((grand - exact).abs() < bound.max(1e-12), "term {k}: {grand} vs {exact}");
        }
    }

    #[test]
    fn large_shot_limit_approaches_exact_cost() {
        let op = decompose(2, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let c = AnsatzCircuit::new(2, 2).unwrap();
        let f = prepare_source_state(2, &SourceUnitary::StepFunction).unwrap();
        let theta = [0.3, 1.2, 2.2, 0.1, 0.5, 3.0];
        let exact = cost(&op, &c, &theta, &f).unwrap();
        let s = sample_cost(&op, &c, &theta, &f, 4_000_000, 1).unwrap();
        assert!((s.report.energy - exact.energy).abs() < 2e-3);
    }

    #[test]
    fn mse_prediction_formula() {
        assert_eq!(predict_mse(0.4, &[0.0, 0.0, 0.0], &[10, 10, 10]).unwrap().predicted_mse, 0.0);
        let one = predict_mse(0.8, &[0.5, 0.2, 0.3], &[100, 100, 100]).unwrap().predicted_mse;
        let two = predict_mse(0.8, &[0.5, 0.2, 0.3], &[200, 200, 200]).unwrap().predicted_mse;
        assert_abs_diff_eq!(two, one / 2.0, epsilon = 1e-18);
        let p = predict_mse(2.0 / 3.0, &[0.5, 0.25], &[100, 100]).unwrap().predicted_mse;
        assert_abs_diff_eq!(p, (4.0 / 9.0) * (0.005 + (1.0 / 9.0) * 0.0025), epsilon = 1e-16);
        assert!(predict_mse(1.0, &[0.1], &[0]).is_err());
    }

    #[test]
    fn sampled_gradient_tracks_exact_gradient() {
        let op = decompose(3, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let c = AnsatzCircuit::new(3, 2).unwrap();
        let f = prepare_source_state(3, &SourceUnitary::StepFunction).unwrap();
        let theta: Vec<f64> = (0..c.parameter_count()).map(|i| (i as f64 * 0.9) % (4.0 * PI)).collect();
        let exact = crate::gradient::grad_cost(&op, &c, &theta, &f).unwrap();
        let (at, g) = sample_gradient(&op, &c, &theta, &f, 1 << 20, 3).unwrap();
        assert_eq!(at.circuit_executions, 4 * (1 + 2 * c.parameter_count()));
        let cos = exact.grad.iter().zip(&g.grad).map(|(a, b)| a * b).sum::<f64>() / (exact.norm * g.norm);
        assert!(1.0 - cos < 1e-3, "1 - cos = {}", 1.0 - cos);
    }

    #[test]
    fn dense_observable_eigenstate_and_mean() {
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let obs = DenseObservable::new(&z).unwrap();
        let e = obs.sample(&Statevector::basis(1, 1).unwrap(), 50, 4).unwrap();
        assert_eq!(e.mean, -1.0);
        let plus = Statevector::uniform(1).unwrap();
        let e = obs.sample(&plus, 40_000, 4).unwrap();
        assert!(e.mean.abs() < 0.02);
        assert!(DenseObservable::new(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0])).is_err());
    }

    #[test]
    fn baseline_sampling_approaches_dense_cost() {
        use crate::cost::baseline_cost;
        use crate::operators::build_matrix;
        let a = build_matrix(3, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let c = AnsatzCircuit::new(3, 2).unwrap();
        let theta: Vec<f64> = (0..9).map(|k| 0.4 * k as f64 + 0.1).collect();
        let psi = c.prepare(&theta).unwrap();
        let f = prepare_source_state(3, &SourceUnitary::StepFunction).unwrap();
        let exact = baseline_cost(&a, &psi, &f).unwrap();
        let sampler = BaselineSampler::new(&a).unwrap();
        let est = sampler.sample_cost(&psi, &f, 400_000, 8).unwrap();
        assert!((est.cost - exact.cost).abs() < 0.05, "{} vs {}", est.cost, exact.cost);
        assert!((est.r - exact.r).abs() < 0.01);
    }
}
