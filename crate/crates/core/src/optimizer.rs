//! BFGS minimization of the energy over `θ` and the multi-trial protocol.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::classical::{self, ClassicalSolution};
use crate::cost::{CostReport, Problem};
use crate::error::{invalid, Error, Result};
use crate::gradient::{cost_and_gradient, l2};
use crate::operators::{build_matrix, decompose, DENSE_REASSEMBLY_MAX_QUBITS};
use crate::resources::count_cost_circuits;
use crate::sampling::{derive_seed, sample_cost, sample_gradient};

/// Something BFGS can minimize.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> Result<f64>;
    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfgsStatus {
    Converged,
    MaxIterations,
    /// No step satisfied the Armijo condition.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub status: BfgsStatus,
}

/// BFGS with backtracking Armijo line search and inverse-Hessian updates.
/// Backtracking steps use quadratic interpolation, and an accepted step is
/// refined once at the interpolated minimizer if that is lower.
///
/// Starts from `H₀ = I`. Updates with non-positive curvature are skipped, and
/// the approximation resets to `I` if it stops producing descent directions.
/// `on_iterate(k, x, f, g)` runs at every accepted point and returns `true` to
/// stop.
pub fn bfgs<O, S>(objective: &mut O, x0: &[f64], opts: &BfgsOptions, mut on_iterate: S) -> Result<BfgsOutcome>
where
    O: Objective,
    S: FnMut(usize, &[f64], f64, &[f64]) -> Result<bool>,
{
    let dim = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut f = objective.value(x.as_slice())?;
    let mut g = DVector::from_vec(objective.gradient(x.as_slice())?);
    check_finite(f, g.as_slice())?;
    let mut h = DMatrix::<f64>::identity(dim, dim);

    for k in 0..=opts.max_iterations {
        if on_iterate(k, x.as_slice(), f, g.as_slice())? {
            return Ok(outcome(x, f, g, k, BfgsStatus::Converged));
        }
        if k == opts.max_iterations {
            break;
        }
        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if slope >= 0.0 {
            h = DMatrix::identity(dim, dim);
            p = -g.clone();
            slope = g.dot(&p);
        }
        // Near a minimum the decrease drops below the round-off of `f`; allow
        // that much slack so the full quasi-Newton step is still taken.
        let slack = 4.0 * f64::EPSILON * f.abs();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial = &x + &p * alpha;
            match objective.value(trial.as_slice()) {
                Ok(ft) if ft.is_finite() && ft <= f + opts.armijo_c1 * alpha * slope + slack => {
                    accepted = Some((trial, ft));
                    // One refinement at the fitted minimizer when it differs
                    // noticeably from the accepted step.
                    let fit = parabola_minimizer(f, slope, alpha, ft);
                    if fit > 0.1 * alpha && fit < 10.0 * alpha && (fit / alpha - 1.0).abs() > 0.05 {
                        let refined = &x + &p * fit;
                        if let Ok(fr) = objective.value(refined.as_slice()) {
                            if fr.is_finite() && fr < ft {
                                accepted = Some((refined, fr));
                            }
                        }
                    }
                    break;
                }
                Ok(ft) if ft.is_finite() => {
                    let fit = parabola_minimizer(f, slope, alpha, ft);
                    alpha = fit.clamp(0.1 * alpha, opts.backtrack_factor * alpha);
                }
                Ok(_) | Err(Error::UnstableEstimate { .. }) => alpha *= opts.backtrack_factor,
                Err(e) => return Err(e),
            }
        }
        let Some((x_new, f_new)) = accepted else {
            return Ok(outcome(x, f, g, k, BfgsStatus::LineSearchFailed));
        };
        let g_new = DVector::from_vec(objective.gradient(x_new.as_slice())?);
        check_finite(f_new, g_new.as_slice())?;

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded.
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
    Ok(outcome(x, f, g, opts.max_iterations, BfgsStatus::MaxIterations))
}

/// Minimizer of the parabola through `f(0)`, `f'(0)` and `f(α)`; infinite
/// when that parabola is not convex.
fn parabola_minimizer(f0: f64, slope: f64, alpha: f64, fa: f64) -> f64 {
    let curvature = fa - f0 - slope * alpha;
    if curvature > 0.0 {
        -slope * alpha * alpha / (2.0 * curvature)
    } else {
        f64::INFINITY
    }
}

fn outcome(x: DVector<f64>, value: f64, g: DVector<f64>, iterations: usize, status: BfgsStatus) -> BfgsOutcome {
    BfgsOutcome {
        x: x.as_slice().to_vec(),
        value,
        gradient: g.as_slice().to_vec(),
        iterations,
        status,
    }
}

fn check_finite(f: f64, g: &[f64]) -> Result<()> {
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("cost {f} or gradient is not finite")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal {
    /// Stop when the gradient norm drops below the threshold.
    GradNorm(f64),
    /// Stop when the trace distance to the classical solution drops below
    /// the tolerance. Needs a classical reference (oracle-assisted).
    TraceDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Statevector,
    /// Every circuit estimated from this many shots.
    Sampled { shots: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationConfig {
    pub max_iterations: usize,
    pub terminal: Terminal,
    pub n_trials: usize,
    pub init_range: (f64, f64),
    pub seed: u64,
    pub mode: Mode,
    pub record_theta: bool,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            terminal: Terminal::GradNorm(1e-6),
            n_trials: 10,
            init_range: (0.0, 4.0 * PI),
            seed: 0,
            mode: Mode::Statevector,
            record_theta: false,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        let threshold = match self.terminal {
            Terminal::GradNorm(t) | Terminal::TraceDistance(t) => t,
        };
        if !(threshold > 0.0) {
            return invalid("terminal threshold must be positive");
        }
        if !(self.init_range.0 < self.init_range.1) {
            return invalid("initial range must be a non-empty interval");
        }
        if let Mode::Sampled { shots: 0 } = self.mode {
            return invalid("sampled mode needs at least one shot");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub gradient_norm: f64,
    pub trace_distance: Option<f64>,
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub trial: usize,
    pub seed: u64,
    pub initial_theta: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub final_theta: Vec<f64>,
    /// Exact statevector cost at the final parameters.
    pub final_report: CostReport,
    pub final_trace_distance: Option<f64>,
    pub iterations_used: usize,
    pub circuit_executions: usize,
    pub status: BfgsStatus,
    pub oracle_assisted: bool,
}

struct Evaluator<'a> {
    problem: &'a Problem,
    mode: Mode,
    seed: u64,
    evaluations: u64,
    executions: usize,
    t_c: usize,
}

impl Objective for Evaluator<'_> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        match self.mode {
            Mode::Statevector => {
                self.executions += self.t_c;
                Ok(self.problem.cost(x)?.energy)
            }
            Mode::Sampled { shots } => {
                let p = self.problem;
                let s = sample_cost(&p.operator, &p.ansatz, x, &p.f, shots, derive_seed(self.seed, self.evaluations))?;
                self.executions += s.circuit_executions;
                Ok(s.report.energy)
            }
        }
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluations += 1;
        let p = self.problem;
        match self.mode {
            Mode::Statevector => {
                self.executions += self.t_c * x.len();
                Ok(cost_and_gradient(&p.operator, &p.ansatz, x, &p.f)?.1.grad)
            }
            Mode::Sampled { shots } => {
                let (at, g) =
                    sample_gradient(&p.operator, &p.ansatz, x, &p.f, shots, derive_seed(self.seed, self.evaluations))?;
                self.executions += at.circuit_executions;
                Ok(g.grad)
            }
        }
    }
}

/// Dense classical solution for the problem's operator and source.
pub fn classical_reference(problem: &Problem) -> Result<ClassicalSolution> {
    let op = &problem.operator;
    let matrix = if op.n_qubits <= DENSE_REASSEMBLY_MAX_QUBITS {
        op.reassemble_dense()?
    } else {
        let epsilon = op.constant_offset - 2.0;
        if decompose(op.n_qubits, op.boundary, epsilon)? != *op {
            return invalid("no dense reference for this operator at this size");
        }
        build_matrix(op.n_qubits, op.boundary, epsilon)?
    };
    classical::solve(&matrix, &problem.f.real_parts())
}

/// Uniform initial parameters for `seed`.
pub fn initial_theta(count: usize, range: (f64, f64), seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(range.0..range.1)).collect()
}

/// One optimization run from `theta0`.
pub fn minimize_from(
    problem: &Problem,
    config: &OptimizationConfig,
    theta0: &[f64],
    reference: Option<&ClassicalSolution>,
    seed: u64,
) -> Result<OptimizationTrace> {
    config.validate()?;
    problem.ansatz.check_theta(theta0)?;
    if matches!(config.terminal, Terminal::TraceDistance(_)) && reference.is_none() {
        return invalid("trace-distance terminal needs a classical reference");
    }
    let mut eval = Evaluator {
        problem,
        mode: config.mode,
        seed,
        evaluations: 0,
        executions: 0,
        t_c: count_cost_circuits(problem.operator.boundary),
    };
    let mut records = Vec::new();
    let opts = BfgsOptions {
        max_iterations: config.max_iterations,
        ..Default::default()
    };
    let result = bfgs(&mut eval, theta0, &opts, |k, x, f, g| {
        let norm = l2(g);
        let trace_distance = match reference {
            Some(r) => Some(classical::trace_distance(&problem.ansatz.prepare(x)?, &r.u_normalized)?),
            None => None,
        };
        records.push(IterationRecord {
            iteration: k,
            cost: f,
            gradient_norm: norm,
            trace_distance,
            theta: config.record_theta.then(|| x.to_vec()),
        });
        Ok(match config.terminal {
            Terminal::GradNorm(t) => norm < t,
            Terminal::TraceDistance(t) => trace_distance.is_some_and(|d| d < t),
        })
    })?;
    let final_report = problem.cost(&result.x)?;
    let final_trace_distance = match reference {
        Some(r) => Some(classical::trace_distance(&problem.ansatz.prepare(&result.x)?, &r.u_normalized)?),
        None => None,
    };
    Ok(OptimizationTrace {
        trial: 0,
        seed,
        initial_theta: theta0.to_vec(),
        records,
        final_theta: result.x,
        final_report,
        final_trace_distance,
        iterations_used: result.iterations,
        circuit_executions: eval.executions,
        status: result.status,
        oracle_assisted: matches!(config.terminal, Terminal::TraceDistance(_)),
    })
}

/// One trial with parameters drawn from `config.init_range` using `config.seed`.
pub fn minimize(
    problem: &Problem,
    config: &OptimizationConfig,
    reference: Option<&ClassicalSolution>,
) -> Result<OptimizationTrace> {
    let theta0 = initial_theta(problem.ansatz.parameter_count(), config.init_range, config.seed);
    minimize_from(problem, config, &theta0, reference, config.seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; NaN for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone)]
pub struct TrialSummary {
    pub traces: Vec<OptimizationTrace>,
    /// Trials aborted with an error, by trial index.
    pub failures: Vec<(usize, Error)>,
    pub iterations: MeanStd,
    pub trace_distance: MeanStd,
    pub energy: MeanStd,
}

impl TrialSummary {
    pub fn best(&self) -> Option<&OptimizationTrace> {
        self.traces
            .iter()
            .min_by(|a, b| a.final_report.energy.total_cmp(&b.final_report.energy))
    }
}

/// `config.n_trials` independent runs; trial `k` uses seed
/// `derive_seed(config.seed, k)`. Trials run in parallel and come back in
/// trial order.
pub fn run_trials(problem: &Problem, config: &OptimizationConfig, reference: Option<&ClassicalSolution>) -> Result<TrialSummary> {
    config.validate()?;
    let results: Vec<(usize, Result<OptimizationTrace>)> = (0..config.n_trials)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(config.seed, k as u64);
            let theta0 = initial_theta(problem.ansatz.parameter_count(), config.init_range, seed);
            let trace = minimize_from(problem, config, &theta0, reference, seed).map(|mut t| {
                t.trial = k;
                t
            });
            (k, trace)
        })
        .collect();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => failures.push((k, e)),
        }
    }
    let iterations: Vec<f64> = traces.iter().map(|t| t.iterations_used as f64).collect();
    let distances: Vec<f64> = traces.iter().filter_map(|t| t.final_trace_distance).collect();
    let energies: Vec<f64> = traces.iter().map(|t| t.final_report.energy).collect();
    Ok(TrialSummary {
        iterations: MeanStd::of(&iterations),
        trace_distance: MeanStd::of(&distances),
        energy: MeanStd::of(&energies),
        traces,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::AnsatzCircuit;
    use crate::operators::BoundaryCondition;
    use crate::source::SourceUnitary;

    struct Quadratic {
        q: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl Objective for Quadratic {
        fn value(&mut self, x: &[f64]) -> Result<f64> {
            let x = DVector::from_column_slice(x);
            Ok(x.dot(&(&self.q * &x)) - self.b.dot(&x))
        }
        fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
            let x = DVector::from_column_slice(x);
            Ok((&self.q * &x * 2.0 - &self.b).as_slice().to_vec())
        }
    }

    #[test]
    fn bfgs_solves_spd_quadratics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for dim in 1..=10 {
            for _ in 0..5 {
                let m = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
                let q = &m * m.transpose() + DMatrix::identity(dim, dim) * 0.5;
                let b = DVector::<f64>::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
                let mut obj = Quadratic { q, b };
                let x0 = vec![0.0; dim];
                let out = bfgs(&mut obj, &x0, &BfgsOptions::default(), |_, _, _, g| Ok(l2(g) < 1e-8)).unwrap();
                assert_eq!(out.status, BfgsStatus::Converged, "dim {dim}: {out:?}");
                assert!(out.iterations <= 3 * dim, "dim {dim}: {} iterations", out.iterations);
            }
        }
    }

    fn problem(n: usize, bc: BoundaryCondition, layers: usize) -> Problem {
        Problem::new(
            decompose(n, bc, bc.default_epsilon()).unwrap(),
            AnsatzCircuit::new(n, layers).unwrap(),
            SourceUnitary::StepFunction,
        )
        .unwrap()
    }

    #[test]
    fn two_qubit_dirichlet_reaches_the_minimum() {
        let p = problem(2, BoundaryCondition::Dirichlet, 5);
        let reference = classical_reference(&p).unwrap();
        let bound = -0.5 * reference.u.iter().zip(p.f.real_parts()).map(|(u, f)| u * f).sum::<f64>();
        let config = OptimizationConfig {
            seed: 3,
            ..Default::default()
        };
        let t = minimize(&p, &config, Some(&reference)).unwrap();
        assert_eq!(t.status, BfgsStatus::Converged);
        assert!((t.final_report.energy - bound).abs() < 1e-6);
        assert!(t.records.iter().all(|r| r.cost >= bound - 1e-9));
        assert!(t.iterations_used <= config.max_iterations);
        assert!(!t.oracle_assisted);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        // f = |11⟩ is orthogonal to ψ(0) = |00⟩ and the gradient vanishes there.
        let mut p = problem(2, BoundaryCondition::Dirichlet, 1);
        p.f = crate::state::Statevector::basis(2, 3).unwrap();
        let t = minimize_from(&p, &OptimizationConfig::default(), &[0.0; 4], None, 0).unwrap();
        assert_eq!(t.iterations_used, 0);
        assert_eq!(t.status, BfgsStatus::Converged);
    }

    #[test]
    fn trials_are_deterministic() {
        let p = problem(3, BoundaryCondition::Neumann, 2);
        let config = OptimizationConfig {
            n_trials: 3,
            max_iterations: 30,
            record_theta: true,
            seed: 17,
            ..Default::default()
        };
        let a = run_trials(&p, &config, None).unwrap();
        let b = run_trials(&p, &config, None).unwrap();
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.traces.len(), 3);
        assert!(a.iterations.std.is_finite());
    }

    #[test]
    fn config_validation() {
        let p = problem(2, BoundaryCondition::Dirichlet, 1);
        let bad = OptimizationConfig {
            terminal: Terminal::GradNorm(0.0),
            ..Default::default()
        };
        assert!(minimize(&p, &bad, None).is_err());
        let needs_reference = OptimizationConfig {
            terminal: Terminal::TraceDistance(0.1),
            ..Default::default()
        };
        assert!(minimize(&p, &needs_reference, None).is_err());
    }

    #[test]
    fn sampled_mode_runs() {
        let p = problem(2, BoundaryCondition::Dirichlet, 1);
        let config = OptimizationConfig {
            max_iterations: 5,
            mode: Mode::Sampled { shots: 2000 },
            seed: 2,
            ..Default::default()
        };
        let t = minimize(&p, &config, None).unwrap();
        assert!(t.circuit_executions >= 4);
        assert!(t.final_report.energy.is_finite());
    }
}
