//! Experiment drivers behind the command-line harness. Each experiment turns
//! an [`ExperimentConfig`] into CSV rows with a fixed header, optional plot
//! data, and summary notes for the run manifest.

use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ansatz::AnsatzCircuit;
use crate::classical;
use crate::cost::{baseline_cost, cost_of_state, Problem};
use crate::error::{invalid, Error, Result};
use crate::gradient::{grad_cost, grad_numerator, grad_terms};
use crate::operators::{assemble_fem_2d, build_fem_2d, build_matrix, decompose, BoundaryCondition, Mesh2D};
use crate::optimizer::{
    classical_reference, initial_theta, run_trials, MeanStd, OptimizationConfig, Terminal, TrialSummary,
};
use crate::resources::count_cost_circuits;
use crate::sampling::{derive_seed, sample_cost, sample_gradient, BaselineSampler};
use crate::source::SourceUnitary;

/// Largest register for experiments backed by a dense matrix.
pub const DENSE_ORACLE_MAX_QUBITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Solve,
    SolutionField,
    TraceDistanceVsN,
    CircuitCountVsN,
    IterationsVsN,
    ShotErrorVsS,
    GradSimilarityVsS,
    BarrenPlateau,
    Fem2dVerify,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Solve,
        Experiment::SolutionField,
        Experiment::TraceDistanceVsN,
        Experiment::CircuitCountVsN,
        Experiment::IterationsVsN,
        Experiment::ShotErrorVsS,
        Experiment::GradSimilarityVsS,
        Experiment::BarrenPlateau,
        Experiment::Fem2dVerify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::SolutionField => "solution-field",
            Experiment::TraceDistanceVsN => "trace-distance-vs-n",
            Experiment::CircuitCountVsN => "circuit-count-vs-n",
            Experiment::IterationsVsN => "iterations-vs-n",
            Experiment::ShotErrorVsS => "shot-error-vs-s",
            Experiment::GradSimilarityVsS => "grad-similarity-vs-s",
            Experiment::BarrenPlateau => "barren-plateau",
            Experiment::Fem2dVerify => "fem2d-verify",
        }
    }

    pub fn csv_header(self) -> &'static str {
        match self {
            Experiment::Solve => {
                "n,trial,seed,status,iterations,energy,r_opt,trace_distance,relative_error,circuit_executions"
            }
            Experiment::SolutionField => "n,trial,node,value,classical",
            Experiment::TraceDistanceVsN => "n,trial,seed,status,iterations,trace_distance,energy,circuit_executions",
            Experiment::CircuitCountVsN => "n,bc,circuits_per_cost,static_count,gradient_circuits",
            Experiment::IterationsVsN => "n,trial,seed,status,iterations,trace_distance",
            Experiment::ShotErrorVsS => "method,n,shots,repeats,unstable,exact,mse,std",
            Experiment::GradSimilarityVsS => "n,shots,repeats,mean_one_minus_cosine,std_one_minus_cosine",
            Experiment::BarrenPlateau => "n,trial,seed,grad_cost,grad_even,grad_odd,grad_numerator",
            Experiment::Fem2dVerify => "n_x,n_y,nodes,terms,max_abs_diff,exact",
        }
    }

    fn uses_dense_oracle(self) -> bool {
        !matches!(self, Experiment::CircuitCountVsN | Experiment::GradSimilarityVsS | Experiment::BarrenPlateau)
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment '{s}'")))
    }
}

/// Cost function whose shot error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Proposed,
    /// Cosine-similarity cost `⟨ψ|A(I − |f⟩⟨f|)A|ψ⟩`, dense-matrix backed.
    Baseline,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "baseline" => Ok(Method::Baseline),
            _ => invalid(format!("unknown method '{s}' (expected proposed or baseline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalKind {
    GradNorm,
    TraceDistance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub bc: BoundaryCondition,
    pub n_min: usize,
    pub n_max: usize,
    pub layers: usize,
    pub trials: usize,
    /// Shot counts run from `shots_min` to `shots_max` in factors of two.
    pub shots_min: u64,
    pub shots_max: u64,
    pub repeats: usize,
    pub seed: u64,
    /// `None` selects the boundary condition's default.
    pub epsilon: Option<f64>,
    pub method: Method,
    pub terminal: TerminalKind,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_qubits: usize,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = Self {
            experiment,
            bc: BoundaryCondition::Dirichlet,
            n_min: 3,
            n_max: 3,
            layers: 5,
            trials: 10,
            shots_min: 64,
            shots_max: 16384,
            repeats: 10,
            seed: 1,
            epsilon: None,
            method: Method::Proposed,
            terminal: TerminalKind::GradNorm,
            tolerance: 1e-6,
            max_iterations: 1000,
            max_qubits: 10,
        };
        match experiment {
            Experiment::Solve | Experiment::GradSimilarityVsS => {}
            Experiment::SolutionField => (c.n_min, c.n_max) = (5, 5),
            Experiment::TraceDistanceVsN => (c.n_min, c.n_max) = (2, 5),
            Experiment::CircuitCountVsN => (c.n_min, c.n_max) = (2, 10),
            Experiment::IterationsVsN => {
                (c.n_min, c.n_max) = (2, 5);
                c.terminal = TerminalKind::TraceDistance;
                c.tolerance = 0.1;
            }
            Experiment::ShotErrorVsS => (c.n_min, c.n_max) = (2, 4),
            Experiment::BarrenPlateau => (c.n_min, c.n_max) = (2, 8),
            Experiment::Fem2dVerify => {
                (c.n_min, c.n_max) = (1, 2);
                c.bc = BoundaryCondition::Periodic;
            }
        }
        c
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| self.bc.default_epsilon())
    }

    pub fn n_values(&self) -> std::ops::RangeInclusive<usize> {
        self.n_min..=self.n_max
    }

    pub fn shot_values(&self) -> Vec<u64> {
        std::iter::successors(Some(self.shots_min), |s| s.checked_mul(2))
            .take_while(|&s| s <= self.shots_max)
            .collect()
    }

    /// Sets one option from its textual form. Ranges are written `a..b`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "bc" => self.bc = value.parse()?,
            "n" => (self.n_min, self.n_max) = parse_range(value)?,
            "layers" => self.layers = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "shots" => (self.shots_min, self.shots_max) = parse_range(value)?,
            "repeats" => self.repeats = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "epsilon" => self.epsilon = Some(parse_num(key, value)?),
            "method" => self.method = value.parse()?,
            "terminal" => {
                self.terminal = match value {
                    "grad" => TerminalKind::GradNorm,
                    "trace" => TerminalKind::TraceDistance,
                    _ => return invalid(format!("unknown terminal '{value}' (expected grad or trace)")),
                }
            }
            "tolerance" => self.tolerance = parse_num(key, value)?,
            "max_iterations" => self.max_iterations = parse_num(key, value)?,
            "max_qubits" => self.max_qubits = parse_num(key, value)?,
            other => return invalid(format!("unknown option '{other}'")),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_key_values(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 || self.n_min > self.n_max {
            return invalid(format!("qubit range {}..{} is empty", self.n_min, self.n_max));
        }
        let cap = if self.experiment.uses_dense_oracle() {
            self.max_qubits.min(DENSE_ORACLE_MAX_QUBITS)
        } else {
            self.max_qubits
        };
        // Fem2dVerify's n is per axis.
        let widest = if self.experiment == Experiment::Fem2dVerify { 2 * self.n_max } else { self.n_max };
        if widest > cap {
            return invalid(format!("{} qubits exceeds the cap of {cap} for {}", widest, self.experiment));
        }
        if self.trials == 0 || self.repeats == 0 {
            return invalid("trials and repeats must be positive");
        }
        if self.shots_min == 0 || self.shots_min > self.shots_max {
            return invalid(format!("shot range {}..{} is empty", self.shots_min, self.shots_max));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return invalid("tolerance must be positive");
        }
        let eps = self.epsilon();
        if !(eps >= 0.0) || !eps.is_finite() {
            return invalid("epsilon must be finite and non-negative");
        }
        if self.experiment == Experiment::Fem2dVerify && self.bc != BoundaryCondition::Periodic {
            return Err(Error::Unsupported("the 2D FEM decomposition needs periodic boundaries".into()));
        }
        Ok(())
    }

    /// The full configuration as `key = value` lines.
    pub fn manifest(&self) -> String {
        let terminal = match self.terminal {
            TerminalKind::GradNorm => "grad",
            TerminalKind::TraceDistance => "trace",
        };
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "bc = {}", self.bc);
        let _ = writeln!(s, "n = {}..{}", self.n_min, self.n_max);
        let _ = writeln!(s, "layers = {}", self.layers);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "shots = {}..{}", self.shots_min, self.shots_max);
        let _ = writeln!(s, "repeats = {}", self.repeats);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "epsilon = {}", self.epsilon());
        let _ = writeln!(s, "method = {}", self.method.as_str());
        let _ = writeln!(s, "terminal = {terminal}");
        let _ = writeln!(s, "tolerance = {}", self.tolerance);
        let _ = writeln!(s, "max_iterations = {}", self.max_iterations);
        let _ = writeln!(s, "max_qubits = {}", self.max_qubits);
        let _ = writeln!(s, "init_range = 0..4pi");
        s
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value '{value}' for {key}")))
}

/// `"5"` or `"2..8"` (inclusive).
pub fn parse_range<T: FromStr + Copy>(s: &str) -> Result<(T, T)> {
    let (a, b) = s.split_once("..").unwrap_or((s, s));
    Ok((parse_num("range", a.trim())?, parse_num("range", b.trim())?))
}

/// Flat `key = value` lines; `#` starts a comment line.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return invalid(format!("line {}: expected key = value", i + 1));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Least-squares slope of `log10 y` against `log10 x`. `None` with fewer than
/// two points or any non-positive value.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.log10()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.log10()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Whitespace-separated plot columns, one block per curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub columns: &'static str,
    pub blocks: Vec<(String, Vec<[f64; 3]>)>,
}

impl PlotData {
    fn single(name: &str, columns: &'static str, label: String, rows: Vec<[f64; 3]>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            blocks: vec![(label, rows)],
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("# {}\n", self.columns);
        for (i, (label, rows)) in self.blocks.iter().enumerate() {
            if i > 0 {
                s.push_str("\n\n");
            }
            let _ = writeln!(s, "# {label}");
            for r in rows {
                let _ = writeln!(s, "{} {} {}", r[0], r[1], r[2]);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub header: &'static str,
    pub rows: Vec<String>,
    pub plots: Vec<PlotData>,
    /// `key = value` summary lines appended to the manifest.
    pub notes: Vec<String>,
}

impl ExperimentOutput {
    fn new(experiment: Experiment) -> Self {
        Self {
            header: experiment.csv_header(),
            rows: Vec::new(),
            plots: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

/// Writes `results.csv`, `manifest.txt` and one `fig_<name>.dat` per plot.
pub fn write_artifacts(dir: &Path, config: &ExperimentConfig, output: &ExperimentOutput) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = dir.join("results.csv");
    fs::write(&csv, output.csv())?;
    written.push(csv);
    let mut manifest = config.manifest();
    for note in &output.notes {
        manifest.push_str(note);
        manifest.push('\n');
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest)?;
    written.push(path);
    for plot in &output.plots {
        let path = dir.join(format!("fig_{}.dat", plot.name));
        fs::write(&path, plot.render())?;
        written.push(path);
    }
    Ok(written)
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        Experiment::Solve => solve(config),
        Experiment::SolutionField => solution_field(config),
        Experiment::TraceDistanceVsN => trace_distance_vs_n(config),
        Experiment::CircuitCountVsN => circuit_count_vs_n(config),
        Experiment::IterationsVsN => iterations_vs_n(config),
        Experiment::ShotErrorVsS => shot_error_vs_s(config),
        Experiment::GradSimilarityVsS => grad_similarity_vs_s(config),
        Experiment::BarrenPlateau => barren_plateau(config),
        Experiment::Fem2dVerify => fem2d_verify(config),
    }
}

fn problem(config: &ExperimentConfig, n: usize) -> Result<Problem> {
    Problem::new(
        decompose(n, config.bc, config.epsilon())?,
        AnsatzCircuit::new(n, config.layers)?,
        SourceUnitary::StepFunction,
    )
}

/// Per-register seed, so that changing the qubit range leaves the other
/// registers' streams untouched.
fn seed_for(config: &ExperimentConfig, n: usize) -> u64 {
    derive_seed(config.seed, n as u64)
}

fn optimize(config: &ExperimentConfig, n: usize) -> Result<(Problem, classical::ClassicalSolution, TrialSummary)> {
    let p = problem(config, n)?;
    let reference = classical_reference(&p)?;
    let opt = OptimizationConfig {
        max_iterations: config.max_iterations,
        terminal: match config.terminal {
            TerminalKind::GradNorm => Terminal::GradNorm(config.tolerance),
            TerminalKind::TraceDistance => Terminal::TraceDistance(config.tolerance),
        },
        n_trials: config.trials,
        seed: seed_for(config, n),
        ..Default::default()
    };
    let summary = run_trials(&p, &opt, Some(&reference))?;
    if let Some((k, e)) = summary.failures.first() {
        return Err(Error::Solver(format!("n = {n}, trial {k}: {e}")));
    }
    Ok((p, reference, summary))
}

fn status_name(s: crate::optimizer::BfgsStatus) -> &'static str {
    match s {
        crate::optimizer::BfgsStatus::Converged => "converged",
        crate::optimizer::BfgsStatus::MaxIterations => "max-iterations",
        crate::optimizer::BfgsStatus::LineSearchFailed => "line-search-failed",
    }
}

fn oracle_note(config: &ExperimentConfig) -> String {
    format!("oracle_assisted = {}", config.terminal == TerminalKind::TraceDistance)
}

fn solve(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    out.notes.push(oracle_note(config));
    for n in config.n_values() {
        let (p, reference, summary) = optimize(config, n)?;
        for t in &summary.traces {
            let psi = p.ansatz.prepare(&t.final_theta)?;
            let rel = classical::relative_error(t.final_report.r_opt, &psi, &reference.u)?;
            out.rows.push(format!(
                "{n},{},{},{},{},{},{},{},{},{}",
                t.trial,
                t.seed,
                status_name(t.status),
                t.iterations_used,
                t.final_report.energy,
                t.final_report.r_opt,
                t.final_trace_distance.unwrap_or(f64::NAN),
                rel,
                t.circuit_executions
            ));
        }
        let bound = -0.5 * reference.u.iter().zip(p.f.real_parts()).map(|(u, f)| u * f).sum::<f64>();
        out.notes.push(format!("n{n}_energy_lower_bound = {bound}"));
        out.notes.push(format!("n{n}_classical_norm = {}", reference.norm));
        if let Some(best) = summary.best() {
            out.notes.push(format!("n{n}_best_trial = {}", best.trial));
        }
    }
    Ok(out)
}

fn solution_field(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    out.notes.push(oracle_note(config));
    let mut blocks = Vec::new();
    for n in config.n_values() {
        let (p, reference, summary) = optimize(config, n)?;
        let mut fields = Vec::new();
        for t in &summary.traces {
            let psi = p.ansatz.prepare(&t.final_theta)?;
            let values: Vec<f64> = psi.real_parts().iter().map(|v| t.final_report.r_opt * v).collect();
            for (node, (v, u)) in values.iter().zip(&reference.u).enumerate() {
                out.rows.push(format!("{n},{},{node},{v},{u}", t.trial));
            }
            fields.push(values);
        }
        let rows: Vec<[f64; 3]> = (0..reference.u.len())
            .map(|node| {
                let s = MeanStd::of(&fields.iter().map(|f| f[node]).collect::<Vec<_>>());
                [node as f64, s.mean, s.std]
            })
            .collect();
        blocks.push((format!("n={n} trials"), rows));
        let classical_rows = reference.u.iter().enumerate().map(|(i, u)| [i as f64, *u, 0.0]).collect();
        blocks.push((format!("n={n} classical"), classical_rows));
    }
    out.plots.push(PlotData {
        name: "solution_field".into(),
        columns: "node value std",
        blocks,
    });
    Ok(out)
}

fn trace_distance_vs_n(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    out.notes.push(oracle_note(config));
    let mut rows = Vec::new();
    for n in config.n_values() {
        let (_, _, summary) = optimize(config, n)?;
        for t in &summary.traces {
            out.rows.push(format!(
                "{n},{},{},{},{},{},{},{}",
                t.trial,
                t.seed,
                status_name(t.status),
                t.iterations_used,
                t.final_trace_distance.unwrap_or(f64::NAN),
                t.final_report.energy,
                t.circuit_executions
            ));
        }
        rows.push([n as f64, summary.trace_distance.mean, summary.trace_distance.std]);
    }
    out.plots.push(PlotData::single("trace_distance", "n mean std", format!("bc={}", config.bc), rows));
    Ok(out)
}

fn circuit_count_vs_n(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    let mut rows = Vec::new();
    for n in config.n_values() {
        let p = problem(config, n)?;
        let theta = initial_theta(p.ansatz.parameter_count(), (0.0, 4.0 * std::f64::consts::PI), seed_for(config, n));
        let counted = count_executions(&p, &theta, seed_for(config, n))?;
        let stat = count_cost_circuits(config.bc);
        let grad = p.ansatz.parameter_count() * stat;
        out.rows.push(format!("{n},{},{counted},{stat},{grad}", config.bc));
        rows.push([n as f64, counted as f64, 0.0]);
    }
    out.plots.push(PlotData::single("circuit_count", "n circuits 0", format!("bc={}", config.bc), rows));
    Ok(out)
}

/// Circuits executed by one shot-sampled cost evaluation at `theta`.
pub fn count_executions(p: &Problem, theta: &[f64], seed: u64) -> Result<usize> {
    Ok(sample_cost(&p.operator, &p.ansatz, theta, &p.f, 4096, seed)?.circuit_executions)
}

fn iterations_vs_n(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    out.notes.push(oracle_note(config));
    let mut rows = Vec::new();
    for n in config.n_values() {
        let (_, _, summary) = optimize(config, n)?;
        for t in &summary.traces {
            out.rows.push(format!(
                "{n},{},{},{},{},{}",
                t.trial,
                t.seed,
                status_name(t.status),
                t.iterations_used,
                t.final_trace_distance.unwrap_or(f64::NAN)
            ));
        }
        rows.push([n as f64, summary.iterations.mean, summary.iterations.std]);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    if let Some(slope) = loglog_slope(&xs, &ys) {
        out.notes.push(format!("loglog_slope_iterations = {slope}"));
    }
    out.plots.push(PlotData::single(
        "iterations",
        "n mean_iterations std",
        format!("tolerance={}", config.tolerance),
        rows,
    ));
    Ok(out)
}

/// Squared errors of repeated shot estimates at one `(n, S)`, and the number
/// of repeats whose sampled denominator was not positive.
pub fn shot_squared_errors(
    config: &ExperimentConfig,
    n: usize,
    shots: u64,
    theta: &[f64],
) -> Result<(f64, Vec<f64>, usize)> {
    let p = problem(config, n)?;
    let psi = p.ansatz.prepare(theta)?;
    let base = derive_seed(seed_for(config, n), shots);
    let (exact, estimates): (f64, Vec<Result<f64>>) = match config.method {
        Method::Proposed => {
            let exact = cost_of_state(&p.operator, &psi, &p.f)?.energy;
            let est = (0..config.repeats)
                .into_par_iter()
                .map(|r| {
                    sample_cost(&p.operator, &p.ansatz, theta, &p.f, shots, derive_seed(base, r as u64))
                        .map(|s| s.report.energy)
                })
                .collect();
            (exact, est)
        }
        Method::Baseline => {
            let a = build_matrix(n, config.bc, config.epsilon())?;
            let exact = baseline_cost(&a, &psi, &p.f)?.cost;
            let sampler = BaselineSampler::new(&a)?;
            let est = (0..config.repeats)
                .into_par_iter()
                .map(|r| sampler.sample_cost(&psi, &p.f, shots, derive_seed(base, r as u64)).map(|b| b.cost))
                .collect();
            (exact, est)
        }
    };
    let mut errors = Vec::new();
    let mut unstable = 0;
    for e in estimates {
        match e {
            Ok(v) => errors.push((v - exact).powi(2)),
            Err(Error::UnstableEstimate { .. }) => unstable += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((exact, errors, unstable))
}

/// The fixed random parameters used by the shot experiments for `n`.
pub fn fixed_theta(config: &ExperimentConfig, n: usize) -> Vec<f64> {
    let count = n * (config.layers + 1);
    initial_theta(count, (0.0, 4.0 * std::f64::consts::PI), derive_seed(seed_for(config, n), u64::MAX))
}

fn shot_error_vs_s(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    let mut blocks = Vec::new();
    for n in config.n_values() {
        let theta = fixed_theta(config, n);
        let mut rows = Vec::new();
        for s in config.shot_values() {
            let (exact, errors, unstable) = shot_squared_errors(config, n, s, &theta)?;
            let stats = MeanStd::of(&errors);
            out.rows.push(format!(
                "{},{n},{s},{},{unstable},{exact},{},{}",
                config.method.as_str(),
                config.repeats,
                stats.mean,
                stats.std
            ));
            rows.push([s as f64, stats.mean, stats.std]);
        }
        let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        if let Some(slope) = loglog_slope(&xs, &ys) {
            out.notes.push(format!("n{n}_loglog_slope_mse = {slope}"));
        }
        blocks.push((format!("n={n} method={}", config.method.as_str()), rows));
    }
    out.plots.push(PlotData {
        name: "shot_error".into(),
        columns: "shots mse std",
        blocks,
    });
    Ok(out)
}

/// `1 − cos∠(ĝ, g)` for each repeat of the sampled gradient at one `(n, S)`.
pub fn gradient_dissimilarities(config: &ExperimentConfig, n: usize, shots: u64, theta: &[f64]) -> Result<Vec<f64>> {
    let p = problem(config, n)?;
    let exact = grad_cost(&p.operator, &p.ansatz, theta, &p.f)?;
    let base = derive_seed(seed_for(config, n), shots);
    let mut out = Vec::with_capacity(config.repeats);
    for r in 0..config.repeats {
        let (_, g) = sample_gradient(&p.operator, &p.ansatz, theta, &p.f, shots, derive_seed(base, r as u64))?;
        let dot: f64 = g.grad.iter().zip(&exact.grad).map(|(a, b)| a * b).sum();
        let cos = dot / (g.norm * exact.norm);
        if !cos.is_finite() {
            return Err(Error::NonFinite(format!("cosine similarity at n = {n}, S = {shots}")));
        }
        out.push(1.0 - cos);
    }
    Ok(out)
}

fn grad_similarity_vs_s(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    let mut blocks = Vec::new();
    for n in config.n_values() {
        let theta = fixed_theta(config, n);
        let mut rows = Vec::new();
        for s in config.shot_values() {
            let stats = MeanStd::of(&gradient_dissimilarities(config, n, s, &theta)?);
            out.rows.push(format!("{n},{s},{},{},{}", config.repeats, stats.mean, stats.std));
            rows.push([s as f64, stats.mean, stats.std]);
        }
        let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        if let Some(slope) = loglog_slope(&xs, &ys) {
            out.notes.push(format!("n{n}_loglog_slope_one_minus_cosine = {slope}"));
        }
        blocks.push((format!("n={n}"), rows));
    }
    out.plots.push(PlotData {
        name: "grad_similarity".into(),
        columns: "shots mean_one_minus_cosine std",
        blocks,
    });
    Ok(out)
}

/// Gradient norms at one random `θ`: total cost, the even pairing, the odd
/// pairing, and the Hadamard-test numerator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientNorms {
    pub cost: f64,
    pub even: f64,
    pub odd: f64,
    pub numerator: f64,
}

pub fn gradient_norms(config: &ExperimentConfig, n: usize, seed: u64) -> Result<GradientNorms> {
    let p = problem(config, n)?;
    let theta = initial_theta(p.ansatz.parameter_count(), (0.0, 4.0 * std::f64::consts::PI), seed);
    let labelled = |label: &str| p.operator.terms_labelled(label).cloned().collect::<Vec<_>>();
    let norm = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(GradientNorms {
        cost: grad_cost(&p.operator, &p.ansatz, &theta, &p.f)?.norm,
        even: norm(grad_terms(&labelled("even"), &p.ansatz, &theta)?),
        odd: norm(grad_terms(&labelled("odd"), &p.ansatz, &theta)?),
        numerator: norm(grad_numerator(&p.ansatz, &theta, &p.f)?),
    })
}

fn barren_plateau(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    let mut series: [Vec<[f64; 3]>; 4] = Default::default();
    for n in config.n_values() {
        let seeds: Vec<u64> = (0..config.trials).map(|k| derive_seed(seed_for(config, n), k as u64)).collect();
        let norms: Vec<GradientNorms> = seeds.iter().map(|&s| gradient_norms(config, n, s)).collect::<Result<_>>()?;
        for (k, (g, s)) in norms.iter().zip(&seeds).enumerate() {
            out.rows.push(format!("{n},{k},{s},{},{},{},{}", g.cost, g.even, g.odd, g.numerator));
        }
        let pick: [fn(&GradientNorms) -> f64; 4] = [|g| g.cost, |g| g.even, |g| g.odd, |g| g.numerator];
        for (dst, f) in series.iter_mut().zip(pick) {
            let m = MeanStd::of(&norms.iter().map(f).collect::<Vec<_>>());
            dst.push([n as f64, m.mean, m.std]);
        }
    }
    for (name, rows) in ["cost", "even", "odd", "numerator"].into_iter().zip(series) {
        out.plots.push(PlotData::single(
            &format!("barren_{name}"),
            "n mean_grad_norm std",
            format!("layers={}", config.layers),
            rows,
        ));
    }
    Ok(out)
}

fn fem2d_verify(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(config.experiment);
    let eps = config.epsilon();
    for n_x in config.n_values() {
        for n_y in config.n_values() {
            let mesh = Mesh2D::new(n_x, n_y)?;
            let op = build_fem_2d(mesh, config.bc, eps)?;
            let got = op.reassemble_dense()?;
            let nodes = mesh.nodes_x() * mesh.nodes_y();
            let want = assemble_fem_2d(mesh) + nalgebra::DMatrix::<f64>::identity(nodes, nodes) * eps;
            let diff = (&got - &want).amax();
            out.rows.push(format!(
                "{n_x},{n_y},{nodes},{},{diff},{}",
                op.measured_term_count(),
                got == want
            ));
        }
    }
    Ok(out)
}
