use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::Parser;
use vqa_poisson::experiments::{self, Experiment, ExperimentConfig};

const USAGE_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 1;

/// Runs one experiment and writes results.csv, manifest.txt and fig_*.dat.
///
/// Options are resolved as experiment defaults, then the config file, then
/// flags. Ranges are written `a..b`.
#[derive(Parser, Debug)]
#[command(name = "vqa-poisson", version)]
struct Cli {
    #[arg(value_parser = PossibleValuesParser::new(Experiment::ALL.map(Experiment::name)))]
    experiment: String,
    /// periodic, dirichlet or neumann
    #[arg(long)]
    bc: Option<String>,
    /// Qubits per register, e.g. 5 or 2..8
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Shots per circuit, e.g. 4096 or 64..16384 (factors of two)
    #[arg(long)]
    shots: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// proposed or baseline (shot-error-vs-s only)
    #[arg(long)]
    method: Option<String>,
    /// grad or trace
    #[arg(long)]
    terminal: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    max_iterations: Option<String>,
    #[arg(long)]
    max_qubits: Option<String>,
    /// Flat key = value file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("bc", &self.bc),
            ("n", &self.n),
            ("layers", &self.layers),
            ("trials", &self.trials),
            ("shots", &self.shots),
            ("repeats", &self.repeats),
            ("seed", &self.seed),
            ("epsilon", &self.epsilon),
            ("method", &self.method),
            ("terminal", &self.terminal),
            ("tolerance", &self.tolerance),
            ("max_iterations", &self.max_iterations),
            ("max_qubits", &self.max_qubits),
        ]
    }

    fn resolve(&self) -> Result<ExperimentConfig, String> {
        let experiment: Experiment = self.experiment.parse().map_err(|e| format!("{e}"))?;
        let mut config = ExperimentConfig::defaults(experiment);
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            config
                .apply_file_text(&text)
                .map_err(|e| format!("{}: {e}", path.display()))?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                config.set(key, v).map_err(|e| format!("--{}: {e}", key.replace('_', "-")))?;
            }
        }
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    let output = match experiments::run(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {} failed: {e}", config.experiment);
            return ExitCode::from(RUNTIME_ERROR);
        }
    };
    match experiments::write_artifacts(&cli.out, &config, &output) {
        Ok(paths) => {
            for note in &output.notes {
                println!("{note}");
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", cli.out.display());
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}
