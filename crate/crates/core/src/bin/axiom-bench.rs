use std::path::{Path, PathBuf};
use std::process::ExitCode;

use axiom_bench::attribution::MethodConfig;
use axiom_bench::harness::{self, RunConfig, RunResult};
use axiom_bench::micronet::Model;
use axiom_bench::scenario::load_instance;
use axiom_bench::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "axiom-bench", version, about = "Evaluate attribution methods on model-generated features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a battery from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the configuration's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Repeat the battery for one layer-selectable method across layers.
    Sweep {
        #[arg(long, default_value = "gradcam")]
        method: String,
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<String>,
        /// Defaults to the built-in battery.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Render the input and attribution heatmaps of a stored scenario.
    Render {
        /// A scenario directory or its manifest.json.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `model.axbm` two levels above the scenario directory.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Methods are taken from this configuration (default: all eight).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownLayer(_) | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(RunConfig::from_json(&text)?)
}

fn out_dir(flag: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| config.out.clone())
        .ok_or_else(|| Failure::Config("no output directory (use --out or set \"out\")".into()))
}

fn summarize(result: &RunResult, out: &Path) -> u8 {
    let r = &result.report;
    let converged = r.jobs.iter().filter(|j| j.converged).count();
    println!(
        "{} jobs, {converged} converged, {} failed in {:.1}s -> {}",
        r.jobs.len(),
        r.failed_jobs,
        result.seconds,
        out.display()
    );
    for a in &r.aggregates {
        let value = a.value.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        let layer = a.layer.as_deref().map(|l| format!("[{l}]")).unwrap_or_default();
        println!(
            "  {:<22} {:<14} {:<9} {value:>10}  (n={}, excluded={})",
            format!("{}{layer}", a.method),
            a.metric,
            a.statistic,
            a.samples,
            a.excluded
        );
    }
    if r.majority_failed() {
        eprintln!("more than half of the jobs failed");
        2
    } else {
        0
    }
}

fn execute(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run { config, out, seed, jobs } => {
            let mut config = load_config(&config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let out = out_dir(out, &config)?;
            let result = harness::run(&config, &out, jobs)?;
            Ok(summarize(&result, &out))
        }
        Command::Sweep {
            method,
            layers,
            config,
            out,
            seed,
            jobs,
        } => {
            let mut base = match config {
                Some(p) => load_config(&p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                base.seed = s;
            }
            let method: MethodConfig = serde_json::from_value(serde_json::json!({ "method": method }))
                .map_err(|e| Failure::Config(format!("unknown method: {e}")))?;
            let swept = harness::layer_sweep(&base, &method, &layers)?;
            let out = out_dir(out, &swept)?;
            let result = harness::run(&swept, &out, jobs)?;
            Ok(summarize(&result, &out))
        }
        Command::Render {
            scenario,
            out,
            model,
            config,
        } => {
            let instance = load_instance(&scenario)?;
            let model_path = match model {
                Some(p) => p,
                None => {
                    let dir = if scenario.is_dir() {
                        scenario.clone()
                    } else {
                        scenario.parent().map(Path::to_path_buf).unwrap_or_default()
                    };
                    dir.join("../../model.axbm")
                }
            };
            let model = Model::load(&model_path)?;
            let config = match config {
                Some(p) => load_config(&p)?,
                None => RunConfig::default(),
            };
            config.validate_for(&model)?;
            let methods = config.expanded_methods(&model)?;
            let index = harness::render_scenario(&model, &instance, &methods, &out)?;
            println!("{} heatmaps for {} -> {}", index.maps.len(), index.scenario_id, out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
