mod output;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use semident::census::{census_report, CensusError, CensusOptions, DEFAULT_TRIALS, MAX_REPORT_NODES};
use semident::cycle::{cycle_fiber, CycleParams};
use semident::fiber::fiber_trace;
use semident::graph::topologically_relabeled;
use semident::params::sample_parameters;
use semident::witness::construct_witness;
use semident::{
    check_global_identifiability, invert, parse_graph, phi, Covariance, LambdaMatrix, MixedGraph, OmegaMatrix,
    Rational, RealField,
};

use output::{
    census_json, cycle_fiber_json, domain_error, fiber_json, inversion_json, matrix_json,
    read_matrix, verdict_json, witness_json, Failure,
};

#[derive(Parser)]
#[command(name = "semident", version, about = "Identifiability of linear structural equation models on mixed graphs")]
struct Cli {
    /// Arithmetic used for parameters and covariances.
    #[arg(long, value_enum, global = true, env = "SEMIDENT_BACKEND", default_value = "float")]
    backend: Backend,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the result here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Float,
    Rational,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the parametrization is injective.
    Check {
        /// Edge list or JSON graph; `-` reads standard input.
        graph: PathBuf,
    },
    /// Recover edge coefficients and error covariance from a covariance matrix.
    Invert {
        graph: PathBuf,
        /// Covariance matrix as JSON.
        #[arg(long)]
        sigma: PathBuf,
    },
    /// Two parameter points with the same covariance.
    Witness { graph: PathBuf },
    /// Describe the set of parameters mapping to a covariance matrix.
    Trace {
        graph: PathBuf,
        #[arg(long)]
        sigma: PathBuf,
        /// Known point in the fiber; requires --omega.
        #[arg(long, requires = "omega")]
        lambda: Option<PathBuf>,
        #[arg(long, requires = "lambda")]
        omega: Option<PathBuf>,
    },
    /// Second preimage of a directed cycle with independent errors.
    CycleFiber {
        /// Comma-separated coefficients of 1 -> 2, 2 -> 3, ..., m -> 1.
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        /// Comma-separated error variances.
        #[arg(long)]
        delta: String,
    },
    /// Draw parameters on a grid and report their covariance.
    Sample {
        graph: PathBuf,
        /// Values are drawn from [-scale, scale].
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Classify all acyclic mixed graphs on a few nodes.
    Census {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        simple_only: bool,
        /// Random points per injective class.
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Invert { .. } => "invert",
            Command::Witness { .. } => "witness",
            Command::Trace { .. } => "trace",
            Command::CycleFiber { .. } => "cycle-fiber",
            Command::Sample { .. } => "sample",
            Command::Census { .. } => "census",
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::Usage(format!("reading standard input: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Result<MixedGraph, Failure> {
    let parsed = parse_graph(&read_text(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(parsed.graph)
}

fn parse_list<F: RealField>(text: &str, what: &str) -> Result<Vec<F>, Failure> {
    text.split(',')
        .map(|s| {
            F::from_json(&Value::String(s.trim().to_string()))
                .ok_or_else(|| Failure::Usage(format!("--{what}: cannot read {:?} as a number", s.trim())))
        })
        .collect()
}

/// `g` relabeled topologically and the order used.
fn relabel(g: &MixedGraph) -> Result<(MixedGraph, Vec<usize>), Failure> {
    let (h, order) = topologically_relabeled(g).map_err(domain_error)?;
    Ok((h, order.order().to_vec()))
}

fn covariance<F: RealField>(g: &MixedGraph, path: &Path) -> Result<Covariance<F>, Failure> {
    let m = read_matrix::<F>(g, &read_json(path)?, path)?;
    Covariance::new(m).map_err(domain_error)
}

fn check(g: &MixedGraph) -> Result<Value, Failure> {
    Ok(verdict_json(g, &check_global_identifiability(g)))
}

fn run_invert<F: RealField>(g: &MixedGraph, sigma: &Path) -> Result<Value, Failure> {
    let sigma = covariance::<F>(g, sigma)?;
    let (h, order) = relabel(g)?;
    let sigma_h = Covariance::new(sigma.matrix().select(&order, &order)).map_err(domain_error)?;
    let inv = invert(&h, &sigma_h).map_err(|e| domain_error_in(&h, e))?;
    Ok(inversion_json(g, &h, &order, &inv))
}

fn domain_error_in(h: &MixedGraph, e: semident::InversionError) -> Failure {
    output::inversion_error(h, e)
}

fn run_witness<F: RealField>(g: &MixedGraph) -> Result<Value, Failure> {
    let w = construct_witness::<F>(g).map_err(domain_error)?;
    Ok(witness_json(g, &w))
}

fn run_trace(g: &MixedGraph, sigma: &Path, base: Option<(&Path, &Path)>) -> Result<Value, Failure> {
    let sigma = covariance::<Rational>(g, sigma)?;
    let (h, order) = relabel(g)?;
    let sigma_h = Covariance::new(sigma.matrix().select(&order, &order)).map_err(domain_error)?;
    let base = match base {
        None => None,
        Some((lp, op)) => {
            let l = read_matrix::<Rational>(g, &read_json(lp)?, lp)?.select(&order, &order);
            let o = read_matrix::<Rational>(g, &read_json(op)?, op)?.select(&order, &order);
            Some((
                LambdaMatrix::new(&h, l).map_err(domain_error)?,
                OmegaMatrix::new(&h, o).map_err(domain_error)?,
            ))
        }
    };
    let fiber = fiber_trace(&h, &sigma_h, base.as_ref().map(|(l, o)| (l, o))).map_err(|e| domain_error_in(&h, e))?;
    Ok(fiber_json(&h, &order, &fiber))
}

fn run_cycle_fiber<F: RealField>(lambda: &str, delta: &str) -> Result<Value, Failure> {
    let p = CycleParams::new(parse_list::<F>(lambda, "lambda")?, parse_list::<F>(delta, "delta")?)
        .map_err(domain_error)?;
    let fiber = cycle_fiber(&p).map_err(domain_error)?;
    Ok(cycle_fiber_json(&fiber))
}

fn run_sample<F: RealField>(g: &MixedGraph, seed: u64, scale: f64) -> Result<Value, Failure> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Failure::Usage(format!("--scale must be positive, got {scale}")));
    }
    let (lambda, omega) = sample_parameters::<F>(g, seed, scale);
    let sigma = phi(g, &lambda, &omega).map_err(domain_error)?;
    Ok(json!({
        "seed": seed,
        "lambda": matrix_json(g, lambda.matrix()),
        "omega": matrix_json(g, omega.matrix()),
        "sigma": matrix_json(g, sigma.matrix()),
    }))
}

enum Rendered {
    Json(Value),
    Text(String),
}

fn run(cli: &Cli) -> Result<Rendered, Failure> {
    let rational = cli.backend == Backend::Rational;
    let value = match &cli.command {
        Command::Check { graph } => check(&read_graph(graph)?)?,
        Command::Invert { graph, sigma } => {
            let g = read_graph(graph)?;
            if rational {
                run_invert::<Rational>(&g, sigma)?
            } else {
                run_invert::<f64>(&g, sigma)?
            }
        }
        Command::Witness { graph } => {
            let g = read_graph(graph)?;
            if rational {
                run_witness::<Rational>(&g)?
            } else {
                run_witness::<f64>(&g)?
            }
        }
        Command::Trace {
            graph,
            sigma,
            lambda,
            omega,
        } => {
            let g = read_graph(graph)?;
            let base = lambda.as_deref().zip(omega.as_deref());
            run_trace(&g, sigma, base)?
        }
        Command::CycleFiber { lambda, delta } => {
            if rational {
                run_cycle_fiber::<Rational>(lambda, delta)?
            } else {
                run_cycle_fiber::<f64>(lambda, delta)?
            }
        }
        Command::Sample { graph, scale } => {
            let g = read_graph(graph)?;
            if rational {
                run_sample::<Rational>(&g, cli.seed, *scale)?
            } else {
                run_sample::<f64>(&g, cli.seed, *scale)?
            }
        }
        Command::Census {
            n,
            simple_only,
            trials,
            jobs,
            format,
        } => {
            if *jobs == Some(0) {
                return Err(Failure::Usage("--jobs must be at least 1".into()));
            }
            let opts = CensusOptions {
                n: *n,
                simple_only: *simple_only,
                trials: *trials,
                jobs: *jobs,
            };
            let report = census_report(&opts).map_err(|e| match e {
                CensusError::NodeCount { .. } => Failure::Usage(format!("--n must lie in 1..={MAX_REPORT_NODES}")),
                e => domain_error(e),
            })?;
            match format {
                Format::Csv => return Ok(Rendered::Text(report.to_csv())),
                Format::Json => census_json(&report),
            }
        }
    };
    Ok(Rendered::Json(value))
}

fn emit(cli: &Cli, text: &str) -> io::Result<()> {
    match &cli.output {
        Some(path) => fs::write(path, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (text, code) = match run(&cli) {
        Ok(Rendered::Json(v)) => (format!("{}\n", serde_json::to_string_pretty(&v).expect("json")), 0),
        Ok(Rendered::Text(t)) => (t, 0),
        Err(Failure::Usage(msg)) => {
            let mut cmd = Cli::command();
            let usage = cmd
                .find_subcommand_mut(cli.command.name())
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            eprintln!("error: {msg}\n\n{usage}");
            return ExitCode::from(1);
        }
        Err(Failure::Domain(v)) => {
            if let Some(msg) = v["error"]["message"].as_str() {
                eprintln!("error: {msg}");
            }
            (format!("{}\n", serde_json::to_string_pretty(&v).expect("json")), 2)
        }
    };
    if let Err(e) = emit(&cli, &text) {
        eprintln!("error: writing output: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
