use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use stride_core::experiment::{
    compare_methods, emit_csv, emit_pareto_svg, sweep, write_manifest, ExperimentSpec, Method, ResultRow,
    SweepAxis,
};
use stride_core::StrideError;

const DEFAULT_OUT: &str = "stride-output";

#[derive(Parser)]
#[command(name = "stride", version, about = "Toy-scale structured feature perturbation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the experiment seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated methods to compare instead of the config's method.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Run the config once per value of one parameter.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// alpha, f_alpha, P, K, layer_set or step_gate.
        #[arg(long)]
        axis: String,
        /// JSON array of values, e.g. '[0.5, 1, 2]' or '[[0], [0, 1]]'.
        #[arg(long)]
        values: String,
    },
    /// Compare all methods on the built-in collapse demonstration.
    Demo,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<StrideError> for Failure {
    fn from(e: StrideError) -> Self {
        match e {
            StrideError::InvalidArgument(msg) => Failure::Config(msg),
            StrideError::Io(e) => Failure::Io(e.to_string()),
        }
    }
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn parse_methods(names: &[String], fallback: Method) -> Result<Vec<Method>, Failure> {
    if names.is_empty() {
        return Ok(vec![fallback]);
    }
    names.iter().map(|n| n.trim().parse().map_err(Failure::from)).collect()
}

/// `in_batch_sim` against KID when it was computed, otherwise Vendi.
fn plot_axes(rows: &[ResultRow]) -> Option<(&'static str, &'static str)> {
    let all = |f: fn(&ResultRow) -> bool| rows.iter().all(f);
    let has_ibs = all(|r| r.in_batch_sim.is_some());
    let has_vendi = all(|r| r.vendi.is_some());
    let y = if all(|r| r.kid.is_some()) {
        "kid"
    } else if has_vendi {
        "vendi"
    } else {
        "perturbation_energy"
    };
    if has_ibs {
        Some(("in_batch_sim", y))
    } else if has_vendi && y != "vendi" {
        Some(("vendi", y))
    } else {
        None
    }
}

fn summarize(rows: &[ResultRow]) {
    let mut seen = Vec::new();
    for r in rows {
        let key = (r.axis_value.clone(), r.method);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let label = if r.axis == "-" { String::new() } else { format!("{}={} ", r.axis, r.axis_value) };
        println!(
            "{label}{:<12} in_batch_sim {}  vendi {}  kid {}",
            r.method.label(),
            fmt(r.mean_in_batch_sim),
            fmt(r.mean_vendi),
            fmt(r.kid)
        );
    }
}

fn write_outputs(dir: &Path, rows: &[ResultRow], config: &Value, details: Value) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    emit_csv(rows, &dir.join("results.csv"))?;
    let plot = plot_axes(rows);
    if let Some((x, y)) = plot {
        emit_pareto_svg(rows, x, y, &dir.join("pareto.svg"))?;
    }
    let mut details = details;
    details["rows"] = json!(rows.len());
    details["pareto_axes"] = json!(plot.map(|(x, y)| [x, y]));
    write_manifest(dir, config, details)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (mut spec, details, methods, sweep_args) = match &cli.command {
        Command::Run { config, methods } => {
            let spec = load_spec(&config.config)?;
            let methods = parse_methods(methods, spec.method)?;
            (spec, json!({ "command": "run" }), methods, None)
        }
        Command::Sweep { config, axis, values } => {
            let spec = load_spec(&config.config)?;
            let axis: SweepAxis = axis.parse()?;
            let values: Vec<Value> = serde_json::from_str(values)
                .map_err(|e| Failure::Config(format!("--values must be a JSON array: {e}")))?;
            let details = json!({ "command": "sweep", "axis": axis.name(), "values": values });
            let method = spec.method;
            (spec, details, vec![method], Some((axis, values)))
        }
        Command::Demo => (ExperimentSpec::demo(), json!({ "command": "demo" }), Method::ALL.to_vec(), None),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| spec.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let rows = match &sweep_args {
        Some((axis, values)) => sweep(&spec, *axis, values)?,
        None => compare_methods(&spec, &methods)?,
    };
    let mut details = details;
    details["methods"] = json!(methods.iter().map(|m| m.label()).collect::<Vec<_>>());
    details["config_digest"] = json!(spec.config_digest());
    let config = serde_json::to_value(&spec).expect("specs always serialize");
    write_outputs(&out, &rows, &config, details)?;
    if !cli.quiet {
        summarize(&rows);
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("invalid config: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(3)
        }
    }
}
