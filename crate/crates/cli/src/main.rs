use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use fdc_core::{
    build_certificate, build_path, eigenvalues, estimate_rate, generic_initial_state, grid_oracle,
    iterate, optimize_weights, slem, verify_certificate, weight_matrix, Error, OptimizerParams,
    Result, WeightAssignment, DEFAULT_EIG_TOL,
};

/// Below this, an error norm counts as exact consensus for the running rate.
const RATE_FLOOR: f64 = 1e-300;

const DEFAULT_SIM_SEED: u64 = 0x5eed_0002;

#[derive(Parser)]
#[command(
    name = "fdc",
    version,
    about = "Consensus averaging weights on path networks: spectra, optimization, certificates, simulation"
)]
struct Cli {
    /// Emit the report as a single JSON object.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue spectrum and SLEM of a weighted path.
    Slem {
        /// Node count.
        #[arg(long)]
        n: usize,
        /// Comma-separated edge weights; a single value applies to every edge
        /// (default 0.5).
        #[arg(long)]
        weights: Option<String>,
        /// Eigenvalue bisection tolerance.
        #[arg(long, default_value_t = DEFAULT_EIG_TOL)]
        tol: f64,
    },
    /// Minimize the SLEM over edge weights and compare with the closed form.
    Optimize {
        /// Node count.
        #[arg(long)]
        n: usize,
        /// Comma-separated starting weights; a single value applies to every
        /// edge (default 0.3).
        #[arg(long)]
        init: Option<String>,
        /// Subgradient iteration budget.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Seed for the degeneracy-recovery jitter.
        #[arg(long)]
        seed: Option<u64>,
        /// Eigenvalue bisection tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Write the iteration history as CSV to a path, or `-` for stdout.
        #[arg(long)]
        csv: Option<String>,
    },
    /// Build the closed-form optimality certificate and verify it.
    Certify {
        /// Node count.
        #[arg(long)]
        n: usize,
        /// Residual tolerance for the verdict.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Weights to verify against; a single value applies to every edge
        /// (default 0.5, the profile the certificate attests).
        #[arg(long)]
        weights: Option<String>,
    },
    /// Run the averaging iteration and estimate its contraction rate.
    Simulate {
        /// Node count.
        #[arg(long)]
        n: usize,
        /// Comma-separated edge weights; a single value applies to every edge
        /// (default 0.5).
        #[arg(long)]
        weights: Option<String>,
        /// Number of averaging steps (at least 1).
        #[arg(long)]
        steps: usize,
        /// Seed for the random initial state.
        #[arg(long)]
        seed: Option<u64>,
        /// Explicit comma-separated initial state (overrides --seed).
        #[arg(long)]
        init: Option<String>,
        /// Write per-step error norms as CSV to a path, or `-` for stdout
        /// (the report then goes to stderr).
        #[arg(long)]
        csv: Option<String>,
    },
    /// Exhaustive grid search for the SLEM minimizer (n up to 4).
    Oracle {
        /// Node count (2 to 4).
        #[arg(long)]
        n: usize,
        /// Grid cell width in [0, 1].
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
    },
}

#[derive(Serialize)]
struct RunReport {
    command: String,
    inputs: BTreeMap<String, Value>,
    outputs: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residuals: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pass: Option<bool>,
}

fn render_value(v: &Value) -> String {
    match v {
        Value::Null => "null".to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Number(x) => x.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items
            .iter()
            .map(render_value)
            .collect::<Vec<_>>()
            .join(","),
        Value::Object(_) => v.to_string(),
    }
}

impl RunReport {
    fn render(&self, json: bool) -> String {
        if json {
            let mut s = serde_json::to_string(self).expect("report serializes");
            s.push('\n');
            return s;
        }
        let mut out = String::new();
        let _ = writeln!(out, "command: {}", self.command);
        out.push_str("inputs:\n");
        for (k, v) in &self.inputs {
            let _ = writeln!(out, "  {k}: {}", render_value(v));
        }
        out.push_str("outputs:\n");
        for (k, v) in &self.outputs {
            let _ = writeln!(out, "  {k}: {}", render_value(v));
        }
        if let Some(residuals) = &self.residuals {
            out.push_str("residuals:\n");
            for (k, v) in residuals {
                let _ = writeln!(out, "  {k}: {v:e}");
            }
        }
        if let Some(pass) = self.pass {
            let _ = writeln!(out, "pass: {pass}");
        }
        out
    }
}

fn emit(report: &RunReport, json: bool, to_stderr: bool) {
    let text = report.render(json);
    if to_stderr {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
}

/// Parse a comma-separated float list; a single value is broadcast to `len`.
fn parse_values(arg: &str, len: usize, what: &str) -> Result<Vec<f64>> {
    let mut vals = Vec::new();
    for piece in arg.split(',') {
        let piece = piece.trim();
        let v: f64 = piece.parse().map_err(|_| {
            Error::Validation(format!("cannot parse {what} entry {piece:?} as a number"))
        })?;
        vals.push(v);
    }
    if vals.len() == 1 && len > 1 {
        return Ok(vec![vals[0]; len]);
    }
    if vals.len() != len {
        return Err(Error::Validation(format!(
            "{what} has {} entries, expected {len}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn resolve_weights(n: usize, arg: Option<&str>) -> Result<WeightAssignment> {
    build_path(n)?;
    let vals = match arg {
        Some(s) => parse_values(s, n - 1, "--weights")?,
        None => vec![0.5; n - 1],
    };
    WeightAssignment::new(vals)
}

fn json_floats(vals: &[f64]) -> Value {
    Value::Array(vals.iter().map(|v| serde_json::json!(v)).collect())
}

fn open_sink(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        return Ok(Box::new(io::stdout().lock()));
    }
    let file = File::create(path)
        .map_err(|e| Error::Validation(format!("cannot open {path} for writing: {e}")))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn run_slem(n: usize, weights: Option<String>, tol: f64, json: bool) -> Result<ExitCode> {
    let w = resolve_weights(n, weights.as_deref())?;
    let t = weight_matrix(&build_path(n)?, &w)?;
    let summary = eigenvalues(&t, tol)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("n".into(), serde_json::json!(n));
    inputs.insert("tol".into(), serde_json::json!(tol));
    inputs.insert("weights".into(), json_floats(w.values()));
    let mut outputs = BTreeMap::new();
    outputs.insert("slem".into(), serde_json::json!(summary.slem));
    outputs.insert("spectrum".into(), json_floats(&summary.eigenvalues));
    emit(
        &RunReport {
            command: "slem".into(),
            inputs,
            outputs,
            residuals: None,
            pass: None,
        },
        json,
        false,
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn run_optimize(
    n: usize,
    init: Option<String>,
    max_iters: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    csv: Option<String>,
    json: bool,
) -> Result<ExitCode> {
    build_path(n)?;
    let init_vals = match init.as_deref() {
        Some(s) => parse_values(s, n - 1, "--init")?,
        None => vec![0.3; n - 1],
    };
    let start = WeightAssignment::new(init_vals)?;
    let mut params = OptimizerParams::default();
    if let Some(m) = max_iters {
        params.max_iters = m;
    }
    if let Some(s) = seed {
        params.seed = s;
    }
    if let Some(t) = tol {
        params.eig_tol = t;
    }
    let result = optimize_weights(n, &start, &params)?;

    let theory = (PI / n as f64).cos();
    let max_dev = result
        .weights
        .values()
        .iter()
        .map(|w| (w - 0.5).abs())
        .fold(0.0f64, f64::max);
    let slem_dev = (result.slem - theory).abs();

    let csv_to_stdout = csv.as_deref() == Some("-");
    if let Some(path) = csv.as_deref() {
        let mut sink = open_sink(path)?;
        let mut body = String::from("iteration,best_slem\n");
        for (k, s) in &result.history {
            let _ = writeln!(body, "{k},{s}");
        }
        sink.write_all(body.as_bytes())
            .and_then(|_| sink.flush())
            .map_err(|e| Error::Validation(format!("csv write failed: {e}")))?;
    }

    let mut inputs = BTreeMap::new();
    inputs.insert("init".into(), json_floats(start.values()));
    inputs.insert("max_iters".into(), serde_json::json!(params.max_iters));
    inputs.insert("n".into(), serde_json::json!(n));
    inputs.insert("seed".into(), serde_json::json!(params.seed));
    inputs.insert("step_scale".into(), serde_json::json!(params.step_scale));
    inputs.insert("tol".into(), serde_json::json!(params.eig_tol));
    let mut outputs = BTreeMap::new();
    outputs.insert("closed_form_slem".into(), serde_json::json!(theory));
    outputs.insert("iterations".into(), serde_json::json!(result.iterations));
    outputs.insert(
        "max_weight_deviation".into(),
        serde_json::json!(max_dev),
    );
    outputs.insert("slem".into(), serde_json::json!(result.slem));
    outputs.insert("slem_deviation".into(), serde_json::json!(slem_dev));
    outputs.insert("weights".into(), json_floats(result.weights.values()));
    emit(
        &RunReport {
            command: "optimize".into(),
            inputs,
            outputs,
            residuals: None,
            pass: None,
        },
        json,
        csv_to_stdout,
    );
    Ok(ExitCode::SUCCESS)
}

fn run_certify(n: usize, tol: f64, weights: Option<String>, json: bool) -> Result<ExitCode> {
    let w = resolve_weights(n, weights.as_deref())?;
    let cert = build_certificate(n)?;
    let report = verify_certificate(&cert, &w, tol)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("n".into(), serde_json::json!(n));
    inputs.insert("tol".into(), serde_json::json!(tol));
    inputs.insert("weights".into(), json_floats(w.values()));
    let mut outputs = BTreeMap::new();
    outputs.insert("s".into(), serde_json::json!(cert.s));
    outputs.insert("theta".into(), serde_json::json!(cert.theta));
    outputs.insert(
        "max_residual".into(),
        serde_json::json!(report.max_residual()),
    );
    let pass = report.pass;
    emit(
        &RunReport {
            command: "certify".into(),
            inputs,
            outputs,
            residuals: Some(report.residuals),
            pass: Some(pass),
        },
        json,
        false,
    );
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    n: usize,
    weights: Option<String>,
    steps: usize,
    seed: Option<u64>,
    init: Option<String>,
    csv: Option<String>,
    json: bool,
) -> Result<ExitCode> {
    if steps == 0 {
        return Err(Error::Validation("simulation needs at least 1 step".into()));
    }
    let w = resolve_weights(n, weights.as_deref())?;
    let seed = seed.unwrap_or(DEFAULT_SIM_SEED);
    let x0 = match init.as_deref() {
        Some(s) => parse_values(s, n, "--init")?,
        None => generic_initial_state(n, &w, seed)?,
    };
    let trace = iterate(n, &w, &x0, steps)?;
    let burn_in = steps / 4;
    let rate = estimate_rate(&trace, burn_in).ok();

    let csv_to_stdout = csv.as_deref() == Some("-");
    if let Some(path) = csv.as_deref() {
        let mut sink = open_sink(path)?;
        let mut body = String::from("t,error_norm,rate_estimate\n");
        let e_burn = trace.error_norms[burn_in.min(steps)];
        for (t, e) in trace.error_norms.iter().enumerate() {
            let running = if t > burn_in && *e > RATE_FLOOR && e_burn > RATE_FLOOR {
                (e / e_burn).powf(1.0 / (t - burn_in) as f64)
            } else {
                f64::NAN
            };
            let _ = writeln!(body, "{t},{e},{running}");
        }
        sink.write_all(body.as_bytes())
            .and_then(|_| sink.flush())
            .map_err(|e| Error::Validation(format!("csv write failed: {e}")))?;
    }

    let spectral = slem(n, &w)?;
    let uniform_half = w.values().iter().all(|v| *v == 0.5);

    let mut inputs = BTreeMap::new();
    inputs.insert("burn_in".into(), serde_json::json!(burn_in));
    inputs.insert("n".into(), serde_json::json!(n));
    inputs.insert("steps".into(), serde_json::json!(steps));
    match init.as_deref() {
        Some(_) => {
            inputs.insert("init".into(), json_floats(&x0));
        }
        None => {
            inputs.insert("seed".into(), serde_json::json!(seed));
        }
    }
    inputs.insert("weights".into(), json_floats(w.values()));
    let mut outputs = BTreeMap::new();
    outputs.insert(
        "final_error_norm".into(),
        serde_json::json!(trace.error_norms[steps]),
    );
    outputs.insert("mean".into(), serde_json::json!(trace.mean));
    match &rate {
        Some(est) => {
            outputs.insert("rate".into(), serde_json::json!(est.rate));
            outputs.insert("rate_truncated".into(), serde_json::json!(est.truncated));
            outputs.insert(
                "rate_window".into(),
                serde_json::json!([est.window.0, est.window.1]),
            );
        }
        None => {
            outputs.insert("rate".into(), Value::Null);
        }
    }
    outputs.insert("spectral_rate".into(), serde_json::json!(spectral));
    if uniform_half {
        outputs.insert(
            "theory_rate".into(),
            serde_json::json!((PI / n as f64).cos()),
        );
    }
    emit(
        &RunReport {
            command: "simulate".into(),
            inputs,
            outputs,
            residuals: None,
            pass: None,
        },
        json,
        csv_to_stdout,
    );
    Ok(ExitCode::SUCCESS)
}

fn run_oracle(n: usize, resolution: f64, json: bool) -> Result<ExitCode> {
    let (argmin, best) = grid_oracle(n, resolution)?;
    let max_dev = argmin
        .values()
        .iter()
        .map(|w| (w - 0.5).abs())
        .fold(0.0f64, f64::max);

    let mut inputs = BTreeMap::new();
    inputs.insert("n".into(), serde_json::json!(n));
    inputs.insert("resolution".into(), serde_json::json!(resolution));
    let mut outputs = BTreeMap::new();
    outputs.insert(
        "closed_form_slem".into(),
        serde_json::json!((PI / n as f64).cos()),
    );
    outputs.insert(
        "max_distance_from_half".into(),
        serde_json::json!(max_dev),
    );
    outputs.insert("slem".into(), serde_json::json!(best));
    outputs.insert("weights".into(), json_floats(argmin.values()));
    emit(
        &RunReport {
            command: "oracle".into(),
            inputs,
            outputs,
            residuals: None,
            pass: None,
        },
        json,
        false,
    );
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let json = cli.json;
    match cli.command {
        Command::Slem { n, weights, tol } => run_slem(n, weights, tol, json),
        Command::Optimize {
            n,
            init,
            max_iters,
            seed,
            tol,
            csv,
        } => run_optimize(n, init, max_iters, seed, tol, csv, json),
        Command::Certify { n, tol, weights } => run_certify(n, tol, weights, json),
        Command::Simulate {
            n,
            weights,
            steps,
            seed,
            init,
            csv,
        } => run_simulate(n, weights, steps, seed, init, csv, json),
        Command::Oracle { n, resolution } => run_oracle(n, resolution, json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
