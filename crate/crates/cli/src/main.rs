//! `tsfuzzy`: stability checks for Takagi–Sugeno fuzzy models from the command line.
//!
//! Exit codes: 0 success or feasible, 1 infeasible or negative result,
//! 2 usage or input error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use tsfuzzy::analysis::{
    comparison_cases, comparison_table, complexity_csv, complexity_report, complexity_table, lambda_max_search,
    run_comparison, DEFAULT_RANGE, DEFAULT_SEARCH_TOL,
};
use tsfuzzy::conditions::build;
use tsfuzzy::sdp::{solve_feasibility, write_dump, BarrierSolver};
use tsfuzzy::verify::{check_lyapunov_decrease, simulate, verify_certificate};
use tsfuzzy::{Certificate, Error, Exec, MethodKind, ModelBundle, SolverConfig, Status};

#[derive(Parser)]
#[command(
    name = "tsfuzzy",
    version,
    about = "LMI stability certificates for Takagi-Sugeno fuzzy models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide one stability condition at a fixed lambda.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        method: String,
        /// Bounds on the membership derivatives, one per rule or a single shared value.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        phi: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lambda: f64,
        /// Write the certificate JSON here when feasible.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the assembled problem in the text dump format.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Bisection for the largest feasible lambda.
    LambdaMax {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        method: String,
        /// Bounds on the membership derivatives, one per rule or a single shared value.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        phi: Option<Vec<f64>>,
        /// Search bracket as L,U.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        range: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_SEARCH_TOL)]
        tol: f64,
        /// Write the probe history as JSON lines.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Decision-variable and LMI-row counts of every method.
    Complexity {
        #[arg(long)]
        n: i64,
        #[arg(long)]
        r: i64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Integrate the fuzzy system from an initial state and print a CSV trajectory.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Add a V column and count Lyapunov increases.
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Keep every k-th sample in the CSV.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a certificate's constraint margins.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
    },
    /// Lambda* of every method side by side with published values.
    Table1 {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEARCH_TOL)]
        tol: f64,
        /// Run the searches one after another.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

const INFEASIBLE: u8 = 1;
const USAGE: u8 = 2;
const NUMERICAL: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoConvergence(_) => NUMERICAL,
            _ => USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = run(cli.command);
    eprintln!("elapsed: {:.3} s", started.elapsed().as_secs_f64());
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Check {
            model,
            method,
            phi,
            lambda,
            out,
            dump,
        } => cmd_check(&model, &method, phi, lambda, out.as_deref(), dump.as_deref()),
        Command::LambdaMax {
            model,
            method,
            phi,
            range,
            tol,
            history,
        } => cmd_lambda_max(&model, &method, phi, range, tol, history.as_deref()),
        Command::Complexity { n, r, format } => cmd_complexity(n, r, format),
        Command::Simulate {
            model,
            x0,
            lambda,
            t_end,
            dt,
            certificate,
            stride,
            out,
        } => cmd_simulate(
            &model,
            &x0,
            lambda,
            t_end,
            dt,
            certificate.as_deref(),
            stride,
            out.as_deref(),
        ),
        Command::Verify { model, certificate } => cmd_verify(&model, &certificate),
        Command::Table1 { model, tol, sequential } => cmd_table1(&model, tol, sequential),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

/// `ex1` names the bundled example unless a file of that name exists.
fn load_model(path: &Path) -> Result<ModelBundle, Failure> {
    if path == Path::new("ex1") && !path.exists() {
        return Ok(ModelBundle::example1());
    }
    ModelBundle::from_json(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn method_for(bundle: &ModelBundle, name: &str, phi: Option<Vec<f64>>) -> Result<MethodKind, Failure> {
    let r = bundle.model.r();
    let phi = phi.map(|v| if v.len() == 1 { vec![v[0]; r] } else { v });
    let method = MethodKind::from_name(name, phi)?;
    if method.needs_jacobian() && bundle.jacobian.is_none() {
        return Err(Failure::usage(format!(
            "method '{name}' needs jacobian_vertices in the model file"
        )));
    }
    Ok(method)
}

fn cmd_check(
    model: &Path,
    method: &str,
    phi: Option<Vec<f64>>,
    lambda: f64,
    out: Option<&Path>,
    dump: Option<&Path>,
) -> Outcome {
    let bundle = load_model(model)?;
    let method = method_for(&bundle, method, phi)?;
    let cfg = SolverConfig::default();
    let problem = build(&method, &bundle.model, bundle.jacobian.as_ref(), lambda)?;
    if let Some(path) = dump {
        write(path, &write_dump(&problem))?;
    }
    let solved = solve_feasibility(&problem, &cfg)?;
    println!("method: {method}");
    println!("lambda: {lambda}");
    println!(
        "unknowns: {}, lmi rows: {}",
        problem.num_scalars(),
        problem.total_rows()
    );
    println!("verdict: {}", solved.status.as_str());
    println!("t*: {:.6e} (relative {:.6e})", solved.t_star, solved.relative_margin);
    if solved.boundary {
        println!("note: margin within a factor of two of the strictness threshold");
    }
    match solved.status {
        Status::Infeasible => return Ok(INFEASIBLE),
        Status::NumericalFailure => {
            return Err(Failure {
                code: NUMERICAL,
                message: "solver did not converge".into(),
            })
        }
        Status::StrictlyFeasible => {}
    }
    let x = solved
        .assignment
        .as_ref()
        .expect("feasible outcome carries an assignment");
    let cert = Certificate::from_assignment(method, lambda, solved.t_star, &problem, x)?;
    let report = verify_certificate(&cert, &bundle.model, bundle.jacobian.as_ref(), lambda, cfg.eps_strict)?;
    if !report.passed {
        return Err(Failure {
            code: NUMERICAL,
            message: format!("independent verification failed (worst margin {:.3e})", report.worst()),
        });
    }
    println!("verification: passed (worst margin {:.6e})", report.worst());
    if let Some(path) = out {
        write(path, &cert.to_json()?)?;
        println!("certificate: {}", path.display());
    }
    Ok(0)
}

fn parse_range(range: Option<Vec<f64>>) -> Result<(f64, f64), Failure> {
    match range.as_deref() {
        None => Ok(DEFAULT_RANGE),
        Some([l, u]) if l.is_finite() && u.is_finite() && l < u => Ok((*l, *u)),
        Some(v) => Err(Failure::usage(format!("--range needs L,U with L < U, got {v:?}"))),
    }
}

fn cmd_lambda_max(
    model: &Path,
    method: &str,
    phi: Option<Vec<f64>>,
    range: Option<Vec<f64>>,
    tol: f64,
    history: Option<&Path>,
) -> Outcome {
    let range = parse_range(range)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Failure::usage(format!("--tol must be positive, got {tol}")));
    }
    let bundle = load_model(model)?;
    let method = method_for(&bundle, method, phi)?;
    let solver = BarrierSolver::default();
    let res = lambda_max_search(&method, &bundle.model, bundle.jacobian.as_ref(), range, tol, &solver)?;
    if let Some(path) = history {
        write(path, &res.history_jsonl())?;
    }
    println!("method: {method}");
    println!("probes: {}", res.iterations);
    match res.lambda_star {
        Some(l) => {
            println!("lambda*: {l:.6}");
            println!("bracket: [{:.6}, {:.6}]", res.bracket.0, res.bracket.1);
            Ok(0)
        }
        None => {
            println!("no feasible λ in [{}, {}]", range.0, range.1);
            Ok(INFEASIBLE)
        }
    }
}

fn cmd_complexity(n: i64, r: i64, format: Format) -> Outcome {
    if n < 1 || r < 1 {
        return Err(Failure::usage(format!(
            "--n and --r must be positive, got n = {n}, r = {r}"
        )));
    }
    let rows = complexity_report(n as u64, r as u64)?;
    match format {
        Format::Csv => print!("{}", complexity_csv(&rows)),
        Format::Table => print!("{}", complexity_table(&rows)),
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model: &Path,
    x0: &[f64],
    lambda: f64,
    t_end: f64,
    dt: f64,
    certificate: Option<&Path>,
    stride: usize,
    out: Option<&Path>,
) -> Outcome {
    let bundle = load_model(model)?;
    let spec = bundle
        .memberships
        .as_ref()
        .ok_or_else(|| Failure::usage("simulation needs memberships in the model file"))?;
    if x0.len() != bundle.model.n() {
        return Err(Failure::usage(format!("--x0 needs {} values", bundle.model.n())));
    }
    if !bundle.model.region().contains(x0) {
        return Err(Failure::usage("x0 lies outside the modelling region"));
    }
    let cert = certificate
        .map(|p| Certificate::from_json(&read(p)?).map_err(Failure::from))
        .transpose()?;
    let traj = simulate(&bundle.model, spec, lambda, x0, t_end, dt).map_err(|e| match e {
        Error::NonFinite(m) => Failure {
            code: NUMERICAL,
            message: format!("integration produced a non-finite value ({m})"),
        },
        other => other.into(),
    })?;
    let decrease = cert
        .as_ref()
        .map(|c| check_lyapunov_decrease(c, spec, &traj))
        .transpose()?;
    let csv = traj.to_csv(decrease.as_ref().map(|d| d.values.as_slice()), stride);
    let last = traj.last_state();
    let mut report = vec![
        format!("exit: {}", traj.exit.as_str()),
        format!("final time: {}", traj.samples.last().map(|s| s.0).unwrap_or(0.0)),
        format!("final norm: {:.6e}", last.iter().map(|v| v * v).sum::<f64>().sqrt()),
    ];
    if let Some(d) = &decrease {
        report.push(format!(
            "{} decrease violations (worst step change {:.3e})",
            d.violations, d.worst_increase
        ));
    }
    match out {
        Some(path) => {
            write(path, &csv)?;
            report.iter().for_each(|l| println!("{l}"));
        }
        None => {
            print!("{csv}");
            report.iter().for_each(|l| eprintln!("{l}"));
        }
    }
    Ok(0)
}

fn cmd_verify(model: &Path, certificate: &Path) -> Outcome {
    let bundle = load_model(model)?;
    let cert = Certificate::from_json(&read(certificate)?)?;
    if cert.method.needs_jacobian() && bundle.jacobian.is_none() {
        return Err(Failure::usage("certificate needs jacobian_vertices in the model file"));
    }
    let eps = SolverConfig::default().eps_strict;
    let report = verify_certificate(&cert, &bundle.model, bundle.jacobian.as_ref(), cert.lambda, eps)
        .map_err(|e| Failure::usage(format!("certificate does not match the model: {e}")))?;
    println!("method: {}", cert.method);
    println!("lambda: {}", cert.lambda);
    println!("{:<28} {:>14}", "constraint", "min eigenvalue");
    for (label, v) in &report.margins {
        println!("{label:<28} {v:>14.6e}");
    }
    println!("threshold: {:.1e}", report.threshold);
    if report.passed {
        println!("result: pass");
        Ok(0)
    } else {
        println!("result: fail");
        Ok(INFEASIBLE)
    }
}

fn cmd_table1(model: &Path, tol: f64, sequential: bool) -> Outcome {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Failure::usage(format!("--tol must be positive, got {tol}")));
    }
    let bundle = load_model(model)?;
    if bundle.jacobian.is_none() {
        return Err(Failure::usage("table1 needs jacobian_vertices in the model file"));
    }
    let exec = if sequential { Exec::Sequential } else { Exec::default() };
    let cases = comparison_cases(bundle.model.r());
    let solver = BarrierSolver::default();
    let results = run_comparison(
        &cases,
        &bundle.model,
        bundle.jacobian.as_ref(),
        DEFAULT_RANGE,
        tol,
        &solver,
        exec,
    )?;
    print!("{}", comparison_table(&results));
    Ok(0)
}
