//! `branchflow` command-line interface.
//!
//! Exit status: 0 on success, 2 for invalid input (the error list is written
//! to stdout as JSON), 1 for internal failures.

use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use branchflow::certify::{certify_star_with, CertifyMode};
use branchflow::config::{
    degree_bound, satisfactory_slack_with, search_satisfactory, verify_half_p_bound, SearchOptions,
};
use branchflow::cost::decomposition_exponent;
use branchflow::gallery::{self, UniversalTreeSpec};
use branchflow::io;
use branchflow::optimizer::{solve_with, SolveOptions};
use branchflow::svg::render_svg;
use branchflow::{
    is_forest, validate_flow, weighted_fermat, CostModel, Error, Flow, StarInstance, Tolerances, TransportInstance,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "branchflow", version, about = "Branched transport flows with power-law cost")]
struct Cli {
    /// Worker threads for parallel kernels; 1 forces serial execution.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Require an explicit --seed for every randomized command.
    #[arg(long, global = true)]
    scripted: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Io {
    /// Input document; standard input when absent or "-".
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output file; standard output when absent or "-".
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct TolArgs {
    /// Relative tolerance for divergence and coincidence checks.
    #[arg(long)]
    tol_relative: Option<f64>,
    /// Absolute tolerance on certificate slacks.
    #[arg(long)]
    tol_certificate: Option<f64>,
    /// Absolute tolerance on satisfactory slacks.
    #[arg(long)]
    tol_satisfactory: Option<f64>,
}

impl TolArgs {
    fn apply(&self, mut tol: Tolerances) -> Tolerances {
        if let Some(v) = self.tol_relative {
            tol.relative = v;
        }
        if let Some(v) = self.tol_certificate {
            tol.certificate = v;
        }
        if let Some(v) = self.tol_satisfactory {
            tol.satisfactory = v;
        }
        tol
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gilbert cost of a flow; input is an instance+flow bundle, or a flow with --p.
    Evaluate {
        #[command(flatten)]
        io: Io,
        /// Cost exponent for a bare flow; overrides the bundle's cost.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Validate a flow against its instance (bundle input).
    Validate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Certify a star flow (star document input).
    Certify {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        tol: TolArgs,
        /// Check this many random subsets instead of all of them.
        #[arg(long)]
        sampled: Option<u64>,
        /// Seed for the sampled subsets.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pairwise slacks of a configuration document.
    CheckConfig {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Search for a satisfactory configuration with given masses.
    SearchConfig {
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        d: usize,
        /// Comma-separated masses summing to zero.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        masses: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        /// Base seed; restart `i` uses stream `i` of this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Weighted Fermat point of a weighted-points document.
    Fermat {
        #[command(flatten)]
        io: Io,
    },
    /// Exact solve by topology enumeration (instance or bundle input).
    Solve {
        #[command(flatten)]
        io: Io,
        /// Largest branching degree allowed; at least 3.
        #[arg(long)]
        max_degree: usize,
        /// Extra seeded random layouts per topology.
        #[arg(long, default_value_t = 0)]
        restarts: usize,
        /// Seed for the random layouts.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write an SVG of the best flow (planar instances).
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Build one of the explicit examples.
    Generate {
        #[arg(long, value_enum)]
        example: Example,
        /// Dimension of the orthant, equiangular and double-star examples.
        #[arg(long, default_value_t = 3)]
        d: usize,
        /// Cost exponent of the equiangular example, in [1/2, 1).
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Levels of the universal tree.
        #[arg(long, default_value_t = 5)]
        depth: usize,
        /// Edge length ratio between consecutive levels of the universal tree.
        #[arg(long, default_value_t = 0.7)]
        ratio: f64,
        /// Comma-separated sink masses for the orthant example.
        #[arg(long, value_delimiter = ',')]
        masses: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = Emit::Bundle)]
        emit: Emit,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// SVG drawing of a planar flow (bundle input, or flow with --p).
    Render {
        #[command(flatten)]
        io: Io,
        /// Cost exponent for a bare flow; overrides the bundle's cost.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Fit the scaling exponent of the oscillatory integral decomposition.
    Decompose {
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4,8,16")]
        grid: Vec<f64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Example {
    Orthant,
    Equiangular,
    DoubleStar,
    Universal,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Emit {
    Bundle,
    Instance,
    Star,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(Vec<Value>),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Quadrature(_) => Failure::Internal(e.to_string()),
            Error::Json(j) => Failure::Input(vec![json!({
                "kind": "json",
                "message": e.to_string(),
                "line": j.line(),
                "column": j.column(),
            })]),
            Error::Validation(report) => Failure::Input(
                report
                    .issues
                    .iter()
                    .map(|i| json!({"kind": "validation", "message": i.to_string(), "detail": i}))
                    .collect(),
            ),
            other => Failure::Input(vec![json!({"kind": kind(other), "message": other.to_string()})]),
        }
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::Validation(_) => "validation",
        Error::TableRange { .. } => "table_range",
        Error::GuardExceeded { .. } => "guard_exceeded",
        Error::UnsupportedDimension(_) => "unsupported_dimension",
        Error::Quadrature(_) => "quadrature",
        Error::Format(_) => "format",
        Error::Json(_) => "json",
    }
}

fn input_error(kind: &str, message: impl Into<String>) -> Failure {
    Failure::Input(vec![json!({"kind": kind, "message": message.into()})])
}

type Outcome = Result<Output, Failure>;

/// What a command produced and the status to exit with.
struct Output {
    path: Option<PathBuf>,
    body: String,
    code: u8,
}

impl Output {
    fn json(path: Option<PathBuf>, value: Value) -> Self {
        Self {
            path,
            body: io::to_pretty(&value),
            code: 0,
        }
    }
}

fn read_input(path: &Option<PathBuf>) -> Result<String, Failure> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            fs::read_to_string(p).map_err(|e| input_error("io", format!("cannot read {}: {e}", p.display())))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| input_error("io", format!("cannot read standard input: {e}")))?;
            Ok(s)
        }
    }
}

fn write_output(out: &Output) -> Result<(), Failure> {
    match &out.path {
        Some(p) if p.as_os_str() != "-" => {
            fs::write(p, &out.body).map_err(|e| Failure::Internal(format!("cannot write {}: {e}", p.display())))
        }
        _ => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(out.body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Internal(format!("cannot write output: {e}")))
        }
    }
}

fn require_seed(cli: &Cli, seed: Option<u64>, what: &str) -> Result<u64, Failure> {
    match seed {
        Some(s) => Ok(s),
        None if cli.scripted => Err(input_error(
            "missing_seed",
            format!("{what} is randomized; pass --seed in scripted mode"),
        )),
        None => Ok(0),
    }
}

/// A bundle, or a bare flow together with `--p`.
fn flow_and_cost(
    text: &str,
    p: Option<f64>,
) -> Result<(Option<TransportInstance>, Flow, CostModel, Tolerances), Failure> {
    let doc = io::parse_document(text)?;
    if doc.contains_key("instance") {
        let (inst, flow, tol) = io::parse_bundle(text)?;
        let cost = match p {
            Some(p) => CostModel::power(p)?,
            None => inst.cost().clone(),
        };
        return Ok((Some(inst), flow, cost, tol));
    }
    let flow = io::parse_flow(text)?;
    let p = p.ok_or_else(|| input_error("invalid_input", "a bare flow needs --p"))?;
    Ok((None, flow, CostModel::power(p)?, Tolerances::default()))
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Evaluate { io: f, p } => {
            let (_, flow, cost, tol) = flow_and_cost(&read_input(&f.input)?, *p)?;
            let fc = branchflow::model::gilbert_functional_with(&flow, &cost, &tol)?;
            Ok(Output::json(
                f.output.clone(),
                io::report_to_json(&json!({"total": fc.total, "per_edge": fc.per_edge})),
            ))
        }
        Command::Validate { io: f, tol } => {
            let text = read_input(&f.input)?;
            let (inst, flow, base) = io::parse_bundle(&text)?;
            let tol = tol.apply(base);
            let report = branchflow::model::validate_flow_with(&inst, &flow, &tol);
            let mut out = Output::json(
                f.output.clone(),
                io::report_to_json(&json!({
                    "valid": report.is_valid(),
                    "is_forest": is_forest(&flow),
                    "issues": report.issues,
                })),
            );
            if !report.is_valid() {
                out.code = 2;
            }
            Ok(out)
        }
        Command::Certify {
            io: f,
            tol,
            sampled,
            seed,
        } => {
            let (star, cost) = io::parse_star(&read_input(&f.input)?)?;
            let mode = match sampled {
                Some(count) => CertifyMode::Sampled {
                    count: *count,
                    seed: require_seed(cli, *seed, "sampled certification")?,
                },
                None => CertifyMode::Exhaustive,
            };
            let cert = certify_star_with(&star, &cost, mode, &tol.apply(Tolerances::default()))?;
            Ok(Output::json(f.output.clone(), io::report_to_json(&cert)))
        }
        Command::CheckConfig { io: f, tol } => {
            let (config, cost) = io::parse_config(&read_input(&f.input)?)?;
            let slack = satisfactory_slack_with(&cost, &config, &tol.apply(Tolerances::default()));
            let mut body = json!({"slack": slack});
            if let Some(p) = cost.exponent() {
                if config.dimension() >= 2 {
                    body["degree_bound"] = serde_json::to_value(degree_bound(p, config.dimension())?).unwrap();
                }
                if branchflow::tolerance::is_half(p) {
                    body["half_power"] = serde_json::to_value(verify_half_p_bound(&cost, &config)?).unwrap();
                }
            }
            Ok(Output::json(f.output.clone(), io::report_to_json(&body)))
        }
        Command::SearchConfig {
            output,
            p,
            d,
            masses,
            restarts,
            seed,
        } => {
            let cost = CostModel::power(*p)?;
            let opts = SearchOptions {
                restarts: *restarts,
                seed: require_seed(cli, *seed, "search-config")?,
                polish: true,
            };
            let report = search_satisfactory(&cost, *d, masses, &opts)?;
            Ok(Output::json(output.clone(), io::report_to_json(&report)))
        }
        Command::Fermat { io: f } => {
            let wp = io::parse_weighted_points(&read_input(&f.input)?)?;
            let fp = weighted_fermat(&wp);
            Ok(Output::json(f.output.clone(), io::report_to_json(&fp)))
        }
        Command::Solve {
            io: f,
            max_degree,
            restarts,
            seed,
            svg,
        } => {
            let text = read_input(&f.input)?;
            let doc = io::parse_document(&text)?;
            let inst = if doc.contains_key("instance") {
                io::parse_bundle(&text)?.0
            } else {
                io::parse_instance(&text)?.0
            };
            if inst.cost().exponent().is_none() {
                eprintln!("warning: solving with a tabulated cost; the enumeration is only exact for power costs");
            }
            let seed = if *restarts > 0 {
                require_seed(cli, *seed, "solve with restarts")?
            } else {
                seed.unwrap_or(0)
            };
            let opts = SolveOptions {
                random_restarts: *restarts,
                seed,
                ..Default::default()
            };
            let report = solve_with(&inst, *max_degree, &opts)?;
            if let Some(path) = svg {
                let drawing = render_svg(&report.best_flow, inst.cost())?;
                fs::write(path, drawing)
                    .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display())))?;
            }
            Ok(Output::json(f.output.clone(), io::report_to_json(&report)))
        }
        Command::Generate {
            example,
            d,
            p,
            depth,
            ratio,
            masses,
            emit,
            output,
        } => {
            let (inst, flow) = match example {
                Example::Orthant => {
                    let m = masses.clone().unwrap_or_else(|| vec![1.0; *d]);
                    gallery::example_orthant(*d, &m)?
                }
                Example::Equiangular => {
                    let (i, f, _) = gallery::example_equiangular(*d, *p)?;
                    (i, f)
                }
                Example::DoubleStar => gallery::example_double_star(*d)?,
                Example::Universal => gallery::universal_tree(&UniversalTreeSpec {
                    depth: *depth,
                    length_ratio: *ratio,
                    ..Default::default()
                })?,
            };
            let value = match emit {
                Emit::Bundle => io::bundle_to_json(&inst, &flow),
                Emit::Instance => io::instance_to_json(&inst),
                Emit::Star => io::star_to_json(&StarInstance::from_star_flow(&inst, &flow)?, inst.cost()),
            };
            Ok(Output::json(output.clone(), value))
        }
        Command::Render { io: f, p } => {
            let (inst, flow, cost, _) = flow_and_cost(&read_input(&f.input)?, *p)?;
            if let Some(inst) = &inst {
                let report = validate_flow(inst, &flow);
                if !report.is_valid() {
                    return Err(Error::Validation(report).into());
                }
            }
            Ok(Output {
                path: f.output.clone(),
                body: render_svg(&flow, &cost)?,
                code: 0,
            })
        }
        Command::Decompose { p, grid, output } => {
            let fit = decomposition_exponent(*p, grid)?;
            Ok(Output::json(output.clone(), io::report_to_json(&fit)))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("--threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = std::panic::catch_unwind(|| run(&cli).and_then(|out| write_output(&out).map(|_| out.code)));
    match result {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(Failure::Input(errors))) => {
            let body = io::to_pretty(&io::report_to_json(&json!({"errors": errors})));
            print!("{body}");
            let _ = std::io::stdout().flush();
            for e in &errors {
                if let Some(m) = e.get("message").and_then(Value::as_str) {
                    eprintln!("error: {m}");
                }
            }
            ExitCode::from(2)
        }
        Ok(Err(Failure::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(1),
    }
}
