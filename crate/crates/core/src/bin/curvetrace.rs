use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};

use curvetrace::corpus::{self, oracle_solve_stabilized, OracleSettings, ProblemId};
use curvetrace::driver::{write_solutions_json, write_trace_csv, ProblemFile, SolveError};
use curvetrace::{solve, ReorderMode, SolverConfig, SystemDefinition};

#[derive(Parser, Debug)]
#[command(
    name = "curvetrace",
    version,
    about = "Find all real solutions of a nonlinear system inside a box by curve following"
)]
#[command(group(ArgGroup::new("input").required(true).args(["problem", "system", "list"])))]
struct Cli {
    /// Built-in problem, optionally with a dimension: T1..T11, EX2, EX4 (e.g. T1:20)
    #[arg(long, value_name = "ID[:n]")]
    problem: Option<String>,
    /// JSON problem file with variables, equations, lower, upper and optional config
    #[arg(long, value_name = "FILE")]
    system: Option<PathBuf>,
    /// List the built-in problems
    #[arg(long)]
    list: bool,
    /// Use the finer settings of a built-in problem, where it has them
    #[arg(long, requires = "problem")]
    refined: bool,

    /// Mesh spacing of the leading variables on each slice
    #[arg(long)]
    stepx: Option<f64>,
    /// Spacing of the slices in the last variable
    #[arg(long)]
    stepz: Option<f64>,
    /// Curve-following step in the last variable
    #[arg(long, allow_hyphen_values = true)]
    step: Option<f64>,
    /// Smallest halved step before a branch is given up
    #[arg(long)]
    thresh: Option<f64>,
    /// Residual accuracy of curve points
    #[arg(long)]
    acc1: Option<f64>,
    /// Residual accuracy of solutions
    #[arg(long)]
    acc2: Option<f64>,
    /// Solutions closer than this are reported once (default 10 * acc2)
    #[arg(long, value_name = "F")]
    tol_dedup: Option<f64>,
    /// auto, none, rows=I or cols=J
    #[arg(long, value_name = "MODE")]
    reorder: Option<ReorderMode>,

    /// Write the solutions as JSON
    #[arg(long, value_name = "OUT.json")]
    solutions: Option<PathBuf>,
    /// Write every accepted curve point as CSV
    #[arg(long, value_name = "OUT.csv")]
    trace: Option<PathBuf>,
    /// Cross-check with a brute-force multi-start Newton (n <= 3)
    #[arg(long)]
    oracle: bool,
    /// Stop sweeps at the last full step instead of clamping onto the box face
    #[arg(long)]
    no_boundary_clamp: bool,
    /// Worker threads for the slice Newton runs
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

const EXIT_BAD_ARGS: u8 = 1;
const EXIT_BAD_FILE: u8 = 2;
const EXIT_UNSOLVABLE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_BAD_ARGS)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type Failure = (u8, String);

fn bad_args(msg: impl ToString) -> Failure {
    (EXIT_BAD_ARGS, msg.to_string())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.list {
        list_problems();
        return Ok(());
    }
    let (label, sys, mut cfg) = load_input(&cli)?;
    apply_overrides(&cli, &mut cfg);

    let report = match solve(&sys, &cfg) {
        Ok(r) => r,
        Err(SolveError::Unsolvable(ord)) => {
            return Err((
                EXIT_UNSOLVABLE,
                format!(
                    "system cannot be uniquely solved (dependence matrix {:?}); try --reorder none",
                    ord.dependence
                ),
            ))
        }
        Err(e) => return Err(bad_args(e)),
    };

    if let Some(path) = &cli.solutions {
        let file = File::create(path).map_err(|e| bad_args(format!("{}: {e}", path.display())))?;
        write_solutions_json(&report, BufWriter::new(file)).map_err(bad_args)?;
    }
    if let Some(path) = &cli.trace {
        let file = File::create(path).map_err(|e| bad_args(format!("{}: {e}", path.display())))?;
        write_trace_csv(&report, &sys.names, BufWriter::new(file)).map_err(bad_args)?;
    }

    let ord = report.ordering.as_ref().expect("solve reports the ordering");
    let sugg = if ord.applied == ord.suggested {
        if ord.suggestion == "no reord." {
            ord.suggestion.clone()
        } else {
            format!("{} (applied)", ord.suggestion)
        }
    } else {
        format!("{} (ran: {})", ord.suggestion, ord.applied_description)
    };
    println!(
        "{:<8} {:>3}  {:<28} {:>7} {:>9}  alg. sugg.",
        "problem", "n", "n-box", "#sols", "secs"
    );
    println!(
        "{:<8} {:>3}  {:<28} {:>7} {:>9.3}  {}",
        label,
        sys.n(),
        describe_box(&sys),
        report.solutions.len(),
        report.wall_seconds,
        sugg
    );
    println!();
    for (k, s) in report.solutions.iter().enumerate() {
        let coords: Vec<String> = s.x.iter().map(|v| format!("{v:.10}")).collect();
        println!("{:>4}  ({})  |F| = {:.2e}", k + 1, coords.join(", "), s.residual);
    }
    let c = &report.counters;
    println!();
    println!(
        "slices {}  mesh Newton {}  branches {}  steps {}  halvings {}  bisections {} ({} failed)",
        c.slices,
        c.mesh_newton_calls,
        c.branches_followed,
        c.steps,
        c.halvings,
        c.bisection_calls,
        c.bisection_failures
    );

    if cli.oracle {
        let settings = OracleSettings::new(
            sys.lower
                .iter()
                .zip(&sys.upper)
                .map(|(l, u)| (u - l) / 16.0)
                .fold(f64::INFINITY, f64::min)
                .max(1e-3),
            cfg.acc2,
        );
        match oracle_solve_stabilized(&sys, &settings, 5) {
            Ok(o) => {
                let (matched, missed): (Vec<&Vec<f64>>, Vec<&Vec<f64>>) = o.solutions.iter().partition(|p| {
                    report
                        .solutions
                        .iter()
                        .any(|s| curvetrace::geometry::max_distance(&s.x, p) <= 1e-3)
                });
                println!(
                    "oracle: {} solutions (grid {}), {} matched by the sweep",
                    o.solutions.len(),
                    o.grid_step,
                    matched.len()
                );
                for p in missed {
                    let coords: Vec<String> = p.iter().map(|v| format!("{v:.10}")).collect();
                    println!("  missed ({})", coords.join(", "));
                }
            }
            Err(e) => log::warn!("oracle skipped: {e}"),
        }
    }
    Ok(())
}

fn load_input(cli: &Cli) -> Result<(String, SystemDefinition, SolverConfig), Failure> {
    if let Some(sel) = &cli.problem {
        let (id, n) = match sel.split_once(':') {
            Some((id, n)) => (
                id,
                Some(
                    n.parse::<usize>()
                        .map_err(|_| bad_args(format!("bad dimension in `{sel}`")))?,
                ),
            ),
            None => (sel.as_str(), None),
        };
        let id: ProblemId = id.parse().map_err(bad_args)?;
        let sys = corpus::generate(id, n).map_err(bad_args)?;
        let spec = corpus::spec(id);
        let cfg = match (cli.refined, spec.refined) {
            (true, Some(cfg)) => cfg,
            (true, None) => {
                log::warn!("{id} has no refined settings; using the recommended ones");
                spec.recommended
            }
            (false, _) => spec.recommended,
        };
        return Ok((sel.to_ascii_uppercase(), sys, cfg));
    }
    let path = cli.system.as_ref().expect("clap enforces an input");
    let pf = ProblemFile::load(path).map_err(|e| (EXIT_BAD_FILE, e.to_string()))?;
    let sys = pf.system().map_err(|e| (EXIT_BAD_FILE, e.to_string()))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "system".into());
    Ok((label, sys, pf.config.unwrap_or_default()))
}

fn apply_overrides(cli: &Cli, cfg: &mut SolverConfig) {
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.stepx, cli.stepx);
    set(&mut cfg.stepz, cli.stepz);
    set(&mut cfg.step, cli.step.map(f64::abs));
    set(&mut cfg.thresh, cli.thresh);
    set(&mut cfg.acc1, cli.acc1);
    set(&mut cfg.acc2, cli.acc2);
    if cli.tol_dedup.is_some() {
        cfg.tol_dedup = cli.tol_dedup;
    }
    if let Some(m) = cli.reorder {
        cfg.reorder = m;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if cli.no_boundary_clamp {
        cfg.boundary_clamp = false;
    }
    if cli.trace.is_some() {
        cfg.record_trace = true;
    }
}

fn describe_box(sys: &SystemDefinition) -> String {
    let same = sys.lower.iter().all(|&l| l == sys.lower[0]) && sys.upper.iter().all(|&u| u == sys.upper[0]);
    if same {
        format!("[{},{}]^{}", sys.lower[0], sys.upper[0], sys.n())
    } else {
        sys.lower
            .iter()
            .zip(&sys.upper)
            .map(|(l, u)| format!("[{l},{u}]"))
            .collect::<Vec<_>>()
            .join("x")
    }
}

fn list_problems() {
    println!("{:<5} {:>3}  {:<28} {:>6}  alg. sugg.", "id", "n", "name", "#sols");
    for id in ProblemId::ALL {
        let s = corpus::spec(id);
        let count = s.known_count.map(|c| c.to_string()).unwrap_or_else(|| "inf".into());
        let n = if s.variable_n {
            format!("{}*", s.default_n)
        } else {
            format!("{} ", s.default_n)
        };
        println!("{:<5} {:>3}  {:<28} {:>6}  {}", id, n, s.title, count, s.suggestion);
    }
    println!("\n* variable dimension: --problem ID:n");
}
