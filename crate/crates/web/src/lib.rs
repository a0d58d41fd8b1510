//! JSON-in, JSON-out bindings for the browser demo.
//!
//! Every export takes and returns strings so the page needs no generated
//! type glue. The `*_json` functions hold the logic and are what the native
//! tests call; the `#[wasm_bindgen]` wrappers only convert errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use curvetrace::corpus::{self, ProblemId};
use curvetrace::follower::Mechanism;
use curvetrace::reorder::{build_dependence_matrix, reorder};
use curvetrace::{solve, ProblemFile, SolverConfig};

#[derive(Serialize)]
struct ProblemEntry {
    id: String,
    title: &'static str,
    n: usize,
    known_count: Option<usize>,
    suggestion: &'static str,
}

#[derive(Serialize)]
struct Sweep {
    branch: usize,
    direction: i8,
    points: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SolutionOut {
    x: Vec<f64>,
    residual: f64,
    mechanism: Mechanism,
}

#[derive(Serialize)]
struct SolveOut {
    solutions: Vec<SolutionOut>,
    sweeps: Vec<Sweep>,
    /// Distinct starting points per slice.
    starting_points: Vec<usize>,
    slices: usize,
    steps: usize,
    halvings: usize,
    bisections: usize,
    ordering: String,
}

#[derive(Serialize)]
struct AnalysisOut {
    dependence: Vec<Vec<u8>>,
    suggestion: String,
    jacobian: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct ProbeOut {
    values: Vec<f64>,
    residual: f64,
    in_box: bool,
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn load(problem: &str) -> Result<(curvetrace::SystemDefinition, SolverConfig), String> {
    let file = ProblemFile::from_json(problem).map_err(|e| e.to_string())?;
    let sys = file.system().map_err(|e| e.to_string())?;
    Ok((sys, file.config.unwrap_or_default()))
}

/// Built-in problems as `[{id, title, n, known_count, suggestion}]`.
pub fn problems_json() -> String {
    let list: Vec<ProblemEntry> = ProblemId::ALL
        .iter()
        .filter(|&&id| corpus::generate(id, None).is_ok())
        .map(|&id| {
            let s = corpus::spec(id);
            ProblemEntry {
                id: id.to_string(),
                title: s.title,
                n: s.default_n,
                known_count: s.known_count,
                suggestion: s.suggestion,
            }
        })
        .collect();
    to_json(&list).expect("plain data serializes")
}

/// A built-in problem in problem-file form, with its recommended settings
/// (or the refined ones when asked and available).
pub fn problem_json(id: &str, refined: bool) -> Result<String, String> {
    let id: ProblemId = id.parse().map_err(|e: corpus::CorpusError| e.to_string())?;
    let sys = corpus::generate(id, None).map_err(|e| e.to_string())?;
    let spec = corpus::spec(id);
    let cfg = if refined {
        spec.refined.unwrap_or(spec.recommended)
    } else {
        spec.recommended
    };
    to_json(&ProblemFile::from_system(&sys, Some(cfg)))
}

/// Solves a problem file; the result carries solutions and every sweep.
pub fn solve_json(problem: &str) -> Result<String, String> {
    let (sys, mut cfg) = load(problem)?;
    cfg.record_trace = true;
    cfg.threads = 1;
    let report = solve(&sys, &cfg).map_err(|e| e.to_string())?;
    let mut sweeps: Vec<Sweep> = Vec::new();
    for t in &report.trace {
        match sweeps.last_mut() {
            Some(s) if s.branch == t.branch && s.direction == t.direction => s.points.push(t.point.clone()),
            _ => sweeps.push(Sweep {
                branch: t.branch,
                direction: t.direction,
                points: vec![t.point.clone()],
            }),
        }
    }
    let c = &report.counters;
    let out = SolveOut {
        solutions: report
            .solutions
            .iter()
            .map(|s| SolutionOut {
                x: s.x.clone(),
                residual: s.residual,
                mechanism: s.mechanism,
            })
            .collect(),
        sweeps,
        starting_points: report.starting_points.clone(),
        slices: c.slices,
        steps: c.steps,
        halvings: c.halvings,
        bisections: c.bisection_calls,
        ordering: report
            .ordering
            .as_ref()
            .map(|o| o.applied_description.clone())
            .unwrap_or_default(),
    };
    to_json(&out)
}

/// Dependence matrix, ordering suggestion and symbolic Jacobian.
pub fn analyze_json(problem: &str) -> Result<String, String> {
    let (sys, _) = load(problem)?;
    let d = build_dependence_matrix(&sys);
    let n = sys.n();
    let jacobian = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| sys.jacobian_entry(i, j).display_with(&sys.names).to_string())
                .collect()
        })
        .collect();
    to_json(&AnalysisOut {
        dependence: d.rows(),
        suggestion: reorder(&d).describe(),
        jacobian,
    })
}

/// Values of every equation at `x` (a JSON array).
pub fn probe_json(problem: &str, x: &str) -> Result<String, String> {
    let (sys, _) = load(problem)?;
    let x: Vec<f64> = serde_json::from_str(x).map_err(|e| e.to_string())?;
    if x.len() != sys.n() {
        return Err(format!("expected {} coordinates, got {}", sys.n(), x.len()));
    }
    to_json(&ProbeOut {
        values: sys.eval(&x),
        residual: sys.residual_norm(&x),
        in_box: sys.in_box(&x, 0.0),
    })
}

#[wasm_bindgen]
pub fn problems() -> String {
    problems_json()
}

#[wasm_bindgen]
pub fn problem(id: &str, refined: bool) -> Result<String, JsError> {
    problem_json(id, refined).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = solveSystem)]
pub fn solve_system(problem: &str) -> Result<String, JsError> {
    solve_json(problem).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn analyze(problem: &str) -> Result<String, JsError> {
    analyze_json(problem).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn probe(problem: &str, x: &str) -> Result<String, JsError> {
    probe_json(problem, x).map_err(|e| JsError::new(&e))
}
