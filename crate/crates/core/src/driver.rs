//! Slice-by-slice location of curve branches and their intersections with
//! the left-out equation, plus problem-file and report I/O.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ReorderMode, SolverConfig};
use crate::follower::{
    follow_curve, BranchInfo, Counters, CurveTag, FollowSettings, Mechanism, SolutionTag, SplitSystem, SweepState,
    TracePoint,
};
use crate::geometry::{grid_count, rmesh, GeometryError, PointRegistry};
use crate::numerics::{NewtonOutcome, NewtonSettings};
use crate::reorder::{self, build_dependence_matrix, forced_column_swap, forced_row_swap, Ordering, ReorderError};
use crate::system::{SystemDefinition, SystemError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `max_i |f_i(x)|` over the full system.
    pub residual: f64,
    /// Slice whose starting point led to this solution.
    pub slice: f64,
    pub branch: usize,
    pub direction: i8,
    pub mechanism: Mechanism,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    pub mode: ReorderMode,
    /// Dependence codes of the system as given.
    pub dependence: Vec<Vec<u8>>,
    pub suggested: Ordering,
    pub suggestion: String,
    pub applied: Ordering,
    pub applied_description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub solutions: Vec<Solution>,
    pub counters: Counters,
    /// Distinct starting points per slice, in slice order.
    pub starting_points: Vec<usize>,
    pub curve_points: usize,
    pub trace: Vec<TracePoint>,
    pub ordering: Option<OrderingReport>,
    pub wall_seconds: f64,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("curve following needs at least two equations, got {0}")]
    TooSmall(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Reorder(#[from] ReorderError),
    #[error("system cannot be uniquely solved: dependence matrix has two rows without leading entries")]
    Unsolvable(Box<OrderingReport>),
}

/// Runs the slice sweep on `sys` in its given order.
pub fn locate_curve_parts(sys: &SystemDefinition, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    let n = sys.n();
    if n < 2 {
        return Err(SolveError::TooSmall(n));
    }
    let elapsed = stopwatch();
    let split = SplitSystem::new(sys);
    let m = n - 1;
    let (lower_l, upper_l) = (&sys.lower[..m], &sys.upper[..m]);
    let mesh = rmesh(lower_l, upper_l, cfg.stepx)?;
    let newton_settings = NewtonSettings {
        acc: cfg.acc1,
        max_iter: cfg.max_iter,
        divergence_bound: cfg.divergence_bound.unwrap_or(1e8 * (1.0 + sys.box_norm())),
    };
    let follow = FollowSettings {
        newton: newton_settings,
        boundary_clamp: cfg.boundary_clamp,
        max_bisections: cfg.max_bisections,
        ..FollowSettings::new(cfg.step, cfg.thresh, cfg.acc1, cfg.acc2)
    };
    let tol_belongs = cfg.tol_belongs();
    let tol_dedup = cfg.tol_dedup();

    let mut curve_parts: PointRegistry<CurveTag> = PointRegistry::with_cell(n, cfg.acc1, tol_belongs);
    // candidates are kept at curve accuracy and merged at tol_dedup at the end
    let mut solutions: PointRegistry<SolutionTag> = PointRegistry::with_cell(n, cfg.acc1, tol_dedup);
    let mut counters = Counters::default();
    let mut trace = Vec::new();
    let mut starting_points = Vec::new();
    let mut next_branch = 0;
    let pool = MeshPool::new(cfg.threads);

    let (zlo, zhi) = split.running_bounds();
    let slices = grid_count(zlo, zhi, cfg.stepz);
    for k in 0..slices {
        let z0 = zlo + k as f64 * cfg.stepz;
        counters.slices += 1;
        let outcomes = pool.solve_all(&split, z0, &mesh, &newton_settings);
        counters.mesh_newton_calls += mesh.len();

        let mut starts: PointRegistry<()> = PointRegistry::new(m, tol_dedup);
        for out in outcomes.iter().filter(|o| o.found) {
            let near_box = out
                .point
                .iter()
                .zip(lower_l.iter().zip(upper_l))
                .all(|(&v, (&lo, &hi))| v >= lo - cfg.stepx && v <= hi + cfg.stepx);
            if !near_box {
                counters.discarded_out_of_box += 1;
                continue;
            }
            starts.append_unique(&out.point, ());
        }
        counters.slice_curve_points += starts.len();
        starting_points.push(starts.len());

        for (v, _) in starts.iter() {
            let mut vz0 = v.to_vec();
            vz0.push(z0);
            if let Some(i) = curve_parts.find_within(&vz0, tol_belongs) {
                counters.skipped_visited += 1;
                // a visited branch may have stepped over this exact root
                if split.fu(&vz0).abs() <= cfg.acc2 {
                    counters.direct_hits += 1;
                    let tag = SolutionTag {
                        slice: z0,
                        branch: curve_parts.tag(i).branch,
                        direction: 0,
                        mechanism: Mechanism::DirectHit,
                    };
                    solutions.append_unique(&vz0, tag);
                }
                continue;
            }
            let branch = BranchInfo {
                id: next_branch,
                slice: z0,
            };
            next_branch += 1;
            counters.branches_followed += 1;
            for direction in [1.0, -1.0] {
                let mut state = SweepState {
                    curve_parts: &mut curve_parts,
                    solutions: &mut solutions,
                    counters: &mut counters,
                    trace: cfg.record_trace.then_some(&mut trace),
                };
                follow_curve(&split, direction * cfg.step.abs(), &vz0, &follow, branch, &mut state);
            }
        }
    }

    let solutions = merge_solutions(sys, &solutions, cfg.acc2, tol_dedup);

    Ok(SolveReport {
        solutions,
        counters,
        starting_points,
        curve_points: curve_parts.len(),
        trace,
        ordering: None,
        wall_seconds: elapsed(),
        config: cfg.clone(),
    })
}

/// Keeps in-box candidates, most accurate first, dropping any within
/// `tol` of one already kept; survivors stay in discovery order.
fn merge_solutions(
    sys: &SystemDefinition,
    candidates: &PointRegistry<SolutionTag>,
    slack: f64,
    tol: f64,
) -> Vec<Solution> {
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, (p, _))| sys.in_box(p, slack))
        .map(|(i, (p, _))| (i, sys.residual_norm(p)))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut kept: PointRegistry<(usize, f64)> = PointRegistry::new(sys.n(), tol);
    for (i, r) in scored {
        kept.append_unique(candidates.point(i), (i, r));
    }
    let mut order: Vec<(usize, f64)> = kept.iter().map(|(_, t)| *t).collect();
    order.sort_by_key(|t| t.0);
    order
        .into_iter()
        .map(|(i, residual)| {
            let tag = candidates.tag(i);
            Solution {
                x: candidates.point(i).to_vec(),
                residual,
                slice: tag.slice,
                branch: tag.branch,
                direction: tag.direction,
                mechanism: tag.mechanism,
            }
        })
        .collect()
}

/// Mesh Newton solves of one slice, optionally spread over a thread pool;
/// results always come back in mesh order.
struct MeshPool {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl MeshPool {
    fn new(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            let pool = (threads > 1)
                .then(|| rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok())
                .flatten();
            MeshPool { pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            if threads > 1 {
                log::warn!("built without thread support; running single-threaded");
            }
            MeshPool {}
        }
    }

    fn solve_all(
        &self,
        split: &SplitSystem,
        z: f64,
        mesh: &crate::geometry::Mesh,
        settings: &NewtonSettings,
    ) -> Vec<NewtonOutcome> {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            let rows: Vec<&[f64]> = mesh.rows().collect();
            return pool.install(|| rows.par_iter().map(|r| split.solve_slice(z, r, settings)).collect());
        }
        let slice = split.at_slice(z);
        mesh.rows()
            .map(|r| crate::numerics::newton(&slice, r, settings))
            .collect()
    }
}

/// Solves `sys` under `cfg.reorder`, reporting solutions and trace points in
/// the caller's variable order.
pub fn solve(sys: &SystemDefinition, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    let n = sys.n();
    if n < 2 {
        return Err(SolveError::TooSmall(n));
    }
    let d = build_dependence_matrix(sys);
    let suggested = reorder::reorder(&d);
    let applied = match cfg.reorder {
        ReorderMode::Auto => suggested.clone(),
        ReorderMode::None => Ordering::identity(n),
        ReorderMode::Rows(i) => {
            check_forced(i, n)?;
            forced_row_swap(n, i - 1)
        }
        ReorderMode::Cols(j) => {
            check_forced(j, n)?;
            forced_column_swap(n, j - 1)
        }
    };
    let report_ordering = OrderingReport {
        mode: cfg.reorder,
        dependence: d.rows(),
        suggestion: suggested.describe(),
        suggested: suggested.clone(),
        applied_description: applied.describe(),
        applied: applied.clone(),
    };
    if !applied.solvable {
        return Err(SolveError::Unsolvable(Box::new(report_ordering)));
    }
    if !suggested.solvable {
        log::warn!("dependence matrix suggests the system cannot be uniquely solved");
    }
    let work = reorder::apply(sys, &applied)?;
    let mut report = locate_curve_parts(&work, cfg)?;
    let unpermute = |y: &[f64]| {
        let mut x = vec![0.0; n];
        for (k, &orig) in applied.columns.iter().enumerate() {
            x[orig] = y[k];
        }
        x
    };
    for s in &mut report.solutions {
        s.x = unpermute(&s.x);
        s.residual = sys.residual_norm(&s.x);
    }
    for t in &mut report.trace {
        t.point = unpermute(&t.point);
    }
    report.ordering = Some(report_ordering);
    Ok(report)
}

fn check_forced(index: usize, n: usize) -> Result<(), ReorderError> {
    if index == 0 || index >= n {
        return Err(ReorderError::IndexOutOfRange {
            index,
            limit: n.saturating_sub(1),
        });
    }
    Ok(())
}

#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
fn stopwatch() -> impl Fn() -> f64 {
    let started = std::time::Instant::now();
    move || started.elapsed().as_secs_f64()
}

/// No clock on bare wasm; timings read zero there.
#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

/// Problem file: variable names, equations in the expression grammar, box
/// and optional solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub variables: Vec<String>,
    pub equations: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub config: Option<SolverConfig>,
}

#[derive(Debug, Error)]
pub enum ProblemFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid system: {0}")]
    System(#[from] SystemError),
}

impl ProblemFile {
    pub fn from_system(sys: &SystemDefinition, config: Option<SolverConfig>) -> Self {
        ProblemFile {
            variables: sys.names.clone(),
            equations: sys.equation_strings(),
            lower: sys.lower.clone(),
            upper: sys.upper.clone(),
            config,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ProblemFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProblemFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn system(&self) -> Result<SystemDefinition, ProblemFileError> {
        Ok(SystemDefinition::parse(
            self.variables.clone(),
            &self.equations,
            self.lower.clone(),
            self.upper.clone(),
        )?)
    }
}

/// Writes the solutions as a JSON array of `{x, residual, slice, branch,
/// mechanism}` objects.
pub fn write_solutions_json<W: Write>(report: &SolveReport, mut out: W) -> io::Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        x: &'a [f64],
        residual: f64,
        slice: f64,
        branch: usize,
        mechanism: Mechanism,
    }
    let rows: Vec<Row> = report
        .solutions
        .iter()
        .map(|s| Row {
            x: &s.x,
            residual: s.residual,
            slice: s.slice,
            branch: s.branch,
            mechanism: s.mechanism,
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &rows)?;
    writeln!(out)
}

/// Writes the recorded trace as CSV: `branch,direction,x1..xn,fu,halvings`.
pub fn write_trace_csv<W: Write>(report: &SolveReport, names: &[String], mut out: W) -> io::Result<()> {
    write!(out, "branch,direction")?;
    for name in names {
        write!(out, ",{name}")?;
    }
    writeln!(out, ",fu,halvings")?;
    for t in &report.trace {
        write!(out, "{},{}", t.branch, t.direction)?;
        for v in &t.point {
            write!(out, ",{v:?}")?;
        }
        writeln!(out, ",{:?},{}", t.fu, t.halvings)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(eqs: &[&str], lo: f64, hi: f64) -> SystemDefinition {
        let n = eqs.len();
        let names = (0..n).map(crate::expr::default_name).collect();
        SystemDefinition::parse(names, eqs, vec![lo; n], vec![hi; n]).unwrap()
    }

    #[test]
    fn constant_followed_equation_has_no_curve() {
        let s = sys(&["1", "x1+x2"], -1.0, 1.0);
        let r = locate_curve_parts(&s, &SolverConfig::default()).unwrap();
        assert!(r.solutions.is_empty());
        assert_eq!(r.counters.branches_followed, 0);
        assert_eq!(r.counters.slices, 3);
    }

    #[test]
    fn linear_system_with_row_swap() {
        let s = sys(&["-x2-1", "-x1-1"], -5.0, 5.0);
        let r = solve(&s, &SolverConfig::default()).unwrap();
        assert_eq!(r.solutions.len(), 1);
        assert!(crate::geometry::max_distance(&r.solutions[0].x, &[-1.0, -1.0]) < 1e-12);
        let ord = r.ordering.unwrap();
        assert_eq!(ord.suggestion, "swap rows 1,2");
        // slices avoid x2 = -1, where the unswapped followed equation vanishes identically
        let cfg = SolverConfig {
            reorder: ReorderMode::None,
            ..SolverConfig::with_steps(2.5, 2.5, 0.1, 0.1)
        };
        assert!(solve(&s, &cfg).unwrap().solutions.is_empty());
    }

    #[test]
    fn unsolvable_only_fails_when_applied() {
        let s = sys(&["x3", "x3+1", "x1+x2+x3"], -1.0, 1.0);
        assert!(matches!(
            solve(&s, &SolverConfig::default()),
            Err(SolveError::Unsolvable(_))
        ));
        let cfg = SolverConfig {
            reorder: ReorderMode::None,
            ..SolverConfig::default()
        };
        assert!(solve(&s, &cfg).is_ok());
    }

    #[test]
    fn forced_index_is_checked() {
        let s = sys(&["x1", "x2"], -1.0, 1.0);
        for mode in [ReorderMode::Rows(2), ReorderMode::Cols(3)] {
            let cfg = SolverConfig {
                reorder: mode,
                ..SolverConfig::default()
            };
            assert!(matches!(solve(&s, &cfg), Err(SolveError::Reorder(_))));
        }
    }

    #[test]
    fn column_swap_reports_original_coordinates() {
        // x2 = x1^2 meets x1 + x2 = 0.5 once in the box, at x1 = (sqrt(3) - 1) / 2
        let s = sys(&["x2-x1^2", "x1+x2-0.5"], -1.0, 1.0);
        let cfg = SolverConfig {
            reorder: ReorderMode::Cols(1),
            ..SolverConfig::default()
        };
        let r = solve(&s, &cfg).unwrap();
        assert_eq!(r.solutions.len(), 1);
        let x = &r.solutions[0].x;
        assert!((x[0] - (3f64.sqrt() - 1.0) / 2.0).abs() < 1e-4, "{x:?}");
        assert!(r.solutions[0].residual <= 1e-4);
    }

    #[test]
    fn problem_file_round_trip() {
        let text = r#"{"variables": ["a", "b"], "equations": ["a-b", "a+b-1"],
                      "lower": [-1, -1], "upper": [1, 1], "config": {"stepx": 0.5}}"#;
        let pf = ProblemFile::from_json(text).unwrap();
        assert_eq!(pf.config.as_ref().unwrap().stepx, 0.5);
        let s = pf.system().unwrap();
        let r = solve(&s, pf.config.as_ref().unwrap()).unwrap();
        assert_eq!(r.solutions.len(), 1);
        assert!(ProblemFile::from_json("{").is_err());
    }

    #[test]
    fn trace_csv_header() {
        let s = sys(&["x1", "x2"], -0.2, 0.2);
        let cfg = SolverConfig {
            record_trace: true,
            ..SolverConfig::default()
        };
        let r = solve(&s, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r, &s.names, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("branch,direction,x1,x2,fu,halvings\n"));
        assert!(text.lines().count() > 2);
    }
}
