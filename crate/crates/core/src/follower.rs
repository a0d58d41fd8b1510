//! Following one branch of the curve `F_l = 0` through slices of the
//! running variable (the last coordinate), watching the sign of the
//! left-out equation `F_u` and pinning its zeros by slice bisection.
//!
//! Points are full `n`-vectors `[v, z]`: leading coordinates `v` and the
//! running coordinate `z`.

use std::cell::RefCell;

use serde::Serialize;

use crate::expr::Expr;
use crate::geometry::{max_distance, PointRegistry};
use crate::numerics::{max_norm, newton, NewtonOutcome, NewtonSettings, SquareSystem};
use crate::system::SystemDefinition;

/// The system split into the followed equations `F_l` (all but the last)
/// and the left-out equation `F_u` (the last).
#[derive(Debug, Clone)]
pub struct SplitSystem {
    n: usize,
    f_l: Vec<Expr>,
    f_u: Expr,
    /// Row-major `(n-1) x (n-1)`: `d F_l[i] / d x_j` for `j < n - 1`.
    j_l: Vec<Expr>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SplitSystem {
    /// Panics if `sys.n() < 2`.
    pub fn new(sys: &SystemDefinition) -> Self {
        let n = sys.n();
        assert!(n >= 2, "curve following needs n >= 2");
        let m = n - 1;
        let j_l = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| sys.jacobian_entry(i, j).clone())
            .collect();
        SplitSystem {
            n,
            f_l: sys.equations[..m].to_vec(),
            f_u: sys.equations[m].clone(),
            j_l,
            lower: sys.lower.clone(),
            upper: sys.upper.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn followed(&self) -> &[Expr] {
        &self.f_l
    }

    pub fn left_out(&self) -> &Expr {
        &self.f_u
    }

    pub fn followed_jacobian(&self) -> &[Expr] {
        &self.j_l
    }

    /// `[lower(n), upper(n)]` of the running variable.
    pub fn running_bounds(&self) -> (f64, f64) {
        (self.lower[self.n - 1], self.upper[self.n - 1])
    }

    pub fn fu(&self, vz: &[f64]) -> f64 {
        self.f_u.eval(vz)
    }

    /// `max |F_l(vz)|`.
    pub fn curve_residual(&self, vz: &[f64]) -> f64 {
        max_norm(&self.f_l.iter().map(|f| f.eval(vz)).collect::<Vec<_>>())
    }

    /// The `(n-1)`-dimensional subsystem with the running variable fixed.
    pub fn at_slice(&self, z: f64) -> Slice<'_> {
        let mut buf = vec![0.0; self.n];
        buf[self.n - 1] = z;
        Slice {
            sys: self,
            z,
            buf: RefCell::new(buf),
        }
    }

    /// Newton on the slice `x_n = z` from `start`.
    pub fn solve_slice(&self, z: f64, start: &[f64], settings: &NewtonSettings) -> NewtonOutcome {
        newton(&self.at_slice(z), start, settings)
    }
}

/// `F_l(., z)` as a square system in the leading coordinates.
pub struct Slice<'a> {
    sys: &'a SplitSystem,
    z: f64,
    buf: RefCell<Vec<f64>>,
}

impl Slice<'_> {
    pub fn z(&self) -> f64 {
        self.z
    }

    fn with_point<R>(&self, x: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
        let mut buf = self.buf.borrow_mut();
        buf[..x.len()].copy_from_slice(x);
        f(&buf)
    }
}

impl SquareSystem for Slice<'_> {
    fn dim(&self) -> usize {
        self.sys.n - 1
    }

    fn residual(&self, x: &[f64], out: &mut [f64]) {
        self.with_point(x, |p| {
            for (o, f) in out.iter_mut().zip(&self.sys.f_l) {
                *o = f.eval(p);
            }
        })
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        self.with_point(x, |p| {
            for (o, j) in out.iter_mut().zip(&self.sys.j_l) {
                *o = j.eval(p);
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowSettings {
    /// Magnitude of the nominal running-variable increment.
    pub step: f64,
    /// Smallest increment magnitude still worth halving.
    pub thresh: f64,
    pub acc1: f64,
    pub acc2: f64,
    /// Newton settings for curve points; `newton.acc` is `acc1`.
    pub newton: NewtonSettings,
    /// Finish each sweep with a clamped step onto the box face.
    pub boundary_clamp: bool,
    pub max_bisections: usize,
}

impl FollowSettings {
    pub fn new(step: f64, thresh: f64, acc1: f64, acc2: f64) -> Self {
        FollowSettings {
            step: step.abs(),
            thresh,
            acc1,
            acc2,
            newton: NewtonSettings::new(acc1),
            boundary_clamp: true,
            max_bisections: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Accepted curve point, or the base point when `done` is false.
    pub point: Vec<f64>,
    pub done: bool,
    pub halvings: usize,
    /// Running-variable increment of the last attempt.
    pub effective_h: f64,
    pub newton_calls: usize,
}

/// Advances from the curve point `vz0` by `step` in the running variable,
/// halving the increment (always from `vz0`) until Newton lands within
/// `|step|` of the base point or the increment drops below `thresh`.
pub fn proceed_one_step(sys: &SplitSystem, step: f64, vz0: &[f64], settings: &FollowSettings) -> StepOutcome {
    advance(sys, step, step, None, vz0, settings)
}

fn advance(
    sys: &SplitSystem,
    step: f64,
    first_h: f64,
    snap_to: Option<f64>,
    vz0: &[f64],
    settings: &FollowSettings,
) -> StepOutcome {
    let m = sys.n - 1;
    let (v0, z0) = (&vz0[..m], vz0[m]);
    let reach = step.abs();
    let mut h = first_h;
    let mut halvings = 0;
    let mut newton_calls = 0;
    loop {
        let z = match snap_to {
            Some(target) if halvings == 0 => target,
            _ => z0 + h,
        };
        let out = sys.solve_slice(z, v0, &settings.newton);
        newton_calls += 1;
        if out.found && max_distance(&out.point, v0) <= reach {
            let mut point = out.point;
            point.push(z);
            return StepOutcome {
                point,
                done: true,
                halvings,
                effective_h: z - z0,
                newton_calls,
            };
        }
        if h.abs() < settings.thresh {
            return StepOutcome {
                point: vz0.to_vec(),
                done: false,
                halvings,
                effective_h: h,
                newton_calls,
            };
        }
        h /= 2.0;
        halvings += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BisectionFailure {
    /// Newton failed at a midpoint slice: the curve is singular in between.
    NewtonFailed,
    /// Neither half keeps the sign change with a non-increasing `|F_u|`.
    NoProgress,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionOutcome {
    pub solution: Option<Vec<f64>>,
    pub iterations: usize,
    /// Bracket width in the running variable before each midpoint solve.
    pub widths: Vec<f64>,
    pub failure: Option<BisectionFailure>,
    pub newton_calls: usize,
}

impl BisectionOutcome {
    pub fn found(&self) -> bool {
        self.solution.is_some()
    }
}

/// Locates a zero of `F_u` on the curve between the curve points `vz0` and
/// `vz1`, whose `F_u` values have opposite signs, by halving the
/// running-variable interval and solving `F_l` at each midpoint slice.
pub fn bisection(sys: &SplitSystem, vz0: &[f64], vz1: &[f64], settings: &FollowSettings) -> BisectionOutcome {
    let m = sys.n - 1;
    let mut a = vz0.to_vec();
    let mut b = vz1.to_vec();
    let mut ga = sys.fu(&a);
    let mut gb = sys.fu(&b);
    let mut out = BisectionOutcome {
        solution: None,
        iterations: 0,
        widths: Vec::new(),
        failure: None,
        newton_calls: 0,
    };
    // midpoint slice, Newton started from the chord between the brackets
    let midpoint = |a: &[f64], b: &[f64], out: &mut BisectionOutcome| -> Option<Vec<f64>> {
        out.widths.push((b[m] - a[m]).abs());
        out.iterations += 1;
        out.newton_calls += 1;
        let zm = 0.5 * (a[m] + b[m]);
        let start: Vec<f64> = a[..m].iter().zip(&b[..m]).map(|(p, q)| 0.5 * (p + q)).collect();
        let res = sys.solve_slice(zm, &start, &settings.newton);
        res.found.then(|| {
            let mut p = res.point;
            p.push(zm);
            p
        })
    };
    let Some(mut vm) = midpoint(&a, &b, &mut out) else {
        out.failure = Some(BisectionFailure::NewtonFailed);
        return out;
    };
    let mut gm = sys.fu(&vm);
    while !(gm.abs() <= settings.acc2) {
        if out.iterations >= settings.max_bisections {
            out.failure = Some(BisectionFailure::IterationLimit);
            return out;
        }
        if ga * gm < 0.0 && gm.abs() <= gb.abs() {
            b = vm;
            gb = gm;
        } else if gm * gb < 0.0 && gm.abs() <= ga.abs() {
            a = vm;
            ga = gm;
        } else {
            out.failure = Some(BisectionFailure::NoProgress);
            return out;
        }
        match midpoint(&a, &b, &mut out) {
            Some(p) => vm = p,
            None => {
                out.failure = Some(BisectionFailure::NewtonFailed);
                return out;
            }
        }
        gm = sys.fu(&vm);
    }
    out.solution = Some(vm);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    DirectHit,
    Bisection,
}

/// Where a recorded solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolutionTag {
    pub slice: f64,
    pub branch: usize,
    pub direction: i8,
    pub mechanism: Mechanism,
}

/// Provenance of a visited curve point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CurveTag {
    pub branch: usize,
    pub direction: i8,
}

/// One accepted point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub branch: usize,
    pub direction: i8,
    pub point: Vec<f64>,
    pub fu: f64,
    /// Halvings needed to reach this point (0 for a sweep's first point).
    pub halvings: usize,
    /// Whether this point was reached by a boundary-clamped step.
    pub clamped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Counters {
    pub slices: usize,
    pub mesh_newton_calls: usize,
    pub slice_curve_points: usize,
    pub discarded_out_of_box: usize,
    pub skipped_visited: usize,
    pub branches_followed: usize,
    pub sweeps: usize,
    pub steps: usize,
    pub step_newton_calls: usize,
    pub halvings: usize,
    pub clamped_steps: usize,
    pub direct_hits: usize,
    pub bisection_calls: usize,
    pub bisection_failures: usize,
    /// Sign changes of `F_u` across a step whose far end is already within
    /// `acc2`; a second root inside such an interval would go unbracketed.
    pub masked_sign_flips: usize,
}

/// Mutable state shared by all sweeps of one run.
pub struct SweepState<'a> {
    pub curve_parts: &'a mut PointRegistry<CurveTag>,
    pub solutions: &'a mut PointRegistry<SolutionTag>,
    pub counters: &'a mut Counters,
    pub trace: Option<&'a mut Vec<TracePoint>>,
}

/// Identifies the sweep being run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchInfo {
    pub id: usize,
    pub slice: f64,
}

/// Sweeps one branch from the curve point `start` in the direction of
/// `step`'s sign until the branch ends or leaves the running-variable range,
/// recording visited points and solutions into `state`.
pub fn follow_curve(
    sys: &SplitSystem,
    step: f64,
    start: &[f64],
    settings: &FollowSettings,
    branch: BranchInfo,
    state: &mut SweepState<'_>,
) {
    let m = sys.n - 1;
    let (lo, hi) = sys.running_bounds();
    let direction: i8 = if step < 0.0 { -1 } else { 1 };
    let step = direction as f64 * settings.step;
    let tag = CurveTag {
        branch: branch.id,
        direction,
    };
    let solution_tag = |mechanism| SolutionTag {
        slice: branch.slice,
        branch: branch.id,
        direction,
        mechanism,
    };
    state.counters.sweeps += 1;

    let mut vz0 = start.to_vec();
    let mut u0 = sys.fu(&vz0);
    let mut halvings = 0;
    let mut clamped = false;
    while lo <= vz0[m] && vz0[m] <= hi {
        state.curve_parts.append_unique(&vz0, tag);
        if let Some(trace) = state.trace.as_deref_mut() {
            trace.push(TracePoint {
                branch: branch.id,
                direction,
                point: vz0.clone(),
                fu: u0,
                halvings,
                clamped,
            });
        }
        if u0.abs() <= settings.acc2 {
            state.counters.direct_hits += 1;
            state.solutions.append_unique(&vz0, solution_tag(Mechanism::DirectHit));
        }
        let next = step_within_box(sys, step, &vz0, settings, state.counters);
        let Some(next) = next else { break };
        halvings = next.halvings;
        clamped = next.clamped;
        let vz1 = next.point;
        let u1 = sys.fu(&vz1);
        if u0.abs() > settings.acc2 && u0 * u1 < 0.0 {
            if u1.abs() > settings.acc2 {
                state.counters.bisection_calls += 1;
                let res = bisection(sys, &vz0, &vz1, settings);
                state.counters.step_newton_calls += res.newton_calls;
                match res.solution {
                    Some(sol) => {
                        state.solutions.append_unique(&sol, solution_tag(Mechanism::Bisection));
                    }
                    None => {
                        state.counters.bisection_failures += 1;
                        log::debug!(
                            "bisection failed ({:?}) on branch {} between z={} and z={}",
                            res.failure,
                            branch.id,
                            vz0[m],
                            vz1[m]
                        );
                    }
                }
            } else {
                state.counters.masked_sign_flips += 1;
                log::debug!(
                    "sign change ending on a near-root at z={} (branch {})",
                    vz1[m],
                    branch.id
                );
            }
        }
        vz0 = vz1;
        u0 = u1;
    }
}

struct NextPoint {
    point: Vec<f64>,
    halvings: usize,
    clamped: bool,
}

/// One `proceed_one_step`, clamped onto the box face when enabled.
fn step_within_box(
    sys: &SplitSystem,
    step: f64,
    vz0: &[f64],
    settings: &FollowSettings,
    counters: &mut Counters,
) -> Option<NextPoint> {
    let m = sys.n - 1;
    let (lo, hi) = sys.running_bounds();
    let z0 = vz0[m];
    let (first_h, snap) = if settings.boundary_clamp {
        let face = if step > 0.0 { hi } else { lo };
        let remaining = (face - z0).abs();
        if remaining <= 1e-12 * (1.0 + face.abs()) {
            return None;
        }
        if remaining < step.abs() {
            (face - z0, Some(face))
        } else {
            (step, None)
        }
    } else {
        (step, None)
    };
    let out = advance(sys, step, first_h, snap, vz0, settings);
    counters.step_newton_calls += out.newton_calls;
    counters.halvings += out.halvings;
    if !out.done {
        return None;
    }
    counters.steps += 1;
    let clamped = snap.is_some() && out.halvings == 0;
    if clamped {
        counters.clamped_steps += 1;
    }
    Some(NextPoint {
        point: out.point,
        halvings: out.halvings,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(eqs: &[&str], lower: Vec<f64>, upper: Vec<f64>) -> SplitSystem {
        let n = eqs.len();
        let names = (0..n).map(crate::expr::default_name).collect();
        SplitSystem::new(&SystemDefinition::parse(names, eqs, lower, upper).unwrap())
    }

    fn settings(step: f64, thresh: f64) -> FollowSettings {
        FollowSettings::new(step, thresh, 1e-10, 1e-4)
    }

    #[test]
    fn straight_line_step() {
        let sys = split(&["-x1-1", "-x2-1"], vec![-5.0; 2], vec![5.0; 2]);
        let out = proceed_one_step(&sys, 0.1, &[-1.0, 0.0], &settings(0.1, 0.1));
        assert!(out.done);
        assert_eq!(out.halvings, 0);
        assert_eq!(out.point, vec![-1.0, 0.1]);
    }

    #[test]
    fn step_past_the_top_of_a_circle_fails_after_halving() {
        // x2 = 0.99 on the unit circle; x2 = 1.09 and x2 = 1.04 have no real x1
        let sys = split(&["x1^2+x2^2-1", "x1"], vec![-2.0; 2], vec![2.0; 2]);
        let x1 = (1.0f64 - 0.99 * 0.99).sqrt();
        let out = proceed_one_step(&sys, 0.1, &[x1, 0.99], &settings(0.1, 0.1));
        assert!(!out.done);
        assert_eq!(out.halvings, 1);
        assert_eq!(out.effective_h, 0.05);
        assert_eq!(out.newton_calls, 2);
        assert_eq!(out.point, vec![x1, 0.99]);
    }

    #[test]
    fn far_newton_landing_is_rejected() {
        // from (0.436, -0.9) the next slice point is 0.3 away in x1
        let sys = split(&["x1^2+x2^2-1", "x1"], vec![-2.0; 2], vec![2.0; 2]);
        let x1 = (1.0f64 - 0.81).sqrt();
        let out = proceed_one_step(&sys, -0.1, &[x1, -0.9], &settings(0.1, 0.1));
        assert!(!out.done);
    }

    #[test]
    fn circle_sweep_finds_top_crossing_by_bisection() {
        // follow the right half of the unit circle upward from (1, 0);
        // F_u = x1 - 0.5 changes sign at x2 = sqrt(3)/2
        let sys = split(&["x1^2+x2^2-1", "x1-0.5"], vec![-2.0; 2], vec![2.0; 2]);
        let s = settings(0.1, 0.01);
        let mut parts = PointRegistry::with_cell(2, 1e-10, 0.1);
        let mut sols = PointRegistry::new(2, 1e-3);
        let mut counters = Counters::default();
        let mut trace = Vec::new();
        let mut state = SweepState {
            curve_parts: &mut parts,
            solutions: &mut sols,
            counters: &mut counters,
            trace: Some(&mut trace),
        };
        follow_curve(&sys, 0.1, &[1.0, 0.0], &s, BranchInfo { id: 0, slice: 0.0 }, &mut state);
        assert_eq!(sols.len(), 1);
        let (p, tag) = sols.iter().next().unwrap();
        assert!(
            (p[0] - 0.5).abs() < 1e-4 && (p[1] - 0.75f64.sqrt()).abs() < 1e-3,
            "{p:?}"
        );
        assert_eq!(tag.mechanism, Mechanism::Bisection);
        assert!(counters.halvings > 0, "turning point should force halvings");
        for w in trace.windows(2) {
            assert!((w[1].point[1] - w[0].point[1]).abs() <= 0.1 + 1e-12);
            assert!(max_distance(&w[1].point[..1], &w[0].point[..1]) <= 0.1);
        }
    }

    #[test]
    fn bisection_on_diagonal_line() {
        let sys = split(&["x1-x2", "x1^2-1"], vec![-2.0; 2], vec![2.0; 2]);
        let s = settings(0.1, 0.1);
        let out = bisection(&sys, &[0.9, 0.9], &[1.1, 1.1], &s);
        let sol = out.solution.expect("root at (1,1)");
        assert!((sol[0] - 1.0).abs() <= 1e-4 && (sol[1] - 1.0).abs() <= 1e-4);
        assert!(sys.fu(&sol).abs() <= 1e-4);
        // bracket halves every iteration
        for (k, w) in out.widths.iter().enumerate() {
            assert!(*w <= 0.2 / 2f64.powi(k as i32) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn bisection_symmetric_linear_case_hits_midpoint() {
        // F_u = x2 along the line x1 = 0; endpoints at x2 = -0.3 and 0.3
        let sys = split(&["x1", "x2"], vec![-1.0; 2], vec![1.0; 2]);
        let out = bisection(&sys, &[0.0, -0.3], &[0.0, 0.3], &settings(0.1, 0.1));
        assert_eq!(out.iterations, 1);
        assert_eq!(out.solution, Some(vec![0.0, 0.0]));
    }

    #[test]
    fn bisection_reports_singular_midpoint() {
        // x1^2 + (x2 - 0.5)^2 = 0 only at x2 = 0.5: no curve point between the slices
        let sys = split(&["x1^2+(x2-0.5)^2", "x2-0.52"], vec![-1.0; 2], vec![1.0; 2]);
        let s = FollowSettings::new(0.1, 0.1, 1e-10, 1e-12);
        let out = bisection(&sys, &[0.0, 0.5], &[0.0, 0.6], &s);
        assert!(!out.found());
        assert_eq!(out.failure, Some(BisectionFailure::NewtonFailed));
    }

    #[test]
    fn bisection_refuses_growing_residual() {
        // F_u = 1/(x2 - 0.05) changes sign across a pole, not a root
        let sys = split(&["x1", "1/(x2-0.05)"], vec![-1.0; 2], vec![1.0; 2]);
        let out = bisection(&sys, &[0.0, 0.0], &[0.0, 0.1], &settings(0.1, 0.1));
        assert_eq!(out.failure, Some(BisectionFailure::NoProgress));
    }

    #[test]
    fn direct_hit_start_is_recorded_once() {
        let sys = split(&["x1", "x2"], vec![-1.0; 2], vec![1.0; 2]);
        let s = settings(0.1, 0.1);
        let mut parts = PointRegistry::with_cell(2, 1e-10, 0.1);
        let mut sols = PointRegistry::new(2, 1e-3);
        let mut counters = Counters::default();
        for dir in [0.1, -0.1] {
            let mut state = SweepState {
                curve_parts: &mut parts,
                solutions: &mut sols,
                counters: &mut counters,
                trace: None,
            };
            follow_curve(&sys, dir, &[0.0, 0.0], &s, BranchInfo { id: 0, slice: 0.0 }, &mut state);
        }
        assert_eq!(sols.len(), 1);
        assert_eq!(sols.tag(0).mechanism, Mechanism::DirectHit);
        assert_eq!(counters.direct_hits, 2);
        // both sweeps reach the box faces exactly
        assert!(parts.belongs(&[0.0, 1.0], 1e-12));
        assert!(parts.belongs(&[0.0, -1.0], 1e-12));
    }

    #[test]
    fn boundary_clamp_catches_root_in_last_partial_interval() {
        // root at x2 = 0.97; the slice grid from 0 in steps of 0.1 stops at 0.9
        let sys = split(&["x1", "x2-0.97"], vec![-1.0; 2], vec![1.0; 2]);
        let run = |clamp: bool| {
            let mut s = settings(0.1, 0.1);
            s.boundary_clamp = clamp;
            let mut parts = PointRegistry::with_cell(2, 1e-10, 0.1);
            let mut sols = PointRegistry::new(2, 1e-3);
            let mut counters = Counters::default();
            let mut state = SweepState {
                curve_parts: &mut parts,
                solutions: &mut sols,
                counters: &mut counters,
                trace: None,
            };
            follow_curve(&sys, 0.1, &[0.0, 0.0], &s, BranchInfo { id: 0, slice: 0.0 }, &mut state);
            sols.iter().map(|(p, _)| p.to_vec()).collect::<Vec<_>>()
        };
        let clamped = run(true);
        assert_eq!(clamped.len(), 1);
        assert!((clamped[0][1] - 0.97).abs() < 1e-4);
        // the literal sweep steps outside the box; the bracket still holds the root
        let literal = run(false);
        assert_eq!(literal.len(), 1);
    }
}
