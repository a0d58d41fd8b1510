//! Built-in test problems and a brute-force multi-start oracle.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::config::{ReorderMode, SolverConfig};
use crate::expr::{pow, unary, Expr, UnaryOp};
use crate::geometry::{rmesh, GeometryError, PointRegistry};
use crate::numerics::{newton, NewtonSettings};
use crate::system::SystemDefinition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ProblemId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    T10,
    T11,
    Ex2,
    Ex4,
}

impl ProblemId {
    pub const ALL: [ProblemId; 13] = [
        ProblemId::T1,
        ProblemId::T2,
        ProblemId::T3,
        ProblemId::T4,
        ProblemId::T5,
        ProblemId::T6,
        ProblemId::T7,
        ProblemId::T8,
        ProblemId::T9,
        ProblemId::T10,
        ProblemId::T11,
        ProblemId::Ex2,
        ProblemId::Ex4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::T1 => "T1",
            ProblemId::T2 => "T2",
            ProblemId::T3 => "T3",
            ProblemId::T4 => "T4",
            ProblemId::T5 => "T5",
            ProblemId::T6 => "T6",
            ProblemId::T7 => "T7",
            ProblemId::T8 => "T8",
            ProblemId::T9 => "T9",
            ProblemId::T10 => "T10",
            ProblemId::T11 => "T11",
            ProblemId::Ex2 => "EX2",
            ProblemId::Ex4 => "EX4",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        ProblemId::ALL
            .into_iter()
            .find(|id| id.name() == up)
            .ok_or_else(|| CorpusError::UnknownProblem(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("{id} is not defined for n = {n}")]
    UnsupportedDimension { id: ProblemId, n: usize },
    #[error("robot kinematics constants not found (set CURVETRACE_T3_CONSTANTS or provide ./t3_constants)")]
    MissingConstants,
    #[error("bad constants file {path}: {msg}")]
    BadConstants { path: String, msg: String },
    #[error("oracle is limited to n <= 3, got n = {0}")]
    OracleTooLarge(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Problem metadata: box, reference solution count and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub id: ProblemId,
    pub title: &'static str,
    pub default_n: usize,
    pub variable_n: bool,
    /// Real solutions in the default box (`None`: a continuum).
    pub known_count: Option<usize>,
    /// Expected ordering suggestion, in report wording.
    pub suggestion: &'static str,
    /// Published step sizes where they exist, otherwise our own choice.
    pub recommended: SolverConfig,
    /// Finer settings that reach every root where `recommended` does not.
    pub refined: Option<SolverConfig>,
}

pub fn spec(id: ProblemId) -> ProblemSpec {
    use ProblemId::*;
    let cfg = SolverConfig::with_steps;
    let (title, default_n, variable_n, known_count, suggestion, recommended, refined) = match id {
        T1 => (
            "Broyden tridiagonal",
            10,
            true,
            Some(2),
            "no reord.",
            cfg(6.0, 6.0, 0.1, 0.1),
            None,
        ),
        T2 => (
            "Brown almost-linear",
            9,
            true,
            Some(3),
            "no reord.",
            cfg(40.0, 40.0, 0.1, 0.1),
            None,
        ),
        // the slices x5 = -1, 1 of the swapped order force x6 = 0 and carry no curve
        T3 => (
            "Robot kinematics",
            8,
            false,
            Some(16),
            "swap x5,x8",
            SolverConfig {
                reorder: ReorderMode::None,
                ..cfg(2.0, 2.0, 0.1, 0.1)
            },
            Some(cfg(2.0, 0.5, 0.1, 1e-4)),
        ),
        T4 => (
            "Discrete integral equation",
            7,
            true,
            Some(1),
            "no reord.",
            cfg(10.0, 10.0, 0.1, 0.1),
            None,
        ),
        // acc2 = 1e-4 admits whole runs of curve points around each root
        T5 => (
            "Biggs EXP6",
            6,
            false,
            Some(6),
            "swap x1,x6",
            SolverConfig {
                acc2: 1e-8,
                tol_dedup: Some(1e-3),
                ..cfg(12.0, 3.0, 0.1, 0.01)
            },
            None,
        ),
        T6 => (
            "Chebyquad",
            5,
            false,
            Some(120),
            "no reord.",
            cfg(0.25, 0.005, 0.005, 1e-3),
            None,
        ),
        T7 => (
            "System of quadratics",
            4,
            true,
            Some(2),
            "swap x1,x4",
            cfg(2.0, 2.0, 0.1, 0.01),
            None,
        ),
        T8 => (
            "Box three-dimensional",
            3,
            false,
            None,
            "swap x1,x3",
            SolverConfig {
                acc1: 1e-10,
                acc2: 1e-10,
                tol_dedup: Some(1e-6),
                ..cfg(1.0, 1.0, 0.1, 0.1)
            },
            None,
        ),
        T9 => (
            "Linear function",
            2,
            false,
            Some(1),
            "swap rows 1,2",
            cfg(2.5, 2.5, 0.1, 0.1),
            None,
        ),
        T10 => (
            "Two-dimensional problem 1",
            2,
            false,
            Some(12),
            "no reord.",
            cfg(0.7, 0.7, 0.1, 0.01),
            None,
        ),
        T11 => (
            "Two-dimensional problem 2",
            2,
            false,
            Some(20),
            "no reord.",
            cfg(0.6, 1.4, 0.02, 0.02),
            Some(cfg(0.6, 1.4, 0.005, 1e-4)),
        ),
        Ex2 => (
            "Trigonometric",
            3,
            false,
            Some(54),
            "no reord.",
            cfg(1.0, 1.0, 0.1, 0.1),
            None,
        ),
        // tangential roots at x1 = 0 are only met head-on, within about sqrt(acc2)
        Ex4 => (
            "sin/tan ellipses",
            2,
            false,
            Some(27),
            "no reord.",
            cfg(0.5, 0.5, 0.1, 0.1),
            Some(SolverConfig {
                tol_dedup: Some(0.01),
                ..cfg(0.5, 0.5, 0.1, 1e-8)
            }),
        ),
    };
    ProblemSpec {
        id,
        title,
        default_n,
        variable_n,
        known_count,
        suggestion,
        recommended,
        refined,
    }
}

fn x(i: usize) -> Expr {
    Expr::Var(i)
}

fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn sq(e: Expr) -> Expr {
    pow(e, c(2.0))
}

fn cube(e: Expr) -> Expr {
    pow(e, c(3.0))
}

fn f(op: UnaryOp, e: Expr) -> Expr {
    unary(op, e)
}

fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
    terms.into_iter().reduce(|a, b| a + b).unwrap_or(c(0.0))
}

fn product(terms: impl IntoIterator<Item = Expr>) -> Expr {
    terms.into_iter().reduce(|a, b| a * b).unwrap_or(c(1.0))
}

fn cube_box(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    (vec![lo; n], vec![hi; n])
}

/// Builds problem `id` with dimension `n` (default dimension if `None`)
/// over its reference box.
pub fn generate(id: ProblemId, n: Option<usize>) -> Result<SystemDefinition, CorpusError> {
    let s = spec(id);
    let n = n.unwrap_or(s.default_n);
    let unsupported = CorpusError::UnsupportedDimension { id, n };
    if n < 2 || (!s.variable_n && n != s.default_n) {
        return Err(unsupported);
    }
    let (eqs, (lower, upper)) = match id {
        ProblemId::T1 => (broyden_tridiagonal(n), cube_box(n, -3.0, 3.0)),
        ProblemId::T2 => (brown_almost_linear(n), cube_box(n, -20.0, 20.0)),
        ProblemId::T3 => (robot_kinematics(&load_t3_constants()?), cube_box(8, -1.0, 1.0)),
        ProblemId::T4 => (discrete_integral(n), cube_box(n, -5.0, 5.0)),
        ProblemId::T5 => (biggs_exp6(), cube_box(6, -12.0, 12.0)),
        ProblemId::T6 => (chebyquad(n), cube_box(n, 0.0, 1.0)),
        ProblemId::T7 => (quadratics(n), cube_box(n, -1.0, 1.0)),
        ProblemId::T8 => (box3d(), (vec![0.0, 0.0, -2.0], vec![11.0, 11.0, 2.0])),
        ProblemId::T9 => (vec![-x(1) - 1.0, -x(0) - 1.0], cube_box(2, -5.0, 5.0)),
        ProblemId::T10 => (planar_problem_1(), (vec![-1.6, -1.04], vec![1.6, 1.04])),
        ProblemId::T11 => (planar_problem_2(), (vec![-3.1, 0.11], vec![3.8, 3.1])),
        ProblemId::Ex2 => (trigonometric(n), cube_box(n, -10.0, 10.0)),
        ProblemId::Ex4 => (sin_tan(), cube_box(2, -2.0, 2.0)),
    };
    Ok(SystemDefinition::from_exprs(eqs, lower, upper).expect("corpus systems are well formed"))
}

fn broyden_tridiagonal(n: usize) -> Vec<Expr> {
    (0..n)
        .map(|i| {
            let mut e = (3.0 - 2.0 * x(i)) * x(i) + 1.0;
            if i > 0 {
                e = e - x(i - 1);
            }
            if i + 1 < n {
                e = e - 2.0 * x(i + 1);
            }
            e
        })
        .collect()
}

fn brown_almost_linear(n: usize) -> Vec<Expr> {
    let total = sum((0..n).map(x));
    let mut eqs: Vec<Expr> = (0..n - 1).map(|i| x(i) + total.clone() - (n as f64 + 1.0)).collect();
    eqs.push(product((0..n).map(x)) - 1.0);
    eqs
}

fn robot_kinematics(a: &[f64; 19]) -> Vec<Expr> {
    let a = |k: usize| c(a[k - 1]);
    vec![
        a(1) * x(0) * x(2) + a(2) * x(1) * x(2) + a(3) * x(0) + a(4) * x(1) + a(5) * x(3) + a(6) * x(6) + a(7),
        a(8) * x(0) * x(2) + a(9) * x(1) * x(2) + a(10) * x(0) + a(11) * x(1) + a(12) * x(3) + a(13),
        a(14) * x(5) * x(7) + a(15) * x(0) + a(16) * x(1),
        a(17) * x(0) + a(18) * x(1) + a(19),
        sq(x(0)) + sq(x(1)) - 1.0,
        sq(x(2)) + sq(x(3)) - 1.0,
        sq(x(4)) + sq(x(5)) - 1.0,
        sq(x(6)) + sq(x(7)) - 1.0,
    ]
}

fn discrete_integral(n: usize) -> Vec<Expr> {
    let h = 1.0 / (n as f64 + 1.0);
    let t = |j: usize| (j + 1) as f64 * h;
    let term = |j: usize| cube(x(j) + (t(j) + 1.0));
    (0..n)
        .map(|i| {
            let left = sum((0..=i).map(|j| t(j) * term(j)));
            let right = sum((i + 1..n).map(|j| (1.0 - t(j)) * term(j)));
            let mut inner = (1.0 - t(i)) * left;
            if i + 1 < n {
                inner = inner + t(i) * right;
            }
            x(i) + (h / 2.0) * inner
        })
        .collect()
}

fn biggs_exp6() -> Vec<Expr> {
    let ex = |t: f64, v: usize| f(UnaryOp::Exp, (-t) * x(v));
    (1..=6)
        .map(|i| {
            let t = 0.1 * i as f64;
            let y = (-t).exp() - 5.0 * (-10.0 * t).exp() + 3.0 * (-4.0 * t).exp();
            x(2) * ex(t, 0) - x(3) * ex(t, 1) + x(5) * ex(t, 4) - y
        })
        .collect()
}

/// Shifted Chebyshev polynomials `T_0..=T_k` on `[0, 1]` in the variable `v`.
fn shifted_chebyshev(v: Expr, k: usize) -> Vec<Expr> {
    let y = 2.0 * v - 1.0;
    let mut t = vec![c(1.0), y.clone()];
    while t.len() <= k {
        let m = t.len();
        let next = 2.0 * y.clone() * t[m - 1].clone() - t[m - 2].clone();
        t.push(next);
    }
    t.truncate(k + 1);
    t
}

fn chebyquad(n: usize) -> Vec<Expr> {
    let polys: Vec<Vec<Expr>> = (0..n).map(|j| shifted_chebyshev(x(j), n)).collect();
    (1..=n)
        .map(|i| {
            let mean = sum(polys.iter().map(|p| p[i].clone())) / n as f64;
            if i % 2 == 0 {
                mean + 1.0 / ((i * i) as f64 - 1.0)
            } else {
                mean
            }
        })
        .collect()
}

fn quadratics(n: usize) -> Vec<Expr> {
    (0..n).map(|i| sq(x(i) - 0.1) + x((i + 1) % n) - 0.1).collect()
}

fn box3d() -> Vec<Expr> {
    (1..=3)
        .map(|i| {
            let t = 0.1 * i as f64;
            f(UnaryOp::Exp, (-t) * x(0)) - f(UnaryOp::Exp, (-t) * x(1)) - ((-t).exp() - (-10.0 * t).exp()) * x(2)
        })
        .collect()
}

fn planar_problem_1() -> Vec<Expr> {
    let f1 = (x(1) - 1.0 / (3.0 * x(0))) * (x(1) + f(UnaryOp::Atan, x(0)));
    let f2 = (sq(x(1)) - 1.0 / sq(1.0 + sq(x(0)))) * f(UnaryOp::Sin, 1.0 / (0.07 + sq(x(0)) + sq(x(1))));
    vec![f1, f2]
}

fn planar_problem_2() -> Vec<Expr> {
    let r2 = sq(x(0)) + sq(x(1));
    let r = 1.0 + r2.clone();
    let f1 = f(UnaryOp::Sin, r.clone())
        - f(UnaryOp::Cos, r.clone())
            * f(UnaryOp::Atan, 1.0 + sq(x(0)) + 2.0 * sq(x(1)))
            * f(UnaryOp::Exp, r2 / r.clone());
    let inner = (x(0) - x(1)) / (1.0 + f(UnaryOp::Abs, x(0)) + f(UnaryOp::Abs, x(1)));
    let f2 = sq(x(0)) * f(UnaryOp::Exp, (sq(x(0)) - sq(x(1))) / r)
        - f(
            UnaryOp::Sqrt,
            f(UnaryOp::Abs, 3.0 * sq(x(0)) - 2.0 * f(UnaryOp::Exp, inner)),
        );
    vec![f1, f2]
}

fn trigonometric(n: usize) -> Vec<Expr> {
    let cos_sum = sum((0..n).map(|j| f(UnaryOp::Cos, x(j))));
    (0..n)
        .map(|i| {
            let k = (i + 1) as f64;
            n as f64 - cos_sum.clone() + k * (1.0 - f(UnaryOp::Cos, x(i))) - f(UnaryOp::Sin, x(i))
        })
        .collect()
}

fn sin_tan() -> Vec<Expr> {
    vec![
        f(UnaryOp::Sin, sq(x(0)) + 2.0 * sq(x(1))),
        f(UnaryOp::Tan, sq(x(0)) - 2.0 * sq(x(1))),
    ]
}

/// Closed-form solutions listed for a problem at dimension `n`, where known.
/// For a continuum (T8) only the isolated points are returned.
pub fn known_solutions(id: ProblemId, n: Option<usize>) -> Vec<Vec<f64>> {
    let n = n.unwrap_or(spec(id).default_n);
    match id {
        ProblemId::T2 if n == 9 => [1.0, 0.974543355846, -0.7052133225]
            .into_iter()
            .map(|a: f64| {
                let mut p = vec![a; 9];
                p[8] = a.powi(-8);
                p
            })
            .collect(),
        ProblemId::T3 => load_t3_constants()
            .map(|a| robot_kinematics_roots(&a))
            .unwrap_or_default(),
        ProblemId::T6 if n == 5 => permutations(&[0.0838, 0.3127, 0.5, 0.6873, 0.9162]),
        ProblemId::T7 => vec![vec![0.1; n]],
        ProblemId::T8 => vec![vec![1.0, 10.0, 1.0], vec![10.0, 1.0, -1.0]],
        ProblemId::T9 => vec![vec![-1.0, -1.0]],
        ProblemId::Ex2 => vec![vec![0.0; n]],
        ProblemId::Ex4 => vec![vec![0.0, 0.0]],
        _ => Vec::new(),
    }
}

/// Real roots of the robot kinematics system by elimination: f4 and f5 fix
/// (x1, x2), f2 and f6 then fix (x3, x4), f1 gives x7, f8 gives x8, f3 gives
/// x6 and f7 gives x5.
pub fn robot_kinematics_roots(a: &[f64; 19]) -> Vec<Vec<f64>> {
    let a = |k: usize| a[k - 1];
    let mut out = Vec::new();
    for (x1, x2) in unit_circle_meets_line(a(17), a(18), a(19)) {
        let line = (a(8) * x1 + a(9) * x2, a(12), a(10) * x1 + a(11) * x2 + a(13));
        for (x3, x4) in unit_circle_meets_line(line.0, line.1, line.2) {
            let x7 = -(a(1) * x1 * x3 + a(2) * x2 * x3 + a(3) * x1 + a(4) * x2 + a(5) * x4 + a(7)) / a(6);
            if x7.abs() > 1.0 {
                continue;
            }
            let c8 = (1.0 - x7 * x7).sqrt();
            for x8 in [c8, -c8] {
                let x6 = -(a(15) * x1 + a(16) * x2) / (a(14) * x8);
                if x6.abs() > 1.0 {
                    continue;
                }
                let c5 = (1.0 - x6 * x6).sqrt();
                for x5 in [c5, -c5] {
                    out.push(vec![x1, x2, x3, x4, x5, x6, x7, x8]);
                }
            }
        }
    }
    out
}

/// Points of `x^2 + y^2 = 1` on the line `p x + q y + r = 0`.
fn unit_circle_meets_line(p: f64, q: f64, r: f64) -> Vec<(f64, f64)> {
    let norm = p.hypot(q);
    let d = -r / norm;
    if d.abs() > 1.0 {
        return Vec::new();
    }
    let (ux, uy) = (p / norm, q / norm);
    let t = (1.0 - d * d).sqrt();
    vec![(d * ux - t * uy, d * uy + t * ux), (d * ux + t * uy, d * uy - t * ux)]
}

/// All orderings of `items`, in lexicographic order of positions.
pub fn permutations(items: &[f64]) -> Vec<Vec<f64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

pub const T3_CONSTANTS_ENV: &str = "CURVETRACE_T3_CONSTANTS";

/// Location of the robot kinematics constants: `$CURVETRACE_T3_CONSTANTS`,
/// then `./t3_constants`, then the copy shipped with the crate.
pub fn find_t3_constants() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os(T3_CONSTANTS_ENV) {
        return Some(PathBuf::from(p)).filter(|p| p.is_file());
    }
    [
        PathBuf::from("t3_constants"),
        Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("t3_constants"),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

pub fn load_t3_constants() -> Result<[f64; 19], CorpusError> {
    let path = find_t3_constants().ok_or(CorpusError::MissingConstants)?;
    let text = std::fs::read_to_string(&path).map_err(|e| CorpusError::BadConstants {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_t3_constants(&text).map_err(|msg| CorpusError::BadConstants {
        path: path.display().to_string(),
        msg,
    })
}

/// Parses `aK = value` lines (K = 1..19); `#` starts a comment.
pub fn parse_t3_constants(text: &str) -> Result<[f64; 19], String> {
    let mut values = [None; 19];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| format!("line {}: {m}", lineno + 1);
        let (label, value) = line
            .split_once('=')
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| err("expected `aK = value`"))?;
        let k: usize = label
            .trim()
            .trim_start_matches(['a', 'A'])
            .parse()
            .map_err(|_| err("bad label"))?;
        if !(1..=19).contains(&k) {
            return Err(err("label out of range a1..a19"));
        }
        let v: f64 = value.trim().parse().map_err(|_| err("bad number"))?;
        if values[k - 1].replace(v).is_some() {
            return Err(err("duplicate label"));
        }
    }
    let mut out = [0.0; 19];
    for (k, v) in values.iter().enumerate() {
        out[k] = v.ok_or_else(|| format!("missing a{}", k + 1))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub grid_step: f64,
    /// Solutions closer than `10 * acc` are merged.
    pub acc: f64,
    /// Residual target of each Newton run.
    pub newton_acc: f64,
    pub max_iter: usize,
}

impl OracleSettings {
    pub fn new(grid_step: f64, acc: f64) -> Self {
        OracleSettings {
            grid_step,
            acc,
            newton_acc: 1e-12,
            max_iter: 100,
        }
    }
}

/// Full-system Newton from every node of a grid over the box; results in
/// the box are sorted and merged at `10 * acc`.
pub fn oracle_solve(sys: &SystemDefinition, settings: &OracleSettings) -> Result<Vec<Vec<f64>>, CorpusError> {
    let n = sys.n();
    if n > 3 {
        return Err(CorpusError::OracleTooLarge(n));
    }
    let mesh = rmesh(&sys.lower, &sys.upper, settings.grid_step)?;
    let newton_settings = NewtonSettings {
        acc: settings.newton_acc,
        max_iter: settings.max_iter,
        divergence_bound: 1e8 * (1.0 + sys.box_norm()),
    };
    let solve = |start: &[f64]| {
        let out = newton(sys, start, &newton_settings);
        (out.found && sys.in_box(&out.point, settings.acc)).then_some(out.point)
    };
    #[cfg(feature = "parallel")]
    let mut found: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        let rows: Vec<&[f64]> = mesh.rows().collect();
        rows.par_iter().filter_map(|r| solve(r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut found: Vec<Vec<f64>> = mesh.rows().filter_map(solve).collect();
    found.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut reg = PointRegistry::new(n, 10.0 * settings.acc);
    for p in &found {
        reg.append_unique(p, ());
    }
    Ok(reg.iter().map(|(p, _)| p.to_vec()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizedOracle {
    pub solutions: Vec<Vec<f64>>,
    /// Grid pitch of the accepted run.
    pub grid_step: f64,
    /// `(grid pitch, solution count)` of every run.
    pub history: Vec<(f64, usize)>,
}

/// Runs the oracle on successively halved grids until the solution count
/// stays the same over two refinements (or `max_runs` is reached).
pub fn oracle_solve_stabilized(
    sys: &SystemDefinition,
    settings: &OracleSettings,
    max_runs: usize,
) -> Result<StabilizedOracle, CorpusError> {
    let mut s = *settings;
    let mut history = Vec::new();
    let mut solutions = Vec::new();
    for _ in 0..max_runs.max(1) {
        solutions = oracle_solve(sys, &s)?;
        history.push((s.grid_step, solutions.len()));
        let k = history.len();
        if k >= 3 && history[k - 1].1 == history[k - 2].1 && history[k - 2].1 == history[k - 3].1 {
            break;
        }
        s.grid_step /= 2.0;
    }
    Ok(StabilizedOracle {
        solutions,
        grid_step: history.last().map(|h| h.0).unwrap_or(s.grid_step),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_parse_case_insensitively() {
        assert_eq!("t10".parse::<ProblemId>().unwrap(), ProblemId::T10);
        assert_eq!("EX4".parse::<ProblemId>().unwrap(), ProblemId::Ex4);
        assert!("T12".parse::<ProblemId>().is_err());
    }

    #[test]
    fn known_solutions_satisfy_their_systems() {
        let tol = |id| match id {
            // the third root is listed to ten digits only
            ProblemId::T2 => 1e-8,
            ProblemId::T6 => 1e-3,
            _ => 1e-12,
        };
        for id in ProblemId::ALL {
            if id == ProblemId::T3 && find_t3_constants().is_none() {
                continue;
            }
            let sys = generate(id, None).unwrap();
            for p in known_solutions(id, None) {
                let r = sys.residual_norm(&p);
                assert!(r <= tol(id), "{id} at {p:?}: residual {r}");
            }
        }
    }

    #[test]
    fn almost_linear_root_to_twelve_digits() {
        let sys = generate(ProblemId::T2, None).unwrap();
        let a: f64 = 0.974543355846;
        let mut p = vec![a; 9];
        p[8] = a.powi(-8);
        assert!(sys.residual_norm(&p) <= 1e-9);
    }

    #[test]
    fn box_continuum_points_vanish() {
        let sys = generate(ProblemId::T8, None).unwrap();
        assert_eq!(sys.residual_norm(&[1.0, 10.0, 1.0]), 0.0);
        assert!(sys.residual_norm(&[2.0, 2.0, 0.0]) <= 1e-12);
    }

    #[test]
    fn dimension_checks() {
        assert!(generate(ProblemId::T1, Some(3)).is_ok());
        assert!(generate(ProblemId::T5, Some(4)).is_err());
        assert!(generate(ProblemId::T7, Some(1)).is_err());
    }

    #[test]
    fn chebyquad_permutation_count() {
        assert_eq!(known_solutions(ProblemId::T6, None).len(), 120);
    }

    #[test]
    fn robot_kinematics_has_sixteen_real_roots() {
        let Ok(a) = load_t3_constants() else {
            return;
        };
        let roots = robot_kinematics_roots(&a);
        assert_eq!(roots.len(), 16);
        let sys = generate(ProblemId::T3, None).unwrap();
        for p in &roots {
            assert!(sys.in_box(p, 0.0));
        }
    }

    #[test]
    fn constants_parser() {
        let text: String = (1..=19).map(|k| format!("a{k} = {k}.5\n")).collect();
        let a = parse_t3_constants(&format!("# header\n{text}")).unwrap();
        assert_eq!(a[0], 1.5);
        assert_eq!(a[18], 19.5);
        assert!(parse_t3_constants("a1 = 1").unwrap_err().contains("missing a2"));
        assert!(parse_t3_constants("a20 = 1").is_err());
        assert!(parse_t3_constants(&format!("{text}a3 = 2")).is_err());
    }

    #[test]
    fn oracle_on_linear_system() {
        let sys = generate(ProblemId::T9, None).unwrap();
        let sols = oracle_solve(&sys, &OracleSettings::new(2.5, 1e-4)).unwrap();
        assert_eq!(sols.len(), 1);
        assert!((sols[0][0] + 1.0).abs() < 1e-12 && (sols[0][1] + 1.0).abs() < 1e-12);
        let big = generate(ProblemId::T1, Some(4)).unwrap();
        assert!(oracle_solve(&big, &OracleSettings::new(1.0, 1e-4)).is_err());
    }
}
