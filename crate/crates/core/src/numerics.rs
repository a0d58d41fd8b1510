//! Dense LU solve and plain (undamped) Newton iteration.

use thiserror::Error;

use crate::expr::Expr;

/// Relative pivot threshold below which a matrix is treated as singular.
pub const SINGULAR_PIVOT: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("matrix is singular to working precision (pivot column {column})")]
pub struct Singular {
    pub column: usize,
}

/// Solves `a x = b` for a row-major `m x m` matrix by LU with partial
/// pivoting. `a` and `b` are overwritten; on success `b` holds `x`.
pub fn solve_linear_in_place(a: &mut [f64], b: &mut [f64]) -> Result<(), Singular> {
    let m = b.len();
    assert_eq!(a.len(), m * m, "matrix must be {m}x{m}");
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tiny = SINGULAR_PIVOT * scale;
    for k in 0..m {
        let (piv, pmax) =
            (k..m)
                .map(|r| (r, a[r * m + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmax > tiny) || pmax == 0.0 {
            return Err(Singular { column: k });
        }
        if piv != k {
            for c in 0..m {
                a.swap(k * m + c, piv * m + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * m + k];
        for r in (k + 1)..m {
            let f = a[r * m + k] / d;
            if f != 0.0 {
                a[r * m + k] = 0.0;
                for c in (k + 1)..m {
                    a[r * m + c] -= f * a[k * m + c];
                }
                b[r] -= f * b[k];
            }
        }
    }
    for k in (0..m).rev() {
        let mut s = b[k];
        for c in (k + 1)..m {
            s -= a[k * m + c] * b[c];
        }
        b[k] = s / a[k * m + k];
    }
    Ok(())
}

/// Solves `a x = b` where `a` is given as rows.
pub fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, Singular> {
    let m = b.len();
    let mut flat = Vec::with_capacity(m * m);
    for row in a {
        assert_eq!(row.len(), m, "matrix must be square and match b");
        flat.extend_from_slice(row);
    }
    let mut x = b.to_vec();
    solve_linear_in_place(&mut flat, &mut x)?;
    Ok(x)
}

/// A square nonlinear system with an analytic Jacobian.
pub trait SquareSystem {
    fn dim(&self) -> usize;
    /// Writes `F(x)` into `out` (length `dim`).
    fn residual(&self, x: &[f64], out: &mut [f64]);
    /// Writes the row-major Jacobian into `out` (length `dim * dim`).
    fn jacobian(&self, x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Residual tolerance: converged once `max |F_i(x)| <= acc`.
    pub acc: f64,
    pub max_iter: usize,
    /// Iterates with `max |x_i|` beyond this are abandoned.
    pub divergence_bound: f64,
}

impl NewtonSettings {
    pub fn new(acc: f64) -> Self {
        NewtonSettings {
            acc,
            max_iter: 100,
            divergence_bound: 1e8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonFailure {
    MaxIterations,
    SingularJacobian,
    NonFinite,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    /// Converged point, or the last iterate when `found` is false.
    pub point: Vec<f64>,
    pub found: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    pub failure: Option<NewtonFailure>,
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter()
        .fold(0.0f64, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
}

/// Plain Newton: `x <- x - J(x)^{-1} F(x)` until the residual is below
/// `settings.acc`.
pub fn newton<S: SquareSystem + ?Sized>(sys: &S, start: &[f64], settings: &NewtonSettings) -> NewtonOutcome {
    let m = sys.dim();
    assert_eq!(start.len(), m);
    let mut x = start.to_vec();
    let mut f = vec![0.0; m];
    let mut jac = vec![0.0; m * m];
    let mut iterations = 0;
    let fail = |x: Vec<f64>, iterations, residual_norm, why| NewtonOutcome {
        point: x,
        found: false,
        iterations,
        residual_norm,
        failure: Some(why),
    };
    loop {
        sys.residual(&x, &mut f);
        let r = max_norm(&f);
        if !r.is_finite() {
            return fail(x, iterations, r, NewtonFailure::NonFinite);
        }
        if r <= settings.acc {
            return NewtonOutcome {
                point: x,
                found: true,
                iterations,
                residual_norm: r,
                failure: None,
            };
        }
        if iterations >= settings.max_iter {
            return fail(x, iterations, r, NewtonFailure::MaxIterations);
        }
        sys.jacobian(&x, &mut jac);
        if jac.iter().any(|v| !v.is_finite()) {
            return fail(x, iterations, r, NewtonFailure::NonFinite);
        }
        if solve_linear_in_place(&mut jac, &mut f).is_err() {
            return fail(x, iterations, r, NewtonFailure::SingularJacobian);
        }
        for (xi, di) in x.iter_mut().zip(&f) {
            *xi -= di;
        }
        iterations += 1;
        let size = max_norm(&x);
        if !(size <= settings.divergence_bound) {
            return fail(x, iterations, r, NewtonFailure::Diverged);
        }
    }
}

/// Expression-backed square system: `equations[i]` and row-major
/// `jacobian[i * dim + j] = d equations[i] / d x_j`, over variables
/// `0..dim`.
#[derive(Debug, Clone)]
pub struct ExprSystem {
    pub equations: Vec<Expr>,
    pub jacobian: Vec<Expr>,
}

impl ExprSystem {
    /// Differentiates `equations` symbolically.
    pub fn new(equations: Vec<Expr>) -> Self {
        let n = equations.len();
        let jacobian = equations.iter().flat_map(|f| (0..n).map(move |j| f.diff(j))).collect();
        ExprSystem { equations, jacobian }
    }
}

impl SquareSystem for ExprSystem {
    fn dim(&self) -> usize {
        self.equations.len()
    }

    fn residual(&self, x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.equations) {
            *o = f.eval(x);
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        for (o, j) in out.iter_mut().zip(&self.jacobian) {
            *o = j.eval(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn identity_and_diagonal_solves() {
        let x = solve_linear(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[3.0, 4.0]).unwrap();
        assert_eq!(x, vec![3.0, 4.0]);
        let x = solve_linear(&[vec![2.0, 0.0], vec![0.0, 4.0]], &[2.0, 8.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn rank_one_is_singular() {
        let err = solve_linear(&[vec![1.0, 1.0], vec![2.0, 2.0]], &[1.0, 0.0]).unwrap_err();
        assert_eq!(err.column, 1);
        assert!(solve_linear(&[vec![0.0]], &[1.0]).is_err());
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let x = solve_linear(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[5.0, 7.0]).unwrap();
        assert_eq!(x, vec![7.0, 5.0]);
    }

    #[test]
    fn linear_problem_converges_in_one_step() {
        let sys = ExprSystem::new(vec![parse("-x1-1", &["x1"]).unwrap()]);
        let out = newton(&sys, &[0.0], &NewtonSettings::new(1e-10));
        assert!(out.found);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.point, vec![-1.0]);
    }

    #[test]
    fn square_root_of_two() {
        let sys = ExprSystem::new(vec![parse("x1^2-2", &["x1"]).unwrap()]);
        let acc = 1e-10;
        let out = newton(&sys, &[1.0], &NewtonSettings::new(acc));
        assert!(out.found);
        assert!((out.point[0] - 2f64.sqrt()).abs() <= acc);
        assert!(out.residual_norm <= acc);
    }

    #[test]
    fn failure_modes() {
        let v = ["x1"];
        // no real root
        let sys = ExprSystem::new(vec![parse("x1^2+1", &v).unwrap()]);
        let out = newton(&sys, &[0.5], &NewtonSettings::new(1e-10));
        assert!(!out.found);
        // zero derivative at the start
        let out = newton(&sys, &[0.0], &NewtonSettings::new(1e-10));
        assert_eq!(out.failure, Some(NewtonFailure::SingularJacobian));
        // log outside its domain
        let sys = ExprSystem::new(vec![parse("log(x1)", &v).unwrap()]);
        let out = newton(&sys, &[-1.0], &NewtonSettings::new(1e-10));
        assert_eq!(out.failure, Some(NewtonFailure::NonFinite));
        // runaway iterate
        let sys = ExprSystem::new(vec![parse("atan(x1)", &v).unwrap()]);
        let out = newton(&sys, &[3.0], &NewtonSettings::new(1e-10));
        assert!(matches!(
            out.failure,
            Some(NewtonFailure::Diverged | NewtonFailure::NonFinite)
        ));
    }

    #[test]
    fn trig_slice_without_real_solutions_never_converges() {
        // first two equations of the trigonometric system at x3 = -10
        let v = ["x1", "x2"];
        let z = -10f64;
        let f1 = format!("4-2*cos(x1)-cos(x2)-sin(x1)-({})", z.cos());
        let f2 = format!("5-cos(x1)-3*cos(x2)-sin(x2)-({})", z.cos());
        let sys = ExprSystem::new(vec![parse(&f1, &v).unwrap(), parse(&f2, &v).unwrap()]);
        let settings = NewtonSettings::new(1e-10);
        for i in -10..=10 {
            for j in -10..=10 {
                let out = newton(&sys, &[i as f64, j as f64], &settings);
                assert!(!out.found, "converged from ({i},{j}) to {:?}", out.point);
            }
        }
    }
}
