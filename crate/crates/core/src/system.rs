//! An `n x n` nonlinear system over a box, with its symbolic Jacobian.

use thiserror::Error;

use crate::expr::{self, Expr, ParseError};
use crate::numerics::{max_norm, SquareSystem};

/// Equation indices are 0-based; messages count from 1.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("expected {expected} {what}, got {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("system needs at least one equation")]
    Empty,
    #[error("equation {} references variable index {index} but n = {n}", .equation + 1)]
    VariableOutOfRange { equation: usize, index: usize, n: usize },
    #[error("bad bounds for variable {var}: [{lower}, {upper}]")]
    BadBounds { var: usize, lower: f64, upper: f64 },
    #[error("equation {}: {source}", .equation + 1)]
    Parse {
        equation: usize,
        #[source]
        source: ParseError,
    },
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDefinition {
    pub names: Vec<String>,
    pub equations: Vec<Expr>,
    /// Row-major `n x n`, entry `(i, j)` is `d f_i / d x_j`, simplified.
    pub jacobian: Vec<Expr>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SystemDefinition {
    pub fn new(
        names: Vec<String>,
        equations: Vec<Expr>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, SystemError> {
        let n = equations.len();
        if n == 0 {
            return Err(SystemError::Empty);
        }
        for (what, found) in [
            ("variable names", names.len()),
            ("lower bounds", lower.len()),
            ("upper bounds", upper.len()),
        ] {
            if found != n {
                return Err(SystemError::Length {
                    what,
                    expected: n,
                    found,
                });
            }
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(SystemError::DuplicateName(name.clone()));
            }
        }
        for (equation, f) in equations.iter().enumerate() {
            if let Some(index) = f.max_var().filter(|&m| m >= n) {
                return Err(SystemError::VariableOutOfRange { equation, index, n });
            }
        }
        for (var, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(SystemError::BadBounds {
                    var,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        let jacobian = equations.iter().flat_map(|f| (0..n).map(move |j| f.diff(j))).collect();
        Ok(SystemDefinition {
            names,
            equations,
            jacobian,
            lower,
            upper,
        })
    }

    /// Builds a system from equation strings in the expression grammar.
    pub fn parse<S: AsRef<str>>(
        names: Vec<String>,
        equations: &[S],
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, SystemError> {
        let parsed = equations
            .iter()
            .enumerate()
            .map(|(equation, text)| {
                expr::parse(text.as_ref(), &names).map_err(|source| SystemError::Parse { equation, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(names, parsed, lower, upper)
    }

    /// System over default names `x1..xn`.
    pub fn from_exprs(equations: Vec<Expr>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SystemError> {
        let names = (0..equations.len()).map(expr::default_name).collect();
        Self::new(names, equations, lower, upper)
    }

    pub fn n(&self) -> usize {
        self.equations.len()
    }

    pub fn jacobian_entry(&self, i: usize, j: usize) -> &Expr {
        &self.jacobian[i * self.n() + j]
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.equations.iter().map(|f| f.eval(x)).collect()
    }

    /// `max_i |f_i(x)|`.
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        max_norm(&self.eval(x))
    }

    /// Whether `x` lies in the box, allowing `slack` per coordinate.
    pub fn in_box(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo - slack && v <= hi + slack)
    }

    /// Widest absolute bound, `max_i max(|lower_i|, |upper_i|)`.
    pub fn box_norm(&self) -> f64 {
        self.lower.iter().chain(&self.upper).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Equations printed with the system's variable names.
    pub fn equation_strings(&self) -> Vec<String> {
        self.equations
            .iter()
            .map(|f| f.display_with(&self.names).to_string())
            .collect()
    }
}

impl SquareSystem for SystemDefinition {
    fn dim(&self) -> usize {
        self.n()
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
