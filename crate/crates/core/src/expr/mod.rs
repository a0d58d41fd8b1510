//! Scalar expression trees over indexed variables.
//!
//! Everything downstream (Newton, the follower, the dependence matrix)
//! consumes [`Expr`]. Variables are plain indices into the owning system's
//! variable list; names only matter for parsing and printing.

mod calculus;
mod parse;

use std::fmt;
use std::sync::Arc;

pub use calculus::{add, div, mul, neg, pow, sub, unary};
pub use parse::{parse, ParseError};

/// Unary operators, including the named functions of the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Log,
    Sqrt,
    Abs,
    /// `sign(u)` with `sign(0) = 0`; appears as the derivative of `abs`.
    Sign,
}

impl UnaryOp {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Tan => v.tan(),
            UnaryOp::Atan => v.atan(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Log => v.ln(),
            UnaryOp::Sqrt => v.sqrt(),
            UnaryOp::Abs => v.abs(),
            UnaryOp::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else if v == 0.0 {
                    0.0
                } else {
                    f64::NAN
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Atan => "atan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Sign => "sign",
        }
    }

    pub(crate) fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "atan" => UnaryOp::Atan,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            "sign" => UnaryOp::Sign,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => power(a, b),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// `a^b`: integer exponents by repeated multiplication (defined for negative
/// bases), everything else as `exp(b * ln a)`.
pub fn power(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        (b * a.ln()).exp()
    }
}

/// Immutable expression tree. Subtrees are reference counted so derivatives
/// and generated systems can share structure.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
}

/// How an equation depends on a variable, coded 0/1/2 as in the
/// dependence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dependence {
    Independent = 0,
    Linear = 1,
    Nonlinear = 2,
}

impl Dependence {
    pub fn code(self) -> u8 {
        self as u8
    }
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Evaluates at `point`. Domain errors propagate as NaN or infinities.
    ///
    /// Panics if a variable index is out of range for `point`.
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => point[*i],
            Expr::Unary(op, u) => op.apply(u.eval(point)),
            Expr::Binary(op, a, b) => op.apply(a.eval(point), b.eval(point)),
        }
    }

    pub fn contains_var(&self, var: usize) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Unary(_, u) => u.contains_var(var),
            Expr::Binary(_, a, b) => a.contains_var(var) || b.contains_var(var),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, u) => u.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, u) => 1 + u.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Replaces every variable index `i` by `map(i)`.
    pub fn remap_vars(&self, map: &impl Fn(usize) -> usize) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => Expr::Var(map(*i)),
            Expr::Unary(op, u) => Expr::Unary(*op, Arc::new(u.remap_vars(map))),
            Expr::Binary(op, a, b) => Expr::Binary(*op, Arc::new(a.remap_vars(map)), Arc::new(b.remap_vars(map))),
        }
    }

    /// Replaces variable `var` by the constant `value` and simplifies.
    pub fn substitute(&self, var: usize, value: f64) -> Expr {
        fn go(e: &Expr, var: usize, value: f64) -> Expr {
            match e {
                Expr::Var(i) if *i == var => Expr::Const(value),
                Expr::Const(_) | Expr::Var(_) => e.clone(),
                Expr::Unary(op, u) => unary(*op, go(u, var, value)),
                Expr::Binary(op, a, b) => calculus::binary(*op, go(a, var, value), go(b, var, value)),
            }
        }
        go(self, var, value)
    }

    /// Classifies how `self` depends on `var` by inspecting its simplified
    /// symbolic derivative.
    pub fn dependence(&self, var: usize) -> Dependence {
        classify_derivative(&self.diff(var), var)
    }

    /// Fully parenthesized text using `names` for variables.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        Printer {
            expr: self,
            names: Some(names),
        }
    }
}

/// Dependence code of an equation on `var`, given its derivative
/// `deriv = d f / d x_var` (already simplified). Structural only.
pub fn classify_derivative(deriv: &Expr, var: usize) -> Dependence {
    if deriv.contains_var(var) {
        Dependence::Nonlinear
    } else if deriv.is_zero() {
        Dependence::Independent
    } else {
        Dependence::Linear
    }
}

/// Default variable name for index `i` (`x1`, `x2`, ...).
pub fn default_name(i: usize) -> String {
    format!("x{}", i + 1)
}

struct Printer<'a> {
    expr: &'a Expr,
    names: Option<&'a [String]>,
}

impl Printer<'_> {
    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            Expr::Const(c) => {
                if c.is_nan() || c.is_infinite() {
                    // not parseable; only reachable through hand-built trees
                    write!(f, "({c})")
                } else if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(i) => match self.names.and_then(|n| n.get(*i)) {
                Some(name) => f.write_str(name),
                None => f.write_str(&default_name(*i)),
            },
            Expr::Unary(UnaryOp::Neg, u) => {
                f.write_str("(-")?;
                self.write(u, f)?;
                f.write_str(")")
            }
            Expr::Unary(op, u) => {
                write!(f, "{}(", op.name())?;
                self.write(u, f)?;
                f.write_str(")")
            }
            Expr::Binary(op, a, b) => {
                f.write_str("(")?;
                self.write(a, f)?;
                write!(f, " {} ", op.symbol())?;
                self.write(b, f)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer {
            expr: self,
            names: None,
        }
        .fmt(f)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Const(v)
    }
}

macro_rules! impl_op {
    ($trait:ident, $method:ident, $ctor:ident) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(self, rhs)
            }
        }
        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $ctor(self, Expr::Const(rhs))
            }
        }
        impl std::ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(Expr::Const(self), rhs)
            }
        }
    };
}

impl_op!(Add, add, add);
impl_op!(Sub, sub, sub);
impl_op!(Mul, mul, mul);
impl_op!(Div, div, div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(n: usize) -> Vec<String> {
        (0..n).map(default_name).collect()
    }

    #[test]
    fn eval_linear_equation_at_root() {
        let f = parse("-x2-1", &vars(2)).unwrap();
        assert_eq!(f.eval(&[0.0, -1.0]), 0.0);
    }

    #[test]
    fn eval_constant() {
        assert_eq!(Expr::Const(5.0).eval(&[1.0, 2.0]), 5.0);
        assert_eq!(Expr::Const(5.0).eval(&[]), 5.0);
    }

    #[test]
    fn trig_system_first_equation_vanishes_at_origin() {
        // 3 - (cos x1 + cos x2 + cos x3) + 1*(1 - cos x1) - sin x1
        let f = parse("3 - (cos(x1)+cos(x2)+cos(x3)) + 1*(1-cos(x1)) - sin(x1)", &vars(3)).unwrap();
        assert_eq!(f.eval(&[0.0, 0.0, 0.0]), 0.0);
        // hand value at (1, 0, 0): 3 - (cos1 + 2) + (1 - cos1) - sin1
        let want = 3.0 - (1f64.cos() + 2.0) + (1.0 - 1f64.cos()) - 1f64.sin();
        assert!((f.eval(&[1.0, 0.0, 0.0]) - want).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_are_data() {
        let v = vars(1);
        assert!(parse("log(x1)", &v).unwrap().eval(&[-1.0]).is_nan());
        assert!(parse("sqrt(x1)", &v).unwrap().eval(&[-1.0]).is_nan());
        assert!(parse("1/x1", &v).unwrap().eval(&[0.0]).is_infinite());
    }

    #[test]
    fn integer_power_of_negative_base() {
        let e = parse("(x1-0.1)^2", &vars(1)).unwrap();
        assert!((e.eval(&[-0.9]) - 1.0).abs() < 1e-15);
        // non-integer exponent of a negative base is NaN
        assert!(parse("x1^0.5", &vars(1)).unwrap().eval(&[-4.0]).is_nan());
    }

    #[test]
    fn dependence_codes() {
        let v = vars(4);
        let f = parse("(x1-0.1)^2+x2-0.1", &v).unwrap();
        assert_eq!(f.dependence(0), Dependence::Nonlinear);
        assert_eq!(f.dependence(1), Dependence::Linear);
        assert_eq!(f.dependence(2), Dependence::Independent);
        let g = parse("-x2-1", &v).unwrap();
        assert_eq!(g.dependence(0), Dependence::Independent);
        assert_eq!(g.dependence(1), Dependence::Linear);
        assert_eq!(Expr::Const(7.0).dependence(0), Dependence::Independent);
        assert_eq!(Dependence::Nonlinear.code(), 2);
    }

    #[test]
    fn product_term_is_linear_in_each_factor() {
        let v = vars(3);
        let f = parse("x3*exp(-0.1*x1) - 2", &v).unwrap();
        assert_eq!(f.dependence(2), Dependence::Linear);
        assert_eq!(f.dependence(0), Dependence::Nonlinear);
        assert_eq!(f.dependence(1), Dependence::Independent);
    }

    #[test]
    fn printer_is_fully_parenthesized() {
        let v = vars(2);
        let e = parse("-x1^2 + 2*x2", &v).unwrap();
        assert_eq!(e.to_string(), "((-(x1 ^ 2.0)) + (2.0 * x2))");
        let names = vec!["a".to_string(), "b".to_string()];
        assert_eq!(e.display_with(&names).to_string(), "((-(a ^ 2.0)) + (2.0 * b))");
    }

    #[test]
    fn substitute_and_remap() {
        let v = vars(2);
        let e = parse("x1*x2 + x2", &v).unwrap();
        let s = e.substitute(1, 3.0);
        assert_eq!(s.max_var(), Some(0));
        assert_eq!(s.eval(&[2.0]), 9.0);
        let r = e.remap_vars(&|i| 1 - i);
        assert_eq!(r.eval(&[5.0, 2.0]), e.eval(&[2.0, 5.0]));
    }
}
