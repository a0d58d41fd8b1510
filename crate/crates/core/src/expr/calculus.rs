//! Simplifying constructors, `simplify`, and symbolic differentiation.
//!
//! The constructors below apply local rewrites only: constant folding,
//! `0+u`, `u-0`, `0-u`, `1*u`, `0*u`, `u/1`, `0/u`, `u^1`, `u^0`, `--u` and
//! merging of nested constant factors. A tree rebuilt through them from
//! already-simplified children is itself simplified, which makes
//! [`Expr::simplify`] idempotent.

use std::sync::Arc;

use super::{BinaryOp, Expr, UnaryOp};

fn fold(v: f64) -> Option<Expr> {
    v.is_finite().then_some(Expr::Const(v))
}

fn raw_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    Expr::Binary(op, Arc::new(a), Arc::new(b))
}

pub fn unary(op: UnaryOp, u: Expr) -> Expr {
    if let Some(c) = u.as_const() {
        if let Some(folded) = fold(op.apply(c)) {
            return folded;
        }
    }
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = &u {
            return (**inner).clone();
        }
    }
    Expr::Unary(op, Arc::new(u))
}

pub fn neg(u: Expr) -> Expr {
    unary(UnaryOp::Neg, u)
}

pub(crate) fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    match op {
        BinaryOp::Add => add(a, b),
        BinaryOp::Sub => sub(a, b),
        BinaryOp::Mul => mul(a, b),
        BinaryOp::Div => div(a, b),
        BinaryOp::Pow => pow(a, b),
    }
}

fn folded(op: BinaryOp, a: &Expr, b: &Expr) -> Option<Expr> {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => fold(op.apply(x, y)),
        _ => None,
    }
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

pub fn add(a: Expr, b: Expr) -> Expr {
    if let Some(c) = folded(BinaryOp::Add, &a, &b) {
        return c;
    }
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    raw_binary(BinaryOp::Add, a, b)
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    if let Some(c) = folded(BinaryOp::Sub, &a, &b) {
        return c;
    }
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return neg(b);
    }
    raw_binary(BinaryOp::Sub, a, b)
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    if let Some(c) = folded(BinaryOp::Mul, &a, &b) {
        return c;
    }
    if a.is_zero() || b.is_zero() {
        return Expr::Const(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    // c1 * (c2 * u) -> (c1 c2) * u, keeping constants in front
    match (&a, &b) {
        (Expr::Const(x), Expr::Binary(BinaryOp::Mul, l, r)) => {
            if let Some(y) = l.as_const() {
                if let Some(Expr::Const(p)) = fold(x * y) {
                    return mul(Expr::Const(p), (**r).clone());
                }
            }
        }
        (_, Expr::Const(_)) if a.as_const().is_none() => {
            return mul(b, a);
        }
        _ => {}
    }
    raw_binary(BinaryOp::Mul, a, b)
}

pub fn div(a: Expr, b: Expr) -> Expr {
    if let Some(c) = folded(BinaryOp::Div, &a, &b) {
        return c;
    }
    if is_one(&b) {
        return a;
    }
    if a.is_zero() && !b.is_zero() {
        return Expr::Const(0.0);
    }
    raw_binary(BinaryOp::Div, a, b)
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    if let Some(c) = folded(BinaryOp::Pow, &a, &b) {
        return c;
    }
    if is_one(&b) {
        return a;
    }
    if b.is_zero() {
        return Expr::Const(1.0);
    }
    raw_binary(BinaryOp::Pow, a, b)
}

impl Expr {
    /// Rebuilds the tree bottom-up through the simplifying constructors.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, u) => unary(*op, u.simplify()),
            Expr::Binary(op, a, b) => binary(*op, a.simplify(), b.simplify()),
        }
    }

    /// Simplified partial derivative with respect to variable `var`.
    pub fn diff(&self, var: usize) -> Expr {
        self.simplify().diff_simplified(var)
    }

    fn diff_simplified(&self, var: usize) -> Expr {
        if !self.contains_var(var) {
            return Expr::Const(0.0);
        }
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(_) => Expr::Const(1.0),
            Expr::Unary(op, u) => {
                let du = u.diff_simplified(var);
                let u = (**u).clone();
                match op {
                    UnaryOp::Neg => neg(du),
                    UnaryOp::Sin => mul(du, unary(UnaryOp::Cos, u)),
                    UnaryOp::Cos => neg(mul(du, unary(UnaryOp::Sin, u))),
                    UnaryOp::Tan => div(du, pow(unary(UnaryOp::Cos, u), Expr::Const(2.0))),
                    UnaryOp::Atan => div(du, add(Expr::Const(1.0), pow(u, Expr::Const(2.0)))),
                    UnaryOp::Exp => mul(du, unary(UnaryOp::Exp, u)),
                    UnaryOp::Log => div(du, u),
                    UnaryOp::Sqrt => div(du, mul(Expr::Const(2.0), unary(UnaryOp::Sqrt, u))),
                    UnaryOp::Abs => mul(du, unary(UnaryOp::Sign, u)),
                    UnaryOp::Sign => Expr::Const(0.0),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.diff_simplified(var);
                let db = b.diff_simplified(var);
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinaryOp::Add => add(da, db),
                    BinaryOp::Sub => sub(da, db),
                    BinaryOp::Mul => add(mul(da, b.clone()), mul(a, db)),
                    BinaryOp::Div => {
                        if db.is_zero() {
                            div(da, b)
                        } else {
                            div(sub(mul(da, b.clone()), mul(a, db)), pow(b, Expr::Const(2.0)))
                        }
                    }
                    BinaryOp::Pow => match b.as_const() {
                        Some(c) => mul(mul(Expr::Const(c), pow(a, Expr::Const(c - 1.0))), da),
                        None if da.is_zero() => {
                            // a^v with a free of var: a^v * ln(a) * v'
                            mul(mul(pow(a.clone(), b), unary(UnaryOp::Log, a)), db)
                        }
                        None => {
                            // u^v = exp(v ln u): u^v * (v' ln u + v u'/u)
                            let inner = add(
                                mul(db, unary(UnaryOp::Log, a.clone())),
                                div(mul(b.clone(), da), a.clone()),
                            );
                            mul(pow(a, b), inner)
                        }
                    },
                }
            }
        }
    }
}
