//! Finds all real solutions of a square nonlinear system inside a box.
//!
//! The first `n - 1` equations define curves in `R^n`. Starting points on
//! those curves are found by Newton's method on slices of the last
//! variable; each branch is then followed up and down in that variable
//! while the sign of the last equation is watched, and sign changes are
//! pinned down by bisection over slices.
//!
//! ```
//! use curvetrace::{solve, SolverConfig, SystemDefinition};
//!
//! let names = vec!["x".to_string(), "y".to_string()];
//! let sys = SystemDefinition::parse(names, &["x^2 + y^2 - 1", "x - y"], vec![-2.0; 2], vec![2.0; 2])
//!     .unwrap();
//! let report = solve(&sys, &SolverConfig::default()).unwrap();
//! assert_eq!(report.solutions.len(), 2);
//! ```

// `!(a <= b)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod driver;
pub mod expr;
pub mod follower;
pub mod geometry;
pub mod numerics;
pub mod reorder;
pub mod system;

pub use config::{ReorderMode, SolverConfig};
pub use driver::{locate_curve_parts, solve, ProblemFile, Solution, SolveError, SolveReport};
pub use expr::{parse, Expr};
pub use system::SystemDefinition;
