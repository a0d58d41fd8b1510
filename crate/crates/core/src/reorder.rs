//! Equation/variable ordering: the 0/1/2 dependence matrix read off the
//! symbolic Jacobian, the single-swap suggestion derived from it, and the
//! row/column swaps themselves.
//!
//! The solver always leaves out the last equation and slices the last
//! variable, so every swap here is a transposition with position `n - 1`.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{classify_derivative, Dependence};
use crate::system::SystemDefinition;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReorderError {
    #[error("swap index {index} out of range: must be below n - 1 = {limit}")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("system cannot be uniquely solved (rank-deficient leading subsystem)")]
    Unsolvable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependenceMatrix {
    n: usize,
    codes: Vec<Dependence>,
}

impl DependenceMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let n = rows.len();
        let codes = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), n, "dependence matrix must be square");
                r.iter().map(|&c| match c {
                    0 => Dependence::Independent,
                    1 => Dependence::Linear,
                    _ => Dependence::Nonlinear,
                })
            })
            .collect();
        DependenceMatrix { n, codes }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Dependence {
        self.codes[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.codes
            .chunks(self.n)
            .map(|r| r.iter().map(|d| d.code()).collect())
            .collect()
    }

    fn leading_row_sum(&self, i: usize) -> u32 {
        (0..self.n - 1).map(|j| self.get(i, j).code() as u32).sum()
    }
}

impl fmt::Display for DependenceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Entry-wise dependence classification of the system's Jacobian.
pub fn build_dependence_matrix(sys: &SystemDefinition) -> DependenceMatrix {
    let n = sys.n();
    let codes = (0..n * n)
        .map(|k| classify_derivative(&sys.jacobian[k], k % n))
        .collect();
    DependenceMatrix { n, codes }
}

/// Suggested execution ordering. `rows[k]` / `columns[k]` give the original
/// equation / variable placed at position `k` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ordering {
    pub rows: Vec<usize>,
    pub columns: Vec<usize>,
    pub solvable: bool,
    pub swapped_rows: bool,
    pub swapped_cols: bool,
}

/// The one transposition an [`Ordering`] carries, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Suggestion {
    NoReorder,
    /// Swap equation `i` (0-based) with the last equation.
    SwapRows(usize),
    /// Swap variable `j` (0-based) with the last variable.
    SwapColumns(usize),
    Unsolvable,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Ordering {
            rows: (0..n).collect(),
            columns: (0..n).collect(),
            solvable: true,
            swapped_rows: false,
            swapped_cols: false,
        }
    }

    pub fn suggestion(&self) -> Suggestion {
        if !self.solvable {
            return Suggestion::Unsolvable;
        }
        let n = self.rows.len();
        if self.swapped_rows {
            return Suggestion::SwapRows(self.rows[n - 1]);
        }
        if self.swapped_cols {
            return Suggestion::SwapColumns(self.columns[n - 1]);
        }
        Suggestion::NoReorder
    }

    pub fn describe(&self) -> String {
        let n = self.rows.len();
        match self.suggestion() {
            Suggestion::NoReorder => "no reord.".to_string(),
            Suggestion::SwapRows(i) => format!("swap rows {},{}", i + 1, n),
            Suggestion::SwapColumns(j) => format!("swap x{},x{}", j + 1, n),
            Suggestion::Unsolvable => "not solvable".to_string(),
        }
    }
}

/// Suggests at most one row or column transposition with the last position.
///
/// A leading row that vanishes on the first `n - 1` columns is swapped with
/// the last row (a second such row makes the system unsolvable). Otherwise
/// the first column with the fewest linear entries among the first `n - 1`
/// rows is swapped with the last column, unless the last column already
/// attains that minimum.
pub fn reorder(d: &DependenceMatrix) -> Ordering {
    let n = d.n();
    let mut ord = Ordering::identity(n);
    if n < 2 {
        return ord;
    }
    let mut rows = d.clone();
    for i in 0..n - 1 {
        if rows.leading_row_sum(i) == 0 {
            if rows.leading_row_sum(n - 1) == 0 || ord.swapped_rows {
                ord.solvable = false;
                return ord;
            }
            ord.rows.swap(i, n - 1);
            for j in 0..n {
                rows.codes.swap(i * n + j, (n - 1) * n + j);
            }
            ord.swapped_rows = true;
        }
    }
    if ord.swapped_rows {
        return ord;
    }
    let ones: Vec<usize> = (0..n)
        .map(|j| (0..n - 1).filter(|&i| d.get(i, j) == Dependence::Linear).count())
        .collect();
    let min = *ones.iter().min().expect("n >= 2");
    if ones[n - 1] == min {
        return ord;
    }
    let j = (0..n - 1).find(|&j| ones[j] == min).expect("minimum attained");
    ord.columns.swap(j, n - 1);
    ord.swapped_cols = true;
    ord
}

fn check_index(sys: &SystemDefinition, index: usize) -> Result<usize, ReorderError> {
    let n = sys.n();
    if n < 2 || index >= n - 1 {
        return Err(ReorderError::IndexOutOfRange {
            index,
            limit: n.saturating_sub(1),
        });
    }
    Ok(n - 1)
}

/// Exchanges equation `i` with the last equation (0-based).
pub fn swap_rows(sys: &SystemDefinition, i: usize) -> Result<SystemDefinition, ReorderError> {
    let last = check_index(sys, i)?;
    let n = sys.n();
    let mut out = sys.clone();
    out.equations.swap(i, last);
    for j in 0..n {
        out.jacobian.swap(i * n + j, last * n + j);
    }
    Ok(out)
}

/// Exchanges variable `j` with the last variable (0-based), relabelling every
/// expression and swapping names, bounds and Jacobian columns.
pub fn swap_columns(sys: &SystemDefinition, j: usize) -> Result<SystemDefinition, ReorderError> {
    let last = check_index(sys, j)?;
    let n = sys.n();
    let map = move |k: usize| {
        if k == j {
            last
        } else if k == last {
            j
        } else {
            k
        }
    };
    let mut out = sys.clone();
    out.equations = sys.equations.iter().map(|e| e.remap_vars(&map)).collect();
    out.jacobian = (0..n * n)
        .map(|k| {
            let (row, col) = (k / n, k % n);
            sys.jacobian[row * n + map(col)].remap_vars(&map)
        })
        .collect();
    out.names.swap(j, last);
    out.lower.swap(j, last);
    out.upper.swap(j, last);
    Ok(out)
}

/// Applies an ordering; `columns` tells how to map solutions back.
pub fn apply(sys: &SystemDefinition, ord: &Ordering) -> Result<SystemDefinition, ReorderError> {
    match ord.suggestion() {
        Suggestion::NoReorder => Ok(sys.clone()),
        Suggestion::SwapRows(i) => swap_rows(sys, i),
        Suggestion::SwapColumns(j) => swap_columns(sys, j),
        Suggestion::Unsolvable => Err(ReorderError::Unsolvable),
    }
}

/// Ordering for a user-forced row swap (0-based `i`).
pub fn forced_row_swap(n: usize, i: usize) -> Ordering {
    let mut ord = Ordering::identity(n);
    ord.rows.swap(i, n - 1);
    ord.swapped_rows = true;
    ord
}

/// Ordering for a user-forced column swap (0-based `j`).
pub fn forced_column_swap(n: usize, j: usize) -> Ordering {
    let mut ord = Ordering::identity(n);
    ord.columns.swap(j, n - 1);
    ord.swapped_cols = true;
    ord
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(eqs: &[&str]) -> SystemDefinition {
        let n = eqs.len();
        let names = (0..n).map(crate::expr::default_name).collect();
        SystemDefinition::parse(names, eqs, vec![-1.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn linear_pair_needs_row_swap() {
        let s = sys(&["-x2-1", "-x1-1"]);
        let d = build_dependence_matrix(&s);
        assert_eq!(d.rows(), vec![vec![0, 1], vec![1, 0]]);
        let ord = reorder(&d);
        assert_eq!(ord.rows, vec![1, 0]);
        assert_eq!(ord.columns, vec![0, 1]);
        assert!(ord.solvable && ord.swapped_rows && !ord.swapped_cols);
        assert_eq!(ord.suggestion(), Suggestion::SwapRows(0));
    }

    #[test]
    fn two_vanishing_rows_are_unsolvable() {
        let d = DependenceMatrix::from_rows(&[vec![0, 0, 1], vec![0, 0, 2], vec![1, 1, 1]]);
        let ord = reorder(&d);
        assert!(!ord.solvable);
        assert_eq!(ord.suggestion(), Suggestion::Unsolvable);
        // last row also vanishing on the leading block
        let d = DependenceMatrix::from_rows(&[vec![0, 1], vec![0, 1]]);
        assert!(!reorder(&d).solvable);
    }

    #[test]
    fn all_nonlinear_keeps_identity() {
        let d = DependenceMatrix::from_rows(&[vec![2, 2], vec![2, 2]]);
        assert_eq!(reorder(&d), Ordering::identity(2));
    }

    #[test]
    fn first_minimal_column_is_swapped() {
        let d = DependenceMatrix::from_rows(&[
            vec![2, 2, 1, 1, 2, 1],
            vec![2, 2, 1, 1, 2, 1],
            vec![2, 2, 1, 1, 2, 1],
            vec![2, 2, 1, 1, 2, 1],
            vec![2, 2, 1, 1, 2, 1],
            vec![2, 2, 1, 1, 2, 1],
        ]);
        let ord = reorder(&d);
        assert_eq!(ord.suggestion(), Suggestion::SwapColumns(0));
        assert_eq!(ord.describe(), "swap x1,x6");
    }

    #[test]
    fn swaps_validate_index() {
        let s = sys(&["x1+x2", "x1-x2"]);
        assert!(swap_rows(&s, 1).is_err());
        assert!(swap_columns(&s, 2).is_err());
    }

    #[test]
    fn column_swap_is_an_involution_and_matches_rediff() {
        let s = sys(&["x1^2+x3", "x2*x3-1", "sin(x1)+x2"]);
        let once = swap_columns(&s, 0).unwrap();
        assert_eq!(swap_columns(&once, 0).unwrap(), s);
        let rebuilt = SystemDefinition::new(
            once.names.clone(),
            once.equations.clone(),
            once.lower.clone(),
            once.upper.clone(),
        )
        .unwrap();
        assert_eq!(once.jacobian, rebuilt.jacobian);
        // relabelled system evaluates like the original on permuted points
        let x = [0.3, -0.4, 0.9];
        assert_eq!(once.eval(&[x[2], x[1], x[0]]), s.eval(&x));
    }

    #[test]
    fn row_swap_preserves_root_set() {
        let s = sys(&["-x2-1", "-x1-1"]);
        let r = swap_rows(&s, 0).unwrap();
        assert_eq!(r.eval(&[-1.0, -1.0]), vec![0.0, 0.0]);
        assert_eq!(r.equations[0], s.equations[1]);
        assert_eq!(r.jacobian_entry(0, 0), s.jacobian_entry(1, 0));
    }
}
