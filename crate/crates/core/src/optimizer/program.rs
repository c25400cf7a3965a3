//! Solver-agnostic linear program with optional binary columns.

use std::fmt::Write as _;
use std::time::Duration;

use highs::{HighsModelStatus, RowProblem, Sense};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub terms: Vec<(usize, f64)>,
}

/// Minimisation program: `min c·x + offset` subject to `lower <= A x <= upper` and
/// column bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MathProgram {
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    pub objective_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Primal/dual feasibility tolerance handed to the LP solver.
    pub tolerance: f64,
    /// Wall-clock limit per LP solve.
    pub time_limit: Option<Duration>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-9,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Relative gap between primal objective and the dual bound.
    pub duality_gap: f64,
    pub optimal: bool,
}

impl MathProgram {
    pub fn add_column(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.columns.push(Column {
            name: name.into(),
            cost,
            lower,
            upper,
            binary: false,
        });
        self.columns.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> usize {
        self.columns.push(Column {
            name: name.into(),
            cost,
            lower: 0.0,
            upper: 1.0,
            binary: true,
        });
        self.columns.len() - 1
    }

    pub fn add_row(&mut self, name: impl Into<String>, lower: f64, upper: f64, terms: Vec<(usize, f64)>) -> usize {
        self.rows.push(Row {
            name: name.into(),
            lower,
            upper,
            terms,
        });
        self.rows.len() - 1
    }

    pub fn binaries(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.binary)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.columns
            .iter()
            .zip(x)
            .map(|(c, v)| c.cost * v)
            .sum::<f64>()
            + self.objective_offset
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, v) in self.columns.iter().zip(x) {
            worst = worst.max(c.lower - v).max(v - c.upper);
        }
        for r in &self.rows {
            let a: f64 = r.terms.iter().map(|(j, k)| k * x[*j]).sum();
            worst = worst.max(r.lower - a).max(a - r.upper);
        }
        worst
    }

    /// Solves the continuous relaxation with the given binary columns fixed.
    pub fn solve_lp(&self, fixed: &[(usize, f64)], options: &SolverOptions) -> Result<LpSolution> {
        let mut lower: Vec<f64> = self.columns.iter().map(|c| c.lower).collect();
        let mut upper: Vec<f64> = self.columns.iter().map(|c| c.upper).collect();
        for &(j, v) in fixed {
            lower[j] = v;
            upper[j] = v;
        }
        let mut pb = RowProblem::default();
        let cols: Vec<_> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| pb.add_column(c.cost, lower[j]..=upper[j]))
            .collect();
        for r in &self.rows {
            pb.add_row(r.lower..=r.upper, r.terms.iter().map(|(j, k)| (cols[*j], *k)));
        }
        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        // Parallelism comes from solving buildings concurrently; one solver thread each.
        model.set_option("threads", 1);
        model.set_option("primal_feasibility_tolerance", options.tolerance);
        model.set_option("dual_feasibility_tolerance", options.tolerance);
        if let Some(limit) = options.time_limit {
            model.set_option("time_limit", limit.as_secs_f64());
        }
        let solved = model
            .try_solve()
            .map_err(|s| Error::Solver(format!("HiGHS returned {s:?}")))?;
        let status = solved.status();
        let optimal = match status {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => true,
            HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => false,
            other => return Err(Error::Solver(format!("LP not solved: {other:?}"))),
        };
        let sol = solved.get_solution();
        let values = sol.columns().to_vec();
        if values.len() != self.columns.len() {
            return Err(Error::Solver("no primal solution available".into()));
        }
        let objective = self.objective(&values);
        let dual = dual_bound(
            &lower,
            &upper,
            &self.rows,
            sol.dual_columns(),
            sol.dual_rows(),
        ) + self.objective_offset;
        let duality_gap = (objective - dual).abs() / objective.abs().max(1.0);
        Ok(LpSolution {
            values,
            objective,
            duality_gap,
            optimal,
        })
    }

    /// Writes the program in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let name = |j: usize| sanitize(&self.columns[j].name);
        out.push_str("\\ TCO minimisation\nMinimize\n obj:");
        let mut any = false;
        for (j, c) in self.columns.iter().enumerate() {
            if c.cost != 0.0 {
                let _ = write!(out, " {} {} {}", sign(c.cost), fmt_num(c.cost.abs()), name(j));
                any = true;
            }
        }
        if self.objective_offset != 0.0 {
            let _ = write!(out, " {} {} constant", sign(self.objective_offset), fmt_num(self.objective_offset.abs()));
        }
        if !any && self.objective_offset == 0.0 {
            out.push_str(" 0 ");
            out.push_str(&name(0));
        }
        out.push_str("\nSubject To\n");
        for r in &self.rows {
            let mut expr = String::new();
            for (j, k) in &r.terms {
                let _ = write!(expr, " {} {} {}", sign(*k), fmt_num(k.abs()), name(*j));
            }
            let rn = sanitize(&r.name);
            if r.lower == r.upper {
                let _ = writeln!(out, " {rn}:{expr} = {}", fmt_num(r.lower));
            } else {
                if r.lower.is_finite() {
                    let _ = writeln!(out, " {rn}_lo:{expr} >= {}", fmt_num(r.lower));
                }
                if r.upper.is_finite() {
                    let _ = writeln!(out, " {rn}_up:{expr} <= {}", fmt_num(r.upper));
                }
            }
        }
        out.push_str("Bounds\n");
        if self.objective_offset != 0.0 {
            out.push_str(" constant = 1\n");
        }
        for (j, c) in self.columns.iter().enumerate() {
            if c.binary {
                continue;
            }
            let lo = if c.lower.is_finite() { fmt_num(c.lower) } else { "-inf".into() };
            let hi = if c.upper.is_finite() { fmt_num(c.upper) } else { "+inf".into() };
            let _ = writeln!(out, " {lo} <= {} <= {hi}", name(j));
        }
        let bins = self.binaries();
        if !bins.is_empty() {
            out.push_str("Binary\n");
            for j in bins {
                let _ = writeln!(out, " {}", name(j));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn sign(v: f64) -> char {
    if v < 0.0 {
        '-'
    } else {
        '+'
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Lagrangian dual bound from column reduced costs and row duals (minimisation).
fn dual_bound(lower: &[f64], upper: &[f64], rows: &[Row], col_duals: &[f64], row_duals: &[f64]) -> f64 {
    const NOISE: f64 = 1e-9;
    let term = |mult: f64, lo: f64, hi: f64| -> f64 {
        let bound = if mult > 0.0 { lo } else { hi };
        if bound.is_finite() {
            mult * bound
        } else if mult.abs() <= NOISE {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut total = 0.0;
    for (j, d) in col_duals.iter().enumerate() {
        total += term(*d, lower[j], upper[j]);
    }
    for (r, y) in rows.iter().zip(row_duals) {
        total += term(*y, r.lower, r.upper);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> MathProgram {
        // min x + 2y  s.t. x + y >= 3, x <= 2
        let mut p = MathProgram::default();
        let x = p.add_column("x", 1.0, 0.0, 2.0);
        let y = p.add_column("y", 2.0, 0.0, f64::INFINITY);
        p.add_row("cover", 3.0, f64::INFINITY, vec![(x, 1.0), (y, 1.0)]);
        p
    }

    #[test]
    fn solves_and_certifies() {
        let s = toy().solve_lp(&[], &SolverOptions::default()).unwrap();
        assert!((s.objective - 4.0).abs() < 1e-9);
        assert!(s.duality_gap < 1e-9, "gap {}", s.duality_gap);
        assert!(s.optimal);
    }

    #[test]
    fn fixing_a_column() {
        let s = toy().solve_lp(&[(0, 0.0)], &SolverOptions::default()).unwrap();
        assert!((s.objective - 6.0).abs() < 1e-9);
    }

    #[test]
    fn lp_text_has_sections() {
        let mut p = toy();
        p.add_binary("y_pv", 5.0);
        p.objective_offset = 1.5;
        let text = p.to_lp_format();
        for section in ["Minimize", "Subject To", "Bounds", "Binary", "End"] {
            assert!(text.contains(section), "{section} missing");
        }
        assert!(text.contains("cover_lo:"));
    }

    #[test]
    fn infeasible_is_an_error() {
        let mut p = toy();
        p.add_row("cap", f64::NEG_INFINITY, 1.0, vec![(0, 1.0), (1, 1.0)]);
        assert!(p.solve_lp(&[], &SolverOptions::default()).is_err());
    }
}
