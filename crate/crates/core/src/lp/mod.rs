//! Dense linear programming: a two-phase simplex with Bland's rule, the
//! AVaR dual LP and the primal/dual LPs of risky control.

mod risky;
mod simplex;

use std::fmt::Write as _;

use serde::Serialize;

use crate::dist::{check_level, DiscreteDist};
use crate::{Error, Result};

pub use risky::{build_risky_dual, build_risky_primal, duality_gap_check, DualityReport, RiskyLp, RowLabel};
pub use simplex::{solve, solve_with};

/// Default cap on the number of variables.
pub const DEFAULT_MAX_VARS: usize = 2_000;
/// Default cap on the number of constraint rows.
pub const DEFAULT_MAX_ROWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        }
    }
}

/// A dense linear program `opt c·x` subject to `A x (≤ | = | ≥) b` and `l ≤ x ≤ u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    sense: Sense,
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    senses: Vec<RowSense>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
}

impl LpProblem {
    /// A problem over `objective.len()` variables with bounds `x ≥ 0` and no rows.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Result<Self> {
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("objective coefficients must be finite".into()));
        }
        let n = objective.len();
        Ok(LpProblem {
            sense,
            objective,
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            names: (0..n).map(|j| format!("x{j}")).collect(),
        })
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, sense: RowSense, rhs: f64) -> Result<()> {
        if coefficients.len() != self.n_vars() {
            return Err(Error::Dimension(format!(
                "row has {} coefficients for {} variables",
                coefficients.len(),
                self.n_vars()
            )));
        }
        if !rhs.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("row coefficients must be finite".into()));
        }
        self.rows.push(coefficients);
        self.senses.push(sense);
        self.rhs.push(rhs);
        Ok(())
    }

    /// Sets `lower ≤ x_j ≤ upper`; infinite values mean unbounded.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) -> Result<()> {
        if j >= self.n_vars() {
            return Err(Error::Dimension(format!("variable {j} out of range")));
        }
        if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("bad bounds [{lower}, {upper}] for variable {j}")));
        }
        self.lower[j] = lower;
        self.upper[j] = upper;
        Ok(())
    }

    pub fn set_free(&mut self, j: usize) -> Result<()> {
        self.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_vars() {
            return Err(Error::Dimension("one name per variable".into()));
        }
        self.names = names;
        Ok(self)
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn row(&self, i: usize) -> (&[f64], RowSense, f64) {
        (&self.rows[i], self.senses[i], self.rhs[i])
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Largest violation of a row or bound at `x`.
    pub fn feasibility_residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_rows() {
            let lhs: f64 = self.rows[i].iter().zip(x).map(|(a, v)| a * v).sum();
            let gap = lhs - self.rhs[i];
            worst = worst.max(match self.senses[i] {
                RowSense::Le => gap,
                RowSense::Ge => -gap,
                RowSense::Eq => gap.abs(),
            });
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// The problem in CPLEX LP text format.
    pub fn to_text(&self) -> String {
        fn terms(out: &mut String, coefs: &[f64], names: &[String]) {
            let mut first = true;
            for (c, name) in coefs.iter().zip(names) {
                if *c == 0.0 {
                    continue;
                }
                let sign = if *c < 0.0 {
                    "-"
                } else if first {
                    ""
                } else {
                    "+"
                };
                if first {
                    let _ = write!(out, " {sign}{} {name}", c.abs());
                } else {
                    let _ = write!(out, " {sign} {} {name}", c.abs());
                }
                first = false;
            }
            if first {
                out.push_str(" 0");
            }
        }
        let mut out = String::new();
        out.push_str(match self.sense {
            Sense::Minimize => "Minimize\n",
            Sense::Maximize => "Maximize\n",
        });
        out.push_str(" obj:");
        terms(&mut out, &self.objective, &self.names);
        out.push_str("\nSubject To\n");
        for i in 0..self.n_rows() {
            let _ = write!(out, " c{i}:");
            terms(&mut out, &self.rows[i], &self.names);
            let _ = writeln!(out, " {} {}", self.senses[i].symbol(), self.rhs[i]);
        }
        out.push_str("Bounds\n");
        for (j, name) in self.names.iter().enumerate() {
            let (l, u) = (self.lower[j], self.upper[j]);
            match (l.is_finite(), u.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {name} free");
                }
                (true, false) if l == 0.0 => {}
                (true, false) => {
                    let _ = writeln!(out, " {name} >= {l}");
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {name} <= {u}");
                }
                (true, true) => {
                    let _ = writeln!(out, " {l} <= {name} <= {u}");
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless optimal.
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Shadow prices `∂ objective / ∂ b_i`, empty unless optimal.
    pub dual_values: Vec<f64>,
    pub pivots: usize,
    /// Largest `|y_i (b_i − a_i·x)|` or `|reduced cost| × distance to the nearer bound`.
    pub complementary_slackness: f64,
}

/// Solver limits.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_vars: usize,
    pub max_rows: usize,
    pub max_pivots: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_vars: DEFAULT_MAX_VARS,
            max_rows: DEFAULT_MAX_ROWS,
            max_pivots: 200_000,
        }
    }
}

/// `min (1/α)⟨λ, v⟩` over `0 ≤ λ_i ≤ p_i`, `Σ λ_i = α`; its value is the left AVaR.
pub fn avar_dual_problem(d: &DiscreteDist, alpha: f64) -> Result<LpProblem> {
    check_level(alpha)?;
    let atoms = d.atoms();
    let mut lp = LpProblem::new(Sense::Minimize, atoms.iter().map(|a| a.value / alpha).collect())?;
    for (j, atom) in atoms.iter().enumerate() {
        lp.set_bounds(j, 0.0, atom.prob)?;
    }
    lp.add_row(vec![1.0; atoms.len()], RowSense::Eq, alpha)?;
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn text_format() {
        let mut lp = LpProblem::new(Sense::Maximize, vec![1.0, -2.0]).unwrap();
        lp.add_row(vec![1.0, 1.0], RowSense::Le, 3.0).unwrap();
        lp.add_row(vec![0.0, -1.5], RowSense::Ge, -1.0).unwrap();
        lp.set_free(1).unwrap();
        let text = lp.to_text();
        assert_eq!(
            text,
            "Maximize\n obj: 1 x0 - 2 x1\nSubject To\n c0: 1 x0 + 1 x1 <= 3\n c1: -1.5 x1 >= -1\nBounds\n x1 free\nEnd\n"
        );
    }

    #[test]
    fn bad_input() {
        assert!(LpProblem::new(Sense::Minimize, vec![f64::NAN]).is_err());
        let mut lp = LpProblem::new(Sense::Minimize, vec![1.0]).unwrap();
        assert!(lp.add_row(vec![1.0, 2.0], RowSense::Le, 1.0).is_err());
        assert!(lp.set_bounds(0, 2.0, 1.0).is_err());
        assert!(lp.set_bounds(3, 0.0, 1.0).is_err());
    }

    #[test]
    fn avar_dual_fig4() {
        let d = corpus::fig4_dist();
        let sol = solve(&avar_dual_problem(&d, 0.7).unwrap()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value + 1.0 / 0.7).abs() < 1e-12);
        for (got, want) in sol.x.iter().zip([0.2, 0.4, 0.1, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
