//! Two-phase dense tableau simplex with Bland's anti-cycling rule.

use std::collections::VecDeque;

use super::{LpProblem, LpSolution, LpStatus, RowSense, Sense, SolverOptions};
use crate::{Error, Result};

const COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-11;
const FEASIBILITY_TOL: f64 = 1e-9;
const LOG_LEN: usize = 64;

/// Solves `p` with [`SolverOptions::default`].
pub fn solve(p: &LpProblem) -> Result<LpSolution> {
    solve_with(p, &SolverOptions::default())
}

/// One column of the standard form: `x_var += sign · column`.
struct Column {
    var: usize,
    sign: f64,
}

struct Tableau {
    m: usize,
    width: usize,
    t: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
    /// Columns that may not enter (artificials in phase 2).
    barred: Vec<bool>,
    pivots: usize,
    max_pivots: usize,
    log: VecDeque<String>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn breakdown(&self, message: String) -> Error {
        Error::Solver {
            message,
            pivot_log: self.log.iter().cloned().collect(),
        }
    }

    fn pivot(&mut self, row: usize, col: usize, phase: u8) -> Result<()> {
        let w = self.width;
        let p = self.at(row, col);
        if !p.is_finite() || p.abs() < PIVOT_TOL {
            return Err(self.breakdown(format!("pivot element {p:e} at row {row}, column {col}")));
        }
        if self.log.len() == LOG_LEN {
            self.log.pop_front();
        }
        self.log.push_back(format!(
            "phase {phase} pivot {}: enter {col}, leave {} (row {row}), element {p:e}",
            self.pivots, self.basis[row]
        ));
        self.pivots += 1;
        if self.pivots > self.max_pivots {
            return Err(self.breakdown(format!("exceeded {} pivots", self.max_pivots)));
        }
        let (before, rest) = self.t.split_at_mut(row * w);
        let (prow, after) = rest.split_at_mut(w);
        prow.iter_mut().for_each(|v| *v /= p);
        prow[col] = 1.0;
        let eliminate = |r: &mut [f64]| {
            let f = r[col];
            if f != 0.0 {
                for (v, &q) in r.iter_mut().zip(prow.iter()) {
                    *v -= f * q;
                }
                r[col] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        eliminate(&mut self.d);
        self.basis[row] = col;
        if self.d.iter().any(|v| !v.is_finite()) {
            return Err(self.breakdown("non-finite reduced cost".into()));
        }
        Ok(())
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let w = self.width;
        self.d = cost.to_vec();
        self.d.push(0.0);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.d[j] -= cb * self.t[i * w + j];
                }
            }
        }
    }

    /// Runs Bland's rule to optimality. Returns `false` on unboundedness.
    fn optimize(&mut self, phase: u8) -> Result<bool> {
        loop {
            let Some(col) = (0..self.width - 1).find(|&j| !self.barred[j] && self.d[j] < -COST_TOL) else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, col);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((k, r)) => {
                        let tie = (ratio - r).abs() <= 1e-12 * (1.0 + r.abs());
                        if ratio < r && !tie || tie && self.basis[i] < self.basis[k] {
                            Some((i, ratio))
                        } else {
                            Some((k, r))
                        }
                    }
                };
            }
            let Some((row, _)) = best else {
                return Ok(false);
            };
            self.pivot(row, col, phase)?;
        }
    }
}

/// Solves `p` by the two-phase simplex method.
pub fn solve_with(p: &LpProblem, opts: &SolverOptions) -> Result<LpSolution> {
    if p.n_vars() > opts.max_vars || p.n_rows() > opts.max_rows {
        return Err(Error::Resource(format!(
            "LP with {} variables and {} rows exceeds the cap of {} × {}",
            p.n_vars(),
            p.n_rows(),
            opts.max_vars,
            opts.max_rows
        )));
    }
    let n = p.n_vars();

    // x = offset + Σ sign · y over the columns of each variable
    let mut offset = vec![0.0; n];
    let mut columns: Vec<Column> = Vec::new();
    let mut boxes: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = p.bounds(j);
        match (l.is_finite(), u.is_finite()) {
            (true, _) => {
                offset[j] = l;
                if u.is_finite() {
                    boxes.push((columns.len(), u - l));
                }
                columns.push(Column { var: j, sign: 1.0 });
            }
            (false, true) => {
                offset[j] = u;
                columns.push(Column { var: j, sign: -1.0 });
            }
            (false, false) => {
                columns.push(Column { var: j, sign: 1.0 });
                columns.push(Column { var: j, sign: -1.0 });
            }
        }
    }
    let ns = columns.len();

    // standard rows with non-negative right-hand sides
    let mut rows: Vec<(Vec<f64>, RowSense, f64)> = Vec::with_capacity(p.n_rows() + boxes.len());
    let mut flipped = Vec::with_capacity(p.n_rows());
    for i in 0..p.n_rows() {
        let (a, sense, b) = p.row(i);
        let coefs: Vec<f64> = columns.iter().map(|c| c.sign * a[c.var]).collect();
        let b = b - a.iter().zip(&offset).map(|(x, o)| x * o).sum::<f64>();
        rows.push((coefs, sense, b));
    }
    for &(col, width) in &boxes {
        let mut coefs = vec![0.0; ns];
        coefs[col] = 1.0;
        rows.push((coefs, RowSense::Le, width));
    }
    for (coefs, sense, b) in rows.iter_mut() {
        let flip = *b < 0.0;
        if flip {
            coefs.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
            *sense = match *sense {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
        flipped.push(flip);
    }
    let m = rows.len();

    // column layout: structural | slack or surplus | artificial | rhs
    let n_slack = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != RowSense::Le).count();
    let total = ns + n_slack + n_art;
    let width = total + 1;
    let mut t = vec![0.0; m * width];
    let mut basis = vec![0; m];
    let mut identity = vec![0; m];
    let mut is_art = vec![false; total];
    let (mut next_slack, mut next_art) = (ns, ns + n_slack);
    for (i, (coefs, sense, b)) in rows.iter().enumerate() {
        t[i * width..i * width + ns].copy_from_slice(coefs);
        t[i * width + total] = *b;
        if *sense != RowSense::Eq {
            t[i * width + next_slack] = if *sense == RowSense::Le { 1.0 } else { -1.0 };
            if *sense == RowSense::Le {
                identity[i] = next_slack;
            }
            next_slack += 1;
        }
        if *sense != RowSense::Le {
            t[i * width + next_art] = 1.0;
            identity[i] = next_art;
            is_art[next_art] = true;
            next_art += 1;
        }
        basis[i] = identity[i];
    }
    let mut tab = Tableau {
        m,
        width,
        t,
        d: Vec::new(),
        basis,
        barred: vec![false; total],
        pivots: 0,
        max_pivots: opts.max_pivots,
        log: VecDeque::new(),
    };

    let infeasible = || LpSolution {
        status: LpStatus::Infeasible,
        x: Vec::new(),
        objective_value: f64::NAN,
        dual_values: Vec::new(),
        pivots: 0,
        complementary_slackness: f64::NAN,
    };

    if n_art > 0 {
        let phase1: Vec<f64> = is_art.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        tab.set_costs(&phase1);
        tab.optimize(1)?;
        let scale = rows.iter().fold(1.0f64, |s, r| s.max(r.2));
        if -tab.d[total] > FEASIBILITY_TOL * scale {
            return Ok(LpSolution {
                pivots: tab.pivots,
                ..infeasible()
            });
        }
        for i in 0..m {
            if is_art[tab.basis[i]] {
                if let Some(j) = (0..total).find(|&j| !is_art[j] && tab.at(i, j).abs() > 1e-9) {
                    tab.pivot(i, j, 1)?;
                }
            }
        }
        tab.barred = is_art.clone();
    }

    let flip_obj = if p.sense() == Sense::Maximize { -1.0 } else { 1.0 };
    let mut cost = vec![0.0; total];
    for (k, c) in columns.iter().enumerate() {
        cost[k] = flip_obj * c.sign * p.objective()[c.var];
    }
    tab.set_costs(&cost);
    if !tab.optimize(2)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            pivots: tab.pivots,
            objective_value: flip_obj * f64::NEG_INFINITY,
            ..infeasible()
        });
    }

    let mut y = vec![0.0; total];
    for i in 0..m {
        y[tab.basis[i]] = tab.rhs(i).max(0.0);
    }
    let mut x = offset;
    for (k, c) in columns.iter().enumerate() {
        x[c.var] += c.sign * y[k];
    }
    // shadow prices of the original rows
    let dual_values: Vec<f64> = (0..p.n_rows())
        .map(|i| {
            let yi = cost[identity[i]] - tab.d[identity[i]];
            let yi = if flipped[i] { -yi } else { yi };
            flip_obj * yi
        })
        .collect();
    let objective_value = p.objective_at(&x);

    let mut cs = 0.0f64;
    for i in 0..p.n_rows() {
        let (a, _, b) = p.row(i);
        let slack = b - a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>();
        cs = cs.max((dual_values[i] * slack).abs());
    }
    for j in 0..n {
        let reduced = p.objective()[j] - (0..p.n_rows()).map(|i| p.row(i).0[j] * dual_values[i]).sum::<f64>();
        let (l, u) = p.bounds(j);
        let dist = (x[j] - l).min(u - x[j]);
        cs = cs.max(if dist.is_finite() {
            (reduced * dist).abs()
        } else {
            reduced.abs()
        });
    }

    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value,
        dual_values,
        pivots: tab.pivots,
        complementary_slackness: cs,
    })
}
