//! Exact-rational linear programming for the small dense instances that back
//! the fractional-block-sensitivity and matrix-game computations.
//!
//! Solves `max c.w subject to A w <= b, w >= 0` with a two-phase dense
//! simplex under Bland's rule, so every pivot is exact and termination is
//! guaranteed. Infeasible and unbounded instances are reported distinctly.

use crate::error::{Error, Result};
use crate::ratio::Rat;
use num_traits::{One, Signed, Zero};

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub value: Rat,
    /// Optimal assignment of the structural variables.
    pub primal: Vec<Rat>,
    /// Shadow prices of the constraints (dual solution).
    pub dual: Vec<Rat>,
}

struct Tableau {
    // rows[i]: coefficients over all columns, then rhs last
    rows: Vec<Vec<Rat>>,
    cost: Vec<Rat>, // reduced-cost row over all columns, then objective value last
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let inv = self.rows[row][col].clone();
        for v in self.rows[row].iter_mut() {
            *v = &*v / &inv;
        }
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col].clone();
            if factor.is_zero() {
                continue;
            }
            for j in 0..=self.cols {
                let delta = &self.rows[row][j] * &factor;
                self.rows[i][j] -= delta;
            }
        }
        let factor = self.cost[col].clone();
        if !factor.is_zero() {
            for j in 0..=self.cols {
                let delta = &self.rows[row][j] * &factor;
                self.cost[j] -= delta;
            }
        }
        self.basis[row] = col;
    }

    /// Simplex iterations with Bland's rule; `allowed` limits entering columns.
    /// Returns false when the objective is unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        loop {
            // entering column: smallest index with positive reduced cost
            let mut entering = None;
            for j in 0..allowed {
                if self.cost[j].is_positive() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else { return true };
            // leaving row: min ratio, ties by smallest basis variable (Bland)
            let mut best: Option<(Rat, usize, usize)> = None; // (ratio, basis var, row)
            for i in 0..self.rows.len() {
                if self.rows[i][col].is_positive() {
                    let ratio = &self.rows[i][self.cols] / &self.rows[i][col];
                    let key = (ratio, self.basis[i], i);
                    best = match best {
                        None => Some(key),
                        Some(b) if key < b => Some(key),
                        Some(b) => Some(b),
                    };
                }
            }
            let Some((_, _, row)) = best else { return false };
            self.pivot(row, col);
        }
    }
}

/// Maximize `objective . w` over `w >= 0` subject to `row . w <= rhs` for
/// each `(row, rhs)` constraint.
pub fn lp_solve(objective: &[Rat], constraints: &[(Vec<Rat>, Rat)]) -> Result<LpSolution> {
    let nv = objective.len();
    let m = constraints.len();
    for (row, _) in constraints {
        if row.len() != nv {
            return Err(Error::Invalid("constraint row length mismatch".into()));
        }
    }
    // Columns: nv structural, m slack, then (phase 1 only) artificials.
    let negative_rows: Vec<usize> =
        (0..m).filter(|&i| constraints[i].1.is_negative()).collect();
    let n_art = negative_rows.len();
    let cols = nv + m + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut art_col = nv + m;
    for (i, (row, rhs)) in constraints.iter().enumerate() {
        let mut r = vec![Rat::zero(); cols + 1];
        let flip = rhs.is_negative();
        for (j, a) in row.iter().enumerate() {
            r[j] = if flip { -a.clone() } else { a.clone() };
        }
        r[nv + i] = if flip { -Rat::one() } else { Rat::one() };
        r[cols] = if flip { -rhs.clone() } else { rhs.clone() };
        if flip {
            r[art_col] = Rat::one();
        }
        rows.push(r);
        if flip {
            art_col += 1;
        }
    }

    let mut basis = Vec::with_capacity(m);
    let mut next_art = nv + m;
    for i in 0..m {
        if constraints[i].1.is_negative() {
            basis.push(next_art);
            next_art += 1;
        } else {
            basis.push(nv + i);
        }
    }

    let mut t = Tableau { rows, cost: vec![Rat::zero(); cols + 1], basis, cols };

    if n_art > 0 {
        // Phase 1: maximize -(sum of artificials).
        for j in 0..cols {
            t.cost[j] = Rat::zero();
        }
        for (i, &b) in t.basis.clone().iter().enumerate() {
            if b >= nv + m {
                // cost row = sum of artificial rows (so reduced costs are w.r.t. basis)
                for j in 0..=cols {
                    let delta = t.rows[i][j].clone();
                    t.cost[j] += delta;
                }
            }
        }
        for j in nv + m..cols {
            t.cost[j] -= Rat::one();
        }
        // objective was implicitly -sum(artificials); optimize over all columns
        if !t.optimize(cols) {
            return Err(Error::Invalid("phase-1 objective unbounded".into()));
        }
        if t.cost[cols].is_positive() {
            return Err(Error::Infeasible);
        }
        // Drive any artificial still in the basis out (degenerate rows).
        for i in 0..m {
            if t.basis[i] >= nv + m {
                let col = (0..nv + m).find(|&j| !t.rows[i][j].is_zero());
                match col {
                    Some(c) => t.pivot(i, c),
                    None => {} // all-zero row: redundant constraint
                }
            }
        }
    }

    // Phase 2 cost row: objective minus contributions of basic columns.
    for j in 0..=cols {
        t.cost[j] = Rat::zero();
    }
    for j in 0..nv {
        t.cost[j] = objective[j].clone();
    }
    for i in 0..m {
        let b = t.basis[i];
        if b < nv && !objective[b].is_zero() {
            let factor = objective[b].clone();
            for j in 0..=t.cols {
                let delta = &t.rows[i][j] * &factor;
                t.cost[j] -= delta;
            }
        }
    }
    // Forbid artificial columns from re-entering.
    if !t.optimize(nv + m) {
        return Err(Error::Unbounded);
    }

    let mut primal = vec![Rat::zero(); nv];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < nv {
            primal[b] = t.rows[i][t.cols].clone();
        }
    }
    let dual: Vec<Rat> = (0..m).map(|i| -t.cost[nv + i].clone()).collect();
    let value = -t.cost[t.cols].clone();
    Ok(LpSolution { value, primal, dual })
}
