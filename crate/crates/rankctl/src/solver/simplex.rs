//! Dense two-phase primal simplex for small equality-form programs.
//!
//! Solves `max c.x  s.t.  A x = b, x >= 0` on a full tableau. Phase one
//! drives artificial variables out (dropping redundant rows), phase two
//! optimizes the real objective. Entering columns use the largest reduced
//! cost with a switch to Bland's rule after a fixed iteration budget, which
//! guarantees termination under degeneracy; ties in the ratio test leave the
//! lowest basis index. All scans are in fixed index order, so results are
//! deterministic.
//!
//! The problems built in this crate are a few thousand variables at most, so
//! the dense representation is deliberate: no factorization updates, no
//! sparsity bookkeeping, and every pivot touches memory linearly.

use crate::error::{Error, Result};

pub(crate) struct DenseLp {
    pub n_vars: usize,
    /// Maximization objective, one coefficient per variable.
    pub objective: Vec<f64>,
    /// Equality rows `(coefficients, rhs)`.
    pub rows: Vec<(Vec<f64>, f64)>,
}

pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    #[allow(dead_code)]
    pub objective: f64,
}

pub(crate) fn maximize(lp: &DenseLp) -> Result<LpSolution> {
    let n = lp.n_vars;
    let m = lp.rows.len();
    if lp.objective.len() != n {
        return Err(Error::dim(format!(
            "objective has {} coefficients for {} variables",
            lp.objective.len(),
            n
        )));
    }
    for (i, (coeffs, _)) in lp.rows.iter().enumerate() {
        if coeffs.len() != n {
            return Err(Error::dim(format!(
                "row {i} has {} coefficients for {} variables",
                coeffs.len(),
                n
            )));
        }
    }

    let mut scale = 1.0f64;
    for (coeffs, b) in &lp.rows {
        for a in coeffs {
            if !a.is_finite() {
                return Err(Error::invalid("non-finite constraint coefficient"));
            }
            scale = scale.max(a.abs());
        }
        if !b.is_finite() {
            return Err(Error::invalid("non-finite constraint rhs"));
        }
        scale = scale.max(b.abs());
    }

    let total = n + m;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    for (i, (coeffs, b)) in lp.rows.iter().enumerate() {
        // Phase one needs rhs >= 0; flip rows as required.
        let flip = if *b < 0.0 { -1.0 } else { 1.0 };
        let mut row: Vec<f64> = Vec::with_capacity(total);
        row.extend(coeffs.iter().map(|a| a * flip));
        row.resize(total, 0.0);
        row[n + i] = 1.0;
        tab.push(row);
        rhs.push(b * flip);
    }

    let mut t = Tableau {
        n_struct: n,
        tab,
        rhs,
        basis: (n..total).collect(),
        eps_pivot: 1e-10 * scale,
        eps_cost: 1e-9 * scale,
        iter_cap: 200 * (m + total) + 2000,
    };

    // Phase one: minimize the artificial mass.
    let mut phase1 = vec![0.0; total];
    for c in phase1.iter_mut().skip(n) {
        *c = -1.0;
    }
    t.run(&phase1)?;
    let residual: f64 = t
        .basis
        .iter()
        .zip(&t.rhs)
        .filter(|(b, _)| **b >= n)
        .map(|(_, r)| r)
        .sum();
    if residual > 1e-7 * scale {
        return Err(Error::solver(format!(
            "infeasible program: artificial residual {residual}"
        )));
    }
    t.evict_artificials();

    // Phase two: the real objective, artificial columns barred.
    let mut phase2 = lp.objective.clone();
    phase2.resize(total, 0.0);
    t.run(&phase2)?;

    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs[i].max(0.0);
        }
    }

    // Certify feasibility against the original rows.
    let feas_tol = 1e-6 * scale;
    for (i, (coeffs, b)) in lp.rows.iter().enumerate() {
        let lhs: f64 = coeffs.iter().zip(&x).map(|(a, xj)| a * xj).sum();
        if (lhs - b).abs() > feas_tol {
            return Err(Error::solver(format!(
                "solution violates row {i}: lhs {lhs}, rhs {b}"
            )));
        }
    }

    let objective = lp.objective.iter().zip(&x).map(|(c, xj)| c * xj).sum();
    Ok(LpSolution { x, objective })
}

struct Tableau {
    n_struct: usize,
    tab: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    eps_pivot: f64,
    eps_cost: f64,
    iter_cap: usize,
}

impl Tableau {
    /// Runs simplex iterations to optimality for `cost`. Only structural
    /// columns may enter the basis; artificials can only leave.
    fn run(&mut self, cost: &[f64]) -> Result<()> {
        let m = self.tab.len();
        let bland_after = 20 * (m + self.n_struct) + 200;
        let mut is_basic = vec![false; cost.len()];
        for &b in &self.basis {
            is_basic[b] = true;
        }

        let mut iters = 0usize;
        loop {
            iters += 1;
            if iters > self.iter_cap {
                return Err(Error::solver("simplex iteration limit reached"));
            }

            // Reduced costs r = c - y.A with y taken from the basis rows.
            let mut reduced = cost.to_vec();
            for (i, row) in self.tab.iter().enumerate() {
                let y = cost[self.basis[i]];
                if y != 0.0 {
                    for (r, a) in reduced.iter_mut().zip(row) {
                        *r -= y * a;
                    }
                }
            }

            let bland = iters > bland_after;
            let mut enter = None;
            let mut best = self.eps_cost;
            for (j, &r) in reduced.iter().enumerate().take(self.n_struct) {
                if is_basic[j] || r <= self.eps_cost {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if r > best {
                    best = r;
                    enter = Some(j);
                }
            }
            let Some(enter) = enter else {
                return Ok(());
            };

            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..m {
                let a = self.tab[i][enter];
                if a > self.eps_pivot {
                    let ratio = self.rhs[i] / a;
                    let better = ratio < best_ratio - 1e-12 * (1.0 + best_ratio.abs());
                    let tied = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                    if better || (tied && leave.map_or(true, |l| self.basis[i] < self.basis[l])) {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(leave) = leave else {
                return Err(Error::solver("unbounded program"));
            };

            is_basic[self.basis[leave]] = false;
            is_basic[enter] = true;
            self.pivot(leave, enter);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let m = self.tab.len();
        let piv = self.tab[row][col];
        let inv = 1.0 / piv;
        for a in self.tab[row].iter_mut() {
            *a *= inv;
        }
        self.tab[row][col] = 1.0;
        self.rhs[row] *= inv;
        if self.rhs[row] < 0.0 {
            self.rhs[row] = self.rhs[row].max(-0.0);
        }

        let pivot_row = std::mem::take(&mut self.tab[row]);
        let pivot_rhs = self.rhs[row];
        for i in 0..m {
            if i == row {
                continue;
            }
            let f = self.tab[i][col];
            if f == 0.0 {
                continue;
            }
            for (a, p) in self.tab[i].iter_mut().zip(&pivot_row) {
                *a -= f * p;
            }
            self.tab[i][col] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
            if self.rhs[i] < 0.0 && self.rhs[i] > -1e-11 {
                self.rhs[i] = 0.0;
            }
        }
        self.tab[row] = pivot_row;
        self.basis[row] = col;
    }

    /// After phase one: pivot basic artificials onto structural columns when
    /// possible, delete the (redundant) rows when not.
    fn evict_artificials(&mut self) {
        let m = self.tab.len();
        let mut keep = vec![true; m];
        for i in 0..m {
            if self.basis[i] < self.n_struct {
                continue;
            }
            let col = (0..self.n_struct).find(|&j| self.tab[i][j].abs() > self.eps_pivot);
            match col {
                Some(j) => self.pivot(i, j),
                None => keep[i] = false,
            }
        }
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut row = 0usize;
        self.tab.retain(|_| {
            let k = keep[row];
            row += 1;
            k
        });
        row = 0;
        self.rhs.retain(|_| {
            let k = keep[row];
            row += 1;
            k
        });
        row = 0;
        self.basis.retain(|_| {
            let k = keep[row];
            row += 1;
            k
        });
    }
}
