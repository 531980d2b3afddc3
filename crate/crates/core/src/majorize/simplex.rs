//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `maximize c.x` subject to rows `a_i.x = b_i` or `a_i.x <= b_i`
//! and `x >= 0`. Infeasible programs come with a Farkas certificate `y`:
//! `y.a_j <= 0` for every column, `y_i <= 0` on inequality rows, and
//! `y.b > 0`.

pub(crate) const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowKind {
    Eq,
    Le,
}

#[derive(Debug, Clone)]
pub(crate) struct LinearProgram {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub kinds: Vec<RowKind>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Outcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible { certificate: Vec<f64>, phase_one: f64 },
    Unbounded,
    /// Pivot budget exhausted.
    Stalled,
}

struct Tableau {
    /// `rows x (cols + 1)`; last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs of minimizing `cost` for the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut rc = cost.to_vec();
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for (j, v) in rc.iter_mut().enumerate() {
                    *v -= cb * self.t[r][j];
                }
            }
        }
        rc
    }

    /// Minimizes `cost` over columns allowed by `enterable`. Returns false
    /// when unbounded; `None` when the pivot budget runs out.
    fn optimize(&mut self, cost: &[f64], enterable: &[bool], pivots: &mut usize) -> Option<bool> {
        loop {
            let rc = self.reduced_costs(cost);
            let Some(enter) = (0..self.cols).find(|&j| enterable[j] && rc[j] < -PIVOT_TOL) else {
                return Some(true);
            };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][enter];
                if a > PIVOT_TOL {
                    let ratio = self.t[r][rhs] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Some(false);
            };
            self.pivot(r, enter);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return None;
            }
        }
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Outcome {
        let m = self.a.len();
        let n = self.c.len();
        let n_slack = self.kinds.iter().filter(|k| **k == RowKind::Le).count();

        // Columns: originals, slacks, artificials.
        let mut sign = vec![1.0; m];
        let mut slack_col = vec![None; m];
        let mut next = n;
        for i in 0..m {
            if self.kinds[i] == RowKind::Le {
                slack_col[i] = Some(next);
                next += 1;
            }
            if self.b[i] < 0.0 {
                sign[i] = -1.0;
            }
        }
        debug_assert_eq!(next, n + n_slack);
        // A row starts with its slack basic when the slack enters with +1.
        let needs_art: Vec<bool> = (0..m).map(|i| !(slack_col[i].is_some() && sign[i] > 0.0)).collect();
        let n_art = needs_art.iter().filter(|x| **x).count();
        let cols = n + n_slack + n_art;

        let mut t = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let mut init_col = vec![0; m];
        let mut art = n + n_slack;
        for i in 0..m {
            for j in 0..n {
                t[i][j] = sign[i] * self.a[i][j];
            }
            if let Some(sc) = slack_col[i] {
                t[i][sc] = sign[i];
            }
            t[i][cols] = sign[i] * self.b[i];
            if needs_art[i] {
                t[i][art] = 1.0;
                basis[i] = art;
                init_col[i] = art;
                art += 1;
            } else {
                basis[i] = slack_col[i].unwrap();
                init_col[i] = basis[i];
            }
        }
        let mut tab = Tableau { t, basis, cols };
        let mut pivots = 0;

        // Phase I.
        let mut cost1 = vec![0.0; cols];
        for c in cost1.iter_mut().skip(n + n_slack) {
            *c = 1.0;
        }
        let all = vec![true; cols];
        if tab.optimize(&cost1, &all, &mut pivots).is_none() {
            return Outcome::Stalled;
        }
        let phase_one: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &bv)| bv >= n + n_slack)
            .map(|(r, _)| tab.t[r][cols])
            .sum();
        if phase_one > PIVOT_TOL {
            // y = c_B B^{-1}, read from the initial identity columns, mapped
            // back to the original row orientation.
            let certificate = (0..m)
                .map(|i| {
                    let y: f64 = (0..m).map(|r| cost1[tab.basis[r]] * tab.t[r][init_col[i]]).sum();
                    sign[i] * y
                })
                .collect();
            return Outcome::Infeasible { certificate, phase_one };
        }

        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.t.len() {
            if tab.basis[r] >= n + n_slack {
                let replacement = (0..n + n_slack).find(|&j| tab.t[r][j].abs() > PIVOT_TOL);
                match replacement {
                    Some(j) => {
                        tab.pivot(r, j);
                        pivots += 1;
                    }
                    None => {
                        tab.t.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }

        // Phase II.
        let mut cost2 = vec![0.0; cols];
        for j in 0..n {
            cost2[j] = -self.c[j];
        }
        let enterable: Vec<bool> = (0..cols).map(|j| j < n + n_slack).collect();
        match tab.optimize(&cost2, &enterable, &mut pivots) {
            None => Outcome::Stalled,
            Some(false) => Outcome::Unbounded,
            Some(true) => {
                let mut x = vec![0.0; n];
                for (r, &bv) in tab.basis.iter().enumerate() {
                    if bv < n {
                        x[bv] = tab.t[r][cols].max(0.0);
                    }
                }
                let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
                Outcome::Optimal { x, objective }
            }
        }
    }
}
