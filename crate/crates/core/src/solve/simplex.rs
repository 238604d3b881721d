//! Dense two-phase tableau simplex with Bland's rule, for problems whose
//! objective and constraints are all affine.

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Default)]
pub(crate) struct Lp {
    pub c: Vec<f64>,
    /// Rows `a . x <= b`.
    pub ub_rows: Vec<(Vec<f64>, f64)>,
    /// Rows `a . x == b`.
    pub eq_rows: Vec<(Vec<f64>, f64)>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, iterations: usize },
    Infeasible { iterations: usize },
    Unbounded { iterations: usize },
    IterationLimit { iterations: usize },
}

/// How an original variable is written in nonnegative columns.
enum Column {
    Shifted(usize, f64),
    Reflected(usize, f64),
    Split(usize, usize),
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = col;
    }

    fn rhs(&self, r: usize) -> f64 {
        *self.rows[r].last().unwrap()
    }

    /// Minimizes `cost . y` over the columns `< allowed`. Returns the
    /// number of pivots, or `Err(true)` when unbounded and `Err(false)` at
    /// the iteration cap.
    fn run(
        &mut self,
        cost: &[f64],
        allowed: usize,
        cap: usize,
        used: &mut usize,
    ) -> Result<(), bool> {
        loop {
            let entering = (0..allowed).find(|&j| {
                let z: f64 = self
                    .basis
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| cost[b] * self.rows[i][j])
                    .sum();
                cost[j] - z < -EPS
            });
            let Some(col) = entering else { return Ok(()) };
            let mut best: Option<(f64, usize)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col] > EPS {
                    let ratio = self.rhs(i) / row[col];
                    let better = match best {
                        None => true,
                        Some((r, bi)) => {
                            ratio < r - EPS || (ratio <= r + EPS && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        best = Some((ratio, i));
                    }
                }
            }
            let Some((_, r)) = best else { return Err(true) };
            if *used >= cap {
                return Err(false);
            }
            *used += 1;
            self.pivot(r, col);
        }
    }
}

pub(crate) fn solve_lp(lp: &Lp, cap: usize) -> LpOutcome {
    let n = lp.c.len();
    let mut columns = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut box_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lb[j], lp.ub[j]);
        columns.push(if lo.is_finite() {
            if hi.is_finite() {
                box_rows.push((ncols, hi - lo));
            }
            ncols += 1;
            Column::Shifted(ncols - 1, lo)
        } else if hi.is_finite() {
            ncols += 1;
            Column::Reflected(ncols - 1, hi)
        } else {
            ncols += 2;
            Column::Split(ncols - 2, ncols - 1)
        });
    }
    // rewrite a . x in terms of the nonnegative columns
    let translate = |a: &[f64], b: f64| -> (Vec<f64>, f64) {
        let mut row = vec![0.0; ncols];
        let mut rhs = b;
        for (aj, col) in a.iter().zip(&columns) {
            match *col {
                Column::Shifted(k, lo) => {
                    row[k] += aj;
                    rhs -= aj * lo;
                }
                Column::Reflected(k, hi) => {
                    row[k] -= aj;
                    rhs -= aj * hi;
                }
                Column::Split(p, q) => {
                    row[p] += aj;
                    row[q] -= aj;
                }
            }
        }
        (row, rhs)
    };
    let mut ub_rows: Vec<(Vec<f64>, f64)> =
        lp.ub_rows.iter().map(|(a, b)| translate(a, *b)).collect();
    for (k, width) in box_rows {
        let mut row = vec![0.0; ncols];
        row[k] = 1.0;
        ub_rows.push((row, width));
    }
    let eq_rows: Vec<(Vec<f64>, f64)> = lp.eq_rows.iter().map(|(a, b)| translate(a, *b)).collect();
    let (cost_y, _) = translate(&lp.c, 0.0);

    let m = ub_rows.len() + eq_rows.len();
    let nslack = ub_rows.len();
    let width = ncols + nslack + m + 1;
    let art0 = ncols + nslack;
    let mut rows = Vec::with_capacity(m);
    for (i, (a, b)) in ub_rows.iter().chain(eq_rows.iter()).enumerate() {
        let mut row = vec![0.0; width];
        row[..ncols].copy_from_slice(a);
        if i < nslack {
            row[ncols + i] = 1.0;
        }
        row[width - 1] = *b;
        if *b < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        row[art0 + i] = 1.0;
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (art0..art0 + m).collect(),
    };
    let mut used = 0;
    let mut phase1 = vec![0.0; width - 1];
    phase1[art0..].iter_mut().for_each(|v| *v = 1.0);
    match t.run(&phase1, art0 + m, cap, &mut used) {
        Ok(()) => {}
        Err(true) => unreachable!("phase one is bounded below"),
        Err(false) => return LpOutcome::IterationLimit { iterations: used },
    }
    let scale = 1.0
        + t.rows
            .iter()
            .map(|r| r.last().unwrap().abs())
            .fold(0.0, f64::max);
    let infeas: f64 = t
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= art0)
        .map(|(i, _)| t.rhs(i))
        .sum();
    if infeas > 1e-9 * scale {
        return LpOutcome::Infeasible { iterations: used };
    }
    // drive artificials out of the basis; rows where that is impossible are redundant
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= art0 {
            match (0..art0).find(|&j| t.rows[r][j].abs() > 1e-9) {
                Some(j) => t.pivot(r, j),
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    let mut phase2 = vec![0.0; width - 1];
    phase2[..ncols].copy_from_slice(&cost_y);
    match t.run(&phase2, art0, cap, &mut used) {
        Ok(()) => {}
        Err(true) => return LpOutcome::Unbounded { iterations: used },
        Err(false) => return LpOutcome::IterationLimit { iterations: used },
    }
    let mut y = vec![0.0; width - 1];
    for (i, &b) in t.basis.iter().enumerate() {
        y[b] = t.rhs(i);
    }
    let x = columns
        .iter()
        .map(|col| match *col {
            Column::Shifted(k, lo) => lo + y[k],
            Column::Reflected(k, hi) => hi - y[k],
            Column::Split(p, q) => y[p] - y[q],
        })
        .collect();
    LpOutcome::Optimal {
        x,
        iterations: used,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(
        c: &[f64],
        ub_rows: &[(&[f64], f64)],
        eq_rows: &[(&[f64], f64)],
        lb: &[f64],
        ub: &[f64],
    ) -> Lp {
        Lp {
            c: c.to_vec(),
            ub_rows: ub_rows.iter().map(|(a, b)| (a.to_vec(), *b)).collect(),
            eq_rows: eq_rows.iter().map(|(a, b)| (a.to_vec(), *b)).collect(),
            lb: lb.to_vec(),
            ub: ub.to_vec(),
        }
    }

    fn optimum(o: LpOutcome) -> Vec<f64> {
        match o {
            LpOutcome::Optimal { x, .. } => x,
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6)
        let p = lp(
            &[-3.0, -5.0],
            &[(&[1.0, 0.0], 4.0), (&[0.0, 2.0], 12.0), (&[3.0, 2.0], 18.0)],
            &[],
            &[0.0, 0.0],
            &[f64::INFINITY; 2],
        );
        let x = optimum(solve_lp(&p, 100));
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn free_and_reflected_variables() {
        // min x + y with x free, y <= 3, x - y == -5, x >= -10 as a row
        let inf = f64::INFINITY;
        let p = lp(
            &[1.0, 1.0],
            &[(&[-1.0, 0.0], 10.0)],
            &[(&[1.0, -1.0], -5.0)],
            &[-inf, -inf],
            &[inf, 3.0],
        );
        let x = optimum(solve_lp(&p, 100));
        assert!((x[0] + 10.0).abs() < 1e-9 && (x[1] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let inf = f64::INFINITY;
        let p = lp(&[1.0], &[(&[1.0], -1.0)], &[], &[0.0], &[inf]);
        assert!(matches!(solve_lp(&p, 100), LpOutcome::Infeasible { .. }));
        let p = lp(&[-1.0], &[], &[], &[0.0], &[inf]);
        assert!(matches!(solve_lp(&p, 100), LpOutcome::Unbounded { .. }));
    }

    #[test]
    fn redundant_equalities() {
        let inf = f64::INFINITY;
        let p = lp(
            &[1.0, 2.0],
            &[],
            &[(&[1.0, 1.0], 1.0), (&[2.0, 2.0], 2.0)],
            &[0.0, 0.0],
            &[inf, inf],
        );
        let x = optimum(solve_lp(&p, 100));
        assert!((x[0] - 1.0).abs() < 1e-9 && x[1].abs() < 1e-9);
    }
}
