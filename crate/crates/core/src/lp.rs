//! Dense bounded-variable primal simplex.
//!
//! Solves `maximize c·x subject to A·x ≤ b, l ≤ x ≤ u` with finite bounds.
//! Rows get a slack each; rows whose residual at `x = l` is negative get an
//! artificial variable, and a phase-one objective drives those to zero.
//! Bland's rule (lowest eligible index for both the entering and the
//! leaving variable) prevents cycling.

use crate::error::{Error, Result};

/// Primal feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Smallest tableau entry accepted as a pivot.
pub const PIVOT_TOL: f64 = 1e-9;
/// Reduced-cost threshold for an improving direction.
const OPTIMALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    /// Row-major, one inner vector per constraint.
    pub constraint_matrix: Vec<Vec<f64>>,
    pub constraint_rhs: Vec<f64>,
    pub variable_bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraint_rhs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.variable_bounds.len() != n {
            return Err(Error::DimensionMismatch {
                what: "variable_bounds",
                expected: n,
                found: self.variable_bounds.len(),
            });
        }
        if self.constraint_matrix.len() != self.constraint_rhs.len() {
            return Err(Error::DimensionMismatch {
                what: "constraint_matrix",
                expected: self.constraint_rhs.len(),
                found: self.constraint_matrix.len(),
            });
        }
        if let Some(row) = self.constraint_matrix.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "constraint row",
                expected: n,
                found: row.len(),
            });
        }
        for (j, &(lo, hi)) in self.variable_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "variable {j} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        let all_finite = self
            .objective
            .iter()
            .chain(&self.constraint_rhs)
            .chain(self.constraint_matrix.iter().flatten())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("LP data must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Safety stop; not reached on well-posed inputs.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs of the current phase objective.
    reduced: Vec<f64>,
    basis: Vec<usize>,
    basic_row: Vec<Option<usize>>,
    value: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn compute_reduced(&mut self, cost: &[f64]) {
        self.reduced = cost.to_vec();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (d, t) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * t;
                }
            }
        }
    }

    fn entering(&self) -> Option<(usize, f64)> {
        (0..self.value.len()).find_map(|j| {
            if self.basic_row[j].is_some() || self.lower[j] == self.upper[j] {
                return None;
            }
            let d = self.reduced[j];
            let at_upper = self.value[j] >= self.upper[j];
            if !at_upper && d > OPTIMALITY_TOL {
                Some((j, 1.0))
            } else if at_upper && d < -OPTIMALITY_TOL {
                Some((j, -1.0))
            } else {
                None
            }
        })
    }

    fn step(&mut self) -> Step {
        let Some((j, dir)) = self.entering() else {
            return Step::Optimal;
        };

        let mut theta = self.upper[j] - self.lower[j];
        let mut leave: Option<(usize, bool)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = dir * row[j];
            let b = self.basis[i];
            let (limit, to_lower) = if a > PIVOT_TOL {
                ((self.value[b] - self.lower[b]).max(0.0) / a, true)
            } else if a < -PIVOT_TOL && self.upper[b].is_finite() {
                ((self.upper[b] - self.value[b]).max(0.0) / -a, false)
            } else {
                continue;
            };
            let better = match leave {
                None => limit < theta,
                Some((r, _)) => limit < theta || (limit == theta && b < self.basis[r]),
            };
            if better {
                theta = limit;
                leave = Some((i, to_lower));
            }
        }
        if !theta.is_finite() {
            return Step::Unbounded;
        }

        let shift = dir * theta;
        self.value[j] += shift;
        for (i, row) in self.rows.iter().enumerate() {
            let b = self.basis[i];
            self.value[b] -= shift * row[j];
        }

        match leave {
            None => {
                // Bound flip of the entering variable.
                self.value[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
            }
            Some((r, to_lower)) => {
                let out = self.basis[r];
                self.value[out] = if to_lower { self.lower[out] } else { self.upper[out] };
                self.pivot(r, j);
            }
        }
        Step::Moved
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.rows[r][j];
        for t in self.rows[r].iter_mut() {
            *t /= p;
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (t, pr) in row.iter_mut().zip(&pivot_row) {
                    *t -= f * pr;
                }
            }
        }
        let f = self.reduced[j];
        if f != 0.0 {
            for (d, pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= f * pr;
            }
        }
        self.rows[r] = pivot_row;
        let out = self.basis[r];
        self.basic_row[out] = None;
        self.basic_row[j] = Some(r);
        self.basis[r] = j;
    }

    fn run(&mut self, limit: usize) -> Option<Step> {
        for _ in 0..limit {
            match self.step() {
                Step::Moved => continue,
                done => return Some(done),
            }
        }
        None
    }
}

/// Solves the LP with the two-phase bounded simplex.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.num_constraints();

    let residual: Vec<f64> = (0..m)
        .map(|i| {
            let ax: f64 = lp.constraint_matrix[i]
                .iter()
                .zip(&lp.variable_bounds)
                .map(|(a, (lo, _))| a * lo)
                .sum();
            lp.constraint_rhs[i] - ax
        })
        .collect();
    let artificial_rows: Vec<usize> = (0..m).filter(|&i| residual[i] < 0.0).collect();
    let total = n + m + artificial_rows.len();

    let mut lower = vec![0.0; total];
    let mut upper = vec![f64::INFINITY; total];
    let mut value = vec![0.0; total];
    for (j, &(lo, hi)) in lp.variable_bounds.iter().enumerate() {
        lower[j] = lo;
        upper[j] = hi;
        value[j] = lo;
    }

    let mut rows = vec![vec![0.0; total]; m];
    let mut basis = vec![0; m];
    let mut basic_row = vec![None; total];
    for i in 0..m {
        rows[i][..n].copy_from_slice(&lp.constraint_matrix[i]);
        rows[i][n + i] = 1.0;
    }
    for i in 0..m {
        basis[i] = n + i;
        value[n + i] = residual[i].max(0.0);
    }
    for (a, &i) in artificial_rows.iter().enumerate() {
        let col = n + m + a;
        // Row reads A x + s - a = b; negate so the artificial column is +1.
        rows[i][col] = -1.0;
        for t in rows[i].iter_mut() {
            *t = -*t;
        }
        basis[i] = col;
        value[col] = -residual[i];
    }
    for (i, &b) in basis.iter().enumerate() {
        basic_row[b] = Some(i);
    }

    let mut tab = Tableau {
        rows,
        reduced: Vec::new(),
        basis,
        basic_row,
        value,
        lower,
        upper,
    };
    let limit = 50 * (total + m).max(100) * (m + 1);

    if !artificial_rows.is_empty() {
        let mut phase_one = vec![0.0; total];
        phase_one[n + m..].fill(-1.0);
        tab.compute_reduced(&phase_one);
        if tab.run(limit).is_none() {
            return Ok(finish(lp, &tab, LpStatus::IterationLimit));
        }
        let infeasibility: f64 = tab.value[n + m..].iter().sum();
        if infeasibility > FEASIBILITY_TOL {
            return Ok(finish(lp, &tab, LpStatus::Infeasible));
        }
        for j in n + m..total {
            tab.upper[j] = 0.0;
            tab.lower[j] = 0.0;
        }
    }

    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(&lp.objective);
    tab.compute_reduced(&cost);
    let status = match tab.run(limit) {
        Some(Step::Optimal) => LpStatus::Optimal,
        Some(_) => LpStatus::Unbounded,
        None => LpStatus::IterationLimit,
    };
    Ok(finish(lp, &tab, status))
}

fn finish(lp: &LinearProgram, tab: &Tableau, status: LpStatus) -> LpSolution {
    let n = lp.num_vars();
    let x: Vec<f64> = tab.value[..n]
        .iter()
        .zip(&lp.variable_bounds)
        .map(|(&v, &(lo, hi))| v.clamp(lo, hi))
        .collect();
    let objective_value = x.iter().zip(&lp.objective).map(|(a, c)| a * c).sum();
    LpSolution {
        status,
        x,
        objective_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lp(c: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>, bounds: Vec<(f64, f64)>) -> LinearProgram {
        LinearProgram {
            objective: c,
            constraint_matrix: a,
            constraint_rhs: b,
            variable_bounds: bounds,
        }
    }

    #[test]
    fn box_only() {
        let sol = solve_lp(&lp(vec![1.0], vec![], vec![], vec![(0.0, 1.0)])).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.x, vec![1.0]);
        assert_eq!(sol.objective_value, 1.0);
    }

    #[test]
    fn degenerate_face() {
        let sol = solve_lp(&lp(
            vec![1.0, 1.0],
            vec![vec![1.0, 1.0]],
            vec![1.0],
            vec![(0.0, 1.0); 2],
        ))
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn simplex_vertex() {
        let sol = solve_lp(&lp(
            vec![3.0, 2.0],
            vec![vec![1.0, 1.0]],
            vec![1.0],
            vec![(0.0, 1.0); 2],
        ))
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.objective_value, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn needs_phase_one() {
        // x + y >= 1.5 written as -x - y <= -1.5; maximize -x - 2y.
        let sol = solve_lp(&lp(
            vec![-1.0, -2.0],
            vec![vec![-1.0, -1.0]],
            vec![-1.5],
            vec![(0.0, 1.0); 2],
        ))
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn reports_infeasible() {
        let sol = solve_lp(&lp(
            vec![1.0],
            vec![vec![-1.0]],
            vec![-2.0],
            vec![(0.0, 1.0)],
        ))
        .unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(solve_lp(&lp(vec![1.0], vec![], vec![], vec![(1.0, 0.0)])).is_err());
        assert!(solve_lp(&lp(vec![1.0], vec![], vec![], vec![(0.0, f64::INFINITY)])).is_err());
    }

    /// Objective at the best vertex, by enumerating every choice of `n`
    /// active constraints among rows and bounds and solving the square system.
    fn vertex_enumeration(p: &LinearProgram) -> Option<f64> {
        let n = p.num_vars();
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for (row, &b) in p.constraint_matrix.iter().zip(&p.constraint_rhs) {
            planes.push((row.clone(), b));
        }
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e.clone(), p.variable_bounds[j].1));
            planes.push((e.iter().map(|v| -v).collect(), -p.variable_bounds[j].0));
        }
        let mut best: Option<f64> = None;
        let mut pick = Vec::new();
        fn combos(
            start: usize,
            left: usize,
            total: usize,
            pick: &mut Vec<usize>,
            f: &mut dyn FnMut(&[usize]),
        ) {
            if left == 0 {
                f(pick);
                return;
            }
            for i in start..total {
                pick.push(i);
                combos(i + 1, left - 1, total, pick, f);
                pick.pop();
            }
        }
        let total = planes.len();
        combos(0, n, total, &mut pick, &mut |idx| {
            let mut a: Vec<Vec<f64>> = idx.iter().map(|&i| planes[i].0.clone()).collect();
            let mut b: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
            // Gaussian elimination with partial pivoting.
            for col in 0..n {
                let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
                if a[piv][col].abs() < 1e-10 {
                    return;
                }
                a.swap(col, piv);
                b.swap(col, piv);
                for r in 0..n {
                    if r != col {
                        let f = a[r][col] / a[col][col];
                        for c in col..n {
                            a[r][c] -= f * a[col][c];
                        }
                        b[r] -= f * b[col];
                    }
                }
            }
            let x: Vec<f64> = (0..n).map(|i| b[i] / a[i][i]).collect();
            let feasible = planes
                .iter()
                .all(|(row, rhs)| row.iter().zip(&x).map(|(r, v)| r * v).sum::<f64>() <= rhs + 1e-9);
            if feasible {
                let val: f64 = x.iter().zip(&p.objective).map(|(a, c)| a * c).sum();
                if best.is_none_or(|b| val > b) {
                    best = Some(val);
                }
            }
        });
        best
    }

    fn small_lp() -> impl Strategy<Value = LinearProgram> {
        (1usize..=4, 0usize..=4).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(-5.0f64..5.0, n),
                proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, n), m),
                proptest::collection::vec(-1.0f64..4.0, m),
                proptest::collection::vec((-2.0f64..0.0, 0.0f64..2.0), n),
            )
                .prop_map(|(c, a, b, bounds)| LinearProgram {
                    objective: c,
                    constraint_matrix: a,
                    constraint_rhs: b,
                    variable_bounds: bounds,
                })
        })
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(p in small_lp()) {
            let sol = solve_lp(&p).unwrap();
            match vertex_enumeration(&p) {
                Some(best) => {
                    prop_assert_eq!(sol.status, LpStatus::Optimal);
                    prop_assert!((sol.objective_value - best).abs() < 1e-7,
                        "simplex {} vs enumeration {}", sol.objective_value, best);
                    for (row, &b) in p.constraint_matrix.iter().zip(&p.constraint_rhs) {
                        let ax: f64 = row.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
                        prop_assert!(ax <= b + FEASIBILITY_TOL);
                    }
                }
                None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            }
        }

        #[test]
        fn beats_random_feasible_points(p in small_lp(), seeds in proptest::collection::vec(0.0f64..1.0, 400)) {
            let sol = solve_lp(&p).unwrap();
            for chunk in seeds.chunks(4).take(100) {
                let x: Vec<f64> = p.variable_bounds.iter().zip(chunk.iter().cycle())
                    .map(|(&(lo, hi), &u)| lo + u * (hi - lo)).collect();
                let feasible = p.constraint_matrix.iter().zip(&p.constraint_rhs)
                    .all(|(row, &b)| row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() <= b);
                if feasible {
                    prop_assert_eq!(sol.status, LpStatus::Optimal);
                    let val: f64 = x.iter().zip(&p.objective).map(|(a, c)| a * c).sum();
                    prop_assert!(sol.objective_value >= val - 1e-9);
                }
            }
        }
    }
}
