//! Dense strictly convex quadratic programming.
//!
//! Solves  min 1/2 x'Gx + a'x  subject to  c_i'x >= b_i  with G symmetric
//! positive definite, by the dual active-set method: start at the
//! unconstrained minimum, repeatedly pick the most violated constraint and
//! take primal/dual steps that keep the working set optimal, dropping
//! constraints whose multiplier would go negative.  Needs no feasible
//! starting point and detects infeasibility (step to infinity in the dual).
//!
//! Problems here are small (tens of variables, ~100 rows), so each working
//! set change just re-solves the dense subsystem instead of maintaining
//! incremental factorizations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Identifies where a constraint row came from, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowTag {
    /// bound on decision variable `var`, lower side if `lower`
    Input {
        step: usize,
        lower: bool,
    },
    /// bound on predicted state component `comp` at horizon step `step`
    State {
        comp: usize,
        step: usize,
        lower: bool,
    },
    /// nonnegativity of a softening slack
    Slack {
        index: usize,
    },
    Other,
}

impl std::fmt::Display for RowTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowTag::Input { step, lower } => {
                write!(f, "u[{}] {}", step, if *lower { "lower" } else { "upper" })
            }
            RowTag::State { comp, step, lower } => {
                write!(f, "x{}[{}] {}", comp, step, if *lower { "lower" } else { "upper" })
            }
            RowTag::Slack { index } => write!(f, "slack[{index}] >= 0"),
            RowTag::Other => write!(f, "row"),
        }
    }
}

/// One inequality `coef' x >= rhs`.
#[derive(Debug, Clone)]
pub struct QpRow {
    pub coef: DVector<f64>,
    pub rhs: f64,
    pub tag: RowTag,
    /// state rows may be softened when a problem is infeasible; input and
    /// slack rows never are
    pub softenable: bool,
}

/// min 1/2 x'Gx + lin'x  s.t.  rows.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub g: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub rows: Vec<QpRow>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// multiplier per row (internally normalized rows), zero when inactive
    pub multipliers: Vec<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub enum QpFailure {
    /// no point satisfies all rows; `blocking` is the row whose addition had
    /// no admissible step
    Infeasible {
        blocking: usize,
        tag: RowTag,
    },
    NotPositiveDefinite,
    IterationLimit,
}

impl std::fmt::Display for QpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QpFailure::Infeasible { blocking, tag } => {
                write!(f, "infeasible at row {blocking} ({tag})")
            }
            QpFailure::NotPositiveDefinite => write!(f, "hessian not positive definite"),
            QpFailure::IterationLimit => write!(f, "active-set iteration limit"),
        }
    }
}

const TOL_VIOLATION: f64 = 1e-11;
const TOL_DIRECTION: f64 = 1e-13;

/// Feasibility slack of row `i` at `x` (negative = violated), on the
/// normalized rows the solver works with.
fn slack(row: &QpRow, x: &DVector<f64>) -> f64 {
    row.coef.dot(x) - row.rhs
}

pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpFailure> {
    let n = problem.g.nrows();
    debug_assert_eq!(problem.g.ncols(), n);
    debug_assert_eq!(problem.lin.len(), n);

    let chol: Cholesky<f64, Dyn> =
        Cholesky::new(problem.g.clone()).ok_or(QpFailure::NotPositiveDefinite)?;

    // normalize rows so tolerances mean the same thing everywhere
    let rows: Vec<QpRow> = problem
        .rows
        .iter()
        .map(|r| {
            let norm = r.coef.norm();
            if norm > 0.0 {
                QpRow {
                    coef: &r.coef / norm,
                    rhs: r.rhs / norm,
                    tag: r.tag,
                    softenable: r.softenable,
                }
            } else {
                r.clone()
            }
        })
        .collect();

    let mut x = chol.solve(&(-&problem.lin));
    let mut active: Vec<usize> = Vec::new();
    let mut lam: Vec<f64> = Vec::new();

    let iter_cap = 100 * (rows.len() + n) + 200;
    let mut iterations = 0usize;

    'outer: loop {
        // most violated inactive row, lowest index wins ties
        let mut worst = -TOL_VIOLATION;
        let mut p = usize::MAX;
        for (i, row) in rows.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let s = slack(row, &x);
            if s < worst {
                worst = s;
                p = i;
            }
        }
        if p == usize::MAX {
            break 'outer;
        }

        let mut lam_p = 0.0f64;
        loop {
            iterations += 1;
            if iterations > iter_cap {
                return Err(QpFailure::IterationLimit);
            }

            let n_plus = &rows[p].coef;
            let gi_n = chol.solve(n_plus);
            let (z, r) = if active.is_empty() {
                (gi_n.clone(), Vec::new())
            } else {
                let q = active.len();
                let mut nmat = DMatrix::<f64>::zeros(n, q);
                for (j, &idx) in active.iter().enumerate() {
                    nmat.set_column(j, &rows[idx].coef);
                }
                let gi_nmat = chol.solve(&nmat);
                let s_mat = nmat.transpose() * &gi_nmat;
                let rhs = nmat.transpose() * &gi_n;
                let r = match Cholesky::new(s_mat.clone()) {
                    Some(c) => c.solve(&rhs),
                    None => s_mat.lu().solve(&rhs).ok_or(QpFailure::NotPositiveDefinite)?,
                };
                let z = &gi_n - &gi_nmat * &r;
                (z, r.iter().cloned().collect())
            };

            let ztn = z.dot(n_plus);
            let s_p = slack(&rows[p], &x);

            // dual blocking step
            let mut t1 = f64::INFINITY;
            let mut blocker = usize::MAX;
            for (j, &rj) in r.iter().enumerate() {
                if rj > TOL_DIRECTION {
                    let step = lam[j] / rj;
                    if step < t1 {
                        t1 = step;
                        blocker = j;
                    }
                }
            }
            // full step to satisfy row p
            let t2 = if ztn > TOL_DIRECTION { -s_p / ztn } else { f64::INFINITY };

            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpFailure::Infeasible { blocking: p, tag: rows[p].tag });
            }

            if ztn > TOL_DIRECTION {
                x += &z * t;
            }
            for (j, l) in lam.iter_mut().enumerate() {
                *l -= t * r[j];
            }
            lam_p += t;

            if t2 <= t1 {
                active.push(p);
                lam.push(lam_p);
                continue 'outer;
            }
            // drop the blocking constraint, stay in the inner loop
            active.remove(blocker);
            lam.remove(blocker);
        }
    }

    let mut multipliers = vec![0.0; rows.len()];
    for (j, &idx) in active.iter().enumerate() {
        multipliers[idx] = lam[j];
    }
    let objective = 0.5 * (&problem.g * &x).dot(&x) + problem.lin.dot(&x);
    Ok(QpSolution { x, multipliers, active, iterations, objective })
}

/// Result of a softened solve: the original variables plus how much the
/// softened rows had to give.
#[derive(Debug, Clone)]
pub struct SoftSolution {
    pub x: DVector<f64>,
    pub total_violation: f64,
    pub iterations: usize,
}

/// Re-solves `problem` with an L1 relaxation of its softenable rows: each
/// such row `c'x >= b` becomes `c'x + s >= b, s >= 0` with `weight * s`
/// added to the objective (plus a tiny quadratic term so the Hessian stays
/// positive definite).  Rows marked not softenable stay hard.  Always
/// feasible when the hard rows alone admit a point.
pub fn solve_soft(problem: &QpProblem, weight: f64) -> Result<SoftSolution, QpFailure> {
    // curvature scales with the weight so the unconstrained seed the
    // active set starts from stays well conditioned; at realistic
    // violations the quadratic term is still dwarfed by the linear one
    let slack_curvature: f64 = (weight * 1e-4).max(1e-6);
    let n = problem.g.nrows();
    let soft_rows: Vec<usize> =
        problem.rows.iter().enumerate().filter(|(_, r)| r.softenable).map(|(i, _)| i).collect();
    let k = soft_rows.len();
    let n_ext = n + k;

    let mut g = DMatrix::<f64>::zeros(n_ext, n_ext);
    g.view_mut((0, 0), (n, n)).copy_from(&problem.g);
    for j in 0..k {
        g[(n + j, n + j)] = 2.0 * slack_curvature;
    }
    let mut lin = DVector::<f64>::zeros(n_ext);
    lin.rows_mut(0, n).copy_from(&problem.lin);
    for j in 0..k {
        lin[n + j] = weight;
    }

    let mut rows = Vec::with_capacity(problem.rows.len() + k);
    for (i, row) in problem.rows.iter().enumerate() {
        let mut coef = DVector::<f64>::zeros(n_ext);
        coef.rows_mut(0, n).copy_from(&row.coef);
        if let Some(j) = soft_rows.iter().position(|&s| s == i) {
            coef[n + j] = 1.0;
        }
        rows.push(QpRow { coef, rhs: row.rhs, tag: row.tag, softenable: false });
    }
    for j in 0..k {
        let mut coef = DVector::<f64>::zeros(n_ext);
        coef[n + j] = 1.0;
        rows.push(QpRow { coef, rhs: 0.0, tag: RowTag::Slack { index: j }, softenable: false });
    }

    let sol = solve(&QpProblem { g, lin, rows })?;
    let total_violation = (0..k).map(|j| sol.x[n + j].max(0.0)).sum();
    Ok(SoftSolution {
        x: DVector::from_iterator(n, sol.x.iter().take(n).cloned()),
        total_violation,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn box_row(n: usize, var: usize, bound: f64, lower: bool) -> QpRow {
        let mut coef = DVector::zeros(n);
        coef[var] = if lower { 1.0 } else { -1.0 };
        QpRow {
            coef,
            rhs: if lower { bound } else { -bound },
            tag: RowTag::Input { step: var, lower },
            softenable: false,
        }
    }

    /// KKT check: stationarity, primal feasibility, dual feasibility,
    /// complementary slackness.  Sufficient for optimality here (strict
    /// convexity).
    fn assert_kkt(problem: &QpProblem, sol: &QpSolution) {
        let mut grad = &problem.g * &sol.x + &problem.lin;
        for (i, row) in problem.rows.iter().enumerate() {
            let norm = row.coef.norm();
            let s = (row.coef.dot(&sol.x) - row.rhs) / norm.max(1e-300);
            assert!(s > -1e-8, "row {i} violated by {s:.3e}");
            let lambda = sol.multipliers[i];
            assert!(lambda >= -1e-10, "negative multiplier {lambda:.3e} on row {i}");
            assert!(
                lambda * s.abs() < 1e-6,
                "complementarity broken on row {i}: lambda {lambda:.3e} slack {s:.3e}"
            );
            grad -= &row.coef * (lambda / norm.max(1e-300));
        }
        assert!(grad.amax() < 1e-7, "stationarity residual {:.3e}", grad.amax());
    }

    #[test]
    fn unconstrained_minimum() {
        let problem = QpProblem {
            g: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0])),
            lin: DVector::from_vec(vec![-2.0, -8.0]),
            rows: vec![],
        };
        let sol = solve(&problem).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn box_projection_clamps() {
        // min ||x - y||^2 in a box is a clamp
        let y = [2.5, -0.3, 0.9];
        let n = 3;
        let mut rows = Vec::new();
        for v in 0..n {
            rows.push(box_row(n, v, -1.0, true));
            rows.push(box_row(n, v, 1.0, false));
        }
        let problem = QpProblem {
            g: DMatrix::identity(n, n),
            lin: DVector::from_iterator(n, y.iter().map(|v| -v)),
            rows,
        };
        let sol = solve(&problem).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.x[1], -0.3, epsilon = 1e-10);
        assert_relative_eq!(sol.x[2], 0.9, epsilon = 1e-10);
        assert_kkt(&problem, &sol);
    }

    #[test]
    fn general_row_active() {
        // min x1^2 + x2^2  s.t. x1 + x2 >= 2  ->  (1, 1)
        let problem = QpProblem {
            g: DMatrix::identity(2, 2) * 2.0,
            lin: DVector::zeros(2),
            rows: vec![QpRow {
                coef: DVector::from_vec(vec![1.0, 1.0]),
                rhs: 2.0,
                tag: RowTag::Other,
                softenable: false,
            }],
        };
        let sol = solve(&problem).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.x[1], 1.0, epsilon = 1e-10);
        assert_kkt(&problem, &sol);
    }

    #[test]
    fn detects_infeasible_box() {
        // x >= 1 and -x >= 0 cannot hold together
        let problem = QpProblem {
            g: DMatrix::identity(1, 1),
            lin: DVector::zeros(1),
            rows: vec![box_row(1, 0, 1.0, true), box_row(1, 0, 0.0, false)],
        };
        match solve(&problem) {
            Err(QpFailure::Infeasible { .. }) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn soft_solve_absorbs_infeasibility() {
        let problem = QpProblem {
            g: DMatrix::identity(1, 1),
            lin: DVector::zeros(1),
            rows: vec![
                QpRow {
                    coef: DVector::from_vec(vec![1.0]),
                    rhs: 1.0,
                    tag: RowTag::State { comp: 0, step: 1, lower: true },
                    softenable: true,
                },
                box_row(1, 0, 0.5, false),
            ],
        };
        assert!(matches!(solve(&problem), Err(QpFailure::Infeasible { .. })));
        let soft = solve_soft(&problem, 1e4).unwrap();
        // hard cap x <= 0.5 wins; soft row gives 0.5
        assert_relative_eq!(soft.x[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(soft.total_violation, 0.5, epsilon = 1e-5);
    }

    #[test]
    fn soft_solve_matches_hard_when_feasible() {
        let problem = QpProblem {
            g: DMatrix::identity(2, 2) * 2.0,
            lin: DVector::from_vec(vec![-1.0, -1.0]),
            rows: vec![
                QpRow {
                    coef: DVector::from_vec(vec![1.0, 0.0]),
                    rhs: -2.0,
                    tag: RowTag::State { comp: 0, step: 1, lower: true },
                    softenable: true,
                },
                box_row(2, 1, 2.0, false),
            ],
        };
        let hard = solve(&problem).unwrap();
        let soft = solve_soft(&problem, 1e4).unwrap();
        assert_relative_eq!(hard.x[0], soft.x[0], epsilon = 1e-6);
        assert_relative_eq!(hard.x[1], soft.x[1], epsilon = 1e-6);
        assert!(soft.total_violation < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_qps_satisfy_kkt(
            seed_diag in proptest::collection::vec(0.5..4.0f64, 4),
            lin in proptest::collection::vec(-3.0..3.0f64, 4),
            bounds in proptest::collection::vec(0.2..2.0f64, 4),
            mix in -0.4..0.4f64,
        ) {
            let n = 4;
            // SPD via diagonal dominance with one off-diagonal coupling
            let mut g = DMatrix::from_diagonal(&DVector::from_vec(seed_diag.clone()));
            g[(0, 1)] = mix; g[(1, 0)] = mix;
            let mut rows = Vec::new();
            for v in 0..n {
                rows.push(box_row(n, v, -bounds[v], true));
                rows.push(box_row(n, v, bounds[v], false));
            }
            // one diagonal coupling row
            rows.push(QpRow {
                coef: DVector::from_vec(vec![1.0, 1.0, 0.0, -1.0]),
                rhs: -1.5,
                tag: RowTag::Other,
                softenable: false,
            });
            let problem = QpProblem { g, lin: DVector::from_vec(lin), rows };
            let sol = solve(&problem).unwrap();
            assert_kkt(&problem, &sol);
        }
    }
}
