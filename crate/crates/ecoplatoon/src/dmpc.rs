//! Serial distributed MPC for the three trailing trucks.
//!
//! Each trailing truck regulates its spacing/speed/acceleration error state
//! with a convex QP over a short horizon, fed by the predicted acceleration
//! sequence of the truck directly ahead.  Within one control step the solves
//! run strictly in column order: truck 1 consumes the lead truck's
//! prediction, truck 2 consumes truck 1's, truck 3 consumes truck 2's, and
//! each applies only the first input of its plan.
//!
//! Spacing-error bounds tighten down the column: truck 1 gets a fixed
//! budget, every later truck is capped at the largest spacing error its
//! predecessor has exhibited so far (realized history plus the
//! predecessor's freshly predicted next step).  That cap is what keeps
//! error peaks from amplifying toward the tail of the platoon.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{FollowerErrorState, LinearSystem};
use crate::horizon::{component_rows, horizon_maps, HorizonSolution};
use crate::qp::{self, QpProblem, QpRow, RowTag};
use crate::{Error, Result};

/// Trailing trucks in the platoon.
pub const TRAILING_COUNT: usize = 3;

/// Default horizon length in control steps.
pub const DEFAULT_HORIZON: usize = 10;

/// Default spacing-error budget for the first trailing truck (m).
pub const DEFAULT_SPACING_BUDGET_M: f64 = 3.0;

/// Penalty per metre of violation when a program has to be relaxed.
pub const SOFT_PENALTY_PER_M: f64 = 1e4;

/// Spacing bounds tighter than this are widened to keep the program from
/// degenerating into an equality constraint.
pub const MIN_SPACING_BOUND_M: f64 = 0.01;

/// Box limits on the commanded and realized acceleration of one truck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuationLimits {
    pub accel_min_m_s2: f64,
    pub accel_max_m_s2: f64,
    pub input_min_m_s2: f64,
    pub input_max_m_s2: f64,
}

impl Default for ActuationLimits {
    fn default() -> Self {
        ActuationLimits {
            accel_min_m_s2: -3.0,
            accel_max_m_s2: 3.0,
            input_min_m_s2: -4.0,
            input_max_m_s2: 4.0,
        }
    }
}

impl ActuationLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.accel_min_m_s2 < self.accel_max_m_s2) {
            return Err(Error::Config("accel_min must be below accel_max".into()));
        }
        if !(self.input_min_m_s2 < self.input_max_m_s2) {
            return Err(Error::Config("input_min must be below input_max".into()));
        }
        Ok(())
    }
}

/// Frobenius-norm residual of P against the fixed-point form of the
/// discrete Riccati equation for (A, B, Q, W).
pub fn dare_residual<const N: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SVector<f64, N>,
    q: &SMatrix<f64, N, N>,
    w: f64,
    p: &SMatrix<f64, N, N>,
) -> f64 {
    let denom = w + (b.transpose() * p * b)[(0, 0)];
    let pb = p * b;
    let next = q + a.transpose() * (p - pb * pb.transpose() / denom) * a;
    (next - p).norm()
}

/// Solves P = Q + A'(P - P B (W + B'P B)^-1 B'P) A by fixed-point
/// iteration from P = Q, symmetrizing each iterate.  Stops once the
/// iterates stall below 1e-12; fails if the final residual is above 1e-8
/// or the iteration cap is hit first.
pub fn solve_dare<const N: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SVector<f64, N>,
    q: &SMatrix<f64, N, N>,
    w: f64,
    label: &str,
) -> Result<SMatrix<f64, N, N>> {
    const CAP: usize = 10_000;
    const STALL: f64 = 1e-12;
    const RESIDUAL: f64 = 1e-8;

    if w <= 0.0 {
        return Err(Error::Config(format!("input weight for {label} must be positive, got {w}")));
    }
    let mut p = *q;
    let mut iterations = 0;
    loop {
        let denom = w + (b.transpose() * p * b)[(0, 0)];
        let pb = p * b;
        let mut next = q + a.transpose() * (p - pb * pb.transpose() / denom) * a;
        next = (next + next.transpose()) * 0.5;
        let step = (next - p).norm();
        p = next;
        iterations += 1;
        if step <= STALL || !step.is_finite() || iterations >= CAP {
            break;
        }
    }
    let residual = dare_residual(a, b, q, w, &p);
    // negated comparison so a NaN residual counts as divergence
    if !(residual <= RESIDUAL) {
        return Err(Error::DareDiverged { label: label.to_string(), residual, iterations });
    }
    Ok(p)
}

/// Quadratic tracking weights for one trailing truck: diagonal stage
/// weight Q, scalar input weight W, and the Riccati terminal weight that
/// makes the finite horizon behave like the infinite one near equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerWeights {
    pub q: Matrix3<f64>,
    pub w: f64,
    pub q_p: Matrix3<f64>,
}

impl FollowerWeights {
    /// Builds Q = diag(betas) and solves the Riccati equation of the
    /// sampled system for the terminal weight.
    pub fn with_terminal(betas: [f64; 3], w: f64, sys: &LinearSystem) -> Result<Self> {
        if betas.iter().any(|&b| b <= 0.0) {
            return Err(Error::Config(format!("stage weights must be positive, got {betas:?}")));
        }
        if w <= 0.0 {
            return Err(Error::Config(format!("input weight must be positive, got {w}")));
        }
        if !sys.is_discrete() {
            return Err(Error::Config("terminal weight needs the sampled system".into()));
        }
        let q = Matrix3::from_diagonal(&Vector3::new(betas[0], betas[1], betas[2]));
        let q_p = solve_dare(&sys.a, &sys.b, &q, w, "trailing-truck terminal weight")?;
        Ok(FollowerWeights { q, w, q_p })
    }
}

/// Spacing-error corridor for one truck at one control step, constant
/// across the prediction horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingBounds {
    pub lower_m: f64,
    pub upper_m: f64,
    /// true when the raw bound fell below [`MIN_SPACING_BOUND_M`] and was
    /// widened to keep slack in the program
    pub relaxed: bool,
}

/// Spacing-error record of one truck, consulted by the truck behind it:
/// every realized sample so far plus the next step of the current plan.
#[derive(Debug, Clone, Default)]
pub struct SpacingHistory {
    pub realized_m: Vec<f64>,
    pub predicted_next_m: Option<f64>,
}

impl SpacingHistory {
    /// Largest absolute spacing error on record; `None` when empty.
    pub fn peak_abs(&self) -> Option<f64> {
        let realized = self.realized_m.iter().map(|d| d.abs()).fold(f64::NAN, f64::max);
        match (realized.is_nan(), self.predicted_next_m) {
            (true, None) => None,
            (true, Some(p)) => Some(p.abs()),
            (false, None) => Some(realized),
            (false, Some(p)) => Some(realized.max(p.abs())),
        }
    }
}

/// Spacing corridor for trailing truck `index` (1-based).  Truck 1 gets the
/// fixed symmetric budget; later trucks are capped at their predecessor's
/// recorded peak, widened to [`MIN_SPACING_BOUND_M`] when degenerate.
pub fn spacing_bounds(
    index: usize,
    budget_m: f64,
    predecessor: Option<&SpacingHistory>,
) -> Result<SpacingBounds> {
    if index == 0 || index > TRAILING_COUNT {
        return Err(Error::Config(format!(
            "trailing-truck index must be 1..={TRAILING_COUNT}, got {index}"
        )));
    }
    if index == 1 {
        if budget_m <= 0.0 {
            return Err(Error::Config(format!("spacing budget must be positive, got {budget_m}")));
        }
        return Ok(SpacingBounds { lower_m: -budget_m, upper_m: budget_m, relaxed: false });
    }
    let peak = predecessor.and_then(|h| h.peak_abs()).ok_or_else(|| {
        Error::Domain(format!("no spacing history for truck {} to bound truck {index}", index - 1))
    })?;
    let (bound, relaxed) =
        if peak < MIN_SPACING_BOUND_M { (MIN_SPACING_BOUND_M, true) } else { (peak, false) };
    Ok(SpacingBounds { lower_m: -bound, upper_m: bound, relaxed })
}

/// Built program for one trailing-truck solve, kept with its prediction
/// maps so the solution can be expanded back into a trajectory.
#[derive(Debug, Clone)]
pub struct FollowerQp {
    pub problem: QpProblem,
    /// constant cost term dropped from the QP objective
    pub cost_offset: f64,
}

/// Receding-horizon tracking controller of one trailing truck.
#[derive(Debug, Clone)]
pub struct FollowerMpc {
    pub sys: LinearSystem,
    pub weights: FollowerWeights,
    pub limits: ActuationLimits,
    pub horizon: usize,
}

impl FollowerMpc {
    pub fn new(
        sys: LinearSystem,
        weights: FollowerWeights,
        limits: ActuationLimits,
        horizon: usize,
    ) -> Result<Self> {
        if !sys.is_discrete() {
            return Err(Error::Config("controller needs the sampled system".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("prediction horizon must be at least 1".into()));
        }
        limits.validate()?;
        Ok(FollowerMpc { sys, weights, limits, horizon })
    }

    /// Assembles the tracking QP: stage cost x'Qx + W u^2 over the horizon
    /// with the terminal state additionally weighted by the Riccati matrix,
    /// box rows on the input, the realized acceleration, and the spacing
    /// error.  Input and acceleration rows are hard; spacing rows may be
    /// softened.
    pub fn build_qp(
        &self,
        x0: &FollowerErrorState,
        predecessor_accel: &[f64],
        bounds: &SpacingBounds,
    ) -> Result<FollowerQp> {
        if predecessor_accel.len() != self.horizon {
            return Err(Error::Config(format!(
                "predecessor acceleration preview has {} entries, expected {}",
                predecessor_accel.len(),
                self.horizon
            )));
        }
        let n = self.horizon;
        let maps = horizon_maps(&self.sys, &x0.as_vector(), predecessor_accel)?;

        let mut g = DMatrix::<f64>::zeros(n, n);
        let mut lin = DVector::<f64>::zeros(n);
        let mut cost_offset = 0.0;
        for s in 1..=n {
            let mut qt = self.weights.q;
            if s == n {
                qt += self.weights.q_p;
            }
            let m = &maps.input_map[s];
            let f = maps.free[s];
            let qt_dyn = DMatrix::from_fn(3, 3, |r, c| qt[(r, c)]);
            g += 2.0 * m.transpose() * &qt_dyn * m;
            let qf = qt * f;
            lin += 2.0 * m.transpose() * DVector::from_column_slice(qf.as_slice());
            cost_offset += (f.transpose() * qt * f)[(0, 0)];
        }
        for j in 0..n {
            g[(j, j)] += 2.0 * self.weights.w;
        }

        let mut rows = Vec::with_capacity(6 * n);
        for s in 0..n {
            let mut e = DVector::zeros(n);
            e[s] = 1.0;
            rows.push(QpRow {
                coef: e.clone(),
                rhs: self.limits.input_min_m_s2,
                tag: RowTag::Input { step: s, lower: true },
                softenable: false,
            });
            rows.push(QpRow {
                coef: -e,
                rhs: -self.limits.input_max_m_s2,
                tag: RowTag::Input { step: s, lower: false },
                softenable: false,
            });
        }
        // Acceleration rows stay hard alongside the input box: u = 0 keeps
        // |e^{-Ts/tau} a| inside the box from any in-box start, so they can
        // never be the source of infeasibility.  Only the spacing rows give.
        let accel_rows = component_rows(&maps, 2);
        for s in 1..=n {
            let coef = &accel_rows[s - 1];
            let f = maps.free[s][2];
            rows.push(QpRow {
                coef: coef.clone(),
                rhs: self.limits.accel_min_m_s2 - f,
                tag: RowTag::State { comp: 2, step: s, lower: true },
                softenable: false,
            });
            rows.push(QpRow {
                coef: -coef,
                rhs: f - self.limits.accel_max_m_s2,
                tag: RowTag::State { comp: 2, step: s, lower: false },
                softenable: false,
            });
        }
        let spacing_rows = component_rows(&maps, 0);
        for s in 1..=n {
            let coef = &spacing_rows[s - 1];
            let f = maps.free[s][0];
            rows.push(QpRow {
                coef: coef.clone(),
                rhs: bounds.lower_m - f,
                tag: RowTag::State { comp: 0, step: s, lower: true },
                softenable: true,
            });
            rows.push(QpRow {
                coef: -coef,
                rhs: f - bounds.upper_m,
                tag: RowTag::State { comp: 0, step: s, lower: false },
                softenable: true,
            });
        }

        Ok(FollowerQp { problem: QpProblem { g, lin, rows }, cost_offset })
    }

    /// Solves the hard program to its exact optimum.  Infeasibility is
    /// reported, not absorbed; the caller owns the relaxation policy.
    pub fn solve(
        &self,
        x0: &FollowerErrorState,
        predecessor_accel: &[f64],
        bounds: &SpacingBounds,
        context: &str,
    ) -> Result<HorizonSolution> {
        let built = self.build_qp(x0, predecessor_accel, bounds)?;
        let sol = qp::solve(&built.problem).map_err(|e| qp_error(e, context))?;
        Ok(self.expand(x0, predecessor_accel, sol.x.as_slice(), sol.objective + built.cost_offset))
    }

    /// Solves with the spacing rows softened under an L1 penalty, for steps
    /// where the hard program has no feasible point.  Returns the plan and
    /// the total constraint violation it had to absorb.
    pub fn solve_relaxed(
        &self,
        x0: &FollowerErrorState,
        predecessor_accel: &[f64],
        bounds: &SpacingBounds,
        context: &str,
    ) -> Result<(HorizonSolution, f64)> {
        let built = self.build_qp(x0, predecessor_accel, bounds)?;
        let soft =
            qp::solve_soft(&built.problem, SOFT_PENALTY_PER_M).map_err(|e| qp_error(e, context))?;
        let u_slice: Vec<f64> = soft.x.iter().cloned().collect();
        let cost = quadratic_objective(&built.problem, &u_slice) + built.cost_offset;
        Ok((self.expand(x0, predecessor_accel, &u_slice, cost), soft.total_violation))
    }

    fn expand(
        &self,
        x0: &FollowerErrorState,
        predecessor_accel: &[f64],
        u: &[f64],
        cost: f64,
    ) -> HorizonSolution {
        HorizonSolution::from_controls(
            &self.sys,
            &x0.as_vector(),
            u.to_vec(),
            predecessor_accel,
            cost,
        )
    }
}

/// Original-variable objective 1/2 u'Gu + lin'u of `problem` at `u`.
fn quadratic_objective(problem: &QpProblem, u: &[f64]) -> f64 {
    let v = DVector::from_column_slice(u);
    0.5 * (v.transpose() * &problem.g * &v)[(0, 0)] + problem.lin.dot(&v)
}

fn qp_error(failure: qp::QpFailure, context: &str) -> Error {
    match failure {
        qp::QpFailure::Infeasible { tag, .. } => {
            Error::QpInfeasible { context: context.to_string(), violated: vec![tag.to_string()] }
        }
        other => Error::QpBreakdown { context: context.to_string(), msg: other.to_string() },
    }
}

/// Outcome of one trailing truck's solve within a platoon step.
#[derive(Debug, Clone)]
pub struct FollowerStep {
    pub applied_u: f64,
    pub solution: HorizonSolution,
    pub bounds: SpacingBounds,
    /// true when the hard program was infeasible and state rows were
    /// softened to produce this plan
    pub softened: bool,
    /// total spacing violation absorbed by the softening
    pub violation: f64,
}

/// The serial three-truck column: one shared controller template, one
/// spacing record per truck, and the relaxation bookkeeping.
#[derive(Debug, Clone)]
pub struct SerialDmpc {
    pub mpc: FollowerMpc,
    pub budget_m: f64,
    pub histories: [SpacingHistory; TRAILING_COUNT],
    pub soften_events: usize,
}

impl SerialDmpc {
    pub fn new(mpc: FollowerMpc, budget_m: f64) -> Result<Self> {
        if budget_m <= 0.0 {
            return Err(Error::Config(format!("spacing budget must be positive, got {budget_m}")));
        }
        Ok(SerialDmpc { mpc, budget_m, histories: Default::default(), soften_events: 0 })
    }

    /// Runs one control step of the column.  Records each truck's realized
    /// spacing error, then solves 1 -> 2 -> 3, handing each solution's
    /// acceleration profile to the next truck and publishing its first
    /// predicted spacing error for the bound computation behind it.  Falls
    /// back to the softened program only when the hard one is infeasible.
    pub fn step(
        &mut self,
        states: &[FollowerErrorState; TRAILING_COUNT],
        leader_accel_pred: &[f64],
    ) -> Result<Vec<FollowerStep>> {
        if leader_accel_pred.len() != self.mpc.horizon {
            return Err(Error::Config(format!(
                "lead-truck acceleration preview has {} entries, expected {}",
                leader_accel_pred.len(),
                self.mpc.horizon
            )));
        }
        for (i, state) in states.iter().enumerate() {
            self.histories[i].realized_m.push(state.spacing_err);
        }
        let mut steps = Vec::with_capacity(TRAILING_COUNT);
        let mut preview = leader_accel_pred.to_vec();
        for i in 0..TRAILING_COUNT {
            let predecessor = if i == 0 { None } else { Some(&self.histories[i - 1]) };
            let bounds = spacing_bounds(i + 1, self.budget_m, predecessor)?;
            let context = format!("trailing truck {} spacing program", i + 1);
            let (solution, softened, violation) =
                match self.mpc.solve(&states[i], &preview, &bounds, &context) {
                    Ok(sol) => (sol, false, 0.0),
                    Err(Error::QpInfeasible { .. }) => {
                        let (sol, violation) =
                            self.mpc.solve_relaxed(&states[i], &preview, &bounds, &context)?;
                        self.soften_events += 1;
                        (sol, true, violation)
                    }
                    Err(other) => return Err(other),
                };
            self.histories[i].predicted_next_m = Some(solution.x_pred[1][0]);
            preview = solution.a_pred.clone();
            steps.push(FollowerStep {
                applied_u: solution.u_seq[0],
                solution,
                bounds,
                softened,
                violation,
            });
        }
        Ok(steps)
    }
}
