//! Fuel-optimal receding-horizon control of the lead truck.
//!
//! The lead truck knows the preceding vehicle's speed over the next few
//! seconds and plans the input sequence that minimizes predicted fuel burn,
//! subject to boxes on gap, speed, acceleration, and input.  Because the
//! sampled dynamics are linear, every predicted state is affine in the
//! stacked input sequence; only the fuel cost is nonlinear.  The solver is
//! a damped-BFGS sequential quadratic programming loop over that structure:
//! linear constraint rows are handed to the active-set QP exactly, the
//! fuel cost supplies analytic gradients, and a backtracking line search
//! keeps every iterate feasible, so the incumbent never gets worse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{LeaderState, LinearSystem, TruckParams};
use crate::fuel::{fuel_slope, instantaneous_fuel, power_with_gradient, FuelCoefficients};
use crate::horizon::{component_rows, horizon_maps, HorizonMaps, HorizonSolution};
use crate::qp::{self, QpProblem, QpRow, RowTag};
use crate::{Error, Result};

/// Box limits for the lead truck: gap to the vehicle ahead, own speed,
/// realized acceleration, and commanded input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeaderLimits {
    pub gap_min_m: f64,
    pub gap_max_m: f64,
    pub speed_min_m_s: f64,
    pub speed_max_m_s: f64,
    pub accel_min_m_s2: f64,
    pub accel_max_m_s2: f64,
    pub input_min_m_s2: f64,
    pub input_max_m_s2: f64,
}

impl Default for LeaderLimits {
    fn default() -> Self {
        LeaderLimits {
            gap_min_m: 5.0,
            gap_max_m: 45.0,
            speed_min_m_s: 0.0,
            speed_max_m_s: 36.0,
            accel_min_m_s2: -3.0,
            accel_max_m_s2: 3.0,
            input_min_m_s2: -4.0,
            input_max_m_s2: 4.0,
        }
    }
}

impl LeaderLimits {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            (self.gap_min_m, self.gap_max_m, "gap"),
            (self.speed_min_m_s, self.speed_max_m_s, "speed"),
            (self.accel_min_m_s2, self.accel_max_m_s2, "accel"),
            (self.input_min_m_s2, self.input_max_m_s2, "input"),
        ];
        for (lo, hi, name) in pairs {
            if !(lo < hi) {
                return Err(Error::Config(format!("{name} limits must satisfy min < max")));
            }
        }
        Ok(())
    }
}

/// Penalty per unit of state-box violation when the hard program has no
/// feasible point and must be relaxed.
pub const SOFT_PENALTY: f64 = 1e4;

/// Tiny input-effort term added inside the optimizer only.  Shedding speed
/// burns no fuel once predicted power clips at idle, so the fuel objective
/// alone is flat across whole ranges of braking profiles; the tiebreak
/// deterministically selects the gentlest of them.  Reported costs stay
/// pure fuel, and an incumbent guard keeps the returned plan no worse in
/// fuel than the (feasible) starting candidate.
const EFFORT_TIEBREAK: f64 = 1e-6;

const MAX_MAJOR_ITER: usize = 50;
const KKT_TOL: f64 = 1e-6;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// initial BFGS curvature guess, on the order of the fuel cost's own
const INIT_CURVATURE: f64 = 1e-2;
/// per-iteration cap on each input's change.  The fuel cost is flat across
/// whole ranges of braking inputs (idle clipping), so an uncapped
/// quasi-Newton step can overshoot far past the idle boundary into
/// needlessly harsh braking that costs no less; capping the step makes the
/// iterates approach the boundary from the powered side and stop near it
const TRUST_STEP: f64 = 0.5;
/// wider cap for the softened mode, which may need long moves to restore
/// feasibility
const TRUST_STEP_SOFT: f64 = 4.0;
/// consecutive merit decreases below this end the polish phase
const STALL_DECREASE: f64 = 1e-10;

/// Built instance of the lead truck's planning problem at one control
/// step: prediction maps plus the linear constraint rows in the stacked
/// input variable.
#[derive(Debug, Clone)]
pub struct LeaderOcp {
    pub maps: HorizonMaps,
    pub rows: Vec<QpRow>,
    pub preview: Vec<f64>,
    pub x0: LeaderState,
}

/// Diagnostics of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NmpcDiagnostics {
    pub iterations: usize,
    pub kkt_residual: f64,
    /// true when the state rows had to be softened to produce a plan
    pub softened: bool,
    /// total state-box violation absorbed by the softening, zero otherwise
    pub violation: f64,
}

/// Fuel-minimizing planner for the lead truck.
#[derive(Debug, Clone)]
pub struct LeaderNmpc {
    pub sys: LinearSystem,
    pub params: TruckParams,
    pub coefs: FuelCoefficients,
    pub limits: LeaderLimits,
    /// aerodynamic drag coefficient the lead truck plans with
    pub drag_cd: f64,
    pub horizon: usize,
}

impl LeaderNmpc {
    pub fn new(
        sys: LinearSystem,
        params: TruckParams,
        coefs: FuelCoefficients,
        limits: LeaderLimits,
        drag_cd: f64,
        horizon: usize,
    ) -> Result<Self> {
        if !sys.is_discrete() {
            return Err(Error::Config("planner needs the sampled system".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("prediction horizon must be at least 1".into()));
        }
        if !(drag_cd > 0.0) {
            return Err(Error::Config(format!("drag coefficient must be positive, got {drag_cd}")));
        }
        params.validate()?;
        coefs.validate()?;
        limits.validate()?;
        Ok(LeaderNmpc { sys, params, coefs, limits, drag_cd, horizon })
    }

    /// Assembles prediction maps and the box rows: gap, speed, and
    /// acceleration at steps 1..=horizon (softenable), input at steps
    /// 0..horizon-1 (hard).
    pub fn build_ocp(&self, x0: &LeaderState, preview: &[f64]) -> Result<LeaderOcp> {
        if preview.len() != self.horizon {
            return Err(Error::Config(format!(
                "speed preview has {} entries, expected {}",
                preview.len(),
                self.horizon
            )));
        }
        let n = self.horizon;
        let maps = horizon_maps(&self.sys, &x0.as_vector(), preview)?;
        let mut rows = Vec::with_capacity(8 * n);
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
        let boxes = [
            (0usize, self.limits.gap_min_m, self.limits.gap_max_m),
            (1, self.limits.speed_min_m_s, self.limits.speed_max_m_s),
            (2, self.limits.accel_min_m_s2, self.limits.accel_max_m_s2),
        ];
        for (comp, lo, hi) in boxes {
            let comp_rows = component_rows(&maps, comp);
            for s in 1..=n {
                let coef = &comp_rows[s - 1];
                let f = maps.free[s][comp];
                rows.push(QpRow {
                    coef: coef.clone(),
                    rhs: lo - f,
                    tag: RowTag::State { comp, step: s, lower: true },
                    softenable: true,
                });
                rows.push(QpRow {
                    coef: -coef,
                    rhs: f - hi,
                    tag: RowTag::State { comp, step: s, lower: false },
                    softenable: true,
                });
            }
        }
        Ok(LeaderOcp { maps, rows, preview: preview.to_vec(), x0: *x0 })
    }

    /// Predicted fuel burn of the input sequence: sum of the fuel rate at
    /// the predicted (speed, acceleration) pairs over the horizon.
    pub fn cost(&self, ocp: &LeaderOcp, u: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for s in 1..=self.horizon {
            let x = ocp.maps.free[s] + &ocp.maps.input_map[s] * u;
            let (p, _, _) =
                power_with_gradient(&self.params, &self.coefs, x[1], x[2], self.drag_cd);
            total += instantaneous_fuel(p, &self.coefs);
        }
        total
    }

    /// Cost plus its analytic gradient through the affine state maps.
    pub fn cost_and_gradient(&self, ocp: &LeaderOcp, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let n = self.horizon;
        let mut total = 0.0;
        let mut grad = DVector::zeros(n);
        for s in 1..=n {
            let m = &ocp.maps.input_map[s];
            let x = ocp.maps.free[s] + m * u;
            let (p, dp_dv, dp_da) =
                power_with_gradient(&self.params, &self.coefs, x[1], x[2], self.drag_cd);
            total += instantaneous_fuel(p, &self.coefs);
            let slope = fuel_slope(p, &self.coefs);
            if slope != 0.0 {
                let dv = slope * dp_dv;
                let da = slope * dp_da;
                for j in 0..n {
                    grad[j] += dv * m[(1, j)] + da * m[(2, j)];
                }
            }
        }
        (total, grad)
    }

    /// Optimizer-internal objective: fuel plus the effort tiebreak.
    fn merit(&self, ocp: &LeaderOcp, u: &DVector<f64>) -> f64 {
        self.cost(ocp, u) + EFFORT_TIEBREAK * u.norm_squared()
    }

    fn merit_and_gradient(&self, ocp: &LeaderOcp, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let (j, mut g) = self.cost_and_gradient(ocp, u);
        g.axpy(2.0 * EFFORT_TIEBREAK, u, 1.0);
        (j + EFFORT_TIEBREAK * u.norm_squared(), g)
    }

    fn feasible(&self, ocp: &LeaderOcp, u: &DVector<f64>, tol: f64) -> bool {
        ocp.rows.iter().all(|r| r.coef.dot(u) - r.rhs >= -tol)
    }

    fn violation(&self, ocp: &LeaderOcp, u: &DVector<f64>) -> f64 {
        ocp.rows.iter().filter(|r| r.softenable).map(|r| (r.rhs - r.coef.dot(u)).max(0.0)).sum()
    }

    /// Snaps each input onto its hard box, removing accumulated solver
    /// tolerance noise; exact because the boxes act on the decision
    /// variables directly.
    fn clamp_inputs(&self, u: &mut DVector<f64>) {
        for j in 0..u.len() {
            u[j] = u[j].clamp(self.limits.input_min_m_s2, self.limits.input_max_m_s2);
        }
    }

    /// Euclidean projection of `start` onto the constraint polytope, or
    /// `None` when the polytope is empty.
    fn project(&self, ocp: &LeaderOcp, start: &DVector<f64>) -> Option<DVector<f64>> {
        if self.feasible(ocp, start, 1e-12) {
            return Some(start.clone());
        }
        let n = self.horizon;
        let rows = ocp
            .rows
            .iter()
            .map(|r| QpRow {
                coef: r.coef.clone(),
                rhs: r.rhs - r.coef.dot(start),
                tag: r.tag,
                softenable: r.softenable,
            })
            .collect();
        let problem = QpProblem { g: DMatrix::identity(n, n), lin: DVector::zeros(n), rows };
        match qp::solve(&problem) {
            Ok(sol) => Some(start + sol.x),
            Err(qp::QpFailure::Infeasible { .. }) => None,
            // projection onto a polytope cannot break down otherwise
            Err(_) => None,
        }
    }

    /// Solves the planning problem from `start`, keeping every iterate
    /// feasible.  Falls back to an L1-softened version of the state rows
    /// only when the constraint polytope itself is empty.
    pub fn solve(
        &self,
        ocp: &LeaderOcp,
        start: &[f64],
    ) -> Result<(HorizonSolution, NmpcDiagnostics)> {
        if start.len() != self.horizon {
            return Err(Error::Config(format!(
                "start sequence has {} entries, expected {}",
                start.len(),
                self.horizon
            )));
        }
        let start = DVector::from_column_slice(start);
        match self.project(ocp, &start) {
            Some(u0) => self.solve_hard(ocp, u0),
            None => self.solve_soft(ocp, start),
        }
    }

    fn solve_hard(
        &self,
        ocp: &LeaderOcp,
        start: DVector<f64>,
    ) -> Result<(HorizonSolution, NmpcDiagnostics)> {
        let n = self.horizon;
        let mut start = start;
        // projection leaves solver-tolerance noise on the box rows
        self.clamp_inputs(&mut start);
        let start_fuel = self.cost(ocp, &start);
        let mut u = start.clone();
        let (mut j, mut g) = self.merit_and_gradient(ocp, &u);
        let mut h = DMatrix::identity(n, n) * INIT_CURVATURE;
        let mut kkt = f64::INFINITY;
        let mut iterations = 0;
        let mut stalled = 0;
        let mut reset_done = false;

        for _ in 0..MAX_MAJOR_ITER {
            iterations += 1;
            let sub = shifted_problem(&h, &g, &ocp.rows, &u);
            let sol = match qp::solve(&sub) {
                Ok(sol) => sol,
                Err(_) if !reset_done => {
                    // curvature estimate degenerated numerically; restart it
                    reset_done = true;
                    h = DMatrix::identity(n, n) * INIT_CURVATURE;
                    continue;
                }
                // every iterate satisfies the (linear) rows, so the current
                // one is a valid plan; stop polishing
                Err(_) => break,
            };
            let mut p = sol.x;
            kkt = (&h * &p).amax();
            if kkt <= KKT_TOL {
                break;
            }
            // both u and u + p satisfy the rows, so any shortened step
            // stays feasible by convexity
            let pmax = p.amax();
            if pmax > TRUST_STEP {
                p *= TRUST_STEP / pmax;
            }
            let slope = g.dot(&p);
            if slope >= -1e-16 {
                // no descent direction left; the incumbent stands
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let cand = &u + &p * alpha;
                let jc = self.merit(ocp, &cand);
                if jc <= j + ARMIJO_C1 * alpha * slope {
                    accepted = Some((cand, jc));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((u_next, j_next)) = accepted else {
                break;
            };
            if j - j_next < STALL_DECREASE {
                stalled += 1;
                if stalled >= 2 {
                    u = u_next;
                    break;
                }
            } else {
                stalled = 0;
            }
            let (_, g_next) = self.merit_and_gradient(ocp, &u_next);
            let s = &u_next - &u;
            let y = &g_next - &g;
            bfgs_update(&mut h, &s, &y);
            u = u_next;
            j = j_next;
            g = g_next;
        }

        // the merit descent cannot raise fuel by more than the tiebreak
        // term; the guard makes "never worse than the feasible incumbent"
        // exact in fuel terms
        self.clamp_inputs(&mut u);
        let final_fuel = self.cost(ocp, &u);
        let (u, fuel) = if final_fuel > start_fuel { (start, start_fuel) } else { (u, final_fuel) };

        let solution = HorizonSolution::from_controls(
            &self.sys,
            &ocp.x0.as_vector(),
            u.iter().cloned().collect(),
            &ocp.preview,
            fuel,
        );
        Ok((
            solution,
            NmpcDiagnostics { iterations, kkt_residual: kkt, softened: false, violation: 0.0 },
        ))
    }

    /// L1 exact-penalty variant for an empty polytope: minimizes
    /// cost + SOFT_PENALTY * (state-box violation), with the input rows
    /// still hard.  The merit function replaces the cost in the line
    /// search; the subproblems reuse the QP solver's softened mode.
    fn solve_soft(
        &self,
        ocp: &LeaderOcp,
        start: DVector<f64>,
    ) -> Result<(HorizonSolution, NmpcDiagnostics)> {
        let n = self.horizon;
        // clamp the start into the (always feasible) hard input boxes
        let mut u = start;
        self.clamp_inputs(&mut u);
        let merit = |planner: &Self, u: &DVector<f64>| -> f64 {
            planner.merit(ocp, u) + SOFT_PENALTY * planner.violation(ocp, u)
        };
        let mut phi = merit(self, &u);
        let mut h = DMatrix::identity(n, n) * INIT_CURVATURE;
        let mut iterations = 0;
        let mut reset_done = false;
        for _ in 0..MAX_MAJOR_ITER {
            iterations += 1;
            let (_, g) = self.merit_and_gradient(ocp, &u);
            let sub = shifted_problem(&h, &g, &ocp.rows, &u);
            let soft = match qp::solve_soft(&sub, SOFT_PENALTY) {
                Ok(soft) => soft,
                Err(_) if !reset_done => {
                    reset_done = true;
                    h = DMatrix::identity(n, n) * INIT_CURVATURE;
                    continue;
                }
                Err(_) => break,
            };
            let mut p = soft.x;
            if p.amax() <= 1e-9 {
                break;
            }
            let pmax = p.amax();
            if pmax > TRUST_STEP_SOFT {
                p *= TRUST_STEP_SOFT / pmax;
            }
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..MAX_BACKTRACKS {
                let cand = &u + &p * alpha;
                let pc = merit(self, &cand);
                if pc < phi - 1e-12 {
                    let s = &cand - &u;
                    let (_, g_next) = self.merit_and_gradient(ocp, &cand);
                    let y = &g_next - &g;
                    bfgs_update(&mut h, &s, &y);
                    u = cand;
                    phi = pc;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        self.clamp_inputs(&mut u);
        let violation = self.violation(ocp, &u);
        let cost = self.cost(ocp, &u);
        let solution = HorizonSolution::from_controls(
            &self.sys,
            &ocp.x0.as_vector(),
            u.iter().cloned().collect(),
            &ocp.preview,
            cost,
        );
        Ok((
            solution,
            NmpcDiagnostics { iterations, kkt_residual: f64::NAN, softened: true, violation },
        ))
    }
}

/// QP subproblem around iterate `u`: min 1/2 p'Hp + g'p subject to the
/// original rows shifted into step coordinates.
fn shifted_problem(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    rows: &[QpRow],
    u: &DVector<f64>,
) -> QpProblem {
    let shifted = rows
        .iter()
        .map(|r| QpRow {
            coef: r.coef.clone(),
            rhs: r.rhs - r.coef.dot(u),
            tag: r.tag,
            softenable: r.softenable,
        })
        .collect();
    QpProblem { g: h.clone(), lin: g.clone(), rows: shifted }
}

/// Damped BFGS update keeping `h` symmetric positive definite.
fn bfgs_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let hs = &*h * s;
    let shs = s.dot(&hs);
    if shs <= 1e-18 {
        return;
    }
    let sy = s.dot(y);
    let y_eff = if sy < 0.2 * shs {
        let theta = 0.8 * shs / (shs - sy);
        y * theta + &hs * (1.0 - theta)
    } else {
        y.clone()
    };
    let sy_eff = s.dot(&y_eff);
    *h += &y_eff * y_eff.transpose() / sy_eff - &hs * hs.transpose() / shs;
    // keep exact symmetry against drift
    let ht = h.transpose();
    *h += &ht;
    *h *= 0.5;
}

/// Receding-horizon wrapper: warm-starts each solve by shifting the
/// previous plan one step and holding its last input.
#[derive(Debug, Clone)]
pub struct LeaderEcoController {
    pub nmpc: LeaderNmpc,
    warm: Option<Vec<f64>>,
}

/// One control step's outcome: the input to apply now and the plan that
/// gets broadcast to the first trailing truck.
#[derive(Debug, Clone)]
pub struct LeaderStep {
    pub applied_u: f64,
    pub solution: HorizonSolution,
    pub diag: NmpcDiagnostics,
}

impl LeaderEcoController {
    pub fn new(nmpc: LeaderNmpc) -> Self {
        LeaderEcoController { nmpc, warm: None }
    }

    pub fn step(&mut self, x0: &LeaderState, preview: &[f64]) -> Result<LeaderStep> {
        let ocp = self.nmpc.build_ocp(x0, preview)?;
        let start = match &self.warm {
            Some(prev) => {
                let mut shifted: Vec<f64> = prev[1..].to_vec();
                shifted.push(*prev.last().expect("warm start is never empty"));
                shifted
            }
            None => vec![0.0; self.nmpc.horizon],
        };
        let (solution, diag) = self.nmpc.solve(&ocp, &start)?;
        self.warm = Some(solution.u_seq.clone());
        Ok(LeaderStep { applied_u: solution.u_seq[0], solution, diag })
    }
}
