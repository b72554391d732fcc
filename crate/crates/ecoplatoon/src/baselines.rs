//! Comparison strategies for the four-truck column: a formation-only mode
//! where the lead truck runs the same spacing program as the trailing
//! trucks, pointed at the heavy vehicle ahead, and a human-driver mode
//! where every truck follows the intelligent-driver car-following rule.

use serde::{Deserialize, Serialize};

use crate::cycle::DriveCycle;
use crate::dmpc::{spacing_bounds, FollowerMpc, FollowerStep};
use crate::dynamics::FollowerErrorState;
use crate::error::Error;
use crate::Result;

/// Trucks in the column, lead truck included.
pub const COLUMN_SIZE: usize = 4;

/// Intelligent-driver car-following parameters.
///
/// The desired gap grows with speed through `time_headway_s` from the
/// `jam_distance_m` floor and stretches further while closing in, scaled
/// by the comfortable braking rate `max_decel_m_s2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    pub max_accel_m_s2: f64,
    pub max_decel_m_s2: f64,
    /// exponent of the free-road speed deficit term
    pub exponent: f64,
    /// open-road target speed; scenario setup points this at the traced
    /// vehicle's peak speed
    pub cruise_speed_m_s: f64,
    pub time_headway_s: f64,
    pub jam_distance_m: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            max_accel_m_s2: 1.14,
            max_decel_m_s2: 2.29,
            exponent: 4.0,
            cruise_speed_m_s: 36.0,
            time_headway_s: 2.0,
            jam_distance_m: 13.6,
        }
    }
}

impl IdmParams {
    /// Default driver population with the open-road speed retargeted.
    pub fn for_cruise_speed(cruise_speed_m_s: f64) -> Self {
        IdmParams { cruise_speed_m_s, ..IdmParams::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("max_accel_m_s2", self.max_accel_m_s2),
            ("max_decel_m_s2", self.max_decel_m_s2),
            ("cruise_speed_m_s", self.cruise_speed_m_s),
            ("time_headway_s", self.time_headway_s),
            ("jam_distance_m", self.jam_distance_m),
        ] {
            if !(value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.exponent >= 1.0) {
            return Err(Error::Config(format!(
                "exponent must be at least 1, got {}",
                self.exponent
            )));
        }
        Ok(())
    }
}

/// Intelligent-driver acceleration demand.  `dv_m_s` is own speed minus the
/// predecessor's, positive while closing in.
pub fn idm_acceleration(p: &IdmParams, speed_m_s: f64, dv_m_s: f64, gap_m: f64) -> Result<f64> {
    if !(gap_m > 0.0) {
        return Err(Error::Domain(format!("car-following gap must be positive, got {gap_m}")));
    }
    let desired = (p.jam_distance_m
        + p.time_headway_s * speed_m_s
        + speed_m_s * dv_m_s / (2.0 * (p.max_accel_m_s2 * p.max_decel_m_s2).sqrt()))
    .max(p.jam_distance_m);
    // speeds are floored at zero in the loop; keep the power well-defined
    // for stray negative queries anyway
    let free = (speed_m_s.max(0.0) / p.cruise_speed_m_s).powf(p.exponent);
    let ratio = desired / gap_m;
    Ok(p.max_accel_m_s2 * (1.0 - free - ratio * ratio))
}

/// Desired gap at steady speed with zero closing rate; seeds the column.
pub fn idm_equilibrium_gap(p: &IdmParams, speed_m_s: f64) -> f64 {
    (p.jam_distance_m + p.time_headway_s * speed_m_s).max(p.jam_distance_m)
}

/// One truck of the human-driver column: bumper gap to its predecessor and
/// its own speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmTruck {
    pub gap_m: f64,
    pub speed_m_s: f64,
}

/// All four trucks at the equilibrium gap for `speed_m_s`.
pub fn idm_platoon_init(p: &IdmParams, speed_m_s: f64) -> [IdmTruck; COLUMN_SIZE] {
    [IdmTruck { gap_m: idm_equilibrium_gap(p, speed_m_s), speed_m_s }; COLUMN_SIZE]
}

/// Advances the column one sampling period behind a heavy vehicle doing
/// `hdv_speed_m_s` over the interval.  Each driver reacts to its live
/// predecessor; speeds integrate semi-implicitly and never drop below
/// zero.  Returns the new states and each truck's realized acceleration.
/// `t_s` stamps collision diagnostics.
pub fn idm_platoon_step(
    p: &IdmParams,
    trucks: &[IdmTruck; COLUMN_SIZE],
    hdv_speed_m_s: f64,
    ts_s: f64,
    t_s: f64,
) -> Result<([IdmTruck; COLUMN_SIZE], [f64; COLUMN_SIZE])> {
    if !(ts_s > 0.0) {
        return Err(Error::Config(format!("sampling period must be positive, got {ts_s}")));
    }
    let mut accels = [0.0; COLUMN_SIZE];
    for i in 0..COLUMN_SIZE {
        let truck = &trucks[i];
        if !(truck.gap_m > 0.0) {
            return Err(Error::Collision { follower: i, gap: truck.gap_m, t: t_s });
        }
        let ahead = if i == 0 { hdv_speed_m_s } else { trucks[i - 1].speed_m_s };
        accels[i] = idm_acceleration(p, truck.speed_m_s, truck.speed_m_s - ahead, truck.gap_m)?;
    }
    let mut next = *trucks;
    for i in 0..COLUMN_SIZE {
        let v = (trucks[i].speed_m_s + ts_s * accels[i]).max(0.0);
        // report what the floor let through, not the raw demand
        accels[i] = (v - trucks[i].speed_m_s) / ts_s;
        next[i].speed_m_s = v;
    }
    for i in 0..COLUMN_SIZE {
        let ahead = if i == 0 { hdv_speed_m_s } else { next[i - 1].speed_m_s };
        let gap = trucks[i].gap_m + ts_s * (ahead - next[i].speed_m_s);
        if !(gap > 0.0) {
            return Err(Error::Collision { follower: i, gap, t: t_s + ts_s });
        }
        next[i].gap_m = gap;
    }
    Ok((next, accels))
}

/// Lead-truck controller for the formation-only strategy: the identical
/// spacing program the trailing trucks run, pointed at the heavy vehicle
/// ahead of the column.
#[derive(Debug, Clone)]
pub struct DmpcLeaderBaseline {
    pub mpc: FollowerMpc,
    pub budget_m: f64,
    pub soften_events: usize,
}

impl DmpcLeaderBaseline {
    pub fn new(mpc: FollowerMpc, budget_m: f64) -> Result<Self> {
        if !(budget_m > 0.0) {
            return Err(Error::Config(format!("spacing budget must be positive, got {budget_m}")));
        }
        Ok(DmpcLeaderBaseline { mpc, budget_m, soften_events: 0 })
    }

    /// One receding-horizon step against the heavy vehicle's acceleration
    /// preview.  Falls back to the softened program only when the hard one
    /// is infeasible.
    pub fn step(
        &mut self,
        x0: &FollowerErrorState,
        hdv_accel_pred: &[f64],
    ) -> Result<FollowerStep> {
        let bounds = spacing_bounds(1, self.budget_m, None)?;
        let context = "lead truck spacing program";
        let (solution, softened, violation) =
            match self.mpc.solve(x0, hdv_accel_pred, &bounds, context) {
                Ok(sol) => (sol, false, 0.0),
                Err(Error::QpInfeasible { .. }) => {
                    let (sol, violation) =
                        self.mpc.solve_relaxed(x0, hdv_accel_pred, &bounds, context)?;
                    self.soften_events += 1;
                    (sol, true, violation)
                }
                Err(other) => return Err(other),
            };
        Ok(FollowerStep { applied_u: solution.u_seq[0], solution, bounds, softened, violation })
    }
}

/// Forward-difference acceleration preview of the traced vehicle over the
/// horizon starting at step `k`: its rate over each coming interval, zero
/// once the trace has ended.
pub fn hdv_accel_preview(cycle: &DriveCycle, k: usize, tp: usize, ts_s: f64) -> Vec<f64> {
    (0..tp).map(|s| (cycle.speed_at(k + s + 1) - cycle.speed_at(k + s)) / ts_s).collect()
}
