//! Longitudinal truck models.
//!
//! Each truck is a third-order longitudinal model whose engine/brake command
//! has been feedback-linearized, leaving a first-order lag between the
//! commanded and realized acceleration: da/dt = (u - a) / tau.
//!
//! Two state conventions are used:
//!
//! * lead truck: x = [gap to the vehicle ahead, own speed, own accel],
//!   driven by u and by the preceding vehicle's speed,
//! * trailing truck: x = [spacing error, speed error vs predecessor, own
//!   accel], driven by u and by the predecessor's acceleration.
//!
//! Both are linear time-invariant, so sampling them with a zero-order hold
//! on the inputs has an exact discrete form computed here via the augmented
//! matrix exponential.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Physical constants and actuator data for one truck.
///
/// Defaults are a loaded class-8 tractor-trailer. `actuation_lag_s` is the
/// time constant of the acceleration lag; `mechanical_drag_n` is a constant
/// driveline drag term that only enters the engine-input diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruckParams {
    pub mass_kg: f64,
    pub actuation_lag_s: f64,
    pub frontal_area_m2: f64,
    pub air_density_kg_m3: f64,
    pub mechanical_drag_n: f64,
    pub driveline_efficiency: f64,
    pub road_grade: f64,
}

impl Default for TruckParams {
    fn default() -> Self {
        TruckParams {
            mass_kg: 29_400.0,
            actuation_lag_s: 0.5,
            frontal_area_m2: 10.7,
            air_density_kg_m3: 1.2256,
            mechanical_drag_n: 0.0,
            driveline_efficiency: 0.94,
            road_grade: 0.0,
        }
    }
}

impl TruckParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass_kg > 0.0) {
            return Err(Error::Config(format!("mass_kg must be positive, got {}", self.mass_kg)));
        }
        if !(self.actuation_lag_s > 0.0) {
            return Err(Error::Config(format!(
                "actuation_lag_s must be positive, got {}",
                self.actuation_lag_s
            )));
        }
        if !(self.frontal_area_m2 > 0.0) {
            return Err(Error::Config(format!(
                "frontal_area_m2 must be positive, got {}",
                self.frontal_area_m2
            )));
        }
        if !(self.air_density_kg_m3 > 0.0) {
            return Err(Error::Config(format!(
                "air_density_kg_m3 must be positive, got {}",
                self.air_density_kg_m3
            )));
        }
        if !(self.driveline_efficiency > 0.0 && self.driveline_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "driveline_efficiency must be in (0, 1], got {}",
                self.driveline_efficiency
            )));
        }
        Ok(())
    }
}

/// Lead-truck state: gap to the vehicle ahead (m), own speed (m/s), own
/// realized acceleration (m/s^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderState {
    pub gap: f64,
    pub speed: f64,
    pub accel: f64,
}

impl LeaderState {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.gap, self.speed, self.accel)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        LeaderState { gap: v[0], speed: v[1], accel: v[2] }
    }
}

/// Trailing-truck error state: spacing error vs the constant-gap target (m),
/// speed of the predecessor minus own speed (m/s), own realized acceleration
/// (m/s^2).  The all-zero state is the formation equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerErrorState {
    pub spacing_err: f64,
    pub speed_err: f64,
    pub accel: f64,
}

impl FollowerErrorState {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.spacing_err, self.speed_err, self.accel)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        FollowerErrorState { spacing_err: v[0], speed_err: v[1], accel: v[2] }
    }
}

/// x' = A x + B u + D w, continuous when `sample_time` is `None`, otherwise
/// the exact zero-order-hold sampling at that period.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub d: Vector3<f64>,
    pub sample_time: Option<f64>,
}

impl LinearSystem {
    pub fn is_discrete(&self) -> bool {
        self.sample_time.is_some()
    }
}

/// Continuous lead-truck model.  The disturbance input w is the preceding
/// vehicle's speed: the gap integrates w - v.
pub fn leader_continuous_system(params: &TruckParams) -> LinearSystem {
    let inv_tau = 1.0 / params.actuation_lag_s;
    LinearSystem {
        a: Matrix3::new(
            0.0, -1.0, 0.0, //
            0.0, 0.0, 1.0, //
            0.0, 0.0, -inv_tau,
        ),
        b: Vector3::new(0.0, 0.0, inv_tau),
        d: Vector3::new(1.0, 0.0, 0.0),
        sample_time: None,
    }
}

/// Continuous trailing-truck error model.  The disturbance input w is the
/// predecessor's realized acceleration.
pub fn follower_continuous_system(params: &TruckParams) -> LinearSystem {
    let inv_tau = 1.0 / params.actuation_lag_s;
    LinearSystem {
        a: Matrix3::new(
            0.0, 1.0, 0.0, //
            0.0, 0.0, -1.0, //
            0.0, 0.0, -inv_tau,
        ),
        b: Vector3::new(0.0, 0.0, inv_tau),
        d: Vector3::new(0.0, 1.0, 0.0),
        sample_time: None,
    }
}

/// Exact zero-order-hold sampling of a continuous system.
///
/// Builds the 5x5 augmented matrix [[A, B, D], [0, 0]] and exponentiates it;
/// the top blocks of the result are A', B' = int_0^Ts exp(A s) ds B, and the
/// matching D' column.  Exact up to the matrix exponential, no series
/// truncation at the caller's level.
pub fn discretize_zoh(sys: &LinearSystem, ts: f64) -> Result<LinearSystem> {
    if sys.is_discrete() {
        return Err(Error::Domain("discretize_zoh expects a continuous system".into()));
    }
    if !(ts > 0.0) {
        return Err(Error::Domain(format!("sample time must be positive, got {ts}")));
    }
    let mut aug = SMatrix::<f64, 5, 5>::zeros();
    for r in 0..3 {
        for c in 0..3 {
            aug[(r, c)] = sys.a[(r, c)] * ts;
        }
        aug[(r, 3)] = sys.b[r] * ts;
        aug[(r, 4)] = sys.d[r] * ts;
    }
    let exp = aug.exp();
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    let mut d = Vector3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            a[(r, c)] = exp[(r, c)];
        }
        b[r] = exp[(r, 3)];
        d[r] = exp[(r, 4)];
    }
    Ok(LinearSystem { a, b, d, sample_time: Some(ts) })
}

/// One sampling period of the lead truck under command u0 with the preceding
/// vehicle's speed held at `v_front` over the interval.
pub fn step_leader(sys_d: &LinearSystem, x: &LeaderState, u0: f64, v_front: f64) -> LeaderState {
    debug_assert!(sys_d.is_discrete());
    let next = sys_d.a * x.as_vector() + sys_d.b * u0 + sys_d.d * v_front;
    LeaderState::from_vector(&next)
}

/// One sampling period of a trailing truck under command u with the
/// predecessor's acceleration held at `accel_front` over the interval.
pub fn step_follower(
    sys_d: &LinearSystem,
    x: &FollowerErrorState,
    u: f64,
    accel_front: f64,
) -> FollowerErrorState {
    debug_assert!(sys_d.is_discrete());
    let next = sys_d.a * x.as_vector() + sys_d.b * u + sys_d.d * accel_front;
    FollowerErrorState::from_vector(&next)
}

/// Engine/brake force that realizes command u at operating point (v, a),
/// i.e. the force the low-level feedback linearization asks for: m*u plus
/// aerodynamic drag at v, its lag correction term, and the constant
/// mechanical drag.  Diagnostic only; the sampled models advance in u.
pub fn engine_input(params: &TruckParams, v: f64, a: f64, u: f64, drag_coefficient: f64) -> f64 {
    let rho_a_cd = params.air_density_kg_m3 * params.frontal_area_m2 * drag_coefficient;
    params.mass_kg * u
        + 0.5 * rho_a_cd * v * v
        + params.mechanical_drag_n
        + params.actuation_lag_s * rho_a_cd * v * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfcheck::{expm_taylor, zoh_oracle};
    use approx::assert_relative_eq;

    fn leader_discrete(tau: f64, ts: f64) -> LinearSystem {
        let p = TruckParams { actuation_lag_s: tau, ..TruckParams::default() };
        discretize_zoh(&leader_continuous_system(&p), ts).unwrap()
    }

    fn follower_discrete(tau: f64, ts: f64) -> LinearSystem {
        let p = TruckParams { actuation_lag_s: tau, ..TruckParams::default() };
        discretize_zoh(&follower_continuous_system(&p), ts).unwrap()
    }

    #[test]
    fn leader_continuous_matrices() {
        let p = TruckParams { actuation_lag_s: 0.5, ..TruckParams::default() };
        let sys = leader_continuous_system(&p);
        assert_eq!(sys.a.row(2).transpose(), Vector3::new(0.0, 0.0, -2.0));
        assert_eq!(sys.b, Vector3::new(0.0, 0.0, 2.0));
        assert_eq!(sys.d, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(sys.a[(0, 1)], -1.0);
        assert!(sys.sample_time.is_none());

        let p1 = TruckParams { actuation_lag_s: 1.0, ..TruckParams::default() };
        assert_eq!(leader_continuous_system(&p1).a[(2, 2)], -1.0);
    }

    #[test]
    fn follower_continuous_matrices() {
        let p = TruckParams { actuation_lag_s: 0.5, ..TruckParams::default() };
        let sys = follower_continuous_system(&p);
        let expect = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -2.0);
        assert_eq!(sys.a, expect);
        assert_eq!(sys.d, Vector3::new(0.0, 1.0, 0.0));

        let p4 = TruckParams { actuation_lag_s: 0.25, ..TruckParams::default() };
        assert_eq!(follower_continuous_system(&p4).b, Vector3::new(0.0, 0.0, 4.0));
    }

    #[test]
    fn zoh_identity_for_zero_dynamics() {
        // A = 0 integrates the inputs directly: A' = I, B' = B*Ts.
        let sys = LinearSystem {
            a: Matrix3::zeros(),
            b: Vector3::new(0.0, 0.0, 2.0),
            d: Vector3::new(1.0, 0.0, 0.0),
            sample_time: None,
        };
        let d = discretize_zoh(&sys, 1.0).unwrap();
        assert_relative_eq!(d.a, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(d.b, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
        assert_relative_eq!(d.d, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn zoh_known_entries() {
        let f = follower_discrete(0.5, 1.0);
        assert_relative_eq!(f.a[(2, 2)], (-2.0f64).exp(), epsilon = 1e-12);
        // speed error picks up -tau*(1 - e^(-Ts/tau)) from the accel state
        assert_relative_eq!(f.a[(1, 2)], -0.5 * (1.0 - (-2.0f64).exp()), epsilon = 1e-12);

        let l = leader_discrete(0.5, 1.0);
        assert_relative_eq!(l.a[(1, 2)], 0.5 * (1.0 - (-2.0f64).exp()), epsilon = 1e-12);
        // gap row integrates the front vehicle's speed for exactly Ts
        assert_relative_eq!(l.d[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(l.a[(0, 1)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn zoh_matches_series_oracle() {
        for &tau in &[0.25, 0.5, 1.0] {
            for &ts in &[0.1, 1.0] {
                let p = TruckParams { actuation_lag_s: tau, ..TruckParams::default() };
                for sys in [leader_continuous_system(&p), follower_continuous_system(&p)] {
                    let got = discretize_zoh(&sys, ts).unwrap();
                    let (a_ref, b_ref, d_ref) = zoh_oracle(&sys.a, &sys.b, &sys.d, ts);
                    assert_relative_eq!(got.a, a_ref, epsilon = 1e-9);
                    assert_relative_eq!(got.b, b_ref, epsilon = 1e-9);
                    assert_relative_eq!(got.d, d_ref, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn zoh_semigroup() {
        // exp(A*Ts) = exp(A*Ts/2)^2
        let p = TruckParams { actuation_lag_s: 0.5, ..TruckParams::default() };
        let sys = leader_continuous_system(&p);
        let whole = discretize_zoh(&sys, 1.0).unwrap();
        let half = discretize_zoh(&sys, 0.5).unwrap();
        assert_relative_eq!(half.a * half.a, whole.a, epsilon = 1e-9);
    }

    #[test]
    fn expm_taylor_agrees_with_production_exponential() {
        let p = TruckParams::default();
        let sys = follower_continuous_system(&p);
        let scaled = sys.a * 0.7;
        let reference = expm_taylor(&scaled);
        let mut aug = SMatrix::<f64, 5, 5>::zeros();
        for r in 0..3 {
            for c in 0..3 {
                aug[(r, c)] = scaled[(r, c)];
            }
        }
        let exp = aug.exp();
        for r in 0..3 {
            for c in 0..3 {
                assert_relative_eq!(exp[(r, c)], reference[(r, c)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn step_leader_cases() {
        let sys = leader_discrete(0.5, 1.0);

        // matched speeds, no command: nothing moves
        let x = LeaderState { gap: 30.0, speed: 20.0, accel: 0.0 };
        let next = step_leader(&sys, &x, 0.0, 20.0);
        assert_relative_eq!(next.gap, 30.0, epsilon = 1e-12);
        assert_relative_eq!(next.speed, 20.0, epsilon = 1e-12);
        assert_relative_eq!(next.accel, 0.0, epsilon = 1e-12);

        // front vehicle 1 m/s faster opens the gap by 1 m over the second
        let x = LeaderState { gap: 20.0, speed: 15.0, accel: 0.0 };
        let next = step_leader(&sys, &x, 0.0, 16.0);
        assert_relative_eq!(next.gap, 21.0, epsilon = 1e-12);

        // a unit command drags the accel up through the lag
        let x = LeaderState { gap: 20.0, speed: 15.0, accel: 0.0 };
        let next = step_leader(&sys, &x, 1.0, 15.0);
        assert_relative_eq!(next.accel, 1.0 - (-2.0f64).exp(), epsilon = 1e-12);
        // full vector against the quadrature oracle
        let (a_ref, b_ref, d_ref) = zoh_oracle(
            &leader_continuous_system(&TruckParams::default()).a,
            &leader_continuous_system(&TruckParams::default()).b,
            &leader_continuous_system(&TruckParams::default()).d,
            1.0,
        );
        let expect = a_ref * x.as_vector() + b_ref * 1.0 + d_ref * 15.0;
        assert_relative_eq!(next.as_vector(), expect, epsilon = 1e-9);
    }

    #[test]
    fn step_follower_cases() {
        let sys = follower_discrete(0.5, 1.0);

        // equilibrium is an exact fixed point
        let zero = FollowerErrorState { spacing_err: 0.0, speed_err: 0.0, accel: 0.0 };
        let next = step_follower(&sys, &zero, 0.0, 0.0);
        assert_eq!(next.as_vector(), Vector3::zeros());

        // predecessor accelerating at 1 m/s^2 for one second adds Ts to the
        // speed error and Ts^2/2 to the spacing error
        let next = step_follower(&sys, &zero, 0.0, 1.0);
        assert_relative_eq!(next.speed_err, 1.0, epsilon = 1e-12);
        assert_relative_eq!(next.spacing_err, 0.5, epsilon = 1e-12);
        let (a_ref, b_ref, d_ref) = zoh_oracle(
            &follower_continuous_system(&TruckParams::default()).a,
            &follower_continuous_system(&TruckParams::default()).b,
            &follower_continuous_system(&TruckParams::default()).d,
            1.0,
        );
        let expect = a_ref * zero.as_vector() + b_ref * 0.0 + d_ref * 1.0;
        assert_relative_eq!(next.as_vector(), expect, epsilon = 1e-9);

        // a pure spacing offset with no relative motion stays put
        let x = FollowerErrorState { spacing_err: 1.0, speed_err: 0.0, accel: 0.0 };
        let next = step_follower(&sys, &x, 0.0, 0.0);
        assert_relative_eq!(next.spacing_err, 1.0, epsilon = 1e-12);
        assert_relative_eq!(next.speed_err, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn engine_input_cases() {
        let p = TruckParams::default();
        // steady coasting at 20 m/s: aero drag only
        let f = engine_input(&p, 20.0, 0.0, 0.0, 0.570);
        assert_relative_eq!(f, 0.5 * 1.2256 * 10.7 * 0.570 * 400.0, epsilon = 1e-9);
        assert_relative_eq!(f, 1494.98688, epsilon = 1e-6);

        // at rest the force is just the constant drag
        let p2 = TruckParams { mechanical_drag_n: 120.0, ..TruckParams::default() };
        assert_relative_eq!(engine_input(&p2, 0.0, 0.0, 0.0, 0.570), 120.0, epsilon = 1e-12);

        // unit command scales with mass
        let f = engine_input(&p, 0.0, 0.0, 1.0, 0.570);
        assert_relative_eq!(f, 29_400.0, epsilon = 1e-9);

        // accelerating adds the lag correction tau*rho*A*Cd*v*a
        let f = engine_input(&p, 20.0, 1.0, 0.0, 0.570);
        let rho_a_cd = 1.2256 * 10.7 * 0.570;
        assert_relative_eq!(f, 0.5 * rho_a_cd * 400.0 + 0.5 * rho_a_cd * 20.0, epsilon = 1e-9);
    }

    #[test]
    fn params_validation() {
        assert!(TruckParams::default().validate().is_ok());
        let bad = TruckParams { actuation_lag_s: 0.0, ..TruckParams::default() };
        assert!(bad.validate().is_err());
        let bad = TruckParams { driveline_efficiency: 1.2, ..TruckParams::default() };
        assert!(bad.validate().is_err());
    }
}
