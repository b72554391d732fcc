//! Power-based fuel rate and spacing-dependent drag.
//!
//! Fuel burn is a quadratic polynomial in the tractive power demand, floored
//! at the idle rate whenever power is negative (engine braking burns idle
//! fuel, no more).  Power comes from the road-load equation calibrated in
//! km/h / kg / N / kW; the public interface takes m/s and converts
//! internally.
//!
//! Trailing trucks see reduced aerodynamic drag.  The drag coefficient grows
//! with the gap as Cn*(g1*d^g2 + g3), saturating at the free-stream value,
//! with one calibration for the first trailing position and another for the
//! deeper ones.

use serde::{Deserialize, Serialize};

use crate::dynamics::TruckParams;
use crate::{Error, Result};

const KMH_PER_MS: f64 = 3.6;
const GRAVITY_FACTOR: f64 = 9.8066;

/// Fuel-rate polynomial and road-load calibration constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuelCoefficients {
    /// idle fuel rate, L/s
    pub psi0: f64,
    /// linear power term, L/(s*kW)
    pub psi1: f64,
    /// quadratic power term, L/(s*kW^2)
    pub psi2: f64,
    /// rolling-resistance calibration
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// altitude/height correction on the aero term
    pub height_correction: f64,
    /// air density used by the road-load aero term, kg/m^3
    pub air_density_kg_m3: f64,
}

impl Default for FuelCoefficients {
    fn default() -> Self {
        FuelCoefficients {
            psi0: 1.56e-3,
            psi1: 8.10e-5,
            psi2: 1.00e-8,
            lambda0: 1.75,
            lambda1: 0.0328,
            lambda2: 4.575,
            height_correction: 0.977,
            air_density_kg_m3: 1.2256,
        }
    }
}

impl FuelCoefficients {
    pub fn validate(&self) -> Result<()> {
        if !(self.psi0 > 0.0) {
            return Err(Error::Config(format!("psi0 must be positive, got {}", self.psi0)));
        }
        if self.psi1 < 0.0 || self.psi2 < 0.0 {
            return Err(Error::Config("psi1 and psi2 must be nonnegative".into()));
        }
        if !(self.air_density_kg_m3 > 0.0) {
            return Err(Error::Config("air density must be positive".into()));
        }
        Ok(())
    }
}

/// Gap-to-drag calibration per platoon position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DragCalibration {
    /// free-stream drag coefficient (also the lead truck's)
    pub nominal: f64,
    /// (g1, g2, g3) for the first trailing truck
    pub follower1: [f64; 3],
    /// (g1, g2, g3) for trailing trucks 2 and beyond
    pub trail: [f64; 3],
    /// saturate follower drag at `nominal` (the formula exceeds it at
    /// large gaps, which is physically meaningless)
    pub clamp_to_nominal: bool,
}

impl Default for DragCalibration {
    fn default() -> Self {
        DragCalibration {
            nominal: 0.570,
            follower1: [0.1522, 0.2111, 0.5260],
            trail: [0.0726, 0.2842, 0.5794],
            clamp_to_nominal: true,
        }
    }
}

impl DragCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.nominal > 0.0) {
            return Err(Error::Config("nominal drag must be positive".into()));
        }
        for g in [&self.follower1, &self.trail] {
            if !(g[0] > 0.0 && g[1] > 0.0) {
                return Err(Error::Config("drag gamma1 and gamma2 must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Drag coefficient for the truck at `position` (0 = lead) running `gap`
/// meters behind its predecessor.  The lead truck always sees free stream.
pub fn drag_coefficient(position: usize, gap: f64, calib: &DragCalibration) -> Result<f64> {
    if position == 0 {
        return Ok(calib.nominal);
    }
    if !(gap > 0.0) {
        return Err(Error::Domain(format!(
            "drag_coefficient needs a positive gap for trailing trucks, got {gap}"
        )));
    }
    let g = if position == 1 { &calib.follower1 } else { &calib.trail };
    let cd = calib.nominal * (g[0] * gap.powf(g[1]) + g[2]);
    Ok(if calib.clamp_to_nominal { cd.min(calib.nominal) } else { cd })
}

/// Road-load resistance at speed v (m/s): aero + rolling + grade, in newtons.
pub fn resistance_force(params: &TruckParams, coefs: &FuelCoefficients, v: f64, cd: f64) -> f64 {
    let v_kmh = v * KMH_PER_MS;
    let aero = (coefs.air_density_kg_m3 / 25.92)
        * cd
        * coefs.height_correction
        * params.frontal_area_m2
        * v_kmh
        * v_kmh;
    let rolling = GRAVITY_FACTOR
        * params.mass_kg
        * (coefs.lambda0 / 1000.0)
        * (coefs.lambda1 * v_kmh + coefs.lambda2);
    let grade = GRAVITY_FACTOR * params.mass_kg * params.road_grade;
    aero + rolling + grade
}

/// Tractive power demand in kW at speed v (m/s) and acceleration a, given
/// road load `r` in newtons.  Negative when the truck is braking harder than
/// the road load absorbs.
pub fn power(params: &TruckParams, _coefs: &FuelCoefficients, v: f64, a: f64, r: f64) -> f64 {
    let v_kmh = v * KMH_PER_MS;
    (r + 1.04 * params.mass_kg * a) / (3600.0 * params.driveline_efficiency) * v_kmh
}

/// Power demand plus its partial derivatives with respect to v and a, with
/// the road load evaluated internally at drag coefficient `cd`.  Used by the
/// leader optimizer for analytic cost gradients.
pub fn power_with_gradient(
    params: &TruckParams,
    coefs: &FuelCoefficients,
    v: f64,
    a: f64,
    cd: f64,
) -> (f64, f64, f64) {
    let v_kmh = v * KMH_PER_MS;
    let alpha =
        (coefs.air_density_kg_m3 / 25.92) * cd * coefs.height_correction * params.frontal_area_m2;
    let beta = GRAVITY_FACTOR * params.mass_kg * (coefs.lambda0 / 1000.0) * coefs.lambda1;
    let gamma = GRAVITY_FACTOR * params.mass_kg * (coefs.lambda0 / 1000.0) * coefs.lambda2
        + GRAVITY_FACTOR * params.mass_kg * params.road_grade;
    let denom = 3600.0 * params.driveline_efficiency;
    let r = alpha * v_kmh * v_kmh + beta * v_kmh + gamma;
    let load = r + 1.04 * params.mass_kg * a;
    let p = load / denom * v_kmh;
    // dP/dv_kmh = (R'(v_kmh)*v_kmh + load)/denom, then chain through 3.6
    let dp_dvkmh = ((2.0 * alpha * v_kmh + beta) * v_kmh + load) / denom;
    let dp_dv = dp_dvkmh * KMH_PER_MS;
    let dp_da = 1.04 * params.mass_kg / denom * v_kmh;
    (p, dp_dv, dp_da)
}

/// Instantaneous fuel rate, L/s.  Quadratic in power above zero, idle below.
pub fn instantaneous_fuel(p_kw: f64, coefs: &FuelCoefficients) -> f64 {
    if p_kw >= 0.0 {
        coefs.psi0 + coefs.psi1 * p_kw + coefs.psi2 * p_kw * p_kw
    } else {
        coefs.psi0
    }
}

/// d(fuel rate)/d(power).  Zero on the idle branch; the kink at P=0 takes
/// the idle-side value so coasting never reports a fuel gradient.
pub fn fuel_slope(p_kw: f64, coefs: &FuelCoefficients) -> f64 {
    if p_kw > 0.0 {
        coefs.psi1 + 2.0 * coefs.psi2 * p_kw
    } else {
        0.0
    }
}

/// Rectangle-rule trip total of a uniformly sampled fuel-rate series, L.
pub fn trip_fuel(fuel_series: &[f64], ts: f64) -> f64 {
    fuel_series.iter().sum::<f64>() * ts
}
