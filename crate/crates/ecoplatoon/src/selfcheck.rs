//! Reference implementations used to cross-check the numerical core.
//!
//! Everything here is deliberately independent of the production code paths:
//! the matrix exponential is a scaled Taylor series (production uses a Pade
//! exponential on an augmented matrix), the hold-equivalent input columns
//! come from composite-Simpson quadrature, and the Riccati check is plain
//! fixed-point iteration.  The `run_all` suite backs the `selftest` CLI
//! subcommand; the same helpers are used as oracles by the unit tests.

use nalgebra::{Matrix3, Vector3};

use crate::dynamics::{
    discretize_zoh, follower_continuous_system, leader_continuous_system, TruckParams,
};
use crate::fuel::{instantaneous_fuel, power, resistance_force, FuelCoefficients};

/// Scaling-and-squaring Taylor series for exp(M), 3x3.
///
/// Scales M down by 2^s until its 1-norm is below 0.25, sums the series to
/// machine precision, then squares back up.  Slow and simple on purpose.
pub fn expm_taylor(m: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = m.iter().map(|x| x.abs()).fold(0.0, f64::max) * 3.0;
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let ms = m * scale;
    let mut sum = Matrix3::identity();
    let mut term = Matrix3::identity();
    for k in 1..60 {
        term = term * ms / (k as f64);
        sum += term;
        if term.iter().map(|x: &f64| x.abs()).fold(0.0, f64::max) < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Hold-equivalent sampling via series exponential plus Simpson quadrature
/// of int_0^ts exp(A s) ds applied to the B and D columns.
pub fn zoh_oracle(
    a: &Matrix3<f64>,
    b: &Vector3<f64>,
    d: &Vector3<f64>,
    ts: f64,
) -> (Matrix3<f64>, Vector3<f64>, Vector3<f64>) {
    let a_d = expm_taylor(&(a * ts));
    // composite Simpson on [0, ts], even panel count
    let n = 400usize;
    let h = ts / n as f64;
    let mut integral = Matrix3::zeros();
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral += expm_taylor(&(a * (i as f64 * h))) * w;
    }
    integral *= h / 3.0;
    (a_d, integral * b, integral * d)
}

/// Discrete Riccati fixed-point reference for the 1-D problem, converged to
/// 1e-13.  Returns the cost-to-go weight p.
pub fn dare_scalar_oracle(a: f64, b: f64, q: f64, w: f64) -> f64 {
    let mut p = q;
    for _ in 0..100_000 {
        let next = q + a * (p - p * b * (1.0 / (w + b * p * b)) * b * p) * a;
        if (next - p).abs() < 1e-13 {
            return next;
        }
        p = next;
    }
    p
}

/// One named check: `pass` plus a short human-readable detail line.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Numerical self-test: sampling vs the series oracle, the Riccati
/// fixed point, and fuel-model spot values.  Used by `selftest` in the CLI.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();

    // sampling vs oracle across lag/period grid
    let mut worst: f64 = 0.0;
    for &tau in &[0.25, 0.5, 1.0] {
        for &ts in &[0.1, 1.0] {
            let p = TruckParams { actuation_lag_s: tau, ..TruckParams::default() };
            for sys in [leader_continuous_system(&p), follower_continuous_system(&p)] {
                match discretize_zoh(&sys, ts) {
                    Ok(got) => {
                        let (a_ref, b_ref, d_ref) = zoh_oracle(&sys.a, &sys.b, &sys.d, ts);
                        let da = (got.a - a_ref).abs().max();
                        let db = (got.b - b_ref).abs().max();
                        let dd = (got.d - d_ref).abs().max();
                        worst = worst.max(da).max(db).max(dd);
                    }
                    Err(e) => {
                        out.push(CheckResult {
                            name: "zoh-vs-exponential",
                            pass: false,
                            detail: format!("discretize failed: {e}"),
                        });
                        return out;
                    }
                }
            }
        }
    }
    out.push(CheckResult {
        name: "zoh-vs-exponential",
        pass: worst <= 1e-9,
        detail: format!("max entry error {worst:.3e} (tolerance 1e-9)"),
    });

    // semigroup property of the homogeneous part
    let p = TruckParams::default();
    let sys = follower_continuous_system(&p);
    let whole = discretize_zoh(&sys, 1.0).unwrap();
    let half = discretize_zoh(&sys, 0.5).unwrap();
    let semi = (half.a * half.a - whole.a).abs().max();
    out.push(CheckResult {
        name: "zoh-semigroup",
        pass: semi <= 1e-9,
        detail: format!("|A'(Ts/2)^2 - A'(Ts)| = {semi:.3e} (tolerance 1e-9)"),
    });

    // scalar Riccati fixed point: a=b=q=w=1 has p = (1+sqrt(5))/2
    let golden = 0.5 * (1.0 + 5.0f64.sqrt());
    let p_scalar = dare_scalar_oracle(1.0, 1.0, 1.0, 1.0);
    let dare_err = (p_scalar - golden).abs();
    out.push(CheckResult {
        name: "riccati-scalar",
        pass: dare_err <= 1e-9,
        detail: format!("|p - (1+sqrt(5))/2| = {dare_err:.3e} (tolerance 1e-9)"),
    });

    // fuel model spot values recomputed term by term
    let coefs = FuelCoefficients::default();
    let params = TruckParams::default();
    let fc = instantaneous_fuel(100.0, &coefs);
    let fc_err = (fc - 9.76e-3).abs();
    out.push(CheckResult {
        name: "fuel-rate-spot",
        pass: fc_err <= 1e-12,
        detail: format!("Fc(100 kW) = {fc:.6e} L/s, error {fc_err:.3e}"),
    });
    let pw = power(&params, &coefs, 20.0, 0.5, 3000.0);
    let pw_err = (pw - (3000.0 + 1.04 * 29_400.0 * 0.5) / (3600.0 * 0.94) * 72.0).abs();
    out.push(CheckResult {
        name: "power-spot",
        pass: pw_err <= 1e-9,
        detail: format!("P(20 m/s, 0.5 m/s^2, R=3 kN) = {pw:.4} kW, error {pw_err:.3e}"),
    });
    let r = resistance_force(&params, &coefs, 0.0, 0.570);
    let r_expect = 9.8066 * 29_400.0 * (coefs.lambda0 / 1000.0) * coefs.lambda2;
    let r_err = (r - r_expect).abs();
    out.push(CheckResult {
        name: "resistance-spot",
        pass: r_err <= 1e-9,
        detail: format!("R(0 m/s) = {r:.4} N, error {r_err:.3e}"),
    });

    out
}
