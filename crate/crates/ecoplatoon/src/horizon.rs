//! Affine prediction machinery shared by the receding-horizon controllers.
//!
//! For a sampled linear system x+ = A x + B u + D w with a known disturbance
//! sequence, the predicted state at every horizon step is an affine function
//! of the stacked input sequence.  Both controllers build their programs on
//! top of that decomposition.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::dynamics::LinearSystem;
use crate::{Error, Result};

/// Split of the predicted trajectory into the input-free response and the
/// linear map from the stacked inputs: x_s = free[s] + input_map[s] * u for
/// s in 0..=horizon, where u holds the inputs applied at steps 0..horizon.
#[derive(Debug, Clone)]
pub struct HorizonMaps {
    pub free: Vec<Vector3<f64>>,
    /// one 3 x horizon matrix per step; row r maps u to state component r
    pub input_map: Vec<DMatrix<f64>>,
}

/// Propagates the free response and input maps over `disturbance.len()`
/// steps.  Requires a discrete-time system.
pub fn horizon_maps(
    sys: &LinearSystem,
    x0: &Vector3<f64>,
    disturbance: &[f64],
) -> Result<HorizonMaps> {
    if !sys.is_discrete() {
        return Err(Error::Config("horizon prediction needs a sampled system".into()));
    }
    let n = disturbance.len();
    if n == 0 {
        return Err(Error::Config("empty prediction horizon".into()));
    }
    let a_dyn = DMatrix::from_fn(3, 3, |r, c| sys.a[(r, c)]);

    let mut free = Vec::with_capacity(n + 1);
    let mut input_map = Vec::with_capacity(n + 1);
    free.push(*x0);
    input_map.push(DMatrix::zeros(3, n));
    for (s, &w) in disturbance.iter().enumerate() {
        let next_free = sys.a * free[s] + sys.d * w;
        let mut next_map = &a_dyn * &input_map[s];
        for r in 0..3 {
            next_map[(r, s)] += sys.b[r];
        }
        free.push(next_free);
        input_map.push(next_map);
    }
    Ok(HorizonMaps { free, input_map })
}

/// Forward-simulates an input sequence against the same disturbances the
/// maps were built from.  Single source of truth for what a predicted
/// trajectory means; controllers use it to populate their solutions.
pub fn predict_states(
    sys: &LinearSystem,
    x0: &Vector3<f64>,
    u_seq: &[f64],
    disturbance: &[f64],
) -> Vec<Vector3<f64>> {
    assert_eq!(u_seq.len(), disturbance.len());
    let mut states = Vec::with_capacity(u_seq.len() + 1);
    states.push(*x0);
    for (s, (&u, &w)) in u_seq.iter().zip(disturbance).enumerate() {
        states.push(sys.a * states[s] + sys.b * u + sys.d * w);
    }
    states
}

/// Solved receding-horizon plan: the input sequence, the predicted states
/// it produces (x_pred[0] is the current state), the predicted acceleration
/// profile a_pred[s] = x_pred[s+1] accel, and the attained objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    pub u_seq: Vec<f64>,
    pub x_pred: Vec<Vector3<f64>>,
    pub a_pred: Vec<f64>,
    pub cost: f64,
}

impl HorizonSolution {
    /// Builds the solution record from a control sequence by forward
    /// simulation, so x_pred always satisfies the dynamics exactly.
    pub fn from_controls(
        sys: &LinearSystem,
        x0: &Vector3<f64>,
        u_seq: Vec<f64>,
        disturbance: &[f64],
        cost: f64,
    ) -> Self {
        let x_pred = predict_states(sys, x0, &u_seq, disturbance);
        let a_pred = x_pred[1..].iter().map(|x| x[2]).collect();
        HorizonSolution { u_seq, x_pred, a_pred, cost }
    }
}

/// Stacks the input maps' rows for one state component into a dense
/// (horizon x horizon) matrix whose row s-1 predicts component `comp` at
/// step s.  Convenience for building box constraints.
pub fn component_rows(maps: &HorizonMaps, comp: usize) -> Vec<DVector<f64>> {
    maps.input_map[1..]
        .iter()
        .map(|m| DVector::from_iterator(m.ncols(), m.row(comp).iter().cloned()))
        .collect()
}
