//! Constant-velocity Kalman filter over the box state `[u, v, s, r, u', v', s']`.
//!
//! The default measurement model follows the full-state gain
//! `K = P⁻ (P⁻ + R)⁻¹`: a detection only observes `(u, v, s, r)`, so it is
//! lifted to seven components by copying the predicted derivatives, which
//! makes their innovation zero. [`MeasurementModel::Projected`] is the usual
//! 4×7 observation-matrix form.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::KalmanError;
use crate::geometry::{BoundingBox, StateForm};

pub const STATE_DIM: usize = 7;
pub const MEASUREMENT_DIM: usize = 4;

/// Lower bound applied to area and aspect ratio after every update.
pub const SIZE_FLOOR: f64 = 1e-6;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementModel {
    /// Seven-dimensional measurement with predicted derivatives copied in.
    #[default]
    Lifted,
    /// Four-dimensional measurement through `H = [I₄ 0]`.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    pub p0_scale: f64,
    pub q_scale: f64,
    pub r_scale: f64,
    pub measurement: MeasurementModel,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            p0_scale: 1e-2,
            q_scale: 1e-2,
            r_scale: 1e-1,
            measurement: MeasurementModel::Lifted,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<(), KalmanError> {
        for (name, v) in [
            ("p0_scale", self.p0_scale),
            ("q_scale", self.q_scale),
            ("r_scale", self.r_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(KalmanError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Estimate and error covariance of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrackState {
    pub x_hat: StateVector,
    pub p: StateMatrix,
    /// Frame the estimate refers to.
    pub frame: u32,
}

impl KalmanTrackState {
    pub fn state_form(&self) -> StateForm {
        StateForm {
            u: self.x_hat[0],
            v: self.x_hat[1],
            s: self.x_hat[2],
            r: self.x_hat[3],
        }
    }

    /// Box implied by the position components, with area and ratio floored.
    pub fn to_box(&self) -> BoundingBox {
        let mut sf = self.state_form();
        sf.s = sf.s.max(SIZE_FLOOR);
        sf.r = sf.r.max(SIZE_FLOOR);
        let w = (sf.s * sf.r).sqrt();
        let h = (sf.s / sf.r).sqrt();
        BoundingBox {
            x: sf.u - 0.5 * w,
            y: sf.v - 0.5 * h,
            w,
            h,
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        (self.p - self.p.transpose()).abs().max()
    }
}

/// Transition matrix: identity plus ones on the diagonal offset by four, so
/// each of `u, v, s` advances by its derivative per frame.
pub fn transition_matrix() -> StateMatrix {
    let mut a = StateMatrix::identity();
    for i in 0..3 {
        a[(i, i + 4)] = 1.0;
    }
    a
}

#[derive(Debug, Clone)]
pub struct KalmanFilter {
    config: KalmanConfig,
    transition: StateMatrix,
}

impl KalmanFilter {
    pub fn new(config: KalmanConfig) -> Result<Self, KalmanError> {
        config.validate()?;
        Ok(Self {
            config,
            transition: transition_matrix(),
        })
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.config
    }

    pub fn init(&self, detection: &BoundingBox, frame: u32) -> KalmanTrackState {
        let sf = detection.to_state_form();
        KalmanTrackState {
            x_hat: StateVector::from_column_slice(&[sf.u, sf.v, sf.s, sf.r, 0.0, 0.0, 0.0]),
            p: StateMatrix::identity() * self.config.p0_scale,
            frame,
        }
    }

    /// `x⁻ = A x`, `P⁻ = A P Aᵀ + Q`.
    pub fn predict(&self, state: &KalmanTrackState) -> KalmanTrackState {
        let a = &self.transition;
        let x_hat = a * state.x_hat;
        let p = a * state.p * a.transpose() + StateMatrix::identity() * self.config.q_scale;
        KalmanTrackState {
            x_hat,
            p: symmetrize(&p),
            frame: state.frame + 1,
        }
    }

    pub fn update(
        &self,
        predicted: &KalmanTrackState,
        measurement: &BoundingBox,
    ) -> Result<KalmanTrackState, KalmanError> {
        let sf = measurement.to_state_form();
        let (mut x_hat, p) = match self.config.measurement {
            MeasurementModel::Lifted => self.update_lifted(predicted, &sf)?,
            MeasurementModel::Projected => self.update_projected(predicted, &sf)?,
        };
        x_hat[2] = x_hat[2].max(SIZE_FLOOR);
        x_hat[3] = x_hat[3].max(SIZE_FLOOR);
        Ok(KalmanTrackState {
            x_hat,
            p: symmetrize(&p),
            frame: predicted.frame,
        })
    }

    fn update_lifted(
        &self,
        predicted: &KalmanTrackState,
        sf: &StateForm,
    ) -> Result<(StateVector, StateMatrix), KalmanError> {
        let x = &predicted.x_hat;
        let z = StateVector::from_column_slice(&[sf.u, sf.v, sf.s, sf.r, x[4], x[5], x[6]]);
        let s = predicted.p + StateMatrix::identity() * self.config.r_scale;
        // K = P S⁻¹, and with both symmetric Kᵀ = S⁻¹ P.
        let k_t = s
            .lu()
            .solve(&predicted.p)
            .ok_or(KalmanError::SingularMatrix)?;
        let k = k_t.transpose();
        let x_new = x + k * (z - x);
        let p_new = (StateMatrix::identity() - k) * predicted.p;
        Ok((x_new, p_new))
    }

    fn update_projected(
        &self,
        predicted: &KalmanTrackState,
        sf: &StateForm,
    ) -> Result<(StateVector, StateMatrix), KalmanError> {
        let h = SMatrix::<f64, MEASUREMENT_DIM, STATE_DIM>::identity();
        let z = SVector::<f64, MEASUREMENT_DIM>::new(sf.u, sf.v, sf.s, sf.r);
        let x = &predicted.x_hat;
        let p = &predicted.p;
        let s = h * p * h.transpose()
            + SMatrix::<f64, MEASUREMENT_DIM, MEASUREMENT_DIM>::identity() * self.config.r_scale;
        let k_t = s.lu().solve(&(h * p)).ok_or(KalmanError::SingularMatrix)?;
        let k = k_t.transpose();
        let x_new = x + k * (z - h * x);
        let p_new = (StateMatrix::identity() - k * h) * p;
        Ok((x_new, p_new))
    }
}

fn symmetrize(p: &StateMatrix) -> StateMatrix {
    (p + p.transpose()) * 0.5
}
