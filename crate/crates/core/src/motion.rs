//! Constant-velocity Kalman filter over `[x, y, w, h, vx, vy, vw, vh]`.
//!
//! Noise is scale-relative: every standard deviation is a fraction of the
//! box dimension it belongs to (x and w scale with width, y and h with height).

use nalgebra::{SMatrix, SVector};
use serde::Deserialize;

use crate::geometry::GlobalBox;

pub type StateVector = SVector<f64, 8>;
pub type StateMatrix = SMatrix<f64, 8, 8>;
type MeasVector = SVector<f64, 4>;
type MeasMatrix = SMatrix<f64, 4, 4>;
type ObsMatrix = SMatrix<f64, 4, 8>;

/// Boxes never shrink below this many pixels per side.
pub const MIN_BOX_SIDE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Process noise std on position/size, as a fraction of the box side.
    pub process_position: f64,
    /// Process noise std on velocities, as a fraction of the box side.
    pub process_velocity: f64,
    /// Measurement noise std, as a fraction of the box side.
    pub measurement: f64,
    /// Multiplier on the initial velocity std relative to `process_velocity`.
    pub initial_velocity_factor: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            process_position: 1.0 / 20.0,
            process_velocity: 1.0 / 160.0,
            measurement: 1.0 / 20.0,
            initial_velocity_factor: 10.0,
        }
    }
}

impl NoiseConfig {
    pub fn is_valid(&self) -> bool {
        [self.process_position, self.process_velocity, self.measurement, self.initial_velocity_factor]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl KalmanState {
    pub fn to_box(&self) -> GlobalBox {
        GlobalBox::new(
            self.mean[0],
            self.mean[1],
            self.mean[2].max(MIN_BOX_SIDE),
            self.mean[3].max(MIN_BOX_SIDE),
        )
    }

    pub fn velocity(&self) -> [f64; 4] {
        [self.mean[4], self.mean[5], self.mean[6], self.mean[7]]
    }

    fn clamp_size(&mut self) {
        self.mean[2] = self.mean[2].max(MIN_BOX_SIDE);
        self.mean[3] = self.mean[3].max(MIN_BOX_SIDE);
    }

    fn symmetrize(&mut self) {
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
    }
}

fn side_scales(w: f64, h: f64) -> [f64; 4] {
    let (w, h) = (w.max(MIN_BOX_SIDE), h.max(MIN_BOX_SIDE));
    [w, h, w, h]
}

fn transition() -> StateMatrix {
    let mut f = StateMatrix::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> ObsMatrix {
    ObsMatrix::identity()
}

pub fn kf_init(b: &GlobalBox, cfg: &NoiseConfig) -> KalmanState {
    let mut mean = StateVector::zeros();
    mean[0] = b.x;
    mean[1] = b.y;
    mean[2] = b.w;
    mean[3] = b.h;
    let scales = side_scales(b.w, b.h);
    let mut cov = StateMatrix::zeros();
    for i in 0..4 {
        let pos = 2.0 * cfg.process_position * scales[i];
        let vel = cfg.initial_velocity_factor * cfg.process_velocity * scales[i];
        cov[(i, i)] = pos * pos;
        cov[(i + 4, i + 4)] = vel * vel;
    }
    let mut state = KalmanState { mean, covariance: cov };
    state.clamp_size();
    state
}

/// Advances the state one frame and returns the a-priori box.
pub fn kf_predict(state: &KalmanState, cfg: &NoiseConfig) -> (KalmanState, GlobalBox) {
    let f = transition();
    let scales = side_scales(state.mean[2], state.mean[3]);
    let mut q = StateMatrix::zeros();
    for i in 0..4 {
        let pos = cfg.process_position * scales[i];
        let vel = cfg.process_velocity * scales[i];
        q[(i, i)] = pos * pos;
        q[(i + 4, i + 4)] = vel * vel;
    }
    let mut next = KalmanState {
        mean: f * state.mean,
        covariance: f * state.covariance * f.transpose() + q,
    };
    next.symmetrize();
    next.clamp_size();
    let prior = next.to_box();
    (next, prior)
}

pub fn kf_update(state: &KalmanState, meas: &GlobalBox, cfg: &NoiseConfig) -> KalmanState {
    let h = observation();
    let scales = side_scales(state.mean[2], state.mean[3]);
    let mut r = MeasMatrix::zeros();
    for i in 0..4 {
        let s = cfg.measurement * scales[i];
        r[(i, i)] = s * s;
    }
    let z = MeasVector::new(meas.x, meas.y, meas.w, meas.h);
    let innovation = z - h * state.mean;
    let s = h * state.covariance * h.transpose() + r;
    // S is SPD (prior covariance PSD plus a positive diagonal R).
    let s_inv = s
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| s.try_inverse())
        .expect("innovation covariance is positive definite");
    let gain = state.covariance * h.transpose() * s_inv;
    let ikh = StateMatrix::identity() - gain * h;
    // Joseph form keeps the covariance PSD under rounding.
    let covariance = ikh * state.covariance * ikh.transpose() + gain * r * gain.transpose();
    let mut next = KalmanState { mean: state.mean + gain * innovation, covariance };
    next.symmetrize();
    next.clamp_size();
    next
}
