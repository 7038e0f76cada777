//! EKF pose tracking against a fixed-landmark map.
//!
//! The filter state is the planar pose `(x, y, psi)`. Prediction integrates
//! rear wheel speeds and yaw rate directly; correction observes the mapped
//! cones in the body frame. Landmarks are treated as fixed constants: once
//! a cone is confirmed by the mapping logic its position never moves, so no
//! cross-covariances are carried and the filter stays 3-dimensional.

mod assoc;
mod map;

pub use assoc::{
    icnn_associate, jcbb_associate, AssociationGates, JcbbConfig, JointInnovationModel,
};
pub use map::{Landmark, LandmarkMap, MapConfig, WorldProposal};

use alloc::vec::Vec;
use core::fmt;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Vector2};

use crate::geometry::{wrap_radians, Point2, Pose2D};

#[allow(unused_imports)]
use num_traits::Float;

/// Odometry sample: rear wheel speeds in revolutions per second plus the
/// gyro yaw rate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OdometryInput {
    pub n_rl: f64,
    pub n_rr: f64,
    pub psi_dot: f64,
    pub timestamp: f64,
}

/// Wheel geometry needed by the prediction model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleParams {
    /// Dynamic wheel radius in meters.
    pub r_dyn: f64,
}

/// Pose estimate with covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub pose: Pose2D,
    pub covariance: Matrix3<f64>,
}

impl EkfState {
    pub fn new(pose: Pose2D, covariance: Matrix3<f64>) -> Result<Self, EkfError> {
        let state = Self { pose, covariance };
        state.check_covariance()?;
        Ok(state)
    }

    /// Symmetry to 1e-9 and eigenvalues above -1e-12.
    pub fn check_covariance(&self) -> Result<(), EkfError> {
        let p = &self.covariance;
        let asym = (p - p.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(EkfError::Asymmetric(asym));
        }
        let eig = p.symmetric_eigenvalues();
        let min = eig.min();
        if min < -1e-12 {
            return Err(EkfError::NotPsd(min));
        }
        Ok(())
    }
}

/// A one-to-one pairing of measurement indices to map landmark indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(measurement index, landmark index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Measurements left unmatched.
    pub unmatched: Vec<usize>,
    /// Set when JCBB ran out of search budget and fell back to ICNN.
    pub used_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EkfError {
    /// Covariance asymmetry beyond tolerance; carries `max|P - P'|`.
    Asymmetric(f64),
    /// Covariance has an eigenvalue below -1e-12.
    NotPsd(f64),
    /// Innovation covariance not invertible; the update step was skipped.
    SingularInnovation,
    NonPositiveDt,
    /// Association refers to a measurement or landmark that does not exist.
    BadAssociation { measurement: usize, landmark: usize },
}

impl fmt::Display for EkfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EkfError::Asymmetric(a) => write!(f, "covariance asymmetric by {a:e}"),
            EkfError::NotPsd(min) => write!(f, "covariance eigenvalue {min:e} below tolerance"),
            EkfError::SingularInnovation => write!(f, "singular innovation covariance"),
            EkfError::NonPositiveDt => write!(f, "time step must be positive"),
            EkfError::BadAssociation {
                measurement,
                landmark,
            } => write!(f, "association ({measurement}, {landmark}) out of range"),
        }
    }
}

impl core::error::Error for EkfError {}

/// Input matrix of the prediction model at heading `psi`: wheel speeds map
/// through `pi * r_dyn` per wheel, the yaw rate passes straight through.
fn input_matrix(psi: f64, r_dyn: f64, dt: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    let k = PI * r_dyn;
    Matrix3::new(
        k * c, k * c, 0.0, //
        k * s, k * s, 0.0, //
        0.0, 0.0, 1.0,
    ) * dt
}

/// EKF prediction: advances the mean by `B(psi) * u` and propagates the
/// covariance with the analytic Jacobian, `P <- F P F' + Q`.
pub fn predict(
    state: &EkfState,
    u: &OdometryInput,
    dt: f64,
    params: &VehicleParams,
    q_process: &Matrix3<f64>,
) -> Result<EkfState, EkfError> {
    if !(dt > 0.0) {
        return Err(EkfError::NonPositiveDt);
    }
    let psi = state.pose.psi;
    let b = input_matrix(psi, params.r_dyn, dt);
    let uv = nalgebra::Vector3::new(u.n_rl, u.n_rr, u.psi_dot);
    let delta = b * uv;

    let f = predict_jacobian(state, u, dt, params);
    let mut covariance = f * state.covariance * f.transpose() + q_process;
    symmetrize(&mut covariance);

    let next = EkfState {
        pose: Pose2D::new(
            state.pose.x + delta.x,
            state.pose.y + delta.y,
            state.pose.psi + delta.z,
        ),
        covariance,
    };
    next.check_covariance()?;
    Ok(next)
}

/// Jacobian of the prediction w.r.t. the state, evaluated analytically.
pub fn predict_jacobian(
    state: &EkfState,
    u: &OdometryInput,
    dt: f64,
    params: &VehicleParams,
) -> Matrix3<f64> {
    let (s, c) = state.pose.psi.sin_cos();
    let k = PI * params.r_dyn * (u.n_rl + u.n_rr) * dt;
    Matrix3::new(
        1.0, 0.0, -k * s, //
        0.0, 1.0, k * c, //
        0.0, 0.0, 1.0,
    )
}

/// Predicted body-frame positions of the given landmarks:
/// `h_i = R(psi)^-1 (m_i - position)`.
pub fn observe(state: &EkfState, landmarks: &[Point2]) -> Vec<Point2> {
    landmarks
        .iter()
        .map(|m| crate::geometry::world_to_body(&state.pose, *m))
        .collect()
}

/// Jacobian of one body-frame observation w.r.t. `(x, y, psi)`.
pub fn observation_jacobian(state: &EkfState, landmark: Point2) -> Matrix2x3<f64> {
    let (s, c) = state.pose.psi.sin_cos();
    let dx = landmark.x - state.pose.x;
    let dy = landmark.y - state.pose.y;
    Matrix2x3::new(
        -c, -s, -s * dx + c * dy, //
        s, -c, -c * dx - s * dy,
    )
}

/// Stacked EKF correction over all paired measurements.
///
/// Landmarks are constants, so the Jacobian only covers the pose block of
/// the augmented state. The covariance update uses the Joseph form. On a
/// singular innovation covariance the update is skipped and the error
/// returned as the flag.
pub fn correct(
    state: &EkfState,
    measurements: &[Point2],
    assoc: &Association,
    landmarks: &[Point2],
    r_meas: &Matrix2<f64>,
) -> Result<EkfState, EkfError> {
    if assoc.pairs.is_empty() {
        return Ok(*state);
    }
    for &(mi, li) in &assoc.pairs {
        if mi >= measurements.len() || li >= landmarks.len() {
            return Err(EkfError::BadAssociation {
                measurement: mi,
                landmark: li,
            });
        }
    }

    let k_pairs = assoc.pairs.len();
    let dim = 2 * k_pairs;
    let mut h = DMatrix::zeros(dim, 3);
    let mut innovation = DVector::zeros(dim);
    let mut r_stack = DMatrix::zeros(dim, dim);
    for (row, &(mi, li)) in assoc.pairs.iter().enumerate() {
        let predicted = crate::geometry::world_to_body(&state.pose, landmarks[li]);
        let hj = observation_jacobian(state, landmarks[li]);
        for c in 0..3 {
            h[(2 * row, c)] = hj[(0, c)];
            h[(2 * row + 1, c)] = hj[(1, c)];
        }
        innovation[2 * row] = measurements[mi].x - predicted.x;
        innovation[2 * row + 1] = measurements[mi].y - predicted.y;
        r_stack
            .view_mut((2 * row, 2 * row), (2, 2))
            .copy_from(r_meas);
    }

    let p = state.covariance;
    let s = &h * p * h.transpose() + &r_stack;
    let chol = s
        .clone()
        .cholesky()
        .ok_or(EkfError::SingularInnovation)?;
    // K = P H' S^-1  via  S K' = H P
    let k_t = chol.solve(&(&h * p));
    let k = k_t.transpose();

    let dx = &k * &innovation;
    let pose = Pose2D::new(
        state.pose.x + dx[0],
        state.pose.y + dx[1],
        wrap_radians(state.pose.psi + dx[2]),
    );

    let kh = &k * &h;
    let i_kh = Matrix3::identity() - Matrix3::from_fn(|i, j| kh[(i, j)]);
    let krk = &k * &r_stack * k.transpose();
    let mut covariance =
        i_kh * p * i_kh.transpose() + Matrix3::from_fn(|i, j| krk[(i, j)]);
    symmetrize(&mut covariance);

    let next = EkfState { pose, covariance };
    next.check_covariance()?;
    Ok(next)
}

fn symmetrize(m: &mut Matrix3<f64>) {
    let t = m.transpose();
    *m = (*m + t) * 0.5;
}

/// Innovation covariance of a single landmark observation.
pub fn innovation_covariance(
    state: &EkfState,
    landmark: Point2,
    r_meas: &Matrix2<f64>,
) -> Matrix2<f64> {
    let h = observation_jacobian(state, landmark);
    h * state.covariance * h.transpose() + r_meas
}

/// Joint innovation covariance over all map landmarks, `2M x 2M`: pose
/// uncertainty correlates the blocks, measurement noise sits on the
/// diagonal.
pub fn joint_innovation_covariance(
    state: &EkfState,
    landmarks: &[Point2],
    r_meas: &Matrix2<f64>,
) -> DMatrix<f64> {
    let m = landmarks.len();
    let mut h = DMatrix::zeros(2 * m, 3);
    for (i, &lm) in landmarks.iter().enumerate() {
        let hj = observation_jacobian(state, lm);
        for c in 0..3 {
            h[(2 * i, c)] = hj[(0, c)];
            h[(2 * i + 1, c)] = hj[(1, c)];
        }
    }
    let mut s = &h * state.covariance * h.transpose();
    for i in 0..m {
        let mut block = s.view_mut((2 * i, 2 * i), (2, 2));
        block[(0, 0)] += r_meas[(0, 0)];
        block[(0, 1)] += r_meas[(0, 1)];
        block[(1, 0)] += r_meas[(1, 0)];
        block[(1, 1)] += r_meas[(1, 1)];
    }
    s
}

/// Normalized estimation error squared of a pose estimate against ground
/// truth (3 degrees of freedom, heading residual wrapped).
pub fn nees(estimate: &EkfState, truth: &Pose2D) -> Option<f64> {
    let e = nalgebra::Vector3::new(
        estimate.pose.x - truth.x,
        estimate.pose.y - truth.y,
        wrap_radians(estimate.pose.psi - truth.psi),
    );
    let inv = estimate.covariance.try_inverse()?;
    Some((e.transpose() * inv * e)[(0, 0)])
}

pub(crate) fn mahalanobis2(
    innovation: &Vector2<f64>,
    s: &Matrix2<f64>,
) -> Option<f64> {
    let inv = s.try_inverse()?;
    Some((innovation.transpose() * inv * innovation)[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn state(x: f64, y: f64, psi: f64, p: f64) -> EkfState {
        EkfState {
            pose: Pose2D::new(x, y, psi),
            covariance: Matrix3::identity() * p,
        }
    }

    const PARAMS: VehicleParams = VehicleParams { r_dyn: 0.2 };

    #[test]
    fn predict_straight_ahead() {
        let u = OdometryInput {
            n_rl: 1.0,
            n_rr: 1.0,
            psi_dot: 0.0,
            timestamp: 0.0,
        };
        let q = Matrix3::identity() * 1e-6;
        let next = predict(&state(0.0, 0.0, 0.0, 0.01), &u, 1.0, &PARAMS, &q).unwrap();
        // distance = 2 * pi * r_dyn * mean wheel speed
        assert_relative_eq!(next.pose.x, 2.0 * PI * 0.2, epsilon = 1e-12);
        assert_relative_eq!(next.pose.y, 0.0);
    }

    #[test]
    fn predict_zero_input_grows_covariance() {
        let u = OdometryInput {
            n_rl: 0.0,
            n_rr: 0.0,
            psi_dot: 0.0,
            timestamp: 0.0,
        };
        let q = Matrix3::identity() * 0.01;
        let s0 = state(1.0, 2.0, 0.3, 0.5);
        let next = predict(&s0, &u, 0.1, &PARAMS, &q).unwrap();
        assert_eq!(next.pose, s0.pose);
        assert_relative_eq!(next.covariance[(0, 0)], 0.51, epsilon = 1e-12);
    }

    #[test]
    fn predict_heading_turns_motion() {
        let u = OdometryInput {
            n_rl: 1.0,
            n_rr: 1.0,
            psi_dot: 0.0,
            timestamp: 0.0,
        };
        let q = Matrix3::zeros();
        let next = predict(&state(0.0, 0.0, PI / 2.0, 0.01), &u, 1.0, &PARAMS, &q).unwrap();
        assert_relative_eq!(next.pose.y, 2.0 * PI * 0.2, epsilon = 1e-12);
        assert_relative_eq!(next.pose.x, 0.0, epsilon = 1e-12);
        assert!(predict(&state(0.0, 0.0, 0.0, 0.01), &u, 0.0, &PARAMS, &q).is_err());
    }

    #[test]
    fn observe_examples() {
        let landmarks = [Point2::new(5.0, 0.0)];
        let z = observe(&state(0.0, 0.0, 0.0, 0.01), &landmarks);
        assert_relative_eq!(z[0].x, 5.0);
        assert_relative_eq!(z[0].y, 0.0);

        let z = observe(&state(0.0, 0.0, PI / 2.0, 0.01), &[Point2::new(0.0, 5.0)]);
        assert_relative_eq!(z[0].x, 5.0, epsilon = 1e-12);
        assert_relative_eq!(z[0].y, 0.0, epsilon = 1e-12);

        let z = observe(&state(1.0, 1.0, 0.0, 0.01), &[Point2::new(1.0, 1.0)]);
        assert_relative_eq!(z[0].x, 0.0);
        assert_relative_eq!(z[0].y, 0.0);
    }

    #[test]
    fn correct_zero_innovation_keeps_mean_shrinks_covariance() {
        let s0 = state(0.0, 0.0, 0.0, 0.5);
        let landmarks = [Point2::new(5.0, 0.0), Point2::new(3.0, 2.0)];
        let measurements = observe(&s0, &landmarks);
        let assoc = Association {
            pairs: vec![(0, 0), (1, 1)],
            unmatched: vec![],
            used_fallback: false,
        };
        let r = Matrix2::identity() * 0.01;
        let next = correct(&s0, &measurements, &assoc, &landmarks, &r).unwrap();
        assert_relative_eq!(next.pose.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(next.pose.y, 0.0, epsilon = 1e-12);
        assert!(next.covariance.trace() < s0.covariance.trace());
    }

    #[test]
    fn correct_empty_association_is_identity() {
        let s0 = state(1.0, 2.0, 0.5, 0.1);
        let next = correct(
            &s0,
            &[],
            &Association::default(),
            &[],
            &Matrix2::identity(),
        )
        .unwrap();
        assert_eq!(next.pose, s0.pose);
        assert_eq!(next.covariance, s0.covariance);
    }

    #[test]
    fn correct_matches_hand_computed_scalar_update() {
        // landmark dead ahead, measurement offset +0.5 m laterally,
        // P = diag(p, p, 0), R = diag(r, r) with p = r makes the lateral
        // Kalman gain exactly 1/2.
        let p = 0.04;
        let mut cov = Matrix3::zeros();
        cov[(0, 0)] = p;
        cov[(1, 1)] = p;
        let s0 = EkfState {
            pose: Pose2D::new(0.0, 0.0, 0.0),
            covariance: cov,
        };
        let landmarks = [Point2::new(10.0, 0.0)];
        let measurements = [Point2::new(10.0, 0.5)];
        let assoc = Association {
            pairs: vec![(0, 0)],
            unmatched: vec![],
            used_fallback: false,
        };
        let r = Matrix2::identity() * p;
        let next = correct(&s0, &measurements, &assoc, &landmarks, &r).unwrap();
        // innovation (0, +0.5); K_y = p/(p + r) = 1/2; dy = -K_y * 0.5
        assert_relative_eq!(next.pose.y, -0.25, epsilon = 1e-12);
        assert_relative_eq!(next.pose.x, 0.0, epsilon = 1e-12);
        // posterior variance p(1 - K) = p/2
        assert_relative_eq!(next.covariance[(1, 1)], p / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn nees_of_perfect_estimate_is_zero() {
        let s = state(1.0, 2.0, 0.3, 0.1);
        assert_relative_eq!(nees(&s, &s.pose).unwrap(), 0.0);
    }
}
