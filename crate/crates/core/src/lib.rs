//! Core algorithms for an autonomous cone-track racing stack.
//!
//! The crate covers the compute side of the pipeline that takes raw sensor
//! data to actuator commands on a track delimited by colored traffic cones:
//!
//! * [`scansync`] — aligning scan streams of multiple lidars whose counters
//!   differ at power-up.
//! * [`perception`] — density clustering of merged point clouds into 2D
//!   landmark proposals.
//! * [`camera`] — validating proposals in the image plane and attaching a
//!   color class.
//! * [`localization`] — EKF pose tracking against a fixed-landmark map with
//!   ICNN/JCBB data association.
//! * [`planner`] — centerline extraction from the landmark map and a
//!   quasi-steady-state velocity profile bounded by an acceleration-limit
//!   map.
//! * [`mpc`] — a linear time-varying predictive steering controller solved
//!   as a condensed unconstrained QP.
//! * [`longitudinal`] — feedforward PI velocity tracking.
//!
//! Everything here is pure computation over in-memory data; file formats,
//! the closed-loop simulator and the CLI live in the companion crate. The
//! crate is `no_std`-compatible (`alloc` required) when built without the
//! default `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod camera;
pub mod geometry;
pub mod localization;
pub mod longitudinal;
pub mod mpc;
pub mod perception;
pub mod planner;
pub mod scansync;
pub mod stats;

pub use nalgebra;

pub use camera::{BoundingBox, CameraModel, ClassLabel, SyntheticImage};
pub use geometry::{Point2, Point3, Pose2D, RigidTransform3};
pub use localization::{Association, EkfState, LandmarkMap, OdometryInput, VehicleParams};
pub use mpc::{BicycleParams, DiscreteModel, LinearModel, MpcConfig, MpcSolution};
pub use perception::{Cluster, LandmarkProposal, PerceptionConfig, PointCloud};
pub use planner::{CenterlinePath, GgsMap, VelocityProfile};
