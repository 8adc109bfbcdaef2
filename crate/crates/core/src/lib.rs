//! Skeletal kinematics on a scalable kinematic tree.
//!
//! The crate evaluates marker and joint positions from joint angles, per-axis
//! body scale factors and a pelvis rotation matrix ([`fk`]), differentiates
//! them analytically ([`jacobian`]), fits models to marker data by segment
//! scaling and per-frame Levenberg-Marquardt inverse kinematics ([`ik`]), and
//! scores joint-angle estimates against ground truth ([`metrics`]).
//! Trajectory preprocessing lives in [`sequence`], synthetic ground truth and
//! noise studies in [`synth`], and file formats in [`io`].
//!
//! Angles are radians in memory and degrees in every file. Lengths are meters.

pub mod bench;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod fk;
pub mod ik;
pub mod io;
pub mod jacobian;
pub mod metrics;
pub mod model;
pub mod rotation;
pub mod sequence;
pub mod state;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
pub use fk::{forward_kinematics, forward_kinematics_batch, FkPlan, PoseResult};
pub use ik::{scale_model, solve_frame, solve_trajectory, IkFrameResult, IkSettings};
pub use jacobian::{finite_difference_jacobian, marker_jacobian, Jacobian};
pub use metrics::MetricsReport;
pub use model::SkeletalModel;
pub use state::{validate_state, KinematicState};
pub use trajectory::{AngleTrajectory, MarkerFrame, MarkerTrajectory};
