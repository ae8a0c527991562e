//! Upper-limb motion capture fitting and movement-quality analysis.
//!
//! This crate reconstructs upper-limb joint kinematics with two independent
//! pipelines sharing a single parametric body model:
//!
//! * **End-to-end multi-camera fitting** ([`solvers::fit_end_to_end`]): a
//!   per-trial implicit trajectory network maps time to joint angles; the
//!   network weights, per-segment body scale, and per-marker offsets are
//!   jointly optimized against confidence-weighted 2D reprojection error
//!   across all calibrated cameras, with scale and offsets shared across the
//!   trials of a session.
//! * **Two-stage marker fitting** ([`solvers::fit_two_stage`]): scale the
//!   model on a stationary window of 3D markers, then solve per-frame joint
//!   angles by damped least squares.
//!
//! Downstream analysis derives the six standard drinking-task kinematic
//! channels ([`kin`]), segments the task into phases and computes twelve
//! movement-quality measures ([`measures`]), and quantifies agreement between
//! two systems via bias removal, lag search, RMSE, and Pearson correlation
//! ([`compare`]). The [`synth`] module generates seeded ground-truth
//! scenarios (drinking-like trajectories, virtual camera rigs, noise models)
//! used for validation.
//!
//! All numeric kernels (forward kinematics, camera projection, the trajectory
//! network) are generic over [`ad::Real`], so the same code runs both as plain
//! `f64` and under the reverse-mode tape in [`ad`].

pub mod ad;
pub mod camera;
pub mod compare;
pub mod error;
pub mod io;
pub mod kin;
pub mod math;
pub mod measures;
pub mod mlp;
pub mod model;
pub mod opt;
pub mod param;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result};
pub use model::{BodyModel, JointAngles, MarkerCloud, MarkerOffsets, ScaleParams, Side};
