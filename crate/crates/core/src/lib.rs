//! Core algorithms for autonomous flexible-endoscope navigation.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numerical piece
//! of the navigation stack:
//!
//! * [`geometry`]: arc-length sampled curves, discrete curvature/torsion and
//!   parametric tubular phantoms with exact signed distance and ray casting.
//! * [`plant`]: the hidden ground-truth endoscope (three motors, a constant
//!   curvature distal section and a follow-the-leader passive body).
//! * [`proprioception`]: simulated fibre shape sensing, elastic rod energy and
//!   the Kalman filter used to predict the passive body.
//! * [`depth`]: depth rendering, region-of-interest extraction and the smoothed
//!   image feature.
//! * [`jacobian`]: online RBF estimation of the image and shape Jacobians.
//! * [`control`]: the damped pseudo-inverse controller, horizon prediction and
//!   the sampling MPC that trades feature tracking against energy flow.
//! * [`nav`]: the closed navigation loop and its metrics.
//!
//! File formats, configuration parsing and the command line live in the
//! companion `endonav` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod control;
pub mod depth;
pub mod error;
pub mod geometry;
pub mod jacobian;
pub(crate) mod math;
pub mod nav;
pub mod plant;
pub mod proprioception;

pub use error::{Error, Result};

/// 3-D point or vector in millimetres.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 2-D image-plane quantity in pixels.
pub type Vec2 = nalgebra::Vector2<f64>;
