//! Software emulator of a hardware-in-the-loop orbital-interaction facility.
//!
//! An orbital dynamics simulator (`ods`) drives a virtual-forward-dynamics
//! Cartesian controller (`vfdm`) that commands a simulated position-controlled
//! manipulator (`plant`). Contact and sensing (`contact`, `frames`) close the
//! loop, and `harness` runs complete scenarios.

// `!(x > 0.0)` is how validation rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod contact;
pub mod error;
pub mod frames;
pub mod harness;
pub mod kinematics;
pub mod ods;
pub mod plant;
pub mod vfdm;

pub use error::{Error, Result};
