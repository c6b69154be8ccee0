//! Deterministic software model of a shape-changing haptic rotary knob.
//!
//! The crate is split along the device's signal path:
//!
//! - [`transduction`]: encoder quantization, gear backlash, velocity
//!   estimation and the torque to PWM mapping.
//! - [`effects`]: the force-feedback rendering primitives and the torque
//!   clamp.
//! - [`shape`]: pulley to fin kinematics, shape presets and servo slewing.
//! - [`plant`]: the rigid rotor the renderer pushes against.
//! - [`session`]: the fixed-rate loop tying it all together, with traces,
//!   hand scripts, trace analysis and the live JSON service.

pub mod effects;
pub mod error;
pub mod plant;
pub mod session;
pub mod shape;
pub mod transduction;

pub use error::{Error, Result};
