//! Rigid single-axis rotor model of the knob.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transduction::{apply_backlash, BacklashState, MotorCommand};

/// Speed below which Coulomb friction is scaled down linearly, deg/s.
pub const COULOMB_REGULARIZATION_DPS: f64 = 1.0;

/// Mechanical parameters, all in knob units (degrees, N·cm, seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// N·cm·s² per degree.
    pub inertia: f64,
    /// N·cm·s per degree.
    pub viscous_friction: f64,
    /// N·cm.
    pub coulomb_friction: f64,
    pub dt: f64,
    /// Torque at full duty, N·cm.
    pub max_motor_torque: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            inertia: 8.73e-4,
            viscous_friction: 5e-3,
            coulomb_friction: 0.5,
            dt: 1e-3,
            max_motor_torque: 25.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            return Err(Error::InvalidConfig(format!("inertia must be > 0, got {}", self.inertia)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidStep(self.dt));
        }
        for (name, v) in [
            ("viscous_friction", self.viscous_friction),
            ("coulomb_friction", self.coulomb_friction),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.max_motor_torque > 0.0 && self.max_motor_torque.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "max_motor_torque must be > 0, got {}",
                self.max_motor_torque
            )));
        }
        // Explicit friction must not flip the sign of the velocity within a
        // step, otherwise an unforced rotor could gain energy.
        let friction_gain = self.dt
            * (self.viscous_friction + self.coulomb_friction / COULOMB_REGULARIZATION_DPS)
            / self.inertia;
        if friction_gain >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "friction too stiff for dt = {} s (dt·(b + c/1°/s)/J = {friction_gain:.3}, must be < 1)",
                self.dt
            )));
        }
        Ok(())
    }

    /// Kinetic energy in N·cm·deg.
    pub fn kinetic_energy(&self, omega: f64) -> f64 {
        0.5 * self.inertia * omega * omega
    }
}

/// Rotor state. `theta` is the unwrapped knob angle; `backlash` tracks the
/// encoder (motor) side, which the knob drags through the gear play.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub theta: f64,
    pub omega: f64,
    pub backlash: BacklashState,
}

impl PlantState {
    /// Angle seen by the encoder.
    pub fn motor_side_angle(&self) -> f64 {
        self.backlash.driven_angle
    }
}

/// The simulated user's hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HandInput {
    DirectTorque {
        torque_ncm: f64,
    },
    PositionGrip {
        target_deg: f64,
        grip_stiffness: f64,
        #[serde(default)]
        grip_damping: f64,
    },
}

impl Default for HandInput {
    fn default() -> Self {
        HandInput::DirectTorque { torque_ncm: 0.0 }
    }
}

impl HandInput {
    pub fn released() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            HandInput::DirectTorque { torque_ncm } if torque_ncm.is_finite() => Ok(()),
            HandInput::PositionGrip {
                target_deg,
                grip_stiffness,
                grip_damping,
            } if target_deg.is_finite()
                && grip_stiffness >= 0.0
                && grip_stiffness.is_finite()
                && grip_damping >= 0.0
                && grip_damping.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidConfig(format!("invalid hand input {self:?}"))),
        }
    }
}

pub fn motor_torque(cmd: &MotorCommand, params: &PlantParams) -> f64 {
    cmd.signed_duty() * params.max_motor_torque
}

pub fn hand_torque(hand: &HandInput, state: &PlantState) -> f64 {
    match *hand {
        HandInput::DirectTorque { torque_ncm } => torque_ncm,
        HandInput::PositionGrip {
            target_deg,
            grip_stiffness,
            grip_damping,
        } => grip_stiffness * (target_deg - state.theta) - grip_damping * state.omega,
    }
}

/// Friction torque opposing `omega`, continuous through zero.
pub fn friction_torque(omega: f64, params: &PlantParams) -> f64 {
    let coulomb_scale = (omega / COULOMB_REGULARIZATION_DPS).clamp(-1.0, 1.0);
    -params.viscous_friction * omega - params.coulomb_friction * coulomb_scale
}

/// One semi-implicit Euler step, then the encoder side is dragged through
/// the gear play.
pub fn step(
    state: &PlantState,
    motor: f64,
    hand: f64,
    params: &PlantParams,
    backlash_width: f64,
) -> PlantState {
    let net = motor + hand + friction_torque(state.omega, params);
    let omega = state.omega + params.dt * net / params.inertia;
    let theta = state.theta + params.dt * omega;
    let (backlash, _) = apply_backlash(theta, state.backlash, backlash_width);
    PlantState { theta, omega, backlash }
}
