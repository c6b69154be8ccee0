//! Scripted hand input as a list of keyframes.
//!
//! ```json
//! {"keyframes": [
//!   {"t_s": 0.0, "mode": "position_grip", "target_deg": 0,   "grip_stiffness": 5, "grip_damping": 0.02},
//!   {"t_s": 4.0, "mode": "position_grip", "target_deg": 360, "grip_stiffness": 5, "grip_damping": 0.02}
//! ]}
//! ```
//!
//! Between two keyframes of the same hand mode the numeric fields are
//! interpolated linearly; otherwise the earlier keyframe holds. Before the
//! first keyframe the hand is released, after the last it holds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::HandInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t_s: f64,
    #[serde(flatten)]
    pub hand: HandInput,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HandScript {
    pub keyframes: Vec<Keyframe>,
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + (b - a) * s
}

impl HandScript {
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self> {
        let script = Self { keyframes };
        script.validate()?;
        Ok(script)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script: HandScript = serde_json::from_str(&text)?;
        script.validate()?;
        Ok(script)
    }

    /// A hand that never touches the knob.
    pub fn released() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = f64::NEG_INFINITY;
        for (i, k) in self.keyframes.iter().enumerate() {
            if !k.t_s.is_finite() || k.t_s < last {
                return Err(Error::Script(format!("keyframe {i}: times must be finite and non-decreasing")));
            }
            k.hand
                .validate()
                .map_err(|e| Error::Script(format!("keyframe {i}: {e}")))?;
            last = k.t_s;
        }
        Ok(())
    }

    pub fn hand_at(&self, t: f64) -> HandInput {
        let upcoming = self.keyframes.partition_point(|k| k.t_s <= t);
        if upcoming == 0 {
            return HandInput::released();
        }
        let current = &self.keyframes[upcoming - 1];
        let Some(next) = self.keyframes.get(upcoming) else {
            return current.hand;
        };
        let s = (t - current.t_s) / (next.t_s - current.t_s);
        match (current.hand, next.hand) {
            (HandInput::DirectTorque { torque_ncm: a }, HandInput::DirectTorque { torque_ncm: b }) => {
                HandInput::DirectTorque { torque_ncm: lerp(a, b, s) }
            }
            (
                HandInput::PositionGrip {
                    target_deg: t0,
                    grip_stiffness: k0,
                    grip_damping: b0,
                },
                HandInput::PositionGrip {
                    target_deg: t1,
                    grip_stiffness: k1,
                    grip_damping: b1,
                },
            ) => HandInput::PositionGrip {
                target_deg: lerp(t0, t1, s),
                grip_stiffness: lerp(k0, k1, s),
                grip_damping: lerp(b0, b1, s),
            },
            (held, _) => held,
        }
    }
}
