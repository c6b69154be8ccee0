//! Kinematics of the fin-expansion mechanism.
//!
//! Two coaxial pulleys drive six radial fins. Pulley A (0-90°) moves fins
//! 1, 2, 4 and 5 together. Pulley B (0-130°) moves fins 0 and 3 one after
//! the other: 60° of travel for fin 0, a 10° dwell in which fin 0 is locked
//! fully out, then 60° of travel for fin 3.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIN_COUNT: usize = 6;
pub const FIN_TRAVEL_MM: f64 = 8.0;
/// Knob radius with every fin retracted (52 mm diameter).
pub const KNOB_BASE_RADIUS_MM: f64 = 26.0;
pub const PULLEY_A_RANGE_DEG: f64 = 90.0;
pub const PULLEY_B_RANGE_DEG: f64 = 130.0;
/// Pulley B angle at which fin 0 reaches full travel.
pub const PULLEY_B_FIRST_STAGE_DEG: f64 = 60.0;
/// Lock surplus between the two stages of pulley B.
pub const PULLEY_B_DWELL_DEG: f64 = 10.0;

const PULLEY_A_FINS: [usize; 4] = [1, 2, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawPulleys")]
pub struct PulleyState {
    pulley_a_deg: f64,
    pulley_b_deg: f64,
}

#[derive(Deserialize)]
struct RawPulleys {
    pulley_a_deg: f64,
    pulley_b_deg: f64,
}

impl TryFrom<RawPulleys> for PulleyState {
    type Error = Error;

    fn try_from(raw: RawPulleys) -> Result<Self> {
        PulleyState::new(raw.pulley_a_deg, raw.pulley_b_deg)
    }
}

impl PulleyState {
    pub const HOME: PulleyState = PulleyState {
        pulley_a_deg: 0.0,
        pulley_b_deg: 0.0,
    };

    pub fn new(pulley_a_deg: f64, pulley_b_deg: f64) -> Result<Self> {
        check_range("pulley_a_deg", pulley_a_deg, PULLEY_A_RANGE_DEG)?;
        check_range("pulley_b_deg", pulley_b_deg, PULLEY_B_RANGE_DEG)?;
        Ok(Self {
            pulley_a_deg,
            pulley_b_deg,
        })
    }

    pub fn pulley_a_deg(&self) -> f64 {
        self.pulley_a_deg
    }

    pub fn pulley_b_deg(&self) -> f64 {
        self.pulley_b_deg
    }
}

fn check_range(what: &'static str, value: f64, max: f64) -> Result<()> {
    if (0.0..=max).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what,
            value,
            min: 0.0,
            max,
        })
    }
}

/// Radial displacement of each fin, indexed at 60° spacing around the knob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinConfiguration {
    pub displacements_mm: [f64; FIN_COUNT],
}

pub fn fin_displacements(pulleys: &PulleyState) -> FinConfiguration {
    let a = pulleys.pulley_a_deg;
    let b = pulleys.pulley_b_deg;
    let mut d = [0.0; FIN_COUNT];
    let a_travel = FIN_TRAVEL_MM * a / PULLEY_A_RANGE_DEG;
    for i in PULLEY_A_FINS {
        d[i] = a_travel;
    }
    let second_start = PULLEY_B_FIRST_STAGE_DEG + PULLEY_B_DWELL_DEG;
    let second_span = PULLEY_B_RANGE_DEG - second_start;
    d[0] = FIN_TRAVEL_MM * b.min(PULLEY_B_FIRST_STAGE_DEG) / PULLEY_B_FIRST_STAGE_DEG;
    d[3] = if b <= second_start {
        0.0
    } else {
        FIN_TRAVEL_MM * (b - second_start) / second_span
    };
    FinConfiguration { displacements_mm: d }
}

/// Outer radius of each fin in mm.
pub fn outer_profile(fins: &FinConfiguration) -> [f64; FIN_COUNT] {
    fins.displacements_mm.map(|d| KNOB_BASE_RADIUS_MM + d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapePreset {
    #[default]
    Default,
    Pointer,
    TwoFin,
    FourFin,
    FiveFin,
    SixFin,
    HalfGrip,
}

impl ShapePreset {
    pub const ALL: [ShapePreset; 7] = [
        ShapePreset::Default,
        ShapePreset::Pointer,
        ShapePreset::TwoFin,
        ShapePreset::FourFin,
        ShapePreset::FiveFin,
        ShapePreset::SixFin,
        ShapePreset::HalfGrip,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: i64) -> Result<Self> {
        usize::try_from(id)
            .ok()
            .and_then(|i| Self::ALL.get(i).copied())
            .ok_or_else(|| Error::UnknownPreset(id.to_string()))
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapePreset::Default => "default",
            ShapePreset::Pointer => "pointer",
            ShapePreset::TwoFin => "two_fin",
            ShapePreset::FourFin => "four_fin",
            ShapePreset::FiveFin => "five_fin",
            ShapePreset::SixFin => "six_fin",
            ShapePreset::HalfGrip => "half_grip",
        }
    }
}

impl fmt::Display for ShapePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

pub fn preset_targets(preset: ShapePreset) -> PulleyState {
    let (a, b) = match preset {
        ShapePreset::Default => (0.0, 0.0),
        ShapePreset::Pointer => (0.0, 65.0),
        ShapePreset::TwoFin => (0.0, 130.0),
        ShapePreset::FourFin => (90.0, 0.0),
        ShapePreset::FiveFin => (90.0, 65.0),
        ShapePreset::SixFin => (90.0, 130.0),
        ShapePreset::HalfGrip => (45.0, 0.0),
    };
    PulleyState {
        pulley_a_deg: a,
        pulley_b_deg: b,
    }
}

/// Servo pair driving the pulleys (1:1, so servo angle equals pulley angle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoState {
    pub current: PulleyState,
    /// Degrees per second, per pulley.
    pub slew_rate: f64,
}

impl Default for ServoState {
    fn default() -> Self {
        Self {
            current: PulleyState::HOME,
            slew_rate: 500.0,
        }
    }
}

fn slew(current: f64, target: f64, max_step: f64) -> f64 {
    let delta = target - current;
    // Accumulated rounding must not cost an extra tick on arrival.
    if delta.abs() <= max_step * (1.0 + 1e-9) {
        target
    } else {
        current + max_step.copysign(delta)
    }
}

pub fn step_servos(servos: &ServoState, target: &PulleyState, dt: f64) -> ServoState {
    let max_step = (servos.slew_rate * dt).max(0.0);
    ServoState {
        current: PulleyState {
            pulley_a_deg: slew(servos.current.pulley_a_deg, target.pulley_a_deg, max_step),
            pulley_b_deg: slew(servos.current.pulley_b_deg, target.pulley_b_deg, max_step),
        },
        slew_rate: servos.slew_rate,
    }
}
