use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::effects::{Detent, DetentKind, HardWall, LinearDamping, MassSpringDamper, Texture, TorqueEffect};
use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::shape::ShapePreset;
use crate::transduction::{Direction, DrivetrainConfig};

pub const MODE_COUNT: usize = 6;

/// Where the renderer gets the knob state from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensing {
    /// Quantized, backlash-affected encoder angle and filtered velocity.
    #[default]
    Encoder,
    /// True plant angle and velocity.
    Ideal,
}

/// A demo mode: a set of effects paired with a shape preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub id: u8,
    pub name: String,
    pub preset: ShapePreset,
    pub effects: Vec<TorqueEffect>,
}

impl Mode {
    fn new(id: u8, name: &str, preset: ShapePreset, effects: Vec<TorqueEffect>) -> Self {
        Self {
            id,
            name: name.to_string(),
            preset,
            effects,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MODE_COUNT as u8).contains(&self.id) {
            return Err(Error::UnknownMode(self.id.into()));
        }
        for effect in &self.effects {
            effect.validate()?;
            if let TorqueEffect::MassSpringDamper(m) = effect {
                if m.virtual_inertia.is_nan() || m.virtual_inertia <= 0.0 {
                    return Err(Error::DegenerateMass(m.virtual_inertia));
                }
            }
        }
        Ok(())
    }
}

fn valley(spacing: f64, amplitude: f64) -> TorqueEffect {
    TorqueEffect::Detent(Detent {
        spacing,
        amplitude,
        kind: DetentKind::Valley,
        phase: 0.0,
    })
}

/// The built-in mode table.
pub fn default_modes() -> Vec<Mode> {
    vec![
        Mode::new(1, "volume_detents", ShapePreset::Default, vec![valley(18.0, 4.0)]),
        Mode::new(
            2,
            "bounded_dial",
            ShapePreset::FourFin,
            vec![
                TorqueEffect::HardWall(HardWall {
                    wall_angle: 135.0,
                    blocked_side: Direction::Clockwise,
                    stiffness: 10.0,
                }),
                TorqueEffect::HardWall(HardWall {
                    wall_angle: -135.0,
                    blocked_side: Direction::Counterclockwise,
                    stiffness: 10.0,
                }),
            ],
        ),
        Mode::new(3, "selector", ShapePreset::Pointer, vec![valley(30.0, 6.0)]),
        Mode::new(
            4,
            "damped_scrub",
            ShapePreset::TwoFin,
            vec![TorqueEffect::LinearDamping(LinearDamping { coefficient: 0.02 })],
        ),
        Mode::new(
            5,
            "textured",
            ShapePreset::SixFin,
            vec![TorqueEffect::Texture(Texture {
                spatial_period: 12.0,
                peak_coefficient: 0.04,
            })],
        ),
        Mode::new(
            6,
            "spring_mass",
            ShapePreset::HalfGrip,
            vec![TorqueEffect::MassSpringDamper(MassSpringDamper {
                virtual_inertia: 0.002,
                coupling_stiffness: 2.0,
                coupling_damping: 0.05,
            })],
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub loop_rate_hz: f64,
    pub snapshot_rate_hz: f64,
    /// `plant.dt` is ignored; the step is always `1 / loop_rate_hz`.
    pub plant: PlantParams,
    pub drivetrain: DrivetrainConfig,
    /// Entries replace the built-in mode with the same id.
    pub modes: Vec<Mode>,
    pub velocity_cutoff_hz: f64,
    pub servo_slew_rate: f64,
    pub sensing: Sensing,
    pub initial_mode: u8,
    /// Reserved; the simulation has no stochastic parts.
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            loop_rate_hz: 1000.0,
            snapshot_rate_hz: 60.0,
            plant: PlantParams::default(),
            drivetrain: DrivetrainConfig::default(),
            modes: Vec::new(),
            velocity_cutoff_hz: 50.0,
            servo_slew_rate: 500.0,
            sensing: Sensing::Encoder,
            initial_mode: 1,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.loop_rate_hz
    }

    /// Plant parameters with the step tied to the loop rate.
    pub fn plant_params(&self) -> PlantParams {
        PlantParams {
            dt: self.dt(),
            ..self.plant
        }
    }

    /// Built-in modes with the configured overrides applied, ordered by id.
    pub fn mode_table(&self) -> Result<Vec<Mode>> {
        let mut table = default_modes();
        for mode in &self.modes {
            mode.validate()?;
            table[mode.id as usize - 1] = mode.clone();
        }
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.loop_rate_hz.is_finite() && self.snapshot_rate_hz > 0.0 && self.loop_rate_hz >= self.snapshot_rate_hz) {
            return Err(Error::InvalidConfig(format!(
                "need loop_rate_hz >= snapshot_rate_hz > 0, got {} and {}",
                self.loop_rate_hz, self.snapshot_rate_hz
            )));
        }
        if !(self.velocity_cutoff_hz > 0.0 && self.velocity_cutoff_hz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "velocity_cutoff_hz must be > 0, got {}",
                self.velocity_cutoff_hz
            )));
        }
        if !(self.servo_slew_rate > 0.0 && self.servo_slew_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "servo_slew_rate must be > 0, got {}",
                self.servo_slew_rate
            )));
        }
        if !(1..=MODE_COUNT as u8).contains(&self.initial_mode) {
            return Err(Error::UnknownMode(self.initial_mode.into()));
        }
        self.plant_params().validate()?;
        self.drivetrain.validate()?;
        self.mode_table()?;
        Ok(())
    }
}
