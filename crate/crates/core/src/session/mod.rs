//! The fixed-rate control loop and everything that drives or observes it.

pub mod analyze;
pub mod config;
pub mod protocol;
pub mod script;
pub mod server;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::effects::{EffectStack, RenderContext};
use crate::error::{Error, Result};
use crate::plant::{self, HandInput, PlantParams, PlantState};
use crate::shape::{fin_displacements, preset_targets, step_servos, PulleyState, ServoState, ShapePreset, FIN_COUNT};
use crate::transduction::{
    counts_to_angle, estimate_velocity, quantize_angle, torque_to_command, Direction, VelocityFilterState,
};

pub use config::{default_modes, Mode, SessionConfig, Sensing};
use protocol::{Ack, Command, ErrorCode, Rejection, Request, ServerMessage};

/// One control-tick observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub theta_deg: f64,
    pub omega_dps: f64,
    pub torque_cmd_ncm: f64,
    pub duty: f64,
    pub direction: Direction,
    pub mode: u8,
    pub preset: ShapePreset,
    pub pulley_a_deg: f64,
    pub pulley_b_deg: f64,
    pub fins_mm: [f64; FIN_COUNT],
    pub hand_torque_ncm: f64,
}

/// Picks snapshots out of the tick stream at an average of `rate_hz`.
///
/// A phase accumulator is used so that rates which do not divide the loop
/// rate still come out exact on average (60 Hz over 1 kHz alternates gaps
/// of 16 and 17 ticks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decimator {
    rate_hz: f64,
    loop_rate_hz: f64,
    phase: f64,
}

impl Decimator {
    pub fn new(rate_hz: f64, loop_rate_hz: f64) -> Self {
        Self {
            rate_hz,
            loop_rate_hz,
            phase: 0.0,
        }
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    /// Call once per tick; true when this tick's snapshot should be sent.
    pub fn fire(&mut self) -> bool {
        self.phase += self.rate_hz;
        if self.phase >= self.loop_rate_hz {
            self.phase -= self.loop_rate_hz;
            true
        } else {
            false
        }
    }
}

/// Effect of a command on the issuing client's snapshot stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamChange {
    None,
    Subscribe(f64),
    Unsubscribe,
}

/// One simulated device: plant, sensing chain, renderer and shape servos.
#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    params: PlantParams,
    modes: Vec<Mode>,
    mode: u8,
    preset: ShapePreset,
    effects: EffectStack,
    plant: PlantState,
    filter: VelocityFilterState,
    rendered_angle: f64,
    servos: ServoState,
    hand: HandInput,
    ticks: u64,
    stream: Option<Decimator>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let modes = config.mode_table()?;
        let params = config.plant_params();
        let first = modes[config.initial_mode as usize - 1].clone();
        Ok(Self {
            params,
            mode: first.id,
            preset: first.preset,
            effects: EffectStack::new(first.effects, 0.0)?,
            modes,
            plant: PlantState::default(),
            filter: VelocityFilterState::new(0, config.velocity_cutoff_hz),
            rendered_angle: 0.0,
            servos: ServoState {
                current: PulleyState::HOME,
                slew_rate: config.servo_slew_rate,
            },
            hand: HandInput::released(),
            ticks: 0,
            stream: None,
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn plant_params(&self) -> &PlantParams {
        &self.params
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn effects(&self) -> &EffectStack {
        &self.effects
    }

    pub fn effects_mut(&mut self) -> &mut EffectStack {
        &mut self.effects
    }

    pub fn mode(&self) -> u8 {
        self.mode
    }

    pub fn preset(&self) -> ShapePreset {
        self.preset
    }

    pub fn servos(&self) -> &ServoState {
        &self.servos
    }

    pub fn hand(&self) -> &HandInput {
        &self.hand
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Time of the most recent tick.
    pub fn time(&self) -> f64 {
        self.ticks as f64 / self.config.loop_rate_hz
    }

    /// Overwrite the plant state, e.g. to start from a given spin. The
    /// sensing chain is re-seeded so the jump does not read as motion.
    pub fn set_plant_state(&mut self, state: PlantState) {
        self.plant = state;
        let count = quantize_angle(state.motor_side_angle(), &self.config.drivetrain);
        self.filter = VelocityFilterState {
            last_count: count,
            filtered_velocity: match self.config.sensing {
                Sensing::Encoder => state.omega,
                Sensing::Ideal => 0.0,
            },
            cutoff_hz: self.config.velocity_cutoff_hz,
        };
        self.rendered_angle = self.sensed_angle_now();
    }

    fn sensed_angle_now(&self) -> f64 {
        match self.config.sensing {
            Sensing::Encoder => counts_to_angle(self.filter.last_count, &self.config.drivetrain),
            Sensing::Ideal => self.plant.theta,
        }
    }

    pub fn set_mode(&mut self, id: i64) -> Result<()> {
        let mode = usize::try_from(id)
            .ok()
            .filter(|i| (1..=self.modes.len()).contains(i))
            .map(|i| self.modes[i - 1].clone())
            .ok_or(Error::UnknownMode(id))?;
        self.effects = EffectStack::new(mode.effects, self.rendered_angle)?;
        self.mode = mode.id;
        self.preset = mode.preset;
        Ok(())
    }

    /// Change the shape target without touching the force rendering.
    pub fn set_preset(&mut self, preset: ShapePreset) {
        self.preset = preset;
    }

    pub fn set_hand(&mut self, hand: HandInput) -> Result<()> {
        hand.validate()?;
        self.hand = hand;
        Ok(())
    }

    /// Re-zero the knob and sensing chain and send the servos home. The
    /// active mode and the clock are kept.
    pub fn reset(&mut self) {
        self.plant = PlantState::default();
        self.filter = VelocityFilterState::new(0, self.config.velocity_cutoff_hz);
        self.rendered_angle = 0.0;
        self.effects.reset_proxies(0.0);
        self.servos.current = PulleyState::HOME;
    }

    /// Run one control period with the given hand input.
    pub fn tick(&mut self, hand: &HandInput) -> Result<Snapshot> {
        let dt = self.params.dt;
        let drivetrain = &self.config.drivetrain;

        let (theta, omega) = match self.config.sensing {
            Sensing::Encoder => {
                let count = quantize_angle(self.plant.motor_side_angle(), drivetrain);
                let (filter, velocity) = estimate_velocity(self.filter, count, dt, drivetrain)?;
                self.filter = filter;
                (counts_to_angle(count, drivetrain), velocity)
            }
            Sensing::Ideal => (self.plant.theta, self.plant.omega),
        };
        self.rendered_angle = theta;

        let ctx = RenderContext {
            theta,
            omega,
            max_torque: self.params.max_motor_torque,
        };
        let torque = self.effects.render(&ctx);
        self.effects.advance(&ctx, dt)?;

        let command = torque_to_command(torque, self.params.max_motor_torque);
        let motor = plant::motor_torque(&command, &self.params);
        let hand_torque = plant::hand_torque(hand, &self.plant);
        self.plant = plant::step(&self.plant, motor, hand_torque, &self.params, drivetrain.backlash_width);

        self.servos = step_servos(&self.servos, &preset_targets(self.preset), dt);
        self.ticks += 1;

        let fins = fin_displacements(&self.servos.current);
        Ok(Snapshot {
            t: self.time(),
            theta_deg: self.plant.theta,
            omega_dps: self.plant.omega,
            torque_cmd_ncm: torque,
            duty: command.duty,
            direction: command.direction,
            mode: self.mode,
            preset: self.preset,
            pulley_a_deg: self.servos.current.pulley_a_deg(),
            pulley_b_deg: self.servos.current.pulley_b_deg(),
            fins_mm: fins.displacements_mm,
            hand_torque_ncm: hand_torque,
        })
    }

    /// Tick with the live hand set by `set_hand`.
    pub fn tick_live(&mut self) -> Result<Snapshot> {
        let hand = self.hand;
        self.tick(&hand)
    }

    /// Execute a parsed command. Subscription changes are reported rather
    /// than applied, since streams belong to the caller's connection.
    pub fn execute(&mut self, request: Request) -> (ServerMessage, StreamChange) {
        let Request { id, command } = request;
        let out_of_range = |message: String| {
            (
                ServerMessage::Error(Rejection::new(id.clone(), ErrorCode::OutOfRange, message)),
                StreamChange::None,
            )
        };
        let ack = Ack {
            id: id.clone(),
            ..Default::default()
        };
        match command {
            Command::Hello => (ServerMessage::Ack(ack), StreamChange::None),
            Command::SetMode(mode) => match self.set_mode(mode) {
                Ok(()) => (
                    ServerMessage::Ack(Ack {
                        mode: Some(self.mode),
                        ..ack
                    }),
                    StreamChange::None,
                ),
                Err(e) => out_of_range(e.to_string()),
            },
            Command::SetPreset(preset) => {
                self.set_preset(preset);
                (
                    ServerMessage::Ack(Ack {
                        preset: Some(preset),
                        ..ack
                    }),
                    StreamChange::None,
                )
            }
            Command::SetHand(hand) => match self.set_hand(hand) {
                Ok(()) => (ServerMessage::Ack(ack), StreamChange::None),
                Err(e) => out_of_range(e.to_string()),
            },
            Command::Reset => {
                self.reset();
                (ServerMessage::Ack(ack), StreamChange::None)
            }
            Command::Subscribe(rate) => {
                if rate > 0.0 && rate <= self.config.loop_rate_hz {
                    (
                        ServerMessage::Ack(Ack {
                            rate_hz: Some(rate),
                            ..ack
                        }),
                        StreamChange::Subscribe(rate),
                    )
                } else {
                    out_of_range(format!(
                        "rate_hz {rate} outside (0, {}]",
                        self.config.loop_rate_hz
                    ))
                }
            }
            Command::Unsubscribe => (ServerMessage::Ack(ack), StreamChange::Unsubscribe),
        }
    }

    /// Parse and execute one protocol line for the session's own (single)
    /// snapshot stream.
    pub fn handle_message(&mut self, line: &str) -> ServerMessage {
        match protocol::parse_request(line) {
            Ok(request) => {
                let (reply, change) = self.execute(request);
                match change {
                    StreamChange::Subscribe(rate) => {
                        self.stream = Some(Decimator::new(rate, self.config.loop_rate_hz))
                    }
                    StreamChange::Unsubscribe => self.stream = None,
                    StreamChange::None => {}
                }
                reply
            }
            Err(rejection) => ServerMessage::Error(rejection),
        }
    }

    /// Live tick that also returns the snapshot message when the session's
    /// stream is due.
    pub fn tick_streaming(&mut self) -> Result<(Snapshot, Option<ServerMessage>)> {
        let snapshot = self.tick_live()?;
        let due = self.stream.as_mut().is_some_and(Decimator::fire);
        let message = due.then(|| ServerMessage::Snapshot(snapshot.clone()));
        Ok((snapshot, message))
    }
}
