//! Sensing and actuation chain between encoder counts / PWM duty and the
//! mechanical knob angle / torque.
//!
//! Angles are in degrees at the knob, velocities in degrees per second and
//! torques in N·cm. Positive angles and torques are clockwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotation sense. Clockwise is the positive direction for both angle and
/// torque.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Clockwise,
    Counterclockwise,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Clockwise => "clockwise",
            Direction::Counterclockwise => "counterclockwise",
        }
    }

    /// +1 for clockwise, -1 for counterclockwise.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Clockwise => 1.0,
            Direction::Counterclockwise => -1.0,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "clockwise" => Ok(Direction::Clockwise),
            "counterclockwise" => Ok(Direction::Counterclockwise),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// Gear train and encoder parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrivetrainConfig {
    /// Encoder counts per motor shaft revolution.
    pub encoder_counts_per_motor_rev: f64,
    /// Motor revolutions per gearbox output revolution.
    pub gearbox_ratio: f64,
    /// Gearbox output revolutions per knob revolution (60/24 teeth).
    pub drive_ratio: f64,
    /// Free play of the gear train, degrees at the knob.
    pub backlash_width: f64,
}

impl Default for DrivetrainConfig {
    fn default() -> Self {
        Self {
            encoder_counts_per_motor_rev: 24.0,
            gearbox_ratio: 9.7,
            drive_ratio: 2.5,
            backlash_width: 0.0,
        }
    }
}

impl DrivetrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ratios = [
            ("encoder_counts_per_motor_rev", self.encoder_counts_per_motor_rev),
            ("gearbox_ratio", self.gearbox_ratio),
            ("drive_ratio", self.drive_ratio),
        ];
        for (name, value) in ratios {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {value}")));
            }
        }
        if !(self.backlash_width.is_finite() && self.backlash_width >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "backlash_width must be >= 0, got {}",
                self.backlash_width
            )));
        }
        Ok(())
    }

    /// Encoder counts per full knob revolution (582 for the stock drivetrain).
    pub fn counts_per_knob_rev(&self) -> f64 {
        self.encoder_counts_per_motor_rev * self.gearbox_ratio * self.drive_ratio
    }

    /// Knob degrees per encoder count, without validation.
    pub fn degrees_per_count(&self) -> f64 {
        360.0 / self.counts_per_knob_rev()
    }
}

/// Knob angle represented by one encoder count.
pub fn knob_resolution(config: &DrivetrainConfig) -> Result<f64> {
    config.validate()?;
    Ok(config.degrees_per_count())
}

/// Encoder count for a knob angle, rounding toward negative infinity.
///
/// The result is the largest `c` with `counts_to_angle(c) <= theta`, so the
/// quantization error always lies in `[0, resolution)`.
pub fn quantize_angle(theta: f64, config: &DrivetrainConfig) -> i64 {
    let res = config.degrees_per_count();
    let mut counts = (theta / res).floor() as i64;
    // Division rounding can land one count off near a threshold.
    if counts_to_angle(counts, config) > theta {
        counts -= 1;
    } else if counts_to_angle(counts + 1, config) <= theta {
        counts += 1;
    }
    counts
}

pub fn counts_to_angle(counts: i64, config: &DrivetrainConfig) -> f64 {
    counts as f64 * config.degrees_per_count()
}

/// Which side of the play the follower is currently pushed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engagement {
    Positive,
    Negative,
    #[default]
    None,
}

/// State of a dead-band (play) element between a driving and a driven shaft.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BacklashState {
    /// Angle of the driven side, degrees.
    pub driven_angle: f64,
    pub engaged: Engagement,
}

impl BacklashState {
    pub fn at(angle: f64) -> Self {
        Self {
            driven_angle: angle,
            engaged: Engagement::None,
        }
    }
}

/// Dead-band hysteresis. The driven side holds its position until the
/// driving side has crossed the free play, then follows it offset by
/// `width / 2`. A width of zero makes the element an identity.
pub fn apply_backlash(driving_angle: f64, state: BacklashState, width: f64) -> (BacklashState, f64) {
    let half = 0.5 * width.max(0.0);
    let next = if driving_angle - state.driven_angle > half {
        BacklashState {
            driven_angle: driving_angle - half,
            engaged: Engagement::Positive,
        }
    } else if state.driven_angle - driving_angle > half {
        BacklashState {
            driven_angle: driving_angle + half,
            engaged: Engagement::Negative,
        }
    } else if half == 0.0 {
        BacklashState {
            driven_angle: driving_angle,
            engaged: state.engaged,
        }
    } else {
        BacklashState {
            engaged: Engagement::None,
            ..state
        }
    };
    (next, next.driven_angle)
}

/// Finite-difference velocity estimator followed by a first-order low-pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityFilterState {
    pub last_count: i64,
    pub filtered_velocity: f64,
    pub cutoff_hz: f64,
}

impl Default for VelocityFilterState {
    fn default() -> Self {
        Self::new(0, 50.0)
    }
}

impl VelocityFilterState {
    pub fn new(initial_count: i64, cutoff_hz: f64) -> Self {
        Self {
            last_count: initial_count,
            filtered_velocity: 0.0,
            cutoff_hz,
        }
    }

    /// Pole of the discrete filter for a step of `dt` seconds.
    pub fn smoothing(&self, dt: f64) -> f64 {
        (-2.0 * std::f64::consts::PI * self.cutoff_hz * dt).exp()
    }

    /// Filter time constant in seconds.
    pub fn time_constant(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.cutoff_hz)
    }
}

pub fn estimate_velocity(
    state: VelocityFilterState,
    new_count: i64,
    dt: f64,
    config: &DrivetrainConfig,
) -> Result<(VelocityFilterState, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidStep(dt));
    }
    if !(state.cutoff_hz > 0.0 && state.cutoff_hz.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "velocity filter cutoff must be > 0 Hz, got {}",
            state.cutoff_hz
        )));
    }
    let raw = (new_count - state.last_count) as f64 * config.degrees_per_count() / dt;
    let alpha = state.smoothing(dt);
    let filtered = alpha * state.filtered_velocity + (1.0 - alpha) * raw;
    let next = VelocityFilterState {
        last_count: new_count,
        filtered_velocity: filtered,
        cutoff_hz: state.cutoff_hz,
    };
    Ok((next, filtered))
}

/// PWM duty and H-bridge direction for the motor driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorCommand {
    pub duty: f64,
    pub direction: Direction,
}

impl MotorCommand {
    pub const IDLE: MotorCommand = MotorCommand {
        duty: 0.0,
        direction: Direction::Clockwise,
    };

    pub fn signed_duty(&self) -> f64 {
        self.direction.sign() * self.duty
    }
}

/// Linear torque-to-duty map. Zero torque yields an idle clockwise command.
pub fn torque_to_command(torque: f64, max_torque: f64) -> MotorCommand {
    torque_to_command_with(torque, max_torque, |demand| demand)
}

/// Torque-to-duty map through a calibration curve. `curve` receives the
/// normalized demand `|torque| / max_torque` in `[0, 1]`; its output is
/// clamped to `[0, 1]`.
pub fn torque_to_command_with(
    torque: f64,
    max_torque: f64,
    curve: impl Fn(f64) -> f64,
) -> MotorCommand {
    if torque.is_nan() || torque == 0.0 || max_torque.is_nan() || max_torque <= 0.0 {
        return MotorCommand::IDLE;
    }
    let direction = if torque > 0.0 {
        Direction::Clockwise
    } else {
        Direction::Counterclockwise
    };
    let demand = (torque.abs() / max_torque).min(1.0);
    let duty = curve(demand);
    let duty = if duty.is_nan() { 0.0 } else { duty.clamp(0.0, 1.0) };
    MotorCommand { duty, direction }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stock() -> DrivetrainConfig {
        DrivetrainConfig::default()
    }

    #[test]
    fn stock_resolution() {
        let res = knob_resolution(&stock()).unwrap();
        assert!((res - 0.618557).abs() < 1e-6);
        assert!((res - 0.6186).abs() < 5e-4);
        assert!((stock().counts_per_knob_rev() - 582.0).abs() < 1e-9);
        assert!((res * 582.0 - 360.0).abs() < 1e-9);
    }

    #[test]
    fn identity_gearing() {
        let cfg = DrivetrainConfig {
            encoder_counts_per_motor_rev: 360.0,
            gearbox_ratio: 1.0,
            drive_ratio: 1.0,
            backlash_width: 0.0,
        };
        assert_eq!(knob_resolution(&cfg).unwrap(), 1.0);
    }

    #[test]
    fn non_positive_ratio_rejected() {
        for cfg in [
            DrivetrainConfig { gearbox_ratio: 0.0, ..stock() },
            DrivetrainConfig { drive_ratio: -2.5, ..stock() },
            DrivetrainConfig { encoder_counts_per_motor_rev: f64::NAN, ..stock() },
            DrivetrainConfig { backlash_width: -1.0, ..stock() },
        ] {
            assert!(matches!(knob_resolution(&cfg), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_angle(0.0, &stock()), 0);
        assert_eq!(quantize_angle(1.0, &stock()), 1);
        assert_eq!(quantize_angle(359.99, &stock()), 581);
        assert_eq!(quantize_angle(-0.1, &stock()), -1);
    }

    #[test]
    fn counts_to_angle_examples() {
        assert_eq!(counts_to_angle(0, &stock()), 0.0);
        assert!((counts_to_angle(582, &stock()) - 360.0).abs() < 1e-9);
        assert!((counts_to_angle(1, &stock()) - 0.618557).abs() < 1e-6);
    }

    #[test]
    fn quantize_exact_thresholds() {
        let cfg = stock();
        for c in -1000..1000 {
            let angle = counts_to_angle(c, &cfg);
            assert_eq!(quantize_angle(angle, &cfg), c);
        }
    }

    #[test]
    fn backlash_zero_width_is_identity() {
        let (_, out) = apply_backlash(12.34, BacklashState::default(), 0.0);
        assert_eq!(out, 12.34);
    }

    #[test]
    fn backlash_dead_band_sequence() {
        let start = BacklashState {
            driven_angle: 0.0,
            engaged: Engagement::Positive,
        };
        let (s, out) = apply_backlash(5.0, start, 2.0);
        assert_eq!(out, 4.0);
        assert_eq!(s.engaged, Engagement::Positive);
        let (s, out) = apply_backlash(3.0, s, 2.0);
        assert_eq!(out, 4.0);
        let (s, out) = apply_backlash(2.0, s, 2.0);
        assert_eq!(out, 3.0);
        assert_eq!(s.engaged, Engagement::Negative);
    }

    #[test]
    fn velocity_filter_pole() {
        let state = VelocityFilterState::default();
        assert!((state.smoothing(0.001) - 0.7304).abs() < 1e-4);
    }

    #[test]
    fn velocity_rejects_bad_step() {
        for dt in [0.0, -1e-3, f64::NAN] {
            let err = estimate_velocity(VelocityFilterState::default(), 1, dt, &stock());
            assert!(matches!(err, Err(Error::InvalidStep(_))));
        }
    }

    #[test]
    fn velocity_decays_under_constant_count() {
        let cfg = stock();
        let dt = 1e-3;
        let mut s = VelocityFilterState::default();
        // One count jump, then hold.
        let (next, peak) = estimate_velocity(s, 1, dt, &cfg).unwrap();
        s = next;
        let alpha = s.smoothing(dt);
        let mut v = peak;
        let mut ticks = 0u32;
        let ten_tau = (10.0 * s.time_constant() / dt).ceil() as u32;
        while ticks < ten_tau {
            let (next, out) = estimate_velocity(s, 1, dt, &cfg).unwrap();
            s = next;
            v = out;
            ticks += 1;
        }
        assert!(v.abs() <= peak * alpha.powi(ticks as i32) * (1.0 + 1e-12));
        assert!(v.abs() < peak * (-10.0f64).exp());
        // e^-10 is 4.5e-5; reaching 1e-6 of the peak needs about 14 time constants.
        let fourteen_tau = (14.0 * s.time_constant() / dt).ceil() as u32;
        while ticks < fourteen_tau {
            let (next, out) = estimate_velocity(s, 1, dt, &cfg).unwrap();
            s = next;
            v = out;
            ticks += 1;
        }
        assert!(v.abs() < 1e-6 * peak);
    }

    #[test]
    fn velocity_ramp_converges() {
        let cfg = stock();
        let dt = 1e-3;
        let mut s = VelocityFilterState::default();
        let ticks = (10.0 * s.time_constant() / dt).ceil() as i64;
        let mut v = 0.0;
        for k in 1..=ticks {
            let (next, out) = estimate_velocity(s, k, dt, &cfg).unwrap();
            s = next;
            v = out;
        }
        let truth = 360.0 / 582.0 / dt;
        assert!((truth - 618.557).abs() < 1e-3);
        assert!((v - truth).abs() < 0.01 * truth);
    }

    #[test]
    fn command_examples() {
        assert_eq!(
            torque_to_command(25.0, 25.0),
            MotorCommand { duty: 1.0, direction: Direction::Clockwise }
        );
        assert_eq!(torque_to_command(0.0, 25.0), MotorCommand::IDLE);
        assert_eq!(
            torque_to_command(-12.5, 25.0),
            MotorCommand { duty: 0.5, direction: Direction::Counterclockwise }
        );
        assert_eq!(torque_to_command(80.0, 25.0).duty, 1.0);
        assert_eq!(torque_to_command(f64::NAN, 25.0), MotorCommand::IDLE);
    }

    #[test]
    fn calibrated_command() {
        let cmd = torque_to_command_with(-12.5, 25.0, |d| d.sqrt());
        assert!((cmd.duty - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(cmd.direction, Direction::Counterclockwise);
        assert_eq!(torque_to_command_with(10.0, 25.0, |_| 3.0).duty, 1.0);
    }

    proptest! {
        #[test]
        fn quantization_error_within_one_step(theta in -1.0e5f64..1.0e5) {
            let cfg = stock();
            let err = theta - counts_to_angle(quantize_angle(theta, &cfg), &cfg);
            prop_assert!(err >= 0.0);
            prop_assert!(err < cfg.degrees_per_count());
        }

        #[test]
        fn quantization_is_monotone(a in -1.0e4f64..1.0e4, b in -1.0e4f64..1.0e4) {
            let cfg = stock();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize_angle(lo, &cfg) <= quantize_angle(hi, &cfg));
        }

        #[test]
        fn backlash_stays_within_half_width(
            width in 0.0f64..5.0,
            path in proptest::collection::vec(-50.0f64..50.0, 1..200),
        ) {
            let mut state = BacklashState::default();
            for &driving in &path {
                let (next, driven) = apply_backlash(driving, state, width);
                prop_assert!((driving - driven).abs() <= width / 2.0 + 1e-12);
                state = next;
            }
        }

        #[test]
        fn backlash_monotone_while_engaged(
            width in 0.1f64..5.0,
            start in -20.0f64..20.0,
            steps in proptest::collection::vec(0.0f64..1.0, 1..100),
        ) {
            // Driving side only moves forward: once engaged the driven side
            // never moves backward.
            let mut state = BacklashState::default();
            let mut driving = start;
            let mut last = apply_backlash(driving, state, width);
            state = last.0;
            for step in steps {
                driving += step;
                let next = apply_backlash(driving, state, width);
                prop_assert!(next.1 >= last.1);
                state = next.0;
                last = next;
            }
        }

        #[test]
        fn filter_dc_gain_is_one(
            cutoff in 1.0f64..500.0,
            dt in 1.0e-5f64..1.0e-3,
            rate in -20i64..20,
        ) {
            let cfg = stock();
            let mut s = VelocityFilterState::new(0, cutoff);
            let ticks = (10.0 * s.time_constant() / dt).ceil() as i64;
            let mut v = 0.0;
            for k in 1..=ticks {
                let (next, out) = estimate_velocity(s, k * rate, dt, &cfg).unwrap();
                s = next;
                v = out;
            }
            let truth = rate as f64 * cfg.degrees_per_count() / dt;
            prop_assert!((v - truth).abs() <= 0.01 * truth.abs() + 1e-9);
        }

        #[test]
        fn command_is_sign_symmetric(torque in -100.0f64..100.0, max in 0.1f64..50.0) {
            let pos = torque_to_command(torque, max);
            let neg = torque_to_command(-torque, max);
            prop_assert_eq!(pos.duty, neg.duty);
            prop_assert!((0.0..=1.0).contains(&pos.duty));
            if torque != 0.0 {
                prop_assert_ne!(pos.direction, neg.direction);
            }
        }
    }
}
