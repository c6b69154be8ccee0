//! Force-feedback rendering primitives.
//!
//! Every effect maps the sensed knob state to a torque in N·cm. Positive
//! torque is clockwise. [`compose_and_clamp`] sums a stack of effects and
//! enforces the actuator ceiling.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transduction::Direction;

/// One-sided spring wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardWall {
    pub wall_angle: f64,
    /// The side of `wall_angle` the knob is kept out of.
    pub blocked_side: Direction,
    /// N·cm per degree of penetration.
    pub stiffness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetentKind {
    /// Repulsive lattice: stable points sit halfway between lattice sites.
    Bump,
    /// Attractive lattice: stable points sit on `phase + k * spacing`.
    Valley,
}

/// Periodic sinusoidal detent field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detent {
    pub spacing: f64,
    pub amplitude: f64,
    pub kind: DetentKind,
    #[serde(default)]
    pub phase: f64,
}

impl Detent {
    /// Torque slope at a stable point, N·cm per degree.
    pub fn stiffness(&self) -> f64 {
        self.amplitude * TAU / self.spacing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDamping {
    /// N·cm·s per degree.
    pub coefficient: f64,
}

/// Damping whose coefficient varies sinusoidally with angle, between 0 and
/// `peak_coefficient`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub spatial_period: f64,
    pub peak_coefficient: f64,
}

impl Texture {
    pub fn coefficient_at(&self, theta: f64) -> f64 {
        self.peak_coefficient * 0.5 * (1.0 + (TAU * theta / self.spatial_period).sin())
    }
}

/// Virtual mass coupled to the knob through a spring and damper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassSpringDamper {
    /// N·cm·s² per degree.
    pub virtual_inertia: f64,
    pub coupling_stiffness: f64,
    pub coupling_damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TorqueEffect {
    HardWall(HardWall),
    Detent(Detent),
    LinearDamping(LinearDamping),
    Texture(Texture),
    MassSpringDamper(MassSpringDamper),
}

fn non_negative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be >= 0, got {value}")))
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be > 0, got {value}")))
    }
}

impl TorqueEffect {
    pub fn validate(&self) -> Result<()> {
        match self {
            TorqueEffect::HardWall(w) => {
                if !w.wall_angle.is_finite() {
                    return Err(Error::InvalidConfig("wall_angle must be finite".into()));
                }
                non_negative("stiffness", w.stiffness)
            }
            TorqueEffect::Detent(d) => {
                positive("spacing", d.spacing)?;
                non_negative("amplitude", d.amplitude)?;
                if !d.phase.is_finite() {
                    return Err(Error::InvalidConfig("phase must be finite".into()));
                }
                Ok(())
            }
            TorqueEffect::LinearDamping(d) => non_negative("coefficient", d.coefficient),
            TorqueEffect::Texture(t) => {
                positive("spatial_period", t.spatial_period)?;
                non_negative("peak_coefficient", t.peak_coefficient)
            }
            TorqueEffect::MassSpringDamper(m) => {
                non_negative("virtual_inertia", m.virtual_inertia)?;
                non_negative("coupling_stiffness", m.coupling_stiffness)?;
                non_negative("coupling_damping", m.coupling_damping)
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TorqueEffect::HardWall(_) => "hard_wall",
            TorqueEffect::Detent(_) => "detent",
            TorqueEffect::LinearDamping(_) => "linear_damping",
            TorqueEffect::Texture(_) => "texture",
            TorqueEffect::MassSpringDamper(_) => "mass_spring_damper",
        }
    }
}

/// Virtual mass state for a [`MassSpringDamper`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProxyState {
    pub proxy_angle: f64,
    pub proxy_velocity: f64,
}

impl ProxyState {
    pub fn at_rest(angle: f64) -> Self {
        Self {
            proxy_angle: angle,
            proxy_velocity: 0.0,
        }
    }
}

/// Knob state as seen by the renderer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderContext {
    pub theta: f64,
    pub omega: f64,
    pub max_torque: f64,
}

impl RenderContext {
    pub const DEFAULT_MAX_TORQUE: f64 = 25.0;

    pub fn new(theta: f64, omega: f64) -> Self {
        Self {
            theta,
            omega,
            max_torque: Self::DEFAULT_MAX_TORQUE,
        }
    }
}

/// Unclamped torque of a single effect.
pub fn effect_torque(effect: &TorqueEffect, ctx: &RenderContext, proxy: &ProxyState) -> f64 {
    match effect {
        TorqueEffect::HardWall(w) => {
            let penetration = match w.blocked_side {
                Direction::Clockwise => ctx.theta - w.wall_angle,
                Direction::Counterclockwise => w.wall_angle - ctx.theta,
            };
            if penetration > 0.0 {
                -w.blocked_side.sign() * w.stiffness * penetration
            } else {
                0.0
            }
        }
        TorqueEffect::Detent(d) => {
            let wave = d.amplitude * (TAU * (ctx.theta - d.phase) / d.spacing).sin();
            match d.kind {
                DetentKind::Valley => -wave,
                DetentKind::Bump => wave,
            }
        }
        TorqueEffect::LinearDamping(d) => -d.coefficient * ctx.omega,
        TorqueEffect::Texture(t) => -t.coefficient_at(ctx.theta) * ctx.omega,
        TorqueEffect::MassSpringDamper(m) => {
            -m.coupling_stiffness * (ctx.theta - proxy.proxy_angle)
                - m.coupling_damping * (ctx.omega - proxy.proxy_velocity)
        }
    }
}

/// Advance the virtual mass by one semi-implicit Euler step: velocity first,
/// then position with the new velocity.
pub fn step_proxy(
    effect: &MassSpringDamper,
    proxy: ProxyState,
    ctx: &RenderContext,
    dt: f64,
) -> Result<ProxyState> {
    if effect.virtual_inertia.is_nan() || effect.virtual_inertia <= 0.0 {
        return Err(Error::DegenerateMass(effect.virtual_inertia));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidStep(dt));
    }
    let coupling = effect.coupling_stiffness * (ctx.theta - proxy.proxy_angle)
        + effect.coupling_damping * (ctx.omega - proxy.proxy_velocity);
    let velocity = proxy.proxy_velocity + dt * coupling / effect.virtual_inertia;
    Ok(ProxyState {
        proxy_angle: proxy.proxy_angle + dt * velocity,
        proxy_velocity: velocity,
    })
}

/// Clamp a torque demand to `[-max_torque, max_torque]`. A NaN demand maps
/// to zero.
pub fn clamp_torque(torque: f64, max_torque: f64) -> f64 {
    if torque.is_nan() {
        0.0
    } else {
        torque.clamp(-max_torque, max_torque)
    }
}

/// Sum of all effects, clamped to the torque ceiling. `proxies` is indexed
/// like `effects`; missing entries are treated as a proxy at rest at zero.
pub fn compose_and_clamp(effects: &[TorqueEffect], ctx: &RenderContext, proxies: &[ProxyState]) -> f64 {
    let total: f64 = effects
        .iter()
        .enumerate()
        .map(|(i, effect)| {
            let proxy = proxies.get(i).copied().unwrap_or_default();
            effect_torque(effect, ctx, &proxy)
        })
        .sum();
    clamp_torque(total, ctx.max_torque)
}

/// A list of effects together with the proxy state each one owns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EffectStack {
    effects: Vec<TorqueEffect>,
    proxies: Vec<ProxyState>,
}

impl EffectStack {
    pub fn new(effects: Vec<TorqueEffect>, initial_angle: f64) -> Result<Self> {
        for effect in &effects {
            effect.validate()?;
            if let TorqueEffect::MassSpringDamper(m) = effect {
                if m.virtual_inertia.is_nan() || m.virtual_inertia <= 0.0 {
                    return Err(Error::DegenerateMass(m.virtual_inertia));
                }
            }
        }
        let proxies = vec![ProxyState::at_rest(initial_angle); effects.len()];
        Ok(Self { effects, proxies })
    }

    pub fn effects(&self) -> &[TorqueEffect] {
        &self.effects
    }

    pub fn proxies(&self) -> &[ProxyState] {
        &self.proxies
    }

    /// Replace the parameters of one effect while keeping its proxy state.
    pub fn set_effect(&mut self, index: usize, effect: TorqueEffect) -> Result<()> {
        effect.validate()?;
        if let TorqueEffect::MassSpringDamper(m) = effect {
            if m.virtual_inertia.is_nan() || m.virtual_inertia <= 0.0 {
                return Err(Error::DegenerateMass(m.virtual_inertia));
            }
        }
        match self.effects.get_mut(index) {
            Some(slot) => {
                *slot = effect;
                Ok(())
            }
            None => Err(Error::InvalidConfig(format!("no effect at index {index}"))),
        }
    }

    pub fn reset_proxies(&mut self, angle: f64) {
        self.proxies.fill(ProxyState::at_rest(angle));
    }

    pub fn render(&self, ctx: &RenderContext) -> f64 {
        compose_and_clamp(&self.effects, ctx, &self.proxies)
    }

    /// Step every virtual mass in the stack.
    pub fn advance(&mut self, ctx: &RenderContext, dt: f64) -> Result<()> {
        for (effect, proxy) in self.effects.iter().zip(self.proxies.iter_mut()) {
            if let TorqueEffect::MassSpringDamper(m) = effect {
                *proxy = step_proxy(m, *proxy, ctx, dt)?;
            }
        }
        Ok(())
    }
}
