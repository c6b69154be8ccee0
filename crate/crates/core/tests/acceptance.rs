//! Acceptance suite. Every criterion runs headless and prints one
//! `[PASS]` / `[FAIL]` line; the test fails if any criterion fails.
//!
//! Run with `cargo test -p hapknob-core --test acceptance -- --nocapture`
//! to see the report.

use std::time::{Duration, Instant};

use hapknob::effects::{
    compose_and_clamp, effect_torque, Detent, DetentKind, HardWall, LinearDamping, MassSpringDamper, ProxyState,
    RenderContext, Texture, TorqueEffect,
};
use hapknob::plant::{HandInput, PlantState};
use hapknob::session::analyze::{analyze, AnalysisOptions};
use hapknob::session::script::{HandScript, Keyframe};
use hapknob::session::trace::{read_trace, record_trace, run_script};
use hapknob::session::{Mode, Sensing, Session, SessionConfig, Snapshot};
use hapknob::shape::{fin_displacements, preset_targets, PulleyState, ShapePreset, FIN_TRAVEL_MM};
use hapknob::transduction::{
    estimate_velocity, knob_resolution, Direction, DrivetrainConfig, VelocityFilterState,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};

const MAX_TORQUE: f64 = 25.0;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn criterion(name: &'static str, check: impl FnOnce() -> Result<String, String>) -> Outcome {
    let started = Instant::now();
    let (passed, detail) = match check() {
        Ok(detail) => (true, detail),
        Err(detail) => (false, detail),
    };
    let detail = format!("{detail} ({:.2} s)", started.elapsed().as_secs_f64());
    println!("[{}] {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    Outcome { name, passed, detail }
}

fn ensure(condition: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(message())
    }
}

/// SplitMix64, for reproducible bulk sampling.
struct Sampler(u64);

impl Sampler {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let unit = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * unit
    }
}

fn session_with(config: SessionConfig) -> Session {
    Session::new(config).expect("valid session config")
}

fn run_collect(session: &mut Session, script: &HandScript, ticks: u64) -> Vec<Snapshot> {
    let mut out = Vec::with_capacity(ticks as usize);
    run_script(session, script, ticks, |s| {
        out.push(s.clone());
        Ok(())
    })
    .expect("session runs");
    out
}

fn grip(t_s: f64, target_deg: f64, grip_stiffness: f64, grip_damping: f64) -> Keyframe {
    Keyframe {
        t_s,
        hand: HandInput::PositionGrip {
            target_deg,
            grip_stiffness,
            grip_damping,
        },
    }
}

fn push(t_s: f64, torque_ncm: f64) -> Keyframe {
    Keyframe {
        t_s,
        hand: HandInput::DirectTorque { torque_ncm },
    }
}

/// Slow grip sweep over one revolution, starting and ending between
/// detents of an 18° lattice.
fn detent_sweep_script() -> HandScript {
    HandScript::new(vec![
        grip(0.0, 0.0, 5.0, 0.02),
        grip(0.3, -9.0, 5.0, 0.02),
        grip(0.5, -9.0, 5.0, 0.02),
        grip(4.5, 351.0, 5.0, 0.02),
    ])
    .unwrap()
}

fn resolution() -> Result<String, String> {
    let res = knob_resolution(&DrivetrainConfig::default()).map_err(|e| e.to_string())?;
    ensure((res - 0.6186).abs() <= 5e-4, || format!("resolution {res}"))?;
    ensure((res - 360.0 / 582.0).abs() < 1e-12, || format!("resolution {res} != 360/582"))?;
    Ok(format!("{res:.6} deg/count"))
}

fn detent_count() -> Result<String, String> {
    let started = Instant::now();
    let mut session = session_with(SessionConfig::default());
    let trace = run_collect(&mut session, &detent_sweep_script(), 5000);
    // Go through the CSV form, as the analyze command does.
    let mut bytes = Vec::new();
    {
        let mut writer = hapknob::session::trace::TraceWriter::new(&mut bytes).unwrap();
        for s in &trace {
            writer.write(s).unwrap();
        }
        writer.finish().unwrap();
    }
    let reread = read_trace(bytes.as_slice()).map_err(|e| e.to_string())?;
    let report = analyze(&reread, &AnalysisOptions::default());
    let elapsed = started.elapsed();
    ensure(report.detent_count == 20, || {
        format!("{} stable equilibria at {:?}", report.detent_count, report.detent_angles_deg)
    })?;
    let spacing_ok = report
        .detent_angles_deg
        .windows(2)
        .all(|w| ((w[1] - w[0]) - 18.0).abs() < 2.0);
    ensure(spacing_ok, || format!("uneven spacing {:?}", report.detent_angles_deg))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("20 stable equilibria, mean spacing {:.2} deg", {
        let a = &report.detent_angles_deg;
        (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64
    }))
}

fn wall(angle: f64, side: Direction, stiffness: f64) -> TorqueEffect {
    TorqueEffect::HardWall(HardWall {
        wall_angle: angle,
        blocked_side: side,
        stiffness,
    })
}

fn torque_ceiling() -> Result<String, String> {
    // Three walls: 10 N·cm/deg each, so 3° of penetration demands 90 N·cm.
    let triple = vec![
        wall(0.0, Direction::Clockwise, 10.0),
        wall(0.0, Direction::Clockwise, 10.0),
        wall(0.0, Direction::Clockwise, 10.0),
    ];
    let demand: f64 = triple
        .iter()
        .map(|e| effect_torque(e, &RenderContext::new(3.0, 0.0), &ProxyState::default()))
        .sum();
    ensure((demand + 90.0).abs() < 1e-12, || format!("demand {demand}"))?;
    ensure(compose_and_clamp(&triple, &RenderContext::new(3.0, 0.0), &[]) == -MAX_TORQUE, || {
        "triple wall not clamped".into()
    })?;

    let effect = prop_oneof![
        (-400.0f64..400.0, any::<bool>(), 0.0f64..200.0).prop_map(|(a, cw, k)| wall(
            a,
            if cw { Direction::Clockwise } else { Direction::Counterclockwise },
            k
        )),
        (0.5f64..90.0, 0.0f64..100.0, any::<bool>(), -90.0f64..90.0).prop_map(|(spacing, amplitude, bump, phase)| {
            TorqueEffect::Detent(Detent {
                spacing,
                amplitude,
                kind: if bump { DetentKind::Bump } else { DetentKind::Valley },
                phase,
            })
        }),
        (0.0f64..10.0).prop_map(|c| TorqueEffect::LinearDamping(LinearDamping { coefficient: c })),
        (0.5f64..90.0, 0.0f64..10.0).prop_map(|(p, c)| TorqueEffect::Texture(Texture {
            spatial_period: p,
            peak_coefficient: c
        })),
        (1e-4f64..1.0, 0.0f64..100.0, 0.0f64..10.0).prop_map(|(m, k, b)| {
            TorqueEffect::MassSpringDamper(MassSpringDamper {
                virtual_inertia: m,
                coupling_stiffness: k,
                coupling_damping: b,
            })
        }),
    ];
    let strategy = (
        proptest::collection::vec(effect, 1..8),
        -1.0e4f64..1.0e4,
        -1.0e5f64..1.0e5,
        proptest::collection::vec((-1.0e4f64..1.0e4, -1.0e5f64..1.0e5), 8),
    );
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 10_000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    runner
        .run(&strategy, |(effects, theta, omega, proxies)| {
            let proxies: Vec<ProxyState> = proxies
                .into_iter()
                .map(|(a, v)| ProxyState {
                    proxy_angle: a,
                    proxy_velocity: v,
                })
                .collect();
            let ctx = RenderContext::new(theta, omega);
            let torque = compose_and_clamp(&effects, &ctx, &proxies);
            prop_assert!(torque.abs() <= MAX_TORQUE);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // The whole pipeline under an adversarial mode and a hand that shoves
    // the knob through the walls.
    let stacked = Mode {
        id: 2,
        name: "triple_wall".into(),
        preset: ShapePreset::FourFin,
        effects: vec![
            wall(20.0, Direction::Clockwise, 10.0),
            wall(20.0, Direction::Clockwise, 10.0),
            wall(20.0, Direction::Clockwise, 10.0),
            wall(-20.0, Direction::Counterclockwise, 10.0),
            wall(-20.0, Direction::Counterclockwise, 10.0),
            wall(-20.0, Direction::Counterclockwise, 10.0),
        ],
    };
    let mut session = session_with(SessionConfig {
        modes: vec![stacked],
        initial_mode: 2,
        ..Default::default()
    });
    let mut sampler = Sampler(0xC0FFEE);
    let mut worst: f64 = 0.0;
    let mut saturated = 0u32;
    for _ in 0..20_000 {
        let hand = HandInput::DirectTorque {
            torque_ncm: sampler.uniform(-60.0, 60.0),
        };
        let s = session.tick(&hand).map_err(|e| e.to_string())?;
        worst = worst.max(s.torque_cmd_ncm.abs());
        if s.torque_cmd_ncm.abs() == MAX_TORQUE {
            saturated += 1;
        }
        ensure(s.torque_cmd_ncm.abs() <= MAX_TORQUE && (0.0..=1.0).contains(&s.duty), || {
            format!("snapshot violates clamp: {s:?}")
        })?;
    }
    Ok(format!(
        "10000 random stacks + 20000 ticks, max |tau| = {worst} N·cm ({saturated} saturated ticks)"
    ))
}

fn shape_suite() -> Result<String, String> {
    let vectors: Vec<[f64; 6]> = ShapePreset::ALL
        .iter()
        .map(|&p| fin_displacements(&preset_targets(p)).displacements_mm)
        .collect();
    ensure(vectors.len() == 7, || "expected 7 presets".into())?;
    for i in 0..7 {
        for j in i + 1..7 {
            ensure(vectors[i] != vectors[j], || format!("presets {i} and {j} coincide"))?;
        }
    }
    let mut checked = 0u32;
    for ai in 0..=180 {
        for bi in 0..=260 {
            let a = ai as f64 * 0.5;
            let b = bi as f64 * 0.5;
            let d = fin_displacements(&PulleyState::new(a, b).unwrap()).displacements_mm;
            ensure(d.iter().all(|x| (0.0..=FIN_TRAVEL_MM).contains(x)), || format!("range at ({a},{b})"))?;
            if b <= 70.0 {
                ensure(d[3] == 0.0, || format!("fin 3 moved at b = {b}"))?;
            }
            if (60.0..70.0).contains(&b) {
                let ahead = fin_displacements(&PulleyState::new(a, b + 0.5).unwrap()).displacements_mm;
                ensure(d == ahead && d[0] == 8.0, || format!("dwell not flat at b = {b}"))?;
            }
            checked += 1;
        }
    }
    Ok(format!("7 distinct presets, {checked} pulley states checked"))
}

fn kinetic(session: &Session, omega: f64) -> f64 {
    session.plant_params().kinetic_energy(omega)
}

fn passivity() -> Result<String, String> {
    let mut sampler = Sampler(42);
    let damping = TorqueEffect::LinearDamping(LinearDamping { coefficient: 0.02 });
    let texture = TorqueEffect::Texture(Texture {
        spatial_period: 12.0,
        peak_coefficient: 0.04,
    });
    for _ in 0..1_000_000 {
        let ctx = RenderContext::new(sampler.uniform(-1.0e4, 1.0e4), sampler.uniform(-2.0e3, 2.0e3));
        for effect in [&damping, &texture] {
            let power = effect_torque(effect, &ctx, &ProxyState::default()) * ctx.omega;
            ensure(power <= 0.0, || format!("{effect:?} generates power at {ctx:?}"))?;
        }
    }

    // Spin the knob in the damping and texture modes and let it coast down
    // with the hand off.
    let mut worst_ratio: f64 = 0.0;
    let mut worst_case = String::new();
    for mode in [4u8, 5] {
        for spin in [30.0, 100.0, 300.0, -100.0] {
            let mut session = session_with(SessionConfig {
                initial_mode: mode,
                ..Default::default()
            });
            session.set_plant_state(PlantState {
                omega: spin,
                ..Default::default()
            });
            let scale = kinetic(&session, spin);
            let mut energy = scale;
            for _ in 0..3000 {
                let s = session.tick(&HandInput::released()).map_err(|e| e.to_string())?;
                let next = kinetic(&session, s.omega_dps);
                let ratio = (next - energy) / scale;
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_case = format!("mode {mode}, spin {spin} deg/s, t = {} s", s.t);
                }
                energy = next;
            }
        }
    }
    ensure(worst_ratio <= 1e-6, || {
        format!(
            "pointwise passive over 1e6 states, but session kinetic energy rose by {worst_ratio:.3e} of its scale ({worst_case})"
        )
    })?;
    Ok(format!("1e6 states passive; worst session rise {worst_ratio:.3e} of scale"))
}

/// Run a script at two loop rates with ideal sensing and compare the
/// knob angle on the coarse grid.
fn trajectory_gap(mode: u8, script: &HandScript, seconds: f64) -> Result<f64, String> {
    let run = |rate: f64| -> Result<Vec<f64>, String> {
        let mut session = Session::new(SessionConfig {
            loop_rate_hz: rate,
            snapshot_rate_hz: 60.0,
            sensing: Sensing::Ideal,
            initial_mode: mode,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let ticks = (seconds * rate).round() as u64;
        let stride = (rate / 1000.0).round() as u64;
        let mut angles = Vec::with_capacity(5000);
        run_script(&mut session, script, ticks, |s| {
            if session_tick_index(s.t, rate).is_multiple_of(stride) {
                angles.push(s.theta_deg);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        Ok(angles)
    };
    let coarse = run(1000.0)?;
    let fine = run(100_000.0)?;
    ensure(coarse.len() == fine.len(), || format!("{} vs {} samples", coarse.len(), fine.len()))?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn session_tick_index(t: f64, rate: f64) -> u64 {
    (t * rate).round() as u64
}

fn oracle_convergence() -> Result<String, String> {
    let started = Instant::now();
    // Mass-spring-damper mode, hand drags the knob to 30° and holds.
    let msd_script = HandScript::new(vec![grip(0.0, 0.0, 0.5, 0.01), grip(1.0, 30.0, 0.5, 0.01)]).unwrap();
    let msd_gap = trajectory_gap(6, &msd_script, 5.0)?;
    // Detent spring: push the knob up its well, then let it ring.
    let spring_script = HandScript::new(vec![push(0.0, 3.0), push(0.2, 3.0), push(0.2, 0.0)]).unwrap();
    let spring_gap = trajectory_gap(1, &spring_script, 5.0)?;
    let elapsed = started.elapsed();
    ensure(msd_gap <= 0.5 && spring_gap <= 0.5, || {
        format!("max |dtheta| msd {msd_gap:.4} deg, spring {spring_gap:.4} deg")
    })?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max |dtheta| vs 10 us reference: mass-spring-damper {msd_gap:.4} deg, spring {spring_gap:.4} deg"
    ))
}

fn determinism() -> Result<String, String> {
    let script = HandScript::new(vec![
        grip(0.0, 0.0, 2.0, 0.01),
        grip(1.0, 200.0, 2.0, 0.01),
        push(1.5, -4.0),
        push(2.0, 1.0),
    ])
    .unwrap();
    let mut sizes = Vec::new();
    for mode in 1..=6u8 {
        let record = || {
            let mut session = session_with(SessionConfig {
                initial_mode: mode,
                drivetrain: DrivetrainConfig {
                    backlash_width: if mode == 2 { 2.0 } else { 0.0 },
                    ..Default::default()
                },
                ..Default::default()
            });
            record_trace(&mut session, &script, 2500, Vec::new()).unwrap()
        };
        let (a, b) = (record(), record());
        ensure(a == b, || format!("mode {mode}: traces differ"))?;
        sizes.push(a.len());
    }
    Ok(format!("6 modes, byte-identical traces ({} bytes total)", sizes.iter().sum::<usize>()))
}

fn velocity_estimator() -> Result<String, String> {
    let config = DrivetrainConfig::default();
    let dt = 1e-3;
    let mut worst: f64 = 0.0;
    for rate in [1i64, 3, -2, 10] {
        let mut state = VelocityFilterState::default();
        let ticks = (10.0 * state.time_constant() / dt).ceil() as i64;
        let mut v = 0.0;
        for k in 1..=ticks {
            let (next, out) = estimate_velocity(state, k * rate, dt, &config).map_err(|e| e.to_string())?;
            state = next;
            v = out;
        }
        let truth = rate as f64 * config.degrees_per_count() / dt;
        worst = worst.max(((v - truth) / truth).abs());
    }
    ensure(worst < 0.01, || format!("relative error {worst:.3e} after 10 time constants"))?;
    // DC gain: the step response settles exactly on the input.
    let mut state = VelocityFilterState::default();
    let mut v = 0.0;
    for k in 1..=2000 {
        let (next, out) = estimate_velocity(state, k, dt, &config).map_err(|e| e.to_string())?;
        state = next;
        v = out;
    }
    let truth = config.degrees_per_count() / dt;
    ensure(((v - truth) / truth).abs() < 1e-12, || format!("DC gain {}", v / truth))?;
    Ok(format!("ramp error {worst:.2e} after 10 tau, DC gain {:.12}", v / truth))
}

fn wall_push(backlash_width: f64) -> Vec<Snapshot> {
    let mut session = session_with(SessionConfig {
        initial_mode: 2,
        drivetrain: DrivetrainConfig {
            backlash_width,
            ..Default::default()
        },
        ..Default::default()
    });
    let script = HandScript::new(vec![push(0.0, 5.0)]).unwrap();
    run_collect(&mut session, &script, 3000)
}

fn backlash_impairment() -> Result<String, String> {
    let opts = AnalysisOptions::default();
    let with = analyze(&wall_push(2.0), &opts).oscillation;
    let without = analyze(&wall_push(0.0), &opts).oscillation;
    ensure(with.sustained, || format!("no limit cycle with 2 deg backlash: {with:?}"))?;
    ensure(!without.sustained, || format!("oscillation without backlash: {without:?}"))?;
    Ok(format!(
        "2 deg: {:.2} deg p-p at {:.1} Hz; 0 deg: {:.3} deg p-p",
        with.peak_to_peak_deg, with.frequency_hz, without.peak_to_peak_deg
    ))
}

#[test]
fn acceptance_suite() {
    let outcomes = [
        criterion("resolution reproduction", resolution),
        criterion("detent count reproduction", detent_count),
        criterion("torque ceiling", torque_ceiling),
        criterion("shape suite", shape_suite),
        criterion("passivity", passivity),
        criterion("oracle convergence", oracle_convergence),
        criterion("determinism", determinism),
        criterion("velocity estimator", velocity_estimator),
        criterion("backlash impairment", backlash_impairment),
    ];
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{}: {}", o.name, o.detail))
        .collect();
    println!(
        "acceptance: {}/{} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
