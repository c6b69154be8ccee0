use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hapknob::effects::TorqueEffect;
use hapknob::plant::HandInput;
use hapknob::session::analyze::{analyze, AnalysisOptions, AnalysisReport};
use hapknob::session::protocol::ServerMessage;
use hapknob::session::script::{HandScript, Keyframe};
use hapknob::session::server::Server;
use hapknob::session::trace::{read_trace, record_trace};
use hapknob::session::{Session, SessionConfig};

#[derive(Parser)]
#[command(name = "hapknob", version, about = "Deterministic haptic knob simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the live simulation and serve the JSON protocol over TCP.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Simulate a scripted session and write a full-rate CSV trace.
    Run {
        #[arg(long)]
        mode: u8,
        #[arg(long)]
        seconds: f64,
        /// Hand script (JSON keyframes); the hand is off without one.
        #[arg(long)]
        hand: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a recorded trace as snapshot messages, one JSON object per line.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run one trace per parameter value and summarize them.
    Sweep {
        #[arg(long, value_enum)]
        effect: SweptEffect,
        /// Effect field to vary, `stiffness` for detents, or `backlash_width`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        seconds: f64,
        /// Knob-side gear play for every run, degrees.
        #[arg(long)]
        backlash: Option<f64>,
        /// Hand script; defaults to a steady 5 N·cm push.
        #[arg(long)]
        hand: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Report detents, peak torque, energy balance and oscillation of a trace.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweptEffect {
    Detent,
    Wall,
    Damping,
    Texture,
    SpringMass,
}

impl SweptEffect {
    /// The default mode that carries this effect.
    fn mode(self) -> u8 {
        match self {
            SweptEffect::Detent => 1,
            SweptEffect::Wall => 2,
            SweptEffect::Damping => 4,
            SweptEffect::Texture => 5,
            SweptEffect::SpringMass => 6,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SessionConfig> {
    let config = match path {
        Some(path) => SessionConfig::from_json_file(path).with_context(|| format!("reading config {}", path.display()))?,
        None => SessionConfig::default(),
    };
    config.validate().context("invalid config")?;
    Ok(config)
}

fn load_script(path: Option<&Path>) -> Result<Option<HandScript>> {
    path.map(|p| HandScript::from_json_file(p).with_context(|| format!("reading hand script {}", p.display())))
        .transpose()
}

fn tick_count(seconds: f64, loop_rate_hz: f64) -> Result<u64> {
    if !(seconds >= 0.0 && seconds.is_finite()) {
        bail!("--seconds must be a non-negative number, got {seconds}");
    }
    Ok((seconds * loop_rate_hz).round() as u64)
}

fn write_trace(config: SessionConfig, script: &HandScript, seconds: f64, out: &Path) -> Result<u64> {
    let ticks = tick_count(seconds, config.loop_rate_hz)?;
    let mut session = Session::new(config)?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    record_trace(&mut session, script, ticks, BufWriter::new(file))?
        .flush()
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(ticks)
}

fn run(mode: u8, seconds: f64, hand: Option<&Path>, config: Option<&Path>, out: &Path) -> Result<()> {
    let config = SessionConfig {
        initial_mode: mode,
        ..load_config(config)?
    };
    config.validate()?;
    let script = load_script(hand)?.unwrap_or_else(HandScript::released);
    let ticks = write_trace(config, &script, seconds, out)?;
    eprintln!("wrote {ticks} rows to {}", out.display());
    Ok(())
}

fn replay(trace: &Path) -> Result<()> {
    let file = File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let snapshots = read_trace(BufReader::new(file)).with_context(|| format!("reading {}", trace.display()))?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for s in snapshots {
        writeln!(out, "{}", ServerMessage::Snapshot(s).to_line())?;
    }
    out.flush()?;
    Ok(())
}

fn set_param(effect: &mut TorqueEffect, param: &str, value: f64) -> Result<()> {
    let slot = match (&mut *effect, param) {
        (TorqueEffect::Detent(d), "stiffness") => {
            // Peak slope of the sinusoid is 2π·amplitude/spacing.
            d.amplitude = value * d.spacing / (2.0 * std::f64::consts::PI);
            return Ok(());
        }
        (TorqueEffect::Detent(d), "amplitude") => &mut d.amplitude,
        (TorqueEffect::Detent(d), "spacing") => &mut d.spacing,
        (TorqueEffect::Detent(d), "phase") => &mut d.phase,
        (TorqueEffect::HardWall(w), "stiffness") => &mut w.stiffness,
        (TorqueEffect::HardWall(w), "wall_angle") => {
            // Walls keep their side of zero, so a ±θ pair stays symmetric.
            w.wall_angle = value.abs().copysign(w.wall_angle);
            return Ok(());
        }
        (TorqueEffect::LinearDamping(d), "coefficient") => &mut d.coefficient,
        (TorqueEffect::Texture(t), "spatial_period") => &mut t.spatial_period,
        (TorqueEffect::Texture(t), "peak_coefficient") => &mut t.peak_coefficient,
        (TorqueEffect::MassSpringDamper(m), "virtual_inertia") => &mut m.virtual_inertia,
        (TorqueEffect::MassSpringDamper(m), "coupling_stiffness") => &mut m.coupling_stiffness,
        (TorqueEffect::MassSpringDamper(m), "coupling_damping") => &mut m.coupling_damping,
        (effect, _) => bail!("`{param}` is not a parameter of {}", effect.kind_name()),
    };
    *slot = value;
    Ok(())
}

fn sweep_values(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    match steps {
        0 => bail!("--steps must be at least 1"),
        1 => Ok(vec![from]),
        n => Ok((0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect()),
    }
}

fn configure_run(base: &SessionConfig, effect: SweptEffect, param: &str, value: f64) -> Result<SessionConfig> {
    let mut config = base.clone();
    config.initial_mode = effect.mode();
    if param == "backlash_width" {
        config.drivetrain.backlash_width = value;
    } else {
        let mut mode = config
            .mode_table()?
            .into_iter()
            .find(|m| m.id == effect.mode())
            .context("mode table is missing the swept mode")?;
        // Every effect in the mode takes the value, e.g. both walls of a pair.
        for slot in mode.effects.iter_mut() {
            set_param(slot, param, value)?;
        }
        config.modes.retain(|m| m.id != mode.id);
        config.modes.push(mode);
    }
    config.validate().with_context(|| format!("{param} = {value}"))?;
    Ok(config)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    effect: SweptEffect,
    param: &str,
    from: f64,
    to: f64,
    steps: usize,
    out: &Path,
    seconds: f64,
    backlash: Option<f64>,
    hand: Option<&Path>,
    config: Option<&Path>,
) -> Result<()> {
    let mut base = load_config(config)?;
    if let Some(width) = backlash {
        base.drivetrain.backlash_width = width;
    }
    let script = match load_script(hand)? {
        Some(script) => script,
        None => HandScript::new(vec![Keyframe {
            t_s: 0.0,
            hand: HandInput::DirectTorque { torque_ncm: 5.0 },
        }])?,
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut summary = csv::Writer::from_path(out.join("summary.csv"))?;
    summary.write_record([
        "run",
        "file",
        param,
        "detent_count",
        "max_abs_torque_ncm",
        "dissipated_mj",
        "max_tick_increase_mj",
        "oscillation",
        "peak_to_peak_deg",
        "frequency_hz",
    ])?;
    for (run, value) in sweep_values(from, to, steps)?.into_iter().enumerate() {
        let config = configure_run(&base, effect, param, value)?;
        let opts = AnalysisOptions::new(&config.drivetrain, &config.plant);
        let name = format!("run_{run:03}.csv");
        let path = out.join(&name);
        write_trace(config, &script, seconds, &path)?;
        let report = analyze(&read_trace(BufReader::new(File::open(&path)?))?, &opts);
        summary.write_record([
            run.to_string(),
            name,
            value.to_string(),
            report.detent_count.to_string(),
            report.max_abs_torque_ncm.to_string(),
            report.energy.dissipated_mj.to_string(),
            report.energy.max_tick_increase_mj.to_string(),
            report.oscillation.sustained.to_string(),
            report.oscillation.peak_to_peak_deg.to_string(),
            report.oscillation.frequency_hz.to_string(),
        ])?;
    }
    summary.flush()?;
    eprintln!("wrote {steps} runs to {}", out.display());
    Ok(())
}

fn print_report(report: &AnalysisReport) {
    let e = &report.energy;
    let o = &report.oscillation;
    println!("rows: {} ({:.3} s)", report.rows, report.duration_s);
    println!("detent count: {}", report.detent_count);
    if !report.detent_angles_deg.is_empty() {
        let angles: Vec<String> = report.detent_angles_deg.iter().map(|a| format!("{a:.2}")).collect();
        println!("detent angles (deg): {}", angles.join(" "));
    }
    println!("max |torque|: {} N·cm", report.max_abs_torque_ncm);
    println!(
        "energy (mJ): kinetic {:.6} -> {:.6}, motor work {:.6}, hand work {:.6}, dissipated {:.6}, max tick rise {:.3e}",
        e.initial_kinetic_mj, e.final_kinetic_mj, e.motor_work_mj, e.hand_work_mj, e.dissipated_mj, e.max_tick_increase_mj
    );
    println!(
        "oscillation: {} ({:.3} deg p-p, {} reversals in the last {:.2} s, {:.1} Hz)",
        if o.sustained { "sustained" } else { "none" },
        o.peak_to_peak_deg,
        o.velocity_reversals,
        o.window_s,
        o.frequency_hz
    );
}

fn analyze_trace(trace: &Path, config: Option<&Path>, json: bool) -> Result<()> {
    let config = load_config(config)?;
    let file = File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let snapshots = read_trace(BufReader::new(file)).with_context(|| format!("reading {}", trace.display()))?;
    let report = analyze(&snapshots, &AnalysisOptions::new(&config.drivetrain, &config.plant));
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_report(&report);
    }
    Ok(())
}

fn serve(host: &str, port: u16, config: Option<&Path>) -> Result<()> {
    let server = Server::bind((host, port), load_config(config)?)?;
    eprintln!("listening on {}", server.local_addr()?);
    server.run()?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Serve { port, host, config } => serve(&host, port, config.as_deref()),
        Command::Run {
            mode,
            seconds,
            hand,
            config,
            out,
        } => run(mode, seconds, hand.as_deref(), config.as_deref(), &out),
        Command::Replay { trace } => replay(&trace),
        Command::Sweep {
            effect,
            param,
            from,
            to,
            steps,
            out,
            seconds,
            backlash,
            hand,
            config,
        } => sweep(
            effect,
            &param,
            from,
            to,
            steps,
            &out,
            seconds,
            backlash,
            hand.as_deref(),
            config.as_deref(),
        ),
        Command::Analyze { trace, config, json } => analyze_trace(&trace, config.as_deref(), json),
    }
}
