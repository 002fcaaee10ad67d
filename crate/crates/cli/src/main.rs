//! Command-line front end: stimulus generation through a simulation run to
//! benchmarking and artifact inspection. All orchestration is
//! single-threaded; parallelism lives in the engine.
//!
//! Exit codes are a stable contract: 0 success, 1 I/O failure, 2 usage,
//! config or file-format error, 3 numeric fault during simulation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use snn_core::config::{hex, SimConfig};
use snn_core::engine::{self, Simulation};
use snn_core::events;
use snn_core::{Error, Result};

#[derive(Parser)]
#[command(name = "snn", version, about = "Layered spiking-network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a moving-bar event stream, or convert an AEDAT 2.0 recording
    Gen(GenArgs),
    /// Simulate: read config and stimulus, write artifacts, print window summaries
    Run(RunArgs),
    /// Measure step throughput with and without plasticity
    Bench(BenchArgs),
    /// Print the header of an event file or checkpoint
    Inspect(InspectArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Sensor width in pixels
    #[arg(long, default_value_t = 64)]
    width: u16,
    /// Sensor height in pixels
    #[arg(long, default_value_t = 64)]
    height: u16,
    /// Bar width in pixels
    #[arg(long, default_value_t = 8)]
    bar_width: u16,
    /// Bar speed in pixels per second
    #[arg(long, default_value_t = 100.0)]
    speed: f64,
    /// Stream duration in milliseconds
    #[arg(long, value_name = "MS", default_value_t = 2000)]
    duration: u32,
    /// Seed for timestamp jitter
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Uniform per-event timestamp jitter bound in microseconds
    #[arg(long, default_value_t = 0)]
    jitter_us: u32,
    /// Convert this AEDAT 2.0 file instead of synthesizing a bar
    #[arg(long, value_name = "FILE", conflicts_with_all = ["width", "height", "bar_width", "speed", "duration", "seed", "jitter_us"])]
    from_aedat: Option<PathBuf>,
    /// Output event file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; defaults apply to every omitted key
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Steps to execute now (overrides the config's steps)
    #[arg(long)]
    steps: Option<u64>,
    /// Enable or disable plasticity (overrides the config)
    #[arg(long, value_parser = ["on", "off"])]
    train: Option<String>,
    /// Topology seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Event file driving the first layer (overrides the config)
    #[arg(long, value_name = "FILE")]
    stimulus: Option<PathBuf>,
    /// Artifact directory (overrides the config; default "artifacts")
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Resume from a checkpoint instead of starting fresh. The checkpoint
    /// carries its own config; only --steps, --stimulus and --out-dir apply
    #[arg(long, value_name = "FILE", conflicts_with_all = ["config", "train", "seed"])]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML config file; defaults apply to every omitted key
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Timed steps per measurement
    #[arg(long, default_value_t = 200)]
    steps: u64,
    /// Untimed steps before each measurement
    #[arg(long, default_value_t = 50)]
    warmup: u64,
    /// Also time the dense reference implementation
    #[arg(long)]
    compare_oracle: bool,
    /// Append the report as one CSV row (with header when new)
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Event file (.dvse) or checkpoint (.snnc)
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::Format { .. }
                | Error::UnsupportedFormat(_) => 2,
                Error::NumericFault { .. } => 3,
                Error::Io(_) => 1,
            })
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    let config = match path {
        None => SimConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        }
    };
    config.validate()?;
    Ok(config)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let stream = match &args.from_aedat {
        Some(path) => events::import_aedat(path)?,
        None => {
            if !args.speed.is_finite() || args.speed < 0.0 {
                return Err(Error::invalid_argument(format!(
                    "speed must be finite and non-negative, got {}",
                    args.speed
                )));
            }
            events::gen_moving_bar(
                args.width,
                args.height,
                args.bar_width,
                args.speed,
                args.duration,
                args.seed,
                args.jitter_us,
            )?
        }
    };
    if stream.events.is_empty() {
        eprintln!("warning: stream contains zero events");
    }
    events::write_events(&stream, &args.out)?;
    println!(
        "wrote {}: {}x{}, {} events",
        args.out.display(),
        stream.width,
        stream.height,
        stream.events.len()
    );
    Ok(())
}

fn fmt_mean(mean: Option<f64>) -> String {
    match mean {
        Some(v) => format!("{v:.4}"),
        None => "-".into(),
    }
}

fn attach_stimulus(sim: &mut Simulation, path: &Path) -> Result<()> {
    let stream = events::read_events(path)?;
    let frames = events::batch_frames(
        &stream,
        sim.config().engine.window_ms,
        sim.config().topology.layer,
    )?;
    sim.attach_frames(frames)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut sim = match &args.resume {
        Some(checkpoint) => Simulation::load_checkpoint(checkpoint)?,
        None => {
            let mut config = load_config(args.config.as_deref())?;
            if let Some(seed) = args.seed {
                config.topology.seed = seed;
            }
            if let Some(train) = &args.train {
                config.engine.train = train == "on";
            }
            if let Some(stimulus) = &args.stimulus {
                config.io.stimulus = Some(stimulus.display().to_string());
            }
            if let Some(out_dir) = &args.out_dir {
                config.io.out_dir = Some(out_dir.display().to_string());
            }
            Simulation::new(config)?
        }
    };

    let stimulus = match (&args.resume, &args.stimulus) {
        (Some(_), Some(path)) => Some(path.clone()),
        (Some(_), None) => sim.config().io.stimulus.clone().map(PathBuf::from),
        (None, _) => sim.config().io.stimulus.clone().map(PathBuf::from),
    };
    if let Some(path) = stimulus {
        attach_stimulus(&mut sim, &path)?;
    }

    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| sim.config().io.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("artifacts"));
    let steps = args.steps.unwrap_or(sim.config().engine.steps);

    let summary = engine::run(&mut sim, steps, Some(&out_dir))?;
    for window in &summary.windows {
        let spikes: Vec<String> =
            window.spikes_per_layer.iter().map(|s| s.to_string()).collect();
        let means: Vec<String> =
            window.mean_e_exc.iter().map(|&m| fmt_mean(m)).collect();
        println!(
            "window {}  spikes {}  E_exc {}",
            window.index,
            spikes.join("/"),
            means.join("/")
        );
    }
    let totals: Vec<String> =
        summary.total_spikes_per_layer.iter().map(|s| s.to_string()).collect();
    let finals: Vec<String> =
        summary.final_mean_e_exc.iter().map(|&m| fmt_mean(m)).collect();
    println!(
        "run complete: {} steps, spikes {}, final E_exc {}, artifacts in {}",
        summary.steps_run,
        totals.join("/"),
        finals.join("/"),
        out_dir.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let report = engine::benchmark(&config, args.steps, args.warmup, args.compare_oracle)?;
    if report.is_empty() {
        println!("no steps requested; nothing measured");
        return Ok(());
    }
    let spec = config.topology.layer;
    println!(
        "network            {} layers of {}x{}",
        config.topology.num_layers, spec.width, spec.height
    );
    println!("steps timed        {}", report.steps);
    println!("train              {:>12.1} steps/s", report.train_steps_per_s);
    println!("frozen             {:>12.1} steps/s", report.frozen_steps_per_s);
    println!("plasticity ratio   {:>12.2} (frozen/train)", report.plasticity_ratio);
    println!("synapse events     {:>12.3e} /s", report.synapse_events_per_s);
    if let (Some(oracle), Some(ratio)) = (report.oracle_steps_per_s, report.sparse_oracle_ratio) {
        println!("dense reference    {:>12.2} steps/s", oracle);
        println!("sparse speedup     {:>12.1}x", ratio);
    }
    if let Some(csv) = &args.csv {
        let mut row = format!(
            "{},{},{},{},{}",
            report.steps,
            report.train_steps_per_s,
            report.frozen_steps_per_s,
            report.plasticity_ratio,
            report.synapse_events_per_s
        );
        match (report.oracle_steps_per_s, report.sparse_oracle_ratio) {
            (Some(o), Some(r)) => row.push_str(&format!(",{o},{r}\n")),
            _ => row.push_str(",,\n"),
        }
        let header = "steps,train_steps_per_s,frozen_steps_per_s,plasticity_ratio,synapse_events_per_s,oracle_steps_per_s,sparse_oracle_ratio\n";
        let body = match std::fs::read_to_string(csv) {
            Ok(existing) => format!("{existing}{row}"),
            Err(_) => format!("{header}{row}"),
        };
        std::fs::write(csv, body)?;
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let bytes = std::fs::read(&args.path)?;
    if bytes.starts_with(b"DVSE") {
        let stream = events::read_events(&args.path)?;
        let span = match (stream.events.first(), stream.events.last()) {
            (Some(first), Some(last)) => format!(", t {}..{} us", first.t, last.t),
            _ => String::new(),
        };
        println!(
            "DVSE v1, {}x{}, {} events{span}",
            stream.width,
            stream.height,
            stream.events.len()
        );
    } else if bytes.starts_with(b"SNNC") {
        let sim = Simulation::load_checkpoint(&args.path)?;
        let config = sim.config();
        let spec = config.topology.layer;
        println!(
            "SNNC v1, step={}, layers={} of {}x{}, synapses={}, config digest {}",
            sim.step_count(),
            config.topology.num_layers,
            spec.width,
            spec.height,
            sim.network().synapses.total_synapses(),
            hex(&config.digest())
        );
    } else {
        return Err(Error::UnsupportedFormat(format!(
            "{}: not an event file or checkpoint",
            args.path.display()
        )));
    }
    Ok(())
}
