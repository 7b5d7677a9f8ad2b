//! Command-line entry points: `run` (odometry over event files), `eval`
//! (relative pose error between trajectories), and `synth` (ground-truthed
//! synthetic stereo event streams).
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tsvo_core::eval::{associate, rpe};
use tsvo_core::io;
use tsvo_core::pipeline::{self, PipelineConfig};
use tsvo_core::synth::{self, Scenario, ScenarioOptions};

#[derive(Parser)]
#[command(
    name = "tsvo",
    about = "Stereo event-camera visual odometry over time surfaces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a camera trajectory from two event streams.
    Run(RunArgs),
    /// Compare an estimated trajectory against a reference.
    Eval(EvalArgs),
    /// Generate a synthetic stereo event dataset with ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Left-camera event file (binary EVT1 or CSV).
    #[arg(long)]
    left: PathBuf,
    /// Right-camera event file.
    #[arg(long)]
    right: PathBuf,
    /// Stereo calibration file.
    #[arg(long)]
    calib: PathBuf,
    /// Output trajectory file.
    #[arg(long)]
    out: PathBuf,
    /// Left-camera events per pose estimate.
    #[arg(short = 'N', long = "events-per-estimate", default_value_t = 10_000)]
    events_per_estimate: u32,
    /// Maximum seconds between pose estimates.
    #[arg(long, default_value_t = 1.0)]
    max_interval: f64,
    /// Time-surface decay constant, milliseconds.
    #[arg(long, default_value_t = 30.0)]
    delta: f64,
    /// Refractory interval of the reference-timestamp rule, milliseconds.
    #[arg(long, default_value_t = 50.0)]
    kappa: f64,
    /// Minimum normalized ZNCC score for a match link.
    #[arg(long, default_value_t = 0.8)]
    zncc_min: f64,
    /// RANSAC seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write one PGM per camera per estimate into this directory.
    #[arg(long, value_name = "DIR")]
    dump_surfaces: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated trajectory file.
    #[arg(long)]
    est: PathBuf,
    /// Reference trajectory file.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Comma-separated sliding-window lengths in meters.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 5.0, 10.0])]
    windows: Vec<f64>,
    /// Also write the report as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario name: corridor (MVSEC-class rig) or street (DSEC-class rig).
    #[arg(long, default_value = "corridor")]
    scenario: String,
    /// Camera speed, meters per second.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Travel distance, meters.
    #[arg(long, default_value_t = 10.0)]
    distance: f64,
    /// Half-width of uniform per-event timestamp jitter, microseconds.
    #[arg(long, default_value_t = 0)]
    jitter_us: u64,
    /// Spurious events per pixel per second.
    #[arg(long, default_value_t = 0.0)]
    spurious_rate: f64,
    /// Events emitted per edge crossing (alternating polarity).
    #[arg(long, default_value_t = 2)]
    events_per_crossing: u32,
    /// Camera yaw relative to the travel direction, radians.
    #[arg(long, default_value_t = 0.6)]
    yaw: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_left: PathBuf,
    #[arg(long)]
    out_right: PathBuf,
    /// Ground-truth trajectory output.
    #[arg(long)]
    out_gt: PathBuf,
    /// Calibration of the synthetic rig.
    #[arg(long)]
    out_calib: Option<PathBuf>,
    /// Junction-track correspondence sidecar (CSV).
    #[arg(long)]
    out_tracks: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes; everything else is a
            // usage error.
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_events(path: &Path, rig_dims: (u16, u16), label: &str) -> Result<Vec<tsvo_core::Event>> {
    let file = io::read_events(path).with_context(|| format!("reading {label} events"))?;
    if let Some(dims) = file.dims {
        if dims != rig_dims {
            bail!(
                "{label} event file is {}x{} but the calibration says {}x{}",
                dims.0,
                dims.1,
                rig_dims.0,
                rig_dims.1
            );
        }
    }
    if file.dropped_out_of_bounds > 0 {
        eprintln!(
            "warning: dropped {} out-of-bounds {label} events",
            file.dropped_out_of_bounds
        );
    }
    Ok(file.events)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let rig = io::read_calibration(&args.calib).context("reading calibration")?;
    let dims = (rig.left.width, rig.left.height);
    let left = load_events(&args.left, dims, "left")?;
    let right = load_events(&args.right, dims, "right")?;
    eprintln!("loaded {} left / {} right events", left.len(), right.len());

    let config = PipelineConfig {
        events_per_estimate: args.events_per_estimate,
        max_interval_us: (args.max_interval * 1e6).round() as u64,
        delta_us: (args.delta * 1e3).round() as u64,
        kappa_us: (args.kappa * 1e3).round() as u64,
        zncc_min: args.zncc_min,
        seed: args.seed,
        ..PipelineConfig::default()
    };

    if let Some(dir) = &args.dump_surfaces {
        std::fs::create_dir_all(dir).context("creating dump directory")?;
    }
    let dump_dir = args.dump_surfaces.clone();
    let mut dump_error: Option<anyhow::Error> = None;
    let mut observer = |report: &pipeline::SliceReport<'_>| {
        eprintln!(
            "slice {:>4} at {:>12.6}s: {:>4} matches, {:>4}/{:<4} features, {:?}",
            report.slice_index,
            report.stamp_us as f64 / 1e6,
            report.quads.len(),
            report.features_left.len(),
            report.features_right.len(),
            report.pose.quality,
        );
        if let Some(dir) = &dump_dir {
            for (name, surface) in [
                ("left", report.surface_left),
                ("right", report.surface_right),
            ] {
                let path = dir.join(format!("{name}_{:05}.pgm", report.slice_index));
                if let Err(e) = io::write_pgm(&path, surface) {
                    dump_error.get_or_insert(anyhow::Error::new(e).context("dumping surfaces"));
                }
            }
        }
    };
    let pipeline = pipeline::run(config, &rig, &left, &right, &mut observer)
        .context("running the odometry pipeline")?;
    if let Some(err) = dump_error {
        return Err(err);
    }

    let counters = pipeline.counters();
    eprintln!(
        "estimates: {} ({} failed, {} stalled), dropped events: {}",
        counters.estimates,
        counters.failed_estimates,
        counters.stall_estimates,
        counters.dropped_events
    );
    io::write_trajectory(&args.out, pipeline.trajectory()).context("writing trajectory")?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let est = io::read_trajectory(&args.est).context("reading estimated trajectory")?;
    let reference = io::read_trajectory(&args.reference).context("reading reference")?;
    let (pairs, dropped) = associate(&est, &reference).context("associating trajectories")?;
    if dropped > 0 {
        eprintln!("warning: {dropped} estimate stamps outside the reference range");
    }
    let report = rpe(&pairs, &args.windows).context("computing relative pose error")?;
    print!("{}", report.to_text());
    if let Some(csv) = &args.csv {
        std::fs::write(csv, report.to_csv()).context("writing CSV report")?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let opts = ScenarioOptions {
        speed_mps: args.speed,
        distance_m: args.distance,
        jitter_us: args.jitter_us,
        spurious_rate: args.spurious_rate,
        events_per_edge_crossing: args.events_per_crossing,
        yaw_rad: args.yaw,
    };
    let scenario: Scenario = match args.scenario.as_str() {
        "corridor" => synth::corridor_scenario(&opts),
        "street" => synth::street_scenario(&opts),
        "static" => synth::static_scenario(args.distance / args.speed, args.jitter_us, args.spurious_rate),
        other => bail!("unknown scenario {other:?} (expected corridor, street, or static)"),
    };
    let out = synth::generate(&scenario, args.seed).context("generating events")?;
    eprintln!(
        "generated {} left / {} right events over {:.3}s",
        out.left.len(),
        out.right.len(),
        scenario.duration_us() as f64 / 1e6
    );
    let dims = (scenario.rig.left.width, scenario.rig.left.height);
    io::write_events_binary(&args.out_left, dims, &out.left).context("writing left events")?;
    io::write_events_binary(&args.out_right, dims, &out.right).context("writing right events")?;
    io::write_trajectory(&args.out_gt, &out.truth.trajectory).context("writing ground truth")?;
    if let Some(path) = &args.out_calib {
        io::write_calibration(path, &scenario.rig).context("writing calibration")?;
    }
    if let Some(path) = &args.out_tracks {
        io::write_tracks(path, &out.truth.tracks).context("writing junction tracks")?;
    }
    Ok(())
}
