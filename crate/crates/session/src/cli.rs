//! Command-line front end.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use scalpview_core::inverse::{compute_kernel, read_lead_field, spherical_lead_field, Regularization, SloretaKernel};
use scalpview_core::pipelines::{PipelineKind, DEFAULT_FRAME_RATE};
use scalpview_core::recording::{load_recording, write_recording};
use scalpview_core::synth::{generate, Scenario, Span};
use scalpview_core::topomap::DEFAULT_GRID;
use scalpview_core::{Error, Montage, Result, SampleBlock};

use crate::render::render_at;
use crate::session::{frame_blocks, Session, SessionConfig};

/// Calibration span used when neither a flag nor the source provides one.
pub const DEFAULT_CALIBRATION: Span = Span {
    t_start: 0.0,
    t_end: 10.0,
};

#[derive(Parser, Debug)]
#[command(name = "scalpview", version, about = "Stream and render scalp maps from EEG recordings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Replay a recording or scenario to WebSocket clients.
    Serve(ServeArgs),
    /// Generate a synthetic recording with ground-truth markers.
    Synth(SynthArgs),
    /// Render one pipeline at one instant to a PNG or JSON file.
    Render(RenderArgs),
    /// Precompute an sLORETA kernel from a lead field.
    Kernel(KernelArgs),
    /// Write a spherical-head lead field for the standard montage.
    Leadfield(LeadfieldArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Recording CSV; a `<stem>.markers.json` sidecar is read when present.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Scenario JSON to synthesize on the fly, or `demo` for the built-in one.
    #[arg(long)]
    pub scenario: Option<String>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value_t = DEFAULT_FRAME_RATE, value_parser = positive)]
    pub frame_rate: f64,
    /// Replay speed relative to real time; 0 runs unthrottled.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub speed: f64,
    /// Lead field enabling the source view; its voxel positions go to clients.
    #[arg(long)]
    pub leadfield: Option<PathBuf>,
    /// Kernel written by `scalpview kernel` for the same lead field; skips the inversion.
    #[arg(long, requires = "leadfield")]
    pub kernel: Option<PathBuf>,
    /// `auto` or a non-negative number.
    #[arg(long, default_value = "auto")]
    pub alpha: Regularization,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value = "raw")]
    pub pipeline: PipelineKind,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    /// Calibration span `START:END` in seconds, overriding the source's own.
    #[arg(long, value_parser = parse_span)]
    pub calibrate: Option<Span>,
    /// Wait for start/end calibration controls instead of calibrating automatically.
    #[arg(long)]
    pub manual_calibration: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scenario JSON, or `demo` for the built-in one.
    #[arg(long)]
    pub scenario: String,
    /// Output directory (gets `recording.csv`) or a `.csv` path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub pipeline: PipelineKind,
    /// Time in seconds; the last frame at or before it is rendered.
    #[arg(long)]
    pub at: f64,
    /// `.png` for an image, anything else for a JSON snapshot.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_span)]
    pub calibrate: Option<Span>,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    #[arg(long)]
    pub leadfield: PathBuf,
    #[arg(long, default_value = "auto")]
    pub alpha: Regularization,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LeadfieldArgs {
    #[arg(long, default_value_t = 2002)]
    pub voxels: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

pub fn parse_span(s: &str) -> std::result::Result<Span, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let (a, b) = (non_negative(a.trim())?, non_negative(b.trim())?);
    if b <= a {
        return Err(format!("calibration span {s:?} must end after it starts"));
    }
    Ok(Span { t_start: a, t_end: b })
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if arg == "demo" {
        Ok(Scenario::demo())
    } else {
        Scenario::load(Path::new(arg))
    }
}

/// Samples plus the calibration span the source declares, if any.
pub fn load_source(src: &SourceArgs, montage: &Montage) -> Result<(SampleBlock, Option<Span>)> {
    if let Some(path) = &src.input {
        let rec = load_recording(path, montage)?;
        let span = rec.markers.and_then(|m| m.calibration);
        Ok((rec.samples, span))
    } else {
        let scenario = load_scenario(src.scenario.as_deref().expect("clap enforces one source"))?;
        let out = generate(&scenario, montage)?;
        Ok((out.samples, scenario.calibration))
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let montage = Montage::standard();
    let scenario = load_scenario(&args.scenario)?;
    let out = generate(&scenario, &montage)?;
    let path = if args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        args.out.clone()
    } else {
        std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
        args.out.join("recording.csv")
    };
    write_recording(&path, &out.samples, &montage, Some(&out.truth))?;
    println!("wrote {} ({} samples at {} Hz)", path.display(), out.samples.len(), out.samples.fs);
    Ok(())
}

fn render_cmd(args: &RenderArgs) -> Result<()> {
    let montage = Montage::standard();
    let (samples, declared) = load_source(&args.source, &montage)?;
    let span = args.calibrate.or(declared).unwrap_or(DEFAULT_CALIBRATION);
    let rendered = render_at(&samples, &montage, args.pipeline, args.at, span, args.grid)?;
    rendered.write(&args.out, &montage, args.gain)?;
    println!("wrote {} (frame at {} s)", args.out.display(), rendered.output.t);
    Ok(())
}

fn kernel_cmd(args: &KernelArgs) -> Result<()> {
    let lead = read_lead_field(&args.leadfield)?;
    let kernel = compute_kernel(&lead, args.alpha)?;
    kernel.write(&args.out)?;
    println!(
        "wrote {} ({} voxels x {} electrodes, alpha {:e})",
        args.out.display(),
        kernel.voxel_count(),
        kernel.electrode_count(),
        kernel.alpha()
    );
    Ok(())
}

fn leadfield_cmd(args: &LeadfieldArgs) -> Result<()> {
    let lead = spherical_lead_field(&Montage::standard(), args.voxels)?;
    lead.write(&args.out)?;
    println!("wrote {} ({} voxels)", args.out.display(), lead.voxel_count());
    Ok(())
}

fn serve_cmd(args: &ServeArgs) -> Result<()> {
    let montage = Montage::standard();
    let (samples, declared) = load_source(&args.source, &montage)?;
    let auto = if args.manual_calibration {
        None
    } else {
        Some(args.calibrate.or(declared).unwrap_or(DEFAULT_CALIBRATION))
    };
    let cfg = SessionConfig {
        frame_rate_hz: args.frame_rate,
        grid: args.grid,
        gain: args.gain,
        pipeline: args.pipeline,
        auto_calibration: auto,
        traces: true,
    };
    let mut session = Session::new(&montage, samples.fs, cfg)?;
    if let Some(path) = &args.leadfield {
        let lead = read_lead_field(path)?;
        lead.check_montage(&montage)?;
        let kernel = match &args.kernel {
            Some(path) => SloretaKernel::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)?,
            None => compute_kernel(&lead, args.alpha)?,
        };
        if kernel.voxel_count() != lead.voxel_count() {
            return Err(Error::Config(format!(
                "kernel has {} voxels, lead field {}",
                kernel.voxel_count(),
                lead.voxel_count()
            )));
        }
        info!("sLORETA kernel ready: {} voxels, alpha {:e}", kernel.voxel_count(), kernel.alpha());
        session = session.with_kernel(kernel, lead.voxel_positions())?;
    }
    let blocks = frame_blocks(&samples, args.frame_rate);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::Config(format!("tokio runtime: {e}")))?;
    let addr = format!("{}:{}", args.host, args.port);
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| Error::io(&addr, e))?;
        let local = listener.local_addr().map_err(|e| Error::io(&addr, e))?;
        println!("listening on ws://{local}");
        let _ = std::io::stdout().flush();
        crate::server::serve(listener, session, blocks, args.speed)
            .await
            .map_err(|e| Error::io(&addr, e))
    })
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Serve(a) => serve_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Render(a) => render_cmd(a),
        Command::Kernel(a) => kernel_cmd(a),
        Command::Leadfield(a) => leadfield_cmd(a),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("scalpview: {e}");
            1
        }
    }
}
