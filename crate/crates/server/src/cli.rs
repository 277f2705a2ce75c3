//! Command-line definitions and entry points.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, CommandFactory, Parser, Subcommand};
use tokio::net::TcpListener;

use plastiscope_core::aggregate::area_range;
use plastiscope_core::collab::HubConfig;
use plastiscope_core::ingest::{generate_synthetic, SynthConfig, TransposeOptions};
use plastiscope_core::pipeline::{preprocess, PreprocessOptions};
use plastiscope_core::store::FrameStore;
use plastiscope_core::{aggregate, FrameKey, NeuronProperty, Scenario};

use crate::{App, CollabHub, DataStore};

#[derive(Debug, Parser)]
#[command(name = "plastiscope", version, about = "Preprocess, generate and serve brain-plasticity simulation ensembles")]
pub struct Cli {
    /// More log output (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw simulation output into a frame store.
    Preprocess(PreprocessArgs),
    /// Write a synthetic raw dataset.
    Synth(SynthArgs),
    /// Serve the data API, the collaboration socket and an optional client bundle.
    Serve(ServeArgs),
    /// Print a summary of one stored frame as JSON.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated scenario ids; default is every scenario present.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<Scenario>>,
    /// Scenarios processed in parallel (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output steps read per pass over the monitor files.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    pub block_steps: u32,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..))]
    pub clusters: u32,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u16).range(1..))]
    pub areas: u16,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub timesteps: u32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PLASTISCOPE_STORE")]
    pub store: PathBuf,
    #[arg(long, env = "PLASTISCOPE_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Directory with the static browser client.
    #[arg(long)]
    pub client: Option<PathBuf>,
    /// Seconds between heartbeat pings.
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(1..))]
    pub ping_interval: u64,
    /// Unanswered pings before a member is dropped.
    #[arg(long, default_value_t = 2)]
    pub max_missed_pings: u32,
    /// Seconds an empty session is kept for rejoining.
    #[arg(long, default_value_t = 60)]
    pub session_ttl: u64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, env = "PLASTISCOPE_STORE")]
    pub store: PathBuf,
    pub scenario: Scenario,
    pub timestep: u32,
}

pub fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Preprocess(args) => run_preprocess(args),
        Command::Synth(args) => run_synth(args),
        Command::Serve(args) => run_serve(args),
        Command::Inspect(args) => run_inspect(args),
    }
}

fn run_preprocess(args: PreprocessArgs) -> anyhow::Result<()> {
    let options = PreprocessOptions {
        scenarios: args.scenarios,
        jobs: args.jobs,
        transpose: TransposeOptions {
            block_steps: args.block_steps as usize,
            ..TransposeOptions::default()
        },
    };
    let summary = preprocess(&args.input, &args.output, &options)
        .with_context(|| format!("preprocessing {}", args.input.display()))?;
    for s in &summary.scenarios {
        for w in &s.warnings {
            tracing::warn!("{w}");
        }
        println!(
            "{:<24} {:>5} frames  {:>14} B in  {:>12} B out",
            s.scenario.slug(),
            s.frames,
            s.bytes_in,
            s.bytes_out
        );
    }
    println!(
        "total: {} frames, {} B in, {} B out, ratio {:.4}",
        summary.frames_written(),
        summary.bytes_in,
        summary.bytes_out,
        summary.compression_ratio()
    );
    Ok(())
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    if args.areas as u32 > args.clusters {
        Cli::command()
            .error(
                clap::error::ErrorKind::ArgumentConflict,
                format!("--areas {} exceeds --clusters {}", args.areas, args.clusters),
            )
            .exit();
    }
    let config = SynthConfig {
        n_clusters: args.clusters,
        n_areas: args.areas,
        n_timesteps: args.timesteps,
        seed: args.seed,
    };
    generate_synthetic(&args.output, &config).with_context(|| format!("writing {}", args.output.display()))?;
    println!(
        "wrote {} neurons x {} steps to {}",
        config.neuron_count(),
        config.n_timesteps,
        args.output.display()
    );
    Ok(())
}

fn run_serve(args: ServeArgs) -> anyhow::Result<()> {
    let store = FrameStore::new(&args.store);
    if !store.has_catalog() {
        anyhow::bail!("{} has no catalog; run `plastiscope preprocess` first", args.store.display());
    }
    let data = Arc::new(DataStore::open(&args.store).with_context(|| format!("opening store {}", args.store.display()))?);
    let config = HubConfig {
        ping_interval: Duration::from_secs(args.ping_interval),
        max_missed_pings: args.max_missed_pings,
        empty_session_ttl: Duration::from_secs(args.session_ttl),
    };
    let seed = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
        ^ std::process::id() as u64;
    let collab = Arc::new(CollabHub::new(config, Some(Arc::new(data.catalog.clone())), seed));
    let app = App::new(Some(data), collab, args.client.as_deref());

    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async move {
        let addr = SocketAddr::new(args.host, args.port);
        let listener = TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        app.serve(listener, shutdown_signal()).await.context("serving")
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn run_inspect(args: InspectArgs) -> anyhow::Result<()> {
    let store = FrameStore::new(&args.store);
    let key = FrameKey {
        scenario: args.scenario,
        timestep: args.timestep,
    };
    let frame = store.read_frame(key)?;
    let statics = store.read_statics()?;
    let mut ranges = serde_json::Map::new();
    for p in NeuronProperty::ALL {
        let r = match p {
            NeuronProperty::Area => area_range(&statics)?,
            _ => aggregate::local_range(&frame, p)?,
        };
        ranges.insert(p.name().to_string(), serde_json::json!([r.min, r.max]));
    }
    let fired = frame.columns.fired.iter().filter(|f| **f).count();
    let summary = serde_json::json!({
        "scenario": key.scenario,
        "timestep": key.timestep,
        "neurons": frame.neuron_count(),
        "areas": frame.area_count(),
        "fired": fired,
        "synapses": frame.connectivity.total(),
        "connectivity": frame.connectivity_status,
        "stored_bytes": store.locator(key).stored_bytes()?,
        "ranges": ranges,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
