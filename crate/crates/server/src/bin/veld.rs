use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use veld::commands::{audio_report, survey_report, PositionsFile};
use veld::harness::{bench_world, run_in_memory, run_scenario, Endpoint, ScenarioConfig};
use veld::memory::NetModel;
use veld::report::emit_report;
use veld::{RunningServer, ServerConfig};
use veld_core::survey::{bundled_profiles, bundled_responses, parse_profiles, parse_responses};
use veld_core::world::load_world;

#[derive(Parser)]
#[command(name = "veld", version, about = "Shared classroom state server and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the server on TCP and the WebSocket bridge.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        max_clients: Option<usize>,
        /// WebSocket bridge port (default: TCP port + 1).
        #[arg(long)]
        ws_port: Option<u16>,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
    },
    /// Check a world file; exits nonzero on the first violation.
    ValidateWorld { path: PathBuf },
    /// Print the gain matrix and group privacy for a positions file.
    AudioReport(AudioArgs),
    /// Drive a simulated class and write a metrics report.
    Bench(BenchArgs),
    /// Summarize Likert responses for one question, Desktop vs VR.
    Survey {
        /// CSV with header subject_id,mode,question_id,rating. Defaults to
        /// the bundled dataset.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// CSV with header subject_id,preferred_mode,dizzy_in_vr. Defaults to
        /// the bundled profiles when --in is also omitted.
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        question: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AudioArgs {
    /// JSON: {"positions": {id: [x,y,z]}, "groups": {id: label}, "audio_zone": {...}}
    /// or a bare {id: [x,y,z]} object.
    positions: PathBuf,
    /// Take the zone from this world file when the positions file has none.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    coef: Option<f64>,
    #[arg(long)]
    ref_distance: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    clients: usize,
    #[arg(long, default_value_t = 100)]
    actions: usize,
    /// Actions per second across all instructors; 0 = unthrottled.
    #[arg(long, default_value_t = 0.0)]
    rate: f64,
    #[arg(long)]
    out: PathBuf,
    /// Address of a running server.
    #[arg(long, conflicts_with = "in_memory")]
    server: Option<String>,
    /// Run against an in-process hub (the default when --server is absent).
    #[arg(long)]
    in_memory: bool,
    #[arg(long, default_value_t = 0.0)]
    latency_ms: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter_ms: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    instructors: usize,
    /// Position updates per client per second.
    #[arg(long, default_value_t = 0.0)]
    presence_rate: f64,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value = "bench-hall")]
    room: String,
    #[arg(long, default_value = "slides")]
    binding: String,
    #[arg(long, default_value = "bench-token")]
    token: String,
    /// World for --in-memory runs (default: a built-in single hall).
    #[arg(long)]
    world: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { port, config, max_clients, ws_port, host } => serve(port, config, max_clients, ws_port, host),
        Command::ValidateWorld { path } => validate_world(path),
        Command::AudioReport(args) => audio(args),
        Command::Bench(args) => bench(args),
        Command::Survey { input, profiles, question, out } => survey(input, profiles, question, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn serve(
    port: Option<u16>,
    config: PathBuf,
    max_clients: Option<usize>,
    ws_port: Option<u16>,
    host: String,
) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let mut cfg = ServerConfig::load(&config)?;
    if let Some(p) = port {
        cfg.listen_port = p;
    }
    if let Some(m) = max_clients {
        cfg.max_clients = m;
    }
    if ws_port.is_some() {
        cfg.ws_port = ws_port;
    }
    cfg.validate()?;
    let world = cfg.load_world()?;
    runtime()?.block_on(async move {
        let server = RunningServer::start(&cfg, world, &host).await?;
        tracing::info!(
            tcp = %server.tcp_addr,
            ws = %server.ws_addr,
            rooms = ?server.hub.world().names().collect::<Vec<_>>(),
            max_clients = cfg.max_clients,
            "serving"
        );
        tokio::select! {
            _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
            _ = server.wait() => bail!("listener stopped"),
        }
        Ok(())
    })
}

fn validate_world(path: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let world = load_world(&text).with_context(|| format!("{} is not a valid world", path.display()))?;
    println!("{}: ok", path.display());
    for lesson in &world.lessons {
        println!(
            "  {:<20} apps {:?} (central {}), {} pods, {} portals",
            lesson.name,
            lesson.apps,
            lesson.central,
            lesson.pods.len(),
            lesson.portals.len()
        );
    }
    Ok(())
}

fn audio(args: AudioArgs) -> Result<()> {
    let text =
        std::fs::read_to_string(&args.positions).with_context(|| format!("reading {}", args.positions.display()))?;
    let file: PositionsFile = serde_json::from_str(&text).context("positions file")?;
    let (positions, groups, file_zone) = file.parts();
    let world_zone = match &args.world {
        Some(path) => load_world(&std::fs::read_to_string(path)?)?.audio_zone,
        None => None,
    };
    let mut zone = file_zone.or(world_zone).unwrap_or_default();
    zone.coef = args.coef.unwrap_or(zone.coef);
    zone.ref_distance = args.ref_distance.unwrap_or(zone.ref_distance);
    zone.epsilon = args.epsilon.unwrap_or(zone.epsilon);
    let report = audio_report(zone, &positions, &groups)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{report}");
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::new(args.clients, args.actions);
    cfg.n_instructors = args.instructors;
    cfg.action_rate = args.rate;
    cfg.presence_rate = args.presence_rate;
    cfg.duration_s = args.duration;
    cfg.net_model = NetModel { base_latency_ms: args.latency_ms, jitter_ms: args.jitter_ms, seed: args.seed };
    cfg.room = args.room;
    cfg.binding = args.binding;
    cfg.instructor_token = args.token;
    let world = match &args.world {
        Some(path) => load_world(&std::fs::read_to_string(path)?)?,
        None => bench_world(),
    };
    let report = runtime()?.block_on(async {
        match &args.server {
            Some(addr) => run_scenario(&cfg, &Endpoint::Tcp(addr.clone())).await,
            None => run_in_memory(&cfg, world).await,
        }
    })?;
    let table = emit_report(&report, &args.out)?;
    print!("{report}");
    println!("wrote {} and {}", args.out.display(), table.display());
    if !report.convergence.converged || report.max_seq_gap != 0 {
        bail!("run did not converge cleanly");
    }
    Ok(())
}

fn survey(input: Option<PathBuf>, profiles: Option<PathBuf>, question: String, out: Option<PathBuf>) -> Result<()> {
    let responses = match &input {
        Some(path) => parse_responses(File::open(path).with_context(|| format!("opening {}", path.display()))?)?,
        None => bundled_responses(),
    };
    let profiles = match (&profiles, &input) {
        (Some(path), _) => parse_profiles(File::open(path).with_context(|| format!("opening {}", path.display()))?)?,
        (None, None) => bundled_profiles(),
        (None, Some(_)) => Vec::new(),
    };
    let report = survey_report(&responses, &profiles, &question)?;
    print!("{report}");
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
