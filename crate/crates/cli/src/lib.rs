//! The `sensorlab` command line: run the service, simulate class kits,
//! poke faults into running devices and report on event logs offline.

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use sensorlab_core::analytics::{render_table, report_from_log, ReportError};
use sensorlab_core::fixture::{generate, FixtureConfig, CORPUS_FILE, LABELS_FILE, MANIFEST_FILE};
use sensorlab_core::{read_log, write_log, EventRecord, LogError, Repository, ScoringEngine, Workflow};
use sensorlab_device::control::{send_command, ControlServer};
use sensorlab_device::{spawn_class_kit, DeviceFarm, KitOptions};
use sensorlab_service::store::SqlRepository;
use sensorlab_service::{probe, AppState, DeviceEntry, Gateway, GatewayConfig, LoadError, ServiceConfig, Store};

/// Something went wrong at run time.
pub const EXIT_FAILURE: u8 = 1;
/// Bad configuration: unusable paths, addresses or databases.
pub const EXIT_CONFIG: u8 = 2;
/// The input data itself is invalid (malformed or inconsistent log).
pub const EXIT_BAD_INPUT: u8 = 3;

/// The bundled event log, so `report` and `--fixture` work from any directory.
pub static BUNDLED_CORPUS: &str = include_str!("../../../fixtures/corpus.ndjson");

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_BAD_INPUT, message)
    }

    fn failure(message: impl Into<String>) -> Self {
        Self::new(EXIT_FAILURE, message)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::failure(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "sensorlab", version, about = "Classroom sensor inquiry platform")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Start a class kit of virtual devices and print their endpoints.
    Simulate(SimulateArgs),
    /// Inject or clear a fault on a device of a running kit.
    Inject(InjectArgs),
    /// List the devices of a running kit.
    Devices {
        /// Control address printed by `simulate` or given to `serve --control`.
        #[arg(long)]
        control: SocketAddr,
    },
    /// Print the engagement report for an event log.
    Report(ReportArgs),
    /// Replay an event log (the bundled corpus by default) into a database.
    LoadFixture {
        #[arg(long)]
        db: PathBuf,
        /// Event log to load instead of the bundled corpus.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write a database's event log as NDJSON.
    ExportLog {
        #[arg(long)]
        db: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixture corpus tools.
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Debug, Subcommand)]
pub enum FixtureCommand {
    /// Regenerate the corpus, labels and manifest into a directory.
    Generate {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// SQLite database file.
    #[arg(long, default_value = "sensorlab.db", conflicts_with = "memory")]
    pub db: PathBuf,
    /// Keep everything in memory.
    #[arg(long)]
    pub memory: bool,
    /// Directory for uploaded photos.
    #[arg(long, default_value = "photos")]
    pub photos: PathBuf,
    /// Load the bundled corpus before serving (the database must be empty).
    #[arg(long)]
    pub fixture: bool,
    /// Start a class kit with this many devices per sensor type.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..=1000))]
    pub kit: Option<u16>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Register an already running device (repeatable).
    #[arg(long = "device")]
    pub devices: Vec<SocketAddr>,
    /// Expose the kit's fault control endpoint here.
    #[arg(long, requires = "kit")]
    pub control: Option<SocketAddr>,
    /// Streaming period requested from devices, in ms.
    #[arg(long, default_value_t = sensorlab_protocol::DEFAULT_PERIOD_MS)]
    pub period_ms: u16,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Devices per sensor type.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u16).range(1..=1000))]
    pub kit_size: u16,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulated milliseconds per wall-clock millisecond.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
    /// Bind address of the fault control endpoint.
    #[arg(long, default_value = "127.0.0.1:0")]
    pub control: SocketAddr,
}

#[derive(Debug, clap::Args)]
pub struct InjectArgs {
    #[arg(long)]
    pub control: SocketAddr,
    /// Device serial, `0x`-prefixed hex or decimal.
    pub serial: String,
    /// mute, corrupt-crc, slow, or clear to remove all faults.
    pub fault: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// NDJSON event log; the bundled corpus when absent.
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::Simulate(args) => simulate(args),
        Command::Inject(args) => inject(args),
        Command::Devices { control } => {
            let lines = send_command(control, "list").map_err(|e| CliError::failure(format!("{control}: {e}")))?;
            let mut out = io::stdout().lock();
            for line in lines.iter().filter(|l| *l != "end") {
                writeln!(out, "{line}")?;
            }
            Ok(())
        }
        Command::Report(args) => report(args),
        Command::LoadFixture { db, log } => load_fixture(&db, log.as_deref()),
        Command::ExportLog { db, out } => export_log(&db, out.as_deref()),
        Command::Fixture(FixtureCommand::Generate { out }) => generate_fixture(&out),
    }
}

fn log_error(source: &str, e: LogError) -> CliError {
    match e {
        LogError::Io(e) => CliError::failure(format!("{source}: {e}")),
        other => CliError::input(format!("{source}: {other}")),
    }
}

fn report_error(source: &str, e: ReportError) -> CliError {
    CliError::input(format!("{source}: {e}"))
}

/// Reads a log file, or the bundled corpus when `path` is `None`.
pub fn read_events(path: Option<&Path>) -> Result<(String, Vec<EventRecord>), CliError> {
    match path {
        None => {
            let events = read_log(BUNDLED_CORPUS.as_bytes()).map_err(|e| log_error("bundled corpus", e))?;
            Ok(("bundled corpus".into(), events))
        }
        Some(path) => {
            let name = path.display().to_string();
            let file = File::open(path).map_err(|e| CliError::config(format!("{name}: {e}")))?;
            let events = read_log(BufReader::new(file)).map_err(|e| log_error(&name, e))?;
            Ok((name, events))
        }
    }
}

fn report(args: ReportArgs) -> Result<(), CliError> {
    let (name, events) = read_events(args.log.as_deref())?;
    let report = report_from_log(&events, &ScoringEngine::default()).map_err(|e| report_error(&name, e))?;
    let text = match args.format {
        Format::Table => render_table(&report),
        Format::Json => {
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            json
        }
    };
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn open_existing(db: &Path) -> Result<Store, CliError> {
    if !db.is_file() {
        return Err(CliError::config(format!("{}: no such database", db.display())));
    }
    Store::open(db).map_err(|e| CliError::config(format!("{}: {e}", db.display())))
}

fn load_fixture(db: &Path, log: Option<&Path>) -> Result<(), CliError> {
    let (name, events) = read_events(log)?;
    let mut store = Store::open(db).map_err(|e| CliError::config(format!("{}: {e}", db.display())))?;
    if !store.is_empty().map_err(|e| CliError::failure(e.to_string()))? {
        return Err(CliError::config(format!("{}: database already holds data", db.display())));
    }
    let workflow = Workflow::default();
    store
        .transaction(|tx| Ok::<_, LoadError>(workflow.replay(&mut SqlRepository::new(tx), &events)?))
        .map_err(|e| match e {
            LoadError::Replay(e) => CliError::input(format!("{name}: {e}")),
            other => CliError::failure(other.to_string()),
        })?;
    eprintln!("loaded {} events into {}", events.len(), db.display());
    Ok(())
}

fn export_log(db: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let store = open_existing(db)?;
    let events = store.repo().events().map_err(|e| CliError::failure(e.to_string()))?;
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let mut w = io::BufWriter::new(file);
            write_log(&mut w, &events)?;
            w.flush()?;
        }
        None => write_log(io::stdout().lock(), &events)?,
    }
    Ok(())
}

fn generate_fixture(out: &Path) -> Result<(), CliError> {
    let fixture = generate(&FixtureConfig::default()).map_err(|e| CliError::failure(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| CliError::config(format!("{}: {e}", out.display())))?;
    for (name, contents) in [
        (CORPUS_FILE, fixture.corpus_ndjson()),
        (LABELS_FILE, fixture.labels_csv()),
        (MANIFEST_FILE, fixture.manifest_toml()),
    ] {
        fs::write(out.join(name), contents)?;
    }
    eprintln!("wrote {} events to {}", fixture.events.len(), out.display());
    Ok(())
}

fn inject(args: InjectArgs) -> Result<(), CliError> {
    let command = match args.fault.as_str() {
        "clear" => format!("clear {}", args.serial),
        fault => format!("inject {} {fault}", args.serial),
    };
    let reply = send_command(args.control, &command).map_err(|e| CliError::failure(format!("{}: {e}", args.control)))?;
    match reply.first().map(String::as_str) {
        Some("ok") => Ok(()),
        Some(line) => Err(CliError::failure(line.strip_prefix("error ").unwrap_or(line).to_string())),
        None => Err(CliError::failure("control endpoint closed without replying")),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::from)
}

async fn interrupted() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        log::warn!("cannot listen for ctrl-c: {e}");
        std::future::pending::<()>().await;
    }
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let options = KitOptions { count_per_type: args.kit_size.into(), seed: args.seed, time_scale: args.time_scale };
    let farm = Arc::new(spawn_class_kit(&options).map_err(|e| CliError::failure(e.to_string()))?);
    let control = ControlServer::start(Arc::clone(&farm), args.control)
        .map_err(|e| CliError::config(format!("control {}: {e}", args.control)))?;
    {
        let mut out = io::stdout().lock();
        for addr in farm.endpoints() {
            writeln!(out, "{addr}")?;
        }
        out.flush()?;
    }
    eprintln!("control {}", control.addr());
    runtime()?.block_on(interrupted());
    drop(control);
    if let Ok(farm) = Arc::try_unwrap(farm) {
        farm.stop();
    }
    Ok(())
}

/// A kit started by `serve`; it runs as long as this value lives.
type Kit = Option<(Arc<DeviceFarm>, Option<ControlServer>)>;

fn devices(args: &ServeArgs) -> Result<(Gateway, Kit), CliError> {
    let config = GatewayConfig { period_ms: args.period_ms, ..GatewayConfig::default() };
    let config_timeout = config.handshake_timeout;
    let mut gateway = Gateway::new(config);
    for &addr in &args.devices {
        let entry = probe(addr, config_timeout).map_err(|e| CliError::config(format!("device {addr}: {e}")))?;
        gateway.register(entry);
    }
    let mut kit = None;
    if let Some(per_type) = args.kit {
        let options = KitOptions { count_per_type: per_type.into(), seed: args.seed, ..KitOptions::default() };
        let farm = Arc::new(spawn_class_kit(&options).map_err(|e| CliError::failure(e.to_string()))?);
        for d in farm.devices() {
            gateway.register(DeviceEntry::new(d.serial_number(), d.sensor_type(), d.addr()));
        }
        let control = match args.control {
            Some(bind) => {
                let server = ControlServer::start(Arc::clone(&farm), bind)
                    .map_err(|e| CliError::config(format!("control {bind}: {e}")))?;
                eprintln!("control {}", server.addr());
                Some(server)
            }
            None => None,
        };
        kit = Some((farm, control));
    }
    Ok((gateway, kit))
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let (gateway, kit) = devices(&args)?;
    let db = (!args.memory).then(|| args.db.clone());
    let config = ServiceConfig::new(db, args.photos.clone());
    let state = AppState::open(config, gateway).map_err(|e| CliError::config(e.to_string()))?;
    if args.fixture {
        if !state.is_empty().map_err(|e| CliError::failure(e.to_string()))? {
            return Err(CliError::config("--fixture needs an empty database"));
        }
        let (name, events) = read_events(None)?;
        state.load_log(&events).map_err(|e| CliError::input(format!("{name}: {e}")))?;
        eprintln!("loaded {} events", events.len());
    }
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .map_err(|e| CliError::config(format!("listen {}: {e}", args.listen)))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        io::stdout().flush()?;
        sensorlab_service::serve(listener, state, interrupted()).await?;
        Ok::<_, CliError>(())
    })?;
    // Give in-flight device sessions a moment to notice the shutdown.
    std::thread::sleep(Duration::from_millis(50));
    drop(kit);
    Ok(())
}
