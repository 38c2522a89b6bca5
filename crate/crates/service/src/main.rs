use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sensor_search::bench::{run_experiment, Experiment, ExperimentSpec};
use sensor_search::registry::{generate_synthetic, write_csv, write_jsonl};
use sensor_search::{
    default_schema, load_catalog, search, BoundingBox, CatalogFormat, PriorityProfile, PropertySchema, RegistrySnapshot,
    SearchRequest,
};
use sensor_search_service::{router, shutdown_signal, AppState, RouterOptions};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "sensor-search", version, about = "Filter, rank and prune sensor catalogs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a catalog and print a summary.
    Load {
        file: PathBuf,
        #[command(flatten)]
        catalog: CatalogArgs,
    },
    /// Write a synthetic catalog.
    Gen {
        #[arg(long, default_value_t = 1_000)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Schema file (TOML); the 30-property default otherwise.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
        format: FileFormat,
        /// Output file; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one search and print the response.
    Search(SearchArgs),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Catalog to publish at startup.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[command(flatten)]
        catalog_args: CatalogArgs,
        /// Directory of static UI assets.
        #[arg(long)]
        ui: Option<PathBuf>,
        #[arg(long)]
        cors: bool,
    },
    /// Run a benchmark experiment and write CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FileFormat {
    Csv,
    Jsonl,
}

impl From<FileFormat> for CatalogFormat {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Csv => CatalogFormat::Csv,
            FileFormat::Jsonl => CatalogFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct CatalogArgs {
    /// Schema file (TOML); the 30-property default otherwise.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Catalog format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// Point-based requirements, e.g. `type = "temperature" AND n = 10`.
    #[arg(long, default_value = "")]
    query: String,
    /// Priority profile (JSON).
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    cphf: bool,
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// Catalog to search; a synthetic one otherwise.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[command(flatten)]
    catalog_args: CatalogArgs,
    /// Size of the synthetic catalog when no catalog is given.
    #[arg(long, default_value_t = 1_000)]
    count: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long = "output", value_enum, default_value_t = OutputFormat::Json)]
    output: OutputFormat,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// phase-timing, property-scaling, cphf-speedup or accuracy-vs-margin.
    experiment: Experiment,
    #[arg(long, value_delimiter = ',')]
    sensors: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    properties: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    predicates: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    margins: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    profile_seed: Option<u64>,
    /// Output file; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl BenchArgs {
    fn spec(&self) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(self.experiment);
        if let Some(v) = &self.sensors {
            spec.sensor_counts = v.clone();
        }
        if let Some(v) = &self.properties {
            spec.property_counts = v.clone();
        }
        if let Some(v) = &self.predicates {
            spec.predicate_counts = v.clone();
        }
        if let Some(n) = self.n {
            spec.n_requested = n;
        }
        if let Some(v) = &self.margins {
            spec.margins = v.clone();
        }
        if let Some(v) = &self.seeds {
            spec.seeds = v.clone();
        }
        if let Some(r) = self.repetitions {
            spec.repetitions = r;
        }
        if let Some(s) = self.profile_seed {
            spec.profile_seed = s;
        }
        spec
    }
}

fn read_schema(path: Option<&Path>) -> Result<PropertySchema> {
    match path {
        None => Ok(default_schema()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading schema {}", p.display()))?;
            PropertySchema::from_toml_str(&text).with_context(|| format!("parsing schema {}", p.display()))
        }
    }
}

fn infer_format(path: &Path, explicit: Option<FileFormat>) -> Result<CatalogFormat> {
    if let Some(f) = explicit {
        return Ok(f.into());
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => ext
            .parse()
            .map_err(|_| anyhow::anyhow!("cannot infer catalog format from {}; pass --format", path.display())),
        None => bail!("cannot infer catalog format from {}; pass --format", path.display()),
    }
}

fn read_catalog(path: &Path, args: &CatalogArgs) -> Result<RegistrySnapshot> {
    let schema = read_schema(args.schema.as_deref())?;
    let format = infer_format(path, args.format)?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_catalog(BufReader::new(file), format, schema).with_context(|| format!("loading {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_search(args: &SearchArgs) -> Result<()> {
    let mut text = String::new();
    File::open(&args.profile)
        .and_then(|mut f| f.read_to_string(&mut text))
        .with_context(|| format!("reading profile {}", args.profile.display()))?;
    let profile: PriorityProfile =
        serde_json::from_str(&text).with_context(|| format!("parsing profile {}", args.profile.display()))?;
    let snapshot = match &args.catalog {
        Some(path) => read_catalog(path, &args.catalog_args)?,
        None => generate_synthetic(
            args.count,
            &read_schema(args.catalog_args.schema.as_deref())?,
            args.seed,
            BoundingBox::WORLD,
        )?,
    };
    let mut request = SearchRequest::new(args.query.clone(), profile);
    if args.cphf {
        request = request.with_cphf(args.margin);
    }
    let response = search(&snapshot, &request)?;
    let mut out = output(None)?;
    match args.output {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &response)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => response.write_csv(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

async fn serve(addr: SocketAddr, snapshot_source: Option<(PathBuf, CatalogArgs)>, options: RouterOptions, schema: PropertySchema) -> Result<()> {
    let state = AppState::new(schema);
    if let Some((path, args)) = snapshot_source {
        let loaded = read_catalog(&path, &args)?;
        let published = state
            .registry
            .publish(loaded.schema().clone(), loaded.sensors().to_vec())?;
        tracing::info!(sensors = published.len(), version = published.version(), "catalog published");
    }
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, &options))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Load { file, catalog } => {
            let snapshot = read_catalog(&file, &catalog)?;
            let summary = json!({
                "file": file,
                "sensors": snapshot.len(),
                "properties": snapshot.schema().len(),
                "version": snapshot.version(),
            });
            println!("{summary}");
        }
        Command::Gen {
            count,
            seed,
            schema,
            format,
            out,
        } => {
            let snapshot = generate_synthetic(count, &read_schema(schema.as_deref())?, seed, BoundingBox::WORLD)?;
            let mut sink = output(out.as_deref())?;
            match format {
                FileFormat::Csv => write_csv(&snapshot, &mut sink)?,
                FileFormat::Jsonl => write_jsonl(&snapshot, &mut sink)?,
            }
            sink.flush()?;
        }
        Command::Search(args) => run_search(&args)?,
        Command::Serve {
            port,
            host,
            catalog,
            catalog_args,
            ui,
            cors,
        } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("invalid address {host}:{port}"))?;
            let schema = read_schema(catalog_args.schema.as_deref())?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(
                addr,
                catalog.map(|c| (c, catalog_args)),
                RouterOptions { ui_dir: ui, cors },
                schema,
            ))?;
        }
        Command::Bench(args) => {
            let result = run_experiment(&args.spec())?;
            let mut sink = output(args.out.as_deref())?;
            result.write_csv(&mut sink)?;
            sink.flush()?;
        }
    }
    Ok(())
}
