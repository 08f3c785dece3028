use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use heapscope_core::analytics::{SummaryData, VariableSummary};
use heapscope_core::query::QueryCache;
use heapscope_core::tracegen::{Scenario, SoupParams, SCENARIOS};
use heapscope_service::api::{self, DEFAULT_OBJECT_LIMIT};
use heapscope_service::{ingest_trace_file, router, ApiError, AppState, Registry};

#[derive(Parser)]
#[command(
    name = "heapscope",
    version,
    about = "Heap trace ingestion, queries, and API server"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Directory holding ingested datasets.
    #[arg(long, env = "HEAPSCOPE_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Directory for persisted query results; in-memory only when absent.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a built-in scenario trace.
    Gen {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIOS))]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Object budget for random-soup.
        #[arg(long)]
        objects: Option<usize>,
        /// Event budget for random-soup.
        #[arg(long)]
        events: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Ingest a trace file as a named dataset.
    Ingest {
        trace: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long, env = "HEAPSCOPE_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
    },
    /// Evaluate a query and print the selection size.
    Query {
        dataset: String,
        query: String,
        /// Also summarise an object variable.
        #[arg(long)]
        vis: Option<String>,
        /// Print the full JSON response instead.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print the percent matrix of a slash-separated composite query.
    Matrix {
        dataset: String,
        composite: String,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Serve the JSON API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        data: DataArgs,
        /// Static UI bundle served for non-API paths.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_OBJECT_LIMIT)]
        object_limit: usize,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::FAILURE
        }
    }
}

fn cache_for(data: &DataArgs) -> QueryCache {
    match &data.cache_dir {
        Some(dir) => QueryCache::persistent(dir),
        None => QueryCache::in_memory(),
    }
}

fn open_registry(dir: &Path) -> Result<Registry, ApiError> {
    Registry::open(dir)
        .map_err(|e| ApiError::internal(format!("cannot read {}: {e}", dir.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("response serializes")
}

fn run(command: Command) -> Result<(), ApiError> {
    match command {
        Command::Gen {
            scenario,
            seed,
            objects,
            events,
            output,
        } => {
            let defaults = SoupParams::default();
            let params = SoupParams {
                objects: objects.unwrap_or(defaults.objects),
                events: events.unwrap_or(defaults.events),
            };
            let scenario = Scenario::builtin(&scenario, seed, params)
                .map_err(|e| ApiError::bad_request(e.to_string()))?;
            let bytes = scenario
                .trace
                .to_bytes()
                .map_err(|e| ApiError::internal(e.to_string()))?;
            fs::write(&output, bytes).map_err(|e| {
                ApiError::internal(format!("cannot write {}: {e}", output.display()))
            })?;
            println!(
                "{} events written to {}",
                scenario.trace.events.len(),
                output.display()
            );
        }
        Command::Ingest {
            trace,
            name,
            data_dir,
        } => {
            let m = ingest_trace_file(&trace, &name, &data_dir)?;
            println!(
                "{}: {} objects, {} events, {} classes",
                m.name, m.object_count, m.event_count, m.class_count
            );
        }
        Command::Query {
            dataset,
            query,
            vis,
            json,
            data,
        } => {
            let registry = open_registry(&data.data_dir)?;
            let ds = registry.get(&dataset)?;
            let limit = if json { DEFAULT_OBJECT_LIMIT } else { 0 };
            let response = api::query(&ds, &query, vis.as_deref(), &cache_for(&data), limit)?;
            if json {
                println!("{}", to_json(&response));
            } else {
                println!("{}", response.count);
                if let Some(summary) = &response.summary {
                    print_summary(summary);
                }
            }
        }
        Command::Matrix {
            dataset,
            composite,
            json,
            data,
        } => {
            let registry = open_registry(&data.data_dir)?;
            let ds = registry.get(&dataset)?;
            let response = api::matrix(&ds, &composite, &cache_for(&data))?;
            if json {
                println!("{}", to_json(&response));
            } else {
                for (i, part) in response.parts.iter().enumerate() {
                    let row: Vec<String> = response.stats.percents[i]
                        .iter()
                        .map(|p| format!("{p:>4}%"))
                        .collect();
                    println!("{} {}", row.join(" "), part.query);
                }
            }
        }
        Command::Serve {
            port,
            host,
            data,
            ui_dir,
            object_limit,
        } => {
            let registry = open_registry(&data.data_dir)?;
            let state = AppState {
                registry: Arc::new(registry),
                cache: Arc::new(cache_for(&data)),
                object_limit,
            };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| ApiError::bad_request(format!("bad listen address: {e}")))?;
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| ApiError::internal(format!("cannot start runtime: {e}")))?;
            runtime.block_on(serve(addr, router(state, ui_dir)))?;
        }
    }
    Ok(())
}

async fn serve(addr: SocketAddr, app: axum::Router) -> Result<(), ApiError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ApiError::internal(format!("cannot bind {addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| ApiError::internal(e.to_string()))?;
    println!("listening on http://{local}");
    tracing::info!(%local, "serving");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

fn print_summary(summary: &VariableSummary) {
    match &summary.data {
        SummaryData::Categorical { counts } => {
            for c in counts {
                println!("{:>8}  {}", c.count, c.value);
            }
        }
        SummaryData::Numerical { bins, box_stats } => {
            for b in bins {
                println!("{:>8}  [{:.3}, {:.3}]", b.count, b.lower, b.upper);
            }
            if let Some(b) = box_stats {
                println!(
                    "min {:.3}  q1 {:.3}  median {:.3}  q3 {:.3}  max {:.3}",
                    b.min, b.q1, b.median, b.q3, b.max
                );
            }
        }
    }
}
