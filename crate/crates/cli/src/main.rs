use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use pappi_cli::{
    budget_view, load_definitions, load_log, load_state, open_ledger, router, save_state, ColumnArgs, Overrides,
    QueryBody, Service,
};
use pappi_core::admissible::enumerate_admissible_sets;
use pappi_core::checkpoint::{Checkpoint, IndividualBound};
use pappi_core::event_log::{write_xes, EventLog};
use pappi_core::harness::{run_case_study, run_experiment, sepsis_fixture, sepsis_ppis, ExperimentSpec, FixtureConfig};
use pappi_core::ppi_model::PpiDefinition;
use serde_json::json;

#[derive(Parser)]
#[command(name = "pappi", version, about = "Differentially private release of process performance indicators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    columns: ColumnArgs,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(clap::Args)]
struct LedgerArgs {
    /// Ledger file holding budget and audit trail; created if missing.
    #[arg(long)]
    state: PathBuf,
}

#[derive(clap::Args)]
struct CheckpointArgs {
    #[arg(long)]
    log: PathBuf,
    /// PPI definition file (one object or an array).
    #[arg(long)]
    ppis: PathBuf,
    /// Total privacy budget for a new ledger.
    #[arg(long)]
    budget: Option<f64>,
    /// Cap on the budget any single scope may consume.
    #[arg(long)]
    scope_allocation: Option<f64>,
    /// Maximum number of traces one individual appears in.
    #[arg(long, default_value_t = 1)]
    n_max: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// List the admissible sets of every definition in a file.
    Admissible { definition: PathBuf },
    /// Release one PPI for one scope and record it in the ledger.
    Query {
        #[command(flatten)]
        checkpoint: CheckpointArgs,
        #[command(flatten)]
        ledger: LedgerArgs,
        /// PPI id; may be omitted when the file holds a single definition.
        #[arg(long)]
        ppi: Option<String>,
        /// Scope label such as 2015-03 or 2015-W09.
        #[arg(long)]
        scope: String,
        #[arg(long)]
        query_id: Option<String>,
    },
    /// Print the budget ledger.
    Budget {
        #[command(flatten)]
        ledger: LedgerArgs,
    },
    /// Print the audit trail as NDJSON.
    Audit {
        #[command(flatten)]
        ledger: LedgerArgs,
    },
    /// Serve the checkpoint over HTTP.
    Serve {
        #[command(flatten)]
        checkpoint: CheckpointArgs,
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Run a seeded experiment over synthetic datasets.
    Experiment {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one summary row per configuration.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Release every PPI in every window of a log, repeatedly.
    Casestudy {
        /// Event log; the built-in synthetic sepsis log when omitted.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Definitions; the bundled sepsis PPIs when omitted.
        #[arg(long)]
        ppis: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        n_max: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Write the synthetic sepsis log as XES (gzipped if the name ends in .gz).
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 13)]
        months: u32,
        #[arg(long, default_value_t = 400)]
        traces_per_month: usize,
        #[arg(long, default_value_t = 2014)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn checkpoint_service(args: &CheckpointArgs, state: Option<&Path>, cli: &Cli) -> anyhow::Result<Service> {
    let log = Arc::new(load_log(&args.log, &cli.columns)?);
    let defs = load_definitions(&args.ppis, &cli.overrides)?;
    let ledger = open_ledger(state, args.budget, args.scope_allocation)?;
    let checkpoint = Checkpoint::with_state(log, ledger, IndividualBound::new(args.n_max)?, args.seed);
    let service = Service::new(checkpoint, defs, cli.overrides.clone());
    Ok(match state {
        Some(path) => service.persist_to(path.to_path_buf()),
        None => service,
    })
}

fn single_id(defs: &[PpiDefinition]) -> anyhow::Result<String> {
    match defs {
        [only] => Ok(only.id.clone()),
        _ => bail!("--ppi is required when the file holds {} definitions", defs.len()),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    cli.overrides.validate()?;
    match &cli.command {
        Command::Admissible { definition } => {
            let defs = load_definitions(definition, &cli.overrides)?;
            let mut out = std::io::stdout().lock();
            for def in &defs {
                for set in enumerate_admissible_sets(&def.tree)? {
                    let names = set.names(&def.tree);
                    if defs.len() == 1 {
                        writeln!(out, "{}", json!(names))?;
                    } else {
                        writeln!(out, "{} {}", def.id, json!(names))?;
                    }
                }
            }
        }
        Command::Query { checkpoint, ledger, ppi, scope, query_id } => {
            let service = checkpoint_service(checkpoint, Some(&ledger.state), &cli)?;
            let id = match ppi {
                Some(id) => id.clone(),
                None => single_id(&load_definitions(&checkpoint.ppis, &cli.overrides)?)?,
            };
            let body = QueryBody {
                query_id: query_id.clone(),
                ppi: json!(id),
                scope: json!(scope),
                epsilon: None,
            };
            // A ledger that did not exist yet is still written on refusal,
            // so budget and audit can be inspected afterwards.
            if !ledger.state.exists() {
                save_state(&ledger.state, &service.checkpoint().state())?;
            }
            match service.query(&body) {
                Ok(response) => println!("{}", serde_json::to_string(&response)?),
                Err(e) => {
                    println!("{}", serde_json::to_string(&e)?);
                    return Ok(ExitCode::from(2));
                }
            }
        }
        Command::Budget { ledger } => {
            let state = load_state(&ledger.state)?;
            println!("{}", serde_json::to_string_pretty(&budget_view(&state))?);
        }
        Command::Audit { ledger } => {
            let state = load_state(&ledger.state)?;
            std::io::stdout().write_all(&pappi_core::checkpoint::export_audit(&state.records))?;
        }
        Command::Serve { checkpoint, state, addr } => {
            let service = Arc::new(checkpoint_service(checkpoint, state.as_deref(), &cli)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, router(service)).await?;
                anyhow::Ok(())
            })?;
        }
        Command::Experiment { spec, out, summary } => {
            let mut spec: ExperimentSpec = match spec {
                Some(path) => {
                    let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&src).with_context(|| format!("parsing {}", path.display()))?
                }
                None => ExperimentSpec::default(),
            };
            cli.overrides.apply_to_spec(&mut spec);
            let report = run_experiment(&spec)?;
            let mut sink = create(out)?;
            report.write_csv(&mut sink)?;
            sink.flush()?;
            if let Some(path) = summary {
                let mut sink = create(path)?;
                report.write_summary_csv(&mut sink)?;
                sink.flush()?;
            }
            eprintln!("{} configurations x {} runs written to {}", report.rows.len(), spec.runs, out.display());
        }
        Command::Casestudy { log, ppis, reps, n_max, seed, out, summary } => {
            let log = match log {
                Some(path) => load_log(path, &cli.columns)?,
                None => {
                    eprintln!("note: no --log given, using the synthetic sepsis log");
                    sepsis_fixture(&FixtureConfig::default())
                }
            };
            let defs = match ppis {
                Some(path) => load_definitions(path, &cli.overrides)?,
                None => {
                    let mut defs = sepsis_ppis()?;
                    defs.iter_mut().for_each(|d| cli.overrides.apply_to_definition(d));
                    defs
                }
            };
            let report = run_case_study(&log, &defs, cli.overrides.epsilon, *reps, *n_max, *seed)?;
            let mut sink = create(out)?;
            report.write_csv(&mut sink)?;
            sink.flush()?;
            if let Some(path) = summary {
                let mut sink = create(path)?;
                report.write_summary_csv(&mut sink)?;
                sink.flush()?;
            }
            let gaps = report.rows.iter().filter(|r| r.gap.is_some()).count();
            eprintln!("{} (window, PPI) rows, {gaps} gaps, written to {}", report.rows.len(), out.display());
        }
        Command::Fixture { out, months, traces_per_month, seed } => {
            let log: EventLog = sepsis_fixture(&FixtureConfig {
                seed: *seed,
                months: *months,
                traces_per_month: *traces_per_month,
                ..FixtureConfig::default()
            });
            let sink = create(out)?;
            if out.extension().is_some_and(|e| e == "gz") {
                let mut gz = flate2::write::GzEncoder::new(sink, flate2::Compression::default());
                write_xes(&log, &mut gz)?;
                gz.finish()?.flush()?;
            } else {
                let mut sink = sink;
                write_xes(&log, &mut sink)?;
                sink.flush()?;
            }
            eprintln!("{} traces written to {}", log.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
