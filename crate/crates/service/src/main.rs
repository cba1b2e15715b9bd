use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use pairalign::eval::{aggregate, run_plan, ExperimentPlan};
use pairalign_service::{read_log, router, FileStore, ServiceConfig, SessionManager, SystemClock};

#[derive(Parser)]
#[command(name = "pairalign", version, about = "Pairwise preference elicitation service and experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve live elicitation sessions over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Question manifest (one object or an array).
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding one event log per session.
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Budget for requests and questions that do not set one.
        #[arg(long, default_value_t = 10)]
        budget: usize,
        #[arg(long, default_value_t = 3.0)]
        norm_bound: f64,
    },
    /// Run an experiment plan against simulated users.
    Sim {
        /// Plan file (JSON).
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's master seed.
        #[arg(long)]
        master_seed: Option<u64>,
        /// Overrides the plan's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a session log as readable text.
    Inspect {
        /// A session log file, or a data directory together with --session.
        path: PathBuf,
        #[arg(long)]
        session: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Serve { port, host, manifest, data_dir, seed, budget, norm_bound } => {
            let config = ServiceConfig { master_seed: seed, norm_bound, default_budget: budget, ..Default::default() };
            let store = Arc::new(FileStore::open(&data_dir)?);
            let mgr = SessionManager::from_manifest(&manifest, config, store, Arc::new(SystemClock))?;
            log::info!(
                "{} questions, {} restored sessions, logs in {}",
                mgr.questions().count(),
                mgr.session_ids().len(),
                data_dir.display()
            );
            let app = router(Arc::new(mgr));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                log::info!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
        }
        Command::Sim { plan, master_seed, output } => {
            let mut plan = ExperimentPlan::load(&plan)?;
            if let Some(s) = master_seed {
                plan.master_seed = s;
            }
            if output.is_some() {
                plan.output = output;
            }
            let out = run_plan(&plan)?;
            let failed = out.records.iter().filter(|r| !r.is_ok()).count();
            println!("{} runs ({failed} failed)", out.records.len());
            println!(
                "{:<15} {:<10} {:<15} {:>6} {:>6} {:>6} {:>9} {:>8} {:>9} {:>8}",
                "policy", "user", "mode", "eps", "budget", "runs", "win_rate", "se", "cost", "se"
            );
            for row in aggregate(&out.records)? {
                println!(
                    "{:<15} {:<10} {:<15} {:>6} {:>6} {:>6} {:>9.4} {:>8.4} {:>9.2} {:>8.2}",
                    row.policy.as_str(),
                    row.user_kind.to_string(),
                    format!("{:?}", row.mode),
                    row.epsilon.map_or("-".to_string(), |e| e.to_string()),
                    row.budget,
                    row.runs,
                    row.mean_win_rate,
                    row.se_win_rate,
                    row.mean_cost,
                    row.se_cost,
                );
            }
            if let Some(dir) = &plan.output {
                println!("tables written to {}", dir.display());
            }
        }
        Command::Inspect { path, session } => {
            let file = match session {
                Some(id) => path.join(format!("{id}.jsonl")),
                None => path,
            };
            print!("{}", pairalign_service::events::render_log(&read_log(&file)?));
        }
    }
    Ok(())
}
