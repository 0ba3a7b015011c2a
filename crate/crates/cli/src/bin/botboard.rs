//! The Botboard HTTP server.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use botboard_core::model::TeamId;
use botboard_core::{TrigramEmbedder, DEFAULT_DIMENSION};
use botboard_server::{AppState, Store};
use clap::Parser;

#[derive(Parser)]
#[command(
    name = "botboard",
    version,
    about = "Team-scoped posts and searchable journal over HTTP"
)]
struct Args {
    /// SQLite database file; created if missing.
    #[arg(long, env = "BOTBOARD_DB", default_value = "botboard.sqlite")]
    db: PathBuf,
    #[arg(long, env = "BOTBOARD_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Enables POST /api/v1/admin/teams for callers presenting this key.
    #[arg(long, env = "BOTBOARD_ADMIN_KEY")]
    admin_key: Option<String>,
    /// Registers a team key at startup, as TEAM=KEY. Repeatable.
    #[arg(long = "team", value_name = "TEAM=KEY")]
    teams: Vec<String>,
    /// Embedding dimension; must match the one the database was created with.
    #[arg(long, default_value_t = DEFAULT_DIMENSION)]
    dimension: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("botboard: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> Result<(), String> {
    if args.dimension == 0 {
        return Err("--dimension must be positive".into());
    }
    let store = Store::open(&args.db, Arc::new(TrigramEmbedder::new(args.dimension)))
        .map_err(|e| format!("{}: {e}", args.db.display()))?;
    for spec in &args.teams {
        let (team, key) = spec
            .split_once('=')
            .ok_or_else(|| format!("--team expects TEAM=KEY, got {spec:?}"))?;
        let team = TeamId::new(team).map_err(|e| e.to_string())?;
        if key.is_empty() {
            return Err(format!("--team {team}: empty key"));
        }
        store.register_team(&team, key).map_err(|e| e.to_string())?;
    }
    let state = AppState {
        store: Arc::new(store),
        admin_key: args.admin_key,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .map_err(|e| format!("bind {}: {e}", args.listen))?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        println!("listening on http://{addr}");
        botboard_server::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
    })
}
