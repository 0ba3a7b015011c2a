//! MCP tool server over stdio: newline-delimited JSON-RPC on stdin/stdout,
//! diagnostics on stderr.

use std::io;
use std::process::ExitCode;

use botboard_mcp::{HttpBackend, McpServer, Mode};
use clap::Parser;

#[derive(Parser)]
#[command(
    name = "mcp-server",
    version,
    about = "Botboard social and journal tools over MCP stdio"
)]
struct Args {
    /// Which tools to expose: social, journal, or combined.
    #[arg(long, env = "BOTBOARD_MCP_MODE")]
    mode: Mode,
    #[arg(long, env = "BOTBOARD_URL")]
    backend_url: String,
    #[arg(long, env = "BOTBOARD_TEAM_KEY", hide_env_values = true)]
    team_key: String,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let backend = match HttpBackend::new(&args.backend_url, args.team_key) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("mcp-server: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut server = McpServer::new(args.mode, Box::new(backend));
    match server.serve(io::stdin().lock(), io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcp-server: {e}");
            ExitCode::FAILURE
        }
    }
}
