use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use lace_core::api::{load_sessions, serve, AppState, ServerConfig, TickMode};
use tracing_subscriber::EnvFilter;

/// Session orchestration service over HTTP/JSON.
#[derive(Debug, Parser)]
#[command(name = "lace-server", version)]
struct Args {
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory for persisted sessions; existing sessions are reloaded.
    #[arg(long, env = "LACE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// `wall` advances background loops with real time, `manual` only on tick requests.
    #[arg(long, default_value = "manual")]
    tick_mode: TickMode,
    /// Default background generation cadence in virtual milliseconds.
    #[arg(long, default_value_t = lace_core::session::DEFAULT_CADENCE_MS)]
    cadence_ms: u64,
    /// Default canvas size, e.g. 512x512.
    #[arg(long, default_value = "512x512", value_parser = parse_canvas)]
    canvas: (u32, u32),
    /// Embed candidate PNGs as base64 in generate responses.
    #[arg(long)]
    inline_images: bool,
}

fn parse_canvas(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    Ok((w, h))
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    if args.cadence_ms == 0 {
        return Err("--cadence-ms must be positive".into());
    }

    let config = ServerConfig {
        data_dir: args.data_dir.clone(),
        tick_mode: args.tick_mode,
        cadence_ms: args.cadence_ms,
        canvas: args.canvas,
        inline_images: args.inline_images,
    };
    let sessions = match &args.data_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            load_sessions(dir)?
        }
        None => Vec::new(),
    };
    tracing::info!(loaded = sessions.len(), "sessions restored");
    let state = AppState::with_sessions(config, sessions);

    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    let addr = listener.local_addr()?;
    tracing::info!(%addr, tick_mode = ?args.tick_mode, "listening");
    // one machine-readable line, useful with port 0
    println!("listening on http://{addr}");
    serve(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
