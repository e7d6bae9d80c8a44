use anyhow::Context;
use clap::Parser;
use std::net::UdpSocket;
use std::path::PathBuf;
use tokio::net::TcpListener;
use twin_core::session::{Session, SessionConfig, SessionHandle};
use twin_core::{RobotModel, Scene};
use twin_server::{AppState, DEFAULT_HTTP_ADDR, DEFAULT_LINK_ADDR};

#[derive(Parser, Debug)]
#[command(name = "twin-server", about = "Digital twin session service")]
struct Args {
    /// UDP address a remote controller (robotsim) sends its frames to.
    #[arg(long, default_value = DEFAULT_LINK_ADDR)]
    listen: String,
    /// Do not open the UDP link endpoint.
    #[arg(long)]
    no_link: bool,
    /// HTTP address of the session API.
    #[arg(long, default_value = DEFAULT_HTTP_ADDR)]
    http: String,
    #[arg(long, default_value_t = 12)]
    cycle_ms: u64,
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    #[arg(long, default_value_t = 1.0)]
    pace: f64,
    /// Robot fixture; the built-in model when omitted.
    #[arg(long)]
    robot: Option<PathBuf>,
    /// Scene fixture; the built-in pack when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Directory saved sequences are also written to.
    #[arg(long)]
    sequence_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    twin_server::init_logging();
    let args = Args::parse();
    anyhow::ensure!((4..=100).contains(&args.cycle_ms), "--cycle-ms must be within 4..=100");
    let model = match &args.robot {
        Some(p) => RobotModel::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RobotModel::canonical(),
    };
    let scene = match &args.scene {
        Some(p) => Scene::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Scene::canonical(),
    };
    let cfg = SessionConfig {
        cycle_ms: args.cycle_ms,
        pace: (args.pace > 0.0).then_some(args.pace),
        ..SessionConfig::default()
    };
    tracing::info!("scene {} ({})", scene.evb_type_id(), scene.scene_hash());
    let handle = SessionHandle::new(Session::new(model, scene, cfg));

    let background = if args.no_link {
        None
    } else {
        let socket = UdpSocket::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
        tracing::info!("link endpoint on udp://{}", socket.local_addr()?);
        Some(twin_server::spawn_link_endpoint(&handle, socket))
    };

    let listener = TcpListener::bind(&args.http).await.with_context(|| format!("binding {}", args.http))?;
    tracing::info!("session API on http://{}", twin_server::local_addr(&listener));
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    };
    twin_server::serve(listener, AppState::new(handle, args.sequence_dir), shutdown).await?;
    if let Some(b) = background {
        b.shutdown();
    }
    Ok(())
}
