use anyhow::Context;
use clap::Parser;
use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;
use twin_core::RobotModel;
use twin_server::udp::{run_controller, ControllerConfig};

#[derive(Parser, Debug)]
#[command(name = "robotsim", about = "Simulated robot controller speaking the link protocol")]
struct Args {
    /// UDP address of the twin's link endpoint.
    #[arg(long, default_value = "127.0.0.1:49152")]
    connect: String,
    #[arg(long, default_value_t = 12)]
    cycle_ms: u64,
    #[arg(long)]
    robot: Option<std::path::PathBuf>,
    /// Screw speed when the twin switches the screwdriver on.
    #[arg(long, default_value_t = 300.0)]
    rpm: f64,
    /// Stop after this many cycles.
    #[arg(long)]
    cycles: Option<u64>,
}

fn main() -> anyhow::Result<()> {
    twin_server::init_logging();
    let args = Args::parse();
    anyhow::ensure!((4..=100).contains(&args.cycle_ms), "--cycle-ms must be within 4..=100");
    let model = match &args.robot {
        Some(p) => RobotModel::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RobotModel::canonical(),
    };
    let socket = UdpSocket::bind("0.0.0.0:0")?;
    socket.connect(&args.connect).with_context(|| format!("connecting to {}", args.connect))?;
    tracing::info!("controller {} -> {}", socket.local_addr()?, args.connect);
    let stop = Arc::new(AtomicBool::new(false));
    let cfg = ControllerConfig {
        cycle: Duration::from_millis(args.cycle_ms),
        rpm: args.rpm,
        cycles: args.cycles,
    };
    let summary = run_controller(&model, &socket, &cfg, &stop)?;
    stop.store(true, Ordering::Relaxed);
    tracing::info!(
        "{} cycles, link {:?}, {} accepted, {} missed",
        summary.cycles,
        summary.link.mode,
        summary.link.stats.accepted,
        summary.link.stats.missed
    );
    Ok(())
}
