//! Service side of the twin: the HTTP/JSON session API and the UDP link
//! endpoints.

pub mod api;
pub mod udp;

use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use tokio::net::TcpListener;
use twin_core::session::SessionHandle;

pub use api::{router, AppState};

pub const DEFAULT_HTTP_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_LINK_ADDR: &str = "0.0.0.0:49152";
pub const HEARTBEAT: Duration = Duration::from_secs(1);

/// Log filter from `TWIN_LOG`, `info` when unset.
pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("TWIN_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

/// Background pieces that outlive a single request.
pub struct Background {
    stop: Arc<AtomicBool>,
    threads: Vec<std::thread::JoinHandle<()>>,
}

impl Background {
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads {
            let _ = t.join();
        }
    }
}

/// Start the UDP endpoint a remote controller connects to. It mirrors the
/// session's joint state.
pub fn spawn_link_endpoint(handle: &SessionHandle, socket: UdpSocket) -> Background {
    let stop = Arc::new(AtomicBool::new(false));
    let target = Arc::new(Mutex::new(udp::Target {
        q: handle.snapshot().q,
        dout: handle.snapshot().din,
    }));
    let tracker = {
        let (handle, target, stop) = (handle.clone(), target.clone(), stop.clone());
        std::thread::spawn(move || udp::track_session(&handle, target, stop))
    };
    let endpoint = {
        let stop = stop.clone();
        std::thread::spawn(move || match udp::run_twin_endpoint(&socket, &target, &stop) {
            Ok(s) => tracing::info!("link endpoint closed after {} frames", s.frames),
            Err(e) => tracing::error!("link endpoint: {e}"),
        })
    };
    Background { stop, threads: vec![tracker, endpoint] }
}

/// Serve the API on `listener` until `shutdown` resolves, with a
/// heartbeat on the event feed.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let handle = state.handle.clone();
    let beat = tokio::spawn(async move {
        let mut tick = tokio::time::interval(HEARTBEAT);
        tick.tick().await;
        loop {
            tick.tick().await;
            handle.heartbeat();
        }
    });
    let r = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    beat.abort();
    r
}

pub fn local_addr(l: &TcpListener) -> SocketAddr {
    l.local_addr().expect("bound listener")
}
