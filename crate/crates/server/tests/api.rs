use serde_json::Value;
use std::net::UdpSocket;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};
use std::time::Duration;
use tokio::net::TcpListener;
use twin_core::link::LinkMode;
use twin_core::session::{Session, SessionConfig, SessionHandle};
use twin_core::{RobotModel, Scene};
use twin_server::udp::{run_controller, run_twin_endpoint, ControllerConfig, Target};
use twin_server::AppState;

struct Running {
    base: String,
    http: reqwest::Client,
    _stop: tokio::sync::oneshot::Sender<()>,
}

async fn start(cfg: SessionConfig) -> Running {
    let handle = SessionHandle::new(Session::new(RobotModel::canonical(), Scene::canonical(), cfg));
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(twin_server::serve(listener, AppState::new(handle, None), async {
        let _ = rx.await;
    }));
    Running { base, http: reqwest::Client::new(), _stop: tx }
}

impl Running {
    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        let text = r.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> Value {
        self.http.get(format!("{}{path}", self.base)).send().await.unwrap().json().await.unwrap()
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn scene_and_detach() {
    let s = start(SessionConfig::default()).await;
    let snap = s.get("/scene").await;
    assert_eq!(snap["scene"]["components"].as_array().unwrap().len(), 13);
    assert_eq!(snap["busy"], false);

    let (status, body) = s.post("/detach", serde_json::json!({"component_id": "cover"})).await;
    assert_eq!(status, 409);
    assert_eq!(body["error"], "precedence_violation");
    assert_eq!(body["blockers"].as_array().unwrap().len(), 4);

    let (status, body) = s.post("/detach", serde_json::json!({"component_id": "nope"})).await;
    assert_eq!((status, body["error"].as_str()), (404, Some("scene")));

    let (status, body) = s.post("/detach", serde_json::json!({"component_id": "cover_screw_1"})).await;
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["outcome"]["status"], "completed");
    let snap = s.get("/scene").await;
    let screw = snap["scene"]["components"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["id"] == "cover_screw_1")
        .unwrap()
        .clone();
    assert_eq!(screw["state"], "removed");
    assert_eq!(snap["records"], 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn second_command_while_executing_is_busy() {
    let s = start(SessionConfig { pace: Some(10.0), ..SessionConfig::default() }).await;
    let first = {
        let (http, url) = (s.http.clone(), format!("{}/detach", s.base));
        tokio::spawn(async move {
            http.post(url).json(&serde_json::json!({"component_id": "cover_screw_1"})).send().await.unwrap().status()
        })
    };
    tokio::time::sleep(Duration::from_millis(300)).await;
    assert_eq!(s.get("/scene").await["busy"], true);
    let (status, body) = s.post("/detach", serde_json::json!({"component_id": "cover_screw_2"})).await;
    assert_eq!((status, body["error"].as_str()), (409, Some("busy")));
    assert_eq!(first.await.unwrap().as_u16(), 200);
}

#[tokio::test(flavor = "multi_thread")]
async fn save_and_replay() {
    let s = start(SessionConfig::default()).await;
    let (status, body) = s.post("/sequence/save", Value::Null).await;
    assert_eq!((status, body["error"].as_str()), (409, Some("empty_session")));
    s.post("/detach", serde_json::json!({"component_id": "cover_screw_1"})).await;

    let a = s.http.post(format!("{}/sequence/save", s.base)).send().await.unwrap().text().await.unwrap();
    let b = s.http.post(format!("{}/sequence/save", s.base)).send().await.unwrap().text().await.unwrap();
    assert_eq!(a, b);

    let identity = serde_json::json!({
        "pose_update": {"transform": {"position": [0.0, 0.0, 0.0], "orientation": [1.0, 0.0, 0.0, 0.0]},
                        "timestamp_us": 0, "residual_rmse_m": 0.0}
    });
    let (status, report) = s.post("/sequence/replay", identity.clone()).await;
    assert_eq!(status, 200, "{report}");
    assert_eq!(report["entries"].as_array().unwrap().len(), 1);
    assert!(report["max_position_error_m"].as_f64().unwrap() < 1e-6);

    let mut other: Value = serde_json::from_str(&a).unwrap();
    other["scene_hash"] = "0".repeat(64).into();
    let mut req = identity;
    req["sequence"] = other;
    let (status, body) = s.post("/sequence/replay", req).await;
    assert_eq!((status, body["error"].as_str()), (422, Some("scene_mismatch")));
}

#[tokio::test(flavor = "multi_thread")]
async fn event_feed_starts_with_a_snapshot_then_heartbeats() {
    use futures::StreamExt;
    let s = start(SessionConfig::default()).await;
    let resp = s.http.get(format!("{}/events", s.base)).send().await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut stream = resp.bytes_stream();
    let mut buf = Vec::new();
    let mut lines: Vec<Value> = Vec::new();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
    while lines.len() < 2 && tokio::time::Instant::now() < deadline {
        let chunk = tokio::time::timeout(Duration::from_secs(3), stream.next()).await.unwrap().unwrap().unwrap();
        buf.extend_from_slice(&chunk);
        while let Some(p) = buf.iter().position(|b| *b == b'\n') {
            let line: Vec<u8> = buf.drain(..=p).collect();
            lines.push(serde_json::from_slice(&line).unwrap());
        }
    }
    assert_eq!(lines[0]["type"], "snapshot");
    assert_eq!(lines[1]["type"], "heartbeat");
    assert!(lines[1]["seq"].as_u64() > lines[0]["seq"].as_u64());
}

#[test]
fn remote_controller_follows_the_twin_target() {
    let model = RobotModel::canonical();
    let twin = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = twin.local_addr().unwrap();
    let mut goal = model.home;
    goal.q[0] += 0.5f64.to_radians();
    goal.track += 0.003;
    let target = Arc::new(Mutex::new(Target { q: goal, dout: 0 }));
    let stop = Arc::new(AtomicBool::new(false));
    let endpoint = {
        let (target, stop) = (target.clone(), stop.clone());
        std::thread::spawn(move || run_twin_endpoint(&twin, &target, &stop).unwrap())
    };
    let ctl = UdpSocket::bind("127.0.0.1:0").unwrap();
    ctl.connect(addr).unwrap();
    let cfg = ControllerConfig { cycle: Duration::from_millis(4), rpm: 300.0, cycles: Some(100) };
    let summary = run_controller(&model, &ctl, &cfg, &AtomicBool::new(false)).unwrap();
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    let stats = endpoint.join().unwrap();

    assert_eq!(summary.cycles, 100);
    assert!(stats.replies >= 90, "{stats:?}");
    assert_ne!(summary.link.mode, LinkMode::Faulted);
    // 0.5 deg at 0.1 deg per accepted reply, 3 mm at 1 mm.
    assert!(summary.sim.q_actual.max_abs_diff(&goal) < 1e-8, "{:?}", summary.sim.q_actual);
}
