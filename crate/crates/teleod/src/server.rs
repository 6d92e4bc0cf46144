//! WebSocket recording service.
//!
//! One tick loop owns the session. Client frames are queued and applied
//! between ticks in arrival order; a state frame is broadcast after every tick.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinHandle;

use pushplan::demo::{DemoLibrary, DEMO_EXTENSION};
use pushplan::{HybridState, SliderParams};

use crate::session::{SessionState, DEFAULT_TICK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMsg {
    Reset { target: [f64; 3] },
    Mouse { goal: [f64; 2] },
    Record { on: bool },
    Save { id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMsg {
    State { t: u64, x: [f64; 7], mode: String, recording: bool, target: [f64; 3] },
    Saved { path: String },
    Error { message: String },
}

impl ServerMsg {
    fn json(&self) -> String {
        serde_json::to_string(self).expect("server frames serialize")
    }

    fn state(s: &SessionState) -> Self {
        let x = s.state.to_vector();
        ServerMsg::State {
            t: s.tick,
            x: std::array::from_fn(|i| x[i]),
            mode: s.mode.to_string(),
            recording: s.recording,
            target: s.target.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub id: String,
    pub target: [f64; 3],
    pub n_switches: usize,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub params: SliderParams,
    pub x0: HybridState,
    pub demo_dir: PathBuf,
    pub dt_tick: f64,
}

impl ServerConfig {
    pub fn new(demo_dir: impl Into<PathBuf>, params: SliderParams) -> Self {
        Self { x0: crate::scripted::fixture_start(&params), params, demo_dir: demo_dir.into(), dt_tick: DEFAULT_TICK }
    }
}

type Reply = mpsc::UnboundedSender<String>;

#[derive(Clone)]
struct Shared {
    inbox: mpsc::UnboundedSender<(ClientMsg, Reply)>,
    frames: broadcast::Sender<String>,
    demo_dir: Arc<PathBuf>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !id.starts_with('.')
}

fn apply(session: &mut SessionState, msg: ClientMsg, reply: &Reply, demo_dir: &std::path::Path) {
    let answer = match msg {
        ClientMsg::Reset { target } => {
            session.reset(Vector3::from(target));
            None
        }
        ClientMsg::Mouse { goal } => {
            session.mouse_goal = Some(Vector2::from(goal));
            None
        }
        ClientMsg::Record { on } => {
            session.set_recording(on);
            None
        }
        ClientMsg::Save { id } if !valid_id(&id) => Some(ServerMsg::Error { message: format!("invalid demo id `{id}`") }),
        ClientMsg::Save { id } => match session.demonstration(&id) {
            None => Some(ServerMsg::Error { message: "nothing recorded".into() }),
            Some(demo) => {
                let path = demo_dir.join(format!("{id}{DEMO_EXTENSION}"));
                Some(match demo.save(&path) {
                    Ok(()) => ServerMsg::Saved { path: path.display().to_string() },
                    Err(e) => ServerMsg::Error { message: e.to_string() },
                })
            }
        },
    };
    if let Some(a) = answer {
        let _ = reply.send(a.json());
    }
}

async fn tick_loop(mut session: SessionState, mut inbox: mpsc::UnboundedReceiver<(ClientMsg, Reply)>, frames: broadcast::Sender<String>, demo_dir: Arc<PathBuf>) {
    let mut clock = tokio::time::interval(Duration::from_secs_f64(session.dt_tick));
    clock.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        clock.tick().await;
        loop {
            match inbox.try_recv() {
                Ok((msg, reply)) => apply(&mut session, msg, &reply, &demo_dir),
                Err(mpsc::error::TryRecvError::Empty) => break,
                Err(mpsc::error::TryRecvError::Disconnected) => return,
            }
        }
        if let Err(e) = session.tick() {
            let _ = frames.send(ServerMsg::Error { message: format!("simulation reset: {e}") }.json());
            let target = session.target;
            session.reset(target);
        }
        let _ = frames.send(ServerMsg::state(&session).json());
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Shared>) -> Response {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Shared) {
    let (mut tx, mut rx) = socket.split();
    let mut frames = shared.frames.subscribe();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();
    loop {
        let out = tokio::select! {
            incoming = rx.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    match serde_json::from_str::<ClientMsg>(text.as_str()) {
                        Ok(msg) => {
                            if shared.inbox.send((msg, reply_tx.clone())).is_err() {
                                return;
                            }
                            None
                        }
                        Err(e) => Some(ServerMsg::Error { message: format!("bad message: {e}") }.json()),
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => None,
            },
            frame = frames.recv() => match frame {
                Ok(f) => Some(f),
                Err(broadcast::error::RecvError::Lagged(_)) => None,
                Err(broadcast::error::RecvError::Closed) => return,
            },
            Some(reply) = reply_rx.recv() => Some(reply),
        };
        if let Some(text) = out {
            if tx.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
    }
}

async fn list_demos(State(shared): State<Shared>) -> Response {
    let dir = shared.demo_dir.as_ref().clone();
    let loaded = tokio::task::spawn_blocking(move || DemoLibrary::load_dir(dir)).await;
    match loaded {
        Ok(Ok(lib)) => Json(
            lib.demos
                .iter()
                .map(|d| DemoSummary { id: d.id.clone(), target: d.target.into(), n_switches: d.n_switches() })
                .collect::<Vec<_>>(),
        )
        .into_response(),
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// Starts the tick loop and returns the HTTP router serving `/ws` and `/demos`.
pub fn start(config: ServerConfig) -> (Router, JoinHandle<()>) {
    let mut session = SessionState::new(config.x0, config.params);
    session.dt_tick = config.dt_tick;
    let (inbox_tx, inbox_rx) = mpsc::unbounded_channel();
    let (frames, _) = broadcast::channel(256);
    let demo_dir = Arc::new(config.demo_dir);
    let ticker = tokio::spawn(tick_loop(session, inbox_rx, frames.clone(), demo_dir.clone()));
    let shared = Shared { inbox: inbox_tx, frames, demo_dir };
    let router = Router::new().route("/ws", get(ws_handler)).route("/demos", get(list_demos)).with_state(shared);
    (router, ticker)
}

/// Binds `addr` and serves in the background. Returns the bound address.
pub async fn spawn(config: ServerConfig, addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let (router, _ticker) = start(config);
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, router).await;
    });
    Ok((local, handle))
}
