#![allow(dead_code)]

use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::sync::{Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use mimi_cli::wire::{Command, EpisodeEnd, Hello, InterfaceSwap, StateUpdate};
use mimi_cli::{BoxError, MessageKind, Server, SessionConfig, SessionReport, WireMessage};
use mimi_core::envs::{Commander, CursorState, EnvKind, EnvState};
use mimi_core::mi_estimator::EstimatorConfig;
use mimi_core::numerics::Rng;
use mimi_core::optimizer::{reset_stream, TrainConfig};
use mimi_core::sim_user::SimUser;
use serde::Serialize;
use tungstenite::{Message, WebSocket};

static SERIAL: Mutex<()> = Mutex::new(());

/// Session tests are timing sensitive; run them one at a time.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn cursor_config(out: &Path, budget: usize, episodes: usize, tick_hz: f64) -> SessionConfig {
    let mut train = TrainConfig::for_env(EnvKind::Cursor, budget);
    train.episodes_per_interface = episodes;
    train.random_phase = train.random_phase.min(budget);
    train.estimator = EstimatorConfig {
        steps: 200,
        ..EstimatorConfig::default()
    };
    let mut config = SessionConfig::new(EnvKind::Cursor, train, 7, out);
    config.tick_hz = tick_hz;
    config
}

pub fn start(config: SessionConfig) -> (SocketAddr, JoinHandle<Result<SessionReport, BoxError>>) {
    let server = Server::bind("127.0.0.1:0", config).unwrap();
    let addr = server.local_addr().unwrap();
    (addr, thread::spawn(move || server.run()))
}

pub struct Client {
    pub ws: WebSocket<TcpStream>,
    seq: u64,
    /// Every text frame received, verbatim.
    pub frames: Vec<String>,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_nodelay(true).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
        let (ws, _) = tungstenite::client(format!("ws://{addr}/"), stream).unwrap();
        Self {
            ws,
            seq: 0,
            frames: Vec::new(),
        }
    }

    pub fn send(&mut self, kind: MessageKind, payload: impl Serialize) {
        self.seq += 1;
        let m = WireMessage::new(kind, self.seq, payload);
        self.ws.send(Message::text(m.to_text())).unwrap();
    }

    pub fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::text(text.to_string())).unwrap();
    }

    pub fn hello(&mut self, env: &str) -> WireMessage {
        self.send(MessageKind::Hello, Hello { env: env.into() });
        self.recv().expect("hello reply")
    }

    /// Next text frame, or `None` once the server has closed.
    pub fn recv(&mut self) -> Option<WireMessage> {
        loop {
            match self.ws.read() {
                Ok(Message::Text(text)) => {
                    self.frames.push(text.to_string());
                    return Some(WireMessage::parse(&text).unwrap());
                }
                Ok(Message::Close(_)) | Err(_) => return None,
                Ok(_) => continue,
            }
        }
    }

    pub fn command(&mut self, episode: u64, t: usize, command: Vec<f64>) {
        self.send(MessageKind::Command, Command { episode, t, command });
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}

fn cursor_state(u: &[f64], t: usize) -> EnvState {
    let mut s = CursorState::new([u[0], u[1]], [u[2], u[3]]);
    s.timestep = t;
    EnvState::Cursor(s)
}

/// Where the scripted user's noise comes from.
#[derive(Debug, Clone, Copy)]
pub enum Noise {
    /// A private stream.
    Own(u64),
    /// The stream the in-process loop gives its user for this session
    /// seed, so episodes match the in-process ones exactly.
    Replay(u64),
}

/// Plays the whole session as a simulated cursor user rebuilt from the
/// state updates. Returns the frames received.
pub fn play_sim_user(client: &mut Client, noise: Noise) -> Vec<WireMessage> {
    let mut user = SimUser::for_env(EnvKind::Cursor);
    let (Noise::Own(seed) | Noise::Replay(seed)) = noise;
    let mut rng = Rng::new(seed);
    let mut resets = reset_stream(&rng);
    let mut prev: Option<(u64, EnvState, Vec<f64>)> = None;
    let mut seen = Vec::new();
    while let Some(m) = client.recv() {
        seen.push(m.clone());
        match m.kind {
            MessageKind::InterfaceSwap => {
                let swap: InterfaceSwap = m.payload_as().unwrap();
                if let Noise::Replay(seed) = noise {
                    rng = Rng::new(seed).fork(2_000 + swap.interface as u64);
                    resets = reset_stream(&rng);
                }
                Commander::on_interface_swap(&mut user);
                prev = None;
            }
            MessageKind::StateUpdate => {
                let u: StateUpdate = m.payload_as().unwrap();
                let state = cursor_state(&u.state, u.t);
                match &prev {
                    Some((ep, s, c)) if *ep == u.episode => user.observe(s, c, &state),
                    _ => {
                        if let Noise::Replay(_) = noise {
                            let reset = EnvState::reset(EnvKind::Cursor, &mut resets);
                            assert_eq!(reset.observation(), u.state, "replay out of step");
                        }
                        user.begin_episode(&state)
                    }
                }
                let c = user.command(&state, &mut rng);
                client.command(u.episode, u.t, c.clone());
                prev = Some((u.episode, state, c));
            }
            MessageKind::EpisodeEnd => {
                let e: EpisodeEnd = m.payload_as().unwrap();
                if let Some((ep, s, c)) = prev.take() {
                    if ep == e.episode {
                        user.observe(&s, &c, &cursor_state(&e.state, s.timestep() + 1));
                    }
                }
            }
            MessageKind::RunEnd => break,
            MessageKind::Error => panic!("server error: {:?}", m.payload),
            _ => {}
        }
    }
    seen
}
