//! Live training session: one human client drives the loop over a
//! WebSocket while the server runs the environment at a fixed tick.

use std::fs::OpenOptions;
use std::io::{self, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use mimi_core::envs::{EnvKind, EnvState, InterfaceParams};
use mimi_core::offline::{append_episode, write_episodes, EpisodeLog, EpisodeMeta, StepRecord};
use mimi_core::optimizer::{
    interface_log_name, reset_stream, save_run, save_run_noted, RunHistory, TrainConfig, Trainer,
};
use serde::Serialize;
use tungstenite::protocol::Role;
use tungstenite::{Message, WebSocket};

use crate::wire::{
    Command, EpisodeEnd, ErrorPayload, Hello, HelloAck, InterfaceSwap, MessageKind, RunEnd, StateUpdate,
    WireMessage,
};
use crate::BoxError;

pub const BIND_ENV: &str = "MIMI_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8732";
pub const TICK_HZ: f64 = 20.0;
pub const CLIENT_TIMEOUT: Duration = Duration::from_secs(5);

/// `$MIMI_BIND` if set, else the loopback default.
pub fn default_bind() -> String {
    std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_string())
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub env: EnvKind,
    pub train: TrainConfig,
    pub seed: u64,
    pub tick_hz: f64,
    pub client_timeout: Duration,
    pub out: PathBuf,
}

impl SessionConfig {
    pub fn new(env: EnvKind, train: TrainConfig, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            env,
            train,
            seed,
            tick_hz: TICK_HZ,
            client_timeout: CLIENT_TIMEOUT,
            out: out.into(),
        }
    }

    fn tick(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.tick_hz)
    }
}

#[derive(Debug, Clone)]
pub struct SessionReport {
    pub history: RunHistory,
    pub ticks: usize,
    /// Ticks that ended without a fresh command, or ran past their slot.
    pub missed_deadlines: usize,
    pub aborted: Option<String>,
}

/// A bound, not yet running session.
pub struct Server {
    listener: TcpListener,
    config: SessionConfig,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: SessionConfig) -> Result<Self, BoxError> {
        if !(config.tick_hz.is_finite() && config.tick_hz > 0.0) {
            return Err(format!("tick rate must be positive, got {}", config.tick_hz).into());
        }
        config.train.validate()?;
        let listener = TcpListener::bind(addr)?;
        Ok(Self { listener, config })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Waits for a client and runs the session to its budget or to the
    /// first fatal client event. Later connections are refused with an
    /// error frame while the session lives.
    pub fn run(self) -> Result<SessionReport, BoxError> {
        let Server { listener, config } = self;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let (first_tx, first_rx) = mpsc::channel();
        let gate = {
            let stop = Arc::clone(&stop);
            thread::spawn(move || gatekeeper(listener, first_tx, stop))
        };
        let result = first_rx
            .recv()
            .map_err(|_| BoxError::from("listener closed before a client connected"))
            .and_then(|stream| run_client(stream, &config));
        stop.store(true, Ordering::SeqCst);
        let _ = gate.join();
        result
    }
}

fn gatekeeper(listener: TcpListener, first: Sender<TcpStream>, stop: Arc<AtomicBool>) {
    let mut handed_over = false;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if !handed_over {
                    info!("client connected from {peer}");
                    handed_over = true;
                    if first.send(stream).is_err() {
                        return;
                    }
                } else {
                    info!("refusing second client {peer}");
                    refuse(stream);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

fn refuse(stream: TcpStream) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_read_timeout(Some(Duration::from_secs(2)));
    if let Ok(mut ws) = tungstenite::accept(stream) {
        let frame = WireMessage::new(
            MessageKind::Error,
            0,
            ErrorPayload {
                message: "session already has a client".into(),
            },
        );
        let _ = ws.send(Message::text(frame.to_text()));
        let _ = ws.close(None);
        let _ = ws.flush();
    }
}

enum Event {
    Message(WireMessage),
    Malformed(String),
    Closed,
}

fn reader(mut ws: WebSocket<TcpStream>, tx: Sender<Event>) {
    loop {
        let event = match ws.read() {
            Ok(Message::Text(text)) => match WireMessage::parse(&text) {
                Ok(m) => Event::Message(m),
                Err(e) => Event::Malformed(e),
            },
            Ok(Message::Binary(_)) => Event::Malformed("binary frames are not accepted".into()),
            Ok(Message::Close(_)) | Err(_) => {
                let _ = tx.send(Event::Closed);
                return;
            }
            Ok(_) => continue,
        };
        if tx.send(event).is_err() {
            return;
        }
    }
}

/// Why a session stopped early.
enum Stop {
    Abort(String),
    Fatal(BoxError),
}

impl<E: Into<BoxError>> From<E> for Stop {
    fn from(e: E) -> Self {
        Stop::Fatal(e.into())
    }
}

struct Session<'a> {
    config: &'a SessionConfig,
    ws: WebSocket<TcpStream>,
    events: Receiver<Event>,
    seq_out: u64,
    seq_in: Option<u64>,
    last_command: Vec<f64>,
    ticks: usize,
    missed: usize,
}

fn run_client(stream: TcpStream, config: &SessionConfig) -> Result<SessionReport, BoxError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let ws = tungstenite::accept(stream).map_err(|e| format!("handshake failed: {e}"))?;
    let raw = ws.get_ref().try_clone()?;
    let (tx, rx) = mpsc::channel();
    let read_half = WebSocket::from_raw_socket(raw, Role::Server, None);
    thread::spawn(move || reader(read_half, tx));

    let mut session = Session {
        config,
        ws,
        events: rx,
        seq_out: 0,
        seq_in: None,
        last_command: vec![0.0; config.env.command_dim()],
        ticks: 0,
        missed: 0,
    };
    let mut trainer = Trainer::new(config.env, config.train.clone(), config.seed)?;
    let outcome = session.handshake().and_then(|()| session.train(&mut trainer));
    let aborted = match outcome {
        Ok(()) => None,
        Err(Stop::Abort(reason)) => Some(reason),
        Err(Stop::Fatal(e)) => {
            session.shutdown();
            return Err(e);
        }
    };
    if let Some(reason) = &aborted {
        warn!("session aborted: {reason}");
        save_run_noted(&config.out, trainer.history(), Some(reason))?;
    }
    session.shutdown();
    Ok(SessionReport {
        history: trainer.into_history(),
        ticks: session.ticks,
        missed_deadlines: session.missed,
        aborted,
    })
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Session<'_> {
    fn send(&mut self, kind: MessageKind, payload: impl Serialize) -> Result<(), Stop> {
        self.seq_out += 1;
        let frame = WireMessage::new(kind, self.seq_out, payload);
        self.ws
            .send(Message::text(frame.to_text()))
            .map_err(|_| Stop::Abort("client disconnected".into()))
    }

    /// Sends an error frame and ends the session.
    fn fail(&mut self, message: String) -> Stop {
        let _ = self.send(
            MessageKind::Error,
            ErrorPayload {
                message: message.clone(),
            },
        );
        Stop::Abort(message)
    }

    fn shutdown(&mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
        let _ = self.ws.get_ref().shutdown(std::net::Shutdown::Both);
    }

    /// Next client message, or `None` at `deadline`.
    fn next_message(&mut self, deadline: Instant) -> Result<Option<WireMessage>, Stop> {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.events.recv_timeout(wait) {
            Ok(Event::Message(m)) => {
                if self.seq_in.is_some_and(|prev| m.seq <= prev) {
                    return Err(self.fail(format!("sequence number {} did not increase", m.seq)));
                }
                self.seq_in = Some(m.seq);
                Ok(Some(m))
            }
            Ok(Event::Malformed(e)) => Err(self.fail(e)),
            Ok(Event::Closed) | Err(RecvTimeoutError::Disconnected) => {
                Err(Stop::Abort("client disconnected".into()))
            }
            Err(RecvTimeoutError::Timeout) => Ok(None),
        }
    }

    fn handshake(&mut self) -> Result<(), Stop> {
        let deadline = Instant::now() + self.config.client_timeout;
        let Some(m) = self.next_message(deadline)? else {
            return Err(self.fail("no hello within the client timeout".into()));
        };
        if m.kind != MessageKind::Hello {
            return Err(self.fail(format!("expected hello, got {:?}", m.kind)));
        }
        let hello: Hello = m.payload_as().map_err(|e| self.fail(e))?;
        let env = self.config.env;
        if hello.env != env.name() {
            return Err(self.fail(format!("this session runs `{}`, not `{}`", env.name(), hello.env)));
        }
        let train = &self.config.train;
        let ack = HelloAck {
            env: env.name().into(),
            tick_hz: self.config.tick_hz,
            budget: train.budget,
            episodes_per_interface: train.episodes_per_interface,
            state_dim: env.state_dim(),
            command_dim: env.command_dim(),
        };
        self.send(MessageKind::Hello, ack)
    }

    fn train(&mut self, trainer: &mut Trainer) -> Result<(), Stop> {
        let per = self.config.train.episodes_per_interface;
        while !trainer.is_done() {
            let started = unix_now();
            let proposal = trainer.propose()?;
            let i = trainer.iteration();
            self.send(MessageKind::InterfaceSwap, InterfaceSwap { interface: i })?;
            let log_path = self.config.out.join(interface_log_name(i));
            start_log(&log_path, self.config.env)?;
            let rng = trainer.episode_rng();
            let mut resets = reset_stream(&rng);
            let mut episodes = Vec::with_capacity(per);
            for e in 0..per {
                let initial = EnvState::reset(self.config.env, &mut resets);
                let meta = EpisodeMeta {
                    episode_id: (i * per + e) as u64,
                    user_id: "live".into(),
                    condition_id: format!("interface-{i:03}"),
                    interface_id: format!("interface-{i:03}"),
                    seed: rng.seed(),
                    ..Default::default()
                };
                let ep = self.play_episode(i, &proposal.params, initial, meta)?;
                append_log(&log_path, &ep)?;
                self.send(
                    MessageKind::EpisodeEnd,
                    EpisodeEnd {
                        interface: i,
                        episode: ep.meta.episode_id,
                        steps: ep.len(),
                        state: ep.final_state().map(<[f64]>::to_vec).unwrap_or_default(),
                    },
                )?;
                episodes.push(ep);
            }
            trainer.record(&proposal, episodes, started)?;
            save_run(&self.config.out, trainer.history())?;
        }
        let interfaces = trainer.iteration();
        self.send(MessageKind::RunEnd, RunEnd { interfaces })
    }

    fn play_episode(
        &mut self,
        interface: usize,
        params: &InterfaceParams,
        initial: EnvState,
        mut meta: EpisodeMeta,
    ) -> Result<EpisodeLog, Stop> {
        meta.env_id = params.kind().name().to_string();
        meta.goal = initial.goal();
        let episode = meta.episode_id;
        let mut log = EpisodeLog::new(meta);
        let tick = self.config.tick();
        let mut state = initial;
        let mut last_fresh = Instant::now();
        let mut slot = Instant::now();
        while !state.is_terminal() {
            let t = state.timestep();
            self.send(
                MessageKind::StateUpdate,
                StateUpdate {
                    interface,
                    episode,
                    t,
                    state: state.observation(),
                    goal: state.goal(),
                },
            )?;
            let deadline = slot + tick;
            match self.await_command(episode, t, deadline)? {
                Some(command) => {
                    self.last_command = command;
                    last_fresh = Instant::now();
                }
                None => {
                    self.missed += 1;
                    if last_fresh.elapsed() > self.config.client_timeout {
                        return Err(self.fail(format!(
                            "no command for {:.1} s; episode {episode} discarded",
                            last_fresh.elapsed().as_secs_f64()
                        )));
                    }
                }
            }
            let command = self.last_command.clone();
            let action = params.apply(&command)?;
            let next = state.step(action)?;
            log.records.push(StepRecord {
                timestep: t as u32,
                state: state.observation(),
                command,
                action: action.to_vec(),
                next_state: next.observation(),
                reward: Some(next.step_reward()),
            });
            state = next;
            self.ticks += 1;
            let now = Instant::now();
            if now < deadline {
                thread::sleep(deadline - now);
                slot = deadline;
            } else {
                slot = now;
            }
        }
        log.meta.outcome = state.outcome();
        Ok(log)
    }

    /// The command for step `t` of `episode`, if it arrives by `deadline`.
    /// Commands for other steps are stale and dropped.
    fn await_command(&mut self, episode: u64, t: usize, deadline: Instant) -> Result<Option<Vec<f64>>, Stop> {
        while let Some(m) = self.next_message(deadline)? {
            match m.kind {
                MessageKind::Command => {
                    let c: Command = m.payload_as().map_err(|e| self.fail(e))?;
                    let dim = self.config.env.command_dim();
                    if c.command.len() != dim || c.command.iter().any(|v| !v.is_finite()) {
                        return Err(self.fail(format!("command must be {dim} finite numbers")));
                    }
                    if c.episode == episode && c.t == t {
                        return Ok(Some(c.command));
                    }
                }
                MessageKind::Hello => {
                    self.send(
                        MessageKind::Error,
                        ErrorPayload {
                            message: "already greeted; hello refused".into(),
                        },
                    )?;
                }
                other => return Err(self.fail(format!("unexpected {other:?} from client"))),
            }
        }
        Ok(None)
    }
}

fn start_log(path: &Path, env: EnvKind) -> Result<(), BoxError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write_episodes(&mut out, &env.log_header(), &[])?;
    io::Write::flush(&mut out)?;
    Ok(())
}

fn append_log(path: &Path, ep: &EpisodeLog) -> Result<(), BoxError> {
    let mut out = BufWriter::new(OpenOptions::new().append(true).open(path)?);
    append_episode(&mut out, ep)?;
    io::Write::flush(&mut out)?;
    Ok(())
}
