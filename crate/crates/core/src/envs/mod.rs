//! Interactive tasks, their parametric interfaces, and ground-truth rewards.
//!
//! Rewards here are for evaluation only. Nothing in [`crate::optimizer`]
//! reads them.

mod cursor;
mod lander;

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cursor::{
    cursor_interface, cursor_reward, cursor_step, cursor_step_reward, CursorState, CURSOR_GAIN,
    CURSOR_MAX_STEPS, HIT_RADIUS,
};
pub use lander::{
    lander_interface, lander_reward, lander_step, lander_terminal_reward, lateral_direction,
    main_throttle, LanderState, LanderStatus, GRAVITY, LANDER_DT, LANDER_MAX_STEPS, LANDING_BONUS,
    LATERAL_DEAD_ZONE, MAIN_THRUST, SAFE_ANGLE, SAFE_SPEED, SIDE_FORCE, SIDE_TORQUE,
    START_HEIGHT, WORLD_HALF_WIDTH, WORLD_HEIGHT, ZONE_HALF_WIDTH, ZONE_RANGE,
};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::offline::{EpisodeLog, EpisodeMeta, LogHeader, Outcome, StepRecord, Widths};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Cursor,
    Lander,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Cursor => "cursor",
            EnvKind::Lander => "lander",
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            EnvKind::Cursor => 4,
            EnvKind::Lander => 3,
        }
    }

    pub fn command_dim(self) -> usize {
        match self {
            EnvKind::Cursor => 2,
            EnvKind::Lander => 4,
        }
    }

    pub fn action_dim(self) -> usize {
        2
    }

    pub fn interface_dim(self) -> usize {
        match self {
            EnvKind::Cursor => 1,
            EnvKind::Lander => 8,
        }
    }

    /// Number of uniformly random interfaces before the surrogate takes over.
    pub fn random_phase(self) -> usize {
        match self {
            EnvKind::Cursor => 5,
            EnvKind::Lander => 3,
        }
    }

    pub fn max_steps(self) -> usize {
        match self {
            EnvKind::Cursor => CURSOR_MAX_STEPS,
            EnvKind::Lander => LANDER_MAX_STEPS,
        }
    }

    /// Per-coordinate box for θ. The cursor angle is periodic on `[0, 2π)`.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            EnvKind::Cursor => (0.0, TAU),
            EnvKind::Lander => (-1.0, 1.0),
        }
    }

    pub fn widths(self) -> Widths {
        Widths {
            state: self.state_dim(),
            command: self.command_dim(),
            action: self.action_dim(),
        }
    }

    pub fn log_header(self) -> LogHeader {
        LogHeader::new(self.name(), self.widths())
    }

    pub fn random_params(self, rng: &mut Rng) -> InterfaceParams {
        let (lo, hi) = self.bounds();
        let theta = (0..self.interface_dim()).map(|_| rng.uniform_in(lo, hi)).collect();
        InterfaceParams { kind: self, theta }
    }

    /// Ground-truth episode reward.
    pub fn episode_reward(self, episode: &EpisodeLog) -> Result<f64> {
        match self {
            EnvKind::Cursor => cursor_reward(episode),
            EnvKind::Lander => Ok(lander_reward(episode)),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cursor" => Ok(EnvKind::Cursor),
            "lander" => Ok(EnvKind::Lander),
            other => Err(Error::contract(format!("unknown environment `{other}`"))),
        }
    }
}

/// Interface parameters θ for one environment family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceParams {
    kind: EnvKind,
    theta: Vec<f64>,
}

impl InterfaceParams {
    /// Validates length and finiteness; wraps the cursor angle into
    /// `[0, 2π)` and clamps lander entries to `[-1, 1]`.
    pub fn new(kind: EnvKind, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != kind.interface_dim() {
            return Err(Error::DimensionMismatch {
                expected: kind.interface_dim(),
                got: theta.len(),
            });
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "interface parameters",
                index: i,
            });
        }
        let theta = match kind {
            EnvKind::Cursor => theta.into_iter().map(|a| a.rem_euclid(TAU)).collect(),
            EnvKind::Lander => theta.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
        };
        Ok(Self { kind, theta })
    }

    pub fn cursor(angle: f64) -> Result<Self> {
        Self::new(EnvKind::Cursor, vec![angle])
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn apply(&self, command: &[f64]) -> Result<[f64; 2]> {
        if command.len() != self.kind.command_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.kind.command_dim(),
                got: command.len(),
            });
        }
        Ok(match self.kind {
            EnvKind::Cursor => cursor_interface(self.theta[0], [command[0], command[1]]),
            EnvKind::Lander => lander_interface(&self.theta, command),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvState {
    Cursor(CursorState),
    Lander(LanderState),
}

impl EnvState {
    pub fn reset(kind: EnvKind, rng: &mut Rng) -> Self {
        match kind {
            EnvKind::Cursor => EnvState::Cursor(CursorState::reset(rng)),
            EnvKind::Lander => EnvState::Lander(LanderState::reset(rng)),
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            EnvState::Cursor(_) => EnvKind::Cursor,
            EnvState::Lander(_) => EnvKind::Lander,
        }
    }

    /// The state exposed to the estimator.
    pub fn observation(&self) -> Vec<f64> {
        match self {
            EnvState::Cursor(s) => s.observation(),
            EnvState::Lander(s) => s.observation(),
        }
    }

    /// Cursor target or lander zone center.
    pub fn goal(&self) -> Vec<f64> {
        match self {
            EnvState::Cursor(s) => s.target.to_vec(),
            EnvState::Lander(s) => vec![s.zone_center],
        }
    }

    pub fn timestep(&self) -> usize {
        match self {
            EnvState::Cursor(s) => s.timestep,
            EnvState::Lander(s) => s.timestep,
        }
    }

    pub fn is_terminal(&self) -> bool {
        match self {
            EnvState::Cursor(s) => s.is_terminal(),
            EnvState::Lander(s) => s.is_terminal(),
        }
    }

    pub fn step(&self, action: [f64; 2]) -> Result<EnvState> {
        Ok(match self {
            EnvState::Cursor(s) => EnvState::Cursor(cursor_step(s, action)?),
            EnvState::Lander(s) => EnvState::Lander(lander_step(s, action)?),
        })
    }

    /// Reward attached to the transition into `self`.
    pub fn step_reward(&self) -> f64 {
        match self {
            EnvState::Cursor(s) => cursor_step_reward(s),
            EnvState::Lander(s) if s.is_terminal() => {
                lander_terminal_reward(s.status, s.position[0], s.zone_center)
            }
            EnvState::Lander(_) => 0.0,
        }
    }

    pub fn outcome(&self) -> Option<Outcome> {
        match self {
            EnvState::Cursor(s) if s.hit() => Some(Outcome::Success),
            EnvState::Cursor(s) if s.is_terminal() => Some(Outcome::Timeout),
            EnvState::Cursor(_) => None,
            EnvState::Lander(s) => s.status.outcome(),
        }
    }

    pub fn as_cursor(&self) -> Option<&CursorState> {
        match self {
            EnvState::Cursor(s) => Some(s),
            EnvState::Lander(_) => None,
        }
    }

    pub fn as_lander(&self) -> Option<&LanderState> {
        match self {
            EnvState::Lander(s) => Some(s),
            EnvState::Cursor(_) => None,
        }
    }
}

/// Anything that issues commands: a simulated user, an oracle, a human
/// behind a socket.
pub trait Commander {
    /// Called once before the first step of every episode.
    fn begin_episode(&mut self, _initial: &EnvState) {}

    /// Called when a different interface is about to be used.
    fn on_interface_swap(&mut self) {}

    fn command(&mut self, state: &EnvState, rng: &mut Rng) -> Vec<f64>;

    /// Called after every step with the command that produced it.
    fn observe(&mut self, _state: &EnvState, _command: &[f64], _next: &EnvState) {}
}

/// Runs one episode from `initial` to termination.
pub fn run_episode(
    params: &InterfaceParams,
    initial: EnvState,
    commander: &mut dyn Commander,
    rng: &mut Rng,
    meta: EpisodeMeta,
) -> Result<EpisodeLog> {
    if initial.kind() != params.kind() {
        return Err(Error::contract("interface family does not match environment"));
    }
    let mut meta = meta;
    meta.env_id = params.kind().name().to_string();
    meta.goal = initial.goal();
    let mut log = EpisodeLog::new(meta);
    let mut state = initial;
    commander.begin_episode(&state);
    while !state.is_terminal() {
        let command = commander.command(&state, rng);
        let action = params.apply(&command)?;
        let next = state.step(action)?;
        commander.observe(&state, &command, &next);
        log.records.push(StepRecord {
            timestep: state.timestep() as u32,
            state: state.observation(),
            command,
            action: action.to_vec(),
            next_state: next.observation(),
            reward: Some(next.step_reward()),
        });
        state = next;
    }
    log.meta.outcome = state.outcome();
    Ok(log)
}

/// Knows the true interface and inverts it exactly: the upper bound on
/// what any user can achieve.
#[derive(Debug, Clone)]
pub struct OracleCommander {
    params: InterfaceParams,
}

impl OracleCommander {
    pub fn new(params: InterfaceParams) -> Self {
        Self { params }
    }
}

impl Commander for OracleCommander {
    fn command(&mut self, state: &EnvState, _rng: &mut Rng) -> Vec<f64> {
        let desired = crate::sim_user::intended_action(state);
        match self.params.kind() {
            EnvKind::Cursor => cursor_interface(-self.params.theta()[0], desired).to_vec(),
            EnvKind::Lander => crate::sim_user::ridge_preimage(self.params.theta(), desired)
                .map(|x| x.to_vec())
                .unwrap_or_else(|| vec![0.0; 4]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    #[test]
    fn params_validate() {
        assert!(InterfaceParams::new(EnvKind::Cursor, vec![0.1, 0.2]).is_err());
        assert!(InterfaceParams::new(EnvKind::Lander, vec![f64::NAN; 8]).is_err());
        let p = InterfaceParams::new(EnvKind::Lander, vec![3.0, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(&p.theta()[..3], &[1.0, -1.0, 0.5]);
        let c = InterfaceParams::cursor(-0.5).unwrap();
        assert!((c.theta()[0] - (TAU - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn oracle_always_hits_cursor_target() {
        let mut rng = Rng::new(3);
        for _ in 0..30 {
            let p = EnvKind::Cursor.random_params(&mut rng);
            let init = EnvState::reset(EnvKind::Cursor, &mut rng);
            let mut oracle = OracleCommander::new(p.clone());
            let ep = run_episode(&p, init, &mut oracle, &mut rng, EpisodeMeta::default()).unwrap();
            assert_eq!(ep.meta.outcome, Some(Outcome::Success));
            assert!(ep.len() <= 50, "took {} steps", ep.len());
        }
    }

    #[test]
    fn episode_log_is_consistent() {
        let mut rng = Rng::new(9);
        let p = EnvKind::Lander.random_params(&mut rng);
        let init = EnvState::reset(EnvKind::Lander, &mut rng);
        let mut oracle = OracleCommander::new(p.clone());
        let ep = run_episode(&p, init, &mut oracle, &mut rng, EpisodeMeta::default()).unwrap();
        ep.validate().unwrap();
        assert!(ep.meta.outcome.is_some());
        assert_eq!(ep.meta.env_id, "lander");
        assert!(ep.len() <= LANDER_MAX_STEPS);
        let step_sum: f64 = ep.records.iter().map(|r| r.reward.unwrap()).sum();
        assert!((step_sum - EnvKind::Lander.episode_reward(&ep).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cursor_reward_matches_per_step_sum() {
        let mut rng = Rng::new(21);
        struct Wander;
        impl Commander for Wander {
            fn command(&mut self, _s: &EnvState, rng: &mut Rng) -> Vec<f64> {
                vec![rng.normal(), rng.normal()]
            }
        }
        for _ in 0..5 {
            let p = EnvKind::Cursor.random_params(&mut rng);
            let init = EnvState::reset(EnvKind::Cursor, &mut rng);
            let ep = run_episode(&p, init, &mut Wander, &mut rng, EpisodeMeta::default()).unwrap();
            let mut brute = 0.0;
            for r in &ep.records {
                let s = &r.next_state;
                brute += -((s[0] - s[2]).powi(2) + (s[1] - s[3]).powi(2)).sqrt();
            }
            assert!((cursor_reward(&ep).unwrap() - brute).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm_and_composes(a in 0.0..TAU, b in 0.0..TAU, x0 in -2.0..2.0f64, x1 in -2.0..2.0f64) {
            let r = cursor_interface(a, [x0, x1]);
            prop_assert!((r[0].hypot(r[1]) - x0.hypot(x1)).abs() < 1e-12);
            let twice = cursor_interface(b, r);
            let once = cursor_interface(a + b, [x0, x1]);
            prop_assert!((twice[0] - once[0]).abs() < 1e-12 && (twice[1] - once[1]).abs() < 1e-12);
        }

        #[test]
        fn lander_interface_matches_naive(theta in proptest::collection::vec(-1.0..1.0f64, 8), x in proptest::collection::vec(-2.0..2.0f64, 4)) {
            let got = lander_interface(&theta, &x);
            for r in 0..2 {
                let mut acc = 0.0;
                for j in 0..4 {
                    acc += theta[r * 4 + j] * x[j];
                }
                let want = if acc > 1.0 { 1.0 } else if acc < -1.0 { -1.0 } else { acc };
                prop_assert!((got[r] - want).abs() < 1e-12);
            }
        }

        #[test]
        fn lander_energy_bounded_and_box_enforced(
            seed in 0u64..1000,
            actions in proptest::collection::vec((-1.5..1.5f64, -1.5..1.5f64), 1..200),
        ) {
            let mut rng = Rng::new(seed);
            let mut s = LanderState::reset(&mut rng);
            for (a0, a1) in actions {
                if s.is_terminal() {
                    break;
                }
                let n = lander_step(&s, [a0, a1]).unwrap();
                // Thruster impulse per step, gravity removed.
                let dv = ((n.velocity[0] - s.velocity[0]).powi(2)
                    + (n.velocity[1] - s.velocity[1] + GRAVITY * LANDER_DT).powi(2))
                .sqrt();
                prop_assert!(dv <= (MAIN_THRUST + SIDE_FORCE) * LANDER_DT + 1e-12);
                let inside = n.position[0].abs() <= WORLD_HALF_WIDTH
                    && n.position[1] >= 0.0
                    && n.position[1] <= WORLD_HEIGHT;
                prop_assert!(inside || n.is_terminal());
                s = n;
            }
        }
    }
}
