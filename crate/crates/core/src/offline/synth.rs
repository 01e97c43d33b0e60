//! Synthetic logged corpora standing in for human study data.

use std::f64::consts::TAU;

use super::{EpisodeLog, EpisodeMeta, Outcome, StepRecord};
use crate::envs::{run_episode, EnvKind, EnvState, InterfaceParams};
use crate::error::Result;
use crate::numerics::Rng;
use crate::sim_user::SimUser;

/// One simulated user per rotation angle `2πg/n`, each logging
/// `episodes` cursor episodes. Interface ids are the group indices.
pub fn cursor_theta_grid(n_groups: usize, episodes: usize, seed: u64) -> Result<Vec<EpisodeLog>> {
    let root = Rng::new(seed);
    let mut out = Vec::with_capacity(n_groups * episodes);
    for g in 0..n_groups {
        let theta = TAU * g as f64 / n_groups as f64;
        let params = InterfaceParams::cursor(theta)?;
        let mut user = SimUser::for_env(EnvKind::Cursor);
        let mut rng = root.fork(g as u64);
        for e in 0..episodes {
            let initial = EnvState::reset(EnvKind::Cursor, &mut rng);
            let meta = EpisodeMeta {
                episode_id: (g * episodes + e) as u64,
                user_id: format!("sim{g}"),
                condition_id: "theta_grid".into(),
                interface_id: g.to_string(),
                seed,
                ..Default::default()
            };
            out.push(run_episode(&params, initial, &mut user, &mut rng, meta)?);
        }
    }
    Ok(out)
}

/// Step budget of an assisted episode.
pub const ASSIST_STEPS: usize = 40;
/// Distance from the start to every goal.
pub const ASSIST_GOAL_DISTANCE: f64 = 0.35;
/// Leaving this radius around the start ends the episode as a crash.
pub const ASSIST_ARENA_RADIUS: f64 = 0.47;
/// Command noise of the assisted user.
pub const ASSIST_USER_NOISE: f64 = 1.5;
/// Strongest assistance level in the corpus.
pub const ASSIST_MAX_LEVEL: f64 = 0.9;

const ASSIST_GAIN: f64 = 0.04;

/// Assistance level of group `g` of `n`, evenly spaced in
/// `[0, ASSIST_MAX_LEVEL]`.
pub fn assistance_level(g: usize, n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        ASSIST_MAX_LEVEL * g as f64 / (n - 1) as f64
    }
}

/// A noisy user steering a point from the center of an arena toward a
/// hidden goal on a circle, through an assistant.
///
/// The user's command is the goal offset in units of the goal distance,
/// plus noise. The assistant estimates the goal direction from all past
/// commands and blends its own move toward that estimate with the current
/// command: `a_t = (1-α) x_t + α (ĝ_t - s_t) / d`. The state is the
/// point's position only. With strong assistance a command barely moves
/// the next state, yet it shapes every later one through `ĝ`.
///
/// Leaving the arena ends the episode; the crash site then counts as
/// occupied for the rest of the step budget, so a step's reward is minus
/// the distance to the goal and a crash step also carries the remaining
/// budget.
pub fn interventionist_corpus(n_groups: usize, episodes: usize, seed: u64) -> Vec<EpisodeLog> {
    let root = Rng::new(seed);
    let mut out = Vec::with_capacity(n_groups * episodes);
    let d = ASSIST_GOAL_DISTANCE;
    let c = [0.5, 0.5];
    for g in 0..n_groups {
        let alpha = assistance_level(g, n_groups);
        let mut rng = root.fork(g as u64);
        for e in 0..episodes {
            let phi = rng.uniform_in(0.0, TAU);
            let goal = [c[0] + d * phi.cos(), c[1] + d * phi.sin()];
            let mut ep = EpisodeLog::new(EpisodeMeta {
                episode_id: (g * episodes + e) as u64,
                user_id: format!("sim{g}"),
                condition_id: "assist".into(),
                interface_id: format!("{alpha:.3}"),
                env_id: "assisted_point".into(),
                seed,
                goal: goal.to_vec(),
                outcome: Some(Outcome::Timeout),
            });
            let mut s = c;
            let mut evidence = [0.0_f64; 2];
            for t in 0..ASSIST_STEPS {
                let x = [
                    (goal[0] - s[0]) / d + ASSIST_USER_NOISE * rng.normal(),
                    (goal[1] - s[1]) / d + ASSIST_USER_NOISE * rng.normal(),
                ];
                let norm = evidence[0].hypot(evidence[1]);
                let guided = if norm > 0.0 {
                    let est = [c[0] + d * evidence[0] / norm, c[1] + d * evidence[1] / norm];
                    [(est[0] - s[0]) / d, (est[1] - s[1]) / d]
                } else {
                    [0.0, 0.0]
                };
                evidence[0] += s[0] + d * x[0] - c[0];
                evidence[1] += s[1] + d * x[1] - c[1];
                let a = [
                    (1.0 - alpha) * x[0] + alpha * guided[0],
                    (1.0 - alpha) * x[1] + alpha * guided[1],
                ];
                let next = [s[0] + ASSIST_GAIN * a[0], s[1] + ASSIST_GAIN * a[1]];
                let dist = (goal[0] - next[0]).hypot(goal[1] - next[1]);
                let crashed = (next[0] - c[0]).hypot(next[1] - c[1]) > ASSIST_ARENA_RADIUS;
                let held = if crashed { (ASSIST_STEPS - t) as f64 } else { 1.0 };
                ep.records.push(StepRecord {
                    timestep: t as u32,
                    state: s.to_vec(),
                    command: x.to_vec(),
                    action: a.to_vec(),
                    next_state: next.to_vec(),
                    reward: Some(-dist * held),
                });
                s = next;
                if crashed {
                    ep.meta.outcome = Some(Outcome::Failure);
                    break;
                }
            }
            out.push(ep);
        }
    }
    out
}
