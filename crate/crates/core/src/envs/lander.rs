//! Simplified lunar lander: a point mass with attitude.
//!
//! The action is `[main, lateral]`. The main engine fires iff `main > 0`,
//! pushing along the body-up axis with `MAIN_THRUST * min(main, 1)`. The
//! lateral channel has a dead zone: below `-0.5` fires the left thruster,
//! above `0.5` the right one. A lateral thruster pushes sideways along the
//! body-right axis with `SIDE_FORCE` and turns the craft with `SIDE_TORQUE`
//! (the right thruster rotates clockwise). Integration is semi-implicit
//! Euler with unit mass and inertia.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::offline::{EpisodeLog, Outcome};

pub const LANDER_DT: f64 = 0.02;
pub const GRAVITY: f64 = 9.8;
pub const MAIN_THRUST: f64 = 15.0;
pub const SIDE_TORQUE: f64 = 4.0;
pub const SIDE_FORCE: f64 = 2.0;
pub const LANDER_MAX_STEPS: usize = 500;
pub const WORLD_HALF_WIDTH: f64 = 10.0;
pub const WORLD_HEIGHT: f64 = 15.0;
pub const START_HEIGHT: f64 = 8.0;
pub const ZONE_HALF_WIDTH: f64 = 1.5;
/// Landing-zone centers are uniform in `±ZONE_RANGE`.
pub const ZONE_RANGE: f64 = 5.0;
pub const SAFE_SPEED: f64 = 2.0;
pub const SAFE_ANGLE: f64 = 0.35;
pub const LATERAL_DEAD_ZONE: f64 = 0.5;
pub const LANDING_BONUS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LanderStatus {
    Flying,
    Landed,
    Crashed,
    Timeout,
}

impl LanderStatus {
    pub fn outcome(self) -> Option<Outcome> {
        match self {
            LanderStatus::Flying => None,
            LanderStatus::Landed => Some(Outcome::Success),
            LanderStatus::Crashed => Some(Outcome::Failure),
            LanderStatus::Timeout => Some(Outcome::Timeout),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanderState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub angle: f64,
    pub angular_velocity: f64,
    pub zone_center: f64,
    pub timestep: usize,
    pub status: LanderStatus,
}

impl LanderState {
    /// Upright at `START_HEIGHT` above the world center with a small random
    /// drift; landing zone uniform in `±ZONE_RANGE`.
    pub fn reset(rng: &mut Rng) -> Self {
        Self {
            position: [rng.uniform_in(-1.0, 1.0), START_HEIGHT],
            velocity: [rng.uniform_in(-0.5, 0.5), rng.uniform_in(-0.5, 0.0)],
            angle: 0.0,
            angular_velocity: 0.0,
            zone_center: rng.uniform_in(-ZONE_RANGE, ZONE_RANGE),
            timestep: 0,
            status: LanderStatus::Flying,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.status != LanderStatus::Flying
    }

    /// `[x, y, angle]`
    pub fn observation(&self) -> Vec<f64> {
        vec![self.position[0], self.position[1], self.angle]
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    pub fn in_zone(&self) -> bool {
        (self.position[0] - self.zone_center).abs() <= ZONE_HALF_WIDTH
    }

    /// Body-up unit vector.
    pub fn up(&self) -> [f64; 2] {
        [-self.angle.sin(), self.angle.cos()]
    }

    /// Body-right unit vector.
    pub fn right(&self) -> [f64; 2] {
        [self.angle.cos(), self.angle.sin()]
    }
}

/// `clip(M x)` with `M` the 2×4 row-major matrix in `theta`.
pub fn lander_interface(theta: &[f64], x: &[f64]) -> [f64; 2] {
    debug_assert_eq!(theta.len(), 8);
    debug_assert_eq!(x.len(), 4);
    let row = |r: usize| -> f64 {
        let v: f64 = (0..4).map(|j| theta[r * 4 + j] * x[j]).sum();
        v.clamp(-1.0, 1.0)
    };
    [row(0), row(1)]
}

/// Main-engine throttle in `[0, 1]` for an action.
pub fn main_throttle(action: [f64; 2]) -> f64 {
    if action[0] > 0.0 {
        action[0].min(1.0)
    } else {
        0.0
    }
}

/// Lateral thruster direction in `{-1, 0, 1}` for an action.
pub fn lateral_direction(action: [f64; 2]) -> f64 {
    if action[1] < -LATERAL_DEAD_ZONE {
        -1.0
    } else if action[1] > LATERAL_DEAD_ZONE {
        1.0
    } else {
        0.0
    }
}

pub fn lander_step(state: &LanderState, action: [f64; 2]) -> Result<LanderState> {
    if state.is_terminal() {
        return Err(Error::contract("step on a terminal lander state"));
    }
    if !(action[0].is_finite() && action[1].is_finite()) {
        return Err(Error::NonFinite {
            context: "lander action",
            index: 0,
        });
    }
    let main = main_throttle(action);
    let lateral = lateral_direction(action);
    let up = state.up();
    let right = state.right();
    let mut next = state.clone();
    let accel = [
        MAIN_THRUST * main * up[0] + SIDE_FORCE * lateral * right[0],
        MAIN_THRUST * main * up[1] + SIDE_FORCE * lateral * right[1] - GRAVITY,
    ];
    next.velocity[0] += accel[0] * LANDER_DT;
    next.velocity[1] += accel[1] * LANDER_DT;
    next.angular_velocity -= SIDE_TORQUE * lateral * LANDER_DT;
    next.position[0] += next.velocity[0] * LANDER_DT;
    next.position[1] += next.velocity[1] * LANDER_DT;
    next.angle += next.angular_velocity * LANDER_DT;
    next.timestep += 1;

    if next.position[1] <= 0.0 {
        next.position[1] = 0.0;
        let safe = next.in_zone() && next.speed() < SAFE_SPEED && next.angle.abs() < SAFE_ANGLE;
        next.status = if safe {
            LanderStatus::Landed
        } else {
            LanderStatus::Crashed
        };
    } else if next.position[0].abs() > WORLD_HALF_WIDTH || next.position[1] > WORLD_HEIGHT {
        next.status = LanderStatus::Crashed;
    } else if next.timestep >= LANDER_MAX_STEPS {
        next.status = LanderStatus::Timeout;
    }
    Ok(next)
}

/// Terminal reward for a finished state: landing bonus or crash penalty,
/// minus the horizontal distance to the zone center.
pub fn lander_terminal_reward(status: LanderStatus, final_x: f64, zone_center: f64) -> f64 {
    let bonus = match status {
        LanderStatus::Landed => LANDING_BONUS,
        LanderStatus::Crashed => -LANDING_BONUS,
        LanderStatus::Timeout | LanderStatus::Flying => 0.0,
    };
    bonus - (final_x - zone_center).abs()
}

/// Episode reward from the logged outcome, final observation, and the
/// zone center stored as the episode goal. An episode with no recorded
/// outcome scores as a timeout.
pub fn lander_reward(episode: &EpisodeLog) -> f64 {
    let status = match episode.meta.outcome {
        Some(Outcome::Success) => LanderStatus::Landed,
        Some(Outcome::Failure) => LanderStatus::Crashed,
        Some(Outcome::Timeout) | None => LanderStatus::Timeout,
    };
    let final_x = episode.final_state().map_or(0.0, |s| s[0]);
    let zone = episode.meta.goal.first().copied().unwrap_or(0.0);
    lander_terminal_reward(status, final_x, zone)
}
