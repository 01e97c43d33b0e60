//! Center-out 2D cursor task.
//!
//! Positions live in the unit square. The interface output is a velocity;
//! each step moves the cursor by `CURSOR_GAIN * action`, clamped to the
//! square. The episode ends when the cursor is within `HIT_RADIUS` of the
//! target or after `CURSOR_MAX_STEPS` steps.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::offline::EpisodeLog;

/// Displacement per step for a unit action (`dt * gain`).
pub const CURSOR_GAIN: f64 = 0.02;
pub const HIT_RADIUS: f64 = 0.03;
pub const CURSOR_MAX_STEPS: usize = 300;
const TARGET_MARGIN: f64 = 0.05;
const MIN_TARGET_DISTANCE: f64 = 0.45;

#[derive(Debug, Clone, PartialEq)]
pub struct CursorState {
    pub cursor: [f64; 2],
    pub target: [f64; 2],
    pub timestep: usize,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl CursorState {
    /// Cursor at the center, target uniform in the square's interior (at
    /// least `MIN_TARGET_DISTANCE` from the center).
    pub fn reset(rng: &mut Rng) -> Self {
        let center = [0.5, 0.5];
        loop {
            let target = [
                rng.uniform_in(TARGET_MARGIN, 1.0 - TARGET_MARGIN),
                rng.uniform_in(TARGET_MARGIN, 1.0 - TARGET_MARGIN),
            ];
            if dist(center, target) >= MIN_TARGET_DISTANCE {
                return Self::new(center, target);
            }
        }
    }

    pub fn new(cursor: [f64; 2], target: [f64; 2]) -> Self {
        Self {
            cursor,
            target,
            timestep: 0,
        }
    }

    pub fn distance(&self) -> f64 {
        dist(self.cursor, self.target)
    }

    pub fn hit(&self) -> bool {
        self.distance() < HIT_RADIUS
    }

    pub fn is_terminal(&self) -> bool {
        self.hit() || self.timestep >= CURSOR_MAX_STEPS
    }

    /// `[cursor_x, cursor_y, target_x, target_y]`
    pub fn observation(&self) -> Vec<f64> {
        vec![self.cursor[0], self.cursor[1], self.target[0], self.target[1]]
    }
}

/// Rotates the command by `angle` radians.
pub fn cursor_interface(angle: f64, x: [f64; 2]) -> [f64; 2] {
    let (s, c) = angle.rem_euclid(TAU).sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

pub fn cursor_step(state: &CursorState, action: [f64; 2]) -> Result<CursorState> {
    if state.is_terminal() {
        return Err(Error::contract("step on a terminal cursor state"));
    }
    if !(action[0].is_finite() && action[1].is_finite()) {
        return Err(Error::NonFinite {
            context: "cursor action",
            index: 0,
        });
    }
    let mut next = state.clone();
    for i in 0..2 {
        next.cursor[i] = (state.cursor[i] + CURSOR_GAIN * action[i]).clamp(0.0, 1.0);
    }
    next.timestep += 1;
    Ok(next)
}

/// Per-step ground truth: negative distance to target after the step.
pub fn cursor_step_reward(next: &CursorState) -> f64 {
    -next.distance()
}

/// `|τ| · mean(−distance)` over the episode: the mean step reward scaled by
/// episode length, so an early hit is treated as an absorbing state worth
/// zero for the remaining steps. Reads the logged observations
/// `[cursor, target]`, not the reward column.
pub fn cursor_reward(episode: &EpisodeLog) -> Result<f64> {
    if episode.is_empty() {
        return Err(Error::contract("cursor reward of an empty episode"));
    }
    let n = episode.len() as f64;
    let mut total = 0.0;
    for r in &episode.records {
        let s = &r.next_state;
        if s.len() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: s.len(),
            });
        }
        total -= dist([s[0], s[1]], [s[2], s[3]]);
    }
    let mean = total / n;
    Ok(n * mean)
}
