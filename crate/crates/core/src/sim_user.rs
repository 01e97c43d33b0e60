//! A noisily-rational simulated user.
//!
//! The user holds an internal guess θ̂ of the interface, inverts it to pick
//! a command for the action they want, and adds isotropic noise whose scale
//! grows with how badly θ̂ has been predicting the realized outcomes:
//! `β₀ · (1 + γ · EMA(error))`. After every step the user compares the
//! predicted outcome with what happened and takes one gradient step on the
//! squared error.
//!
//! Cursor outcomes are realized velocities (state delta over the gain).
//! Lander outcomes are the throttle and thruster direction read back from
//! the velocity and spin changes.
//!
//! The cursor user also tracks how well the inverted map `θ̂ + π` would
//! have predicted recent outcomes, and adopts it when it is clearly better.
//! Plain gradient descent on the angle has a stationary point exactly
//! opposite the truth, which would make a mirrored interface unlearnable.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::envs::{
    cursor_interface, lander_interface, lateral_direction, main_throttle, Commander, EnvKind,
    EnvState, LanderState, CURSOR_GAIN, GRAVITY, LANDER_DT, LATERAL_DEAD_ZONE, MAIN_THRUST, SIDE_TORQUE,
};
use crate::error::{Error, Result};
use crate::numerics::linalg::solve2;
use crate::numerics::Rng;

/// Ridge strength for the lander pre-image.
pub const RIDGE_LAMBDA: f64 = 1e-3;
/// Below this determinant of `M̂M̂ᵀ + λI` the pre-image is declared singular.
const SINGULAR_DET: f64 = 1e-6;
/// The inverted hypothesis wins when its error EMA drops below this fraction
/// of the current one.
const FLIP_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimUserConfig {
    /// Base command-noise scale, in command units.
    pub beta0: f64,
    /// Extra noise per unit of recent prediction error.
    pub gamma: f64,
    /// Per-observation learning rate for θ̂.
    pub eta: f64,
    pub ema_decay: f64,
    /// Return θ̂ to the prior whenever a new interface is presented.
    pub reset_on_swap: bool,
}

impl SimUserConfig {
    pub fn for_env(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Cursor => Self {
                beta0: 0.05,
                gamma: 10.0,
                eta: 0.002,
                ema_decay: 0.9,
                reset_on_swap: true,
            },
            EnvKind::Lander => Self {
                beta0: 0.05,
                gamma: 20.0,
                eta: 0.02,
                ema_decay: 0.9,
                reset_on_swap: true,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.eta)
            && self.beta0 > 0.0
            && self.gamma >= 0.0
            && (0.0..1.0).contains(&self.ema_decay)
            && [self.beta0, self.gamma, self.eta].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid simulated-user config {self:?}")))
        }
    }
}

/// The user's prior θ̂: no rotation for the cursor; for the lander, the
/// first two hand-pose coordinates drive main engine and thrusters.
pub fn prior_model(kind: EnvKind) -> Vec<f64> {
    match kind {
        EnvKind::Cursor => vec![0.0],
        EnvKind::Lander => vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    }
}

const LANDER_MAX_TILT: f64 = 0.3;

/// What the user wants the environment to do.
///
/// Cursor: unit vector toward the target. Lander: throttle tracks a
/// descent rate that slows near the ground; the thrusters steer attitude
/// toward a tilt that carries the craft over the zone.
pub fn intended_action(state: &EnvState) -> [f64; 2] {
    match state {
        EnvState::Cursor(s) => {
            let d = [s.target[0] - s.cursor[0], s.target[1] - s.cursor[1]];
            let n = d[0].hypot(d[1]);
            if n > 0.0 {
                [d[0] / n, d[1] / n]
            } else {
                [0.0, 0.0]
            }
        }
        EnvState::Lander(s) => lander_intent(s),
    }
}

fn lander_intent(s: &LanderState) -> [f64; 2] {
    let [x, y] = s.position;
    let [vx, vy] = s.velocity;
    let offset = x - s.zone_center;
    let over_zone = offset.abs() < 1.0;

    let target_vx = (-0.8 * offset).clamp(-2.0, 2.0);
    let target_tilt = (-0.4 * (target_vx - vx)).clamp(-LANDER_MAX_TILT, LANDER_MAX_TILT);
    // A negative angle tilts the body-up axis to the right.
    let tilt = if y < 1.0 { 0.0 } else { target_tilt };
    let lateral = (-3.0 * (tilt - s.angle) + 1.0 * s.angular_velocity).clamp(-1.0, 1.0);

    let target_vy = if over_zone || y > 4.0 {
        -(0.4 + 0.35 * y).min(3.0)
    } else {
        0.5 * (3.0 - y)
    };
    let hover = GRAVITY / (MAIN_THRUST * s.angle.cos().max(0.5));
    let main = (hover + 0.8 * (target_vy - vy)).clamp(-1.0, 1.0);
    [main, lateral]
}

/// `argmin_x ‖M x − a‖² + λ‖x‖²` for a 2×4 row-major `M`, i.e.
/// `Mᵀ (M Mᵀ + λI)⁻¹ a`. `None` when the regularized system is singular.
pub fn ridge_preimage(m: &[f64], a: [f64; 2]) -> Option<[f64; 4]> {
    let row = |r: usize| &m[r * 4..r * 4 + 4];
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).sum::<f64>();
    let g = [
        [dot(row(0), row(0)) + RIDGE_LAMBDA, dot(row(0), row(1))],
        [dot(row(1), row(0)), dot(row(1), row(1)) + RIDGE_LAMBDA],
    ];
    let w = solve2(g, a, SINGULAR_DET)?;
    let mut x = [0.0; 4];
    for (j, xj) in x.iter_mut().enumerate() {
        *xj = m[j] * w[0] + m[4 + j] * w[1];
    }
    Some(x)
}

/// Realized `[throttle, thruster direction]` read back from a lander
/// transition.
pub fn realized_lander_action(prev: &LanderState, next: &LanderState) -> [f64; 2] {
    let up = prev.up();
    let dv = [
        next.velocity[0] - prev.velocity[0],
        next.velocity[1] - prev.velocity[1] + GRAVITY * LANDER_DT,
    ];
    let lateral = -(next.angular_velocity - prev.angular_velocity) / (SIDE_TORQUE * LANDER_DT);
    // The side force is orthogonal to body-up, so projecting removes it.
    let main = (dv[0] * up[0] + dv[1] * up[1]) / (MAIN_THRUST * LANDER_DT);
    [main, lateral.round()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimUser {
    kind: EnvKind,
    config: SimUserConfig,
    model: Vec<f64>,
    ema: f64,
    /// Error EMA of the inverted hypothesis, started from `ema` when first
    /// tracked.
    flip_ema: Option<f64>,
    /// Steps whose command was random because the pre-image was singular.
    fallback_steps: usize,
    deviation_sq: f64,
    deviation_count: usize,
    #[serde(skip)]
    last_preferred: Option<Vec<f64>>,
    #[serde(skip)]
    last_intent: Option<[f64; 2]>,
}

impl SimUser {
    pub fn new(kind: EnvKind, config: SimUserConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            kind,
            config,
            model: prior_model(kind),
            ema: 0.0,
            flip_ema: None,
            fallback_steps: 0,
            deviation_sq: 0.0,
            deviation_count: 0,
            last_preferred: None,
            last_intent: None,
        })
    }

    pub fn for_env(kind: EnvKind) -> Self {
        Self::new(kind, SimUserConfig::for_env(kind)).expect("default config is valid")
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn config(&self) -> &SimUserConfig {
        &self.config
    }

    /// θ̂
    pub fn model(&self) -> &[f64] {
        &self.model
    }

    pub fn set_model(&mut self, model: Vec<f64>) -> Result<()> {
        if model.len() != self.kind.interface_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.kind.interface_dim(),
                got: model.len(),
            });
        }
        self.model = model;
        Ok(())
    }

    pub fn ema(&self) -> f64 {
        self.ema
    }

    pub fn set_ema(&mut self, ema: f64) {
        self.ema = ema.max(0.0);
    }

    pub fn noise_scale(&self) -> f64 {
        self.config.beta0 * (1.0 + self.config.gamma * self.ema)
    }

    pub fn fallback_steps(&self) -> usize {
        self.fallback_steps
    }

    /// Mean squared deviation of emitted commands from the noiseless
    /// preferred command since the last episode start.
    pub fn command_deviation(&self) -> f64 {
        if self.deviation_count == 0 {
            0.0
        } else {
            self.deviation_sq / self.deviation_count as f64
        }
    }

    /// A new interface is about to be used.
    pub fn on_interface_swap(&mut self) {
        if self.config.reset_on_swap {
            self.model = prior_model(self.kind);
            self.flip_ema = None;
        }
    }

    /// The command that yields the intended action under θ̂, or `None` if
    /// θ̂ cannot be inverted.
    pub fn preferred_command(&self, state: &EnvState) -> Option<Vec<f64>> {
        let a = intended_action(state);
        match self.kind {
            EnvKind::Cursor => Some(cursor_interface(-self.model[0], a).to_vec()),
            EnvKind::Lander => {
                ridge_preimage(&self.model, a).map(|x| x.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
            }
        }
    }

    pub fn emit_command(&mut self, state: &EnvState, rng: &mut Rng) -> Vec<f64> {
        let dim = self.kind.command_dim();
        let sigma = self.noise_scale();
        let Some(base) = self.preferred_command(state) else {
            self.fallback_steps += 1;
            self.last_preferred = None;
            self.last_intent = None;
            return (0..dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        };
        let x: Vec<f64> = match self.kind {
            EnvKind::Cursor => base.iter().map(|b| b + sigma * rng.normal()).collect(),
            EnvKind::Lander => {
                // Action-space noise pulled back through the pre-image, plus
                // base noise on the null space.
                let e = [sigma * rng.normal(), sigma * rng.normal()];
                let pulled = ridge_preimage(&self.model, e).unwrap_or([0.0; 4]);
                base.iter()
                    .zip(pulled)
                    .map(|(b, p)| b + p + self.config.beta0 * rng.normal())
                    .collect()
            }
        };
        self.deviation_sq += x.iter().zip(&base).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
        self.deviation_count += 1;
        self.last_preferred = Some(base);
        self.last_intent = Some(intended_action(state));
        x
    }

    /// Prediction error of θ̂ on one transition, then one gradient step.
    pub fn observe_transition(&mut self, command: &[f64], state: &EnvState, next: &EnvState) {
        let e = match (state, next) {
            (EnvState::Cursor(s), EnvState::Cursor(n)) => {
                let realized = [
                    (n.cursor[0] - s.cursor[0]) / CURSOR_GAIN,
                    (n.cursor[1] - s.cursor[1]) / CURSOR_GAIN,
                ];
                self.update_cursor([command[0], command[1]], realized)
            }
            (EnvState::Lander(s), EnvState::Lander(n)) => {
                let realized = realized_lander_action(s, n);
                let model_err = self.update_lander(command, realized);
                match self.last_intent.take() {
                    Some(intent) => plan_error(intent, realized),
                    None => model_err,
                }
            }
            _ => return,
        };
        let k = self.config.ema_decay;
        self.ema = k * self.ema + (1.0 - k) * e;
    }

    fn update_cursor(&mut self, x: [f64; 2], realized: [f64; 2]) -> f64 {
        let th = self.model[0];
        let pred = cursor_interface(th, x);
        let r = [pred[0] - realized[0], pred[1] - realized[1]];
        let e = r[0].hypot(r[1]);
        // d/dθ̂ R(θ̂)x = R(θ̂ + π/2)x
        let dpred = cursor_interface(th + PI / 2.0, x);
        let grad = 2.0 * (r[0] * dpred[0] + r[1] * dpred[1]);

        let flipped = cursor_interface(th + PI, x);
        let e_flip = (flipped[0] - realized[0]).hypot(flipped[1] - realized[1]);
        let k = self.config.ema_decay;
        let flip_ema = k * self.flip_ema.unwrap_or(self.ema) + (1.0 - k) * e_flip;
        let ema = k * self.ema + (1.0 - k) * e;
        if self.config.eta > 0.0 && flip_ema < FLIP_RATIO * ema {
            self.model[0] = (th + PI).rem_euclid(2.0 * PI);
            self.flip_ema = Some(ema);
            return e;
        }
        self.flip_ema = Some(flip_ema);
        self.model[0] = (th - self.config.eta * grad).rem_euclid(2.0 * PI);
        e
    }

    fn update_lander(&mut self, x: &[f64], realized: [f64; 2]) -> f64 {
        // Throttle is only observable when the engine fires; thruster
        // targets are the canonical directions -1, 0, 1.
        let mut sq = 0.0;
        for r in 0..2 {
            let z: f64 = (0..4).map(|j| self.model[r * 4 + j] * x[j]).sum();
            let pred = z.clamp(-1.0, 1.0);
            let err = match r {
                0 if realized[0] > 1e-9 => pred - realized[0].min(1.0),
                0 => pred.max(0.0),
                _ => pred - realized[1],
            };
            sq += err * err;
            let saturated = z.abs() >= 1.0 && err.signum() != z.signum();
            if !saturated && self.config.eta > 0.0 {
                for j in 0..4 {
                    let w = &mut self.model[r * 4 + j];
                    *w = (*w - self.config.eta * 2.0 * err * x[j]).clamp(-1.0, 1.0);
                }
            }
        }
        sq.sqrt()
    }

    /// Predicted action under θ̂, for diagnostics.
    pub fn predict_action(&self, command: &[f64]) -> [f64; 2] {
        match self.kind {
            EnvKind::Cursor => cursor_interface(self.model[0], [command[0], command[1]]),
            EnvKind::Lander => lander_interface(&self.model, command),
        }
    }
}

impl Commander for SimUser {
    fn begin_episode(&mut self, _initial: &EnvState) {
        self.deviation_sq = 0.0;
        self.deviation_count = 0;
    }

    fn on_interface_swap(&mut self) {
        SimUser::on_interface_swap(self);
    }

    fn command(&mut self, state: &EnvState, rng: &mut Rng) -> Vec<f64> {
        self.emit_command(state, rng)
    }

    fn observe(&mut self, state: &EnvState, command: &[f64], next: &EnvState) {
        self.observe_transition(command, state, next);
    }
}

/// Distance from the action the user set out to produce to the set of
/// actions consistent with what the thrusters did.
fn plan_error(intent: [f64; 2], realized: [f64; 2]) -> f64 {
    let main = if realized[0] > 1e-9 {
        intent[0].min(1.0) - realized[0].min(1.0)
    } else {
        intent[0].max(0.0)
    };
    let (lo, hi) = match realized[1] {
        d if d > 0.5 => (LATERAL_DEAD_ZONE, 1.0),
        d if d < -0.5 => (-1.0, -LATERAL_DEAD_ZONE),
        _ => (-LATERAL_DEAD_ZONE, LATERAL_DEAD_ZONE),
    };
    let side = intent[1] - intent[1].clamp(lo, hi);
    main.hypot(side)
}

/// Whether the realized lander action agrees with an applied one.
pub fn lander_action_matches(applied: [f64; 2], realized: [f64; 2]) -> bool {
    (main_throttle(applied) - realized[0]).abs() < 1e-6 && lateral_direction(applied) == realized[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CursorState, InterfaceParams, LanderStatus};
    use crate::offline::EpisodeMeta;

    fn cursor_state(c: [f64; 2], t: [f64; 2]) -> EnvState {
        EnvState::Cursor(CursorState::new(c, t))
    }

    fn lander(pos: [f64; 2], vel: [f64; 2], zone: f64) -> LanderState {
        LanderState {
            position: pos,
            velocity: vel,
            angle: 0.0,
            angular_velocity: 0.0,
            zone_center: zone,
            timestep: 0,
            status: LanderStatus::Flying,
        }
    }

    #[test]
    fn cursor_intent_is_unit_toward_target() {
        let a = intended_action(&cursor_state([0.5, 0.5], [0.9, 0.5]));
        assert!((a[0] - 1.0).abs() < 1e-15 && a[1].abs() < 1e-15);
    }

    #[test]
    fn lander_intent_signs() {
        let falling = lander_intent(&lander([0.0, 6.0], [0.0, -4.0], 0.0));
        assert!(falling[0] > 0.0);
        // Right of the zone and drifting right: tilt left, i.e. fire the
        // left thruster.
        let drifting = lander_intent(&lander([4.0, 6.0], [1.0, 0.0], 0.0));
        assert!(drifting[1] < -LATERAL);
    }
    const LATERAL: f64 = 0.5;

    #[test]
    fn perfect_model_noiseless_goes_straight() {
        let theta = 1.1;
        let mut cfg = SimUserConfig::for_env(EnvKind::Cursor);
        cfg.beta0 = 1e-300;
        let mut user = SimUser::new(EnvKind::Cursor, cfg).unwrap();
        user.set_model(vec![theta]).unwrap();
        let p = InterfaceParams::cursor(theta).unwrap();
        let s = cursor_state([0.5, 0.5], [0.9, 0.5]);
        let x = user.emit_command(&s, &mut Rng::new(0));
        let a = p.apply(&x).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12 && a[1].abs() < 1e-12);
    }

    #[test]
    fn gain_off_noise_is_base() {
        let mut cfg = SimUserConfig::for_env(EnvKind::Cursor);
        cfg.gamma = 0.0;
        let mut user = SimUser::new(EnvKind::Cursor, cfg).unwrap();
        user.set_ema(3.0);
        assert_eq!(user.noise_scale(), cfg.beta0);
    }

    #[test]
    fn unadapted_user_moves_perpendicular() {
        let user = SimUser::for_env(EnvKind::Cursor);
        let s = cursor_state([0.5, 0.5], [0.9, 0.5]);
        let x = user.preferred_command(&s).unwrap();
        let a = InterfaceParams::cursor(PI / 2.0).unwrap().apply(&x).unwrap();
        let intent = intended_action(&s);
        assert!((a[0] * intent[0] + a[1] * intent[1]).abs() < 1e-12);
        assert!((a[0].hypot(a[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correct_model_is_fixed_point() {
        let mut user = SimUser::for_env(EnvKind::Cursor);
        user.set_model(vec![0.7]).unwrap();
        user.set_ema(1.0);
        let p = InterfaceParams::cursor(0.7).unwrap();
        let s = cursor_state([0.5, 0.5], [0.9, 0.8]);
        let mut rng = Rng::new(1);
        let mut last = user.ema();
        for _ in 0..10 {
            let x = user.emit_command(&s, &mut rng);
            let n = s.step(p.apply(&x).unwrap()).unwrap();
            user.observe_transition(&x, &s, &n);
            assert!((user.model()[0] - 0.7).abs() < 1e-9);
            assert!(user.ema() < last);
            last = user.ema();
        }
    }

    #[test]
    fn small_offset_shrinks_monotonically() {
        let mut user = SimUser::for_env(EnvKind::Cursor);
        let p = InterfaceParams::cursor(0.4).unwrap();
        let s = cursor_state([0.5, 0.5], [0.9, 0.8]);
        let mut rng = Rng::new(2);
        let mut gap = 0.4;
        for _ in 0..200 {
            let x = user.emit_command(&s, &mut rng);
            let n = s.step(p.apply(&x).unwrap()).unwrap();
            user.observe_transition(&x, &s, &n);
            let now = (user.model()[0] - 0.4).abs();
            assert!(now < gap);
            gap = now;
        }
    }

    #[test]
    fn no_learning_rate_no_change() {
        let mut cfg = SimUserConfig::for_env(EnvKind::Cursor);
        cfg.eta = 0.0;
        let mut user = SimUser::new(EnvKind::Cursor, cfg).unwrap();
        let p = InterfaceParams::cursor(PI).unwrap();
        let s = cursor_state([0.5, 0.5], [0.9, 0.8]);
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let x = user.emit_command(&s, &mut rng);
            let n = s.step(p.apply(&x).unwrap()).unwrap();
            user.observe_transition(&x, &s, &n);
        }
        assert_eq!(user.model(), &[0.0]);
    }

    #[test]
    fn ridge_preimage_inverts_well_conditioned_map() {
        let m = [0.9, 0.1, -0.2, 0.0, 0.0, 0.8, 0.3, -0.1];
        let x = ridge_preimage(&m, [0.5, -0.4]).unwrap();
        let a = lander_interface(&m, &x);
        assert!((a[0] - 0.5).abs() < 1e-2 && (a[1] + 0.4).abs() < 1e-2);
        assert!(ridge_preimage(&[0.0; 8], [0.5, 0.5]).is_none());
    }

    #[test]
    fn singular_model_falls_back() {
        let mut user = SimUser::for_env(EnvKind::Lander);
        user.set_model(vec![0.0; 8]).unwrap();
        let s = EnvState::Lander(lander([0.0, 5.0], [0.0, 0.0], 0.0));
        let x = user.emit_command(&s, &mut Rng::new(4));
        assert_eq!(x.len(), 4);
        assert_eq!(user.fallback_steps(), 1);
    }

    #[test]
    fn realized_action_round_trips() {
        let mut rng = Rng::new(5);
        for _ in 0..100 {
            let mut s = lander([0.0, 8.0], [0.3, -1.0], 0.0);
            s.angle = rng.uniform_in(-0.5, 0.5);
            s.angular_velocity = rng.uniform_in(-1.0, 1.0);
            let a = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
            let n = crate::envs::lander_step(&s, a).unwrap();
            assert!(lander_action_matches(a, realized_lander_action(&s, &n)));
        }
    }

    #[test]
    fn oracle_lands_lander_often() {
        let mut rng = Rng::new(6);
        let mut landed = 0;
        for _ in 0..20 {
            let p = EnvKind::Lander.random_params(&mut rng);
            let p = InterfaceParams::new(EnvKind::Lander, prior_model(EnvKind::Lander)).unwrap_or(p);
            let init = EnvState::reset(EnvKind::Lander, &mut rng);
            let mut oracle = crate::envs::OracleCommander::new(p.clone());
            let ep = crate::envs::run_episode(&p, init, &mut oracle, &mut rng, EpisodeMeta::default()).unwrap();
            landed += (ep.meta.outcome == Some(crate::offline::Outcome::Success)) as usize;
        }
        assert!(landed >= 16, "landed {landed}/20");
    }

    #[test]
    fn plan_error_cases() {
        assert_eq!(plan_error([0.4, 0.0], [0.4, 0.0]), 0.0);
        assert!((plan_error([0.7, 0.0], [0.4, 0.0]) - 0.3).abs() < 1e-12);
        // Engine off: any non-positive throttle is consistent.
        assert_eq!(plan_error([-0.6, 0.0], [0.0, 0.0]), 0.0);
        assert!((plan_error([0.5, 0.0], [0.0, 0.0]) - 0.5).abs() < 1e-12);
        // Throttle beyond full scale saturates on both sides.
        assert_eq!(plan_error([1.8, 0.0], [1.0, 0.0]), 0.0);
        // Lateral intent is judged against the thruster that fired.
        assert_eq!(plan_error([0.0, 0.9], [0.0, 1.0]), 0.0);
        assert!((plan_error([0.0, 0.2], [0.0, 1.0]) - (LATERAL_DEAD_ZONE - 0.2)).abs() < 1e-12);
        assert!((plan_error([0.0, 0.9], [0.0, 0.0]) - (0.9 - LATERAL_DEAD_ZONE)).abs() < 1e-12);
        assert!((plan_error([0.0, 0.9], [0.0, -1.0]) - (0.9 + LATERAL_DEAD_ZONE)).abs() < 1e-12);
    }

    #[test]
    fn lander_noise_is_pulled_back_to_action_space() {
        let mut user = SimUser::for_env(EnvKind::Lander);
        let model = vec![0.6, 0.8, 0.0, 0.0, 0.0, 0.0, -0.8, 0.6];
        user.set_model(model.clone()).unwrap();
        user.set_ema(50.0);
        let sigma = user.noise_scale();
        let s = EnvState::Lander(lander([0.0, 6.0], [0.0, -1.0], 0.0));
        let base = user.preferred_command(&s).unwrap();
        let mut rng = Rng::new(12);
        let n = 4000;
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let x = user.emit_command(&s, &mut rng);
            for (r, acc) in sq.iter_mut().enumerate() {
                let d: f64 = (0..4).map(|j| model[r * 4 + j] * (x[j] - base[j])).sum();
                *acc += d * d;
            }
        }
        for acc in sq {
            let sd = (acc / n as f64).sqrt();
            assert!((sd / sigma - 1.0).abs() < 0.05, "action sd {sd} vs {sigma}");
        }
    }

    proptest::proptest! {
        #[test]
        fn command_deviation_grows_with_ema(lo in 0.0..2.0f64, gap in 0.0..2.0f64, seed in 0u64..1000) {
            let s = cursor_state([0.2, 0.3], [0.8, 0.6]);
            let deviation = |ema: f64| {
                let mut user = SimUser::for_env(EnvKind::Cursor);
                user.set_ema(ema);
                let mut rng = Rng::new(seed);
                for _ in 0..20 {
                    user.emit_command(&s, &mut rng);
                }
                user.command_deviation()
            };
            proptest::prop_assert!(deviation(lo + gap) >= deviation(lo));
        }
    }

    #[test]
    fn calm_user_deviation_is_base_noise() {
        let mut user = SimUser::for_env(EnvKind::Cursor);
        let theta = 2.0;
        user.set_model(vec![theta]).unwrap();
        let s = cursor_state([0.2, 0.3], [0.8, 0.6]);
        let mut rng = Rng::new(4);
        for _ in 0..5000 {
            user.emit_command(&s, &mut rng);
        }
        let expected = user.config().beta0.powi(2) * 2.0;
        assert!((user.command_deviation() / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn inverted_cursor_is_learned_as_fast_as_identity() {
        let steps = |theta: f64| -> usize {
            let p = InterfaceParams::cursor(theta).unwrap();
            (0..10u64)
                .map(|seed| {
                    let mut user = SimUser::for_env(EnvKind::Cursor);
                    let logs =
                        crate::optimizer::evaluate_interface(&p, &mut user, 10, &mut Rng::new(seed), 0, "i").unwrap();
                    logs.iter().map(|l| l.len()).sum::<usize>()
                })
                .sum()
        };
        let (identity, inverted) = (steps(0.0), steps(PI));
        let ratio = inverted as f64 / identity as f64;
        assert!((ratio - 1.0).abs() < 0.2, "steps {identity} vs {inverted}");
    }
}
