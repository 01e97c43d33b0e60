//! Proposal of interfaces and the human-or-simulated-in-the-loop training
//! loop.

use std::time::{SystemTime, UNIX_EPOCH};

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::acquisition::{acquisition, AcquisitionKind};
use super::gp::{Embedding, GpModel};
use crate::envs::{run_episode, Commander, EnvKind, EnvState, InterfaceParams};
use crate::error::{Error, Result};
use crate::mi_estimator::{mimi_evaluate_with, EstimatorConfig, MiScore};
use crate::numerics::Rng;
use crate::offline::{EpisodeLog, EpisodeMeta, Outcome};

pub const EPISODES_PER_INTERFACE: usize = 10;
pub const N_CANDIDATES: usize = 2048;
/// Perturbations of the incumbent added to the candidate set, per scale.
pub const N_LOCAL: usize = 128;
/// Perturbation scales, as fractions of the box width.
const LOCAL_SCALES: [f64; 2] = [0.1, 0.02];

/// What the proposal step may see: interface parameters and their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub theta: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub params: InterfaceParams,
    /// `None` during the random phase.
    pub acquisition: Option<AcquisitionKind>,
    pub gp: Option<GpModel>,
}

/// Uniform in the box for the first `random_phase` interfaces; afterwards
/// a uniformly chosen acquisition maximized over random candidates plus
/// local perturbations of the best observation.
pub fn propose_next(
    kind: EnvKind,
    observations: &[Observation],
    random_phase: usize,
    rng: &mut Rng,
) -> Result<Proposal> {
    if observations.len() < random_phase.max(1) {
        return Ok(Proposal {
            params: kind.random_params(rng),
            acquisition: None,
            gp: None,
        });
    }
    let inputs: Vec<Vec<f64>> = observations.iter().map(|o| o.theta.clone()).collect();
    let scores: Vec<f64> = observations.iter().map(|o| o.score).collect();
    let gp = GpModel::fit(Embedding::for_env(kind), &inputs, &scores, &mut rng.fork(0))?;

    let acq = AcquisitionKind::ALL[rng.index(AcquisitionKind::ALL.len())];
    let best = gp
        .standardized_targets()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let incumbent = observations
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.score.total_cmp(&b.score).then(j.cmp(i)))
        .map(|(_, o)| o.theta.clone())
        .ok_or(Error::EmptyDataset)?;

    let (lo, hi) = kind.bounds();
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(N_CANDIDATES + N_LOCAL * LOCAL_SCALES.len());
    for _ in 0..N_CANDIDATES {
        candidates.push((0..kind.interface_dim()).map(|_| rng.uniform_in(lo, hi)).collect());
    }
    for scale in LOCAL_SCALES {
        for _ in 0..N_LOCAL {
            candidates.push(
                incumbent
                    .iter()
                    .map(|v| v + scale * (hi - lo) * rng.normal())
                    .collect(),
            );
        }
    }

    let mut chosen: Option<(f64, InterfaceParams)> = None;
    for c in candidates {
        let params = InterfaceParams::new(kind, c)?;
        let (m, s) = gp.predict_standardized(params.theta());
        let value = acquisition(acq, m, s, best);
        if chosen.as_ref().is_none_or(|(v, _)| value > *v) {
            chosen = Some((value, params));
        }
    }
    let (value, params) = chosen.ok_or(Error::EmptyDataset)?;
    debug!("{} proposes {:?} (acquisition {value:.4})", acq.short_name(), params.theta());
    Ok(Proposal {
        params,
        acquisition: Some(acq),
        gp: Some(gp),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Maximum number of interfaces evaluated.
    pub budget: usize,
    pub episodes_per_interface: usize,
    pub delta: usize,
    pub random_phase: usize,
    pub estimator: EstimatorConfig,
}

impl TrainConfig {
    pub fn for_env(kind: EnvKind, budget: usize) -> Self {
        Self {
            budget,
            episodes_per_interface: EPISODES_PER_INTERFACE,
            delta: 1,
            random_phase: kind.random_phase(),
            estimator: EstimatorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < self.random_phase {
            return Err(Error::contract(format!(
                "budget {} is smaller than the random phase {}",
                self.budget, self.random_phase
            )));
        }
        if self.episodes_per_interface == 0 || self.delta == 0 {
            return Err(Error::contract("need at least one episode per interface and delta >= 1"));
        }
        Ok(())
    }
}

/// One evaluated interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub theta: Vec<f64>,
    pub acquisition: Option<AcquisitionKind>,
    /// The value the surrogate is fit to.
    pub score: f64,
    /// `None` when the estimator could not run and `score` is a penalty.
    pub mi: Option<MiScore>,
    /// Ground-truth episode rewards. Reporting only.
    pub rewards: Vec<f64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    #[serde(skip)]
    pub episodes: Vec<EpisodeLog>,
}

impl IterationRecord {
    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            0.0
        } else {
            self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
        }
    }

    pub fn successes(&self) -> usize {
        self.episodes
            .iter()
            .filter(|e| e.meta.outcome == Some(Outcome::Success))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub env: EnvKind,
    pub seed: u64,
    pub delta: usize,
    pub random_phase: usize,
    pub episodes_per_interface: usize,
    pub budget: usize,
    pub iterations: Vec<IterationRecord>,
}

impl RunHistory {
    pub fn observations(&self) -> Vec<Observation> {
        self.iterations
            .iter()
            .map(|r| Observation {
                theta: r.theta.clone(),
                score: r.score,
            })
            .collect()
    }

    /// Running maximum of the score.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.iterations
            .iter()
            .map(|r| {
                best = best.max(r.score);
                best
            })
            .collect()
    }

    /// Highest-scoring interface; ties go to the earliest.
    pub fn best(&self) -> Option<&IterationRecord> {
        self.iterations
            .iter()
            .rev()
            .max_by(|a, b| a.score.total_cmp(&b.score))
    }

    pub fn proposals(&self) -> Vec<Vec<f64>> {
        self.iterations.iter().map(|r| r.theta.clone()).collect()
    }

    /// All episodes in the order they were played.
    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeLog> {
        self.iterations.iter().flat_map(|r| r.episodes.iter())
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Step-wise form of the training loop, for callers that collect episodes
/// themselves (a live session) rather than through [`run_episode`].
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    root: Rng,
    history: RunHistory,
}

impl Trainer {
    pub fn new(kind: EnvKind, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            history: RunHistory {
                env: kind,
                seed,
                delta: config.delta,
                random_phase: config.random_phase,
                episodes_per_interface: config.episodes_per_interface,
                budget: config.budget,
                iterations: Vec::new(),
            },
            config,
            root: Rng::new(seed),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn history(&self) -> &RunHistory {
        &self.history
    }

    /// Mutable access for inspection hooks. Proposals read only θ and score.
    pub fn history_mut(&mut self) -> &mut RunHistory {
        &mut self.history
    }

    pub fn into_history(self) -> RunHistory {
        self.history
    }

    pub fn is_done(&self) -> bool {
        self.history.iterations.len() >= self.config.budget
    }

    pub fn iteration(&self) -> usize {
        self.history.iterations.len()
    }

    pub fn propose(&self) -> Result<Proposal> {
        let i = self.iteration() as u64;
        propose_next(
            self.history.env,
            &self.history.observations(),
            self.config.random_phase,
            &mut self.root.fork(1_000 + i),
        )
    }

    /// Stream for environment resets and user noise in iteration `i`.
    pub fn episode_rng(&self) -> Rng {
        self.root.fork(2_000 + self.iteration() as u64)
    }

    /// Scores the episodes collected under `proposal` and appends them.
    pub fn record(&mut self, proposal: &Proposal, episodes: Vec<EpisodeLog>, started_unix: u64) -> Result<&IterationRecord> {
        if self.is_done() {
            return Err(Error::contract("training budget exhausted"));
        }
        let kind = self.history.env;
        let i = self.iteration();
        let estimator_seed = self.root.fork(3_000 + i as u64).seed();
        let (score, mi) = match mimi_evaluate_with(&episodes, self.config.delta, estimator_seed, &self.config.estimator) {
            Ok(mi) => (mi.value, Some(mi)),
            Err(Error::InsufficientData { .. } | Error::EmptyDataset) => {
                let floor = self
                    .history
                    .iterations
                    .iter()
                    .map(|r| r.score)
                    .fold(f64::INFINITY, f64::min);
                let floor = if floor.is_finite() { floor } else { 0.0 };
                (floor - 1.0, None)
            }
            Err(e) => return Err(e),
        };
        let rewards = episodes
            .iter()
            .map(|e| kind.episode_reward(e))
            .collect::<Result<Vec<_>>>()?;
        info!(
            "interface {i}: theta {:?} score {score:.4} mean reward {:.3}",
            proposal.params.theta(),
            rewards.iter().sum::<f64>() / rewards.len().max(1) as f64
        );
        self.history.iterations.push(IterationRecord {
            index: i,
            theta: proposal.params.theta().to_vec(),
            acquisition: proposal.acquisition,
            score,
            mi,
            rewards,
            started_unix,
            finished_unix: unix_now(),
            episodes,
        });
        Ok(self.history.iterations.last().expect("just pushed"))
    }
}

/// Start states for an interface's episodes, drawn apart from the user's
/// noise so that a remote user sees the same starts as an in-process one.
pub fn reset_stream(episode_rng: &Rng) -> Rng {
    episode_rng.fork(0)
}

/// Plays `episodes` episodes under `params`. Start states come from
/// [`reset_stream`]`(rng)`; `rng` itself feeds the user.
pub fn evaluate_interface(
    params: &InterfaceParams,
    user: &mut dyn Commander,
    episodes: usize,
    rng: &mut Rng,
    first_episode_id: u64,
    interface_id: &str,
) -> Result<Vec<EpisodeLog>> {
    let kind = params.kind();
    let mut resets = reset_stream(rng);
    (0..episodes)
        .map(|e| {
            let init = EnvState::reset(kind, &mut resets);
            let meta = EpisodeMeta {
                episode_id: first_episode_id + e as u64,
                user_id: "sim".to_string(),
                condition_id: interface_id.to_string(),
                interface_id: interface_id.to_string(),
                seed: rng.seed(),
                ..Default::default()
            };
            run_episode(params, init, user, rng, meta)
        })
        .collect()
}

pub fn mimi_train(kind: EnvKind, user: &mut dyn Commander, config: &TrainConfig, seed: u64) -> Result<RunHistory> {
    mimi_train_with_hook(kind, user, config, seed, &mut |_| {})
}

/// As [`mimi_train`], calling `hook` on the history after every iteration.
pub fn mimi_train_with_hook(
    kind: EnvKind,
    user: &mut dyn Commander,
    config: &TrainConfig,
    seed: u64,
    hook: &mut dyn FnMut(&mut RunHistory),
) -> Result<RunHistory> {
    let mut trainer = Trainer::new(kind, config.clone(), seed)?;
    while !trainer.is_done() {
        let started = unix_now();
        let proposal = trainer.propose()?;
        user.on_interface_swap();
        let mut rng = trainer.episode_rng();
        let i = trainer.iteration();
        let episodes = evaluate_interface(
            &proposal.params,
            user,
            config.episodes_per_interface,
            &mut rng,
            (i * config.episodes_per_interface) as u64,
            &format!("interface-{i:03}"),
        )?;
        trainer.record(&proposal, episodes, started)?;
        hook(trainer.history_mut());
    }
    Ok(trainer.into_history())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim_user::SimUser;
    use std::f64::consts::TAU;

    fn quick() -> EstimatorConfig {
        EstimatorConfig {
            steps: 50,
            ..EstimatorConfig::default()
        }
    }

    #[test]
    fn random_phase_is_uniform_in_box() {
        let mut rng = Rng::new(0);
        for _ in 0..200 {
            let p = propose_next(EnvKind::Cursor, &[], 5, &mut rng).unwrap();
            assert!(p.acquisition.is_none());
            assert!((0.0..TAU).contains(&p.params.theta()[0]));
        }
        let p = propose_next(EnvKind::Lander, &[], 3, &mut rng).unwrap();
        assert!(p.params.theta().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn proposals_are_deterministic() {
        let obs: Vec<Observation> = (0..6)
            .map(|i| Observation {
                theta: vec![i as f64],
                score: (i as f64).cos(),
            })
            .collect();
        let a = propose_next(EnvKind::Cursor, &obs, 5, &mut Rng::new(4)).unwrap();
        let b = propose_next(EnvKind::Cursor, &obs, 5, &mut Rng::new(4)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.acquisition, b.acquisition);
    }

    #[test]
    fn expected_improvement_exploits_clear_peak() {
        let mut near = 0;
        for seed in 0..10 {
            let mut rng = Rng::new(seed);
            let obs: Vec<Observation> = (0..5)
                .map(|_| {
                    let t = rng.uniform_in(0.0, TAU);
                    Observation {
                        theta: vec![t],
                        score: (-(1.0 - t.cos()) * 4.0).exp(),
                    }
                })
                .chain(std::iter::once(Observation {
                    theta: vec![0.05],
                    score: 1.0,
                }))
                .collect();
            let inputs: Vec<Vec<f64>> = obs.iter().map(|o| o.theta.clone()).collect();
            let scores: Vec<f64> = obs.iter().map(|o| o.score).collect();
            let gp = GpModel::fit(Embedding::Angle, &inputs, &scores, &mut rng.fork(0)).unwrap();
            let best = gp.standardized_targets().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut top = (f64::NEG_INFINITY, 0.0);
            for k in 0..N_CANDIDATES {
                let t = TAU * k as f64 / N_CANDIDATES as f64;
                let (m, s) = gp.predict_standardized(&[t]);
                let v = acquisition(AcquisitionKind::ExpectedImprovement, m, s, best);
                if v > top.0 {
                    top = (v, t);
                }
            }
            // Chord distance on the embedding circle.
            let d = ((top.1.cos() - 0.05f64.cos()).powi(2) + (top.1.sin() - 0.05f64.sin()).powi(2)).sqrt();
            if d <= 2.0 * gp.hyperparams().length_scales[0] {
                near += 1;
            }
        }
        assert!(near >= 7, "{near}/10");
    }

    #[test]
    fn budget_equal_to_random_phase_is_random_search() {
        let mut user = SimUser::for_env(EnvKind::Cursor);
        let mut cfg = TrainConfig::for_env(EnvKind::Cursor, 5);
        cfg.estimator = quick();
        cfg.episodes_per_interface = 2;
        let h = mimi_train(EnvKind::Cursor, &mut user, &cfg, 1).unwrap();
        assert_eq!(h.iterations.len(), 5);
        assert!(h.iterations.iter().all(|r| r.acquisition.is_none()));
        assert!(h.iterations.iter().all(|r| r.episodes.len() == 2 && r.rewards.len() == 2));
    }

    #[test]
    fn budget_below_random_phase_rejected() {
        let mut user = SimUser::for_env(EnvKind::Cursor);
        let cfg = TrainConfig::for_env(EnvKind::Cursor, 3);
        assert!(mimi_train(EnvKind::Cursor, &mut user, &cfg, 1).is_err());
    }

    #[test]
    fn reward_corruption_does_not_change_proposals() {
        let mut cfg = TrainConfig::for_env(EnvKind::Cursor, 7);
        cfg.estimator = quick();
        cfg.episodes_per_interface = 3;
        let mut user = SimUser::for_env(EnvKind::Cursor);
        let clean = mimi_train(EnvKind::Cursor, &mut user, &cfg, 9).unwrap();
        let mut user = SimUser::for_env(EnvKind::Cursor);
        let corrupted = mimi_train_with_hook(EnvKind::Cursor, &mut user, &cfg, 9, &mut |h| {
            for r in &mut h.iterations {
                r.rewards.iter_mut().for_each(|v| *v = -1e9);
                for ep in &mut r.episodes {
                    ep.strip_rewards();
                }
            }
        })
        .unwrap();
        let bits = |h: &RunHistory| -> Vec<Vec<u64>> {
            h.proposals().iter().map(|t| t.iter().map(|v| v.to_bits()).collect()).collect()
        };
        assert_eq!(bits(&clean), bits(&corrupted));
        let best = clean.best_so_far();
        assert!(best.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn short_episodes_get_penalty_score() {
        let mut trainer = Trainer::new(EnvKind::Cursor, TrainConfig::for_env(EnvKind::Cursor, 5), 0).unwrap();
        let proposal = trainer.propose().unwrap();
        let one_step = {
            let mut rng = Rng::new(0);
            let p = proposal.params.clone();
            let init = EnvState::reset(EnvKind::Cursor, &mut rng);
            let mut ep = run_episode(&p, init, &mut crate::envs::OracleCommander::new(p.clone()), &mut rng, EpisodeMeta::default()).unwrap();
            ep.records.truncate(1);
            ep
        };
        let r = trainer.record(&proposal, vec![one_step.clone()], 0).unwrap();
        assert_eq!(r.score, -1.0);
        assert!(r.mi.is_none());
        let proposal = trainer.propose().unwrap();
        let r = trainer.record(&proposal, vec![one_step], 0).unwrap();
        assert_eq!(r.score, -2.0);
    }
}
