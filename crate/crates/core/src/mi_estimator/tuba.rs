//! The TUBA lower bound on `I(x, (s, s'))` and its fit/evaluate protocol.
//!
//! For a batch of transitions and one shuffled command `x̄` per sample,
//!
//! ```text
//! J = mean_b [ T(x_b, s_b, s'_b) - ( exp(T(x̄_b, s_b, s'_b) - a(s_b, s'_b)) + a(s_b, s'_b) - 1 ) ]
//! ```
//!
//! where `T` (statistics network) and `a` (log-partition baseline) are
//! scalar-output nets. The score of an interface is `J` on a held-out
//! validation split after a short, fixed training budget.

use log::warn;
use serde::{Deserialize, Serialize};

use super::dataset::{build_transition_dataset, Normalization, TransitionDataset, TransitionSample};
use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig, DenseNet, Rng, Workspace};
use crate::offline::EpisodeLog;

/// Smallest dataset [`mimi_evaluate`] accepts.
pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Upper clamp on the exponent argument `T(x̄) - a`.
    pub exp_clamp: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            steps: 1000,
            batch_size: 64,
            adam: AdamConfig::default(),
            exp_clamp: 80.0,
        }
    }
}

/// Statistics network and baseline, plus the input standardization they
/// were trained under.
#[derive(Debug, Clone)]
pub struct EstimatorPair {
    pub t_net: DenseNet,
    pub a_net: DenseNet,
    pub norm: Normalization,
}

impl EstimatorPair {
    pub fn new(norm: Normalization, hidden: &[usize], rng: &mut Rng) -> Self {
        let sdim = norm.state_dim();
        let xdim = norm.command_dim();
        let widths = |input: usize| {
            let mut w = vec![input];
            w.extend_from_slice(hidden);
            w.push(1);
            w
        };
        let t_net = DenseNet::new(&widths(xdim + 2 * sdim), rng);
        let a_net = DenseNet::new(&widths(2 * sdim), rng);
        Self { t_net, a_net, norm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// Bound value in nats.
    pub value: f64,
    /// Number of samples whose exponent hit the clamp.
    pub clamped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiScore {
    pub value: f64,
    pub seed: u64,
    pub train_size: usize,
    pub validation_size: usize,
    pub delta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAveragedScore {
    pub mean: f64,
    pub std_error: f64,
    pub scores: Vec<MiScore>,
}

/// Standardized inputs: commands and `[s, s']` rows.
struct Encoded {
    cmd: Vec<f64>,
    ss: Vec<f64>,
    xdim: usize,
    ssdim: usize,
}

impl Encoded {
    fn new(norm: &Normalization, samples: &[TransitionSample]) -> Self {
        let xdim = norm.command_dim();
        let ssdim = 2 * norm.state_dim();
        let mut cmd = Vec::with_capacity(samples.len() * xdim);
        let mut ss = Vec::with_capacity(samples.len() * ssdim);
        for s in samples {
            norm.push_command(&mut cmd, &s.command);
            norm.push_state(&mut ss, &s.state);
            norm.push_state(&mut ss, &s.next_state);
        }
        Self {
            cmd,
            ss,
            xdim,
            ssdim,
        }
    }

    fn cmd(&self, i: usize) -> &[f64] {
        &self.cmd[i * self.xdim..(i + 1) * self.xdim]
    }

    fn ss(&self, i: usize) -> &[f64] {
        &self.ss[i * self.ssdim..(i + 1) * self.ssdim]
    }

    /// Fills `t_in` with positive rows then negative rows, and `a_in` with
    /// the transition rows. `neg[b]` indexes the command paired with
    /// transition `idx[b]` in the negative half.
    fn assemble(&self, idx: &[usize], neg: &[usize], t_in: &mut Vec<f64>, a_in: &mut Vec<f64>) {
        t_in.clear();
        a_in.clear();
        for &i in idx {
            t_in.extend_from_slice(self.cmd(i));
            t_in.extend_from_slice(self.ss(i));
        }
        for (&i, &j) in idx.iter().zip(neg) {
            t_in.extend_from_slice(self.cmd(j));
            t_in.extend_from_slice(self.ss(i));
        }
        for &i in idx {
            a_in.extend_from_slice(self.ss(i));
        }
    }
}

/// Bound value from network outputs, and optionally the gradient of the
/// bound with respect to each output (`dt` over positives then negatives,
/// `da` per sample).
fn bound_terms(
    t_out: &[f64],
    a_out: &[f64],
    clamp: f64,
    grads: Option<(&mut [f64], &mut [f64])>,
) -> Objective {
    let b = a_out.len();
    let inv = 1.0 / b as f64;
    let (pos, neg) = t_out.split_at(b);
    let mut total = 0.0;
    let mut clamped = 0;
    let mut exps = Vec::with_capacity(b);
    for i in 0..b {
        let arg = neg[i] - a_out[i];
        let hit = arg > clamp;
        if hit {
            clamped += 1;
        }
        let e = arg.min(clamp).exp();
        exps.push((e, hit));
        total += pos[i] - (e + a_out[i] - 1.0);
    }
    if let Some((dt, da)) = grads {
        for i in 0..b {
            let (e, hit) = exps[i];
            dt[i] = inv;
            if hit {
                dt[b + i] = 0.0;
                da[i] = -inv;
            } else {
                dt[b + i] = -e * inv;
                da[i] = (e - 1.0) * inv;
            }
        }
    }
    Objective {
        value: total * inv,
        clamped,
    }
}

/// Evaluates the bound on `batch`, pairing sample `b` with `negatives[b]`
/// in the shuffled term.
pub fn tuba_objective(
    pair: &EstimatorPair,
    batch: &[TransitionSample],
    negatives: &[Vec<f64>],
) -> Result<Objective> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if negatives.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            got: negatives.len(),
        });
    }
    let xdim = pair.norm.command_dim();
    if let Some(bad) = negatives.iter().find(|x| x.len() != xdim) {
        return Err(Error::DimensionMismatch {
            expected: xdim,
            got: bad.len(),
        });
    }
    let enc = Encoded::new(&pair.norm, batch);
    let mut neg_cmd = Vec::with_capacity(batch.len() * xdim);
    for x in negatives {
        pair.norm.push_command(&mut neg_cmd, x);
    }
    let b = batch.len();
    let mut t_in = Vec::with_capacity(2 * b * (xdim + enc.ssdim));
    for i in 0..b {
        t_in.extend_from_slice(enc.cmd(i));
        t_in.extend_from_slice(enc.ss(i));
    }
    for i in 0..b {
        t_in.extend_from_slice(&neg_cmd[i * xdim..(i + 1) * xdim]);
        t_in.extend_from_slice(enc.ss(i));
    }
    let mut ws_t = Workspace::default();
    let mut ws_a = Workspace::default();
    pair.t_net.forward_batch(&t_in, 2 * b, &mut ws_t)?;
    pair.a_net.forward_batch(&enc.ss, b, &mut ws_a)?;
    let obj = bound_terms(ws_t.output(), ws_a.output(), 80.0, None);
    if obj.clamped > 0 {
        warn!("tuba objective: {} exponent(s) clamped", obj.clamped);
    }
    Ok(obj)
}

/// Trains a fresh estimator pair on `train` with the default budget:
/// 1000 ascent steps at batch size 64.
pub fn fit_tuba(train: &TransitionDataset, seed: u64) -> Result<EstimatorPair> {
    fit_tuba_with(train, seed, &EstimatorConfig::default())
}

pub fn fit_tuba_with(train: &TransitionDataset, seed: u64, config: &EstimatorConfig) -> Result<EstimatorPair> {
    let rng = Rng::new(seed);
    let mut init_rng = rng.fork(2);
    let mut batch_rng = rng.fork(3);
    let mut pair = EstimatorPair::new(train.normalization().clone(), &config.hidden, &mut init_rng);
    train_pair(&mut pair, train.samples(), &mut batch_rng, config)?;
    Ok(pair)
}

fn train_pair(
    pair: &mut EstimatorPair,
    samples: &[TransitionSample],
    rng: &mut Rng,
    config: &EstimatorConfig,
) -> Result<()> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let enc = Encoded::new(&pair.norm, samples);
    let b = config.batch_size;
    let mut t_opt = Adam::new(pair.t_net.num_params(), config.adam);
    let mut a_opt = Adam::new(pair.a_net.num_params(), config.adam);
    let mut t_grad = vec![0.0; pair.t_net.num_params()];
    let mut a_grad = vec![0.0; pair.a_net.num_params()];
    let mut ws_t = Workspace::default();
    let mut ws_a = Workspace::default();
    let mut t_in = Vec::new();
    let mut a_in = Vec::new();
    let mut dt = vec![0.0; 2 * b];
    let mut da = vec![0.0; b];
    let mut clamped_total = 0usize;
    for step in 0..config.steps {
        let idx = if n >= b {
            rng.sample_indices(n, b)
        } else {
            (0..b).map(|_| rng.index(n)).collect()
        };
        let perm = rng.permutation(b);
        let neg: Vec<usize> = perm.iter().map(|&p| idx[p]).collect();
        enc.assemble(&idx, &neg, &mut t_in, &mut a_in);
        pair.t_net.forward_batch(&t_in, 2 * b, &mut ws_t)?;
        pair.a_net.forward_batch(&a_in, b, &mut ws_a)?;
        let obj = bound_terms(ws_t.output(), ws_a.output(), config.exp_clamp, Some((&mut dt, &mut da)));
        if !obj.value.is_finite() {
            return Err(Error::NonFinite {
                context: "tuba training objective (step index)",
                index: step,
            });
        }
        clamped_total += obj.clamped;
        // Ascent on the bound is descent on its negation.
        dt.iter_mut().for_each(|g| *g = -*g);
        da.iter_mut().for_each(|g| *g = -*g);
        t_grad.iter_mut().for_each(|g| *g = 0.0);
        a_grad.iter_mut().for_each(|g| *g = 0.0);
        pair.t_net.backward_batch(&mut ws_t, &dt, &mut t_grad)?;
        pair.a_net.backward_batch(&mut ws_a, &da, &mut a_grad)?;
        t_opt.step(pair.t_net.params_mut(), &t_grad)?;
        a_opt.step(pair.a_net.params_mut(), &a_grad)?;
    }
    if clamped_total > 0 {
        warn!("tuba fit: {clamped_total} exponent(s) clamped during training");
    }
    Ok(())
}

/// Scores an already-built dataset: seeded 50/50 split, fit on the
/// training half, bound on the whole validation half.
pub fn score_dataset(dataset: &TransitionDataset, seed: u64, config: &EstimatorConfig) -> Result<MiScore> {
    if dataset.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES,
            got: dataset.len(),
        });
    }
    let rng = Rng::new(seed);
    let (train, val) = dataset.split_half(&mut rng.fork(1))?;
    let pair = fit_tuba_with(&train, seed, config)?;
    let perm = rng.fork(4).permutation(val.len());
    let negatives: Vec<Vec<f64>> = perm.iter().map(|&j| val.samples()[j].command.clone()).collect();
    let obj = tuba_objective(&pair, val.samples(), &negatives)?;
    Ok(MiScore {
        value: obj.value,
        seed,
        train_size: train.len(),
        validation_size: val.len(),
        delta: dataset.delta(),
    })
}

/// The interface score: validation-set TUBA bound for episodes collected
/// under one fixed interface.
pub fn mimi_evaluate(episodes: &[EpisodeLog], delta: usize, seed: u64) -> Result<MiScore> {
    mimi_evaluate_with(episodes, delta, seed, &EstimatorConfig::default())
}

pub fn mimi_evaluate_with(
    episodes: &[EpisodeLog],
    delta: usize,
    seed: u64,
    config: &EstimatorConfig,
) -> Result<MiScore> {
    let dataset = build_transition_dataset(episodes, delta)?;
    score_dataset(&dataset, seed, config)
}

/// Mean and standard error of the score over estimator seeds `0..n_seeds`.
pub fn seed_averaged_score(episodes: &[EpisodeLog], delta: usize, n_seeds: usize) -> Result<SeedAveragedScore> {
    let dataset = build_transition_dataset(episodes, delta)?;
    seed_averaged_dataset(&dataset, n_seeds, &EstimatorConfig::default())
}

pub fn seed_averaged_dataset(
    dataset: &TransitionDataset,
    n_seeds: usize,
    config: &EstimatorConfig,
) -> Result<SeedAveragedScore> {
    if n_seeds == 0 {
        return Err(Error::contract("need at least one estimator seed"));
    }
    let scores = (0..n_seeds as u64)
        .map(|seed| score_dataset(dataset, seed, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(scores))
}

fn summarize(scores: Vec<MiScore>) -> SeedAveragedScore {
    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s.value).sum::<f64>() / n;
    let std_error = if scores.len() > 1 {
        let var = scores.iter().map(|s| (s.value - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    SeedAveragedScore {
        mean,
        std_error,
        scores,
    }
}
