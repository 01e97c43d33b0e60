use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::offline::EpisodeLog;

/// Offset that always pairs a command with its episode's final state.
pub const FINAL_STATE: usize = usize::MAX;

/// One `(s_t, x_t, s_{t+Δ})` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub state: Vec<f64>,
    pub command: Vec<f64>,
    pub next_state: Vec<f64>,
}

/// Per-dimension affine standardization of states and commands.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub state_mean: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub command_mean: Vec<f64>,
    pub command_scale: Vec<f64>,
}

fn mean_and_scale<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows.clone() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
        n += 1;
    }
    let nf = n.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / nf).sqrt();
            if sd > 1e-8 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

impl Normalization {
    /// Statistics over the samples. States pool `s_t` and `s_{t+Δ}` so both
    /// share one transform. Degenerate dimensions get scale 1.
    pub fn fit(samples: &[TransitionSample]) -> Self {
        let sdim = samples.first().map_or(0, |s| s.state.len());
        let xdim = samples.first().map_or(0, |s| s.command.len());
        let states = samples
            .iter()
            .flat_map(|s| [s.state.as_slice(), s.next_state.as_slice()]);
        let (state_mean, state_scale) = mean_and_scale(states, sdim);
        let (command_mean, command_scale) =
            mean_and_scale(samples.iter().map(|s| s.command.as_slice()), xdim);
        Self {
            state_mean,
            state_scale,
            command_mean,
            command_scale,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_mean.len()
    }

    pub fn command_dim(&self) -> usize {
        self.command_mean.len()
    }

    pub(crate) fn push_state(&self, out: &mut Vec<f64>, s: &[f64]) {
        out.extend(
            s.iter()
                .zip(&self.state_mean)
                .zip(&self.state_scale)
                .map(|((v, m), k)| (v - m) / k),
        );
    }

    pub(crate) fn push_command(&self, out: &mut Vec<f64>, x: &[f64]) {
        out.extend(
            x.iter()
                .zip(&self.command_mean)
                .zip(&self.command_scale)
                .map(|((v, m), k)| (v - m) / k),
        );
    }
}

#[derive(Debug, Clone)]
pub struct TransitionDataset {
    samples: Vec<TransitionSample>,
    delta: usize,
    norm: Normalization,
}

impl TransitionDataset {
    pub fn from_samples(samples: Vec<TransitionSample>, delta: usize) -> Result<Self> {
        if delta == 0 {
            return Err(Error::contract("time offset must be at least 1"));
        }
        let Some(first) = samples.first() else {
            return Err(Error::EmptyDataset);
        };
        let (sdim, xdim) = (first.state.len(), first.command.len());
        for s in &samples {
            if s.state.len() != sdim || s.next_state.len() != sdim {
                return Err(Error::DimensionMismatch {
                    expected: sdim,
                    got: s.state.len().max(s.next_state.len()),
                });
            }
            if s.command.len() != xdim {
                return Err(Error::DimensionMismatch {
                    expected: xdim,
                    got: s.command.len(),
                });
            }
            let finite = s.state.iter().chain(&s.command).chain(&s.next_state).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite {
                    context: "transition sample",
                    index: 0,
                });
            }
        }
        let norm = Normalization::fit(&samples);
        Ok(Self {
            samples,
            delta,
            norm,
        })
    }

    pub fn samples(&self) -> &[TransitionSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn state_dim(&self) -> usize {
        self.samples[0].state.len()
    }

    pub fn command_dim(&self) -> usize {
        self.samples[0].command.len()
    }

    /// Seeded shuffle, then the first `floor(n/2)` samples become the
    /// training split. Each split carries its own statistics.
    pub fn split_half(&self, rng: &mut Rng) -> Result<(TransitionDataset, TransitionDataset)> {
        let perm = rng.permutation(self.samples.len());
        let n_train = self.samples.len() / 2;
        let pick = |idx: &[usize]| idx.iter().map(|&i| self.samples[i].clone()).collect::<Vec<_>>();
        Ok((
            TransitionDataset::from_samples(pick(&perm[..n_train]), self.delta)?,
            TransitionDataset::from_samples(pick(&perm[n_train..]), self.delta)?,
        ))
    }
}

/// Pairs every command with the state `delta` steps later, clamped to the
/// episode's final state. Samples never cross episode boundaries.
pub fn build_transition_dataset(episodes: &[EpisodeLog], delta: usize) -> Result<TransitionDataset> {
    if delta == 0 {
        return Err(Error::contract("time offset must be at least 1"));
    }
    if episodes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut samples = Vec::new();
    for ep in episodes {
        let states = ep.states();
        let last = ep.len();
        for (t, rec) in ep.records.iter().enumerate() {
            let target = t.saturating_add(delta).min(last);
            samples.push(TransitionSample {
                state: rec.state.clone(),
                command: rec.command.clone(),
                next_state: states[target].to_vec(),
            });
        }
    }
    TransitionDataset::from_samples(samples, delta)
}
