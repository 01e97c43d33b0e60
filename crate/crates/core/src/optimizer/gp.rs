//! Gaussian-process surrogate over interface parameters.

use serde::{Deserialize, Serialize};

use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::numerics::linalg::{Cholesky, Mat};
use crate::numerics::{nelder_mead, NelderMeadConfig, Rng};

pub const JITTER: f64 = 1e-8;
pub const GP_RESTARTS: usize = 8;

const LOG_LENGTH: (f64, f64) = (-3.0, 3.0);
const LOG_SIGNAL: (f64, f64) = (-3.0, 3.0);
const LOG_NOISE: (f64, f64) = (-12.0, 0.0);

/// How raw θ becomes kernel features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Embedding {
    /// One angle, mapped to `(cos θ, sin θ)` with a single length scale.
    Angle,
    /// `n` box coordinates, one length scale each.
    Box(usize),
}

impl Embedding {
    pub fn for_env(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Cursor => Embedding::Angle,
            EnvKind::Lander => Embedding::Box(kind.interface_dim()),
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            Embedding::Angle => 1,
            Embedding::Box(n) => n,
        }
    }

    pub fn num_length_scales(self) -> usize {
        self.input_dim()
    }

    /// Features paired with the index of their length scale.
    fn features(self, theta: &[f64]) -> Vec<(f64, usize)> {
        match self {
            Embedding::Angle => vec![(theta[0].cos(), 0), (theta[0].sin(), 0)],
            Embedding::Box(_) => theta.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl Hyperparams {
    pub fn default_for(embedding: Embedding) -> Self {
        Self {
            signal_variance: 1.0,
            length_scales: vec![1.0; embedding.num_length_scales()],
            noise_variance: 0.1,
        }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v = vec![self.signal_variance.ln()];
        v.extend(self.length_scales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        v
    }

    /// Inverse of `to_log`, clamping every coordinate into its box.
    fn from_log(v: &[f64]) -> Self {
        let n = v.len() - 2;
        Self {
            signal_variance: v[0].clamp(LOG_SIGNAL.0, LOG_SIGNAL.1).exp(),
            length_scales: v[1..=n]
                .iter()
                .map(|l| l.clamp(LOG_LENGTH.0, LOG_LENGTH.1).exp())
                .collect(),
            noise_variance: v[n + 1].clamp(LOG_NOISE.0, LOG_NOISE.1).exp(),
        }
    }
}

/// Squared-exponential kernel on embedded features.
pub fn kernel(embedding: Embedding, hp: &Hyperparams, a: &[f64], b: &[f64]) -> f64 {
    let fa = embedding.features(a);
    let fb = embedding.features(b);
    let mut r2 = 0.0;
    for ((u, li), (v, _)) in fa.iter().zip(&fb) {
        let l = hp.length_scales[*li];
        r2 += (u - v) * (u - v) / (l * l);
    }
    hp.signal_variance * (-0.5 * r2).exp()
}

/// Fitted GP. Scores are standardized internally; `predict` reports in
/// the original units.
#[derive(Debug, Clone)]
pub struct GpModel {
    embedding: Embedding,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    hp: Hyperparams,
    chol: Cholesky,
    alpha: Vec<f64>,
    log_marginal: f64,
}

fn covariance(embedding: Embedding, hp: &Hyperparams, inputs: &[Vec<f64>]) -> Mat {
    let n = inputs.len();
    let mut k = Mat::from_fn(n, n, |i, j| kernel(embedding, hp, &inputs[i], &inputs[j]));
    for i in 0..n {
        k[(i, i)] += hp.noise_variance + JITTER;
    }
    k
}

/// `log p(y | X, hp)` for standardized targets.
pub fn log_marginal_likelihood(
    embedding: Embedding,
    hp: &Hyperparams,
    inputs: &[Vec<f64>],
    y: &[f64],
) -> Result<f64> {
    let chol = Cholesky::new(&covariance(embedding, hp, inputs))?;
    let alpha = chol.solve(y);
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let n = y.len() as f64;
    Ok(-0.5 * fit - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

fn standardize(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

fn validate_pairs(embedding: Embedding, inputs: &[Vec<f64>], scores: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if inputs.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: scores.len(),
        });
    }
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != embedding.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: embedding.input_dim(),
                got: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) || !scores[i].is_finite() {
            return Err(Error::NonFinite {
                context: "gp observation",
                index: i,
            });
        }
    }
    Ok(())
}

impl GpModel {
    /// Fits hyperparameters by maximizing the marginal likelihood from
    /// `GP_RESTARTS` starts (the defaults, then random points in the
    /// log box), keeping the best; ties go to the earlier start.
    pub fn fit(embedding: Embedding, inputs: &[Vec<f64>], scores: &[f64], rng: &mut Rng) -> Result<Self> {
        validate_pairs(embedding, inputs, scores)?;
        let (y_mean, y_scale) = standardize(scores);
        let y: Vec<f64> = scores.iter().map(|v| (v - y_mean) / y_scale).collect();

        let objective = |v: &[f64]| {
            let hp = Hyperparams::from_log(v);
            match log_marginal_likelihood(embedding, &hp, inputs, &y) {
                Ok(l) => -l,
                Err(_) => f64::INFINITY,
            }
        };
        let config = NelderMeadConfig {
            max_evals: 300,
            f_tol: 1e-7,
            initial_step: 0.5,
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for restart in 0..GP_RESTARTS {
            let start = if restart == 0 {
                Hyperparams::default_for(embedding).to_log()
            } else {
                let mut v = vec![rng.uniform_in(-1.0, 1.0)];
                v.extend((0..embedding.num_length_scales()).map(|_| rng.uniform_in(-2.0, 1.5)));
                v.push(rng.uniform_in(-8.0, -1.0));
                v
            };
            let m = nelder_mead(objective, &start, &config);
            if m.value.is_finite() && best.as_ref().is_none_or(|(b, _)| m.value < *b) {
                best = Some((m.value, m.x));
            }
        }
        let hp = match best {
            Some((_, v)) => Hyperparams::from_log(&v),
            None => Hyperparams::default_for(embedding),
        };
        Self::with_hyperparams(embedding, inputs, scores, hp)
    }

    /// Posterior under fixed hyperparameters.
    pub fn with_hyperparams(
        embedding: Embedding,
        inputs: &[Vec<f64>],
        scores: &[f64],
        hp: Hyperparams,
    ) -> Result<Self> {
        validate_pairs(embedding, inputs, scores)?;
        if hp.length_scales.len() != embedding.num_length_scales() {
            return Err(Error::DimensionMismatch {
                expected: embedding.num_length_scales(),
                got: hp.length_scales.len(),
            });
        }
        let (y_mean, y_scale) = standardize(scores);
        let y: Vec<f64> = scores.iter().map(|v| (v - y_mean) / y_scale).collect();
        let chol = Cholesky::new(&covariance(embedding, &hp, inputs))?;
        let alpha = chol.solve(&y);
        let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let n = y.len() as f64;
        let log_marginal = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            embedding,
            inputs: inputs.to_vec(),
            targets: y,
            y_mean,
            y_scale,
            hp,
            chol,
            alpha,
            log_marginal,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn embedding(&self) -> Embedding {
        self.embedding
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    /// Standardized training targets.
    pub fn standardized_targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    /// Posterior mean and standard deviation of the latent function in
    /// standardized units.
    pub fn predict_standardized(&self, theta: &[f64]) -> (f64, f64) {
        let k: Vec<f64> = self
            .inputs
            .iter()
            .map(|x| kernel(self.embedding, &self.hp, theta, x))
            .collect();
        let mean: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.chol.solve_lower(&k);
        let var = self.hp.signal_variance - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0).sqrt())
    }

    /// Posterior mean and standard deviation in score units.
    pub fn predict(&self, theta: &[f64]) -> (f64, f64) {
        let (m, s) = self.predict_standardized(theta);
        (self.y_mean + self.y_scale * m, self.y_scale * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    /// Dense posterior by explicit Gauss–Jordan inversion.
    fn naive_posterior(gp: &GpModel, inputs: &[Vec<f64>], scores: &[f64], q: &[f64]) -> (f64, f64) {
        let n = inputs.len();
        let mean_y = scores.iter().sum::<f64>() / n as f64;
        let sd = (scores.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sd = if sd > 1e-12 { sd } else { 1.0 };
        let y: Vec<f64> = scores.iter().map(|v| (v - mean_y) / sd).collect();
        let hp = gp.hyperparams();
        let e = gp.embedding();
        let mut a = vec![vec![0.0; 2 * n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = kernel(e, hp, &inputs[i], &inputs[j]);
            }
            a[i][i] += hp.noise_variance + JITTER;
            a[i][n + i] = 1.0;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
            a.swap(c, p);
            let d = a[c][c];
            for v in a[c].iter_mut() {
                *v /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = a[r][c];
                    let row_c = a[c].clone();
                    for (v, w) in a[r].iter_mut().zip(row_c) {
                        *v -= f * w;
                    }
                }
            }
        }
        let kinv = |i: usize, j: usize| a[i][n + j];
        let k: Vec<f64> = inputs.iter().map(|x| kernel(e, hp, q, x)).collect();
        let mut mean = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                mean += k[i] * kinv(i, j) * y[j];
                quad += k[i] * kinv(i, j) * k[j];
            }
        }
        let var = (hp.signal_variance - quad).max(0.0);
        (mean_y + sd * mean, sd * var.sqrt())
    }

    #[test]
    fn single_observation_interpolates() {
        let gp = GpModel::fit(Embedding::Angle, &[vec![1.0]], &[0.7], &mut Rng::new(0)).unwrap();
        let (m, _) = gp.predict(&[1.0]);
        let noise_sd = gp.hyperparams().noise_variance.sqrt();
        assert!((m - 0.7).abs() <= noise_sd.max(1e-9));
    }

    #[test]
    fn learns_sine() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![TAU * i as f64 / 12.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0].sin()).collect();
        let gp = GpModel::fit(Embedding::Angle, &xs, &ys, &mut Rng::new(1)).unwrap();
        let mut se = 0.0;
        for i in 0..200 {
            let t = TAU * i as f64 / 200.0;
            se += (gp.predict(&[t]).0 - t.sin()).powi(2);
        }
        assert!((se / 200.0).sqrt() < 0.1);
    }

    #[test]
    fn duplicates_with_spread_fit() {
        let xs = vec![vec![0.2, 0.3], vec![0.2, 0.3], vec![-0.5, 0.1]];
        let gp = GpModel::fit(Embedding::Box(2), &xs, &[1.0, 1.4, 0.0], &mut Rng::new(2)).unwrap();
        assert!(gp.hyperparams().noise_variance > 0.0);
        let (m, s) = gp.predict(&[0.2, 0.3]);
        assert!(m.is_finite() && s >= 0.0);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let xs = vec![vec![0.0], vec![0.1]];
        let hp = Hyperparams {
            signal_variance: 1.3,
            length_scales: vec![0.05],
            noise_variance: 1e-4,
        };
        let gp = GpModel::with_hyperparams(Embedding::Box(1), &xs, &[1.0, 2.0], hp).unwrap();
        let (m, s) = gp.predict_standardized(&[1.0]);
        assert!(m.abs() < 0.01);
        assert!((s - 1.3f64.sqrt()).abs() / 1.3f64.sqrt() < 0.01);
    }

    #[test]
    fn noiseless_limit_interpolates() {
        let xs = vec![vec![-0.5], vec![0.0], vec![0.6]];
        let ys = [0.3, -1.0, 2.0];
        let hp = Hyperparams {
            signal_variance: 1.0,
            length_scales: vec![0.4],
            noise_variance: 1e-12,
        };
        let gp = GpModel::with_hyperparams(Embedding::Box(1), &xs, &ys, hp).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            assert!((gp.predict(x).0 - y).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = Rng::new(3);
        for fit in 0..20 {
            let (emb, dim) = if fit % 2 == 0 { (Embedding::Angle, 1) } else { (Embedding::Box(3), 3) };
            let n = 3 + rng.index(10);
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.uniform_in(-1.0, 3.0)).collect())
                .collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let gp = GpModel::fit(emb, &xs, &ys, &mut rng).unwrap();
            for _ in 0..5 {
                let q: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-1.0, 3.0)).collect();
                let (m, s) = gp.predict(&q);
                let (mo, so) = naive_posterior(&gp, &xs, &ys, &q);
                assert!((m - mo).abs() < 1e-8, "mean {m} vs {mo}");
                assert!((s - so).abs() < 1e-8, "sd {s} vs {so}");
            }
        }
    }

    #[test]
    fn angle_kernel_is_periodic() {
        let hp = Hyperparams::default_for(Embedding::Angle);
        let a = kernel(Embedding::Angle, &hp, &[0.01], &[TAU - 0.01]);
        assert!(a > 0.99 * hp.signal_variance);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(GpModel::fit(Embedding::Angle, &[], &[], &mut Rng::new(0)).is_err());
        assert!(GpModel::fit(Embedding::Angle, &[vec![0.0]], &[f64::NAN], &mut Rng::new(0)).is_err());
    }
}
