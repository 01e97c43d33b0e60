//! Offline scoring of logged interfaces and rank correlation against
//! logged rewards.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EpisodeLog;
use crate::error::{Error, Result};
use crate::mi_estimator::{build_transition_dataset, seed_averaged_dataset, EstimatorConfig};

/// Ranks starting at 1; tied values share the mean of their rank span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points"));
    }
    if let Some(index) = xs.iter().chain(ys).position(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            context: "spearman input",
            index,
        });
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub user: String,
    pub condition: String,
    pub interface: String,
    pub episodes: usize,
    pub samples: usize,
    pub mi_mean: f64,
    pub mi_std_error: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedGroup {
    pub user: String,
    pub condition: String,
    pub interface: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub delta: usize,
    pub n_seeds: usize,
    pub rho: f64,
    pub group_count: usize,
    pub groups: Vec<GroupScore>,
    pub dropped: Vec<DroppedGroup>,
}

fn delta_label(delta: usize) -> String {
    if delta == usize::MAX {
        "T".to_string()
    } else {
        delta.to_string()
    }
}

impl CorrelationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table, one row per group.
    pub fn to_table(&self) -> String {
        let head = ["user", "condition", "interface", "episodes", "mi", "mi_se", "reward"];
        let rows: Vec<[String; 7]> = self
            .groups
            .iter()
            .map(|g| {
                [
                    g.user.clone(),
                    g.condition.clone(),
                    g.interface.clone(),
                    g.episodes.to_string(),
                    format!("{:.4}", g.mi_mean),
                    format!("{:.4}", g.mi_std_error),
                    format!("{:.3}", g.mean_reward),
                ]
            })
            .collect();
        let mut widths = head.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&head);
        for row in &rows {
            line(&row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        let _ = writeln!(
            out,
            "delta={}  seeds={}  groups={}  rho={:.4}",
            delta_label(self.delta),
            self.n_seeds,
            self.group_count,
            self.rho
        );
        for d in &self.dropped {
            let _ = writeln!(out, "dropped {}/{}/{}: {}", d.user, d.condition, d.interface, d.reason);
        }
        out
    }
}

/// Episodes grouped by `(user, condition, interface)` in order of first
/// appearance.
pub fn group_episodes(logs: &[EpisodeLog]) -> Vec<((String, String, String), Vec<&EpisodeLog>)> {
    let mut groups: Vec<((String, String, String), Vec<&EpisodeLog>)> = Vec::new();
    for ep in logs {
        let key = ep.group_key();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, eps)) => eps.push(ep),
            None => groups.push((key, vec![ep])),
        }
    }
    groups
}

struct GroupMi {
    key: (String, String, String),
    outcome: std::result::Result<(usize, usize, f64, f64), String>,
}

/// Scores every group without touching rewards.
fn score_groups(logs: &[EpisodeLog], delta: usize, n_seeds: usize, config: &EstimatorConfig) -> Result<Vec<GroupMi>> {
    let mut out = Vec::new();
    for (key, eps) in group_episodes(logs) {
        let owned: Vec<EpisodeLog> = eps.iter().map(|e| (*e).clone()).collect();
        let scored = build_transition_dataset(&owned, delta)
            .and_then(|ds| seed_averaged_dataset(&ds, n_seeds, config).map(|s| (ds.len(), s)));
        let outcome = match scored {
            Ok((samples, s)) => Ok((owned.len(), samples, s.mean, s.std_error)),
            Err(e @ (Error::InsufficientData { .. } | Error::EmptyDataset)) => Err(e.to_string()),
            Err(e) => return Err(e),
        };
        out.push(GroupMi { key, outcome });
    }
    Ok(out)
}

fn group_reward(eps: &[&EpisodeLog]) -> Result<f64> {
    let mut total = 0.0;
    for ep in eps {
        total += ep.total_reward().ok_or_else(|| {
            Error::contract(format!("episode {} has no logged rewards", ep.meta.episode_id))
        })?;
    }
    Ok(total / eps.len() as f64)
}

pub fn score_conditions(logs: &[EpisodeLog], delta: usize, n_seeds: usize) -> Result<CorrelationReport> {
    score_conditions_with(logs, delta, n_seeds, &EstimatorConfig::default())
}

/// Seed-averaged MI per group, then Spearman's ρ against each group's mean
/// episode reward. Groups too small for the estimator are dropped and
/// listed in the report.
pub fn score_conditions_with(
    logs: &[EpisodeLog],
    delta: usize,
    n_seeds: usize,
    config: &EstimatorConfig,
) -> Result<CorrelationReport> {
    let scored = score_groups(logs, delta, n_seeds, config)?;
    let grouped = group_episodes(logs);
    let mut groups = Vec::new();
    let mut dropped = Vec::new();
    for (g, (_, eps)) in scored.into_iter().zip(grouped) {
        let (user, condition, interface) = g.key;
        match g.outcome {
            Ok((episodes, samples, mi_mean, mi_std_error)) => groups.push(GroupScore {
                user,
                condition,
                interface,
                episodes,
                samples,
                mi_mean,
                mi_std_error,
                mean_reward: group_reward(&eps)?,
            }),
            Err(reason) => {
                log::warn!("dropping group {user}/{condition}/{interface}: {reason}");
                dropped.push(DroppedGroup {
                    user,
                    condition,
                    interface,
                    reason,
                });
            }
        }
    }
    if groups.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two scorable groups"));
    }
    let mi: Vec<f64> = groups.iter().map(|g| g.mi_mean).collect();
    let rewards: Vec<f64> = groups.iter().map(|g| g.mean_reward).collect();
    Ok(CorrelationReport {
        delta,
        n_seeds,
        rho: spearman_rho(&mi, &rewards)?,
        group_count: groups.len(),
        groups,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSweep {
    pub reports: Vec<CorrelationReport>,
}

impl DeltaSweep {
    pub fn rhos(&self) -> Vec<(usize, f64)> {
        self.reports.iter().map(|r| (r.delta, r.rho)).collect()
    }

    pub fn to_table(&self) -> String {
        let labels: Vec<String> = self.reports.iter().map(|r| delta_label(r.delta)).collect();
        let w = labels.iter().map(String::len).max().unwrap_or(1).max(5);
        let mut out = format!("{:>w$}  {:>8}  {:>6}\n", "delta", "rho", "groups");
        for (label, r) in labels.iter().zip(&self.reports) {
            let _ = writeln!(out, "{label:>w$}  {:>8.4}  {:>6}", r.rho, r.group_count);
        }
        out
    }
}

pub fn delta_sweep(logs: &[EpisodeLog], deltas: &[usize], n_seeds: usize) -> Result<DeltaSweep> {
    delta_sweep_with(logs, deltas, n_seeds, &EstimatorConfig::default())
}

pub fn delta_sweep_with(
    logs: &[EpisodeLog],
    deltas: &[usize],
    n_seeds: usize,
    config: &EstimatorConfig,
) -> Result<DeltaSweep> {
    if deltas.is_empty() {
        return Err(Error::contract("empty delta list"));
    }
    let reports = deltas
        .iter()
        .map(|&d| score_conditions_with(logs, d, n_seeds, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(DeltaSweep { reports })
}
