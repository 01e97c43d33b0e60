//! Episode logs and their line-delimited file format.
//!
//! A log file is UTF-8 text with one JSON object per line:
//!
//! ```text
//! {"type":"header","schema":1,"env":"cursor","state_dim":4,"command_dim":2,"action_dim":2,"delta_default":1}
//! {"type":"step","episode":0,"t":0,"s":[..],"x":[..],"a":[..],"s_next":[..],"r":-0.41}
//! {"type":"step","episode":0,"t":1,...}
//! {"type":"episode","episode":0,"user":"u0","condition":"mimi","interface":"3","env":"cursor","seed":7,"goal":[0.8,0.2],"outcome":"success"}
//! ```
//!
//! Step lines of an episode come first; the closing `episode` line carries
//! its metadata. An episode without a closing line is incomplete. Floats
//! are written in shortest round-trip form, so write → read → write is
//! byte-identical.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub timestep: u32,
    pub state: Vec<f64>,
    pub command: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    /// Ground-truth step reward. Evaluation only.
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Target reached or lander landed.
    Success,
    /// Lander crashed.
    Failure,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_id: u64,
    pub user_id: String,
    pub condition_id: String,
    pub interface_id: String,
    pub env_id: String,
    pub seed: u64,
    /// Task context hidden from the interface: cursor target or lander
    /// landing-zone center.
    pub goal: Vec<f64>,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub meta: EpisodeMeta,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn new(meta: EpisodeMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
        }
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The state sequence `s_0 .. s_T` (one longer than the record list).
    pub fn states(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.records.iter().map(|r| r.state.as_slice()).collect();
        if let Some(last) = self.records.last() {
            out.push(&last.next_state);
        }
        out
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.records.last().map(|r| r.next_state.as_slice())
    }

    /// Sum of logged step rewards; `None` if any step lacks one.
    pub fn total_reward(&self) -> Option<f64> {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// Removes every ground-truth reward from the log.
    pub fn strip_rewards(&mut self) {
        for r in &mut self.records {
            r.reward = None;
        }
    }

    /// `(user, condition, interface)`: the unit offline scores are grouped by.
    pub fn group_key(&self) -> (String, String, String) {
        (
            self.meta.user_id.clone(),
            self.meta.condition_id.clone(),
            self.meta.interface_id.clone(),
        )
    }

    pub fn widths(&self) -> Option<Widths> {
        self.records.first().map(|r| Widths {
            state: r.state.len(),
            command: r.command.len(),
            action: r.action.len(),
        })
    }

    /// Checks contiguous timesteps, constant widths, and finite entries.
    pub fn validate(&self) -> Result<()> {
        let Some(w) = self.widths() else {
            return Ok(());
        };
        let id = self.meta.episode_id;
        for (i, r) in self.records.iter().enumerate() {
            if r.timestep as usize != i {
                return Err(Error::EpisodeWidth {
                    episode: id,
                    message: format!("timestep {} at position {i}", r.timestep),
                });
            }
            if r.state.len() != w.state || r.next_state.len() != w.state {
                return Err(Error::EpisodeWidth {
                    episode: id,
                    message: format!("state width changes at t={i}"),
                });
            }
            if r.command.len() != w.command || r.action.len() != w.action {
                return Err(Error::EpisodeWidth {
                    episode: id,
                    message: format!("command/action width changes at t={i}"),
                });
            }
            let all = r
                .state
                .iter()
                .chain(&r.command)
                .chain(&r.action)
                .chain(&r.next_state);
            if all.clone().any(|v| !v.is_finite()) {
                return Err(Error::EpisodeWidth {
                    episode: id,
                    message: format!("non-finite entry at t={i}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub state: usize,
    pub command: usize,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: u32,
    pub env: String,
    pub state_dim: usize,
    pub command_dim: usize,
    pub action_dim: usize,
    pub delta_default: usize,
}

impl LogHeader {
    pub fn new(env: &str, widths: Widths) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            env: env.to_string(),
            state_dim: widths.state,
            command_dim: widths.command,
            action_dim: widths.action,
            delta_default: 1,
        }
    }

    fn widths(&self) -> Widths {
        Widths {
            state: self.state_dim,
            command: self.command_dim,
            action: self.action_dim,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(LogHeader),
    Step {
        episode: u64,
        t: u32,
        s: Vec<f64>,
        x: Vec<f64>,
        a: Vec<f64>,
        s_next: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<f64>,
    },
    Episode {
        episode: u64,
        user: String,
        condition: String,
        interface: String,
        env: String,
        seed: u64,
        goal: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<Outcome>,
    },
}

/// Writes episodes as log text. Episodes must share the header's widths.
pub fn write_episodes<W: Write>(out: &mut W, header: &LogHeader, episodes: &[EpisodeLog]) -> Result<()> {
    write_line(out, &Line::Header(header.clone()))?;
    for ep in episodes {
        append_episode(out, ep)?;
    }
    Ok(())
}

/// Appends one complete episode (its steps, then its closing line).
pub fn append_episode<W: Write>(out: &mut W, ep: &EpisodeLog) -> Result<()> {
    for r in &ep.records {
        write_line(
            out,
            &Line::Step {
                episode: ep.meta.episode_id,
                t: r.timestep,
                s: r.state.clone(),
                x: r.command.clone(),
                a: r.action.clone(),
                s_next: r.next_state.clone(),
                r: r.reward,
            },
        )?;
    }
    let m = &ep.meta;
    write_line(
        out,
        &Line::Episode {
            episode: m.episode_id,
            user: m.user_id.clone(),
            condition: m.condition_id.clone(),
            interface: m.interface_id.clone(),
            env: m.env_id.clone(),
            seed: m.seed,
            goal: m.goal.clone(),
            outcome: m.outcome,
        },
    )
}

fn write_line<W: Write>(out: &mut W, line: &Line) -> Result<()> {
    let text = serde_json::to_string(line)?;
    writeln!(out, "{text}").map_err(|e| Error::io("<log>", e))
}

pub fn episodes_to_string(header: &LogHeader, episodes: &[EpisodeLog]) -> Result<String> {
    let mut buf = Vec::new();
    write_episodes(&mut buf, header, episodes)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn save_episodes(path: &Path, header: &LogHeader, episodes: &[EpisodeLog]) -> Result<()> {
    let text = episodes_to_string(header, episodes)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses log text. Returns the header (if the text is non-empty) and the
/// complete episodes in file order.
pub fn parse_episodes<R: BufRead>(input: R) -> Result<(Option<LogHeader>, Vec<EpisodeLog>)> {
    let mut header: Option<LogHeader> = None;
    let mut episodes = Vec::new();
    let mut open: Option<(u64, Vec<StepRecord>)> = None;
    let last_complete = |eps: &[EpisodeLog]| match eps.last() {
        Some(e) => format!("last complete episode is {}", e.meta.episode_id),
        None => "no complete episode".to_string(),
    };
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: format!("{e}; {}", last_complete(&episodes)),
        })?;
        match parsed {
            Line::Header(h) => {
                if header.is_some() || !episodes.is_empty() || open.is_some() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "header must be the first line".into(),
                    });
                }
                header = Some(h);
            }
            Line::Step {
                episode,
                t,
                s,
                x,
                a,
                s_next,
                r,
            } => {
                if header.is_none() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "missing header".into(),
                    });
                }
                let steps = match &mut open {
                    Some((id, steps)) if *id == episode => steps,
                    Some((id, _)) => {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!(
                                "episode {episode} starts before episode {id} is closed; {}",
                                last_complete(&episodes)
                            ),
                        })
                    }
                    None => &mut open.insert((episode, Vec::new())).1,
                };
                steps.push(StepRecord {
                    timestep: t,
                    state: s,
                    command: x,
                    action: a,
                    next_state: s_next,
                    reward: r,
                });
            }
            Line::Episode {
                episode,
                user,
                condition,
                interface,
                env,
                seed,
                goal,
                outcome,
            } => {
                let Some(h) = &header else {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "missing header".into(),
                    });
                };
                let records = match open.take() {
                    Some((id, steps)) if id == episode => steps,
                    Some((id, _)) => {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("closing line for {episode} while {id} is open"),
                        })
                    }
                    None => Vec::new(),
                };
                let ep = EpisodeLog {
                    meta: EpisodeMeta {
                        episode_id: episode,
                        user_id: user,
                        condition_id: condition,
                        interface_id: interface,
                        env_id: env,
                        seed,
                        goal,
                        outcome,
                    },
                    records,
                };
                ep.validate()?;
                if let Some(w) = ep.widths() {
                    if w != h.widths() {
                        return Err(Error::EpisodeWidth {
                            episode,
                            message: format!("widths {w:?} differ from header {:?}", h.widths()),
                        });
                    }
                }
                episodes.push(ep);
            }
        }
    }
    if let Some((id, _)) = open {
        return Err(Error::Parse {
            line: 0,
            message: format!("truncated log: episode {id} is incomplete; {}", last_complete(&episodes)),
        });
    }
    Ok((header, episodes))
}

/// Loads every complete episode from a log file. An empty file yields an
/// empty list.
pub fn load_episodes(path: &Path) -> Result<Vec<EpisodeLog>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_episodes(BufReader::new(file))?.1)
}
