//! Collected episodes and the `AIFTRAJ v1` text format.
//!
//! ```text
//! AIFTRAJ v1
//! # episode_id=0 start_position=-0.52 seed=17 initial_observation=-0.49
//! 0,1,0.25,-0.51,0,0
//! 0,2,0.25,-0.50,0,0
//!
//! # episode_id=1 ...
//! ```
//!
//! Step records are `episode_id,t,action,observation,reward,done` with `t`
//! starting at 1; the reset observation lives on the episode's `#` line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{AifError, Result};

pub const TRAJ_MAGIC: &str = "AIFTRAJ v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub action: f64,
    pub observation: f64,
    pub reward: f64,
    pub done: bool,
}

/// One episode: the reset observation followed by every transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub episode_id: usize,
    pub start_position: f64,
    pub seed: u64,
    pub initial_observation: f64,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn reached_goal(&self) -> bool {
        self.steps.last().is_some_and(|s| s.done && s.reward > 0.0)
    }

    /// Observations including the reset observation at index 0.
    pub fn observations(&self) -> Vec<f64> {
        std::iter::once(self.initial_observation)
            .chain(self.steps.iter().map(|s| s.observation))
            .collect()
    }

    /// Actions aligned with [`Trajectory::observations`]: index 0 holds the
    /// null action that precedes the reset observation.
    pub fn actions(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.steps.iter().map(|s| s.action))
            .collect()
    }

    /// Index (in the [`Trajectory::observations`] timeline) of the first rewarded step.
    pub fn reward_time(&self) -> Option<usize> {
        self.steps.iter().position(|s| s.reward > 0.0).map(|i| i + 1)
    }
}

pub fn format_trajectories(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    out.push_str(TRAJ_MAGIC);
    out.push('\n');
    for (i, traj) in trajectories.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "# episode_id={} start_position={} seed={} initial_observation={}",
            traj.episode_id, traj.start_position, traj.seed, traj.initial_observation
        );
        for (t, s) in traj.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                traj.episode_id,
                t + 1,
                s.action,
                s.observation,
                s.reward,
                u8::from(s.done)
            );
        }
    }
    out
}

pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    let bad = |line: usize, msg: &str| AifError::format("AIFTRAJ", format!("line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == TRAJ_MAGIC => {}
        Some((_, l)) => {
            return Err(AifError::format(
                "AIFTRAJ",
                format!("expected header {TRAJ_MAGIC:?}, found {l:?}"),
            ))
        }
        None => return Err(AifError::format("AIFTRAJ", "empty file")),
    }

    let mut out: Vec<Trajectory> = Vec::new();
    let mut current: Option<Trajectory> = None;
    for (idx, line) in lines {
        let n = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            if let Some(t) = current.take() {
                out.push(t);
            }
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(t) = current.take() {
                out.push(t);
            }
            current = Some(parse_meta(meta).map_err(|m| bad(n, &m))?);
            continue;
        }
        let traj = current
            .as_mut()
            .ok_or_else(|| bad(n, "step record before episode header"))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(n, "expected 6 comma-separated fields"));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(n, &format!("bad number {:?}", fields[i])))
        };
        let episode: usize = fields[0].trim().parse().map_err(|_| bad(n, "bad episode id"))?;
        let t: usize = fields[1].trim().parse().map_err(|_| bad(n, "bad timestep"))?;
        if episode != traj.episode_id {
            return Err(bad(n, "episode id differs from its header"));
        }
        if t != traj.steps.len() + 1 {
            return Err(bad(n, "timesteps must be consecutive from 1"));
        }
        let done = match fields[5].trim() {
            "0" => false,
            "1" => true,
            _ => return Err(bad(n, "done must be 0 or 1")),
        };
        traj.steps.push(Step {
            action: num(2)?,
            observation: num(3)?,
            reward: num(4)?,
            done,
        });
    }
    if let Some(t) = current.take() {
        out.push(t);
    }
    Ok(out)
}

fn parse_meta(meta: &str) -> std::result::Result<Trajectory, String> {
    let mut traj = Trajectory {
        episode_id: 0,
        start_position: f64::NAN,
        seed: 0,
        initial_observation: f64::NAN,
        steps: Vec::new(),
    };
    let mut seen = 0;
    for kv in meta.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad metadata {kv:?}"))?;
        match k {
            "episode_id" => traj.episode_id = parse_field(k, v)?,
            "start_position" => traj.start_position = parse_field(k, v)?,
            "seed" => traj.seed = parse_field(k, v)?,
            "initial_observation" => traj.initial_observation = parse_field(k, v)?,
            other => return Err(format!("unknown metadata key {other:?}")),
        }
        seen += 1;
    }
    if seen != 4 {
        return Err("episode header needs episode_id, start_position, seed, initial_observation".into());
    }
    Ok(traj)
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("bad value {value:?} for {key}"))
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    std::fs::write(path, format_trajectories(trajectories)).map_err(|e| AifError::io(path, e))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    if !path.exists() {
        return Err(AifError::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| AifError::io(path, e))?;
    parse_trajectories(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step_strategy() -> impl Strategy<Value = Step> {
        (-1.0..=1.0f64, -2.0..2.0f64, any::<bool>()).prop_map(|(a, o, d)| Step {
            action: a,
            observation: o,
            reward: if d { 1.0 } else { 0.0 },
            done: d,
        })
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            episodes in proptest::collection::vec(
                (proptest::collection::vec(step_strategy(), 0..20), -1.2..0.6f64, any::<u64>(), -2.0..2.0f64),
                1..5,
            )
        ) {
            let trajs: Vec<Trajectory> = episodes
                .into_iter()
                .enumerate()
                .map(|(i, (steps, start, seed, obs))| Trajectory {
                    episode_id: i,
                    start_position: start,
                    seed,
                    initial_observation: obs,
                    steps,
                })
                .collect();
            let text = format_trajectories(&trajs);
            prop_assert_eq!(parse_trajectories(&text).unwrap(), trajs);
        }
    }

    #[test]
    fn rejects_wrong_header_and_bad_records() {
        assert!(parse_trajectories("AIFTRAJ v2\n").is_err());
        assert!(parse_trajectories("").is_err());
        let no_header = "AIFTRAJ v1\n0,1,0,0,0,0\n";
        assert!(parse_trajectories(no_header).is_err());
        let gap = "AIFTRAJ v1\n# episode_id=0 start_position=-0.5 seed=1 initial_observation=-0.5\n0,2,0,0,0,0\n";
        assert!(parse_trajectories(gap).is_err());
    }
}
