//! Preferred-state priors over the latent space, indexed by timestep.
//!
//! Prior index `k` lines up with observation index `k` of a trajectory
//! (`k == 0` is the reset observation).

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{check_dim, AifError, Result};
use crate::gaussian::DiagonalGaussian;
use crate::model::ModelSet;

pub const PRIOR_MAGIC: &str = "AIFPRIOR v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    Demos,
    Reward,
    Flat,
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorMode::Demos => "demos",
            PriorMode::Reward => "reward",
            PriorMode::Flat => "flat",
        })
    }
}

impl FromStr for PriorMode {
    type Err = AifError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demos" => Ok(PriorMode::Demos),
            "reward" => Ok(PriorMode::Reward),
            "flat" => Ok(PriorMode::Flat),
            other => Err(AifError::Config(format!(
                "unknown prior mode {other:?} (expected demos, reward or flat)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorStep {
    pub gaussian: DiagonalGaussian,
    /// Inactive steps exert no preference: their KL term is zero.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferredPrior {
    pub per_timestep: Vec<PriorStep>,
    pub mode: PriorMode,
    pub state_dim: usize,
    pub threshold: Option<usize>,
}

impl PreferredPrior {
    pub fn horizon(&self) -> usize {
        self.per_timestep.len()
    }

    /// Prior at `index`, clamped to the last timestep.
    pub fn at(&self, index: usize) -> &PriorStep {
        &self.per_timestep[index.min(self.per_timestep.len() - 1)]
    }

    pub fn last_active(&self) -> Option<&PriorStep> {
        self.per_timestep.iter().rev().find(|s| s.active)
    }
}

/// Diagonal Gaussian fitted per dimension over `points`, with sorted
/// summation so the result does not depend on the order of `points`.
fn fit_order_free(points: &[Vec<f64>]) -> Result<DiagonalGaussian> {
    let dim = points[0].len();
    let n = points.len() as f64;
    let mut mean = Vec::with_capacity(dim);
    let mut var = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut xs: Vec<f64> = points.iter().map(|p| p[d]).collect();
        xs.sort_by(f64::total_cmp);
        let shift = xs[0];
        let m = shift + xs.iter().map(|x| x - shift).sum::<f64>() / n;
        let mut dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
        dev.sort_by(f64::total_cmp);
        mean.push(m);
        var.push(dev.iter().sum::<f64>() / n);
    }
    DiagonalGaussian::new(mean, var)
}

/// Posterior-mean latent path of a trajectory, one state per observation.
pub fn encode_trajectory(models: &ModelSet, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    let beliefs = models.filter(&traj.actions(), &traj.observations(), None)?;
    Ok(beliefs.into_iter().map(|g| g.mean().to_vec()).collect())
}

pub fn prior_from_demos(models: &ModelSet, demos: &[Trajectory], horizon: usize) -> Result<PreferredPrior> {
    if demos.is_empty() {
        return Err(AifError::contract("prior_from_demos needs at least one demonstration"));
    }
    if horizon == 0 {
        return Err(AifError::contract("prior horizon must be at least 1"));
    }
    let paths = demos
        .iter()
        .map(|d| encode_trajectory(models, d))
        .collect::<Result<Vec<_>>>()?;
    let mut per_timestep = Vec::with_capacity(horizon);
    for tau in 0..horizon {
        let points: Vec<Vec<f64>> = paths
            .iter()
            .map(|p| p[tau.min(p.len() - 1)].clone())
            .collect();
        per_timestep.push(PriorStep {
            gaussian: fit_order_free(&points)?,
            active: true,
        });
    }
    Ok(PreferredPrior {
        per_timestep,
        mode: PriorMode::Demos,
        state_dim: models.state_dim,
        threshold: None,
    })
}

/// Gaussian over the latent states at which reward arrived at or after
/// `threshold`; earlier timesteps are inactive.
pub fn prior_from_reward(
    models: &ModelSet,
    dataset: &[Trajectory],
    threshold: usize,
    horizon: usize,
) -> Result<PreferredPrior> {
    if horizon == 0 {
        return Err(AifError::contract("prior horizon must be at least 1"));
    }
    let mut points = Vec::new();
    for traj in dataset {
        let rewarded: Vec<usize> = traj
            .steps
            .iter()
            .enumerate()
            .filter(|(i, s)| s.reward > 0.0 && i + 1 >= threshold)
            .map(|(i, _)| i + 1)
            .collect();
        if rewarded.is_empty() {
            continue;
        }
        let path = encode_trajectory(models, traj)?;
        points.extend(rewarded.into_iter().map(|t| path[t].clone()));
    }
    if points.is_empty() {
        return Err(AifError::InsufficientRewardData(format!(
            "no rewarded step at t >= {threshold} in {} episodes",
            dataset.len()
        )));
    }
    let fitted = fit_order_free(&points)?;
    let per_timestep = (0..horizon)
        .map(|tau| PriorStep {
            gaussian: fitted.clone(),
            active: tau >= threshold,
        })
        .collect();
    Ok(PreferredPrior {
        per_timestep,
        mode: PriorMode::Reward,
        state_dim: models.state_dim,
        threshold: Some(threshold),
    })
}

pub fn flat_prior(state_dim: usize, horizon: usize) -> Result<PreferredPrior> {
    if horizon == 0 || state_dim == 0 {
        return Err(AifError::contract("flat prior needs positive state_dim and horizon"));
    }
    Ok(PreferredPrior {
        per_timestep: vec![
            PriorStep {
                gaussian: DiagonalGaussian::standard(state_dim),
                active: false,
            };
            horizon
        ],
        mode: PriorMode::Flat,
        state_dim,
        threshold: None,
    })
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// `AIFPRIOR v1` text: manifest lines, then `t,active,mean...,variance...` records.
pub fn format_prior(prior: &PreferredPrior) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PRIOR_MAGIC}");
    let _ = writeln!(out, "mode {}", prior.mode);
    let _ = writeln!(out, "horizon {}", prior.horizon());
    let _ = writeln!(out, "state_dim {}", prior.state_dim);
    match prior.threshold {
        Some(t) => {
            let _ = writeln!(out, "threshold {t}");
        }
        None => out.push_str("threshold none\n"),
    }
    for (t, step) in prior.per_timestep.iter().enumerate() {
        let _ = writeln!(
            out,
            "{t},{},{},{}",
            u8::from(step.active),
            join(step.gaussian.mean()),
            join(step.gaussian.variance())
        );
    }
    out
}

pub fn parse_prior(text: &str) -> Result<PreferredPrior> {
    let bad = |m: String| AifError::format("AIFPRIOR", m);
    let mut lines = text.lines();
    if lines.next() != Some(PRIOR_MAGIC) {
        return Err(bad(format!("missing {PRIOR_MAGIC:?} header")));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing {key} line")))?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(format!("expected `{key} <value>`, found {line:?}")))
    };
    let mode: PriorMode = field("mode")?.parse()?;
    let horizon: usize = field("horizon")?.parse().map_err(|_| bad("bad horizon".into()))?;
    let state_dim: usize = field("state_dim")?.parse().map_err(|_| bad("bad state_dim".into()))?;
    let threshold = match field("threshold")?.as_str() {
        "none" => None,
        t => Some(t.parse().map_err(|_| bad(format!("bad threshold {t:?}")))?),
    };
    let mut per_timestep = Vec::with_capacity(horizon);
    for (t, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + 2 * state_dim {
            return Err(bad(format!("record {t}: expected {} fields", 2 + 2 * state_dim)));
        }
        if fields[0].parse::<usize>() != Ok(t) {
            return Err(bad(format!("record {t}: timesteps must count up from 0")));
        }
        let active = match fields[1] {
            "0" => false,
            "1" => true,
            _ => return Err(bad(format!("record {t}: active must be 0 or 1"))),
        };
        let nums = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("record {t}: bad number {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let (mean, var) = nums.split_at(state_dim);
        per_timestep.push(PriorStep {
            gaussian: DiagonalGaussian::new(mean.to_vec(), var.to_vec())?,
            active,
        });
    }
    check_dim("AIFPRIOR records", horizon, per_timestep.len())?;
    if horizon == 0 {
        return Err(bad("horizon must be at least 1".into()));
    }
    Ok(PreferredPrior {
        per_timestep,
        mode,
        state_dim,
        threshold,
    })
}

pub fn write_prior(path: &Path, prior: &PreferredPrior) -> Result<()> {
    std::fs::write(path, format_prior(prior)).map_err(|e| AifError::io(path, e))
}

pub fn read_prior(path: &Path) -> Result<PreferredPrior> {
    if !path.exists() {
        return Err(AifError::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| AifError::io(path, e))?;
    parse_prior(&text)
}
