//! Closed-form algebra for diagonal multivariate Gaussians.
//!
//! Every belief in the toolkit (posterior and transition beliefs over latent
//! states, likelihoods over observations, preferred-state priors) is a
//! [`DiagonalGaussian`]. All arithmetic here is in `f64`.
//!
//! ```text
//! log N(x; m, v) = sum_i -0.5 ln(2 pi v_i) - (x_i - m_i)^2 / (2 v_i)
//! KL(q || p)     = 0.5 sum_i ln(vp_i / vq_i) + (vq_i + (mq_i - mp_i)^2) / vp_i - 1
//! H(g)           = 0.5 sum_i 1 + ln(2 pi v_i)
//! ```


use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, AifError, Result};

/// Lower bound applied to every variance at construction.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// `ln(2 pi)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean and per-dimension variance over a latent, observation or action space.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl DiagonalGaussian {
    /// Builds a Gaussian, clamping each variance to at least [`VARIANCE_FLOOR`].
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        check_dim("DiagonalGaussian::new", mean.len(), variance.len())?;
        if mean.is_empty() {
            return Err(AifError::contract("a Gaussian needs at least one dimension"));
        }
        if mean.iter().chain(&variance).any(|v| !v.is_finite()) {
            return Err(AifError::contract("Gaussian parameters must be finite"));
        }
        let variance = variance.into_iter().map(floor_variance).collect();
        Ok(Self { mean, variance })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            variance: vec![1.0; dim],
        }
    }

    /// Same variance in every dimension.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, vec![variance; n])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    /// Fits per-dimension mean and (population) variance over a set of points.
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| AifError::contract("cannot fit a Gaussian to zero points"))?;
        let dim = first.len();
        let n = points.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in points {
            check_dim("DiagonalGaussian::fit", dim, p.len())?;
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut variance = vec![0.0; dim];
        for p in points {
            for ((v, x), m) in variance.iter_mut().zip(p).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        variance.iter_mut().for_each(|v| *v /= n);
        Self::new(mean, variance)
    }
}

#[inline]
pub(crate) fn floor_variance(v: f64) -> f64 {
    if v < VARIANCE_FLOOR {
        VARIANCE_FLOOR
    } else {
        v
    }
}

/// Log-density of `x` under `g`.
pub fn log_prob(x: &[f64], g: &DiagonalGaussian) -> Result<f64> {
    check_dim("log_prob", g.dim(), x.len())?;
    Ok(x.iter()
        .zip(&g.mean)
        .zip(&g.variance)
        .map(|((x, m), v)| -0.5 * (LN_2PI + v.ln()) - (x - m) * (x - m) / (2.0 * v))
        .sum())
}

/// `KL(q || p)` in closed form. Never negative.
pub fn kl_divergence(q: &DiagonalGaussian, p: &DiagonalGaussian) -> Result<f64> {
    check_dim("kl_divergence", p.dim(), q.dim())?;
    let kl: f64 = q
        .mean
        .iter()
        .zip(&q.variance)
        .zip(p.mean.iter().zip(&p.variance))
        .map(|((mq, vq), (mp, vp))| {
            let d = mq - mp;
            (vp / vq).ln() + (vq + d * d) / vp - 1.0
        })
        .sum();
    // Rounding can leave tiny negative residues when q == p.
    Ok((0.5 * kl).max(0.0))
}

/// Differential entropy of `g`.
pub fn entropy(g: &DiagonalGaussian) -> f64 {
    g.variance.iter().map(|v| 0.5 * (1.0 + LN_2PI + v.ln())).sum()
}

/// `mean + sqrt(variance) * noise`, with `noise` drawn by the caller from N(0, I).
pub fn reparam_sample(g: &DiagonalGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    check_dim("reparam_sample", g.dim(), noise.len())?;
    Ok(g.mean
        .iter()
        .zip(&g.variance)
        .zip(noise)
        .map(|((m, v), e)| m + v.sqrt() * e)
        .collect())
}

/// Draws a fresh sample from `g` using `rng` for the standard-normal noise.
pub fn sample<R: Rng + ?Sized>(g: &DiagonalGaussian, rng: &mut R) -> Vec<f64> {
    let noise = standard_normal(rng, g.dim());
    reparam_sample(g, &noise).expect("noise drawn with matching dimension")
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Belief over candidate policies: `softmax(-gamma * G)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBelief {
    pub probabilities: Vec<f64>,
    pub gamma: f64,
}

impl PolicyBelief {
    /// Index of the most probable policy (ties resolve to the lowest index).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probabilities.iter().enumerate() {
            if *p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }

    /// Samples a policy index proportionally to its probability.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probabilities.len() - 1
    }
}

/// Precision-weighted softmax over negative expected free energies.
///
/// Lower `G` gives higher probability. The maximum exponent is subtracted
/// before exponentiating so large `gamma * G` cannot overflow.
pub fn policy_softmax(g_values: &[f64], gamma: f64) -> Result<PolicyBelief> {
    if g_values.is_empty() {
        return Err(AifError::contract("policy_softmax needs at least one G value"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(AifError::contract(format!("precision must be positive, got {gamma}")));
    }
    if g_values.iter().any(|g| !g.is_finite()) {
        return Err(AifError::contract("G values must be finite"));
    }
    let logits: Vec<f64> = g_values.iter().map(|g| -gamma * g).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(PolicyBelief {
        probabilities: weights.into_iter().map(|w| w / total).collect(),
        gamma,
    })
}

/// Log-density of a 1-D standard normal; used by oracles and Monte-Carlo checks.
pub fn standard_normal_log_density(x: f64) -> f64 {
    -0.5 * (LN_2PI + x * x)
}
