//! Expected free energy of imagined action sequences and action selection
//! by random shooting, optionally refined with the cross-entropy method.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::env::{derive_seed, random_agent_action, ActionSource, CarState, GOAL_POSITION};
use crate::error::{check_dim, AifError, Result};
use crate::gaussian::{entropy, kl_divergence, policy_softmax, standard_normal, DiagonalGaussian, PolicyBelief};
use crate::model::ModelSet;
use crate::prior::PreferredPrior;
use crate::series::Series;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub num_candidates: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub cem_iterations: usize,
    pub cem_elite_fraction: f64,
    pub ambiguity_samples: usize,
    pub seed: u64,
    /// Sample the candidate from the policy belief instead of taking argmin G.
    pub stochastic: bool,
    /// Execute a whole plan before re-planning instead of re-planning every step.
    pub open_loop: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            num_candidates: 500,
            horizon: 50,
            gamma: 10.0,
            cem_iterations: 0,
            cem_elite_fraction: 0.1,
            ambiguity_samples: 3,
            seed: 0,
            stochastic: false,
            open_loop: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self, prior: &PreferredPrior) -> Result<()> {
        if self.num_candidates == 0 || self.horizon == 0 || self.ambiguity_samples == 0 {
            return Err(AifError::contract(
                "num_candidates, horizon and ambiguity_samples must be positive",
            ));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(AifError::contract("gamma must be positive and finite"));
        }
        if !(self.cem_elite_fraction > 0.0 && self.cem_elite_fraction < 1.0) {
            return Err(AifError::contract("cem_elite_fraction must lie in (0, 1)"));
        }
        if self.horizon > prior.horizon() {
            return Err(AifError::contract(format!(
                "planning horizon {} exceeds prior length {}",
                self.horizon,
                prior.horizon()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImaginedRollout {
    pub action_sequence: Vec<f64>,
    pub state_gaussians: Vec<DiagonalGaussian>,
    pub sampled_states: Vec<Vec<f64>>,
    /// Likelihood mean decoded from each sampled state.
    pub decoded_positions: Vec<f64>,
    pub per_step_g: Vec<f64>,
    pub g_value: f64,
}

impl ImaginedRollout {
    pub fn final_position(&self) -> f64 {
        self.decoded_positions.last().copied().unwrap_or(f64::NAN)
    }

    /// Whether any decoded position reaches the goal.
    pub fn reached_goal(&self) -> bool {
        self.decoded_positions.iter().any(|&p| p >= GOAL_POSITION)
    }

    /// Zero for goal-reaching rollouts, otherwise the gap from the final position.
    pub fn distance_to_goal(&self) -> f64 {
        if self.reached_goal() {
            0.0
        } else {
            GOAL_POSITION - self.final_position()
        }
    }
}

/// Expected free energy of one imagined belief sequence.
///
/// Step `j` (0-based) is scored against prior index `tau0 + 1 + j`, clamped to
/// the last prior entry. The ambiguity term averages likelihood entropies over
/// `ambiguity_samples` reparameterized draws from each predicted state.
pub fn expected_free_energy<R: Rng + ?Sized>(
    models: &ModelSet,
    prior: &PreferredPrior,
    state_gaussians: &[DiagonalGaussian],
    tau0: usize,
    ambiguity_samples: usize,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    if state_gaussians.is_empty() {
        return Err(AifError::contract("expected free energy of an empty rollout"));
    }
    if state_gaussians.len() > prior.horizon() {
        return Err(AifError::contract(format!(
            "rollout length {} exceeds prior length {}",
            state_gaussians.len(),
            prior.horizon()
        )));
    }
    if ambiguity_samples == 0 {
        return Err(AifError::contract("ambiguity_samples must be positive"));
    }
    let mut per_step = Vec::with_capacity(state_gaussians.len());
    for (j, g) in state_gaussians.iter().enumerate() {
        let p = prior.at(tau0 + 1 + j);
        let kl = if p.active { kl_divergence(g, &p.gaussian)? } else { 0.0 };
        let mut amb = 0.0;
        for _ in 0..ambiguity_samples {
            let s = crate::gaussian::sample(g, rng);
            amb += entropy(&models.likelihood_decode(&s)?);
        }
        per_step.push(kl + amb / ambiguity_samples as f64);
    }
    Ok((per_step.iter().sum(), per_step))
}

/// Action sequences drawn with the random agent's repeat scheme.
pub fn sample_action_sequences<R: Rng + ?Sized>(config: &PlannerConfig, rng: &mut R) -> Vec<Vec<f64>> {
    (0..config.num_candidates)
        .map(|_| {
            let mut prev = None;
            (0..config.horizon)
                .map(|_| {
                    let a = random_agent_action(prev, rng).clamp(-1.0, 1.0);
                    prev = Some(a);
                    a
                })
                .collect()
        })
        .collect()
}

pub fn policy_belief(g_values: &[f64], gamma: f64) -> Result<PolicyBelief> {
    policy_softmax(g_values, gamma)
}

/// Imagines and scores one candidate with its own noise stream:
/// the start sample, then per step the transition sample and the ambiguity draws.
pub fn score_candidate(
    models: &ModelSet,
    prior: &PreferredPrior,
    belief: &DiagonalGaussian,
    actions: &[f64],
    tau0: usize,
    ambiguity_samples: usize,
    stream: u64,
) -> Result<ImaginedRollout> {
    let out = score_batch(models, prior, belief, &[actions.to_vec()], tau0, ambiguity_samples, &[stream])?;
    Ok(out.into_iter().next().expect("one candidate in, one out"))
}

/// Batched imagination and expected free energy for many candidates.
/// Candidate `i` draws all its noise from a generator seeded with `streams[i]`.
pub fn score_batch(
    models: &ModelSet,
    prior: &PreferredPrior,
    belief: &DiagonalGaussian,
    sequences: &[Vec<f64>],
    tau0: usize,
    ambiguity_samples: usize,
    streams: &[u64],
) -> Result<Vec<ImaginedRollout>> {
    let d = models.state_dim;
    check_dim("planner belief", d, belief.dim())?;
    check_dim("planner streams", sequences.len(), streams.len())?;
    let n = sequences.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let horizon = sequences[0].len();
    for s in sequences {
        check_dim("action sequence length", horizon, s.len())?;
    }
    if horizon == 0 {
        return Err(AifError::contract("expected free energy of an empty rollout"));
    }
    if horizon > prior.horizon() {
        return Err(AifError::contract(format!(
            "rollout length {horizon} exceeds prior length {}",
            prior.horizon()
        )));
    }
    let k_amb = ambiguity_samples.max(1);
    let mut rngs: Vec<ChaCha8Rng> = streams.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();

    let mut states = Matrix::zeros(n, d);
    for (i, rng) in rngs.iter_mut().enumerate() {
        let s0 = crate::gaussian::sample(belief, rng);
        states.row_mut(i).copy_from_slice(&s0);
    }
    let mut out: Vec<ImaginedRollout> = sequences
        .iter()
        .map(|a| ImaginedRollout {
            action_sequence: a.clone(),
            state_gaussians: Vec::with_capacity(horizon),
            sampled_states: Vec::with_capacity(horizon),
            decoded_positions: Vec::with_capacity(horizon),
            per_step_g: Vec::with_capacity(horizon),
            g_value: 0.0,
        })
        .collect();

    for j in 0..horizon {
        let actions: Vec<f64> = sequences.iter().map(|s| s[j]).collect();
        let (mean, var) = models.transition_batch(&states, &actions)?;
        let p = prior.at(tau0 + 1 + j);
        // chain noise then ambiguity noise, per candidate
        let mut noise = Vec::with_capacity(k_amb + 1);
        for _ in 0..=k_amb {
            noise.push(Matrix::zeros(n, d));
        }
        for (i, rng) in rngs.iter_mut().enumerate() {
            for m in noise.iter_mut() {
                m.row_mut(i).copy_from_slice(&standard_normal(rng, d));
            }
        }
        let mut amb = vec![0.0; n];
        for eps in &noise[1..] {
            let sample = reparam_rows(&mean, &var, eps);
            let (_, lvar) = models.likelihood_batch(&sample)?;
            for (i, a) in amb.iter_mut().enumerate() {
                *a += lvar.row(i).iter().map(|v| 0.5 * (1.0 + crate::gaussian::LN_2PI + v.ln())).sum::<f64>();
            }
        }
        states = reparam_rows(&mean, &var, &noise[0]);
        let (decoded, _) = models.likelihood_batch(&states)?;
        for (i, r) in out.iter_mut().enumerate() {
            let g = DiagonalGaussian::new(mean.row(i).to_vec(), var.row(i).to_vec())?;
            let kl = if p.active { kl_divergence(&g, &p.gaussian)? } else { 0.0 };
            r.per_step_g.push(kl + amb[i] / k_amb as f64);
            r.state_gaussians.push(g);
            r.sampled_states.push(states.row(i).to_vec());
            r.decoded_positions.push(decoded.get(i, 0));
        }
    }
    for r in &mut out {
        r.g_value = r.per_step_g.iter().sum();
    }
    Ok(out)
}

fn reparam_rows(mean: &Matrix, var: &Matrix, eps: &Matrix) -> Matrix {
    let mut out = mean.clone();
    for ((o, v), e) in out.data_mut().iter_mut().zip(var.data()).zip(eps.data()) {
        *o += v.sqrt() * e;
    }
    out
}

/// Per-timestep Gaussian proposal refitted by the cross-entropy method.
fn sample_from_proposal<R: Rng + ?Sized>(mean: &[f64], std: &[f64], count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            mean.iter()
                .zip(std)
                .map(|(m, s)| (m + s * standard_normal(rng, 1)[0]).clamp(-1.0, 1.0))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub action: f64,
    pub chosen: usize,
    pub belief: PolicyBelief,
    pub candidates: Vec<ImaginedRollout>,
    /// Minimum G of the population after each round (index 0 is the initial sample).
    pub min_g_per_round: Vec<f64>,
}

pub fn plan<R: Rng + ?Sized>(
    models: &ModelSet,
    belief: &DiagonalGaussian,
    prior: &PreferredPrior,
    tau0: usize,
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanOutcome> {
    config.validate(prior)?;
    let base: u64 = rng.random();
    let mut seq_rng = ChaCha8Rng::seed_from_u64(derive_seed(base, 0, 0));
    let sequences = sample_action_sequences(config, &mut seq_rng);
    let streams: Vec<u64> = (0..config.num_candidates as u64).map(|i| derive_seed(base, 1, i)).collect();
    let mut population = score_batch(models, prior, belief, &sequences, tau0, config.ambiguity_samples, &streams)?;
    let min_g = |p: &[ImaginedRollout]| p.iter().map(|r| r.g_value).fold(f64::INFINITY, f64::min);
    let mut min_g_per_round = vec![min_g(&population)];

    for round in 1..=config.cem_iterations {
        let elite_count = ((config.num_candidates as f64 * config.cem_elite_fraction).ceil() as usize)
            .clamp(1, config.num_candidates);
        population.sort_by(|a, b| a.g_value.total_cmp(&b.g_value));
        population.truncate(elite_count);
        let h = config.horizon;
        let mut mean = vec![0.0; h];
        let mut std = vec![0.0; h];
        for t in 0..h {
            let xs: Vec<f64> = population.iter().map(|r| r.action_sequence[t]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
            mean[t] = m;
            std[t] = v.sqrt().max(0.05);
        }
        let fresh = config.num_candidates - elite_count;
        let mut prop_rng = ChaCha8Rng::seed_from_u64(derive_seed(base, 2, round as u64));
        let seqs = sample_from_proposal(&mean, &std, fresh, &mut prop_rng);
        let streams: Vec<u64> = (0..fresh as u64)
            .map(|i| derive_seed(base, 3 + round as u64, i))
            .collect();
        // elites are carried over unchanged, so the minimum G never increases
        population.extend(score_batch(models, prior, belief, &seqs, tau0, config.ambiguity_samples, &streams)?);
        min_g_per_round.push(min_g(&population));
    }

    let g: Vec<f64> = population.iter().map(|r| r.g_value).collect();
    let pb = policy_belief(&g, config.gamma)?;
    let chosen = if config.stochastic {
        pb.sample_index(rng)
    } else {
        pb.argmax()
    };
    Ok(PlanOutcome {
        action: population[chosen].action_sequence[0],
        chosen,
        belief: pb,
        candidates: population,
        min_g_per_round,
    })
}

/// Per-candidate diagnostics as an `AIFCSV v1` series.
pub fn diagnostics_series(candidates: &[ImaginedRollout]) -> Series {
    let mut s = Series::new(["candidate_id", "g_value", "final_position", "reached_goal"]);
    for (i, r) in candidates.iter().enumerate() {
        s.push([
            i.to_string(),
            r.g_value.to_string(),
            r.final_position().to_string(),
            u8::from(r.reached_goal()).to_string(),
        ]);
    }
    s
}

pub fn format_diagnostics(candidates: &[ImaginedRollout]) -> String {
    diagnostics_series(candidates).to_text()
}

/// Closed-loop (or open-loop) active-inference agent driven by [`plan`].
pub struct PlanningAgent<'a> {
    pub models: &'a ModelSet,
    pub prior: &'a PreferredPrior,
    pub config: PlannerConfig,
    belief: Option<DiagonalGaussian>,
    queued: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'a> PlanningAgent<'a> {
    pub fn new(models: &'a ModelSet, prior: &'a PreferredPrior, config: PlannerConfig, seed: u64) -> Self {
        Self {
            models,
            prior,
            config,
            belief: None,
            queued: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl ActionSource for PlanningAgent<'_> {
    fn begin(&mut self, observation: f64) -> Result<()> {
        let zero = vec![0.0; self.models.state_dim];
        self.belief = Some(self.models.posterior_infer(&zero, 0.0, observation)?);
        self.queued.clear();
        Ok(())
    }

    fn act(&mut self, t: usize, _state: &CarState) -> Result<f64> {
        if self.config.open_loop && !self.queued.is_empty() {
            return Ok(self.queued.remove(0));
        }
        let belief = self
            .belief
            .as_ref()
            .ok_or_else(|| AifError::contract("planning agent used before begin"))?;
        let outcome = plan(self.models, belief, self.prior, t - 1, &self.config, &mut self.rng)?;
        if self.config.open_loop {
            self.queued = outcome.candidates[outcome.chosen].action_sequence[1..].to_vec();
        }
        Ok(outcome.action)
    }

    fn observe(&mut self, action: f64, observation: f64) -> Result<()> {
        let prev = self
            .belief
            .as_ref()
            .ok_or_else(|| AifError::contract("planning agent used before begin"))?;
        self.belief = Some(self.models.posterior_infer(prev.mean(), action, observation)?);
        Ok(())
    }
}

pub fn act_in_env(
    models: &ModelSet,
    prior: &PreferredPrior,
    config: &PlannerConfig,
    env: crate::env::EnvConfig,
    env_seed: u64,
    start: Option<f64>,
) -> Result<crate::env::Trajectory> {
    config.validate(prior)?;
    let mut agent = PlanningAgent::new(models, prior, config.clone(), derive_seed(config.seed, 4, env_seed));
    crate::env::run_episode(env, &mut agent, env.max_steps, env_seed, start)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim("spearman inputs", x.len(), y.len())?;
    if x.len() < 2 {
        return Err(AifError::contract("rank correlation needs at least two points"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// One-sided permutation p-value for a positive Spearman correlation.
pub fn spearman_permutation_p<R: Rng + ?Sized>(x: &[f64], y: &[f64], permutations: usize, rng: &mut R) -> Result<f64> {
    use rand::seq::SliceRandom;
    let observed = spearman(x, y)?;
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let mut hits = 0usize;
    for _ in 0..permutations {
        ry.shuffle(rng);
        if pearson(&rx, &ry) >= observed {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (permutations + 1) as f64)
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, GaussianNet};
    use crate::env::EnvConfig;
    use crate::gaussian::LN_2PI;
    use crate::model::ModelConfig;
    use crate::prior::{flat_prior, PriorStep};
    use proptest::prelude::*;

    fn tiny_models() -> ModelSet {
        let cfg = ModelConfig {
            state_dim: 2,
            hidden: vec![8],
            activation: Activation::Tanh,
        };
        ModelSet::new(&cfg, 21).unwrap()
    }

    fn small_config() -> PlannerConfig {
        PlannerConfig {
            num_candidates: 20,
            horizon: 6,
            ..PlannerConfig::default()
        }
    }

    fn active_prior(d: usize, t: usize) -> PreferredPrior {
        let mut p = flat_prior(d, t).unwrap();
        for (k, s) in p.per_timestep.iter_mut().enumerate() {
            s.active = true;
            s.gaussian = DiagonalGaussian::isotropic(vec![0.1 * k as f64; d], 0.5).unwrap();
        }
        p
    }

    #[test]
    fn flat_prior_with_constant_likelihood_variance_is_pure_entropy() {
        let mut m = tiny_models();
        let v = 0.3f64;
        // zero the variance head and set its bias so softplus(b) + floor == v
        let lik = &mut m.likelihood;
        lik.var_head = crate::autodiff::Dense::zeros(lik.var_head.input_dim(), 1);
        let target = v - 1e-6;
        lik.var_head.bias.set(0, 0, target + (-(-target).exp_m1()).ln());
        let prior = flat_prior(2, 10).unwrap();
        let h = 4;
        let gs = vec![DiagonalGaussian::standard(2); h];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (g, per) = expected_free_energy(&m, &prior, &gs, 0, 3, &mut rng).unwrap();
        let expected = h as f64 * 0.5 * (1.0 + (2.0 * std::f64::consts::PI * v).ln());
        assert!((g - expected).abs() < 1e-9, "{g} vs {expected}");
        assert_eq!(per.len(), h);
    }

    #[test]
    fn hand_built_two_step_rollout() {
        let mut m = tiny_models();
        // likelihood variance fixed at softplus(0) + floor regardless of input
        m.likelihood = GaussianNet::zeros(2, &[8], 1, Activation::Tanh);
        let mut prior = flat_prior(2, 5).unwrap();
        prior.per_timestep[1] = PriorStep {
            gaussian: DiagonalGaussian::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap(),
            active: true,
        };
        let q1 = DiagonalGaussian::new(vec![0.5, 0.5], vec![0.25, 1.0]).unwrap();
        let q2 = DiagonalGaussian::new(vec![1.0, -1.0], vec![4.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (g, per) = expected_free_energy(&m, &prior, &[q1, q2], 0, 2, &mut rng).unwrap();
        // KL(q1 || N([0,1], [1,2])) by the closed form, dimension by dimension
        let kl1 = 0.5 * ((1.0f64 / 0.25).ln() + (0.25 + 0.25) / 1.0 - 1.0)
            + 0.5 * ((2.0f64 / 1.0).ln() + (1.0 + 0.25) / 2.0 - 1.0);
        let v = 2f64.ln() + 1e-6;
        let h = 0.5 * (1.0 + LN_2PI + v.ln());
        assert!((per[0] - (kl1 + h)).abs() < 1e-12);
        assert!((per[1] - h).abs() < 1e-12);
        assert!((g - per.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn identical_prior_gives_zero_kl() {
        let mut m = tiny_models();
        m.likelihood = GaussianNet::zeros(2, &[8], 1, Activation::Tanh);
        let prior = active_prior(2, 6);
        let gs: Vec<DiagonalGaussian> = (1..=3).map(|k| prior.at(k).gaussian.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (g, _) = expected_free_energy(&m, &prior, &gs, 0, 1, &mut rng).unwrap();
        let h = 0.5 * (1.0 + LN_2PI + (2f64.ln() + 1e-6).ln());
        assert!((g - 3.0 * h).abs() < 1e-12);
    }

    #[test]
    fn horizon_overflow_is_rejected() {
        let m = tiny_models();
        let prior = flat_prior(2, 3).unwrap();
        let gs = vec![DiagonalGaussian::standard(2); 4];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(expected_free_energy(&m, &prior, &gs, 0, 1, &mut rng).is_err());
        assert!(expected_free_energy(&m, &prior, &[], 0, 1, &mut rng).is_err());
        let cfg = PlannerConfig {
            horizon: 4,
            ..small_config()
        };
        let belief = DiagonalGaussian::standard(2);
        assert!(plan(&m, &belief, &prior, 0, &cfg, &mut rng).is_err());
    }

    #[test]
    fn action_sequences_respect_config() {
        let cfg = small_config();
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let s1 = sample_action_sequences(&cfg, &mut a);
        assert_eq!(s1, sample_action_sequences(&cfg, &mut b));
        assert_eq!(s1.len(), cfg.num_candidates);
        assert!(s1.iter().all(|s| s.len() == cfg.horizon));
        assert!(s1.iter().flatten().all(|a| (-1.0..=1.0).contains(a)));
    }

    #[test]
    fn policy_belief_examples() {
        let b = policy_belief(&[0.0, 2f64.ln()], 1.0).unwrap();
        assert!((b.probabilities[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.probabilities[1] - 1.0 / 3.0).abs() < 1e-12);
        let b = policy_belief(&[1.0, 0.2, 0.7], 100.0).unwrap();
        assert!(b.probabilities[1] > 0.99);
        let b = policy_belief(&[3.0; 4], 10.0).unwrap();
        assert!(b.probabilities.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn batch_scoring_matches_single_candidate_scoring() {
        let m = tiny_models();
        let prior = active_prior(2, 10);
        let belief = DiagonalGaussian::new(vec![0.1, -0.2], vec![0.3, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let seqs = sample_action_sequences(&small_config(), &mut rng);
        let streams: Vec<u64> = (0..seqs.len() as u64).map(|i| 100 + i).collect();
        let batch = score_batch(&m, &prior, &belief, &seqs, 2, 3, &streams).unwrap();
        for (i, r) in batch.iter().enumerate() {
            let single = score_candidate(&m, &prior, &belief, &seqs[i], 2, 3, streams[i]).unwrap();
            assert!((single.g_value - r.g_value).abs() < 1e-10);
            assert_eq!(r.per_step_g.len(), r.action_sequence.len());
            assert_eq!(r.state_gaussians.len(), r.action_sequence.len());
            assert_eq!(r.sampled_states.len(), r.action_sequence.len());
            assert!((r.g_value - r.per_step_g.iter().sum::<f64>()).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_plan_returns_first_action_of_minimal_g() {
        let m = tiny_models();
        let prior = active_prior(2, 10);
        let belief = DiagonalGaussian::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = plan(&m, &belief, &prior, 0, &small_config(), &mut rng).unwrap();
        let best = out
            .candidates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.g_value.total_cmp(&b.1.g_value))
            .unwrap()
            .0;
        assert_eq!(out.chosen, best);
        assert_eq!(out.action, out.candidates[best].action_sequence[0]);

        let one = PlannerConfig {
            num_candidates: 1,
            ..small_config()
        };
        let out = plan(&m, &belief, &prior, 0, &one, &mut rng).unwrap();
        assert_eq!(out.action, out.candidates[0].action_sequence[0]);
    }

    #[test]
    fn cem_never_increases_minimum_g() {
        let m = tiny_models();
        let prior = active_prior(2, 10);
        let belief = DiagonalGaussian::standard(2);
        let cfg = PlannerConfig {
            cem_iterations: 4,
            cem_elite_fraction: 0.2,
            ..small_config()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = plan(&m, &belief, &prior, 0, &cfg, &mut rng).unwrap();
        assert_eq!(out.min_g_per_round.len(), 5);
        for w in out.min_g_per_round.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(out.candidates.len(), cfg.num_candidates);
    }

    #[test]
    fn agent_acts_under_flat_prior_within_bounds() {
        let m = tiny_models();
        let prior = flat_prior(2, 20).unwrap();
        let env = EnvConfig {
            max_steps: 12,
            ..EnvConfig::default()
        };
        for open_loop in [false, true] {
            let cfg = PlannerConfig {
                open_loop,
                ..small_config()
            };
            let traj = act_in_env(&m, &prior, &cfg, env, 3, Some(-0.5)).unwrap();
            assert_eq!(traj.len(), 12);
            assert!(traj.steps.iter().all(|s| (-1.0..=1.0).contains(&s.action)));
        }
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // ties: ranks x = [1.5, 1.5, 3], y = [1, 2, 3]; pearson = sqrt(3)/2
        let r = spearman(&[5.0, 5.0, 7.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-15, "{r}");
        let x: Vec<f64> = (0..60).map(f64::from).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = spearman_permutation_p(&x, &x, 999, &mut rng).unwrap();
        assert!((p - 1e-3).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn constant_shift_leaves_selection_unchanged(g in proptest::collection::vec(-50.0..50.0f64, 2..20), c in 0.0..100.0f64, gamma in 0.01..20.0f64) {
            let shifted: Vec<f64> = g.iter().map(|x| x + c).collect();
            let a = policy_belief(&g, gamma).unwrap();
            let b = policy_belief(&shifted, gamma).unwrap();
            prop_assert_eq!(a.argmax(), b.argmax());
        }
    }
}
