//! Latent world model: posterior, transition and likelihood densities and
//! their variational free-energy training loop.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, AdamConfig, AdamState, GaussianNet, Matrix, NetGrads, Tape};
use crate::checkpoint::Checkpoint;
use crate::env::Trajectory;
use crate::error::{check_dim, AifError, Result};
use crate::gaussian::{standard_normal, DiagonalGaussian};

const OBS_DIM: usize = 1;
const ACTION_DIM: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            state_dim: 8,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub window: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Batches per epoch; `0` means one pass worth of steps over the dataset.
    pub batches_per_epoch: usize,
    pub kl_weight: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 16,
            batch_size: 32,
            epochs: 600,
            batches_per_epoch: 0,
            kl_weight: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// The three learned densities sharing one latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub posterior: GaussianNet,
    pub transition: GaussianNet,
    pub likelihood: GaussianNet,
    pub state_dim: usize,
    pub seed: u64,
    pub step: u64,
}

impl ModelSet {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        if config.state_dim == 0 {
            return Err(AifError::contract("state_dim must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.state_dim;
        let act = config.activation;
        let posterior = GaussianNet::new(d + ACTION_DIM + OBS_DIM, &config.hidden, d, act, &mut rng);
        let transition = GaussianNet::new(d + ACTION_DIM, &config.hidden, d, act, &mut rng);
        let likelihood = GaussianNet::new(d, &config.hidden, OBS_DIM, act, &mut rng);
        Ok(Self {
            posterior,
            transition,
            likelihood,
            state_dim: d,
            seed,
            step: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim;
        for net in [&self.posterior, &self.transition, &self.likelihood] {
            net.validate()?;
        }
        check_dim("posterior input", d + ACTION_DIM + OBS_DIM, self.posterior.input_dim())?;
        check_dim("posterior output", d, self.posterior.output_dim())?;
        check_dim("transition input", d + ACTION_DIM, self.transition.input_dim())?;
        check_dim("transition output", d, self.transition.output_dim())?;
        check_dim("likelihood input", d, self.likelihood.input_dim())?;
        check_dim("likelihood output", OBS_DIM, self.likelihood.output_dim())
    }

    pub fn posterior_infer(&self, s_prev: &[f64], action: f64, observation: f64) -> Result<DiagonalGaussian> {
        check_dim("posterior_infer state", self.state_dim, s_prev.len())?;
        let mut input = s_prev.to_vec();
        input.extend([action, observation]);
        self.posterior.forward_gaussian(&input)
    }

    pub fn transition_predict(&self, s_prev: &[f64], action: f64) -> Result<DiagonalGaussian> {
        check_dim("transition_predict state", self.state_dim, s_prev.len())?;
        let mut input = s_prev.to_vec();
        input.push(action);
        self.transition.forward_gaussian(&input)
    }

    pub fn likelihood_decode(&self, s: &[f64]) -> Result<DiagonalGaussian> {
        check_dim("likelihood_decode state", self.state_dim, s.len())?;
        self.likelihood.forward_gaussian(s)
    }

    /// Batched transition: each row of `states` pairs with one action.
    pub fn transition_batch(&self, states: &Matrix, actions: &[f64]) -> Result<(Matrix, Matrix)> {
        check_dim("transition_batch state", self.state_dim, states.cols())?;
        check_dim("transition_batch actions", states.rows(), actions.len())?;
        self.transition.forward_batch(&append_columns(states, &[actions]))
    }

    pub fn likelihood_batch(&self, states: &Matrix) -> Result<(Matrix, Matrix)> {
        check_dim("likelihood_batch state", self.state_dim, states.cols())?;
        self.likelihood.forward_batch(states)
    }

    /// Filters an observation sequence, returning each step's posterior.
    ///
    /// `actions[t]` produced `observations[t]`; the first step starts from the
    /// zero state. With `rng == None` the posterior means are chained instead of samples.
    pub fn filter(
        &self,
        actions: &[f64],
        observations: &[f64],
        mut rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Vec<DiagonalGaussian>> {
        check_dim("filter sequence", actions.len(), observations.len())?;
        let mut s = vec![0.0; self.state_dim];
        let mut out = Vec::with_capacity(actions.len());
        for (&a, &o) in actions.iter().zip(observations) {
            let q = self.posterior_infer(&s, a, o)?;
            s = match rng.as_deref_mut() {
                Some(r) => crate::gaussian::sample(&q, r),
                None => q.mean().to_vec(),
            };
            out.push(q);
        }
        Ok(out)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new("model_set")
            .field("state_dim", self.state_dim)
            .field("seed", self.seed)
            .field("step", self.step)
            .network("posterior", &self.posterior)
            .network("transition", &self.transition)
            .network("likelihood", &self.likelihood)
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<Self> {
        ckpt.expect_kind("model_set")?;
        let models = Self {
            state_dim: ckpt.parse_field("state_dim")?,
            seed: ckpt.parse_field("seed")?,
            step: ckpt.parse_field("step")?,
            posterior: ckpt.take_network("posterior")?,
            transition: ckpt.take_network("transition")?,
            likelihood: ckpt.take_network("likelihood")?,
        };
        models.validate()?;
        Ok(models)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::read(path)?)
    }
}

fn append_columns(m: &Matrix, columns: &[&[f64]]) -> Matrix {
    let cols = m.cols() + columns.len();
    let mut out = Matrix::zeros(m.rows(), cols);
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        row[..m.cols()].copy_from_slice(m.row(r));
        for (j, c) in columns.iter().enumerate() {
            row[m.cols() + j] = c[r];
        }
    }
    out
}

/// Fixed-length windows of `(actions, observations)`; `actions[0]` is the null action.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub actions: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
}

impl TrainingBatch {
    pub fn new(actions: Vec<Vec<f64>>, observations: Vec<Vec<f64>>) -> Result<Self> {
        if actions.is_empty() {
            return Err(AifError::contract("training batch has no windows"));
        }
        check_dim("batch windows", actions.len(), observations.len())?;
        let len = actions[0].len();
        if len == 0 {
            return Err(AifError::contract("training windows are empty"));
        }
        for (a, o) in actions.iter().zip(&observations) {
            check_dim("window length", len, a.len())?;
            check_dim("window length", len, o.len())?;
        }
        Ok(Self { actions, observations })
    }

    pub fn windows(&self) -> usize {
        self.actions.len()
    }

    pub fn window_len(&self) -> usize {
        self.actions[0].len()
    }

    /// Column `t` of the batch as a `windows x 1` matrix.
    fn column(seqs: &[Vec<f64>], t: usize) -> Matrix {
        Matrix::from_vec(seqs.len(), 1, seqs.iter().map(|s| s[t]).collect())
    }
}

/// Every window start in `dataset` usable at length `window`.
pub fn window_index(dataset: &[Trajectory], window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, traj) in dataset.iter().enumerate() {
        let n = traj.len() + 1;
        if n >= window {
            out.extend((0..=n - window).map(|k| (i, k)));
        }
    }
    out
}

/// Window of length `window` starting at observation index `start`.
/// The first action is replaced by the null action.
pub fn extract_window(traj: &Trajectory, start: usize, window: usize) -> (Vec<f64>, Vec<f64>) {
    let obs = traj.observations();
    let act = traj.actions();
    let mut a = act[start..start + window].to_vec();
    a[0] = 0.0;
    (a, obs[start..start + window].to_vec())
}

pub fn sample_batch<R: Rng + ?Sized>(
    dataset: &[Trajectory],
    index: &[(usize, usize)],
    window: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<TrainingBatch> {
    if index.is_empty() {
        return Err(AifError::contract(format!(
            "no trajectory is long enough for windows of length {window}"
        )));
    }
    let (mut actions, mut observations) = (Vec::new(), Vec::new());
    for _ in 0..batch_size {
        let (i, k) = index[rng.random_range(0..index.len())];
        let (a, o) = extract_window(&dataset[i], k, window);
        actions.push(a);
        observations.push(o);
    }
    TrainingBatch::new(actions, observations)
}

/// Free energy of one batch and its parameter gradients.
#[derive(Debug, Clone)]
pub struct FreeEnergy {
    pub loss: f64,
    /// Mean reconstruction negative log-likelihood per step.
    pub nll: f64,
    /// Mean weighted KL per step; `loss == nll + kl` up to rounding.
    pub kl: f64,
    pub posterior: NetGrads,
    pub transition: NetGrads,
    pub likelihood: NetGrads,
}

/// Standard-normal reparameterization noise for every step of a batch.
pub fn draw_noise<R: Rng + ?Sized>(models: &ModelSet, batch: &TrainingBatch, rng: &mut R) -> Vec<Matrix> {
    (0..batch.window_len())
        .map(|_| {
            let data = (0..batch.windows())
                .flat_map(|_| standard_normal(rng, models.state_dim))
                .collect();
            Matrix::from_vec(batch.windows(), models.state_dim, data)
        })
        .collect()
}

pub fn free_energy_loss<R: Rng + ?Sized>(
    models: &ModelSet,
    batch: &TrainingBatch,
    kl_weight: f64,
    rng: &mut R,
) -> Result<FreeEnergy> {
    let noise = draw_noise(models, batch, rng);
    free_energy_with_noise(models, batch, kl_weight, &noise)
}

/// [`free_energy_loss`] with explicit noise, so the loss is a deterministic
/// function of the parameters.
pub fn free_energy_with_noise(
    models: &ModelSet,
    batch: &TrainingBatch,
    kl_weight: f64,
    noise: &[Matrix],
) -> Result<FreeEnergy> {
    let (b, len, d) = (batch.windows(), batch.window_len(), models.state_dim);
    check_dim("noise steps", len, noise.len())?;
    let mut tape = Tape::new();
    let post = models.posterior.bind(&mut tape, true);
    let trans = models.transition.bind(&mut tape, true);
    let lik = models.likelihood.bind(&mut tape, true);

    let mut s = tape.constant(Matrix::zeros(b, d));
    let mut nll_acc = None;
    let mut kl_acc = None;
    for (t, eps) in noise.iter().enumerate() {
        check_dim("noise rows", b, eps.rows())?;
        check_dim("noise cols", d, eps.cols())?;
        let a = tape.constant(TrainingBatch::column(&batch.actions, t));
        let o = tape.constant(TrainingBatch::column(&batch.observations, t));
        let q_in = tape.concat(&[s, a, o]);
        let q = post.forward(&mut tape, q_in)?;
        let p_in = tape.concat(&[s, a]);
        let p = trans.forward(&mut tape, p_in)?;
        let e = tape.constant(eps.clone());
        s = tape.reparam(q.mean, q.var, e);
        let l = lik.forward(&mut tape, s)?;
        let lp = tape.gaussian_log_prob(o, l.mean, l.var);
        let kl = tape.gaussian_kl(q.mean, q.var, p.mean, p.var);
        nll_acc = Some(match nll_acc {
            None => lp,
            Some(acc) => tape.add(acc, lp),
        });
        kl_acc = Some(match kl_acc {
            None => kl,
            Some(acc) => tape.add(acc, kl),
        });
    }
    let (lp_sum, kl_sum) = match (nll_acc, kl_acc) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(AifError::contract("training windows are empty")),
    };
    let count = (b * len) as f64;
    let nll = tape.mean(lp_sum);
    let nll = tape.scale(nll, -1.0 / len as f64);
    let kl = tape.mean(kl_sum);
    let kl = tape.scale(kl, kl_weight / len as f64);
    let loss = tape.add(nll, kl);
    let nll_value = tape.value(nll).get(0, 0);
    let kl_value = tape.value(kl).get(0, 0);
    let loss_value = tape.value(loss).get(0, 0);
    debug_assert!(count > 0.0);
    let grads = tape.backward(loss, 1.0)?;
    Ok(FreeEnergy {
        loss: loss_value,
        nll: nll_value,
        kl: kl_value,
        posterior: post.grads(&grads),
        transition: trans.grads(&grads),
        likelihood: lik.grads(&grads),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub free_energy: f64,
    pub nll: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub batches_per_epoch: usize,
    /// Not part of serialized reports, which must be reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

pub fn train_models(
    dataset: &[Trajectory],
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<(ModelSet, TrainingReport)> {
    if dataset.is_empty() {
        return Err(AifError::contract("cannot train on an empty dataset"));
    }
    if config.window == 0 || config.batch_size == 0 {
        return Err(AifError::contract("window and batch size must be positive"));
    }
    let started = std::time::Instant::now();
    let mut models = ModelSet::new(model, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::env::derive_seed(config.seed, 0x6d6f64656c, 0));
    let index = window_index(dataset, config.window);
    let total_steps: usize = dataset.iter().map(|t| t.len() + 1).sum();
    let per_epoch = if config.batches_per_epoch > 0 {
        config.batches_per_epoch
    } else {
        (total_steps / (config.window * config.batch_size)).max(1)
    };
    let mut adam = [
        AdamState::for_net(config.adam, &models.posterior),
        AdamState::for_net(config.adam, &models.transition),
        AdamState::for_net(config.adam, &models.likelihood),
    ];
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (mut f, mut nll, mut kl) = (0.0, 0.0, 0.0);
        for _ in 0..per_epoch {
            let batch = sample_batch(dataset, &index, config.window, config.batch_size, &mut rng)?;
            let fe = free_energy_loss(&models, &batch, config.kl_weight, &mut rng)?;
            if !fe.loss.is_finite() {
                return Err(AifError::contract(format!("free energy diverged at epoch {}", epoch + 1)));
            }
            adam[0].step_net(&mut models.posterior, &fe.posterior)?;
            adam[1].step_net(&mut models.transition, &fe.transition)?;
            adam[2].step_net(&mut models.likelihood, &fe.likelihood)?;
            models.step += 1;
            f += fe.loss;
            nll += fe.nll;
            kl += fe.kl;
        }
        let n = per_epoch as f64;
        let (nll, kl) = (nll / n, kl / n);
        epochs.push(EpochStats {
            epoch: epoch + 1,
            free_energy: nll + kl,
            nll,
            kl,
        });
        debug_assert!((f / n - (nll + kl)).abs() < 1e-9 * (1.0 + f.abs()));
    }
    Ok((
        models,
        TrainingReport {
            epochs,
            batches_per_epoch: per_epoch,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Latent beliefs imagined from a start state without observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Imagination {
    pub state_gaussians: Vec<DiagonalGaussian>,
    pub sampled_states: Vec<Vec<f64>>,
}

/// Samples `s_t ~ p(s_t | s_{t-1}, a_t)` for every action.
pub fn imagine_rollout<R: Rng + ?Sized>(
    models: &ModelSet,
    s0: &[f64],
    actions: &[f64],
    rng: &mut R,
) -> Result<Imagination> {
    imagine(models, s0, actions, |g| crate::gaussian::sample(g, rng))
}

/// Like [`imagine_rollout`] but propagates the predicted means.
pub fn imagine_mean_rollout(models: &ModelSet, s0: &[f64], actions: &[f64]) -> Result<Imagination> {
    imagine(models, s0, actions, |g| g.mean().to_vec())
}

fn imagine(
    models: &ModelSet,
    s0: &[f64],
    actions: &[f64],
    mut next: impl FnMut(&DiagonalGaussian) -> Vec<f64>,
) -> Result<Imagination> {
    check_dim("imagine start state", models.state_dim, s0.len())?;
    let mut s = s0.to_vec();
    let mut out = Imagination {
        state_gaussians: Vec::with_capacity(actions.len()),
        sampled_states: Vec::with_capacity(actions.len()),
    };
    for &a in actions {
        let g = models.transition_predict(&s, a)?;
        s = next(&g);
        out.state_gaussians.push(g);
        out.sampled_states.push(s.clone());
    }
    Ok(out)
}

/// Decoded observation means along an open-loop imagination of `traj`.
///
/// The first state is inferred from the reset observation; every later
/// state comes from the transition model driven by the recorded actions.
/// Returns `(truth, predicted_mean, predicted_std)` for steps `1..=horizon`.
pub fn open_loop_predictions(
    models: &ModelSet,
    traj: &Trajectory,
    horizon: Option<usize>,
) -> Result<Vec<(f64, f64, f64)>> {
    if traj.is_empty() {
        return Err(AifError::contract("open-loop prediction needs at least two observations"));
    }
    let obs = traj.observations();
    let actions = traj.actions();
    let n = horizon.map_or(traj.len(), |h| h.min(traj.len()));
    let q = models.posterior_infer(&vec![0.0; models.state_dim], 0.0, obs[0])?;
    let imagined = imagine_mean_rollout(models, q.mean(), &actions[1..=n])?;
    imagined
        .sampled_states
        .iter()
        .zip(&obs[1..=n])
        .map(|(s, &o)| {
            let g = models.likelihood_decode(s)?;
            Ok((o, g.mean()[0], g.variance()[0].sqrt()))
        })
        .collect()
}

/// Root-mean-square open-loop prediction error in observation units.
pub fn open_loop_prediction_error(models: &ModelSet, traj: &Trajectory, horizon: Option<usize>) -> Result<f64> {
    let preds = open_loop_predictions(models, traj, horizon)?;
    let mse = preds.iter().map(|(o, m, _)| (o - m).powi(2)).sum::<f64>() / preds.len() as f64;
    Ok(mse.sqrt())
}
