//! Habit policy: a network from latent states to actions trained by
//! backpropagating expected free energy through imagined rollouts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, AdamConfig, AdamState, GaussianNet, Matrix, NetGrads, Tape};
use crate::checkpoint::Checkpoint;
use crate::env::{derive_seed, run_episode, ActionSource, CarState, EnvConfig, Trajectory};
use crate::error::{check_dim, AifError, Result};
use crate::gaussian::standard_normal;
use crate::model::ModelSet;
use crate::prior::{encode_trajectory, PreferredPrior};
use crate::series::Series;

#[derive(Debug, Clone, PartialEq)]
pub struct HabitPolicy {
    pub net: GaussianNet,
    pub state_dim: usize,
    /// Sample the pre-squash action instead of using its mean.
    pub stochastic: bool,
    pub seed: u64,
    pub step: u64,
}

impl HabitPolicy {
    pub fn new(state_dim: usize, hidden: &[usize], activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: GaussianNet::new(state_dim, hidden, 1, activation, &mut rng),
            state_dim,
            stochastic: false,
            seed,
            step: 0,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new("habit_policy")
            .field("state_dim", self.state_dim)
            .field("stochastic", self.stochastic)
            .field("seed", self.seed)
            .field("step", self.step)
            .network("policy", &self.net)
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<Self> {
        ckpt.expect_kind("habit_policy")?;
        let policy = Self {
            state_dim: ckpt.parse_field("state_dim")?,
            stochastic: ckpt.parse_field("stochastic")?,
            seed: ckpt.parse_field("seed")?,
            step: ckpt.parse_field("step")?,
            net: ckpt.take_network("policy")?,
        };
        check_dim("policy input", policy.state_dim, policy.net.input_dim())?;
        check_dim("policy output", 1, policy.net.output_dim())?;
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::read(path)?)
    }
}

/// `tanh(mean)` in deterministic mode, `tanh` of a reparameterized sample otherwise.
pub fn policy_action<R: Rng + ?Sized>(policy: &HabitPolicy, s: &[f64], rng: &mut R) -> Result<f64> {
    check_dim("policy_action state", policy.state_dim, s.len())?;
    let g = policy.net.forward_gaussian(s)?;
    let pre = if policy.stochastic {
        g.mean()[0] + g.variance()[0].sqrt() * standard_normal(rng, 1)[0]
    } else {
        g.mean()[0]
    };
    Ok(pre.tanh())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyTrainConfig {
    pub horizon: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Continue rollouts from sampled next states rather than predicted means.
    pub sample_states: bool,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            iterations: 2000,
            batch_size: 16,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            sample_states: false,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Start latents for policy training, each with the timestep it was encoded at.
#[derive(Debug, Clone, PartialEq)]
pub struct StartStates {
    pub states: Vec<Vec<f64>>,
    pub timesteps: Vec<usize>,
}

impl StartStates {
    pub fn from_dataset(models: &ModelSet, dataset: &[Trajectory]) -> Result<Self> {
        let mut out = Self {
            states: Vec::new(),
            timesteps: Vec::new(),
        };
        for traj in dataset {
            for (t, s) in encode_trajectory(models, traj)?.into_iter().enumerate() {
                out.states.push(s);
                out.timesteps.push(t);
            }
        }
        if out.states.is_empty() {
            return Err(AifError::contract("policy training needs at least one start state"));
        }
        Ok(out)
    }
}

/// Noise for one policy-training batch: action noise then state noise per step.
#[derive(Debug, Clone)]
pub struct RolloutNoise {
    pub action: Vec<Matrix>,
    pub state: Vec<Matrix>,
}

impl RolloutNoise {
    pub fn draw<R: Rng + ?Sized>(batch: usize, state_dim: usize, horizon: usize, rng: &mut R) -> Self {
        let mut action = Vec::with_capacity(horizon);
        let mut state = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            action.push(Matrix::from_vec(batch, 1, standard_normal(rng, batch)));
            state.push(Matrix::from_vec(batch, state_dim, standard_normal(rng, batch * state_dim)));
        }
        Self { action, state }
    }
}

/// Mean (over the batch) expected free energy of policy rollouts, with
/// gradients for the policy parameters and for the (frozen) world model.
#[derive(Debug, Clone)]
pub struct PolicyObjective {
    pub g: f64,
    pub policy: NetGrads,
    /// Always zero: the world model enters the tape as constants.
    pub world_model: [NetGrads; 2],
}

/// Expected free energy of rolling `policy` forward from `starts`.
///
/// Each step draws a squashed action, predicts the next latent belief,
/// scores it against prior index `tau0 + 1 + j` (KL only where the prior is
/// active) plus the likelihood entropy at the sampled next state, which is
/// also the state the rollout continues from.
pub fn policy_objective(
    policy: &HabitPolicy,
    models: &ModelSet,
    prior: &PreferredPrior,
    starts: &[Vec<f64>],
    tau0: &[usize],
    noise: &RolloutNoise,
    sample_states: bool,
) -> Result<PolicyObjective> {
    let (b, d) = (starts.len(), models.state_dim);
    check_dim("policy start count", b, tau0.len())?;
    check_dim("policy state_dim", d, policy.state_dim)?;
    if b == 0 || noise.action.is_empty() {
        return Err(AifError::contract("policy objective needs starts and a positive horizon"));
    }
    check_dim("policy noise steps", noise.action.len(), noise.state.len())?;
    let mut tape = Tape::new();
    let pol = policy.net.bind(&mut tape, true);
    let trans = models.transition.bind(&mut tape, false);
    let lik = models.likelihood.bind(&mut tape, false);

    let mut s0 = Matrix::zeros(b, d);
    for (i, s) in starts.iter().enumerate() {
        check_dim("policy start state", d, s.len())?;
        s0.row_mut(i).copy_from_slice(s);
    }
    let mut s = tape.constant(s0);
    let mut total = None;
    for (j, (ea, es)) in noise.action.iter().zip(&noise.state).enumerate() {
        check_dim("action noise rows", b, ea.rows())?;
        check_dim("state noise rows", b, es.rows())?;
        let pi = pol.forward(&mut tape, s)?;
        let ea = tape.constant(ea.clone());
        let pre = tape.reparam(pi.mean, pi.var, ea);
        let a = tape.tanh(pre);
        let p_in = tape.concat(&[s, a]);
        let p = trans.forward(&mut tape, p_in)?;

        let mut pm = Matrix::zeros(b, d);
        let mut pv = Matrix::zeros(b, d);
        let mut mask = Matrix::zeros(b, 1);
        for (i, &t) in tau0.iter().enumerate() {
            let step = prior.at(t + 1 + j);
            pm.row_mut(i).copy_from_slice(step.gaussian.mean());
            pv.row_mut(i).copy_from_slice(step.gaussian.variance());
            mask.set(i, 0, if step.active { 1.0 } else { 0.0 });
        }
        let pm = tape.constant(pm);
        let pv = tape.constant(pv);
        let mask = tape.constant(mask);
        let kl = tape.gaussian_kl(p.mean, p.var, pm, pv);
        let kl = tape.mul_rows(kl, mask);

        s = if sample_states {
            let es = tape.constant(es.clone());
            tape.reparam(p.mean, p.var, es)
        } else {
            p.mean
        };
        let l = lik.forward(&mut tape, s)?;
        let amb = tape.gaussian_entropy(l.var);
        let g = tape.add(kl, amb);
        total = Some(match total {
            None => g,
            Some(acc) => tape.add(acc, g),
        });
    }
    let total = total.expect("horizon is positive");
    let loss = tape.mean(total);
    let g = tape.value(loss).get(0, 0);
    let grads = tape.backward(loss, 1.0)?;
    Ok(PolicyObjective {
        g,
        policy: pol.grads(&grads),
        world_model: [trans.grads(&grads), lik.grads(&grads)],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrainingReport {
    /// Mean G per iteration.
    pub g_curve: Vec<f64>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

pub fn train_policy(
    models: &ModelSet,
    prior: &PreferredPrior,
    dataset: &[Trajectory],
    config: &PolicyTrainConfig,
) -> Result<(HabitPolicy, PolicyTrainingReport)> {
    if config.horizon == 0 || config.batch_size == 0 {
        return Err(AifError::contract("policy horizon and batch size must be positive"));
    }
    check_dim("prior state_dim", models.state_dim, prior.state_dim)?;
    let started = std::time::Instant::now();
    let pool = StartStates::from_dataset(models, dataset)?;
    let mut policy = HabitPolicy::new(models.state_dim, &config.hidden, config.activation, config.seed);
    let mut adam = AdamState::for_net(config.adam, &policy.net);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x706f6c, 0));
    let mut g_curve = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let mut starts = Vec::with_capacity(config.batch_size);
        let mut tau0 = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let k = rng.random_range(0..pool.states.len());
            starts.push(pool.states[k].clone());
            tau0.push(pool.timesteps[k]);
        }
        let noise = RolloutNoise::draw(config.batch_size, models.state_dim, config.horizon, &mut rng);
        let obj = policy_objective(&policy, models, prior, &starts, &tau0, &noise, config.sample_states)?;
        if !obj.g.is_finite() {
            return Err(AifError::contract(format!("policy objective diverged at iteration {}", it + 1)));
        }
        adam.step_net(&mut policy.net, &obj.policy)?;
        policy.step += 1;
        g_curve.push(obj.g);
    }
    Ok((
        policy,
        PolicyTrainingReport {
            g_curve,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Filters observations with the posterior and acts on the posterior mean.
pub struct HabitAgent<'a> {
    pub policy: &'a HabitPolicy,
    pub models: &'a ModelSet,
    belief: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'a> HabitAgent<'a> {
    pub fn new(policy: &'a HabitPolicy, models: &'a ModelSet, seed: u64) -> Self {
        Self {
            policy,
            models,
            belief: vec![0.0; models.state_dim],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl ActionSource for HabitAgent<'_> {
    fn begin(&mut self, observation: f64) -> Result<()> {
        let zero = vec![0.0; self.models.state_dim];
        self.belief = self.models.posterior_infer(&zero, 0.0, observation)?.mean().to_vec();
        Ok(())
    }

    fn act(&mut self, _t: usize, _state: &CarState) -> Result<f64> {
        policy_action(self.policy, &self.belief, &mut self.rng)
    }

    fn observe(&mut self, action: f64, observation: f64) -> Result<()> {
        self.belief = self
            .models
            .posterior_infer(&self.belief, action, observation)?
            .mean()
            .to_vec();
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub start: f64,
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub records: Vec<EvalRecord>,
    pub success_rate: f64,
    /// Mean steps over successful episodes.
    pub mean_steps_to_goal: Option<f64>,
}

impl PolicyEvaluation {
    pub fn from_records(records: Vec<EvalRecord>) -> Self {
        let wins: Vec<&EvalRecord> = records.iter().filter(|r| r.success).collect();
        let success_rate = if records.is_empty() {
            0.0
        } else {
            wins.len() as f64 / records.len() as f64
        };
        let mean_steps_to_goal =
            (!wins.is_empty()).then(|| wins.iter().map(|r| r.steps as f64).sum::<f64>() / wins.len() as f64);
        Self {
            records,
            success_rate,
            mean_steps_to_goal,
        }
    }

    pub fn successes(&self) -> usize {
        self.records.iter().filter(|r| r.success).count()
    }

    pub fn to_series(&self) -> Series {
        let mut s = Series::new(["start", "seed", "success", "steps"]);
        for r in &self.records {
            s.push([r.start.to_string(), r.seed.to_string(), u8::from(r.success).to_string(), r.steps.to_string()]);
        }
        s
    }
}

/// Runs `make_agent`'s agent once per `(start, seed)` and tallies goal arrivals.
pub fn evaluate_with<'a, F>(env: EnvConfig, starts: &[f64], seeds: &[u64], mut make_agent: F) -> Result<(PolicyEvaluation, Vec<Trajectory>)>
where
    F: FnMut(u64) -> Box<dyn ActionSource + 'a>,
{
    check_dim("evaluation seeds", starts.len(), seeds.len())?;
    let mut records = Vec::with_capacity(starts.len());
    let mut trajs = Vec::with_capacity(starts.len());
    for (i, (&start, &seed)) in starts.iter().zip(seeds).enumerate() {
        let mut agent = make_agent(seed);
        let mut traj = run_episode(env, agent.as_mut(), env.max_steps, seed, Some(start))?;
        traj.episode_id = i;
        records.push(EvalRecord {
            start,
            seed,
            success: traj.reached_goal(),
            steps: traj.len(),
        });
        trajs.push(traj);
    }
    Ok((PolicyEvaluation::from_records(records), trajs))
}

pub fn evaluate_policy(
    policy: &HabitPolicy,
    models: &ModelSet,
    env: EnvConfig,
    starts: &[f64],
    seeds: &[u64],
) -> Result<(PolicyEvaluation, Vec<Trajectory>)> {
    check_dim("policy state_dim", models.state_dim, policy.state_dim)?;
    evaluate_with(env, starts, seeds, |seed| Box::new(HabitAgent::new(policy, models, seed)))
}
