//! Continuous mountain car with noisy position-only observations and a sparse
//! +1 reward at the goal, plus the bootstrap random agent and a scripted expert.

mod trajectory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AifError, Result};

pub use trajectory::{format_trajectories, parse_trajectories, read_trajectories, write_trajectories, Step, Trajectory, TRAJ_MAGIC};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.45;
pub const POWER: f64 = 0.0015;
pub const GRAVITY: f64 = 0.0025;

/// Range of the default start position.
pub const VALLEY_START: (f64, f64) = (-0.6, -0.4);

/// Probability that the random agent repeats its previous action.
pub const REPEAT_PROBABILITY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub noise_std: f64,
    pub max_steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            noise_std: 0.05,
            max_steps: 200,
        }
    }
}

/// True car state; hidden from the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarState {
    pub position: f64,
    pub velocity: f64,
}

/// Deterministic dynamics; `action` is clamped to `[-1, 1]`.
pub fn dynamics(state: CarState, action: f64) -> CarState {
    let action = action.clamp(-1.0, 1.0);
    let mut velocity = (state.velocity + POWER * action - GRAVITY * (3.0 * state.position).cos())
        .clamp(-MAX_SPEED, MAX_SPEED);
    let position = (state.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
    if position <= MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    CarState { position, velocity }
}

/// One environment instance with its own seeded noise stream.
#[derive(Debug, Clone)]
pub struct MountainCar {
    config: EnvConfig,
    rng: ChaCha8Rng,
    state: CarState,
}

/// Result of [`MountainCar::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: CarState,
    pub observation: f64,
    pub reward: f64,
    pub done: bool,
}

impl MountainCar {
    pub fn new(config: EnvConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: CarState {
                position: -0.5,
                velocity: 0.0,
            },
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> CarState {
        self.state
    }

    /// Places the car at `start` (or uniformly in the valley) at rest.
    pub fn reset(&mut self, start: Option<f64>, seed: u64) -> Result<(CarState, f64)> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let position = match start {
            Some(p) if (MIN_POSITION..=MAX_POSITION).contains(&p) => p,
            Some(p) => {
                return Err(AifError::contract(format!(
                    "start position {p} outside [{MIN_POSITION}, {MAX_POSITION}]"
                )))
            }
            None => self.rng.random_range(VALLEY_START.0..=VALLEY_START.1),
        };
        self.state = CarState {
            position,
            velocity: 0.0,
        };
        let obs = self.observe();
        Ok((self.state, obs))
    }

    pub fn step(&mut self, action: f64) -> Result<Transition> {
        if !action.is_finite() {
            return Err(AifError::contract(format!("non-finite action {action}")));
        }
        self.state = dynamics(self.state, action);
        let done = self.state.position >= GOAL_POSITION;
        Ok(Transition {
            state: self.state,
            observation: self.observe(),
            reward: if done { 1.0 } else { 0.0 },
            done,
        })
    }

    fn observe(&mut self) -> f64 {
        let noise: f64 = self.rng.sample(StandardNormal);
        self.state.position + self.config.noise_std * noise
    }
}

/// With probability 0.9 repeats `previous`, otherwise draws uniformly in `[-1, 1]`.
pub fn random_agent_action<R: Rng + ?Sized>(previous: Option<f64>, rng: &mut R) -> f64 {
    match previous {
        Some(a) if rng.random::<f64>() < REPEAT_PROBABILITY => a,
        _ => rng.random_range(-1.0..=1.0),
    }
}

/// Energy pumping: push along the direction of motion, right when at rest.
pub fn scripted_expert_action(state: &CarState) -> f64 {
    if state.velocity.abs() > 1e-4 {
        state.velocity.signum()
    } else {
        1.0
    }
}

/// Anything that picks actions during an episode.
pub trait ActionSource {
    /// Called once after reset with the initial observation.
    fn begin(&mut self, _observation: f64) -> Result<()> {
        Ok(())
    }

    /// Picks the action for step `t` (1-based). `state` is the true state,
    /// which only privileged sources such as the scripted expert may read.
    fn act(&mut self, t: usize, state: &CarState) -> Result<f64>;

    /// Called after every step with the action taken and the new observation.
    fn observe(&mut self, _action: f64, _observation: f64) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
    previous: Option<f64>,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            previous: None,
        }
    }
}

impl ActionSource for RandomAgent {
    fn begin(&mut self, _observation: f64) -> Result<()> {
        self.previous = None;
        Ok(())
    }

    fn act(&mut self, _t: usize, _state: &CarState) -> Result<f64> {
        let a = random_agent_action(self.previous, &mut self.rng);
        self.previous = Some(a);
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedExpert;

impl ActionSource for ScriptedExpert {
    fn act(&mut self, _t: usize, state: &CarState) -> Result<f64> {
        Ok(scripted_expert_action(state))
    }
}

/// Constant action, e.g. the greedy always-right baseline.
#[derive(Debug, Clone, Copy)]
pub struct ConstantAction(pub f64);

impl ActionSource for ConstantAction {
    fn act(&mut self, _t: usize, _state: &CarState) -> Result<f64> {
        Ok(self.0)
    }
}

/// Resets, then steps until the goal or `max_steps`, recording every transition.
pub fn run_episode(
    config: EnvConfig,
    source: &mut dyn ActionSource,
    max_steps: usize,
    seed: u64,
    start: Option<f64>,
) -> Result<Trajectory> {
    if max_steps == 0 {
        return Err(AifError::contract("max_steps must be at least 1"));
    }
    let mut env = MountainCar::new(config, seed);
    let (state, obs) = env.reset(start, seed)?;
    source.begin(obs)?;
    let mut traj = Trajectory {
        episode_id: 0,
        start_position: state.position,
        seed,
        initial_observation: obs,
        steps: Vec::with_capacity(max_steps),
    };
    let mut state = state;
    for t in 1..=max_steps {
        let action = source.act(t, &state)?.clamp(-1.0, 1.0);
        let tr = env.step(action)?;
        source.observe(action, tr.observation)?;
        traj.steps.push(Step {
            action,
            observation: tr.observation,
            reward: tr.reward,
            done: tr.done,
        });
        state = tr.state;
        if tr.done {
            break;
        }
    }
    Ok(traj)
}

/// Mixes a base seed with a stream label and index into an independent seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> EnvConfig {
        EnvConfig {
            noise_std: 0.0,
            max_steps: 200,
        }
    }

    #[test]
    fn reset_with_zero_noise_observes_position() {
        let mut env = MountainCar::new(noiseless(), 1);
        let (state, obs) = env.reset(Some(-0.5), 1).unwrap();
        assert_eq!(obs, -0.5);
        assert_eq!(state.velocity, 0.0);
    }

    #[test]
    fn reset_samples_valley_and_rejects_out_of_range() {
        let mut env = MountainCar::new(EnvConfig::default(), 0);
        for seed in 0..500 {
            let (s, _) = env.reset(None, seed).unwrap();
            assert!((-0.6..=-0.4).contains(&s.position));
        }
        assert!(env.reset(Some(0.7), 0).is_err());
        assert!(env.reset(Some(-1.3), 0).is_err());
    }

    #[test]
    fn step_matches_hand_evaluated_dynamics() {
        let mut env = MountainCar::new(noiseless(), 0);
        env.reset(Some(-0.5), 0).unwrap();
        let tr = env.step(0.0).unwrap();
        // -0.0025 cos(-1.5)
        assert!((tr.state.velocity - (-1.768_430_04e-4)).abs() < 1e-10);
        assert!((tr.state.position - (-0.500_176_843_0)).abs() < 1e-9);
        assert_eq!(tr.observation, tr.state.position);
        assert!(!tr.done);
    }

    #[test]
    fn goal_threshold_gives_reward() {
        let s = CarState {
            position: 0.449,
            velocity: 0.01,
        };
        let next = dynamics(s, 1.0);
        assert!(next.position >= GOAL_POSITION);
        let mut env = MountainCar::new(noiseless(), 0);
        env.state = s;
        let tr = env.step(1.0).unwrap();
        assert!(tr.done);
        assert_eq!(tr.reward, 1.0);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let next = dynamics(
            CarState {
                position: -1.2,
                velocity: -0.05,
            },
            -1.0,
        );
        assert!(next.position >= MIN_POSITION);
        assert_eq!(next.velocity, 0.0);
    }

    #[test]
    fn non_finite_action_is_rejected() {
        let mut env = MountainCar::new(noiseless(), 0);
        env.reset(Some(-0.5), 0).unwrap();
        assert!(env.step(f64::NAN).is_err());
        assert!(env.step(f64::INFINITY).is_err());
    }

    #[test]
    fn random_agent_repeats_ninety_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let first = random_agent_action(None, &mut rng);
        assert!((-1.0..=1.0).contains(&first));
        let mut prev = first;
        let mut repeats = 0;
        let n = 100_000;
        for _ in 0..n {
            let a = random_agent_action(Some(prev), &mut rng);
            assert!((-1.0..=1.0).contains(&a));
            if a == prev {
                repeats += 1;
            }
            prev = a;
        }
        let freq = repeats as f64 / n as f64;
        assert!((freq - 0.9).abs() < 0.01, "repeat frequency {freq}");
    }

    #[test]
    fn expert_pushes_with_velocity() {
        let s = |v| CarState {
            position: -0.5,
            velocity: v,
        };
        assert_eq!(scripted_expert_action(&s(0.01)), 1.0);
        assert_eq!(scripted_expert_action(&s(-0.01)), -1.0);
        assert_eq!(scripted_expert_action(&s(0.0)), 1.0);
    }

    #[test]
    fn expert_reaches_goal_from_valley_starts() {
        let traj = run_episode(noiseless(), &mut ScriptedExpert, 200, 0, Some(-0.5)).unwrap();
        assert!(traj.reached_goal());
        for i in 0..5 {
            let start = -0.6 + 0.05 * i as f64;
            let traj = run_episode(noiseless(), &mut ScriptedExpert, 200, i, Some(start)).unwrap();
            assert!(traj.reached_goal(), "start {start}");
            assert_eq!(traj.steps.last().unwrap().reward, 1.0);
        }
    }

    #[test]
    fn greedy_right_never_reaches_goal() {
        let traj = run_episode(noiseless(), &mut ConstantAction(1.0), 1000, 0, Some(-0.5)).unwrap();
        assert!(!traj.reached_goal());
        assert_eq!(traj.steps.len(), 1000);
    }

    #[test]
    fn coasting_from_the_valley_stays_bounded() {
        for i in 0..=10 {
            let mut s = CarState {
                position: -0.6 + 0.02 * i as f64,
                velocity: 0.0,
            };
            for _ in 0..2000 {
                s = dynamics(s, 0.0);
                assert!(s.velocity.abs() <= MAX_SPEED);
                assert!(s.position < GOAL_POSITION);
            }
        }
    }

    #[test]
    fn episodes_are_reproducible_and_bounded() {
        let cfg = EnvConfig::default();
        let a = run_episode(cfg, &mut RandomAgent::new(5), 200, 9, None).unwrap();
        let b = run_episode(cfg, &mut RandomAgent::new(5), 200, 9, None).unwrap();
        assert_eq!(a, b);
        assert!(a.steps.len() <= 200);
        assert!(a.steps.iter().all(|s| (-1.0..=1.0).contains(&s.action)));
        let rewarded = a.steps.iter().filter(|s| s.reward != 0.0).count();
        assert!(rewarded <= 1);
        assert!(run_episode(cfg, &mut RandomAgent::new(5), 0, 9, None).is_err());
    }
}
