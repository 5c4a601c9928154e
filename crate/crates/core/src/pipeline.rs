//! Pipeline stages behind the `aif` subcommands.
//!
//! Every stage reads its inputs from the run directory, writes versioned
//! artifacts back into it and returns an `AIFREPORT v1` report that is also
//! saved as `<stage>.report`. Reports echo the full config and contain no
//! timing data, so reruns from the same config are byte-identical.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::env::{
    derive_seed, read_trajectories, run_episode, write_trajectories, ConstantAction, MountainCar, RandomAgent,
    ScriptedExpert, Trajectory,
};
use crate::error::{AifError, Result};
use crate::model::{open_loop_predictions, train_models, ModelSet, TrainConfig};
use crate::planner::{act_in_env, diagnostics_series, plan, spearman, spearman_permutation_p, PlannerConfig};
use crate::policy::{evaluate_policy, evaluate_with, train_policy, HabitPolicy, PolicyEvaluation, PolicyTrainConfig};
use crate::prior::{
    encode_trajectory, flat_prior, prior_from_demos, prior_from_reward, read_prior, write_prior, PreferredPrior,
    PriorMode,
};
use crate::series::Series;

pub const REPORT_MAGIC: &str = "AIFREPORT v1";

pub const RANDOM_TRAJ: &str = "random.aiftraj";
pub const EXPERT_TRAJ: &str = "expert.aiftraj";
pub const VALIDATION_TRAJ: &str = "validation.aiftraj";
pub const MODEL_FILE: &str = "model.aifnet";
pub const EPOCHS_CSV: &str = "train_model_epochs.csv";
pub const POLICY_FILE: &str = "policy.aifnet";
pub const POLICY_CURVE_CSV: &str = "policy_g_curve.csv";
pub const POLICY_TRAJ: &str = "evaluation_policy.aiftraj";
pub const PLOTS_DIR: &str = "plots";

pub fn prior_file(mode: PriorMode) -> String {
    format!("prior_{mode}.aifprior")
}

pub fn diagnostics_file(mode: PriorMode) -> String {
    format!("plan_eval_{mode}.csv")
}

const STREAM_COLLECT: u64 = 1;
const STREAM_EXPERT: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_VALIDATION: u64 = 4;
const STREAM_PLAN: u64 = 5;
const STREAM_POLICY: u64 = 6;
const STREAM_EVALUATE: u64 = 7;

/// Stage report: metrics plus the config that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub stage: String,
    pub metrics: toml::Table,
    pub config: RunConfig,
}

impl Report {
    pub fn new(stage: &str, config: &RunConfig) -> Self {
        Self {
            stage: stage.to_string(),
            metrics: toml::Table::new(),
            config: config.clone(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.metrics.insert(key.to_string(), value.into());
    }

    fn count(&mut self, key: &str, n: usize) {
        self.set(key, n as i64);
    }

    pub fn metric(&self, key: &str) -> Result<f64> {
        match self.metrics.get(key) {
            Some(toml::Value::Float(x)) => Ok(*x),
            Some(toml::Value::Integer(n)) => Ok(*n as f64),
            Some(toml::Value::Boolean(b)) => Ok(f64::from(u8::from(*b))),
            _ => Err(AifError::format("AIFREPORT", format!("no numeric metric {key:?} in {}", self.stage))),
        }
    }

    pub fn to_text(&self) -> String {
        let body = toml::to_string(self).expect("report serializes");
        format!("{REPORT_MAGIC}\n{body}")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let body = text
            .strip_prefix(REPORT_MAGIC)
            .and_then(|b| b.strip_prefix('\n'))
            .ok_or_else(|| AifError::format("AIFREPORT", format!("missing {REPORT_MAGIC:?} header")))?;
        toml::from_str(body).map_err(|e| AifError::format("AIFREPORT", e.message().to_string()))
    }

    pub fn file_name(stage: &str) -> String {
        format!("{stage}.report")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    fn save(self, out: &Path) -> Result<Self> {
        let path = out.join(Self::file_name(&self.stage));
        std::fs::write(&path, self.to_text()).map_err(|e| AifError::io(&path, e))?;
        Ok(self)
    }
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(AifError::MissingArtifact(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| AifError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AifError::io(dir, e))
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(AifError::MissingArtifact(path))
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn random_episodes(cfg: &RunConfig, n: usize, base: u64) -> Result<Vec<Trajectory>> {
    (0..n)
        .map(|i| {
            let i = i as u64;
            let mut agent = RandomAgent::new(derive_seed(base, 0, i));
            let mut traj = run_episode(cfg.env, &mut agent, cfg.env.max_steps, derive_seed(base, 1, i), None)?;
            traj.episode_id = i as usize;
            Ok(traj)
        })
        .collect()
}

pub fn collect(cfg: &RunConfig, out: &Path) -> Result<Report> {
    ensure_dir(out)?;
    let trajs = random_episodes(cfg, cfg.collect.episodes, derive_seed(cfg.seed, STREAM_COLLECT, 0))?;
    write_trajectories(&out.join(RANDOM_TRAJ), &trajs)?;
    let threshold = cfg.prior.threshold;
    let mut r = Report::new("collect", cfg);
    r.count("episodes", trajs.len());
    r.count("steps", trajs.iter().map(Trajectory::len).sum());
    r.count("goal_episodes", trajs.iter().filter(|t| t.reached_goal()).count());
    r.count(
        "goal_episodes_after_threshold",
        trajs
            .iter()
            .filter(|t| t.reward_time().is_some_and(|k| k >= threshold))
            .count(),
    );
    r.save(out)
}

pub fn record_expert(cfg: &RunConfig, out: &Path) -> Result<Report> {
    ensure_dir(out)?;
    let base = derive_seed(cfg.seed, STREAM_EXPERT, 0);
    let mut demos = Vec::with_capacity(cfg.expert.episodes);
    for (i, start) in cfg.expert.starts().into_iter().enumerate() {
        let mut traj = run_episode(cfg.env, &mut ScriptedExpert, cfg.env.max_steps, derive_seed(base, 0, i as u64), Some(start))?;
        if !traj.reached_goal() {
            return Err(AifError::ExpertFailed {
                start,
                steps: traj.len(),
            });
        }
        traj.episode_id = i;
        demos.push(traj);
    }
    write_trajectories(&out.join(EXPERT_TRAJ), &demos)?;
    let lengths: Vec<f64> = demos.iter().map(|d| d.len() as f64).collect();
    let mut r = Report::new("record-expert", cfg);
    r.count("episodes", demos.len());
    r.set("mean_steps", mean(&lengths));
    r.set("max_steps", lengths.iter().copied().fold(0.0, f64::max));
    r.save(out)
}

/// Open-loop RMS pooled over every predicted step of every episode.
fn pooled_open_loop_rms(models: &ModelSet, trajs: &[Trajectory], horizon: usize) -> Result<f64> {
    let mut sq = 0.0;
    let mut n = 0usize;
    for t in trajs.iter().filter(|t| !t.is_empty()) {
        for (truth, pred, _) in open_loop_predictions(models, t, Some(horizon))? {
            sq += (truth - pred).powi(2);
            n += 1;
        }
    }
    Ok((sq / n.max(1) as f64).sqrt())
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.seed, STREAM_TRAIN, cfg.training.seed),
        ..cfg.training.clone()
    }
}

pub fn train_model(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let dataset = read_trajectories(&out.join(RANDOM_TRAJ))?;
    let tcfg = train_config(cfg);
    let untrained = ModelSet::new(&cfg.model, tcfg.seed)?;
    let (models, report) = train_models(&dataset, &cfg.model, &tcfg)?;
    models.save(&out.join(MODEL_FILE))?;

    let validation = random_episodes(
        cfg,
        cfg.validation.episodes,
        derive_seed(cfg.seed, STREAM_VALIDATION, 0),
    )?;
    write_trajectories(&out.join(VALIDATION_TRAJ), &validation)?;
    let h = cfg.validation.horizon;
    let rms = pooled_open_loop_rms(&models, &validation, h)?;
    let baseline = pooled_open_loop_rms(&untrained, &validation, h)?;

    let mut epochs = Series::new(["epoch", "free_energy", "nll", "kl"]);
    for e in &report.epochs {
        epochs.push([e.epoch as f64, e.free_energy, e.nll, e.kl]);
    }
    epochs.write(&out.join(EPOCHS_CSV))?;

    let mut r = Report::new("train-model", cfg);
    r.count("epochs", report.epochs.len());
    r.count("batches_per_epoch", report.batches_per_epoch);
    if let (Some(first), Some(last)) = (report.epochs.first(), report.epochs.last()) {
        r.set("first_epoch_free_energy", first.free_energy);
        r.set("final_free_energy", last.free_energy);
        r.set("final_nll", last.nll);
        r.set("final_kl", last.kl);
    }
    r.count("validation_episodes", validation.len());
    r.count("open_loop_horizon", h);
    r.set("open_loop_rms", rms);
    r.set("untrained_open_loop_rms", baseline);
    r.set("improvement_ratio", baseline / rms);
    r.save(out)
}

fn load_models(out: &Path) -> Result<ModelSet> {
    ModelSet::load(&out.join(MODEL_FILE))
}

pub fn build_prior(cfg: &RunConfig, out: &Path, mode: PriorMode, threshold: usize) -> Result<Report> {
    let models = load_models(out)?;
    let horizon = cfg.prior.horizon;
    let prior = match mode {
        PriorMode::Demos => prior_from_demos(&models, &read_trajectories(&out.join(EXPERT_TRAJ))?, horizon)?,
        PriorMode::Reward => {
            let mut data = read_trajectories(&out.join(RANDOM_TRAJ))?;
            data.extend(read_trajectories(&out.join(EXPERT_TRAJ))?);
            prior_from_reward(&models, &data, threshold, horizon)?
        }
        PriorMode::Flat => flat_prior(models.state_dim, horizon)?,
    };
    write_prior(&out.join(prior_file(mode)), &prior)?;

    let mut r = Report::new(&format!("build-prior-{mode}"), cfg);
    r.set("mode", mode.to_string());
    r.count("horizon", prior.horizon());
    r.count("active_steps", prior.per_timestep.iter().filter(|s| s.active).count());
    if let Some(t) = prior.threshold {
        r.count("threshold", t);
    }
    let fifth = (horizon / 5).max(1);
    let band_var = |range: std::ops::Range<usize>| {
        let v: Vec<f64> = prior.per_timestep[range]
            .iter()
            .flat_map(|s| s.gaussian.variance().iter().copied())
            .collect();
        mean(&v)
    };
    r.set("early_variance", band_var(0..fifth));
    r.set("late_variance", band_var(horizon - fifth..horizon));
    if let Some(last) = prior.last_active() {
        r.set("final_decoded_position", models.likelihood_decode(last.gaussian.mean())?.mean()[0]);
    }
    r.save(out)
}

fn load_prior(out: &Path, mode: PriorMode) -> Result<PreferredPrior> {
    read_prior(&out.join(prior_file(mode)))
}

fn plan_eval_planner(cfg: &RunConfig) -> PlannerConfig {
    PlannerConfig {
        num_candidates: cfg.plan_eval.num_candidates,
        horizon: cfg.plan_eval.horizon,
        ..cfg.planner.clone()
    }
}

pub fn plan_eval(cfg: &RunConfig, out: &Path, mode: PriorMode) -> Result<Report> {
    let models = load_models(out)?;
    let prior = load_prior(out, mode)?;
    let pcfg = plan_eval_planner(cfg);
    let base = derive_seed(cfg.seed, STREAM_PLAN, cfg.planner.seed);

    let mut car = MountainCar::new(cfg.env, derive_seed(base, 0, 0));
    let (_, obs0) = car.reset(Some(cfg.plan_eval.start), derive_seed(base, 0, 0))?;
    let belief = models.posterior_infer(&vec![0.0; models.state_dim], 0.0, obs0)?;
    // same base seed for every prior, so all priors score the same candidates
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, 1, 0));
    let outcome = plan(&models, &belief, &prior, 0, &pcfg, &mut rng)?;
    diagnostics_series(&outcome.candidates).write(&out.join(diagnostics_file(mode)))?;

    let g: Vec<f64> = outcome.candidates.iter().map(|c| c.g_value).collect();
    let dist: Vec<f64> = outcome.candidates.iter().map(|c| c.distance_to_goal()).collect();
    let (hit, miss): (Vec<_>, Vec<_>) = outcome.candidates.iter().partition(|c| c.reached_goal());
    let mean_g = |set: &[&crate::planner::ImaginedRollout]| mean(&set.iter().map(|c| c.g_value).collect::<Vec<_>>());
    let rho = spearman(&g, &dist)?;
    let mut perm_rng = ChaCha8Rng::seed_from_u64(derive_seed(base, 2, 0));
    let p = spearman_permutation_p(&g, &dist, cfg.plan_eval.permutations, &mut perm_rng)?;

    let mut r = Report::new(&format!("plan-eval-{mode}"), cfg);
    r.set("mode", mode.to_string());
    r.count("candidates", outcome.candidates.len());
    r.count("reaching_candidates", hit.len());
    r.set("mean_g_reaching", mean_g(&hit));
    r.set("mean_g_non_reaching", mean_g(&miss));
    r.set("spearman_g_distance", rho);
    r.set("permutation_p", p);
    r.count("permutations", cfg.plan_eval.permutations);
    r.set("chosen_action", outcome.action);
    r.set("chosen_reaches_goal", outcome.candidates[outcome.chosen].reached_goal());

    if cfg.plan_eval.closed_loop_episodes > 0 {
        let mut wins = 0;
        for i in 0..cfg.plan_eval.closed_loop_episodes as u64 {
            let traj = act_in_env(&models, &prior, &cfg.planner, cfg.env, derive_seed(base, 3, i), Some(cfg.plan_eval.start))?;
            wins += usize::from(traj.reached_goal());
        }
        r.count("closed_loop_episodes", cfg.plan_eval.closed_loop_episodes);
        r.count("closed_loop_successes", wins);
    }
    r.save(out)
}

fn policy_config(cfg: &RunConfig) -> PolicyTrainConfig {
    PolicyTrainConfig {
        seed: derive_seed(cfg.seed, STREAM_POLICY, cfg.policy.seed),
        ..cfg.policy.clone()
    }
}

/// Trains the habit policy from latent start states encoded along the expert demonstrations.
pub fn train_policy_stage(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let models = load_models(out)?;
    let prior = load_prior(out, cfg.policy_prior)?;
    let demos = read_trajectories(&out.join(EXPERT_TRAJ))?;
    let pcfg = policy_config(cfg);
    let (policy, report) = train_policy(&models, &prior, &demos, &pcfg)?;
    policy.save(&out.join(POLICY_FILE))?;

    let mut curve = Series::new(["iteration", "g"]);
    for (i, g) in report.g_curve.iter().enumerate() {
        curve.push([(i + 1) as f64, *g]);
    }
    curve.write(&out.join(POLICY_CURVE_CSV))?;

    let window = (report.g_curve.len() / 10).max(1).min(report.g_curve.len());
    let mut r = Report::new("train-policy", cfg);
    r.set("prior", cfg.policy_prior.to_string());
    r.count("iterations", report.g_curve.len());
    if window > 0 {
        r.set("initial_mean_g", mean(&report.g_curve[..window]));
        r.set("final_mean_g", mean(&report.g_curve[report.g_curve.len() - window..]));
    }
    r.save(out)
}

fn record_eval(r: &mut Report, prefix: &str, eval: &PolicyEvaluation, path: &Path) -> Result<()> {
    eval.to_series().write(path)?;
    r.count(&format!("{prefix}_episodes"), eval.records.len());
    r.count(&format!("{prefix}_successes"), eval.successes());
    r.set(&format!("{prefix}_success_rate"), eval.success_rate);
    if let Some(m) = eval.mean_steps_to_goal {
        r.set(&format!("{prefix}_mean_steps_to_goal"), m);
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let models = load_models(out)?;
    let policy = HabitPolicy::load(&out.join(POLICY_FILE))?;
    let base = derive_seed(cfg.seed, STREAM_EVALUATE, 0);
    let ev = &cfg.evaluation;

    let mut start_rng = ChaCha8Rng::seed_from_u64(derive_seed(base, 0, 0));
    let starts: Vec<f64> = (0..ev.episodes)
        .map(|_| start_rng.random_range(ev.start_low..=ev.start_high))
        .collect();
    let seeds: Vec<u64> = (0..ev.episodes as u64).map(|i| derive_seed(base, 1, i)).collect();
    let (policy_eval, trajs) = evaluate_policy(&policy, &models, cfg.env, &starts, &seeds)?;
    write_trajectories(&out.join(POLICY_TRAJ), &trajs)?;
    let (random_eval, _) = evaluate_with(cfg.env, &starts, &seeds, |s| {
        Box::new(RandomAgent::new(derive_seed(s, 2, 0)))
    })?;
    let greedy_starts = vec![ev.baseline_start; ev.baseline_episodes];
    let greedy_seeds: Vec<u64> = (0..ev.baseline_episodes as u64).map(|i| derive_seed(base, 3, i)).collect();
    let (greedy_eval, _) = evaluate_with(cfg.env, &greedy_starts, &greedy_seeds, |_| Box::new(ConstantAction(1.0)))?;

    let mut r = Report::new("evaluate", cfg);
    record_eval(&mut r, "policy", &policy_eval, &out.join("evaluation_policy.csv"))?;
    record_eval(&mut r, "random", &random_eval, &out.join("evaluation_random.csv"))?;
    record_eval(&mut r, "greedy", &greedy_eval, &out.join("evaluation_greedy.csv"))?;
    r.save(out)
}

/// Writes the figure-analog data series under `plots/`.
pub fn export_plots(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let models = load_models(out)?;
    let demos = read_trajectories(&out.join(EXPERT_TRAJ))?;
    let validation = read_trajectories(&out.join(VALIDATION_TRAJ))?;
    let policy_trajs = read_trajectories(&out.join(POLICY_TRAJ))?;
    let plots = out.join(PLOTS_DIR);
    ensure_dir(&plots)?;
    let d = models.state_dim;
    let mut written = Vec::new();

    let latent_cols = || (0..d).map(|i| format!("s{i}"));
    let mut latent = Series::new(
        ["episode".to_string(), "t".to_string()]
            .into_iter()
            .chain(latent_cols())
            .chain(["observation".to_string()]),
    );
    for demo in &demos {
        let obs = demo.observations();
        for (t, s) in encode_trajectory(&models, demo)?.into_iter().enumerate() {
            let mut row = vec![demo.episode_id.to_string(), t.to_string()];
            row.extend(s.iter().map(f64::to_string));
            row.push(obs[t].to_string());
            latent.push(row);
        }
    }
    written.push(("latent_trace.csv", latent));

    let mut preds = Series::new(["episode", "t", "truth", "predicted_mean", "predicted_std"]);
    for traj in validation.iter().filter(|t| !t.is_empty()) {
        for (t, (truth, m, s)) in open_loop_predictions(&models, traj, Some(cfg.validation.horizon))?
            .into_iter()
            .enumerate()
        {
            preds.push([traj.episode_id.to_string(), (t + 1).to_string(), truth.to_string(), m.to_string(), s.to_string()]);
        }
    }
    written.push(("predictions.csv", preds));

    let mut prior_series = Vec::new();
    let mut diagnostics = Vec::new();
    for mode in [PriorMode::Demos, PriorMode::Reward, PriorMode::Flat] {
        let path = out.join(prior_file(mode));
        if path.exists() {
            prior_series.push((mode, read_prior(&path)?));
        }
        let diag = out.join(diagnostics_file(mode));
        if diag.exists() {
            diagnostics.push((mode, diag));
        }
    }
    if prior_series.is_empty() {
        return Err(AifError::MissingArtifact(out.join(prior_file(PriorMode::Demos))));
    }
    if diagnostics.is_empty() {
        require(out.join(diagnostics_file(PriorMode::Demos)))?;
    }
    let mut prior_files = Vec::new();
    for (mode, prior) in &prior_series {
        let mut s = Series::new(
            ["t".to_string(), "active".to_string()]
                .into_iter()
                .chain((0..d).map(|i| format!("mean{i}")))
                .chain((0..d).map(|i| format!("std{i}")))
                .chain(["decoded_position".to_string()]),
        );
        for (t, step) in prior.per_timestep.iter().enumerate() {
            let mut row = vec![t.to_string(), u8::from(step.active).to_string()];
            row.extend(step.gaussian.mean().iter().map(f64::to_string));
            row.extend(step.gaussian.std_dev().iter().map(f64::to_string));
            row.push(models.likelihood_decode(step.gaussian.mean())?.mean()[0].to_string());
            s.push(row);
        }
        prior_files.push((format!("prior_{mode}.csv"), s));
    }

    let mut traces = Series::new(["episode", "t", "observation", "action"]);
    for traj in &policy_trajs {
        let (obs, acts) = (traj.observations(), traj.actions());
        for t in 0..obs.len() {
            traces.push([traj.episode_id.to_string(), t.to_string(), obs[t].to_string(), acts[t].to_string()]);
        }
    }
    written.push(("policy_traces.csv", traces));

    let mut r = Report::new("export-plots", cfg);
    let mut files = Vec::new();
    for (name, s) in written {
        s.write(&plots.join(name))?;
        files.push(name.to_string());
    }
    for (name, s) in prior_files {
        s.write(&plots.join(&name))?;
        files.push(name);
    }
    for (mode, src) in diagnostics {
        // validate, then pass the bytes through untouched
        Series::read(&src)?;
        let name = format!("g_diagnostics_{mode}.csv");
        let dst = plots.join(&name);
        std::fs::copy(&src, &dst).map_err(|e| AifError::io(&dst, e))?;
        files.push(name);
    }
    r.set("files", toml::Value::Array(files.into_iter().map(toml::Value::String).collect()));
    r.save(out)
}

/// Headline numbers from every stage, gathered into `reproduce.report`.
fn summarize(cfg: &RunConfig, reports: &[Report], out: &Path) -> Result<Report> {
    let mut r = Report::new("reproduce", cfg);
    for rep in reports {
        let prefix = rep.stage.replace('-', "_");
        for (k, v) in &rep.metrics {
            if !matches!(v, toml::Value::Array(_)) {
                r.metrics.insert(format!("{prefix}__{k}"), v.clone());
            }
        }
    }
    r.save(out)
}

/// Every stage in order with both informative priors planned against.
pub fn reproduce(cfg: &RunConfig, out: &Path, mut progress: impl FnMut(&Report)) -> Result<Report> {
    let mut reports = Vec::new();
    let mut push = |r: Report, reports: &mut Vec<Report>| {
        progress(&r);
        reports.push(r);
    };
    push(collect(cfg, out)?, &mut reports);
    push(record_expert(cfg, out)?, &mut reports);
    push(train_model(cfg, out)?, &mut reports);
    for mode in [PriorMode::Demos, PriorMode::Reward, PriorMode::Flat] {
        push(build_prior(cfg, out, mode, cfg.prior.threshold)?, &mut reports);
    }
    for mode in [PriorMode::Demos, PriorMode::Reward] {
        push(plan_eval(cfg, out, mode)?, &mut reports);
    }
    push(train_policy_stage(cfg, out)?, &mut reports);
    push(evaluate(cfg, out)?, &mut reports);
    push(export_plots(cfg, out)?, &mut reports);
    summarize(cfg, &reports, out)
}
