//! End-to-end runs of the `aif` binary on a tiny configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aif_core::env::read_trajectories;
use aif_core::pipeline::Report;
use aif_core::prior::read_prior;
use aif_core::series::Series;

const TINY: &str = r#"
seed = 3
[collect]
episodes = 12
[model]
state_dim = 2
hidden = [8]
[training]
epochs = 2
[validation]
episodes = 2
[plan_eval]
num_candidates = 24
horizon = 30
permutations = 99
[policy]
iterations = 5
hidden = [8]
"#;

struct Run {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Run {
    fn new() -> Self {
        Self::with_config(TINY)
    }

    fn with_config(text: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("tiny.toml");
        std::fs::write(&config, text).unwrap();
        Self { dir, config }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("run")
    }

    fn aif(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_aif"))
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.aif(args);
        assert!(
            out.status.success(),
            "aif {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).to_string();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "expected a one-line diagnostic, got {text:?}");
    lines[0].to_string()
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn collect_is_bounded_and_deterministic() {
    let run = Run::new();
    run.ok(&["collect"]);
    let first = std::fs::read(run.file("random.aiftraj")).unwrap();
    let trajs = read_trajectories(&run.file("random.aiftraj")).unwrap();
    assert_eq!(trajs.len(), 12);
    assert!(trajs.iter().all(|t| t.len() <= 200));
    assert!(trajs.iter().flat_map(|t| &t.steps).all(|s| (-1.0..=1.0).contains(&s.action)));

    run.ok(&["collect"]);
    assert_eq!(std::fs::read(run.file("random.aiftraj")).unwrap(), first);
    run.ok(&["collect", "--seed", "4"]);
    assert_ne!(std::fs::read(run.file("random.aiftraj")).unwrap(), first);
}

#[test]
fn expert_demos_all_reach_the_goal() {
    let run = Run::new();
    run.ok(&["record-expert"]);
    let demos = read_trajectories(&run.file("expert.aiftraj")).unwrap();
    assert_eq!(demos.len(), 5);
    for d in &demos {
        let last = d.steps.last().unwrap();
        assert!(last.done && last.reward == 1.0);
    }
}

#[test]
fn expert_failure_is_reported() {
    let run = Run::with_config("[env]\nmax_steps = 20\n");
    let out = run.aif(&["record-expert"]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).contains("expert failed to reach goal"));
}

#[test]
fn missing_upstream_artifacts_are_named() {
    let run = Run::new();
    for (args, missing) in [
        (vec!["train-model"], "random.aiftraj"),
        (vec!["build-prior", "--mode", "demos"], "model.aifnet"),
        (vec!["plan-eval"], "model.aifnet"),
        (vec!["train-policy"], "model.aifnet"),
        (vec!["evaluate"], "model.aifnet"),
        (vec!["export-plots"], "model.aifnet"),
    ] {
        let out = run.aif(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        let line = stderr_line(&out);
        assert!(line.contains("missing upstream artifact") && line.contains(missing), "{line}");
    }
}

#[test]
fn bad_configs_fail_with_one_line() {
    let run = Run::with_config("[collect]\nepisodes = 0\n");
    let out = run.aif(&["collect"]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).contains("config error"));

    let run = Run::with_config("no_such_key = 1\n");
    assert!(!run.aif(&["collect"]).status.success());
}

#[test]
fn stages_write_versioned_outputs() {
    let run = Run::new();
    for stage in ["collect", "record-expert", "train-model"] {
        run.ok(&[stage]);
    }
    run.ok(&["build-prior", "--mode", "demos"]);
    let demos = read_prior(&run.file("prior_demos.aifprior")).unwrap();
    assert!(demos.per_timestep.iter().all(|s| s.active));

    run.ok(&["build-prior", "--mode", "reward", "--threshold", "100"]);
    let reward = read_prior(&run.file("prior_reward.aifprior")).unwrap();
    for (t, s) in reward.per_timestep.iter().enumerate() {
        assert_eq!(s.active, t >= 100, "timestep {t}");
    }

    run.ok(&["plan-eval", "--mode", "demos"]);
    let diag = Series::read(&run.file("plan_eval_demos.csv")).unwrap();
    assert_eq!(diag.columns, ["candidate_id", "g_value", "final_position", "reached_goal"]);
    assert_eq!(diag.rows.len(), 24);
    assert!(diag.column("g_value").unwrap().iter().all(|g| g.is_finite()));

    let report = Report::read(&run.file("plan-eval-demos.report")).unwrap();
    assert_eq!(report.config.seed, 3);
    assert_eq!(report.config.plan_eval.num_candidates, 24);
    assert_eq!(report.metric("candidates").unwrap(), 24.0);
}

#[test]
fn reproduce_is_byte_identical_and_exports_plot_data() {
    let a = Run::new();
    let b = Run::new();
    a.ok(&["reproduce"]);
    b.ok(&["reproduce"]);
    let (fa, fb) = (files_under(&a.out()), files_under(&b.out()));
    let rel = |files: &[PathBuf], root: &Path| -> Vec<PathBuf> {
        files.iter().map(|f| f.strip_prefix(root).unwrap().to_path_buf()).collect()
    };
    assert_eq!(rel(&fa, &a.out()), rel(&fb, &b.out()));
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{} differs", x.display());
    }

    let magics = ["AIFTRAJ v1", "AIFNET v1", "AIFPRIOR v1", "AIFCSV v1", "AIFREPORT v1"];
    for f in &fa {
        let bytes = std::fs::read(f).unwrap();
        assert!(
            magics.iter().any(|m| bytes.starts_with(format!("{m}\n").as_bytes())),
            "{} lacks a versioned header",
            f.display()
        );
    }

    let plots = a.out().join("plots");
    let latent = Series::read(&plots.join("latent_trace.csv")).unwrap();
    assert_eq!(latent.columns.iter().filter(|c| c.starts_with('s')).count(), 2);
    let preds = Series::read(&plots.join("predictions.csv")).unwrap();
    for col in ["t", "truth", "predicted_mean", "predicted_std"] {
        assert!(preds.columns.iter().any(|c| c == col), "missing {col}");
    }
    for mode in ["demos", "reward"] {
        assert_eq!(
            std::fs::read(plots.join(format!("g_diagnostics_{mode}.csv"))).unwrap(),
            std::fs::read(a.file(&format!("plan_eval_{mode}.csv"))).unwrap()
        );
    }
    let prior = Series::read(&plots.join("prior_demos.csv")).unwrap();
    assert_eq!(prior.rows.len(), 200);
    assert!(Series::read(&plots.join("policy_traces.csv")).unwrap().rows.len() > 10);

    let summary = Report::read(&a.file("reproduce.report")).unwrap();
    assert!(summary.metric("evaluate__greedy_successes").is_ok());
}
