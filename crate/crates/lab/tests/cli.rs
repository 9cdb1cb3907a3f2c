//! End-to-end runs of the `prlab` binary.

use std::path::Path;
use std::process::{Command, Output};

use resonance_core::env::{build_task, LevelKind};
use resonance_core::trainers::QTable;
use resonance_lab::Checkpoint;

fn prlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prlab"))
        .args(args)
        .env("PRLAB_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const VD_SMOKE: &str = r#"
id = "smoke"
task = "1A0B6C"
n_agents = 3
algorithm = "vd-eps"
seeds = [0]
output_dir = "out"
[plan]
stage1_episodes = 300
eval_points = 6
eval_episodes = 16
[vd]
epsilon_anneal_steps = 1000
"#;

const PR_SMOKE: &str = r#"
id = "pr"
task = "1A4B2C"
n_agents = 3
algorithm = "ppo-ma+pr"
seeds = [3, 4]
output_dir = "out"
[trainer]
batch_episodes = 64
update_epochs = 2
[plan]
stage1_episodes = 256
stage2_episodes = 256
eval_points = 4
eval_episodes = 16
[pr]
ramp_episodes = 128
"#;

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut rows = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = rows.headers().unwrap().iter().position(|h| h == name).expect("column exists");
    rows.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

#[test]
fn minimal_run_then_identical_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "vd.toml", VD_SMOKE);
    let out = prlab(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let seed_dir = dir.path().join("out/seed-0");
    let metrics = std::fs::read_to_string(seed_dir.join("metrics.csv")).unwrap();
    let episodes: Vec<u64> = column(&metrics, "episode").iter().map(|e| e.parse().unwrap()).collect();
    assert_eq!(episodes.len(), 6);
    assert!(episodes.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(*episodes.last().unwrap(), 300);
    assert!(seed_dir.join("timing.csv").is_file());
    assert!(seed_dir.join("checkpoints/final.ckpt").is_file());

    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let finals = std::fs::read_to_string(dir.path().join("out/finals.csv")).unwrap();
    assert_eq!(column(&summary, "total_mean"), column(&finals, "total"));

    let first = std::fs::read(seed_dir.join("metrics.csv")).unwrap();
    let ckpt = std::fs::read(seed_dir.join("checkpoints/final.ckpt")).unwrap();
    assert_eq!(code(&prlab(&["run", "--config", &cfg])), 0);
    assert_eq!(std::fs::read(seed_dir.join("metrics.csv")).unwrap(), first);
    assert_eq!(std::fs::read(seed_dir.join("checkpoints/final.ckpt")).unwrap(), ckpt);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap(), summary);
}

#[test]
fn policy_run_writes_stage_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pr.toml", PR_SMOKE);
    let out = prlab(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for seed in [3, 4] {
        let ckpts = dir.path().join(format!("out/seed-{seed}/checkpoints"));
        for label in ["stage1", "final"] {
            let c = Checkpoint::load(&ckpts.join(format!("{label}.ckpt"))).unwrap();
            assert_eq!(c.dims(), (7, 3, 10));
        }
        let metrics = std::fs::read_to_string(dir.path().join(format!("out/seed-{seed}/metrics.csv"))).unwrap();
        let stages = column(&metrics, "stage");
        assert!(stages.contains(&"1".to_string()) && stages.contains(&"2".to_string()));
        // per-level entries sum to the total on every row
        let mut rows = csv::Reader::from_reader(metrics.as_bytes());
        let headers = rows.headers().unwrap().clone();
        for r in rows.records() {
            let r = r.unwrap();
            let get = |name: &str| -> f64 { r[headers.iter().position(|h| h == name).unwrap()].parse().unwrap() };
            let levels: f64 = (0..7).map(|l| get(&format!("level_{l}_reward"))).sum();
            assert!((levels - get("mean_total_reward")).abs() <= 1e-9);
            assert!((0..7).all(|l| (0.0..=1.0001).contains(&get(&format!("level_{l}_reward")))));
        }
    }
    // summary mean is the arithmetic mean of the two seeds' finals
    let finals = std::fs::read_to_string(dir.path().join("out/finals.csv")).unwrap();
    let totals: Vec<f64> = column(&finals, "total").iter().map(|v| v.parse().unwrap()).collect();
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let mean: f64 = column(&summary, "total_mean")[0].parse().unwrap();
    assert!((mean - (totals[0] + totals[1]) / 2.0).abs() <= 1e-12);
    assert_eq!(column(&summary, "eta_max"), ["0.75"]);
}

#[test]
fn invalid_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let eta = write_config(dir.path(), "eta.toml", &PR_SMOKE.replace("[pr]", "[pr]\neta_max = 1.0"));
    assert_eq!(code(&prlab(&["run", "--config", &eta])), 2);
    let flags = write_config(dir.path(), "flags.toml", &VD_SMOKE.replace("[plan]", "[pr]\nenabled = true\n[plan]"));
    assert_eq!(code(&prlab(&["run", "--config", &flags])), 2);
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&prlab(&["run", "--config", missing.to_str().unwrap()])), 2);
    let ok = write_config(dir.path(), "vd.toml", VD_SMOKE);
    assert_eq!(code(&prlab(&["sweep", "--config", &ok, "--axis", "n_agents", "--values", ""])), 2);
    assert_eq!(code(&prlab(&["sweep", "--config", &ok, "--axis", "width", "--values", "3"])), 2);
    assert_eq!(code(&prlab(&["run"])), 2);
    assert!(!dir.path().join("out").exists(), "nothing runs on invalid input");
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "vd.toml", VD_SMOKE);
    let out = prlab(&["sweep", "--config", &cfg, "--axis", "n_agents", "--values", "2,4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("out/sweep_summary.csv")).unwrap();
    assert_eq!(column(&summary, "value"), ["2", "4"]);
    assert_eq!(column(&summary, "n_agents"), ["2", "4"]);
    assert!(dir.path().join("out/n_agents-4/seed-0/metrics.csv").is_file());
}

/// Every agent takes the level's target action, except that on Lv-C levels
/// the last agent steps aside unless `everyone_on_target` is set.
fn hand_built_optimum(n: usize, everyone_on_target: bool) -> QTable {
    let task = build_task("1A0B6C", n, 10).unwrap();
    let mut q = QTable::zeros(n, 7, 10);
    for (l, level) in task.levels.iter().enumerate() {
        for i in 0..n {
            let a = if i + 1 < n || everyone_on_target || level.kind != LevelKind::C {
                level.target_action
            } else {
                (level.target_action + 1) % 10
            };
            q.online[(i * 7 + l) * 10 + a] = 1.0;
        }
    }
    q
}

#[test]
fn evaluate_and_diagnose_a_hand_built_team() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.ckpt");
    Checkpoint::QTable(hand_built_optimum(3, false)).save(&path).unwrap();
    let p = path.to_str().unwrap();

    let out = prlab(&["evaluate", "--ckpt", p, "--task", "1A0B6C", "--agents", "3", "--episodes", "10"]);
    assert_eq!(code(&out), 0);
    let report = String::from_utf8(out.stdout).unwrap();
    assert_eq!(column(&report, "mean_reward").last().unwrap(), "7");

    let out = prlab(&["diagnose", "--ckpt", p, "--task", "1A0B6C", "--agents", "3"]);
    assert_eq!(code(&out), 0);
    let diag = String::from_utf8(out.stdout).unwrap();
    let pis = column(&diag, "pi_gamma");
    assert_eq!(pis.len(), 6 * 3);
    for level in pis.chunks(3) {
        assert_eq!(level, ["1", "1", "0"]);
    }
    assert!(column(&diag, "p_plt").iter().all(|v| v == "0"));
    assert!(column(&diag, "expected_lvc_reward").iter().all(|v| v == "1"));

    assert_eq!(code(&prlab(&["evaluate", "--ckpt", p, "--task", "1A0B6C", "--agents", "4"])), 2);
    assert_eq!(code(&prlab(&["diagnose", "--ckpt", p, "--task", "2A0B6C", "--agents", "3"])), 2);
    let missing = dir.path().join("none.ckpt");
    assert_eq!(code(&prlab(&["evaluate", "--ckpt", missing.to_str().unwrap(), "--task", "1A0B6C", "--agents", "3"])), 1);
}

#[test]
fn everyone_on_the_target_scores_zero_on_lv_c() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.ckpt");
    Checkpoint::QTable(hand_built_optimum(3, true)).save(&path).unwrap();
    let out = prlab(&["evaluate", "--ckpt", path.to_str().unwrap(), "--task", "1A0B6C", "--agents", "3", "--episodes", "5"]);
    let report = String::from_utf8(out.stdout).unwrap();
    let rewards = column(&report, "mean_reward");
    assert_eq!(rewards[0], "1");
    assert!(rewards[1..7].iter().all(|v| v == "0"));
}
