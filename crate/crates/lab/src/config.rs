//! TOML experiment configuration.
//!
//! ```toml
//! id = "ppo-n3"
//! task = "1A4B2C"            # or task_file = "levels.txt"
//! n_agents = 3
//! n_actions = 10
//! algorithm = "ppo-ma+pr"    # ppo-ma | ppo-ma+pr | ppo-ma+pr-fast | vd-eps
//! seeds = [0, 1, 2, 3, 4]
//! output_dir = "out/ppo-n3"
//!
//! [trainer]                  # policy-gradient settings
//! learning_rate = 2e-3
//!
//! [vd]                       # value-decomposition settings
//! epsilon_anneal_steps = 200000
//!
//! [plan]
//! stage1_episodes = 65536
//! stage2_episodes = 60000
//!
//! [pr]
//! eta_max = 0.75
//! ramp_episodes = 20000
//! ```
//!
//! Every table and key is optional except `task`/`task_file`, `n_agents`,
//! `algorithm` and `seeds`. Relative paths resolve against the directory of
//! the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use resonance_core::env::{build_task, parse_task_config, TaskSpec};
use resonance_core::policy::RatioReference;
use resonance_core::resonance::{Granularity, ResonanceConfig};
use resonance_core::trainers::{PgTrainerConfig, PolicyEvalMode, StagePlan, VdTrainerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{config_error, LabError, Result};

/// Stage-1 budget at scale 1.
pub const REFERENCE_STAGE1_EPISODES: u64 = 1 << 18;
/// Default fraction of [`REFERENCE_STAGE1_EPISODES`] used when no explicit
/// stage-1 budget is configured.
pub const DEFAULT_BUDGET_SCALE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ppo-ma")]
    PpoMa,
    #[serde(rename = "ppo-ma+pr")]
    PpoMaPr,
    #[serde(rename = "ppo-ma+pr-fast")]
    PpoMaPrFast,
    #[serde(rename = "vd-eps")]
    VdEps,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::PpoMa, Algorithm::PpoMaPr, Algorithm::PpoMaPrFast, Algorithm::VdEps];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::PpoMa => "ppo-ma",
            Algorithm::PpoMaPr => "ppo-ma+pr",
            Algorithm::PpoMaPrFast => "ppo-ma+pr-fast",
            Algorithm::VdEps => "vd-eps",
        }
    }

    pub fn uses_resonance(self) -> bool {
        matches!(self, Algorithm::PpoMaPr | Algorithm::PpoMaPrFast)
    }

    pub fn is_fast(self) -> bool {
        self == Algorithm::PpoMaPrFast
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| LabError::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioRef {
    Behavior,
    #[default]
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Sample,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GranularityName {
    #[default]
    Episode,
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub learning_rate: f64,
    pub batch_episodes: usize,
    pub update_epochs: usize,
    pub clip: f64,
    pub dual_clip: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub hidden: usize,
    pub baseline_decay: f64,
    pub normalize_advantages: bool,
    pub ratio_reference: RatioRef,
    pub include_resonated: bool,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let d = PgTrainerConfig::default();
        Self {
            learning_rate: d.learning_rate,
            batch_episodes: d.batch_episodes,
            update_epochs: d.update_epochs,
            clip: d.clip,
            dual_clip: d.dual_clip,
            entropy_coef: d.entropy_coef,
            gamma: d.gamma,
            hidden: d.hidden,
            baseline_decay: d.baseline_decay,
            normalize_advantages: d.normalize_advantages,
            ratio_reference: match d.ratio_reference {
                RatioReference::Behavior => RatioRef::Behavior,
                RatioReference::Raw => RatioRef::Raw,
            },
            include_resonated: d.include_resonated,
        }
    }
}

impl TrainerSection {
    pub fn to_core(&self) -> PgTrainerConfig {
        PgTrainerConfig {
            learning_rate: self.learning_rate,
            batch_episodes: self.batch_episodes,
            update_epochs: self.update_epochs,
            clip: self.clip,
            dual_clip: self.dual_clip,
            entropy_coef: self.entropy_coef,
            gamma: self.gamma,
            hidden: self.hidden,
            baseline_decay: self.baseline_decay,
            normalize_advantages: self.normalize_advantages,
            ratio_reference: match self.ratio_reference {
                RatioRef::Behavior => RatioReference::Behavior,
                RatioRef::Raw => RatioReference::Raw,
            },
            include_resonated: self.include_resonated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VdSection {
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub epsilon_anneal_steps: u64,
    pub replay_capacity: usize,
    pub batch_episodes: usize,
    pub target_sync_interval: u64,
    pub gamma: f64,
}

impl Default for VdSection {
    fn default() -> Self {
        let d = VdTrainerConfig::default();
        Self {
            learning_rate: d.learning_rate,
            epsilon_start: d.epsilon_start,
            epsilon_min: d.epsilon_min,
            epsilon_anneal_steps: d.epsilon_anneal_steps,
            replay_capacity: d.replay_capacity,
            batch_episodes: d.batch_episodes,
            target_sync_interval: d.target_sync_interval,
            gamma: d.gamma,
        }
    }
}

impl VdSection {
    pub fn to_core(&self) -> VdTrainerConfig {
        VdTrainerConfig {
            learning_rate: self.learning_rate,
            epsilon_start: self.epsilon_start,
            epsilon_min: self.epsilon_min,
            epsilon_anneal_steps: self.epsilon_anneal_steps,
            replay_capacity: self.replay_capacity,
            batch_episodes: self.batch_episodes,
            target_sync_interval: self.target_sync_interval,
            gamma: self.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    /// Explicit stage-1 budget; when absent it is
    /// `budget_scale × REFERENCE_STAGE1_EPISODES`.
    pub stage1_episodes: Option<u64>,
    pub budget_scale: f64,
    pub stage2_episodes: u64,
    pub eval_points: u64,
    pub eval_episodes: usize,
    pub eval_mode: EvalMode,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            stage1_episodes: None,
            budget_scale: DEFAULT_BUDGET_SCALE,
            stage2_episodes: 0,
            eval_points: 100,
            eval_episodes: 192,
            eval_mode: EvalMode::Sample,
        }
    }
}

impl PlanSection {
    pub fn stage1(&self) -> u64 {
        self.stage1_episodes
            .unwrap_or_else(|| (REFERENCE_STAGE1_EPISODES as f64 * self.budget_scale).round() as u64)
    }
}

/// `enabled` and `fast` may be omitted; they are then implied by the
/// algorithm, and must agree with it when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrSection {
    pub enabled: Option<bool>,
    pub fast: Option<bool>,
    pub eta_max: f64,
    pub ramp_episodes: u64,
    pub p_min: f64,
    pub granularity: GranularityName,
}

impl Default for PrSection {
    fn default() -> Self {
        let d = ResonanceConfig::default();
        Self {
            enabled: None,
            fast: None,
            eta_max: d.eta_max,
            ramp_episodes: d.ramp_episodes,
            p_min: d.p_min,
            granularity: GranularityName::Episode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub task: Option<String>,
    pub task_file: Option<PathBuf>,
    pub n_agents: usize,
    #[serde(default = "default_actions")]
    pub n_actions: usize,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub vd: VdSection,
    #[serde(default)]
    pub plan: PlanSection,
    #[serde(default)]
    pub pr: PrSection,
}

fn default_id() -> String {
    "experiment".into()
}

fn default_actions() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("prlab-out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses and validates a config file, resolving relative paths
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let Some(file) = &cfg.task_file {
            if file.is_relative() {
                cfg.task_file = Some(base.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.seeds.is_empty() {
            return bad("seed list must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("seed list contains duplicates".into());
        }
        if self.id.is_empty() || self.id.contains(['/', '\\', ',', '"', '\n']) {
            return bad(format!("experiment id {:?} must be non-empty and free of / \\ , \" and newlines", self.id));
        }
        match (&self.task, &self.task_file) {
            (Some(_), Some(_)) => return bad("give either task or task_file, not both".into()),
            (None, None) => return bad("missing task (tag) or task_file".into()),
            _ => {}
        }
        let pr_wanted = self.algorithm.uses_resonance();
        if let Some(enabled) = self.pr.enabled {
            if enabled != pr_wanted {
                return bad(format!("pr.enabled = {enabled} contradicts algorithm {}", self.algorithm));
            }
        }
        if let Some(fast) = self.pr.fast {
            if fast != self.algorithm.is_fast() {
                return bad(format!("pr.fast = {fast} contradicts algorithm {}", self.algorithm));
            }
        }
        if self.plan.budget_scale.is_nan() || self.plan.budget_scale < 0.0 {
            return bad("plan.budget_scale must be non-negative".into());
        }
        if self.plan.stage1() + self.plan.stage2_episodes == 0 {
            return bad("training budget is zero episodes".into());
        }
        if self.plan.eval_points == 0 || self.plan.eval_episodes == 0 {
            return bad("plan.eval_points and plan.eval_episodes must be >= 1".into());
        }
        if self.algorithm == Algorithm::VdEps {
            self.vd.to_core().validate().map_err(config_error)?;
        } else {
            self.trainer.to_core().validate().map_err(config_error)?;
        }
        // η and p_min are checked even when PR is off so sweeps fail early
        self.resonance().validate(self.n_actions).map_err(config_error)?;
        if self.task_file.is_none() {
            self.task_spec()?;
        }
        Ok(())
    }

    pub fn resonance(&self) -> ResonanceConfig {
        ResonanceConfig {
            enabled: self.algorithm.uses_resonance(),
            eta_max: self.pr.eta_max,
            ramp_episodes: self.pr.ramp_episodes,
            p_min: self.pr.p_min,
            granularity: match self.pr.granularity {
                GranularityName::Episode => Granularity::Episode,
                GranularityName::Step => Granularity::Step,
            },
            fast: self.algorithm.is_fast(),
        }
    }

    pub fn stage_plan(&self) -> StagePlan {
        StagePlan {
            eval_points: self.plan.eval_points,
            eval_episodes: self.plan.eval_episodes,
            eval_mode: match self.plan.eval_mode {
                EvalMode::Sample => PolicyEvalMode::Sample,
                EvalMode::Greedy => PolicyEvalMode::Greedy,
            },
            ..StagePlan::new(self.plan.stage1(), self.plan.stage2_episodes, self.resonance())
        }
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        match (&self.task, &self.task_file) {
            (Some(tag), _) => build_task(tag, self.n_agents, self.n_actions).map_err(config_error),
            (None, Some(path)) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
                parse_task_config(&text, self.n_agents, self.n_actions).map_err(config_error)
            }
            (None, None) => Err(LabError::Config("missing task".into())),
        }
    }
}

/// Resolves a CLI `--task` argument: a tag, or else a path to a level file.
pub fn resolve_task(task: &str, n_agents: usize, n_actions: usize) -> Result<TaskSpec> {
    match build_task(task, n_agents, n_actions) {
        Ok(t) => Ok(t),
        Err(tag_err) => {
            let path = Path::new(task);
            if path.is_file() {
                let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
                parse_task_config(&text, n_agents, n_actions).map_err(config_error)
            } else {
                Err(config_error(tag_err))
            }
        }
    }
}
