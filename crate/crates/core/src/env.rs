//! The FME (Fast Multiagent Evaluation) diagnostic environment.
//!
//! A task is a fixed sequence of independent single-step levels. At every
//! level all `N` agents observe `(level index, agent id)`, pick one of `n_k`
//! discrete actions, and receive the same team reward:
//!
//! - **Lv-A**: `count(u_α) / N`.
//! - **Lv-B**: after the actions are in, one arm `u_β` is drawn from the
//!   level's arm distribution; reward is `count(u_β) · c_β / N` with
//!   `c_β = 1 / max p_β`, so the best achievable expectation is exactly 1.
//! - **Lv-C**: `count(u_γ) / (N − 1)`, but 0 when every agent picks `u_γ`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, LabRng};

/// Probability pattern of the three rewarding arms of every Lv-B level.
pub const BANDIT_PATTERN: [f64; 3] = [0.5, 0.4, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelKind {
    A,
    B,
    C,
}

impl LevelKind {
    pub fn letter(self) -> char {
        match self {
            LevelKind::A => 'A',
            LevelKind::B => 'B',
            LevelKind::C => 'C',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSpec {
    pub kind: LevelKind,
    /// `u_α` for Lv-A, `u_γ` for Lv-C. For Lv-B this holds the most likely arm.
    pub target_action: usize,
    /// Lv-B only; empty otherwise.
    pub arm_distribution: Vec<f64>,
    /// `c_β` for Lv-B, 1 otherwise.
    pub reward_scale: f64,
}

impl LevelSpec {
    pub fn static_action(action: usize, n_actions: usize) -> Result<Self> {
        check_action(action, n_actions)?;
        Ok(Self {
            kind: LevelKind::A,
            target_action: action,
            arm_distribution: Vec::new(),
            reward_scale: 1.0,
        })
    }

    pub fn responsibility(action: usize, n_actions: usize) -> Result<Self> {
        check_action(action, n_actions)?;
        Ok(Self {
            kind: LevelKind::C,
            target_action: action,
            arm_distribution: Vec::new(),
            reward_scale: 1.0,
        })
    }

    /// Lv-B with [`BANDIT_PATTERN`] on `arms` (in descending probability).
    pub fn bandit(arms: [usize; 3], n_actions: usize) -> Result<Self> {
        for &a in &arms {
            check_action(a, n_actions)?;
        }
        if arms[0] == arms[1] || arms[1] == arms[2] || arms[0] == arms[2] {
            return Err(Error::InvalidDimensions(format!(
                "bandit arms must be distinct, got {arms:?}"
            )));
        }
        let mut dist = vec![0.0; n_actions];
        for (&a, &p) in arms.iter().zip(BANDIT_PATTERN.iter()) {
            dist[a] = p;
        }
        Self::bandit_from_distribution(dist)
    }

    pub fn bandit_from_distribution(arm_distribution: Vec<f64>) -> Result<Self> {
        let sum: f64 = arm_distribution.iter().sum();
        if arm_distribution.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDimensions(
                "arm distribution must be non-negative and sum to 1".to_string(),
            ));
        }
        let (best, max) = arm_distribution
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
        Ok(Self {
            kind: LevelKind::B,
            target_action: best,
            arm_distribution,
            reward_scale: 1.0 / max,
        })
    }

    /// Draws the rewarding arm of a Lv-B level with a single uniform draw.
    pub fn draw_arm(&self, rng: &mut LabRng) -> usize {
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.arm_distribution.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if x < acc {
                return i;
            }
        }
        last
    }

    /// Best expected reward achievable on this level.
    pub fn optimal_reward(&self) -> f64 {
        match self.kind {
            LevelKind::A | LevelKind::C => 1.0,
            LevelKind::B => {
                self.reward_scale * self.arm_distribution.iter().copied().fold(0.0, f64::max)
            }
        }
    }

    /// `A 0`, `B 5 6 7` or `C 1`, the notation accepted by [`parse_task_config`].
    pub fn describe(&self) -> String {
        match self.kind {
            LevelKind::A | LevelKind::C => format!("{} {}", self.kind.letter(), self.target_action),
            LevelKind::B => {
                let mut arms: Vec<(usize, f64)> = self
                    .arm_distribution
                    .iter()
                    .copied()
                    .enumerate()
                    .filter(|(_, p)| *p > 0.0)
                    .collect();
                arms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                let mut s = String::from("B");
                for (a, _) in arms {
                    s.push_str(&format!(" {a}"));
                }
                s
            }
        }
    }
}

fn check_action(action: usize, n_actions: usize) -> Result<()> {
    if action >= n_actions {
        return Err(Error::ActionOutOfRange { action, n_actions });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub tag: String,
    pub levels: Vec<LevelSpec>,
    pub n_agents: usize,
    pub n_actions: usize,
}

impl TaskSpec {
    pub fn new(levels: Vec<LevelSpec>, n_agents: usize, n_actions: usize) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::EmptyTask);
        }
        check_dims(n_agents, n_actions, levels.iter().any(|l| l.kind == LevelKind::C))?;
        for level in &levels {
            check_action(level.target_action, n_actions)?;
            if level.kind == LevelKind::B && level.arm_distribution.len() != n_actions {
                return Err(Error::InvalidDimensions(format!(
                    "bandit level has {} arms, task has {n_actions} actions",
                    level.arm_distribution.len()
                )));
            }
        }
        let tag = tag_for(&levels);
        Ok(Self {
            tag,
            levels,
            n_agents,
            n_actions,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_indices(&self, kind: LevelKind) -> impl Iterator<Item = usize> + '_ {
        self.levels
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.kind == kind)
            .map(|(i, _)| i)
    }

    /// The config-file text that reproduces this task.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        for level in &self.levels {
            s.push_str(&level.describe());
            s.push('\n');
        }
        s
    }
}

/// Lv-C divides by `N − 1`, so tasks containing one need two agents.
fn check_dims(n_agents: usize, n_actions: usize, has_responsibility: bool) -> Result<()> {
    let min_agents = if has_responsibility { 2 } else { 1 };
    if n_agents < min_agents {
        return Err(Error::InvalidDimensions(format!(
            "need at least {min_agents} agents, got {n_agents}"
        )));
    }
    if n_actions < 2 {
        return Err(Error::InvalidDimensions(format!(
            "need at least 2 actions, got {n_actions}"
        )));
    }
    Ok(())
}

fn tag_for(levels: &[LevelSpec]) -> String {
    let count = |k| levels.iter().filter(|l| l.kind == k).count();
    format!(
        "{}A{}B{}C",
        count(LevelKind::A),
        count(LevelKind::B),
        count(LevelKind::C)
    )
}

/// Parses `<int>A<int>B<int>C` into level counts.
pub fn parse_tag(tag: &str) -> Result<[usize; 3]> {
    let bad = || Error::MalformedTag(tag.to_string());
    let mut counts = [0usize; 3];
    let mut rest = tag;
    for (slot, letter) in ['A', 'B', 'C'].iter().enumerate() {
        let end = rest.find(*letter).ok_or_else(bad)?;
        let digits = &rest[..end];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        counts[slot] = digits.parse().map_err(|_| bad())?;
        rest = &rest[end + 1..];
    }
    if !rest.is_empty() {
        return Err(bad());
    }
    Ok(counts)
}

#[derive(Clone, Copy)]
enum Cfg {
    A(usize),
    B([usize; 3]),
    C(usize),
}

/// Level configurations of the seven standard tags (`n_k = 10`).
fn standard_levels(tag: &str) -> Option<[Cfg; 7]> {
    use Cfg::{A, B, C};
    Some(match tag {
        "1A6B0C" => [
            A(0),
            B([4, 5, 6]),
            B([5, 6, 7]),
            B([6, 7, 8]),
            B([7, 8, 9]),
            B([8, 9, 0]),
            B([9, 0, 1]),
        ],
        "1A5B1C" => [
            A(0),
            B([4, 5, 6]),
            B([5, 6, 7]),
            B([6, 7, 8]),
            B([7, 8, 9]),
            B([8, 9, 5]),
            C(0),
        ],
        "1A4B2C" => [
            A(0),
            B([5, 6, 7]),
            B([6, 7, 8]),
            B([7, 8, 9]),
            B([8, 9, 5]),
            C(1),
            C(0),
        ],
        "1A3B3C" => [
            A(0),
            B([5, 6, 7]),
            B([6, 7, 8]),
            B([7, 8, 9]),
            C(0),
            C(1),
            C(2),
        ],
        "1A2B4C" => [A(0), B([5, 6, 7]), B([6, 7, 8]), C(0), C(1), C(2), C(3)],
        "1A1B5C" => [A(0), B([5, 6, 7]), C(0), C(1), C(2), C(3), C(4)],
        "1A0B6C" => [A(0), C(0), C(1), C(2), C(3), C(4), C(5)],
        _ => return None,
    })
}

fn realize(cfg: Cfg, n_actions: usize) -> Result<LevelSpec> {
    match cfg {
        Cfg::A(a) => LevelSpec::static_action(a, n_actions),
        Cfg::B(arms) => LevelSpec::bandit(arms, n_actions),
        Cfg::C(a) => LevelSpec::responsibility(a, n_actions),
    }
}

/// Builds a task from its tag.
///
/// The seven standard tags (`1A6B0C` … `1A0B6C`) use the published level
/// table and need `n_actions ≥ 10`. Any other well-formed tag gets levels in
/// `A…B…C` order whose actions are drawn deterministically from a hash of the
/// tag.
pub fn build_task(tag: &str, n_agents: usize, n_actions: usize) -> Result<TaskSpec> {
    let counts = parse_tag(tag)?;
    if counts.iter().sum::<usize>() == 0 {
        return Err(Error::EmptyTask);
    }
    check_dims(n_agents, n_actions, counts[2] > 0)?;
    let levels = match standard_levels(tag) {
        Some(table) => {
            if n_actions < 10 {
                return Err(Error::InvalidDimensions(format!(
                    "tag {tag} needs at least 10 actions, got {n_actions}"
                )));
            }
            table
                .iter()
                .map(|&c| realize(c, n_actions))
                .collect::<Result<Vec<_>>>()?
        }
        None => generated_levels(tag, counts, n_actions)?,
    };
    let mut task = TaskSpec::new(levels, n_agents, n_actions)?;
    task.tag = tag.to_string();
    Ok(task)
}

fn generated_levels(tag: &str, counts: [usize; 3], n_actions: usize) -> Result<Vec<LevelSpec>> {
    if counts[1] > 0 && n_actions < 3 {
        return Err(Error::InvalidDimensions(format!(
            "Lv-B levels need at least 3 actions, got {n_actions}"
        )));
    }
    let mut rng = rng::derive(rng::fnv1a(tag.as_bytes()), 0x7a67);
    let mut levels = Vec::with_capacity(counts.iter().sum());
    for _ in 0..counts[0] {
        levels.push(LevelSpec::static_action(rng.gen_range(0..n_actions), n_actions)?);
    }
    for _ in 0..counts[1] {
        let mut arms = [0usize; 3];
        let mut k = 0;
        while k < 3 {
            let a = rng.gen_range(0..n_actions);
            if !arms[..k].contains(&a) {
                arms[k] = a;
                k += 1;
            }
        }
        levels.push(LevelSpec::bandit(arms, n_actions)?);
    }
    // Lv-C targets cycle through a shuffled action list so that they stay
    // distinct while there are enough actions.
    let mut order: Vec<usize> = (0..n_actions).collect();
    for i in (1..n_actions).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for c in 0..counts[2] {
        levels.push(LevelSpec::responsibility(order[c % n_actions], n_actions)?);
    }
    Ok(levels)
}

/// Parses the plain-text task format: one level per line, `A <u>`,
/// `B <u1> <u2> <u3>` or `C <u>`. Blank lines and `#` comments are ignored.
pub fn parse_task_config(text: &str, n_agents: usize, n_actions: usize) -> Result<TaskSpec> {
    let mut levels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::TaskConfig {
            line: line_no,
            message,
        };
        let mut parts = line.split_whitespace();
        let kind = parts.next().unwrap_or("");
        let nums = parts
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| err(format!("expected an action index, got {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let level = match (kind, nums.as_slice()) {
            ("A", [a]) => LevelSpec::static_action(*a, n_actions),
            ("C", [a]) => LevelSpec::responsibility(*a, n_actions),
            ("B", [a, b, c]) => LevelSpec::bandit([*a, *b, *c], n_actions),
            ("A" | "C", _) => return Err(err("expected exactly one action".to_string())),
            ("B", _) => return Err(err("expected exactly three actions".to_string())),
            _ => return Err(err(format!("unknown level kind {kind:?}"))),
        }
        .map_err(|e| err(e.to_string()))?;
        levels.push(level);
    }
    TaskSpec::new(levels, n_agents, n_actions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    pub level_index: usize,
    pub agent_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction(Vec<usize>);

impl JointAction {
    pub fn new(actions: Vec<usize>, n_agents: usize, n_actions: usize) -> Result<Self> {
        if actions.len() != n_agents {
            return Err(Error::DimensionMismatch(format!(
                "joint action has {} entries for {n_agents} agents",
                actions.len()
            )));
        }
        for &a in &actions {
            check_action(a, n_actions)?;
        }
        Ok(Self(actions))
    }

    /// Wraps actions already known to be in range.
    pub fn from_vec_unchecked(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    pub fn count(&self, action: usize) -> usize {
        self.0.iter().filter(|&&a| a == action).count()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

/// Team reward of one level for one joint action.
pub fn level_reward(level: &LevelSpec, joint: &JointAction, sampled_arm: Option<usize>) -> Result<f64> {
    let n = joint.n_agents();
    let min_agents = if level.kind == LevelKind::C { 2 } else { 1 };
    if n < min_agents {
        return Err(Error::InvalidDimensions(format!("need at least {min_agents} agents")));
    }
    match (level.kind, sampled_arm) {
        (LevelKind::A, None) | (LevelKind::B, Some(_)) | (LevelKind::C, None) => {
            Ok(reward_unchecked(level, joint.actions(), sampled_arm.unwrap_or(0)))
        }
        _ => Err(Error::ArmMismatch),
    }
}

/// [`level_reward`] without validation; `sampled_arm` is ignored unless the
/// level is Lv-B.
pub(crate) fn reward_unchecked(level: &LevelSpec, actions: &[usize], sampled_arm: usize) -> f64 {
    let n = actions.len();
    let n_f = n as f64;
    let count = |u: usize| actions.iter().filter(|&&a| a == u).count();
    match level.kind {
        LevelKind::A => count(level.target_action) as f64 / n_f,
        LevelKind::B => count(sampled_arm) as f64 * level.reward_scale / n_f,
        LevelKind::C => {
            let k = count(level.target_action);
            if k < n {
                k as f64 / (n_f - 1.0)
            } else {
                0.0
            }
        }
    }
}

/// Sum of per-level optimal expected rewards.
pub fn optimal_task_reward(task: &TaskSpec) -> f64 {
    task.levels.iter().map(LevelSpec::optimal_reward).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub level_index: usize,
    pub reward: f64,
    pub done: bool,
    pub sampled_arm: Option<usize>,
}

/// One running episode. Exclusive-access; parallel rollouts use one per seed.
#[derive(Debug, Clone)]
pub struct EnvState<'t> {
    task: &'t TaskSpec,
    level_index: usize,
    done: bool,
    rng: LabRng,
}

/// Starts an episode at level 0 with an RNG stream derived from `seed`.
pub fn reset(task: &TaskSpec, seed: u64) -> EnvState<'_> {
    EnvState::with_rng(task, rng::derive(seed, rng::purpose::ENV))
}

impl<'t> EnvState<'t> {
    /// Starts an episode drawing bandit arms from `rng`. Trainers keep one
    /// environment stream alive across episodes this way.
    pub fn with_rng(task: &'t TaskSpec, rng: LabRng) -> Self {
        Self {
            task,
            level_index: 0,
            done: false,
            rng,
        }
    }

    /// Rewinds to level 0 while continuing the same RNG stream.
    pub fn restart(&mut self) {
        self.level_index = 0;
        self.done = false;
    }

    pub fn task(&self) -> &'t TaskSpec {
        self.task
    }

    pub fn level_index(&self) -> usize {
        self.level_index
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation(&self, agent_id: usize) -> Observation {
        Observation {
            level_index: self.level_index,
            agent_id,
        }
    }

    pub fn into_rng(self) -> LabRng {
        self.rng
    }

    pub fn step(&mut self, joint: &JointAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if joint.n_agents() != self.task.n_agents {
            return Err(Error::DimensionMismatch(format!(
                "joint action has {} entries for {} agents",
                joint.n_agents(),
                self.task.n_agents
            )));
        }
        let level = &self.task.levels[self.level_index];
        let sampled_arm = match level.kind {
            LevelKind::B => Some(level.draw_arm(&mut self.rng)),
            _ => None,
        };
        let reward = level_reward(level, joint, sampled_arm)?;
        let played = self.level_index;
        self.level_index += 1;
        self.done = self.level_index == self.task.n_levels();
        Ok(StepOutcome {
            level_index: played,
            reward,
            done: self.done,
            sampled_arm,
        })
    }
}
