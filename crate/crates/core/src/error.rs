use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A task tag that does not match `<int>A<int>B<int>C`.
    MalformedTag(String),
    /// A task with no levels.
    EmptyTask,
    /// A level references an action outside `[0, n_actions)`.
    ActionOutOfRange { action: usize, n_actions: usize },
    /// Team or action space too small.
    InvalidDimensions(String),
    /// Invalid level definition in a task config text.
    TaskConfig { line: usize, message: String },
    /// `sampled_arm` supplied to a non-bandit level or missing for a bandit level.
    ArmMismatch,
    /// `step` called on a finished episode.
    EpisodeDone,
    /// Observation or parameter shape does not match the policy.
    DimensionMismatch(String),
    /// The policy already carries per-agent heads.
    AlreadyCloned,
    /// A configuration value violates its contract.
    InvalidConfig(String),
    /// Exhaustive enumeration would exceed the size limit.
    InstanceTooLarge { joint_actions: u128, limit: u128 },
    /// A marginal that must be positive is zero.
    ZeroMarginal { agent: usize },
    /// Update produced a non-finite loss; the parameters were left untouched.
    NonFiniteLoss { epoch: usize, loss: f64 },
    EmptyBatch,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MalformedTag(tag) => {
                write!(f, "malformed task tag {tag:?}, expected <int>A<int>B<int>C")
            }
            Error::EmptyTask => write!(f, "task must contain at least one level"),
            Error::ActionOutOfRange { action, n_actions } => {
                write!(f, "action {action} out of range for {n_actions} actions")
            }
            Error::InvalidDimensions(msg) => write!(f, "invalid dimensions: {msg}"),
            Error::TaskConfig { line, message } => {
                write!(f, "task config line {line}: {message}")
            }
            Error::ArmMismatch => write!(
                f,
                "sampled arm must be given for Lv-B levels and only for Lv-B levels"
            ),
            Error::EpisodeDone => write!(f, "step called after the episode finished"),
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::AlreadyCloned => write!(f, "policy head is already duplicated per agent"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::InstanceTooLarge {
                joint_actions,
                limit,
            } => write!(
                f,
                "instance has {joint_actions} joint actions, enumeration limit is {limit}"
            ),
            Error::ZeroMarginal { agent } => write!(f, "agent {agent} has a zero marginal"),
            Error::NonFiniteLoss { epoch, loss } => {
                write!(f, "non-finite loss {loss} in update epoch {epoch}")
            }
            Error::EmptyBatch => write!(f, "batch is empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
