//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "PRLABCK\0"
//! version   u32
//! kind      u8       0 = policy, 1 = q-table
//! flags     u8       bit 0 per-agent heads, bit 1 frozen body
//! reserved  u16      zero
//! dims      4 × u64  n_levels, n_agents, n_actions, hidden (0 for q-tables)
//! count     u64      number of f64 values that follow
//! values    count × f64 bit patterns, row-major
//! checksum  u64      FNV-1a over every preceding byte
//! ```
//!
//! Policies store [`PolicyParams::to_flat`] order; q-tables store the online
//! table followed by the target table.

use std::path::Path;

use resonance_core::policy::{clone_head_per_agent, PolicyParams};
use resonance_core::rng::fnv1a;
use resonance_core::trainers::QTable;

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 8] = b"PRLABCK\0";
pub const VERSION: u32 = 1;

const KIND_POLICY: u8 = 0;
const KIND_QTABLE: u8 = 1;
const FLAG_PER_AGENT: u8 = 1;
const FLAG_FROZEN: u8 = 2;
const HEADER_LEN: usize = 8 + 4 + 1 + 1 + 2 + 4 * 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Policy(PolicyParams),
    QTable(QTable),
}

impl Checkpoint {
    /// `(n_levels, n_agents, n_actions)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            Checkpoint::Policy(p) => (p.n_levels, p.n_agents, p.n_actions),
            Checkpoint::QTable(q) => (q.n_levels, q.n_agents, q.n_actions),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (kind, flags, hidden, values) = match self {
            Checkpoint::Policy(p) => {
                let mut flags = 0;
                if p.has_per_agent_heads() {
                    flags |= FLAG_PER_AGENT;
                }
                if p.frozen_body {
                    flags |= FLAG_FROZEN;
                }
                (KIND_POLICY, flags, p.hidden(), p.to_flat())
            }
            Checkpoint::QTable(q) => {
                let mut v = q.online.clone();
                v.extend_from_slice(&q.target);
                (KIND_QTABLE, 0, 0, v)
            }
        };
        let (l, n, k) = self.dims();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len() + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(kind);
        out.push(flags);
        out.extend_from_slice(&0u16.to_le_bytes());
        for d in [l, n, k, hidden] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN + 8 {
            return Err(format!("truncated: {} bytes", bytes.len()));
        }
        if &bytes[..8] != MAGIC {
            return Err("bad magic".into());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err("checksum mismatch".into());
        }
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let (kind, flags) = (bytes[12], bytes[13]);
        let dim = |i: usize| -> std::result::Result<usize, String> {
            usize::try_from(u64_at(16 + 8 * i)).map_err(|_| "dimension overflow".to_string())
        };
        let (l, n, k, hidden) = (dim(0)?, dim(1)?, dim(2)?, dim(3)?);
        let count = u64_at(48) as usize;
        if body.len() != HEADER_LEN + 8 * count {
            return Err(format!("expected {count} values, payload holds {}", (body.len() - HEADER_LEN) / 8));
        }
        let values: Vec<f64> = body[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        match kind {
            KIND_POLICY => {
                if l == 0 || n == 0 || k == 0 || hidden == 0 {
                    return Err("zero dimension".into());
                }
                let mut p = PolicyParams::zeros(l, n, k, hidden);
                if flags & FLAG_PER_AGENT != 0 {
                    p = clone_head_per_agent(&p).map_err(|e| e.to_string())?;
                }
                p.frozen_body = flags & FLAG_FROZEN != 0;
                if p.len() != count {
                    return Err(format!("policy of this shape has {} values, found {count}", p.len()));
                }
                for (slot, v) in p.values_mut().zip(values) {
                    *slot = v;
                }
                p.validate().map_err(|e| e.to_string())?;
                Ok(Checkpoint::Policy(p))
            }
            KIND_QTABLE => {
                let cells = n * l * k;
                if count != 2 * cells {
                    return Err(format!("q-table of this shape has {} values, found {count}", 2 * cells));
                }
                let mut q = QTable::zeros(n, l, k);
                q.online.copy_from_slice(&values[..cells]);
                q.target.copy_from_slice(&values[cells..]);
                Ok(Checkpoint::QTable(q))
            }
            other => Err(format!("unknown checkpoint kind {other}")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(LabError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(LabError::io(path))?;
        Self::from_bytes(&bytes).map_err(|message| LabError::Checkpoint {
            path: path.to_path_buf(),
            message,
        })
    }
}
