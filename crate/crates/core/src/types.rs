//! Identifiers, values and the protocol configuration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based replica identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReplicaId(pub u32);

impl ReplicaId {
    /// Zero-based position, for indexing per-replica vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(idx: usize) -> Self {
        ReplicaId(idx as u32 + 1)
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// View number. Real views start at 1; `View(0)` is only used as the
/// "never prepared" marker inside `NewLeader` messages.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct View(pub u64);

impl View {
    pub const NONE: View = View(0);

    pub fn next(self) -> View {
        View(self.0 + 1)
    }

    pub fn is_none(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Opaque proposal payload. Ordering is lexicographic on the bytes.
///
/// Serialized as a string when the bytes are UTF-8, else as a byte list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(pub Vec<u8>);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ValueRepr<'a> {
    Text(std::borrow::Cow<'a, str>),
    Bytes(Vec<u8>),
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(&self.0) {
            Ok(s) => ValueRepr::Text(s.into()).serialize(ser),
            Err(_) => ValueRepr::Bytes(self.0.clone()).serialize(ser),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        Ok(match ValueRepr::deserialize(de)? {
            ValueRepr::Text(s) => Value(s.into_owned().into_bytes()),
            ValueRepr::Bytes(b) => Value(b),
        })
    }
}

impl Value {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Value(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value(s.as_bytes().to_vec())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) if s.chars().all(|c| c.is_ascii_graphic()) => f.write_str(s),
            _ => {
                f.write_str("0x")?;
                for b in &self.0 {
                    write!(f, "{b:02x}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("replica count must be positive")]
    NoReplicas,
    #[error("fault budget f={f} violates f < n/3 for n={n}")]
    TooManyFaults { n: usize, f: usize },
    #[error("quorum scale factor l={0} must be >= 1")]
    ScaleTooSmall(f64),
    #[error("overprovisioning factor o={0} must be > 1")]
    OverprovisionTooSmall(f64),
    #[error("probabilistic quorum q={q} exceeds replica count n={n}")]
    QuorumTooLarge { n: usize, q: usize },
}

/// `ceil` that ignores floating-point noise just above an integer, so that
/// e.g. `1.7 * 20` yields 34 rather than 35.
pub(crate) fn ceil_tolerant(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Quorum arithmetic: `(q, s, det_quorum)` for the given parameters.
///
/// `q = ceil(l*sqrt(n))`, `s = min(n, ceil(o*q))`, `det_quorum = ceil((n+f+1)/2)`.
pub fn quorum_sizes(n: usize, f: usize, l: f64, o: f64) -> Result<(usize, usize, usize), ConfigError> {
    if n == 0 {
        return Err(ConfigError::NoReplicas);
    }
    if 3 * f >= n {
        return Err(ConfigError::TooManyFaults { n, f });
    }
    if !(l >= 1.0) {
        return Err(ConfigError::ScaleTooSmall(l));
    }
    if !(o > 1.0) {
        return Err(ConfigError::OverprovisionTooSmall(o));
    }
    let q = ceil_tolerant(l * (n as f64).sqrt()).max(1);
    if q > n {
        return Err(ConfigError::QuorumTooLarge { n, q });
    }
    let s = ceil_tolerant(o * q as f64).min(n);
    let det_quorum = (n + f + 2) / 2;
    Ok((q, s, det_quorum))
}

/// Round-robin leader: `((v - 1) mod n) + 1`.
pub fn leader(v: View, n: usize) -> ReplicaId {
    debug_assert!(v.0 >= 1 && n >= 1);
    ReplicaId(((v.0 - 1) % n as u64) as u32 + 1)
}

/// Single source of quorum arithmetic for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n: usize,
    pub f: usize,
    pub l: f64,
    pub o: f64,
    pub q: usize,
    pub s: usize,
    pub det_quorum: usize,
    pub rng_seed: u64,
}

impl ProtocolConfig {
    pub fn new(n: usize, f: usize, l: f64, o: f64, rng_seed: u64) -> Result<Self, ConfigError> {
        let (q, s, det_quorum) = quorum_sizes(n, f, l, o)?;
        Ok(ProtocolConfig { n, f, l, o, q, s, det_quorum, rng_seed })
    }

    /// Same parameters with a different seed.
    pub fn with_seed(&self, rng_seed: u64) -> Self {
        ProtocolConfig { rng_seed, ..self.clone() }
    }

    pub fn leader(&self, v: View) -> ReplicaId {
        leader(v, self.n)
    }

    pub fn replicas(&self) -> impl Iterator<Item = ReplicaId> {
        (1..=self.n as u32).map(ReplicaId)
    }
}
