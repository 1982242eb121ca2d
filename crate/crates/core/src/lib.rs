//! Probabilistic Byzantine fault-tolerant consensus over a simulated network.
//!
//! The crate has three layers:
//!
//! - protocol: [`types`], [`message`], [`crypto`], [`predicates`] and the
//!   per-replica state machine in [`engine`];
//! - execution: the deterministic discrete-event network in [`simnet`] and
//!   the Byzantine behaviours in [`adversary`];
//! - evaluation: closed-form probability bounds in [`analysis`] and the
//!   Monte-Carlo estimators in [`montecarlo`].

pub mod adversary;
pub mod analysis;
pub mod crypto;
pub mod engine;
pub mod message;
pub mod montecarlo;
pub mod predicates;
pub mod simnet;
pub mod types;

pub use crypto::{KeyPair, Phase, SimCrypto, Verifier, VrfProof};
pub use message::{LeaderPair, Message, MessageKind, NewLeader, PreparedCertificate, Propose, Vote};
pub use types::{leader, quorum_sizes, ConfigError, ProtocolConfig, ReplicaId, Value, View};
