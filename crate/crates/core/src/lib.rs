//! Iterative privacy-preserving summation on a directed ring.
//!
//! Nodes hold secrets and repeatedly hand a noise-masked copy of their state
//! to their successor. The network sum is conserved at every step, so each
//! node recovers it by adding up its last `n` states, while an eavesdropper
//! who sees every message only learns a differentially private view.
//!
//! Modules:
//! - [`model`]: ring topology, noise schedules, protocol configuration
//! - [`noise`]: reproducible counter-based noise streams
//! - [`engine`]: synchronous and Poisson-clock execution, join and leave
//! - [`metrics`]: solution estimator and Monte Carlo error aggregates
//! - [`analysis`]: closed-form bounds, privacy accounting, auditors and oracles
//! - [`tradeoff`]: noise-parameter selection
//! - [`scenario`] and [`cli`]: config-driven experiment runner

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod scenario;
pub mod tradeoff;

pub use error::{Error, Result};
pub use model::{
    build_ring, variance_at, MembershipChange, MembershipEvent, NodeId, NoiseDistribution,
    NoiseSchedule, ProtocolConfig, RingTopology, ScheduleFamily,
};
pub use noise::{sample_beta, NoiseSource};
