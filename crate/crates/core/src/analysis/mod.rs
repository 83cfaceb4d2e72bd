//! Closed-form guarantees and the empirical machinery that checks them.
//!
//! - [`bounds`]: asymptotic utility and variance bounds
//! - [`privacy`]: per-step and composed privacy budgets
//! - [`audit`]: likelihood-ratio auditor over sampled traces
//! - [`trace_bound`]: Monte Carlo check of the covariance-trace inequality
//! - [`circulant`]: cyclic-shift matrix identities
//! - [`report`]: machine-parseable verdict records

pub mod audit;
pub mod bounds;
pub mod circulant;
pub mod trace_bound;
pub mod privacy;
pub mod report;

pub use audit::{dp_audit, dp_audit_with, AuditOptions, AuditResult, WidthSensitivity};
pub use bounds::{utility_bound, variance_bound, ScheduleAggregates};
pub use circulant::{circulant_oracle, CirculantReport};
pub use trace_bound::{trace_bound_check, TraceBoundReport};
pub use privacy::{epsilon_total, epsilon_total_with_offset, run_budgets, PrivacyBudget, RunBudgets};
pub use report::{CheckRecord, Verdict};
