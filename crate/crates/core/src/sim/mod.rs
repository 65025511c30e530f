//! Monte Carlo replication of the two simulation designs and configurable
//! variants.
//!
//! Each replication draws a fresh potential-outcome table (unless
//! `fixed_table` is set) and an assignment from its own ChaCha stream, so
//! results do not depend on thread scheduling or replication order.

mod config;
mod dgp;
mod run;

pub use config::{default_roster, CustomDgp, RosterEntry, RosterItem, SimConfig, Study};
pub use dgp::{draw_table, size_bounds};
pub use run::{run_replications, FailureCount, MetricRow, SimReport, EQUIVALENCE_TOL};
