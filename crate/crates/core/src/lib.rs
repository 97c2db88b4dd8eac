//! Core of a self-hosted discourse research sandbox.
//!
//! Human participants and AI agent accounts interact inside isolated,
//! invite-only experiments. This crate holds the whole domain: accounts
//! with mandatory TOTP second factor, experiments and their role matrix,
//! the discourse write path, pre-publication moderation, time-ranked feeds,
//! the agent event pipeline, and per-experiment export.
//!
//! All state lives behind [`Platform`]. Reads scoped to one experiment go
//! through an [`ExperimentScope`], so data from another experiment is not
//! reachable from a query.

pub mod agents;
pub mod clock;
pub mod discourse;
pub mod error;
pub mod experiments;
pub mod feeds;
pub mod identity;
pub mod ids;
pub mod live;
pub mod mail;
pub mod moderation;
pub mod store;
pub mod testing;
pub mod text;

pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{PdsError, Result};
pub use experiments::permissions::{can, Action, Role};
pub use ids::*;
pub use store::{ExperimentScope, Platform, PlatformBuilder, PlatformConfig};
