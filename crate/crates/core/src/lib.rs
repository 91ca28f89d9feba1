//! Planning engine for on-demand food delivery served jointly by human couriers
//! and drones.
//!
//! The crate evaluates the courier bundling equilibrium and the launchpad
//! double-ended queue in closed form, learns a small ReLU surrogate of the
//! bundling map, embeds that surrogate into a mixed-integer linear model of the
//! launchpad/kiosk placement problem, and ships discrete-event simulators that
//! serve as ground truth for every analytic quantity.
//!
//! Module map:
//!
//! * [`scenario`]: network, demand and parameter ingestion.
//! * [`bundling`]: matching probabilities, delivery and shared times per OD.
//! * [`droneq`]: stationary double-ended queue at a launchpad.
//! * [`fleet`]: courier and drone fleet accounting.
//! * [`surrogate`]: grid sampling, training and evaluation of ReLU surrogates.
//! * [`milp`]: model construction, ReLU embedding, solving and post-checks.
//! * [`simkit`]: discrete-event simulation oracles.

pub mod bundling;
pub mod droneq;
pub mod fleet;
pub mod milp;
pub mod scenario;
pub mod simkit;
pub mod surrogate;

pub use bundling::{BundlingEquilibrium, ODGroundContext};
pub use droneq::LaunchpadQueueMetrics;
pub use scenario::{NetworkScenario, NodeId, OdPair, ZoneId};
pub use surrogate::SurrogateModel;

/// Raised when a closed-form quantity is evaluated outside its domain.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("domain error: {0}")]
pub struct DomainError(pub String);

impl DomainError {
    pub(crate) fn new(msg: impl Into<String>) -> Self {
        DomainError(msg.into())
    }
}
