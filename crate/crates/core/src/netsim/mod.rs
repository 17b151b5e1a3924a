//! Slotted broadcast network executing the distributed algorithm at every agent.

pub mod ledger;
mod node;
pub mod radio;
mod sim;

pub use ledger::{compute_delay, CommLedger, CountParams};
pub use node::{AgentNode, AgentSetup, AlgorithmConfig, Method, ObjectPrior, OnsetRule, OnsetTrigger, PriorBox, ProposalPolicy};
pub use radio::{audit_log, AccessEvent, Delivery, Payload, Phase, ProposalFrame, Radio};
pub use sim::{NetworkSim, StepReport, POSITION_DIM};

#[cfg(test)]
mod tests;
