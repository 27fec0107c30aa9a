//! Restricted disjunctive chase engine and static termination analysis for existential rules.
//!
//! The crate covers parsing rule sets ([`ruleio`]), homomorphism search over fact sets
//! ([`matcher`]), the restricted chase with datalog priority ([`chase`]), over-approximation
//! fixpoints for unblockability ([`approx`]), prefix-based non-termination checks
//! ([`cyclicity`]), a k-cyclicity termination check ([`termination`]) and the combined
//! classifier used by the command line tool ([`classify`]).

mod symbol;

pub mod model;
pub mod ruleio;
pub mod matcher;
pub mod chase;
pub mod approx;
pub mod cyclicity;
pub mod termination;
pub mod classify;

#[cfg(test)]
mod fixtures;
