//! Nested conditional Monte Carlo for comparing two stopping rules on a
//! discrete-time payoff process.
//!
//! The crate estimates `E[X_{τ^A} - X_{τ^B}]` by simulating trunk paths up
//! to the first stopping time and replicating only the stretch between the
//! two stopping times, and provides the closed-form calibration of the
//! replication count, an exact oracle on finite trees and the Bermudan
//! max-call experiments built on top.

pub mod calibration;
pub mod error;
pub mod experiments;
pub mod nested;
pub mod oracle;
pub mod process;
pub mod rng;
pub mod stopping;
pub mod summation;

pub use error::{NcmcError, Result};
