//! Centralized logical-time coordination for distributed discrete-event
//! federates.
//!
//! A run-time infrastructure ([`rti::Rti`]) tracks every federate's next
//! event tag, latest completed tag and in-transit messages, and grants tag
//! advances. On top of the classic NET/LTC/TAG exchange it computes a
//! *downstream next event tag* (DNET) for each federate: an upper bound on
//! the next-event tags nobody downstream needs to hear about, which lets
//! federates ([`federate::Federate`]) stay silent until something downstream
//! actually depends on them.
//!
//! [`sim`] couples one RTI and a set of federates over a deterministic
//! simulated transport and records a complete trace, which [`checker`]
//! verifies after the fact.

pub mod checker;
pub mod federate;
pub mod report;
pub mod rti;
pub mod scenario;
pub mod signal;
pub mod sim;
pub mod tag;
pub mod topology;
pub mod trace;

pub use federate::Federate;
pub use rti::Rti;
pub use signal::{Actor, FederateId, Signal, SignalKind};
pub use tag::{Tag, TagError, TimeValue, MICROSTEP_MAX};
pub use topology::{Connection, DelayMatrix, Topology, TopologyError};
