//! System-level simulator for cluster-based device-to-device relaying of
//! machine-type traffic in a single dense-urban macro cell.
//!
//! The pipeline is: build the urban environment and deploy static indoor
//! devices ([`geometry`]), evaluate cellular and D2D radio links
//! ([`channel`]), group devices into clusters ([`clustering`]), select a
//! transmission mode per device ([`tms`]), execute the cluster-formation and
//! reporting procedures as a discrete-event simulation ([`protocol`]), price
//! the resulting event trace with the device power model ([`energy`]), and
//! reduce everything to availability and battery-life statistics
//! ([`metrics`]). [`runner`] orchestrates full experiments and backs the CLI.
//!
//! Everything is deterministic under a single `u64` seed. With the default
//! `parallel` feature the per-device inner loops run on rayon; disabling the
//! feature yields a bit-identical sequential build.

pub mod channel;
pub mod clustering;
pub mod config;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod protocol;
pub mod runner;
pub mod seeds;
pub mod tms;

pub use error::SimError;

pub type Result<T> = std::result::Result<T, SimError>;
