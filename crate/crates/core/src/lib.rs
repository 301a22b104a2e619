//! Explainable-AI driven feature selection for network intrusion detection.
//!
//! Flow records are loaded and preprocessed ([`flowdata`]), seven classifier
//! families are trained ([`models`]) and explained ([`attribution`]), the
//! per-model importances are aggregated into feature rankings ([`ranking`]),
//! and the top-k subsets are retrained, evaluated ([`metrics`]) and scored
//! against each other ([`benchmark`]). [`cli`] wires it all to the command
//! line. Every random choice flows from one master seed ([`seed`]).

pub mod attribution;
pub mod benchmark;
pub mod cli;
pub mod error;
pub mod flowdata;
pub mod metrics;
pub mod models;
pub mod ranking;
pub mod seed;

pub use error::{Error, Result};
