//! Discrete-event simulation of geo-distributed analytics with multi-round
//! task insurance.
//!
//! The crate is organized bottom-up: [`dist`] provides the distribution
//! algebra, [`perfmodel`] turns execution records into rate and reliability
//! estimates, [`insurer`] and [`baselines`] produce per-slot plans,
//! [`engine`] executes them, and [`verify`] audits the results.

pub mod baselines;
pub mod dist;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod insurer;
pub mod perfmodel;
pub mod plan;
pub mod sched;
pub mod types;
pub mod verify;
pub mod workload;

pub use dist::EmpiricalDistribution;
pub use error::{Error, Result};
pub use types::{mix_seed, ClusterId, CopyId, JobId, OpType, TaskId};
