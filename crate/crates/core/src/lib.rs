//! Queue-based CSMA with polynomial activation rates on interference graphs.
//!
//! * [`graph`]: conflict graphs and their stable sets (admissible schedules).
//! * [`measures`]: exact stationary law of the schedule process at frozen
//!   queues, asymptotic service rates, fluid drift, spectral gap and Poisson
//!   equation.
//! * [`sim`]: exact event-driven simulation of the queue/schedule process
//!   and of its homogenized version, with fluid scaling, martingales,
//!   stopping times and activation epochs.
//! * [`fluid`]: the fluid-limit ODE, including the complete-graph problem
//!   with absorption at the origin.
//! * [`experiments`]: replica harness checking the limit behavior.
//! * [`config`] and [`runner`]: JSON configuration and subcommand dispatch.
//!
//! Exact computations are generic over [`Scalar`] (`f32`/`f64`); the
//! aliases below fix `f64`, which the simulator and experiments use.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod fluid;
pub mod graph;
pub mod measures;
pub mod runner;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use graph::{GraphSpec, InterferenceGraph, Schedule, StableSetCatalog};
pub use scalar::Scalar;

pub type Params = measures::ModelParams<f64>;
pub type StationaryMeasure = measures::ScheduleDistribution<f64>;
