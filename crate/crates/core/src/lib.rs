//! Diffusion in narrow random channels with side wings, reduced to a
//! diffusion on a metric graph.
//!
//! The crate covers the whole pipeline: channel shapes and their random
//! environments ([`geometry`], [`environment`]), the metric graph of
//! cross-section components ([`graph`]), Monte Carlo of the limiting graph
//! diffusion ([`walk`]) and of the finite-width reflected process ([`sde`]),
//! closed-form exit-time and transport-speed evaluators with a
//! finite-difference oracle ([`analytic`]), and the experiment runner
//! ([`experiment`]).

pub mod analytic;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod graph;
pub mod profile;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
