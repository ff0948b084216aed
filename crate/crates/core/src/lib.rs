//! Slanted-edge sharpness measurement (MTF50) of image datasets under
//! controlled Gaussian-blur degradation.
//!
//! Stages: [`degrade`] blurs datasets, [`harvest`] finds slanted step edges in
//! scene images, [`sfr`] measures each edge, and [`report`] aggregates
//! per-variant statistics and joins detection metrics. [`chart`] renders
//! synthetic edges with known SFR for verification. [`pipeline`] chains the
//! stages over a work directory and [`cli`] exposes them as subcommands.

pub mod chart;
pub mod cli;
pub mod dataset;
pub mod degrade;
pub mod edgefit;
pub mod error;
pub mod harvest;
pub mod image;
pub mod pipeline;
pub mod report;
pub mod sfr;

pub use error::{Error, Result};
