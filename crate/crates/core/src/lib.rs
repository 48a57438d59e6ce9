//! Successive Halving over learning curves, with promotion decisions driven
//! either by current performance values or by a product-kernel Gaussian
//! Process learning-curve predictor ranked by pairwise expected wins.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the CLI
//! and parallel sweeps live in the `halvinglab` companion crate.
#![no_std]

extern crate alloc;

pub mod curve;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod ranking;
pub mod seed;
pub mod sh;
pub mod stats;
pub mod synth;

pub use curve::{best_candidate, perf, CurveSet, LearningCurve, PerfSpec};
pub use error::{Error, Result};
pub use gp::{fit, predict_perf, FitConfig, GpHyperparams, GpModel, ObservationSet};
pub use ranking::{expected_wins, CandidateSummary, Ranking};
pub use sh::{RankerKind, ShConfig, ShTrace};
