//! Multiview embedding forecasts of chaotic time series, with inference
//! procedures comparing a family of simulation runs against observations.
//!
//! The guide in `book/` walks through the pipeline; its snippets run as
//! doc-tests of this crate.

pub mod cli;
pub mod embedding;
pub mod error;
pub mod inference;
pub mod pipeline;
pub mod predictor;
pub mod seed;
pub mod surrogate;
pub mod timeseries;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/panels.md")]
    mod panels {}
    #[doc = include_str!("../../../book/src/views.md")]
    mod views {}
    #[doc = include_str!("../../../book/src/forecasting.md")]
    mod forecasting {}
    #[doc = include_str!("../../../book/src/surrogates.md")]
    mod surrogates {}
    #[doc = include_str!("../../../book/src/englobement.md")]
    mod englobement {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
