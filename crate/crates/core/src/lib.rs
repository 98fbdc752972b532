//! Daily streamflow forecasting with a calibrated GR4J model feeding quantile
//! neural networks, plus GEV flood thresholds and a flood risk indicator.
//!
//! The guide in `book/` walks through each module; its code blocks run as
//! doctests of this crate.

pub mod calibrate;
pub mod config;
pub mod ensemble;
pub mod extremes;
pub mod features;
pub mod gr4j;
pub mod ingest;
pub mod metrics;
pub mod neural;
pub mod pipeline;

// Keeps the guide's code blocks compiling and passing.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/gr4j.md")]
    mod gr4j {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/neural.md")]
    mod neural {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
    #[doc = include_str!("../../../book/src/extremes.md")]
    mod extremes {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
