//! Domain types and data plumbing for the COMETS generators.
//!
//! This crate owns the multivariate time-series representation shared by the
//! rest of the workspace: synthetic benchmark datasets, minute-bar market
//! data ingestion, normalization and its exact inverse, and segmentation of
//! long series into (past, future) training pairs. Everything here is pure
//! given its inputs and a seed; randomness flows through named substreams of
//! a single root seed.

pub mod error;
pub mod ingest;
pub mod preprocess;
pub mod rng;
pub mod segment;
pub mod series;
pub mod synthetic;

pub use error::{CoreError, Result};
pub use ingest::{ingest_csv, read_channels_csv, write_channels_csv, write_market_csv};
pub use preprocess::{
    apply_preprocess, fit_preprocess, invert_preprocess, ChannelState, PreprocessState,
    PriceAnchor,
};
pub use rng::{substream, substream_indexed};
pub use segment::{segment, SegmentPair};
pub use series::{
    minute_of_day_of, ChannelKind, ChannelMeta, MultivariateSeries, SESSION_MINUTES,
    SESSION_OPEN_MINUTE,
};
pub use synthetic::{generate_gaussian_ar, generate_sines, SyntheticDatasetSpec, SyntheticKind};
