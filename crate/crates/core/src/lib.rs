//! Analytics over geo-tagged tweet archives.
//!
//! The pipeline runs from raw NDJSON through keyword and geo filtering, bot
//! removal, local-time histograms and work engagement indices, to topic
//! models, emoji sentiment and the statistics used to compare them.

pub mod clean;
pub mod config;
pub mod content;
pub mod engagement;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod pipeline;
pub mod sentiment;
pub mod states;
pub mod stats;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
pub use ingest::{DateWindow, GeoPoint, GeoTag, TweetRecord};
pub use states::State;
pub use temporal::HourWeekMatrix;
