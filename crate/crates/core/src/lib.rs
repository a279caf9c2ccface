//! Per-chunk rating of surgical knot-tying videos.
//!
//! Chunk feature sequences are classified position by position into twelve
//! action x level classes by a dilated temporal convolutional network, a seed
//! ensemble of such networks votes on each position, and the predictions are
//! scored with one-vs-all, support-weighted precision / sensitivity / F1 and
//! average precision under video-level k-fold cross-validation.

pub mod domain;
pub mod ensemble;
pub mod error;
pub mod featstore;
pub mod harness;
pub mod metrics;
pub mod tcn;

pub use error::{Error, FormatError, Result};
