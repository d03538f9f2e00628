//! Translation-memory retrieval engine.
//!
//! Conventional fuzzy matching over a translation memory ([`fms`]) is
//! combined with cross-lingual embedding retrieval over target-language
//! sentences ([`embedspace`], [`embedprovider`]). Every proposal, whatever
//! its origin, receives an estimated fuzzy-match score ([`scorer`]) so that
//! proposals can be thresholded and ranked together ([`ranker`]). The
//! [`eval`] module holds the automatic evaluation metrics.

mod binio;
pub mod corpus;
pub mod embedprovider;
pub mod embedspace;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod fms;
pub mod protocol;
pub mod ranker;
pub mod scorer;

pub use error::{Error, Result};
