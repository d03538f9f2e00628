//! Conventional fuzzy matching against the source side of a TM.

mod distance;
mod index;
mod persist;

pub(crate) use distance::bounded_edit_distance;
pub use distance::{effort_estimate, fms, fms_with, word_edit_distance, Normalization};
pub use index::{build_fms_index, retrieve_fms, FmsIndex, FmsMatch, FmsQuery, RetrievalStats};
pub use persist::FMS_MAGIC;

/// Default score floor; CAT users rarely look at matches below 60%.
pub const DEFAULT_MIN_SCORE: f64 = 0.6;
