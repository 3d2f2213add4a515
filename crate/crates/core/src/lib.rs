//! Frequency estimation with score-partitioned Count-Min Sketches.
//!
//! A score oracle splits the key space into groups. The highest-scoring keys
//! are counted exactly in a unique bucket; each remaining score group gets
//! its own Count-Min Sketch. Group boundaries come from a dynamic program
//! that maximises the divergence between data and query mass, and each
//! table's failure probability comes from a closed-form allocation of the
//! memory budget.
//!
//! ```
//! use optlcms::{BuildConfig, FrequencyEstimator, FrequencyRankScorer, OptLcms, Stream};
//!
//! let mut stream = Stream::new();
//! for i in 1..=200u64 {
//!     stream.push_n(format!("k{i}").as_bytes(), 1_000 / i);
//! }
//! let oracle = FrequencyRankScorer::train(stream.prefix(stream.len() / 5)).unwrap();
//! let sketch = OptLcms::build(oracle, &stream, 2_000, &BuildConfig::default()).unwrap();
//! assert!(sketch.estimate(b"k1") >= 1_000);
//! ```

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod error;
pub mod exact;
pub mod hash;
pub mod optimizer;
pub mod score;
pub mod sketch;
pub mod stream;
pub mod structure;

pub use error::{Error, Result};
pub use exact::UniqueBucket;
pub use optimizer::{BudgetInputs, Destination, PartitionPlan};
pub use score::{FnOracle, FrequencyRankScorer, QueryModel, ScoreHistogram, ScoreOracle};
pub use sketch::{CmsParams, SketchTable};
pub use stream::Stream;
pub use structure::{
    build_plain_cms, build_single_threshold_lcms, BuildConfig, FrequencyEstimator, OptLcms,
    PlainCms, SearchLog,
};
