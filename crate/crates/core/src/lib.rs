//! Measure and reduce semantic entanglement in retrieval corpora.
//!
//! Segments of different topics that embed close together get retrieved
//! for each other's queries. This crate scores that overlap with the
//! entanglement index, finds topic boundaries from consecutive-segment
//! similarity, and rebuilds documents into self-contained knowledge objects
//! with context headers, per-domain clones and provenance, stored behind
//! metadata filters and exact top-k search.
//!
//! ```
//! use untangle::embed::Embedding;
//! use untangle::metrics::entanglement_index;
//! use untangle::model::TopicLabel;
//!
//! let topics: Vec<TopicLabel> = ["A", "A", "B", "B"].map(TopicLabel::from).to_vec();
//! let vectors = vec![
//!     Embedding(vec![1.0, 0.0]),
//!     Embedding(vec![0.8, 0.6]),
//!     Embedding(vec![1.0, 0.0]),
//!     Embedding(vec![0.0, 1.0]),
//! ];
//! let report = entanglement_index(&topics, &vectors, 0.75).unwrap();
//! assert_eq!(report.ei, 0.5);
//! ```

pub mod calibrate;
pub mod embed;
pub mod error;
pub mod evaluate;
pub mod feedback;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod store;
pub mod synth;
pub mod text;

pub use embed::{cosine_sim, Embedder, Embedding};
pub use error::{Error, Result};
pub use model::{DocType, Document, Segment, TopicLabel};
pub use text::tokenize;

#[cfg(doctest)]
mod book {
    macro_rules! chapters {
        ($($name:ident => $file:literal),* $(,)?) => {
            $(
                #[doc = include_str!(concat!("../../../book/src/", $file))]
                pub struct $name;
            )*
        };
    }

    chapters! {
        Introduction => "introduction.md",
        Quickstart => "quickstart.md",
        Entanglement => "entanglement.md",
        Segmentation => "segmentation.md",
        Calibration => "calibration.md",
        Pipeline => "pipeline.md",
        Store => "store.md",
        Feedback => "feedback.md",
        Synthetic => "synthetic.md",
        Cli => "cli.md",
    }
}
