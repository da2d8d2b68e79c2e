//! Classification and retrieval of artworks in the embedding space of a
//! frozen image encoder.
//!
//! The crate works on precomputed embeddings (one global vector per image,
//! plus per-class prompt embeddings for text-aligned encoders) and provides:
//!
//! - [`store`]: the EMB1 file format, label spaces, label filtering and
//!   seeded stratified splits;
//! - [`simcore`]: normalization, cosine similarity and exact top-K scans;
//! - [`zeroshot`]: argmax-cosine classification against a prompt bank;
//! - [`knn`]: nearest-neighbour classification against a labelled reference
//!   set;
//! - [`probe`]: a softmax-regression head trained with Adam, decoupled weight
//!   decay and early stopping;
//! - [`retrieval`]: exact top-K image retrieval with metadata;
//! - [`eval`]: confusion matrices, precision/recall/F1, acc@1 and report
//!   tables.
//!
//! ```
//! use artembed::knn::ReferenceIndex;
//! use artembed::store::{EmbeddingSet, LabelSpace, RowMeta};
//!
//! let refs = EmbeddingSet::from_rows(2, [
//!     (RowMeta::new("a").with_label("style", "Cubism"), [1.0f32, 0.1]),
//!     (RowMeta::new("b").with_label("style", "Baroque"), [0.1, 1.0]),
//! ])?;
//! let space = LabelSpace::derive(&refs, "style")?;
//! let index = ReferenceIndex::build(&refs, &space)?;
//! let pred = index.classify(&[0.9, 0.2], 1)?;
//! assert_eq!(space.class(pred.class), "Cubism");
//! # Ok::<(), artembed::Error>(())
//! ```

pub mod error;
pub mod eval;
pub mod knn;
pub mod probe;
pub mod retrieval;
pub mod simcore;
pub mod store;
pub mod zeroshot;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/store.md")]
    mod store {}
    #[doc = include_str!("../../../book/src/similarity.md")]
    mod similarity {}
    #[doc = include_str!("../../../book/src/zeroshot.md")]
    mod zeroshot {}
    #[doc = include_str!("../../../book/src/knn.md")]
    mod knn {}
    #[doc = include_str!("../../../book/src/probe.md")]
    mod probe {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
