//! Embedding persistence, label spaces, filtering and dataset splits.

mod format;
mod labelspace;
mod set;
mod split;

pub use format::{
    decode, encode, read_store, read_store_with_header, write_store, write_store_with_header, Header, MAGIC, VERSION,
};
pub use labelspace::{companion_path, LabelSpace, LabelSpaces};
pub use set::{filter_labels, EmbeddingSet, RowMeta};
pub use split::{split_dataset, Assigned, Split, SplitAssignment, SplitRatios};
