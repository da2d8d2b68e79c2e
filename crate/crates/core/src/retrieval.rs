//! Exact top-K image retrieval.
//!
//! The index is a flat matrix of unit-normalized embeddings; a query is scored
//! against every row, so results are exact and reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simcore::{top_k, UnitMatrix};
use crate::store::{EmbeddingSet, RowMeta};

/// A self-match must score at least this close to 1 to be excluded.
pub const SELF_MATCH_SLACK: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    matrix: UnitMatrix,
    meta: Vec<RowMeta>,
}

/// One ranked neighbour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    /// 1-based rank.
    pub rank: usize,
    pub row_index: usize,
    pub id: String,
    pub style: Option<String>,
    pub genre: Option<String>,
    pub score: f64,
}

impl RetrievalIndex {
    pub fn build(set: &EmbeddingSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::invalid("cannot index an empty set"));
        }
        Ok(RetrievalIndex {
            matrix: UnitMatrix::from_rows(set.dim(), set.vectors())?,
            meta: set.meta().to_vec(),
        })
    }

    pub fn matrix(&self) -> &UnitMatrix {
        &self.matrix
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// The `k` nearest rows to `query`.
    ///
    /// With `exclude_self = Some(id)`, a best hit carrying that id and scoring
    /// at least `1 − 1e-6` is dropped and the list is extended by one so it
    /// still holds `k` entries where possible.
    pub fn retrieve(&self, query: &[f32], k: usize, exclude_self: Option<&str>) -> Result<Vec<RetrievalHit>> {
        if k == 0 {
            return Err(Error::invalid("K must be positive"));
        }
        let fetch = if exclude_self.is_some() { k + 1 } else { k };
        let mut hits = top_k(query, &self.matrix, fetch)?;
        let drop_first = matches!(
            (exclude_self, hits.first()),
            (Some(qid), Some(h)) if h.score >= 1.0 - SELF_MATCH_SLACK && self.meta[h.row_index].id == qid
        );
        if drop_first {
            hits.remove(0);
        }
        hits.truncate(k);
        Ok(hits
            .into_iter()
            .enumerate()
            .map(|(i, h)| {
                let m = &self.meta[h.row_index];
                RetrievalHit {
                    rank: i + 1,
                    row_index: h.row_index,
                    id: m.id.clone(),
                    style: m.label("style").map(str::to_owned),
                    genre: m.label("genre").map(str::to_owned),
                    score: h.score,
                }
            })
            .collect())
    }
}
