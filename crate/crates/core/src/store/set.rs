use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-row metadata: a unique id and one label per task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub id: String,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

impl RowMeta {
    pub fn new(id: impl Into<String>) -> Self {
        RowMeta {
            id: id.into(),
            labels: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, task: impl Into<String>, label: impl Into<String>) -> Self {
        self.labels.insert(task.into(), label.into());
        self
    }

    pub fn label(&self, task: &str) -> Option<&str> {
        self.labels.get(task).map(String::as_str)
    }
}

/// A `count x dim` matrix of embeddings with aligned row metadata.
///
/// Every constructor validates the invariants: each row has exactly `dim`
/// finite entries and is not the zero vector, and ids are non-empty and unique.
/// A loaded set is never mutated in place; filtering and splitting return new
/// sets.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: Vec<f32>,
    meta: Vec<RowMeta>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, vectors: Vec<f32>, meta: Vec<RowMeta>) -> Result<Self> {
        let set = EmbeddingSet { dim, vectors, meta };
        set.validate()?;
        Ok(set)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    /// Builds a set from `(meta, vector)` pairs.
    pub fn from_rows<I, V>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RowMeta, V)>,
        V: AsRef<[f32]>,
    {
        let mut vectors = Vec::new();
        let mut meta = Vec::new();
        for (m, v) in rows {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            vectors.extend_from_slice(v);
            meta.push(m);
        }
        Self::new(dim, vectors, meta)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invariant("dim must be positive"));
        }
        if self.vectors.len() != self.meta.len() * self.dim {
            return Err(Error::invariant(format!(
                "{} values do not form {} rows of dim {}",
                self.vectors.len(),
                self.meta.len(),
                self.dim
            )));
        }
        let mut seen = HashSet::with_capacity(self.meta.len());
        for (i, m) in self.meta.iter().enumerate() {
            if m.id.is_empty() {
                return Err(Error::invariant(format!("row {i} has an empty id")));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(Error::invariant(format!("duplicate id {:?}", m.id)));
            }
        }
        for (i, row) in self.vectors.chunks_exact(self.dim).enumerate() {
            if let Some(bad) = row.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("{bad} in row {i} ({:?})", self.meta[i].id),
                });
            }
            if row.iter().all(|&x| x == 0.0) {
                return Err(Error::zero_vector(format!("row {i} ({:?})", self.meta[i].id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `count x dim` values.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.vectors.chunks_exact(self.dim)
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    /// The `task` label of every row, in row order.
    ///
    /// Fails with [`Error::UnknownTask`] if any row lacks the task.
    pub fn task_labels(&self, task: &str) -> Result<Vec<&str>> {
        self.meta
            .iter()
            .map(|m| m.label(task).ok_or_else(|| Error::UnknownTask(task.to_owned())))
            .collect()
    }

    /// A new set holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingSet {
        let mut vectors = Vec::with_capacity(indices.len() * self.dim);
        let mut meta = Vec::with_capacity(indices.len());
        for &i in indices {
            vectors.extend_from_slice(self.row(i));
            meta.push(self.meta[i].clone());
        }
        EmbeddingSet {
            dim: self.dim,
            vectors,
            meta,
        }
    }
}

/// Drops every row whose `task` label is in `excluded`, preserving row order.
pub fn filter_labels<S: AsRef<str>>(set: &EmbeddingSet, task: &str, excluded: &[S]) -> Result<EmbeddingSet> {
    let labels = set.task_labels(task)?;
    let keep: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| !excluded.iter().any(|e| e.as_ref() == **l))
        .map(|(i, _)| i)
        .collect();
    Ok(set.subset(&keep))
}
