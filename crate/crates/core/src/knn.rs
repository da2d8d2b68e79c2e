//! Nearest-neighbour classification against a labelled reference set.
//!
//! With `k = 1` a query takes the label of its most cosine-similar reference
//! embedding. For `k > 1` the top-`k` hits vote, each weighted by its cosine
//! score; the class with the largest total wins, ties to the lowest index.

use crate::error::{Error, Result};
use crate::simcore::{top_k, ScoredHit, UnitMatrix};
use crate::store::{EmbeddingSet, LabelSpace};

#[derive(Clone, Debug)]
pub struct ReferenceIndex {
    matrix: UnitMatrix,
    labels: Vec<usize>,
    labelspace: LabelSpace,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnPrediction {
    pub class: usize,
    /// Winning vote weight; for `k = 1` the cosine of the nearest reference.
    pub score: f64,
}

impl ReferenceIndex {
    /// Normalizes the reference rows and resolves their labels for the
    /// label space's task.
    pub fn build(set: &EmbeddingSet, labelspace: &LabelSpace) -> Result<Self> {
        let labels = labelspace.resolve(set)?;
        let matrix = UnitMatrix::from_rows(set.dim(), set.vectors())?;
        Ok(ReferenceIndex {
            matrix,
            labels,
            labelspace: labelspace.clone(),
        })
    }

    pub fn matrix(&self) -> &UnitMatrix {
        &self.matrix
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn labelspace(&self) -> &LabelSpace {
        &self.labelspace
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classify(&self, query: &[f32], k: usize) -> Result<KnnPrediction> {
        classify_knn(query, self, k)
    }
}

/// Score-weighted vote over `hits`. Only classes that received a hit are
/// candidates; ties go to the lowest class index.
fn vote(hits: &[ScoredHit], labels: &[usize], n_classes: usize) -> KnnPrediction {
    let mut weight: Vec<Option<f64>> = vec![None; n_classes];
    for h in hits {
        *weight[labels[h.row_index]].get_or_insert(0.0) += h.score;
    }
    let mut best: Option<KnnPrediction> = None;
    for (class, w) in weight.into_iter().enumerate() {
        if let Some(score) = w {
            if best.is_none_or(|b| score > b.score) {
                best = Some(KnnPrediction { class, score });
            }
        }
    }
    best.expect("at least one hit")
}

pub fn classify_knn(query: &[f32], index: &ReferenceIndex, k: usize) -> Result<KnnPrediction> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if index.is_empty() {
        return Err(Error::invalid("reference set is empty"));
    }
    let hits = top_k(query, &index.matrix, k)?;
    if k == 1 {
        return Ok(KnnPrediction {
            class: index.labels[hits[0].row_index],
            score: hits[0].score,
        });
    }
    Ok(vote(&hits, &index.labels, index.labelspace.len()))
}
