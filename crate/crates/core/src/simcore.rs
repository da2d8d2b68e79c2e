//! Numeric kernels shared by every classifier and the retrieval index.
//!
//! Stored data is `f32`; every dot product and norm accumulates in `f64`.
//! Indexes normalize their rows once at build time ([`UnitMatrix`]), so a
//! query costs one normalization plus `N` dot products.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per work unit of the parallel top-K scan.
pub const DEFAULT_BLOCK_ROWS: usize = 4096;

/// Dot product with `f64` accumulation, summed in index order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[inline]
fn dot_mixed(q: &[f64], row: &[f32]) -> f64 {
    q.iter().zip(row).map(|(&x, &y)| x * y as f64).sum()
}

pub fn l2_norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `v / ‖v‖₂`, rounded to `f32`.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector { context: None });
    }
    Ok(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

/// Cosine similarity `⟨a,b⟩ / (‖a‖‖b‖)` of two raw vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector { context: None });
    }
    Ok(dot(a, b) / (na * nb))
}

/// A query direction normalized in `f64`.
#[derive(Clone, Debug)]
pub struct UnitQuery(Vec<f64>);

impl UnitQuery {
    pub fn new(v: &[f32]) -> Result<Self> {
        let norm = l2_norm(v);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::zero_vector("query"));
        }
        Ok(UnitQuery(v.iter().map(|&x| x as f64 / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cosine against a unit-norm row.
    #[inline]
    pub fn score(&self, unit_row: &[f32]) -> f64 {
        dot_mixed(&self.0, unit_row)
    }
}

/// Row-major matrix whose rows are unit-norm (within `f32` rounding).
#[derive(Clone, Debug, PartialEq)]
pub struct UnitMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl UnitMatrix {
    /// Normalizes every row of a row-major `values` buffer.
    pub fn from_rows(dim: usize, values: &[f32]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values are not a whole number of rows of dim {dim}",
                values.len()
            )));
        }
        let mut data = Vec::with_capacity(values.len());
        for (i, row) in values.chunks_exact(dim).enumerate() {
            let unit = l2_normalize(row).map_err(|_| Error::zero_vector(format!("row {i}")))?;
            data.extend_from_slice(&unit);
        }
        Ok(UnitMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Cosine of `query` against every row, in row order.
    pub fn scores(&self, query: &UnitQuery) -> Result<Vec<f64>> {
        check_dim(self.dim, query.dim())?;
        Ok(self.rows().map(|r| query.score(r)).collect())
    }
}

/// One scored row of a scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredHit {
    pub row_index: usize,
    pub score: f64,
}

impl ScoredHit {
    /// Rank order: higher score first, then lower row index.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.row_index.cmp(&other.row_index))
    }
}

fn select_best(hits: &mut Vec<ScoredHit>, k: usize) {
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, ScoredHit::rank_cmp);
        hits.truncate(k);
    }
    hits.sort_unstable_by(ScoredHit::rank_cmp);
}

/// The `min(k, N)` rows most cosine-similar to `query`.
///
/// Hits are ordered by descending score, ties by ascending row index.
pub fn top_k(query: &[f32], matrix: &UnitMatrix, k: usize) -> Result<Vec<ScoredHit>> {
    top_k_blocked(query, matrix, k, DEFAULT_BLOCK_ROWS)
}

/// [`top_k`] with an explicit block size for the parallel scan.
///
/// Each block keeps its own best `k`; the merge re-sorts by the same total
/// order, so the result does not depend on `block_rows` or on scheduling.
pub fn top_k_blocked(query: &[f32], matrix: &UnitMatrix, k: usize, block_rows: usize) -> Result<Vec<ScoredHit>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if matrix.is_empty() {
        return Err(Error::invalid("cannot search an empty matrix"));
    }
    check_dim(matrix.dim(), query.len())?;
    let q = UnitQuery::new(query)?;
    let block_rows = block_rows.max(1);

    let mut merged: Vec<ScoredHit> = matrix
        .as_slice()
        .par_chunks(block_rows * matrix.dim())
        .enumerate()
        .flat_map_iter(|(b, block)| {
            let base = b * block_rows;
            let mut hits: Vec<ScoredHit> = block
                .chunks_exact(matrix.dim())
                .enumerate()
                .map(|(i, row)| ScoredHit {
                    row_index: base + i,
                    score: q.score(row),
                })
                .collect();
            select_best(&mut hits, k);
            hits
        })
        .collect();
    select_best(&mut merged, k);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_rows(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<f32> {
        (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn normalize_examples() {
        let u = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-7 && (u[1] - 0.8).abs() < 1e-7);
        let again = l2_normalize(&u).unwrap();
        for (a, b) in u.iter().zip(&again) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn cosine_examples() {
        let a = [0.3f32, -1.2, 2.0];
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0, 0.0], &[1.0]).is_err());
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_matches_scalar_loop() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_rows(&mut rng, 1, 16);
            let b = random_rows(&mut rng, 1, 16);
            let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
            for i in 0..16 {
                ab += a[i] as f64 * b[i] as f64;
                aa += a[i] as f64 * a[i] as f64;
                bb += b[i] as f64 * b[i] as f64;
            }
            let oracle = ab / (aa.sqrt() * bb.sqrt());
            assert!((cosine(&a, &b).unwrap() - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn self_hit_and_clamping() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let raw = random_rows(&mut rng, 20, 8);
        let m = UnitMatrix::from_rows(8, &raw).unwrap();
        let hits = top_k(m.row(7), &m, 3).unwrap();
        assert_eq!(hits[0].row_index, 7);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert_eq!(top_k(&raw[..8], &m, 100).unwrap().len(), 20);
        assert!(top_k(&raw[..8], &m, 0).is_err());
        assert!(top_k(&[0.0; 8], &m, 1).is_err());
        assert!(top_k(&raw[..7], &m, 1).is_err());
    }

    #[test]
    fn ties_break_by_row_index() {
        let m = UnitMatrix::from_rows(2, &[0.0, 1.0, 1.0, 0.0, 2.0, 0.0, 0.0, 3.0]).unwrap();
        let hits = top_k(&[1.0, 1.0], &m, 4).unwrap();
        let order: Vec<_> = hits.iter().map(|h| h.row_index).collect();
        assert_eq!(order, [0, 1, 2, 3]);
    }

    /// Exhaustive scan followed by a stable sort on descending score.
    fn oracle_top_k(query: &[f32], m: &UnitMatrix, k: usize) -> Vec<usize> {
        let norm: f64 = query.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        let mut scored: Vec<(usize, f64)> = (0..m.len())
            .map(|i| {
                let mut s = 0.0f64;
                for (q, r) in query.iter().zip(m.row(i)) {
                    s += (*q as f64 / norm) * *r as f64;
                }
                (i, s)
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        scored.into_iter().take(k).map(|(i, _)| i).collect()
    }

    #[test]
    fn matches_exhaustive_sort() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let m = UnitMatrix::from_rows(16, &random_rows(&mut rng, 200, 16)).unwrap();
        for _ in 0..20 {
            let q = random_rows(&mut rng, 1, 16);
            for k in [1, 5, 10] {
                let got: Vec<_> = top_k(&q, &m, k).unwrap().iter().map(|h| h.row_index).collect();
                assert_eq!(got, oracle_top_k(&q, &m, k));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scan_invariants(
            seed in any::<u64>(),
            n in 1usize..300,
            k in 1usize..20,
            block in 1usize..70,
            scale in 0.01f32..100.0,
        ) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let m = UnitMatrix::from_rows(6, &random_rows(&mut rng, n, 6)).unwrap();
            let q = random_rows(&mut rng, 1, 6);
            let base = top_k(&q, &m, k).unwrap();
            prop_assert_eq!(base.len(), k.min(n));
            prop_assert!(base.windows(2).all(|w| w[0].score >= w[1].score));
            prop_assert!(base.iter().all(|h| h.score.abs() <= 1.0 + 1e-6));

            let blocked = top_k_blocked(&q, &m, k, block).unwrap();
            prop_assert_eq!(&blocked, &base);

            let longer = top_k(&q, &m, k + 1).unwrap();
            prop_assert_eq!(&longer[..base.len()], &base[..]);

            let scaled: Vec<f32> = q.iter().map(|x| x * scale).collect();
            let idx = |h: &[ScoredHit]| h.iter().map(|h| h.row_index).collect::<Vec<_>>();
            prop_assert_eq!(idx(&top_k(&scaled, &m, k).unwrap()), idx(&base));
        }

        #[test]
        fn normalized_rows_are_unit(seed in any::<u64>(), dim in 1usize..40) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let raw: Vec<f32> = (0..dim).map(|_| rng.random_range(-50.0f32..50.0)).collect();
            prop_assume!(raw.iter().any(|&x| x != 0.0));
            let u = l2_normalize(&raw).unwrap();
            prop_assert!((l2_norm(&u) - 1.0).abs() < 1e-6);
            prop_assert!(cosine(&u, &raw).unwrap() > 1.0 - 1e-6);
        }
    }
}
