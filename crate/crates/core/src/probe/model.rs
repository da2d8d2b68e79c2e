use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::{EmbeddingSet, LabelSpace};

/// Rows per work unit when evaluating a batch. Partial sums are reduced in
/// chunk order, so results do not depend on the thread count.
const CHUNK_ROWS: usize = 128;

/// Affine classifier `z = W f + b` over frozen embeddings.
///
/// Parameters are held in `f64`; `W` is row-major `n_classes x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    labelspace: LabelSpace,
    dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl LinearProbe {
    pub fn zeros(labelspace: LabelSpace, dim: usize) -> Self {
        let n = labelspace.len();
        LinearProbe {
            labelspace,
            dim,
            weights: vec![0.0; n * dim],
            bias: vec![0.0; n],
        }
    }

    pub fn from_parts(labelspace: LabelSpace, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let n = labelspace.len();
        if weights.len() != n * dim || bias.len() != n {
            return Err(Error::invariant(format!(
                "probe for {n} classes at dim {dim} needs {} weights and {n} biases, got {} and {}",
                n * dim,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "in probe parameters".into(),
            });
        }
        Ok(LinearProbe {
            labelspace,
            dim,
            weights,
            bias,
        })
    }

    pub fn labelspace(&self) -> &LabelSpace {
        &self.labelspace
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    fn logits_into(&self, f: &[f32], z: &mut [f64]) {
        for (c, zc) in z.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *zc = self.bias[c] + w.iter().zip(f).map(|(&w, &x)| w * x as f64).sum::<f64>();
        }
    }

    /// Logits `W f + b`.
    pub fn forward(&self, f: &[f32]) -> Result<Vec<f64>> {
        self.check_dim(f.len())?;
        let mut z = vec![0.0; self.n_classes()];
        self.logits_into(f, &mut z);
        Ok(z)
    }

    /// Index of the largest logit; ties go to the lowest index.
    pub fn predict(&self, f: &[f32]) -> Result<usize> {
        Ok(argmax(&self.forward(f)?))
    }

    /// Predicted class and its softmax probability.
    pub fn predict_scored(&self, f: &[f32]) -> Result<(usize, f64)> {
        let z = self.forward(f)?;
        let c = argmax(&z);
        Ok((c, softmax(&z)[c]))
    }
}

/// First index of the maximum.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Labelled feature rows for training or evaluating a probe.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    dim: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
}

impl Samples {
    pub fn new(dim: usize, features: Vec<f32>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::invariant(format!(
                "{} feature values do not form {} rows of dim {dim}",
                features.len(),
                labels.len()
            )));
        }
        check_labels(&labels, n_classes)?;
        Ok(Samples { dim, features, labels })
    }

    /// Features of `set` with its labels resolved against `labelspace`.
    pub fn from_set(set: &EmbeddingSet, labelspace: &LabelSpace) -> Result<Self> {
        let labels = labelspace.resolve(set)?;
        Self::new(set.dim(), set.vectors().to_vec(), labels, labelspace.len())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }
    Ok(())
}

/// Mean cross-entropy of a batch and its exact gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// `∂loss/∂W`, row-major like [`LinearProbe::weights`].
    pub grad_w: Vec<f64>,
    pub grad_b: Vec<f64>,
    /// Rows whose argmax logit equals the label, before any update.
    pub correct: usize,
}

struct Partial {
    loss: f64,
    grad_w: Vec<f64>,
    grad_b: Vec<f64>,
    correct: usize,
}

fn chunk_pass(probe: &LinearProbe, features: &[f32], labels: &[usize], with_grad: bool) -> Partial {
    let (n, d) = (probe.n_classes(), probe.dim);
    let mut p = Partial {
        loss: 0.0,
        grad_w: if with_grad { vec![0.0; n * d] } else { Vec::new() },
        grad_b: if with_grad { vec![0.0; n] } else { Vec::new() },
        correct: 0,
    };
    let mut z = vec![0.0; n];
    for (f, &y) in features.chunks_exact(d).zip(labels) {
        probe.logits_into(f, &mut z);
        if argmax(&z) == y {
            p.correct += 1;
        }
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|&v| (v - m).exp()).sum();
        let log_sum = sum.ln();
        p.loss += m + log_sum - z[y];
        if with_grad {
            for (c, &zc) in z.iter().enumerate() {
                let g = (zc - m - log_sum).exp() - if c == y { 1.0 } else { 0.0 };
                p.grad_b[c] += g;
                let gw = &mut p.grad_w[c * d..(c + 1) * d];
                for (w, &x) in gw.iter_mut().zip(f) {
                    *w += g * x as f64;
                }
            }
        }
    }
    p
}

fn batch_pass(probe: &LinearProbe, features: &[f32], labels: &[usize], with_grad: bool) -> Result<LossGrad> {
    if labels.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if features.len() != labels.len() * probe.dim {
        return Err(Error::DimensionMismatch {
            expected: labels.len() * probe.dim,
            found: features.len(),
        });
    }
    check_labels(labels, probe.n_classes())?;

    let d = probe.dim;
    let partials: Vec<Partial> = features
        .par_chunks(CHUNK_ROWS * d)
        .zip(labels.par_chunks(CHUNK_ROWS))
        .map(|(f, y)| chunk_pass(probe, f, y, with_grad))
        .collect();

    let mut total = Partial {
        loss: 0.0,
        grad_w: if with_grad {
            vec![0.0; probe.weights.len()]
        } else {
            Vec::new()
        },
        grad_b: if with_grad {
            vec![0.0; probe.bias.len()]
        } else {
            Vec::new()
        },
        correct: 0,
    };
    for p in partials {
        total.loss += p.loss;
        total.correct += p.correct;
        for (a, b) in total.grad_w.iter_mut().zip(&p.grad_w) {
            *a += b;
        }
        for (a, b) in total.grad_b.iter_mut().zip(&p.grad_b) {
            *a += b;
        }
    }
    let scale = 1.0 / labels.len() as f64;
    Ok(LossGrad {
        loss: total.loss * scale,
        grad_w: total.grad_w.into_iter().map(|g| g * scale).collect(),
        grad_b: total.grad_b.into_iter().map(|g| g * scale).collect(),
        correct: total.correct,
    })
}

/// Mean cross-entropy `−mean log softmax(z_i)[y_i]` over a row-major batch,
/// with exact analytic gradients.
pub fn loss_and_grad(probe: &LinearProbe, features: &[f32], labels: &[usize]) -> Result<LossGrad> {
    batch_pass(probe, features, labels, true)
}

/// Mean cross-entropy and accuracy without gradients.
pub fn evaluate(probe: &LinearProbe, samples: &Samples) -> Result<(f64, f64)> {
    let r = batch_pass(probe, &samples.features, &samples.labels, false)?;
    Ok((r.loss, r.correct as f64 / samples.len() as f64))
}
