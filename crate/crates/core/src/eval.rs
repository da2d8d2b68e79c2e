//! Classification metrics and report tables.
//!
//! Per class `c` of a confusion matrix `cm` (rows gold, columns predicted):
//! `P_c = cm[c][c] / colsum(c)`, `R_c = cm[c][c] / rowsum(c)` and
//! `F1_c = 2 P_c R_c / (P_c + R_c)`, each `0` when its denominator is `0`.
//! Macro averages are unweighted means over classes with non-zero support
//! (gold count); weighted averages weight each class by its support.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::LabelSpace;

/// Square count matrix; entry `(g, p)` counts samples of gold class `g`
/// predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u64>>", into = "Vec<Vec<u64>>")]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n: usize) -> Self {
        ConfusionMatrix {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::invalid(format!(
                "confusion matrix must be square: {n} rows but a row of length {}",
                r.len()
            )));
        }
        Ok(ConfusionMatrix {
            n,
            counts: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.n + pred]
    }

    pub fn row_sum(&self, gold: usize) -> u64 {
        self.counts[gold * self.n..(gold + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.n).map(|g| self.get(g, pred)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|c| self.get(c, c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<u64>>> for ConfusionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<ConfusionMatrix> for Vec<Vec<u64>> {
    fn from(cm: ConfusionMatrix) -> Self {
        cm.to_rows()
    }
}

fn check_pairs(preds: &[usize], golds: &[usize]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    Ok(())
}

pub fn confusion_matrix(preds: &[usize], golds: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    check_pairs(preds, golds)?;
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&p, &g) in preds.iter().zip(golds) {
        if p >= n_classes || g >= n_classes {
            return Err(Error::invalid(format!(
                "class index {} out of range for {n_classes} classes",
                p.max(g)
            )));
        }
        cm.counts[g * n_classes + p] += 1;
    }
    Ok(cm)
}

/// Fraction of positions where `preds[i] == golds[i]`.
pub fn accuracy_at_1(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check_pairs(preds, golds)?;
    if preds.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction list"));
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    #[default]
    Macro,
    Weighted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.n_classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.col_sum(c));
            let recall = ratio(tp, cm.row_sum(c));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
            }
        })
        .collect()
}

pub fn summarize(cm: &ConfusionMatrix, average: Average) -> MetricSummary {
    let per_class = per_class_metrics(cm);
    let weight = |m: &ClassMetrics| match average {
        Average::Macro => (m.support > 0) as u64 as f64,
        Average::Weighted => m.support as f64,
    };
    let total: f64 = per_class.iter().map(weight).sum();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if total == 0.0 {
            0.0
        } else {
            per_class.iter().map(|m| weight(m) * f(m)).sum::<f64>() / total
        }
    };
    MetricSummary {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_class,
    }
}

/// Unweighted means of per-class P, R and F1 over classes with support.
pub fn macro_metrics(cm: &ConfusionMatrix) -> MetricSummary {
    summarize(cm, Average::Macro)
}

/// Per-class metrics of a report, with the class name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub support: u64,
}

/// Metrics for one model on one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub task: String,
    pub average: Average,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub acc1: f64,
    pub per_class: Vec<ClassReport>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_predictions(
        model: impl Into<String>,
        labelspace: &LabelSpace,
        preds: &[usize],
        golds: &[usize],
        average: Average,
    ) -> Result<Self> {
        let confusion = confusion_matrix(preds, golds, labelspace.len())?;
        let acc1 = accuracy_at_1(preds, golds)?;
        let s = summarize(&confusion, average);
        Ok(EvalReport {
            model: model.into(),
            task: labelspace.task().to_owned(),
            average,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            acc1,
            per_class: s
                .per_class
                .iter()
                .zip(labelspace.classes())
                .map(|(m, c)| ClassReport {
                    class: c.clone(),
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                    support: m.support,
                })
                .collect(),
            confusion,
        })
    }
}

/// A metric as a percentage with one decimal (ties to even).
pub fn percent(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// A text table with one row per model and P/R/F1/acc@1 columns per task.
///
/// Models and tasks appear in first-seen order; a missing (model, task) pair
/// renders as `-`.
pub fn render_report(reports: &[EvalReport]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut tasks: Vec<&str> = Vec::new();
    for r in reports {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
    }
    let name_w = models.iter().map(|m| m.len()).max().unwrap_or(0).max("Model".len());
    const CELL: usize = 6;
    let group_w = 4 * CELL + 3;

    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "Model");
    for t in &tasks {
        let _ = write!(out, " | {t:^group_w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<name_w$}", "");
    for _ in &tasks {
        let _ = write!(
            out,
            " | {:>CELL$} {:>CELL$} {:>CELL$} {:>CELL$}",
            "P", "R", "F1", "acc@1"
        );
    }
    out.push('\n');
    let _ = write!(out, "{}", "-".repeat(name_w));
    for _ in &tasks {
        let _ = write!(out, "-+-{}", "-".repeat(group_w));
    }
    out.push('\n');

    for m in &models {
        let _ = write!(out, "{m:<name_w$}");
        for t in &tasks {
            match reports.iter().find(|r| r.model == *m && r.task == *t) {
                Some(r) => {
                    let _ = write!(
                        out,
                        " | {:>CELL$} {:>CELL$} {:>CELL$} {:>CELL$}",
                        percent(r.precision),
                        percent(r.recall),
                        percent(r.f1),
                        percent(r.acc1)
                    );
                }
                None => {
                    let _ = write!(out, " | {:>CELL$} {:>CELL$} {:>CELL$} {:>CELL$}", "-", "-", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
