//! Prompt-based zero-shot classification.
//!
//! Each class gets one text prompt built from a template; the text encoder's
//! embedding of that prompt is the class prototype. An image is assigned the
//! class whose prototype has the highest cosine similarity with the image
//! embedding.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::simcore::{UnitMatrix, UnitQuery};
use crate::store::{self, EmbeddingSet, Header, LabelSpace, RowMeta};

pub const STYLE_TEMPLATE: &str = "A painting in the <class> style.";
pub const GENRE_TEMPLATE: &str = "A <genre> painting.";

/// The stock template for the `style` and `genre` tasks.
pub fn default_template(task: &str) -> Option<&'static str> {
    match task {
        "style" => Some(STYLE_TEMPLATE),
        "genre" => Some(GENRE_TEMPLATE),
        _ => None,
    }
}

/// Byte ranges of `<word>` placeholder tokens in `template`.
fn placeholders(template: &str) -> Vec<(usize, usize)> {
    let bytes = template.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let body = bytes[i + 1..]
                .iter()
                .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_')
                .count();
            let close = i + 1 + body;
            if body > 0 && close < bytes.len() && bytes[close] == b'>' {
                found.push((i, close + 1));
                i = close + 1;
                continue;
            }
        }
        i += 1;
    }
    found
}

/// One prompt per class, in class order, with the template's single
/// `<placeholder>` replaced by the class name.
pub fn build_prompts<S: AsRef<str>>(classes: &[S], template: &str) -> Result<Vec<String>> {
    let (start, end) = match placeholders(template)[..] {
        [one] => one,
        ref other => {
            return Err(Error::invalid(format!(
                "template {template:?} must contain exactly one <placeholder>, found {}",
                other.len()
            )))
        }
    };
    Ok(classes
        .iter()
        .map(|c| format!("{}{}{}", &template[..start], c.as_ref(), &template[end..]))
        .collect())
}

/// Per-class prompt embeddings for one task.
#[derive(Clone, Debug)]
pub struct PromptBank {
    labelspace: LabelSpace,
    template: String,
    prompts: Vec<String>,
    raw: Vec<f32>,
    embeddings: UnitMatrix,
}

impl PromptBank {
    /// `embeddings` is row-major, row `k` embedding the prompt of class `k`.
    pub fn new(labelspace: LabelSpace, template: &str, dim: usize, embeddings: Vec<f32>) -> Result<Self> {
        let prompts = build_prompts(labelspace.classes(), template)?;
        if embeddings.len() != labelspace.len() * dim {
            return Err(Error::invariant(format!(
                "prompt bank for {} classes at dim {dim} needs {} values, got {}",
                labelspace.len(),
                labelspace.len() * dim,
                embeddings.len()
            )));
        }
        let unit = UnitMatrix::from_rows(dim, &embeddings)?;
        Ok(PromptBank {
            labelspace,
            template: template.to_owned(),
            prompts,
            raw: embeddings,
            embeddings: unit,
        })
    }

    pub fn task(&self) -> &str {
        self.labelspace.task()
    }

    pub fn labelspace(&self) -> &LabelSpace {
        &self.labelspace
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Unit-normalized prompt embeddings, one row per class.
    pub fn embeddings(&self) -> &UnitMatrix {
        &self.embeddings
    }

    /// Argmax-cosine class of `image`; ties go to the lowest class index.
    pub fn classify(&self, image: &[f32]) -> Result<ZeroShotPrediction> {
        classify_zero_shot(image, self)
    }

    fn header(&self) -> Header {
        let mut h = Header::new();
        h.insert("kind".into(), "prompt_bank".into());
        h.insert("task".into(), self.task().into());
        h.insert("template".into(), self.template.clone().into());
        h.insert("classes".into(), self.labelspace.classes().into());
        h.insert("prompts".into(), self.prompts.clone().into());
        h
    }

    /// The bank as an EMB1 set (one row per class, id = class name) and
    /// the header carrying task, template, classes and prompts.
    pub fn to_store(&self) -> Result<(EmbeddingSet, Header)> {
        let rows = self
            .labelspace
            .classes()
            .iter()
            .zip(self.raw.chunks_exact(self.dim()))
            .map(|(c, v)| (RowMeta::new(c.clone()).with_label(self.task(), c.clone()), v));
        Ok((EmbeddingSet::from_rows(self.dim(), rows)?, self.header()))
    }

    /// Persists the raw embeddings as EMB1, task and template in the header.
    pub fn write(&self, path: &Path) -> Result<()> {
        let (set, header) = self.to_store()?;
        store::write_store_with_header(&set, Some(&header), path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (set, header) = store::read_store_with_header(path)?;
        Self::from_store(&set, header.as_ref())
    }

    /// Rebuilds a bank from a decoded EMB1 set and its header.
    pub fn from_store(set: &EmbeddingSet, header: Option<&Header>) -> Result<Self> {
        let header = header.ok_or_else(|| Error::format("prompt bank has no header line"))?;
        let field = |k: &str| -> Result<&Value> {
            header
                .get(k)
                .ok_or_else(|| Error::format(format!("prompt bank header lacks {k:?}")))
        };
        if field("kind")? != "prompt_bank" {
            return Err(Error::format("EMB1 header is not a prompt bank"));
        }
        let task = field("task")?
            .as_str()
            .ok_or_else(|| Error::format("task must be a string"))?;
        let template = field("template")?
            .as_str()
            .ok_or_else(|| Error::format("template must be a string"))?;
        let classes: Vec<String> = serde_json::from_value(field("classes")?.clone())?;
        let labelspace = LabelSpace::new(task, classes)?;
        let ids: Vec<&str> = set.meta().iter().map(|m| m.id.as_str()).collect();
        if ids != labelspace.classes() {
            return Err(Error::format("prompt bank rows are not in class order"));
        }
        Self::new(labelspace, template, set.dim(), set.vectors().to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroShotPrediction {
    pub class: usize,
    /// Cosine similarity to the winning prompt.
    pub score: f64,
}

/// `argmax_k cos(image, t_k)` over the bank's prompt embeddings.
pub fn classify_zero_shot(image: &[f32], bank: &PromptBank) -> Result<ZeroShotPrediction> {
    if image.len() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            found: image.len(),
        });
    }
    let q = UnitQuery::new(image)?;
    let mut best = ZeroShotPrediction {
        class: 0,
        score: f64::NEG_INFINITY,
    };
    for (k, row) in bank.embeddings.rows().enumerate() {
        let s = q.score(row);
        if s > best.score {
            best = ZeroShotPrediction { class: k, score: s };
        }
    }
    Ok(best)
}
