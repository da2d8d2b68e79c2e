use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::store::EmbeddingSet;

/// Ordered class names of one task.
///
/// The order is the canonical class index used for logits, prompt-bank rows
/// and confusion matrices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSpace {
    task: String,
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new(task: impl Into<String>, classes: Vec<String>) -> Result<Self> {
        let task = task.into();
        if classes.len() < 2 {
            return Err(Error::invariant(format!(
                "label space {task:?} needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut index = HashMap::with_capacity(classes.len());
        for (i, c) in classes.iter().enumerate() {
            if index.insert(c.clone(), i).is_some() {
                return Err(Error::invariant(format!("label space {task:?} lists {c:?} twice")));
            }
        }
        Ok(LabelSpace { task, classes, index })
    }

    /// Sorted distinct `task` labels found in `set`.
    pub fn derive(set: &EmbeddingSet, task: &str) -> Result<Self> {
        let classes: BTreeSet<&str> = set.task_labels(task)?.into_iter().collect();
        Self::new(task, classes.into_iter().map(str::to_owned).collect())
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, index: usize) -> &str {
        &self.classes[index]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index.get(label).copied().ok_or_else(|| Error::UnknownLabel {
            task: self.task.clone(),
            label: label.to_owned(),
        })
    }

    /// Resolves the `task` label of every row of `set` to a class index.
    pub fn resolve(&self, set: &EmbeddingSet) -> Result<Vec<usize>> {
        set.task_labels(&self.task)?
            .into_iter()
            .map(|l| self.index_of(l))
            .collect()
    }

    /// A copy without the given classes, order otherwise preserved.
    pub fn without<S: AsRef<str>>(&self, excluded: &[S]) -> Result<Self> {
        let classes = self
            .classes
            .iter()
            .filter(|c| !excluded.iter().any(|e| e.as_ref() == c.as_str()))
            .cloned()
            .collect();
        Self::new(self.task.clone(), classes)
    }

    /// Hex SHA-256 of the canonical JSON `{"task":..,"classes":[..]}`.
    pub fn digest(&self) -> String {
        let canonical = serde_json::json!({ "task": self.task, "classes": self.classes });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

/// The companion `.labelspace.json` document: ordered class names per task.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSpaces(pub BTreeMap<String, Vec<String>>);

impl LabelSpaces {
    /// One sorted label space for every task present in `set`.
    ///
    /// Tasks with fewer than two distinct labels are skipped.
    pub fn derive(set: &EmbeddingSet) -> Self {
        let mut tasks: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for m in set.meta() {
            for (task, label) in &m.labels {
                tasks.entry(task.clone()).or_default().insert(label.clone());
            }
        }
        LabelSpaces(
            tasks
                .into_iter()
                .filter(|(_, c)| c.len() >= 2)
                .map(|(t, c)| (t, c.into_iter().collect()))
                .collect(),
        )
    }

    pub fn get(&self, task: &str) -> Result<LabelSpace> {
        let classes = self.0.get(task).ok_or_else(|| Error::UnknownTask(task.to_owned()))?;
        LabelSpace::new(task, classes.clone())
    }

    pub fn insert(&mut self, space: &LabelSpace) {
        self.0.insert(space.task.clone(), space.classes.clone());
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let spaces: LabelSpaces = serde_json::from_slice(&bytes)?;
        for task in spaces.0.keys() {
            spaces.get(task)?;
        }
        Ok(spaces)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// `dir/name.emb` → `dir/name.labelspace.json`.
pub fn companion_path(store: &Path) -> PathBuf {
    store.with_extension("labelspace.json")
}
