//! Tissue categories, pathology vocabulary and the three classification tasks.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueCategory {
    Healthy,
    Cancer,
    HighGradeDysplasia,
    NonMalignant,
    Other,
}

impl TissueCategory {
    pub fn name(self) -> &'static str {
        match self {
            TissueCategory::Healthy => "healthy",
            TissueCategory::Cancer => "cancer",
            TissueCategory::HighGradeDysplasia => "high_grade_dysplasia",
            TissueCategory::NonMalignant => "non_malignant",
            TissueCategory::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TissueLabel {
    pub raw_pathology: String,
    pub category: TissueCategory,
}

/// Maps free-text pathology strings onto categories.
///
/// Lookup is case-insensitive and ignores surrounding whitespace; hyphen
/// variants ("mild-moderate", "mild moderate") are treated alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathologyVocabulary {
    entries: BTreeMap<String, TissueCategory>,
}

fn normalize(raw: &str) -> String {
    let lowered = raw.trim().to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut last_space = false;
    for ch in lowered.chars() {
        let ch = if ch == '-' || ch == '_' || ch == '\u{2011}' { ' ' } else { ch };
        if ch.is_whitespace() {
            if !last_space && !out.is_empty() {
                out.push(' ');
            }
            last_space = true;
        } else {
            out.push(ch);
            last_space = false;
        }
    }
    out
}

impl PathologyVocabulary {
    pub fn new(entries: impl IntoIterator<Item = (String, TissueCategory)>) -> Self {
        PathologyVocabulary {
            entries: entries.into_iter().map(|(k, v)| (normalize(&k), v)).collect(),
        }
    }

    /// Two-tier dysplasia grouping: mild and mild-moderate are low grade
    /// (non-malignant), moderate, severe and CIS are high grade.
    pub fn standard() -> Self {
        use TissueCategory::*;
        let seed: &[(&str, TissueCategory)] = &[
            ("healthy", Healthy),
            ("healthy contralateral", Healthy),
            ("contralateral healthy", Healthy),
            ("cancer", Cancer),
            ("oscc", Cancer),
            ("squamous cell carcinoma", Cancer),
            ("invasive squamous cell carcinoma", Cancer),
            ("moderate dysplasia", HighGradeDysplasia),
            ("severe dysplasia", HighGradeDysplasia),
            ("carcinoma in situ", HighGradeDysplasia),
            ("cis", HighGradeDysplasia),
            ("high grade dysplasia", HighGradeDysplasia),
            ("mild dysplasia", NonMalignant),
            ("mild moderate dysplasia", NonMalignant),
            ("low grade dysplasia", NonMalignant),
            ("hyperkeratosis", NonMalignant),
            ("benign", NonMalignant),
            ("normal", NonMalignant),
            ("non malignant", NonMalignant),
            ("other", Other),
            ("non diagnostic", Other),
        ];
        Self::new(seed.iter().map(|(k, v)| (k.to_string(), *v)))
    }

    pub fn map_label(&self, raw: &str) -> Result<TissueLabel> {
        self.entries
            .get(&normalize(raw))
            .map(|&category| TissueLabel {
                raw_pathology: raw.to_string(),
                category,
            })
            .ok_or_else(|| Error::UnknownPathology(raw.to_string()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, TissueCategory)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// One of the three classification problems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: u8,
    /// Class order; the index into this list is the class id used by the
    /// classifiers. For binary tasks index 1 is the positive class.
    pub classes: Vec<TissueCategory>,
}

impl TaskSpec {
    pub fn new(task_id: u8) -> Result<Self> {
        use TissueCategory::*;
        let classes = match task_id {
            1 => alloc::vec![Healthy, Cancer],
            2 => alloc::vec![Cancer, HighGradeDysplasia, NonMalignant],
            3 => alloc::vec![Healthy, Cancer, HighGradeDysplasia, NonMalignant],
            other => {
                return Err(Error::InvalidArgument(alloc::format!(
                    "task id must be 1, 2 or 3 (got {other})"
                )))
            }
        };
        Ok(TaskSpec { task_id, classes })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, category: TissueCategory) -> Option<usize> {
        self.classes.iter().position(|&c| c == category)
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        self.classes.iter().map(|c| c.name()).collect()
    }
}
