use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// How a column is interpreted at ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AttrKind {
    #[default]
    Categorical,
    /// Numeric column replaced by round-edged bins when used as a split attribute.
    NumericBinned,
    /// Numeric column whose distinct values are used as-is.
    NumericRaw,
}

impl AttrKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, AttrKind::Categorical)
    }
}

/// Ingest configuration: roles, kinds, and the text mapping used for
/// embeddings and display.
///
/// ```json
/// {
///   "aggregate": "Income",
///   "group_by": "EducationLevel",
///   "split_attributes": ["Sex", "Occupation", "QoB"],
///   "kinds": {"Income": "numeric-raw", "QoB": "numeric-raw"},
///   "labels": {"QoB": "Quarter Of Birth"},
///   "value_labels": {"Occupation": {"CS&Math": "CS & Math"}}
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub aggregate: String,
    pub group_by: String,
    pub split_attributes: Vec<String>,
    #[serde(default)]
    pub kinds: BTreeMap<String, AttrKind>,
    /// Human-readable attribute text; defaults to the column name.
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    /// Human-readable value text per attribute; defaults to the raw value.
    #[serde(default)]
    pub value_labels: BTreeMap<String, BTreeMap<String, String>>,
    /// Text used for the null value of every attribute.
    #[serde(default = "default_null_label")]
    pub null_label: String,
    /// Cell contents read as null.
    #[serde(default = "default_null_tokens")]
    pub null_tokens: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// When set, multi-valued cells keep only the text before the first
    /// occurrence of this separator.
    #[serde(default)]
    pub multi_value_delimiter: Option<String>,
}

fn default_null_label() -> String {
    "null".to_owned()
}

fn default_null_tokens() -> Vec<String> {
    vec![String::new()]
}

fn default_delimiter() -> char {
    ','
}

impl Schema {
    pub fn new(
        aggregate: impl Into<String>,
        group_by: impl Into<String>,
        split_attributes: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            aggregate: aggregate.into(),
            group_by: group_by.into(),
            split_attributes: split_attributes.into_iter().map(Into::into).collect(),
            kinds: BTreeMap::new(),
            labels: BTreeMap::new(),
            value_labels: BTreeMap::new(),
            null_label: default_null_label(),
            null_tokens: default_null_tokens(),
            delimiter: default_delimiter(),
            multi_value_delimiter: None,
        }
    }

    pub fn with_kind(mut self, attr: impl Into<String>, kind: AttrKind) -> Self {
        self.kinds.insert(attr.into(), kind);
        self
    }

    pub fn with_label(mut self, attr: impl Into<String>, label: impl Into<String>) -> Self {
        self.labels.insert(attr.into(), label.into());
        self
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn kind_of(&self, attr: &str) -> AttrKind {
        self.kinds.get(attr).copied().unwrap_or_default()
    }
}
