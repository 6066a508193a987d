use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown class label `{0}` (expected `causal` or `non-causal`)")]
pub struct UnknownLabel(pub String);

/// The two classes of the pairwise causal discovery task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "causal")]
    Causal,
    #[serde(rename = "non-causal")]
    NonCausal,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Causal, ClassLabel::NonCausal];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Causal => "causal",
            ClassLabel::NonCausal => "non-causal",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            ClassLabel::Causal => ClassLabel::NonCausal,
            ClassLabel::NonCausal => ClassLabel::Causal,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "causal" => Ok(ClassLabel::Causal),
            "non-causal" => Ok(ClassLabel::NonCausal),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}
