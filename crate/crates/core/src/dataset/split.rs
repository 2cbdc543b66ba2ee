use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How each volcano's scenes are divided chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SplitMode {
    /// 70% train, 15% validation, the rest test.
    #[default]
    #[serde(rename = "70/15/15")]
    Standard,
    /// 85% train (training and validation merged), the rest test.
    #[serde(rename = "85/15")]
    Extended,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "70/15/15" | "standard" => Ok(SplitMode::Standard),
            "85/15" | "extended" => Ok(SplitMode::Extended),
            other => Err(Error::InvalidArgument(format!(
                "unknown split mode {other:?} (expected 70/15/15 or 85/15)"
            ))),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Standard => "70/15/15",
            SplitMode::Extended => "85/15",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split {s:?}")))
    }
}

/// `[train, validation, test]` sizes for `count` scenes. Each boundary is
/// floored; the remainder goes to test.
pub fn split_sizes(count: usize, mode: SplitMode) -> [usize; 3] {
    match mode {
        SplitMode::Standard => {
            let train = count * 70 / 100;
            let val = count * 85 / 100 - train;
            [train, val, count - train - val]
        }
        SplitMode::Extended => {
            let train = count * 85 / 100;
            [train, 0, count - train]
        }
    }
}

/// Items partitioned into the three splits, order preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitParts<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Default for SplitParts<T> {
    fn default() -> Self {
        SplitParts {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        }
    }
}

impl<T> SplitParts<T> {
    pub fn get(&self, split: Split) -> &[T] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, split: Split) -> &mut Vec<T> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }
}

/// Splits one volcano's chronologically ordered items.
pub fn chronological_split<T: Clone>(items: &[T], mode: SplitMode) -> SplitParts<T> {
    let [a, b, _] = split_sizes(items.len(), mode);
    SplitParts {
        train: items[..a].to_vec(),
        validation: items[a..a + b].to_vec(),
        test: items[a + b..].to_vec(),
    }
}
