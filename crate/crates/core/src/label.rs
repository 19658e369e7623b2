use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of fault categories: all-healthy plus one per propeller.
pub const NUM_CLASSES: usize = 5;

/// Fault category.
///
/// | label | faulty propeller |
/// |-------|------------------|
/// | 1     | none             |
/// | 2     | 1                |
/// | 3     | 2                |
/// | 4     | 3                |
/// | 5     | 4                |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Label(u8);

impl Label {
    pub const HEALTHY: Label = Label(1);

    pub fn new(value: u8) -> Result<Self> {
        if (1..=NUM_CLASSES as u8).contains(&value) {
            Ok(Label(value))
        } else {
            Err(Error::InvalidLabel(value))
        }
    }

    /// Label for a zero-based class index.
    pub fn from_index(index: usize) -> Result<Self> {
        if index < NUM_CLASSES {
            Ok(Label(index as u8 + 1))
        } else {
            Err(Error::InvalidLabel(index.min(255) as u8))
        }
    }

    pub fn all() -> impl Iterator<Item = Label> {
        (1..=NUM_CLASSES as u8).map(Label)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based class index, `label - 1`.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn is_healthy(self) -> bool {
        self.0 == 1
    }

    /// Zero-based index of the degraded propeller, if any.
    pub fn faulty_propeller(self) -> Option<usize> {
        if self.is_healthy() {
            None
        } else {
            Some(usize::from(self.0 - 2))
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Label::new(value)
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
