use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::error::{ensure, Result};
use crate::geometry::LandmarkSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    /// Class index used by every gender head: 0 male, 1 female.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Gender::Male),
            1 => Some(Gender::Female),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

/// One face: image, landmarks in the image's pixel coordinates, and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Image path relative to the manifest directory.
    pub image_ref: String,
    pub image: Image,
    pub landmarks: LandmarkSet,
    /// Years.
    pub age: f64,
    pub gender: Gender,
    pub subject: String,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.age.is_finite() && self.age >= 0.0,
            Data,
            "age must be finite and non-negative, got {}",
            self.age
        );
        ensure!(!self.subject.is_empty(), Data, "subject id is empty");
        Ok(())
    }
}
