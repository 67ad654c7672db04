//! Dataset records, image ingestion and the synthetic phantom generator.
//!
//! Inputs are expected to be pre-windowed 8-bit grayscale lobe crops; pixel
//! values are scaled to `[0, 1]` on load.

mod manifest;
mod pgm;
mod resize;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::labelfuse::{fuse_labels, GlandClass, LobeClass};
use crate::tensor::Tensor4;

pub use manifest::{load_manifest, write_manifest, ManifestRow, MANIFEST_HEADER};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, write_pgm};
pub use resize::resize_bilinear;
pub use synth::{synth_generate, write_dataset, GenderSplit, SyntheticSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    #[default]
    Unknown,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Female, Gender::Male, Gender::Unknown];

    pub fn name(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            "unknown" | "" => Ok(Gender::Unknown),
            other => Err(other.to_string()),
        }
    }
}

/// Age bands used for subgroup reporting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgeGroup {
    Below18,
    From18To35,
    From35To55,
    From55To75,
    Over75,
    #[default]
    Unknown,
}

impl AgeGroup {
    pub const BANDS: [AgeGroup; 5] = [
        AgeGroup::Below18,
        AgeGroup::From18To35,
        AgeGroup::From35To55,
        AgeGroup::From55To75,
        AgeGroup::Over75,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgeGroup::Below18 => "below18",
            AgeGroup::From18To35 => "18-35",
            AgeGroup::From35To55 => "35-55",
            AgeGroup::From55To75 => "55-75",
            AgeGroup::Over75 => "75+",
            AgeGroup::Unknown => "unknown",
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgeGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace(' ', "");
        Ok(match s.as_str() {
            "below18" | "<18" => AgeGroup::Below18,
            "18-35" => AgeGroup::From18To35,
            "35-55" => AgeGroup::From35To55,
            "55-75" => AgeGroup::From55To75,
            "75+" => AgeGroup::Over75,
            "unknown" | "" => AgeGroup::Unknown,
            _ => return Err(s),
        })
    }
}

/// One patient: both lobe crops with their diagnoses.
#[derive(Clone, Debug, PartialEq)]
pub struct LobeSample {
    pub patient_id: String,
    /// `[1, h, w, 1]`, values in `[0, 1]`.
    pub left_image: Tensor4<f32>,
    pub right_image: Tensor4<f32>,
    pub left_label: LobeClass,
    pub right_label: LobeClass,
    pub gender: Gender,
    pub age_group: AgeGroup,
}

impl LobeSample {
    /// Always derived from the lobe labels.
    pub fn gland_label(&self) -> GlandClass {
        fuse_labels(self.left_label, self.right_label)
    }
}

/// Per-class counts of lobe labels over both sides.
pub fn lobe_histogram(samples: &[LobeSample]) -> [usize; 6] {
    let mut h = [0; 6];
    for s in samples {
        h[s.left_label.code()] += 1;
        h[s.right_label.code()] += 1;
    }
    h
}

pub fn gland_histogram(samples: &[LobeSample]) -> [usize; 16] {
    let mut h = [0; 16];
    for s in samples {
        h[s.gland_label().code()] += 1;
    }
    h
}
