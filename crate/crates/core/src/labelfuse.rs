//! Lobe and gland diagnosis classes, and the rules that fuse two lobe
//! diagnoses into one whole-gland diagnosis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LOBE_CLASSES: usize = 6;
pub const NUM_GLAND_CLASSES: usize = 16;

/// Per-lobe diagnosis. The code doubles as severity rank: `Normal` is the
/// least severe, `Cancer` the most.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LobeClass {
    Normal = 0,
    Thyroiditis = 1,
    Cystic = 2,
    Goiter = 3,
    Adenoma = 4,
    Cancer = 5,
}

impl LobeClass {
    pub const ALL: [LobeClass; NUM_LOBE_CLASSES] = [
        LobeClass::Normal,
        LobeClass::Thyroiditis,
        LobeClass::Cystic,
        LobeClass::Goiter,
        LobeClass::Adenoma,
        LobeClass::Cancer,
    ];

    pub const fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub const fn severity(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        LOBE_CLASS_NAMES[self as usize]
    }
}

/// Lobe class names indexed by code.
pub const LOBE_CLASS_NAMES: [&str; NUM_LOBE_CLASSES] =
    ["normal", "thyroiditis", "cystic", "goiter", "adenoma", "cancer"];

/// Gland class names indexed by code: the six lobe classes, then the ten
/// two-disease combinations.
pub const GLAND_CLASS_NAMES: [&str; NUM_GLAND_CLASSES] = [
    "normal",
    "thyroiditis",
    "cystic",
    "goiter",
    "adenoma",
    "cancer",
    "thyroiditis+cystic",
    "thyroiditis+goiter",
    "thyroiditis+adenoma",
    "thyroiditis+cancer",
    "cystic+goiter",
    "cystic+adenoma",
    "cystic+cancer",
    "goiter+adenoma",
    "goiter+cancer",
    "adenoma+cancer",
];

impl fmt::Display for LobeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LobeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        LOBE_CLASS_NAMES
            .iter()
            .position(|&n| n == s)
            .and_then(Self::from_code)
            .ok_or(s)
    }
}

/// Whole-gland diagnosis, encoded as its class code `0..16`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlandClass(u8);

impl GlandClass {
    pub fn from_code(code: usize) -> Option<Self> {
        (code < NUM_GLAND_CLASSES).then_some(GlandClass(code as u8))
    }

    pub fn all() -> impl Iterator<Item = GlandClass> {
        (0..NUM_GLAND_CLASSES as u8).map(GlandClass)
    }

    pub const fn code(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        GLAND_CLASS_NAMES[self.code()]
    }

    pub fn base(class: LobeClass) -> Self {
        GlandClass(class as u8)
    }

    /// Gland class of two different diseased lobes; `None` if either is
    /// normal or both are equal.
    pub fn combination(a: LobeClass, b: LobeClass) -> Option<Self> {
        if a == b || a == LobeClass::Normal || b == LobeClass::Normal {
            return None;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let pos = COMBINATIONS.iter().position(|&p| p == (lo, hi))?;
        Some(GlandClass((NUM_LOBE_CLASSES + pos) as u8))
    }

    /// The lobe classes this gland class is made of: one for base classes,
    /// two (less severe first) for combinations.
    pub fn components(self) -> (LobeClass, Option<LobeClass>) {
        let code = self.code();
        if code < NUM_LOBE_CLASSES {
            (LobeClass::ALL[code], None)
        } else {
            let (a, b) = COMBINATIONS[code - NUM_LOBE_CLASSES];
            (a, Some(b))
        }
    }
}

impl fmt::Display for GlandClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GlandClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        GLAND_CLASS_NAMES
            .iter()
            .position(|&n| n == s)
            .and_then(Self::from_code)
            .ok_or(s)
    }
}

/// Ordered (less severe, more severe) pairs, in gland-code order.
const COMBINATIONS: [(LobeClass, LobeClass); 10] = {
    use LobeClass::*;
    [
        (Thyroiditis, Cystic),
        (Thyroiditis, Goiter),
        (Thyroiditis, Adenoma),
        (Thyroiditis, Cancer),
        (Cystic, Goiter),
        (Cystic, Adenoma),
        (Cystic, Cancer),
        (Goiter, Adenoma),
        (Goiter, Cancer),
        (Adenoma, Cancer),
    ]
};

/// The more severe of two lobe diagnoses.
pub fn dominant(a: LobeClass, b: LobeClass) -> LobeClass {
    a.max(b)
}

/// Whole-gland diagnosis from the two lobe diagnoses.
pub fn fuse_labels(left: LobeClass, right: LobeClass) -> GlandClass {
    if left == right || right == LobeClass::Normal {
        GlandClass::base(left)
    } else if left == LobeClass::Normal {
        GlandClass::base(right)
    } else {
        GlandClass::combination(left, right).expect("distinct non-normal pair")
    }
}

const NORMALIZATION_TOL: f64 = 1e-6;

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.len() != NUM_LOBE_CLASSES {
        return Err(Error::shape(
            "fuse_probs",
            format!("expected {NUM_LOBE_CLASSES} probabilities, got {}", p.len()),
        ));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

/// Gland-class distribution from two independent lobe distributions: each
/// gland class collects the joint mass of every (left, right) pair that
/// fuses to it.
pub fn fuse_probs(left: &[f64], right: &[f64]) -> Result<[f64; NUM_GLAND_CLASSES]> {
    check_distribution(left)?;
    check_distribution(right)?;
    let mut q = [0.0; NUM_GLAND_CLASSES];
    for (i, &pl) in left.iter().enumerate() {
        for (j, &pr) in right.iter().enumerate() {
            q[FUSION_TABLE[i][j]] += pl * pr;
        }
    }
    Ok(q)
}

/// `fuse_labels` as a code table.
const FUSION_TABLE: [[usize; NUM_LOBE_CLASSES]; NUM_LOBE_CLASSES] = {
    let mut t = [[0usize; NUM_LOBE_CLASSES]; NUM_LOBE_CLASSES];
    let mut i = 0;
    while i < NUM_LOBE_CLASSES {
        let mut j = 0;
        while j < NUM_LOBE_CLASSES {
            t[i][j] = if i == j || j == 0 {
                i
            } else if i == 0 {
                j
            } else {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                // combinations are listed by (lo, hi) lexicographically over codes 1..=5
                let mut offset = 0;
                let mut a = 1;
                while a < lo {
                    offset += NUM_LOBE_CLASSES - 1 - a;
                    a += 1;
                }
                NUM_LOBE_CLASSES + offset + (hi - lo - 1)
            };
            j += 1;
        }
        i += 1;
    }
    t
};

/// Index of the largest probability; ties go to the lowest code.
pub fn argmax_gland(q: &[f64]) -> GlandClass {
    GlandClass::from_code(argmax(q)).expect("16-class vector")
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
