//! Procedural phantom lobes. Each lobe class has its own texture family
//! drawn inside an elliptical gland outline:
//!
//! | class       | texture                                          |
//! |-------------|--------------------------------------------------|
//! | normal      | smooth intensity gradient                        |
//! | thyroiditis | fine single-pixel stipple over the whole lobe    |
//! | cystic      | one or two large dark discs                      |
//! | goiter      | many mid-size bright blobs                       |
//! | adenoma     | one bright smooth disc                           |
//! | cancer      | irregular mass filled with high-contrast speckle |

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_manifest, write_pgm, AgeGroup, Gender, LobeSample, ManifestRow};
use crate::error::{Error, Result};
use crate::labelfuse::{GlandClass, LobeClass, NUM_GLAND_CLASSES};
use crate::tensor::Tensor4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenderSplit {
    /// Each patient is female or male with probability 1/2.
    CoinFlip,
    /// Exactly this many of each, in shuffled order.
    Exact { female: usize, male: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Requested patients per gland class code.
    pub counts: [usize; NUM_GLAND_CLASSES],
    pub image_size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub gender_split: GenderSplit,
}

impl SyntheticSpec {
    pub fn balanced16(per_class: usize, image_size: usize, seed: u64) -> Self {
        SyntheticSpec {
            counts: [per_class; NUM_GLAND_CLASSES],
            image_size,
            noise_sigma: 0.05,
            seed,
            gender_split: GenderSplit::CoinFlip,
        }
    }

    /// Base classes only, with the left-lobe class counts 199/68/299/178/55/178
    /// and a 774/203 female/male split.
    pub fn imbalanced(image_size: usize, seed: u64) -> Self {
        let mut counts = [0; NUM_GLAND_CLASSES];
        counts[..6].copy_from_slice(&[199, 68, 299, 178, 55, 178]);
        SyntheticSpec {
            counts,
            image_size,
            noise_sigma: 0.05,
            seed,
            gender_split: GenderSplit::Exact {
                female: 774,
                male: 203,
            },
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        if self.image_size < 4 {
            return Err(Error::Config(format!("image size {} too small", self.image_size)));
        }
        if let GenderSplit::Exact { female, male } = self.gender_split {
            if female + male != self.total() {
                return Err(Error::Config(format!(
                    "gender split {female}+{male} does not cover {} patients",
                    self.total()
                )));
            }
        }
        Ok(())
    }
}

/// Generates the requested patients in gland-class order. The output is a
/// pure function of `spec`.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<Vec<LobeSample>> {
    spec.validate()?;
    let total = spec.total();
    let mut meta_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let genders: Vec<Gender> = match spec.gender_split {
        GenderSplit::CoinFlip => (0..total)
            .map(|_| if meta_rng.random_bool(0.5) { Gender::Female } else { Gender::Male })
            .collect(),
        GenderSplit::Exact { female, male } => {
            let mut g = vec![Gender::Female; female];
            g.extend(std::iter::repeat_n(Gender::Male, male));
            g.shuffle(&mut meta_rng);
            g
        }
    };

    let mut samples = Vec::with_capacity(total);
    for gland in GlandClass::all() {
        for k in 0..spec.counts[gland.code()] {
            let index = samples.len();
            let (left, right) = match gland.components() {
                (a, None) => (a, a),
                (a, Some(b)) if k % 2 == 0 => (a, b),
                (a, Some(b)) => (b, a),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(index as u64 + 1);
            let age_group = AgeGroup::BANDS[rng.random_range(0..AgeGroup::BANDS.len())];
            let left_image = render_lobe(left, spec.image_size, spec.noise_sigma, &mut rng);
            let right_image = render_lobe(right, spec.image_size, spec.noise_sigma, &mut rng);
            samples.push(LobeSample {
                patient_id: format!("syn{index:05}"),
                left_image,
                right_image,
                left_label: left,
                right_label: right,
                gender: genders[index],
                age_group,
            });
        }
    }
    Ok(samples)
}

struct Canvas {
    size: usize,
    px: Vec<f64>,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Canvas {
    fn coords(&self, i: usize) -> (f64, f64) {
        let s = self.size as f64;
        (((i % self.size) as f64 + 0.5) / s, ((i / self.size) as f64 + 0.5) / s)
    }

    fn inside_lobe(&self, u: f64, v: f64) -> bool {
        ((u - self.cx) / self.rx).powi(2) + ((v - self.cy) / self.ry).powi(2) <= 1.0
    }

    /// A random point well inside the lobe outline.
    fn interior_point(&self, rng: &mut ChaCha8Rng, spread: f64) -> (f64, f64) {
        let a = rng.random_range(0.0..TAU);
        let r = spread * rng.random_range(0.0f64..1.0).sqrt();
        (self.cx + r * self.rx * a.cos(), self.cy + r * self.ry * a.sin())
    }

    /// Blends `value` into a disc with a soft one-pixel edge.
    fn disc(&mut self, cu: f64, cv: f64, radius: f64, value: f64) {
        let edge = 1.0 / self.size as f64;
        for i in 0..self.px.len() {
            let (u, v) = self.coords(i);
            let d = ((u - cu).powi(2) + (v - cv).powi(2)).sqrt();
            let w = ((radius + edge - d) / (2.0 * edge)).clamp(0.0, 1.0);
            self.px[i] = self.px[i] * (1.0 - w) + value * w;
        }
    }
}

const BACKGROUND: f64 = 0.05;
const TISSUE: f64 = 0.45;

fn render_lobe(class: LobeClass, size: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor4<f32> {
    let mut c = Canvas {
        size,
        px: vec![BACKGROUND; size * size],
        cx: 0.5 + rng.random_range(-0.04..0.04),
        cy: 0.5 + rng.random_range(-0.04..0.04),
        rx: rng.random_range(0.36..0.42),
        ry: rng.random_range(0.40..0.46),
    };
    for i in 0..c.px.len() {
        let (u, v) = c.coords(i);
        if c.inside_lobe(u, v) {
            c.px[i] = TISSUE;
        }
    }

    match class {
        LobeClass::Normal => {
            let a = rng.random_range(0.0..TAU);
            let (gx, gy) = (a.cos(), a.sin());
            for i in 0..c.px.len() {
                let (u, v) = c.coords(i);
                if c.inside_lobe(u, v) {
                    c.px[i] = TISSUE + 0.25 * ((u - c.cx) * gx + (v - c.cy) * gy) / c.rx;
                }
            }
        }
        LobeClass::Thyroiditis => {
            for i in 0..c.px.len() {
                let (u, v) = c.coords(i);
                if c.inside_lobe(u, v) && rng.random_bool(0.4) {
                    c.px[i] += if rng.random_bool(0.5) { 0.3 } else { -0.3 };
                }
            }
        }
        LobeClass::Cystic => {
            for _ in 0..rng.random_range(1..=2) {
                let (u, v) = c.interior_point(rng, 0.45);
                let r = rng.random_range(0.14..0.20);
                c.disc(u, v, r, 0.12);
            }
        }
        LobeClass::Goiter => {
            for _ in 0..rng.random_range(6..=10) {
                let (u, v) = c.interior_point(rng, 0.8);
                let r = rng.random_range(0.045..0.075);
                c.disc(u, v, r, 0.78);
            }
        }
        LobeClass::Adenoma => {
            let (u, v) = c.interior_point(rng, 0.4);
            let r = rng.random_range(0.13..0.18);
            c.disc(u, v, r, 0.95);
        }
        LobeClass::Cancer => {
            let (mu, mv) = c.interior_point(rng, 0.4);
            let r0 = rng.random_range(0.15..0.20);
            let (p1, p2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
            for i in 0..c.px.len() {
                let (u, v) = c.coords(i);
                let (du, dv) = (u - mu, v - mv);
                let theta = dv.atan2(du);
                let r = r0 * (1.0 + 0.35 * (3.0 * theta + p1).sin() + 0.2 * (5.0 * theta + p2).sin());
                if (du * du + dv * dv).sqrt() <= r {
                    c.px[i] = if rng.random_bool(0.5) { 0.95 } else { 0.08 };
                }
            }
        }
    }

    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("sigma checked");
        for p in &mut c.px {
            *p += noise.sample(rng);
        }
    }
    let data = c.px.iter().map(|&p| p.clamp(0.0, 1.0) as f32).collect();
    Tensor4::new([1, size, size, 1], data).expect("size × size")
}

/// Writes `images/<id>_left.pgm`, `images/<id>_right.pgm` and
/// `manifest.csv` under `dir`; returns the manifest path.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[LobeSample]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("images"))?;
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let left = PathBuf::from("images").join(format!("{}_left.pgm", s.patient_id));
        let right = PathBuf::from("images").join(format!("{}_right.pgm", s.patient_id));
        write_pgm(dir.join(&left), &s.left_image)?;
        write_pgm(dir.join(&right), &s.right_image)?;
        rows.push(ManifestRow {
            patient_id: s.patient_id.clone(),
            left_path: left,
            right_path: right,
            left_label: s.left_label,
            right_label: s.right_label,
            gender: s.gender,
            age_group: s.age_group,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}
