//! Experiment configuration. Stored as TOML; any field can be overridden by
//! its dotted path (`training.schedule.warm_lr`, `cv.k`, `out`).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dualscope_core::data::{load_manifest, synth_generate, LobeSample, SyntheticSpec};
use dualscope_core::train::TrainConfig;
use dualscope_core::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `per_class` patients for each of the 16 gland classes.
    Balanced16,
    /// Base classes only, with the clinical left-lobe class counts.
    #[serde(rename = "paper-shaped")]
    #[value(name = "paper-shaped")]
    Imbalanced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Manifest CSV; when set, the synthetic fields are ignored.
    pub manifest: Option<PathBuf>,
    pub preset: Preset,
    pub per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            manifest: None,
            preset: Preset::Balanced16,
            per_class: 10,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn synthetic_spec(&self, image_size: usize) -> SyntheticSpec {
        let mut spec = match self.preset {
            Preset::Balanced16 => SyntheticSpec::balanced16(self.per_class, image_size, self.seed),
            Preset::Imbalanced => SyntheticSpec::imbalanced(image_size, self.seed),
        };
        spec.noise_sigma = self.noise_sigma;
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 10, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run directory.
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub cv: CvConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out: PathBuf::from("runs/latest"),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            cv: CvConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing experiment config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Sets the field at a dotted path. `value` is read as a TOML literal
    /// (`30`, `true`, `[1, 7]`, `"x"`), falling back to a bare string.
    pub fn set(&mut self, path: &str, value: &str) -> Result<()> {
        let mut doc = toml::Value::try_from(&*self)?;
        let keys: Vec<&str> = path.split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            bail!("bad config path {path:?}");
        }
        let (last, parents) = keys.split_last().expect("split yields one key");
        let mut node = &mut doc;
        for key in parents {
            node = node
                .get_mut(*key)
                .filter(|v| v.is_table())
                .with_context(|| format!("unknown config section {key:?} in {path:?}"))?;
        }
        let table = node.as_table_mut().expect("checked above");
        table.insert(last.to_string(), parse_literal(value));
        let updated: ExperimentConfig = doc
            .try_into()
            .with_context(|| format!("setting {path} = {value}"))?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()?;
        if self.cv.k < 2 {
            bail!("cv.k must be at least 2, got {}", self.cv.k);
        }
        if let Some(m) = &self.dataset.manifest {
            if !m.exists() {
                bail!("manifest {} does not exist", m.display());
            }
        }
        Ok(())
    }

    /// The manifest's patients, or the synthetic preset at the model's
    /// image size.
    pub fn load_samples(&self) -> Result<Vec<LobeSample>> {
        match &self.dataset.manifest {
            Some(path) => load_manifest(path, self.model.image_size)
                .with_context(|| format!("loading {}", path.display())),
            None => Ok(synth_generate(&self.dataset.synthetic_spec(self.model.image_size))?),
        }
    }
}

fn parse_literal(value: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    match toml::from_str::<Probe>(&format!("v = {value}")) {
        Ok(p) => p.v,
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Kernel notation used in tables: `1 & 7` for two stems, `7 × 7` for one.
pub fn kernel_label(kernels: &[usize]) -> String {
    match kernels {
        [k] => format!("{k} × {k}"),
        ks => ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" & "),
    }
}

/// Parses `"1,7"` or `"7"`.
pub fn parse_kernels(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("bad kernel size {t:?} in {s:?}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.training.batch_size, 2);
        assert_eq!(cfg.training.epochs, 30);
        assert_eq!(cfg.model.image_size, 64);
        assert_eq!(cfg.cv.k, 10);
    }

    #[test]
    fn dotted_overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("training.epochs", "7").unwrap();
        cfg.set("training.schedule.warm_lr", "0.005").unwrap();
        cfg.set("model.entry_kernels", "[3, 5]").unwrap();
        cfg.set("dataset.preset", "paper-shaped").unwrap();
        cfg.set("out", "somewhere/else").unwrap();
        cfg.set("dataset.manifest", "m.csv").unwrap();
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.training.schedule.warm_lr, 0.005);
        assert_eq!(cfg.model.entry_kernels, vec![3, 5]);
        assert_eq!(cfg.dataset.preset, Preset::Imbalanced);
        assert_eq!(cfg.out, PathBuf::from("somewhere/else"));
        assert_eq!(cfg.dataset.manifest, Some(PathBuf::from("m.csv")));
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("training.nope", "1").is_err());
        assert!(cfg.set("nope.epochs", "1").is_err());
        assert!(cfg.set("training.epochs", "many").is_err());
        assert!(cfg.set("training..epochs", "1").is_err());
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_fields_fail_to_parse() {
        assert!(ExperimentConfig::from_toml("[cv]\nk = 5\nfolds = 3\n").is_err());
        let cfg = ExperimentConfig::from_toml("[cv]\nk = 5\n").unwrap();
        assert_eq!(cfg.cv.k, 5);
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.training.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.manifest = Some(PathBuf::from("/definitely/not/here.csv"));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kernel_notation() {
        assert_eq!(kernel_label(&[1, 7]), "1 & 7");
        assert_eq!(kernel_label(&[5]), "5 × 5");
        assert_eq!(parse_kernels("1, 7").unwrap(), vec![1, 7]);
        assert!(parse_kernels("1,x").is_err());
    }
}
