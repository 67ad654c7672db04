//! Argument parsing. Besides the named flags, any `--section.field value`
//! (or `--section.field=value`) sets that config field directly.
//!
//! Precedence, lowest first: defaults, `--config` file, named flags, dotted
//! overrides.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use dualscope_core::eval::Attribute;

use crate::commands::{cmd_ablate, cmd_crossval, cmd_report, cmd_synth, cmd_train};
use crate::config::{parse_kernels, ExperimentConfig, Preset};

#[derive(Debug, Parser)]
#[command(name = "dualscope", version, about = "Dual-kernel CNN experiments on thyroid lobe crops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic phantom dataset (PGM images and manifest).
    Synth(Common),
    /// Train one model on the whole dataset.
    Train(Common),
    /// Stratified k-fold cross-validation.
    Crossval(Common),
    /// Cross-validate every entry-kernel setting and tabulate them.
    Ablate(Common),
    /// Per-subgroup tables from a finished cross-validation run.
    Report(ReportArgs),
}

#[derive(Debug, Default, Args)]
pub struct Common {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds the dataset, the folds and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Entry kernels, e.g. "1,7" or "7".
    #[arg(long)]
    pub kernels: Option<String>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Dataset manifest CSV instead of a synthetic preset.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `crossval`.
    pub run_dir: PathBuf,
    /// gender | age_group
    #[arg(long, default_value = "gender")]
    pub by: Attribute,
}

impl Common {
    pub fn resolve(&self, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.dataset.seed = seed;
            cfg.cv.seed = seed;
            cfg.training.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(n) = self.image_size {
            cfg.model.image_size = n;
        }
        if let Some(n) = self.epochs {
            cfg.training.epochs = n;
        }
        if let Some(k) = &self.kernels {
            cfg.model.entry_kernels = parse_kernels(k)?;
        }
        if let Some(p) = self.preset {
            cfg.dataset.preset = p;
        }
        if let Some(n) = self.per_class {
            cfg.dataset.per_class = n;
        }
        if let Some(m) = &self.manifest {
            cfg.dataset.manifest = Some(m.clone());
        }
        for (path, value) in overrides {
            cfg.set(path, value)?;
        }
        Ok(cfg)
    }
}

/// Pulls `--a.b value` / `--a.b=value` pairs out of `args`, returning the
/// remaining arguments for clap.
pub fn split_dotted(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut dotted = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => match it.next() {
                Some(v) => v,
                None => bail!("--{key} needs a value"),
            },
        };
        dotted.push((key, value));
    }
    Ok((rest, dotted))
}

/// Parses `args` (program name first) and runs the command, printing a
/// short summary to stdout.
pub fn run(args: Vec<String>) -> Result<()> {
    let (rest, dotted) = split_dotted(args)?;
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => bail!("{e}"),
    };
    if !dotted.is_empty() && matches!(cli.command, Command::Report(_)) {
        bail!("report takes no config overrides");
    }
    match cli.command {
        Command::Synth(c) => {
            let out = cmd_synth(&c.resolve(&dotted)?)?;
            print!("{}", out.histogram_text());
        }
        Command::Train(c) => {
            let cfg = c.resolve(&dotted)?;
            let out = cmd_train(&cfg)?;
            println!(
                "trained {} epochs, training accuracy {:.4}; wrote {}",
                out.history.epochs.len(),
                out.accuracy(),
                cfg.out.display()
            );
        }
        Command::Crossval(c) => {
            let cfg = c.resolve(&dotted)?;
            let out = cmd_crossval(&cfg, c.jobs)?;
            println!(
                "{}-fold accuracy {:.4} (untrained {:.4}); wrote {}",
                cfg.cv.k,
                out.mean_accuracy(),
                out.mean_untrained_accuracy(),
                cfg.out.join("report.md").display()
            );
        }
        Command::Ablate(c) => {
            let cfg = c.resolve(&dotted)?;
            let out = cmd_ablate(&cfg, c.jobs)?;
            print!("{}", out.markdown);
        }
        Command::Report(r) => {
            let out = cmd_report(&r.run_dir, r.by)?;
            print!("{}", out.markdown);
        }
    }
    Ok(())
}
