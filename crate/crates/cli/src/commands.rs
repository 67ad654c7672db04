use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use dualscope_core::data::{gland_histogram, synth_generate, write_dataset, LobeSample};
use dualscope_core::eval::{
    aggregate, read_predictions_csv, stratified_kfold, subgroup_eval, write_fold_csv,
    write_per_class_f1_csv, write_predictions_csv, Attribute, ConfusionMatrix, FoldReport, Metric,
    markdown_table, PerClassF1Row, PredictionRecord, RunReport, SubgroupReport,
};
use dualscope_core::labelfuse::{GLAND_CLASS_NAMES, LOBE_CLASS_NAMES, NUM_GLAND_CLASSES};
use dualscope_core::train::{predict, run_fold, train, FoldOutcome, TrainHistory};
use dualscope_core::GlandModel;

use crate::config::{kernel_label, ExperimentConfig};
use crate::history::write_history_csv;

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> dualscope_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn write_run_configs(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    write(&cfg.out.join("config.toml"), cfg.to_toml()?)?;
    write(&cfg.out.join("model.toml"), toml::to_string_pretty(&cfg.model)?)?;
    Ok(())
}

pub struct SynthOutcome {
    pub manifest: PathBuf,
    pub samples: usize,
    /// Left-lobe class counts.
    pub left_histogram: [usize; 6],
    pub gland_histogram: [usize; NUM_GLAND_CLASSES],
}

impl SynthOutcome {
    pub fn histogram_text(&self) -> String {
        let mut s = format!("{} patients -> {}\n\nleft lobe\n", self.samples, self.manifest.display());
        for (name, n) in LOBE_CLASS_NAMES.iter().zip(self.left_histogram) {
            let _ = writeln!(s, "  {name:<34} {n}");
        }
        s.push_str("\ngland\n");
        for (name, n) in GLAND_CLASS_NAMES.iter().zip(self.gland_histogram) {
            let _ = writeln!(s, "  {name:<34} {n}");
        }
        s
    }
}

/// Writes the configured synthetic dataset (PGM pairs, `manifest.csv` and
/// the generating `synth.toml`) to `cfg.out`.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<SynthOutcome> {
    let spec = cfg.dataset.synthetic_spec(cfg.model.image_size);
    let samples = synth_generate(&spec)?;
    let manifest = write_dataset(&cfg.out, &samples)
        .with_context(|| format!("writing dataset to {}", cfg.out.display()))?;
    write(&cfg.out.join("synth.toml"), toml::to_string_pretty(&spec)?)?;
    let mut left_histogram = [0; 6];
    for s in &samples {
        left_histogram[s.left_label.code()] += 1;
    }
    Ok(SynthOutcome {
        manifest,
        samples: samples.len(),
        left_histogram,
        gland_histogram: gland_histogram(&samples),
    })
}

pub struct TrainOutcome {
    pub model: GlandModel<f32>,
    pub history: TrainHistory,
    /// Metrics of the trained model on its own training set.
    pub report: RunReport,
}

impl TrainOutcome {
    pub fn accuracy(&self) -> f64 {
        self.report.folds[0].metrics.accuracy.unwrap_or(0.0)
    }
}

/// Trains one model on the whole dataset. Writes `checkpoint.bin`,
/// `history.csv` and the training-set `metrics.csv`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples = cfg.load_samples()?;
    let refs: Vec<&LobeSample> = samples.iter().collect();
    let mut model = GlandModel::build(&cfg.model, cfg.training.seed)?;
    info!("training on {} patients", samples.len());
    let history = train(&mut model, &refs, &cfg.training)?;
    let preds = predict(&model, &refs)?;
    let mut cm = ConfusionMatrix::new(NUM_GLAND_CLASSES);
    for (p, s) in preds.iter().zip(&refs) {
        cm.record(s.gland_label().code(), p.gland.code())?;
    }
    let report = aggregate(vec![FoldReport::new(0, cm)])?;

    write_run_configs(cfg)?;
    let mut ckpt = Vec::new();
    model.write_checkpoint(&mut ckpt)?;
    write(&cfg.out.join("checkpoint.bin"), ckpt)?;
    write(&cfg.out.join("history.csv"), csv_bytes(|b| write_history_csv(&history, b))?)?;
    write(&cfg.out.join("metrics.csv"), csv_bytes(|b| write_fold_csv(&report, b))?)?;
    Ok(TrainOutcome { model, history, report })
}

/// Runs every fold with at most `jobs` folds in flight. Outcomes come back
/// in fold order; the first failing fold (lowest index) is reported.
fn run_folds(cfg: &ExperimentConfig, samples: &[LobeSample], folds: &dualscope_core::eval::Folds, jobs: usize) -> Result<Vec<FoldOutcome>> {
    let k = folds.k();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<dualscope_core::Result<FoldOutcome>>>> = Mutex::new((0..k).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, k) {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= k {
                    break;
                }
                info!("fold {i}: training on {} patients", samples.len() - folds.folds[i].len());
                let r = run_fold(samples, folds, i, &cfg.model, &cfg.training);
                match &r {
                    Ok(o) => info!("fold {i}: accuracy {:?}", o.report.metrics.accuracy),
                    Err(_) => failed.store(true, Ordering::SeqCst),
                }
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let mut out = Vec::with_capacity(k);
    for (i, slot) in slots.into_inner().expect("threads joined").into_iter().enumerate() {
        match slot {
            Some(Ok(o)) => out.push(o),
            Some(Err(e)) => return Err(anyhow!(e).context(format!("fold {i} failed"))),
            None => bail!("fold {i} did not run because an earlier fold failed"),
        }
    }
    Ok(out)
}

pub struct CrossvalOutcome {
    pub report: RunReport,
    pub predictions: Vec<PredictionRecord>,
    /// Held-out accuracy of each fold's model before training.
    pub untrained_accuracy: Vec<f64>,
    pub epochs_run: Vec<usize>,
}

impl CrossvalOutcome {
    pub fn mean_accuracy(&self) -> f64 {
        self.report.get(Metric::Accuracy).map_or(0.0, |s| s.mean)
    }

    pub fn mean_untrained_accuracy(&self) -> f64 {
        self.untrained_accuracy.iter().sum::<f64>() / self.untrained_accuracy.len().max(1) as f64
    }
}

/// Stratified k-fold cross-validation. Each fold trains a fresh model seeded
/// from `training.seed + fold`. Writes per-fold checkpoints, `predictions.csv`,
/// `folds.csv`, `per_class_f1.csv` and `report.md` under `cfg.out`.
pub fn cmd_crossval(cfg: &ExperimentConfig, jobs: usize) -> Result<CrossvalOutcome> {
    cfg.validate()?;
    let samples = cfg.load_samples()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.gland_label().code()).collect();
    let folds = stratified_kfold(&labels, cfg.cv.k, cfg.cv.seed)?;
    for w in &folds.warnings {
        log::warn!("{w}");
    }
    let outcomes = run_folds(cfg, &samples, &folds, jobs)?;

    write_run_configs(cfg)?;
    let mut predictions = Vec::new();
    let mut untrained_accuracy = Vec::new();
    let mut epochs_run = Vec::new();
    let mut reports = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        let dir = cfg.out.join(format!("fold_{i:02}"));
        create_dir(&dir)?;
        let mut ckpt = Vec::new();
        o.model.write_checkpoint(&mut ckpt)?;
        write(&dir.join("checkpoint.bin"), ckpt)?;
        write(&dir.join("history.csv"), csv_bytes(|b| write_history_csv(&o.history, b))?)?;
        predictions.extend(o.predictions);
        untrained_accuracy.push(o.untrained_accuracy);
        epochs_run.push(o.history.epochs.len());
        reports.push(o.report);
    }
    let report = aggregate(reports)?;
    let outcome = CrossvalOutcome {
        report,
        predictions,
        untrained_accuracy,
        epochs_run,
    };
    write(&cfg.out.join("predictions.csv"), csv_bytes(|b| write_predictions_csv(&outcome.predictions, b))?)?;
    write(&cfg.out.join("folds.csv"), csv_bytes(|b| write_fold_csv(&outcome.report, b))?)?;
    write(&cfg.out.join("per_class_f1.csv"), per_class_csv(&outcome.report)?)?;
    write(&cfg.out.join("report.md"), crossval_markdown(cfg, samples.len(), &outcome))?;
    Ok(outcome)
}

fn per_class_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut rows: Vec<PerClassF1Row> = report
        .folds
        .iter()
        .map(|f| PerClassF1Row {
            label: f.fold.to_string(),
            values: f.metrics.per_class_f1.clone(),
        })
        .collect();
    rows.push(PerClassF1Row {
        label: "mean".into(),
        values: report.per_class_f1.clone(),
    });
    csv_bytes(|b| write_per_class_f1_csv("fold", &GLAND_CLASS_NAMES, &rows, b))
}

fn dataset_line(cfg: &ExperimentConfig, n: usize) -> String {
    match &cfg.dataset.manifest {
        Some(m) => format!("{n} patients from {}", m.display()),
        None => format!(
            "{n} synthetic patients ({:?}, noise σ {}, seed {})",
            cfg.dataset.preset, cfg.dataset.noise_sigma, cfg.dataset.seed
        ),
    }
}

fn crossval_markdown(cfg: &ExperimentConfig, n: usize, o: &CrossvalOutcome) -> String {
    let m = &cfg.model;
    let t = &cfg.training;
    let mut s = String::from("# Cross-validation\n\n");
    let _ = writeln!(s, "- dataset: {}", dataset_line(cfg, n));
    let _ = writeln!(
        s,
        "- model: kernels {}, image {}, stem {}, {} middle blocks, shared lobe weights {}",
        kernel_label(&m.entry_kernels),
        m.image_size,
        m.stem_channels,
        m.middle_blocks,
        m.share_lobe_weights
    );
    let _ = writeln!(
        s,
        "- training: {} epochs max, batch {}, lr {} → {} over {} epochs, seed {}",
        t.epochs, t.batch_size, t.schedule.warm_lr, t.schedule.fixed_lr, t.schedule.decay_epochs, t.seed
    );
    let _ = writeln!(s, "- folds: {} (seed {})\n", cfg.cv.k, cfg.cv.seed);
    s.push_str(&markdown_table("Kernel size", &[(kernel_label(&m.entry_kernels), &o.report)]));
    s.push_str("\n## Folds\n\n| Fold | Patients | Epochs | Untrained accuracy | Accuracy |\n|---|---|---|---|---|\n");
    for (i, f) in o.report.folds.iter().enumerate() {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.3} | {} |",
            f.fold,
            f.confusion.total(),
            o.epochs_run[i],
            o.untrained_accuracy[i],
            f.metrics.accuracy.map_or("n/a".to_string(), |a| format!("{a:.3}"))
        );
    }
    let notes: Vec<String> = o
        .report
        .folds
        .iter()
        .flat_map(|f| f.metrics.undefined.iter().map(move |u| format!("- fold {}: {u}", f.fold)))
        .collect();
    if !notes.is_empty() {
        s.push_str("\n## Undefined per-class terms\n\n");
        for n in notes {
            s.push_str(&n);
            s.push('\n');
        }
    }
    s
}

/// Kernel settings compared by the ablation, in table order.
pub const ABLATION_KERNELS: [&[usize]; 7] = [&[1, 5], &[1, 7], &[3, 5], &[3, 7], &[3], &[5], &[7]];

pub struct AblationRow {
    pub label: String,
    pub outcome: CrossvalOutcome,
}

pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    pub markdown: String,
}

/// Cross-validates every kernel setting in `ABLATION_KERNELS` under
/// `cfg.out/kernels_<sizes>/` and writes the merged `ablation.md`.
pub fn cmd_ablate(cfg: &ExperimentConfig, jobs: usize) -> Result<AblationOutcome> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for kernels in ABLATION_KERNELS {
        let label = kernel_label(kernels);
        let mut cell = cfg.clone();
        cell.model.entry_kernels = kernels.to_vec();
        let tag: Vec<String> = kernels.iter().map(|k| k.to_string()).collect();
        cell.out = cfg.out.join(format!("kernels_{}", tag.join("-")));
        info!("ablation cell {label}");
        let outcome = cmd_crossval(&cell, jobs).with_context(|| format!("ablation cell {label}"))?;
        rows.push(AblationRow { label, outcome });
    }
    let markdown = ablation_markdown(cfg, &rows);
    create_dir(&cfg.out)?;
    write(&cfg.out.join("config.toml"), cfg.to_toml()?)?;
    write(&cfg.out.join("ablation.md"), &markdown)?;
    Ok(AblationOutcome { rows, markdown })
}

fn ablation_markdown(cfg: &ExperimentConfig, rows: &[AblationRow]) -> String {
    let mut s = String::from("# Kernel-size ablation\n\n");
    let _ = writeln!(
        s,
        "{}-fold cross-validation, image {}, stem {}, {} middle blocks, {} epochs max.\n",
        cfg.cv.k, cfg.model.image_size, cfg.model.stem_channels, cfg.model.middle_blocks, cfg.training.epochs
    );
    let table: Vec<(String, &RunReport)> = rows.iter().map(|r| (r.label.clone(), &r.outcome.report)).collect();
    s.push_str(&markdown_table("Kernel size", &table));
    s.push_str("\nAgainst the same models before training:\n\n| Kernel size | Untrained accuracy | Trained accuracy |\n|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {:.3} | {:.3} |",
            r.label,
            r.outcome.mean_untrained_accuracy(),
            r.outcome.mean_accuracy()
        );
    }
    s
}

fn capitalised(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

pub struct ReportOutcome {
    pub subgroups: SubgroupReport,
    pub markdown: String,
    pub markdown_path: PathBuf,
    pub csv_path: PathBuf,
}

/// Re-evaluates a run's stored predictions per `attribute` group. Writes
/// `report_<attribute>.md` and `per_class_f1_<attribute>.csv` into the run.
pub fn cmd_report(run_dir: &Path, attribute: Attribute) -> Result<ReportOutcome> {
    let path = run_dir.join("predictions.csv");
    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let records = read_predictions_csv(file).with_context(|| format!("reading {}", path.display()))?;
    if records.is_empty() {
        bail!("{} has no predictions", path.display());
    }
    let subgroups = subgroup_eval(&records, attribute)?;
    let (column, tag) = match attribute {
        Attribute::Gender => ("Gender", "gender"),
        Attribute::AgeGroup => ("Age group", "age_group"),
    };

    let mut markdown = format!("# Results by {}\n\n", column.to_lowercase());
    let table: Vec<(String, &RunReport)> = subgroups.groups.iter().map(|g| (capitalised(&g.group), &g.report)).collect();
    if !table.is_empty() {
        markdown.push_str(&markdown_table(column, &table));
    }
    markdown.push_str("\n| Group | Patients | Folds |\n|---|---|---|\n");
    for g in &subgroups.groups {
        let _ = writeln!(markdown, "| {} | {} | {} |", capitalised(&g.group), g.samples, g.report.k());
    }
    for n in &subgroups.notices {
        let _ = writeln!(markdown, "\nNote: {n}");
    }

    let rows: Vec<PerClassF1Row> = subgroups
        .groups
        .iter()
        .map(|g| PerClassF1Row {
            label: g.group.clone(),
            values: g.report.per_class_f1.clone(),
        })
        .collect();
    let markdown_path = run_dir.join(format!("report_{tag}.md"));
    let csv_path = run_dir.join(format!("per_class_f1_{tag}.csv"));
    write(&markdown_path, &markdown)?;
    write(&csv_path, csv_bytes(|b| write_per_class_f1_csv(tag, &GLAND_CLASS_NAMES, &rows, b))?)?;
    Ok(ReportOutcome {
        subgroups,
        markdown,
        markdown_path,
        csv_path,
    })
}
