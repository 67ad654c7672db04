use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::confusion::{one_vs_rest_counts, ConfusionMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// Plain multi-class accuracy, `trace / total`. The headline number.
    Accuracy,
    /// Per-class one-vs-rest `(TP + TN) / total`, averaged over classes.
    MacroAccuracy,
    Ppv,
    Sensitivity,
    Specificity,
    Npv,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Accuracy,
        Metric::MacroAccuracy,
        Metric::Ppv,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Npv,
        Metric::F1,
    ];

    /// Columns of the published-style tables.
    pub const TABLE: [Metric; 6] = [
        Metric::Accuracy,
        Metric::Ppv,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Npv,
        Metric::F1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::MacroAccuracy => "macro_accuracy",
            Metric::Ppv => "ppv",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Npv => "npv",
            Metric::F1 => "f1",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::MacroAccuracy => "Macro accuracy",
            Metric::Ppv => "PPV",
            Metric::Sensitivity => "Sensitivity",
            Metric::Specificity => "Specificity",
            Metric::Npv => "NPV",
            Metric::F1 => "F1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Averaging {
    /// Unweighted mean of per-class ratios.
    #[default]
    Macro,
    /// Ratios of one-vs-rest counts pooled over classes.
    Micro,
}

/// Metrics of one evaluated fold. `None` marks a ratio with an empty
/// denominator for every class considered; such values are left out of
/// averages rather than imputed.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldMetrics {
    pub accuracy: Option<f64>,
    pub macro_accuracy: Option<f64>,
    pub ppv: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
    /// `None` for classes with no true samples in the fold.
    pub per_class_f1: Vec<Option<f64>>,
    /// Per-class ratios that were undefined, e.g. `"ppv: class 4"`.
    pub undefined: Vec<String>,
}

impl FoldMetrics {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::MacroAccuracy => self.macro_accuracy,
            Metric::Ppv => self.ppv,
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Npv => self.npv,
            Metric::F1 => self.f1,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn f1_of(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    let (p, r) = (p?, r?);
    Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
}

pub fn fold_metrics(cm: &ConfusionMatrix) -> FoldMetrics {
    fold_metrics_with(cm, Averaging::Macro)
}

/// Accuracy, PPV, sensitivity, specificity, NPV and F1 from a confusion
/// matrix. Only classes that occur in the fold (as truth or prediction)
/// take part in the averages.
pub fn fold_metrics_with(cm: &ConfusionMatrix, averaging: Averaging) -> FoldMetrics {
    let total = cm.total();
    let present: Vec<usize> = (0..cm.classes())
        .filter(|&c| cm.row_sum(c) + cm.col_sum(c) > 0)
        .collect();
    let counts: Vec<_> = present.iter().map(|&c| (c, one_vs_rest_counts(cm, c))).collect();

    let mut undefined = Vec::new();
    let mut per_class = |name: &str, f: &dyn Fn(&super::OneVsRest) -> Option<f64>| -> Vec<f64> {
        counts
            .iter()
            .filter_map(|(c, r)| {
                let v = f(r);
                if v.is_none() {
                    undefined.push(format!("{name}: class {c}"));
                }
                v
            })
            .collect()
    };
    let ppvs = per_class("ppv", &|r| ratio(r.tp, r.tp + r.fp));
    let sens = per_class("sensitivity", &|r| ratio(r.tp, r.tp + r.fn_));
    let specs = per_class("specificity", &|r| ratio(r.tn, r.tn + r.fp));
    let npvs = per_class("npv", &|r| ratio(r.tn, r.tn + r.fn_));
    let accs = per_class("macro_accuracy", &|r| ratio(r.tp + r.tn, total));

    let (macro_accuracy, ppv, sensitivity, specificity, npv) = match averaging {
        Averaging::Macro => (mean(&accs), mean(&ppvs), mean(&sens), mean(&specs), mean(&npvs)),
        Averaging::Micro => {
            let sum = |f: fn(&super::OneVsRest) -> u64| counts.iter().map(|(_, r)| f(r)).sum::<u64>();
            let (tp, tn, fp, fn_) = (sum(|r| r.tp), sum(|r| r.tn), sum(|r| r.fp), sum(|r| r.fn_));
            (
                ratio(tp + tn, tp + tn + fp + fn_),
                ratio(tp, tp + fp),
                ratio(tp, tp + fn_),
                ratio(tn, tn + fp),
                ratio(tn, tn + fn_),
            )
        }
    };

    let per_class_f1 = (0..cm.classes())
        .map(|c| {
            let r = one_vs_rest_counts(cm, c);
            (r.tp + r.fn_ > 0).then(|| 2.0 * r.tp as f64 / (2 * r.tp + r.fp + r.fn_) as f64)
        })
        .collect();

    FoldMetrics {
        accuracy: ratio(cm.trace(), total),
        macro_accuracy,
        ppv,
        sensitivity,
        specificity,
        npv,
        f1: f1_of(ppv, sensitivity),
        per_class_f1,
        undefined,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: FoldMetrics,
}

impl FoldReport {
    pub fn new(fold: usize, confusion: ConfusionMatrix) -> Self {
        let metrics = fold_metrics(&confusion);
        FoldReport {
            fold,
            confusion,
            metrics,
        }
    }
}

/// Mean, population variance and standard deviation of one metric over the
/// folds where it was defined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
    pub folds: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        let m = mean(values)?;
        let variance = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
        Some(Summary {
            mean: m,
            variance,
            std: variance.sqrt(),
            folds: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub folds: Vec<FoldReport>,
    pub summary: BTreeMap<Metric, Summary>,
    /// Mean per-class F1 over the folds where the class occurred.
    pub per_class_f1: Vec<Option<f64>>,
}

impl RunReport {
    pub fn get(&self, m: Metric) -> Option<&Summary> {
        self.summary.get(&m)
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }
}

pub fn aggregate(folds: Vec<FoldReport>) -> Result<RunReport> {
    if folds.is_empty() {
        return Err(Error::Report("cannot aggregate zero folds".into()));
    }
    let mut summary = BTreeMap::new();
    for m in Metric::ALL {
        let values: Vec<f64> = folds.iter().filter_map(|f| f.metrics.get(m)).collect();
        if let Some(s) = Summary::of(&values) {
            summary.insert(m, s);
        }
    }
    let classes = folds[0].metrics.per_class_f1.len();
    let per_class_f1 = (0..classes)
        .map(|c| {
            let v: Vec<f64> = folds
                .iter()
                .filter_map(|f| f.metrics.per_class_f1.get(c).copied().flatten())
                .collect();
            mean(&v)
        })
        .collect();
    Ok(RunReport {
        folds,
        summary,
        per_class_f1,
    })
}
