//! CSV and Markdown report files, each with a matching reader.
//!
//! * fold metrics: `fold,metric,value` (empty value = undefined)
//! * per-class F1: `fold,<class names...>`, one row per fold (or group) and
//!   a trailing `mean` row; absent classes are empty cells
//! * predictions: one row per held-out patient

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::metrics::{Metric, RunReport};
use crate::data::{AgeGroup, Gender};
use crate::error::{Error, Result};
use crate::labelfuse::{GlandClass, LobeClass};

#[derive(Clone, Debug, PartialEq)]
pub struct FoldCsvRow {
    pub fold: usize,
    pub metric: Metric,
    pub value: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Report(format!("bad number {s:?}")))
}

pub fn write_fold_csv(report: &RunReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fold", "metric", "value"])?;
    for f in &report.folds {
        for m in Metric::ALL {
            w.write_record([f.fold.to_string(), m.name().to_string(), cell(f.metrics.get(m))])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_fold_csv(input: impl Read) -> Result<Vec<FoldCsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let fold = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Report(format!("bad fold in {rec:?}")))?;
        let metric = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|m| Error::Report(format!("unknown metric {m:?}")))?;
        rows.push(FoldCsvRow {
            fold,
            metric,
            value: parse_cell(rec.get(2).unwrap_or(""))?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerClassF1Row {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

/// Writes labelled per-class F1 rows under a `first_column,<class names>` header.
pub fn write_per_class_f1_csv(
    first_column: &str,
    class_names: &[&str],
    rows: &[PerClassF1Row],
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![first_column.to_string()];
    header.extend(class_names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for row in rows {
        if row.values.len() != class_names.len() {
            return Err(Error::Report(format!(
                "row {} has {} values for {} classes",
                row.label,
                row.values.len(),
                class_names.len()
            )));
        }
        let mut rec = vec![row.label.clone()];
        rec.extend(row.values.iter().map(|&v| cell(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Returns the class names from the header and the labelled rows.
pub fn read_per_class_f1_csv(input: impl Read) -> Result<(Vec<String>, Vec<PerClassF1Row>)> {
    let mut r = csv::Reader::from_reader(input);
    let names: Vec<String> = r.headers()?.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec.iter().skip(1).map(parse_cell).collect::<Result<Vec<_>>>()?;
        if values.len() != names.len() {
            return Err(Error::Report(format!("ragged row {rec:?}")));
        }
        rows.push(PerClassF1Row {
            label: rec.get(0).unwrap_or("").to_string(),
            values,
        });
    }
    Ok((names, rows))
}

/// One held-out patient's labels and predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub fold: usize,
    pub patient_id: String,
    pub gender: Gender,
    pub age_group: AgeGroup,
    pub true_left: LobeClass,
    pub true_right: LobeClass,
    pub pred_left: LobeClass,
    pub pred_right: LobeClass,
    pub true_gland: GlandClass,
    pub pred_gland: GlandClass,
}

const PREDICTION_HEADER: [&str; 10] = [
    "fold",
    "patient_id",
    "gender",
    "age_group",
    "true_left",
    "true_right",
    "pred_left",
    "pred_right",
    "true_gland",
    "pred_gland",
];

pub fn write_predictions_csv(records: &[PredictionRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PREDICTION_HEADER)?;
    for r in records {
        w.write_record([
            r.fold.to_string().as_str(),
            &r.patient_id,
            r.gender.name(),
            r.age_group.name(),
            r.true_left.name(),
            r.true_right.name(),
            r.pred_left.name(),
            r.pred_right.name(),
            r.true_gland.name(),
            r.pred_gland.name(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv(input: impl Read) -> Result<Vec<PredictionRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header != PREDICTION_HEADER {
        return Err(Error::Report(format!("unexpected predictions header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let f = |k: usize| rec.get(k).unwrap_or("");
        let bad = |what: &str, v: &str| Error::Report(format!("row {}: bad {what} {v:?}", i + 1));
        let lobe = |k: usize| f(k).parse::<LobeClass>().map_err(|v| bad(PREDICTION_HEADER[k], &v));
        let gland = |k: usize| f(k).parse::<GlandClass>().map_err(|v| bad(PREDICTION_HEADER[k], &v));
        out.push(PredictionRecord {
            fold: f(0).parse().map_err(|_| bad("fold", f(0)))?,
            patient_id: f(1).to_string(),
            gender: f(2).parse().map_err(|v: String| bad("gender", &v))?,
            age_group: f(3).parse().map_err(|v: String| bad("age_group", &v))?,
            true_left: lobe(4)?,
            true_right: lobe(5)?,
            pred_left: lobe(6)?,
            pred_right: lobe(7)?,
            true_gland: gland(8)?,
            pred_gland: gland(9)?,
        });
    }
    Ok(out)
}

/// `mean ± std` table over the six headline metrics, followed by the
/// matching per-metric variances.
pub fn markdown_table(first_column: &str, rows: &[(String, &RunReport)]) -> String {
    let mut s = String::new();
    let header = |s: &mut String| {
        let _ = write!(s, "| {first_column} |");
        for m in Metric::TABLE {
            let _ = write!(s, " {} |", m.title());
        }
        s.push('\n');
        s.push_str("|---|");
        for _ in Metric::TABLE {
            s.push_str("---|");
        }
        s.push('\n');
    };
    header(&mut s);
    for (label, report) in rows {
        let _ = write!(s, "| {label} |");
        for m in Metric::TABLE {
            match report.get(m) {
                Some(sum) => {
                    let _ = write!(s, " {:.3} ± {:.3} |", sum.mean, sum.std);
                }
                None => s.push_str(" n/a |"),
            }
        }
        s.push('\n');
    }
    s.push_str("\nVariance across folds:\n\n");
    header(&mut s);
    for (label, report) in rows {
        let _ = write!(s, "| {label} |");
        for m in Metric::TABLE {
            match report.get(m) {
                Some(sum) => {
                    let _ = write!(s, " {:.6} |", sum.variance);
                }
                None => s.push_str(" n/a |"),
            }
        }
        s.push('\n');
    }
    s
}
