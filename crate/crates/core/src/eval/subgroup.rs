use std::collections::BTreeMap;

use super::confusion::ConfusionMatrix;
use super::metrics::{aggregate, FoldReport, RunReport};
use super::report::PredictionRecord;
use crate::data::{AgeGroup, Gender};
use crate::error::Result;
use crate::labelfuse::NUM_GLAND_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attribute {
    Gender,
    AgeGroup,
}

impl std::str::FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "gender" => Ok(Attribute::Gender),
            "age_group" | "age" => Ok(Attribute::AgeGroup),
            other => Err(format!("unknown attribute {other:?} (gender | age_group)")),
        }
    }
}

impl Attribute {
    /// Groups always reported (or noticed when empty), in display order.
    fn named_groups(self) -> Vec<&'static str> {
        match self {
            Attribute::Gender => vec![Gender::Female.name(), Gender::Male.name()],
            Attribute::AgeGroup => AgeGroup::BANDS.iter().map(|b| b.name()).collect(),
        }
    }

    fn value(self, r: &PredictionRecord) -> &'static str {
        match self {
            Attribute::Gender => r.gender.name(),
            Attribute::AgeGroup => r.age_group.name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupResult {
    pub group: String,
    pub samples: usize,
    pub report: RunReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupReport {
    pub groups: Vec<GroupResult>,
    /// Empty groups that were skipped.
    pub notices: Vec<String>,
}

/// Splits held-out predictions by `attribute` and evaluates each group per
/// fold (folds where the group has no patients are left out), then
/// aggregates across folds.
pub fn subgroup_eval(records: &[PredictionRecord], attribute: Attribute) -> Result<SubgroupReport> {
    let mut groups = attribute.named_groups();
    if records.iter().any(|r| attribute.value(r) == "unknown") {
        groups.push("unknown");
    }
    let mut out = SubgroupReport {
        groups: Vec::new(),
        notices: Vec::new(),
    };
    for group in groups {
        let mut by_fold: BTreeMap<usize, ConfusionMatrix> = BTreeMap::new();
        let mut samples = 0;
        for r in records.iter().filter(|r| attribute.value(r) == group) {
            by_fold
                .entry(r.fold)
                .or_insert_with(|| ConfusionMatrix::new(NUM_GLAND_CLASSES))
                .record(r.true_gland.code(), r.pred_gland.code())?;
            samples += 1;
        }
        if samples == 0 {
            out.notices.push(format!("group {group} has no samples; skipped"));
            continue;
        }
        let folds = by_fold
            .into_iter()
            .map(|(fold, cm)| FoldReport::new(fold, cm))
            .collect();
        out.groups.push(GroupResult {
            group: group.to_string(),
            samples,
            report: aggregate(folds)?,
        });
    }
    Ok(out)
}
