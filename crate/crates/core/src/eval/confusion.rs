use crate::error::{Error, Result};

/// `C × C` counts; rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

/// One class against the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OneVsRest {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::shape("ConfusionMatrix::from_rows", "matrix is not square"));
        }
        Ok(ConfusionMatrix {
            classes: c,
            counts: rows.concat(),
        })
    }

    pub fn from_pairs(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape(
                "ConfusionMatrix::from_pairs",
                format!("{} truths, {} predictions", truth.len(), predicted.len()),
            ));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let c = self.classes;
        if let Some(&bad) = [truth, predicted].iter().find(|&&k| k >= c) {
            return Err(Error::LabelOutOfRange { index: bad, classes: c });
        }
        self.counts[truth * c + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(|r| r.to_vec()).collect()
    }
}

/// TP/TN/FP/FN for `class` treated as the positive class.
pub fn one_vs_rest_counts(cm: &ConfusionMatrix, class: usize) -> OneVsRest {
    let tp = cm.get(class, class);
    let fp = cm.col_sum(class) - tp;
    let fn_ = cm.row_sum(class) - tp;
    let tn = cm.total() - tp - fp - fn_;
    OneVsRest { tp, tn, fp, fn_ }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_three_class_example() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 1, 0], vec![2, 3, 1], vec![0, 0, 4]]).unwrap();
        let c0 = one_vs_rest_counts(&cm, 0);
        assert_eq!((c0.tp, c0.fp, c0.fn_, c0.tn), (5, 2, 1, 8));
    }

    #[test]
    fn diagonal_has_no_errors() {
        let cm = ConfusionMatrix::from_pairs(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        for c in 0..3 {
            let r = one_vs_rest_counts(&cm, c);
            assert_eq!((r.fp, r.fn_), (0, 0));
        }
    }

    #[test]
    fn single_correct_sample() {
        let cm = ConfusionMatrix::from_pairs(&[1], &[1], 4).unwrap();
        let r = one_vs_rest_counts(&cm, 1);
        assert_eq!((r.tp, r.tn), (1, 0));
    }

    #[test]
    fn out_of_range_label() {
        assert!(ConfusionMatrix::from_pairs(&[3], &[0], 3).is_err());
    }
}
