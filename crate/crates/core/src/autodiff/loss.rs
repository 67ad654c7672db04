use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Dims, Element, Tensor4};

/// How class weights are derived from training labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeightMode {
    Uniform,
    /// `1 / count`, rescaled so the present classes average to 1.
    #[default]
    InverseFrequency,
}

/// Per-class weights for the cross-entropy.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub class_weights: Vec<f64>,
}

impl LossConfig {
    pub fn uniform(classes: usize) -> Self {
        LossConfig {
            class_weights: vec![1.0; classes],
        }
    }

    pub fn new(class_weights: Vec<f64>) -> Result<Self> {
        if class_weights.is_empty() || class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!(
                "class weights must be positive and finite: {class_weights:?}"
            )));
        }
        Ok(LossConfig { class_weights })
    }

    /// Weights from label counts. Classes with no samples get weight 1.
    pub fn from_counts(counts: &[usize], mode: ClassWeightMode) -> Self {
        match mode {
            ClassWeightMode::Uniform => Self::uniform(counts.len()),
            ClassWeightMode::InverseFrequency => {
                let present: Vec<f64> = counts
                    .iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| 1.0 / c as f64)
                    .collect();
                if present.is_empty() {
                    return Self::uniform(counts.len());
                }
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                LossConfig {
                    class_weights: counts
                        .iter()
                        .map(|&c| if c > 0 { 1.0 / c as f64 / mean } else { 1.0 })
                        .collect(),
                }
            }
        }
    }

    pub fn classes(&self) -> usize {
        self.class_weights.len()
    }
}

fn check<T: Element>(logits: &Tensor4<T>, labels: &[usize], cfg: &LossConfig) -> Result<usize> {
    let d = logits.dims();
    if d.h != 1 || d.w != 1 {
        return Err(Error::shape("cce_loss", format!("logits {d} must be [n, 1, 1, C]")));
    }
    if d.c != cfg.classes() {
        return Err(Error::shape(
            "cce_loss",
            format!("{} classes but {} weights", d.c, cfg.classes()),
        ));
    }
    if labels.len() != d.n || d.n == 0 {
        return Err(Error::shape(
            "cce_loss",
            format!("{} labels for batch {}", labels.len(), d.n),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= d.c) {
        return Err(Error::LabelOutOfRange {
            index: bad,
            classes: d.c,
        });
    }
    Ok(d.c)
}

fn log_softmax_row<T: Element>(row: &[T]) -> (f64, Vec<f64>) {
    let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = row.iter().map(|v| v.to_f64() - max).collect();
    let lse = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    (lse, shifted)
}

/// Batch mean of `w[y] * -log softmax(logits)[y]`, via log-sum-exp.
pub fn cce_loss<T: Element>(logits: &Tensor4<T>, labels: &[usize], cfg: &LossConfig) -> Result<f64> {
    let c = check(logits, labels, cfg)?;
    let n = labels.len();
    let total: f64 = logits
        .data()
        .chunks_exact(c)
        .zip(labels)
        .map(|(row, &y)| {
            let (lse, shifted) = log_softmax_row(row);
            cfg.class_weights[y] * (lse - shifted[y])
        })
        .sum();
    Ok(total / n as f64)
}

/// `d loss / d logits = w[y] * (softmax(logits) - onehot(y)) / n`.
pub fn cce_loss_grad<T: Element>(
    logits: &Tensor4<T>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<Tensor4<T>> {
    let c = check(logits, labels, cfg)?;
    let n = labels.len();
    let mut out = Vec::with_capacity(logits.len());
    for (row, &y) in logits.data().chunks_exact(c).zip(labels) {
        let (lse, shifted) = log_softmax_row(row);
        let scale = cfg.class_weights[y] / n as f64;
        for (k, s) in shifted.iter().enumerate() {
            let p = (s - lse).exp();
            let target = if k == y { 1.0 } else { 0.0 };
            out.push(T::from_f64(scale * (p - target)));
        }
    }
    Tensor4::new(Dims::new(n, 1, 1, c), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(rows: &[&[f64]]) -> Tensor4<f64> {
        let c = rows[0].len();
        Tensor4::new([rows.len(), 1, 1, c], rows.concat()).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let l = logits(&[&[0.3; 6]]);
        let loss = cce_loss(&l, &[2], &LossConfig::uniform(6)).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
        assert!((loss - 1.791759).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_logit_gives_tiny_loss() {
        let l = logits(&[&[50.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
        assert!(cce_loss(&l, &[0], &LossConfig::uniform(6)).unwrap() < 1e-6);
    }

    #[test]
    fn weighted_three_class_example() {
        let l = logits(&[&[2.0, 1.0, 0.0]]);
        let cfg = LossConfig::new(vec![3.0, 1.0, 1.0]).unwrap();
        let e = std::f64::consts::E;
        let expected = 3.0 * -(e * e / (e * e + e + 1.0)).ln();
        assert!((cce_loss(&l, &[0], &cfg).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let l = logits(&[&[0.0; 6]]);
        assert!(matches!(
            cce_loss(&l, &[6], &LossConfig::uniform(6)),
            Err(Error::LabelOutOfRange { index: 6, classes: 6 })
        ));
    }

    #[test]
    fn gradient_identity() {
        let l = logits(&[&[1.0, -2.0, 0.5], &[0.0, 0.0, 3.0]]);
        let cfg = LossConfig::new(vec![2.0, 1.0, 0.5]).unwrap();
        let g = cce_loss_grad(&l, &[0, 1], &cfg).unwrap();
        let p = crate::tensor::softmax(&l);
        for (b, &y) in [0usize, 1].iter().enumerate() {
            for k in 0..3 {
                let hot = if k == y { 1.0 } else { 0.0 };
                let want = (p.at(b, 0, 0, k) - hot) * cfg.class_weights[y] / 2.0;
                assert!((g.at(b, 0, 0, k) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn inverse_frequency_weights() {
        let cfg = LossConfig::from_counts(&[10, 20, 0, 40], ClassWeightMode::InverseFrequency);
        let w = &cfg.class_weights;
        assert_eq!(w[2], 1.0);
        let mean = (w[0] + w[1] + w[3]) / 3.0;
        assert!((mean - 1.0).abs() < 1e-12);
        assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
    }
}
