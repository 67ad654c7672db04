//! `history.csv`: `epoch,lr,mean_loss,train_accuracy` (empty accuracy when it
//! was not evaluated).

use std::io::{Read, Write};

use dualscope_core::train::{EpochStats, TrainHistory};
use dualscope_core::{Error, Result};

pub fn write_history_csv(history: &TrainHistory, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "lr", "mean_loss", "train_accuracy"])?;
    for e in &history.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.lr.to_string(),
            e.mean_loss.to_string(),
            e.train_accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv(input: impl Read) -> Result<TrainHistory> {
    let mut r = csv::Reader::from_reader(input);
    let mut epochs = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            let v = rec.get(k).unwrap_or("").trim();
            v.parse().map_err(|_| Error::Report(format!("bad history value {v:?}")))
        };
        let acc = rec.get(3).unwrap_or("").trim();
        epochs.push(EpochStats {
            epoch: num(0)? as usize,
            lr: num(1)?,
            mean_loss: num(2)?,
            train_accuracy: if acc.is_empty() { None } else { Some(num(3)?) },
        });
    }
    Ok(TrainHistory { epochs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let h = TrainHistory {
            epochs: vec![
                EpochStats {
                    epoch: 0,
                    lr: 1e-2,
                    mean_loss: 1.0 / 3.0,
                    train_accuracy: None,
                },
                EpochStats {
                    epoch: 1,
                    lr: 0.1f64.powf(2.3),
                    mean_loss: 0.123456789012345,
                    train_accuracy: Some(0.9375),
                },
            ],
        };
        let mut buf = Vec::new();
        write_history_csv(&h, &mut buf).unwrap();
        assert_eq!(read_history_csv(buf.as_slice()).unwrap(), h);
    }
}
