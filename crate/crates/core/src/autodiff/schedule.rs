use serde::{Deserialize, Serialize};

/// Geometric decay from `warm_lr` to `fixed_lr` over `decay_epochs`, then
/// constant at `fixed_lr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrSchedule {
    pub warm_lr: f64,
    pub fixed_lr: f64,
    pub decay_epochs: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            warm_lr: 1e-2,
            fixed_lr: 1e-5,
            decay_epochs: 10,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        let decay = self.decay_epochs.max(1);
        if epoch >= decay {
            return self.fixed_lr;
        }
        let t = epoch as f64 / decay as f64;
        self.warm_lr * (self.fixed_lr / self.warm_lr).powf(t)
    }
}
