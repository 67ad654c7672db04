use serde::{Deserialize, Serialize};

use super::params::{ParamStore, Parameter};
use crate::tensor::{Element, Tensor4};

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Adam {
    /// Applies one update from `param.grad` and increments its step count.
    pub fn step<T: Element>(&self, param: &mut Parameter<T>, lr: f64) {
        param.step_count += 1;
        let t = param.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let dims = param.value.dims();
        let len = dims.len();
        let mut value = Vec::with_capacity(len);
        let mut m = Vec::with_capacity(len);
        let mut v = Vec::with_capacity(len);
        for i in 0..len {
            let g = param.grad.data()[i].to_f64();
            let mi = self.beta1 * param.adam_m.data()[i].to_f64() + (1.0 - self.beta1) * g;
            let vi = self.beta2 * param.adam_v.data()[i].to_f64() + (1.0 - self.beta2) * g * g;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let x = param.value.data()[i].to_f64() - lr * m_hat / (v_hat.sqrt() + self.epsilon);
            value.push(T::from_f64(x));
            m.push(T::from_f64(mi));
            v.push(T::from_f64(vi));
        }
        param.value = Tensor4::new(dims, value).expect("same dims");
        param.adam_m = Tensor4::new(dims, m).expect("same dims");
        param.adam_v = Tensor4::new(dims, v).expect("same dims");
    }

    pub fn step_all<T: Element>(&self, params: &mut ParamStore<T>, lr: f64) {
        for p in params.iter_mut() {
            self.step(p, lr);
        }
    }
}
