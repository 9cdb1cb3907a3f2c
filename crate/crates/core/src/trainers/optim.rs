use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        self.m.clear();
        self.v.clear();
        self.t = 0;
    }

    /// One descent step on `params` given `grads`; entries below
    /// `frozen_prefix` are left untouched. The moment estimates restart
    /// whenever the parameter count changes.
    pub fn step<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = f64>,
        len: usize,
        frozen_prefix: usize,
    ) {
        if self.m.len() != len {
            self.m = vec![0.0; len];
            self.v = vec![0.0; len];
            self.t = 0;
        }
        self.t = self.t.saturating_add(1);
        let bc1 = 1.0 - math::powi(self.beta1, self.t);
        let bc2 = 1.0 - math::powi(self.beta2, self.t);
        for (i, (p, g)) in params.zip(grads).enumerate() {
            if i < frozen_prefix {
                continue;
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (math::sqrt(v_hat) + self.epsilon);
        }
    }
}
