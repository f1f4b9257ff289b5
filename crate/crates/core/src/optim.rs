// SPDX-License-Identifier: MIT OR Apache-2.0

//! Adam optimizer over flat `f32` buffers.

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay applied as `p -= lr * weight_decay * p`.
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    /// Standard moment decay rates (0.9, 0.999) and epsilon 1e-8.
    pub fn new(learning_rate: f64, len: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update of `params` against `grads`.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        self.step_chunks([(params, grads)]);
    }

    /// One update over several tensors laid end to end in moment storage.
    pub fn step_chunks<'a>(&mut self, chunks: impl IntoIterator<Item = (&'a mut [f32], &'a [f32])>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let mut offset = 0;
        for (params, grads) in chunks {
            assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
            let m = &mut self.m[offset..offset + params.len()];
            let v = &mut self.v[offset..offset + params.len()];
            for i in 0..params.len() {
                let g = grads[i] as f64;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let p = params[i] as f64;
                let update = self.learning_rate * ((m[i] / bc1) / ((v[i] / bc2).sqrt() + self.epsilon) + self.weight_decay * p);
                params[i] = (p - update) as f32;
            }
            offset += params.len();
        }
        assert_eq!(offset, self.m.len(), "moment storage does not match parameter count");
    }
}
