use crate::autograd::{Element, Parameter};

/// Adam with bias correction; moments are kept in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Applied updates.
    pub step: u64,
    /// Updates refused because a gradient was not finite.
    pub skipped: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// What [`Adam::step`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub applied: bool,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            skipped: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    fn ensure_buffers<T: Element>(&mut self, params: &[&Parameter<T>]) {
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
            self.v = self.m.clone();
        }
    }

    /// One update of the trainable `params` from their accumulated gradients,
    /// after scaling them to global norm `clip` when it is exceeded.
    pub fn step<T: Element>(&mut self, params: &[&Parameter<T>], clip: Option<f64>) -> StepOutcome {
        self.ensure_buffers(params);
        let grads: Vec<Vec<f64>> = params
            .iter()
            .map(|p| match p.tensor.grad() {
                Some(g) => g.iter().map(|v| v.as_f64()).collect(),
                None => vec![0.0; p.tensor.numel()],
            })
            .collect();
        let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            self.skipped += 1;
            return StepOutcome {
                applied: false,
                grad_norm: norm,
                clipped: false,
            };
        }
        let scale = match clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, p) in params.iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let mut data = p.tensor.data_mut();
            for i in 0..data.len() {
                let g = grads[k][i] * scale;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                data[i] = T::from_f64(data[i].as_f64() - self.lr * mh / (vh.sqrt() + self.eps));
            }
        }
        StepOutcome {
            applied: true,
            grad_norm: norm,
            clipped: scale < 1.0,
        }
    }
}
