/// Adam with bias correction, operating on a flat slice.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Self { lr, beta1: betas.0, beta2: betas.1, eps, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Moves `x` against `grad` (or along it when `ascend`).
    pub fn step(&mut self, x: &mut [f64], grad: &[f64], ascend: bool) {
        debug_assert_eq!(x.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let sign = if ascend { 1.0 } else { -1.0 };
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] += sign * self.lr * mh / (vh.sqrt() + self.eps);
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.t as usize
    }
}
