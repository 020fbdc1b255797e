//! First/second-moment adaptive optimizer with bias correction, the
//! convention splatting training pipelines build on.

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, epsilon: f64, size: usize) -> Self {
        Self { lr, beta1, beta2, epsilon, t: 0, m: vec![0.0; size], v: vec![0.0; size] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // With bias correction, the first update is lr * g / (|g| + eps).
        let mut adam = Adam::new(0.01, 0.9, 0.999, 1e-8, 1);
        let mut p = vec![1.0];
        adam.step(&mut p, &[0.5]);
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-6);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut adam = Adam::new(0.05, 0.9, 0.999, 1e-8, 1);
        let mut p = vec![3.0];
        for _ in 0..500 {
            let g = 2.0 * p[0];
            adam.step(&mut p, &[g]);
        }
        assert!(p[0].abs() < 0.05, "did not converge: {}", p[0]);
    }

    #[test]
    fn zero_gradient_with_zero_state_is_a_fixed_point() {
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8, 2);
        let mut p = vec![1.0, -2.0];
        adam.step(&mut p, &[0.0, 0.0]);
        assert_eq!(p, vec![1.0, -2.0]);
    }
}
