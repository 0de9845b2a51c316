use crate::tensor::{Scalar, Tensor};

/// Adam with bias correction and a constant learning rate. Moments are kept
/// in f64 regardless of the parameter precision.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(lr: f64, params: &[Tensor<T>]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step<T: Scalar>(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (x, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gj = gj.to_f64c();
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let update = self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
                *x = T::from_f64c(x.to_f64c() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![Tensor::<f64>::from_f64(vec![3], &[1.0, -2.0, 0.5]).unwrap()];
        let g = vec![Tensor::<f64>::from_f64(vec![3], &[0.3, -4.0, 0.0]).unwrap()];
        let mut opt = Adam::new(0.1, &p);
        opt.step(&mut p, &g);
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let expect = [1.0 - 0.1 * 0.3 / (0.3 + 1e-8), -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 0.5];
        for (a, b) in p[0].data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![Tensor::<f64>::from_f64(vec![2], &[3.0, -1.0]).unwrap()];
        let mut opt = Adam::new(0.05, &p);
        for _ in 0..2000 {
            let g = p[0].map(|x| 2.0 * (x - 0.5));
            opt.step(&mut p, &[g]);
        }
        assert!(p[0].data().iter().all(|x| (x - 0.5).abs() < 1e-3));
        assert_eq!(opt.steps(), 2000);
    }
}
