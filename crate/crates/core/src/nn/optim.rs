use super::layers::Param;
use super::tensor::Scalar;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update from the accumulated gradients. `params` must come
    /// in the same order on every call.
    pub fn step(&mut self, params: Vec<&mut Param<T>>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "adam: parameter list changed");
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let lr_t = T::of(self.lr * c2.sqrt() / c1);
        let eps_t = T::of(self.eps * c2.sqrt());
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), mi), vi) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                *w = *w - lr_t * *mi / (vi.sqrt() + eps_t);
            }
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut p = Param {
            value: vec![1.0f64, -2.0, 0.5],
            grad: vec![0.3, -4.0, 0.0],
        };
        let mut opt = Adam::new(0.01);
        opt.step(vec![&mut p]);
        assert!((p.value[0] - 0.99).abs() < 1e-9);
        assert!((p.value[1] + 1.99).abs() < 1e-9);
        assert_eq!(p.value[2], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param {
            value: vec![3.0f64, -1.0],
            grad: vec![0.0; 2],
        };
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            p.grad = p.value.iter().map(|w| 2.0 * (w - 0.5)).collect();
            opt.step(vec![&mut p]);
        }
        assert!(p.value.iter().all(|w| (w - 0.5).abs() < 1e-3));
        assert_eq!(opt.steps(), 2000);
    }
}
