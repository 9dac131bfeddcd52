use super::ParamStore;

pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
        }
    }

    /// One bias-corrected update over every trainable parameter, consuming
    /// the gradients currently held in the store.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in &mut store.params {
            if !p.trainable {
                continue;
            }
            let n = p.value.len();
            for i in 0..n {
                let g = p.grad.data()[i];
                let m = self.beta1 * p.m.data()[i] + (1.0 - self.beta1) * g;
                let v = self.beta2 * p.v.data()[i] + (1.0 - self.beta2) * g * g;
                p.m.data_mut()[i] = m;
                p.v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                p.value.data_mut()[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn first_step_moves_by_lr_in_sign_direction() {
        // with bias correction the very first update is lr * g/|g| (up to eps)
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::new(&[2], vec![1.0, -2.0]).unwrap(), true).unwrap();
        store.add_grad(p, &Tensor::new(&[2], vec![0.5, -3.0]).unwrap());
        let mut opt = Adam::new(0.01);
        opt.step(&mut store);
        let v = store.value(p).data();
        assert!((v[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((v[1] - (-2.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn zero_grad_is_a_no_op() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::new(&[1], vec![4.0]).unwrap(), true).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(&mut store);
        assert_eq!(store.value(p).data()[0], 4.0);
    }

    #[test]
    fn frozen_params_never_move() {
        let mut store = ParamStore::new();
        let p = store.add("frozen", Tensor::new(&[1], vec![1.5]).unwrap(), false).unwrap();
        store.add_grad(p, &Tensor::new(&[1], vec![10.0]).unwrap());
        let mut opt = Adam::new(0.1);
        opt.step(&mut store);
        assert_eq!(store.value(p).data()[0], 1.5);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut store = ParamStore::new();
        let p = store.add("x", Tensor::new(&[1], vec![5.0]).unwrap(), true).unwrap();
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            store.zero_grads();
            let x = store.value(p).data()[0];
            store.add_grad(p, &Tensor::new(&[1], vec![2.0 * (x - 3.0)]).unwrap());
            opt.step(&mut store);
        }
        assert!((store.value(p).data()[0] - 3.0).abs() < 1e-3);
    }
}
