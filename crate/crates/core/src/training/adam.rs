use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Moment estimates for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &[Tensor<f32>]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }
}

impl Adam {
    /// Bias-corrected Adam update. Fails without touching anything if the
    /// shapes disagree or any gradient entry is non-finite. A step whose
    /// gradients are all exactly zero only decays the moments.
    pub fn step(&self, params: &mut [Tensor<f32>], grads: &[Tensor<f32>], state: &mut AdamState) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.m.len() {
            return Err(Error::Shape(format!(
                "adam: {} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                state.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
                return Err(Error::Shape(format!("adam: parameter {i} is {} but gradient is {}", p.shape(), g.shape())));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {i}")));
            }
        }
        state.step += 1;
        let t = state.step as i32;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step_size = (self.lr / c1) as f32;
        let c2_sqrt = c2.sqrt() as f32;
        let eps = self.epsilon as f32;
        let all_zero = grads.iter().all(|g| g.data().iter().all(|&x| x == 0.0));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for k in 0..pd.len() {
                let gk = gd[k];
                md[k] = b1 * md[k] + (1.0 - b1) * gk;
                vd[k] = b2 * vd[k] + (1.0 - b2) * gk * gk;
                if !all_zero {
                    pd[k] -= step_size * md[k] / (vd[k].sqrt() / c2_sqrt + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn adam() -> Adam {
        Adam {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    fn t(v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(Shape::new(1, 1, 1, v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![t(&[1.0, -2.0])];
        let mut s = AdamState::new(&p);
        s.m[0] = t(&[0.5, 0.5]);
        s.v[0] = t(&[0.25, 0.25]);
        let before = p.clone();
        adam().step(&mut p, &[t(&[0.0, 0.0])], &mut s).unwrap();
        assert_eq!(s.step, 1);
        assert_eq!(p, before);
        assert!(s.m[0].data().iter().all(|&m| (m - 0.45).abs() < 1e-7));
        assert!(s.v[0].data().iter().all(|&v| (v - 0.24975).abs() < 1e-7));
    }

    #[test]
    fn first_step_by_hand() {
        // m = 0.1 g, v = 0.001 g^2; after bias correction m/sqrt(v) = sign(g)
        // up to epsilon, so the step is lr * g / (|g| + eps').
        for g in [3.0f32, -0.02, 1e-4] {
            let mut p = vec![t(&[0.5])];
            let mut s = AdamState::new(&p);
            adam().step(&mut p, &[t(&[g])], &mut s).unwrap();
            let m_hat = 0.1 * g as f64 / (1.0 - 0.9);
            let v_hat = 0.001 * (g as f64).powi(2) / (1.0 - 0.999);
            let want = 0.5 - 1e-2 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((p[0].data()[0] as f64 - want).abs() < 1e-6, "g = {g}");
        }
    }

    #[test]
    fn rejects_non_finite_and_mismatches() {
        let mut p = vec![t(&[1.0])];
        let mut s = AdamState::new(&p);
        assert!(adam().step(&mut p, &[t(&[f32::NAN])], &mut s).is_err());
        assert!(adam().step(&mut p, &[t(&[1.0, 2.0])], &mut s).is_err());
        assert_eq!(s.step, 0);
        assert_eq!(p[0].data(), &[1.0]);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = vec![t(&[0.3, -0.7, 1.1])];
            let mut s = AdamState::new(&p);
            for k in 0..50 {
                let g: Vec<f32> = p[0].data().iter().map(|x| 2.0 * x + (k as f32).sin()).collect();
                adam().step(&mut p, &[t(&g)], &mut s).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a[0].data().iter().zip(b[0].data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
