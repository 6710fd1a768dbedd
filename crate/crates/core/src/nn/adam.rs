use serde::{Deserialize, Serialize};

use super::tensor::check_shape;
use super::{NnError, Params, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam with bias correction. Moment buffers follow the parameter order of
/// the model the optimizer was created for.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new<P: Params + ?Sized>(config: AdamConfig, model: &P) -> Self {
        let m: Vec<Tensor> = model.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn update<P: Params + ?Sized>(&mut self, model: &mut P, grads: &[Tensor]) -> Result<(), NnError> {
        self.apply(model.params_mut(), grads)
    }

    /// One optimizer step over `params` (in the order the state was built for).
    pub fn apply(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<(), NnError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(NnError::ShapeMismatch(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            check_shape("adam grad", g.shape(), p.shape())?;
            check_shape("adam moment", m.shape(), p.shape())?;
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let mh = md[i] / c1;
                let vh = vd[i] / c2;
                pd[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(Tensor);

    impl Params for Scalar {
        fn params(&self) -> Vec<&Tensor> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = Scalar(Tensor::from_vec(vec![1.0, -2.0]));
        let mut opt = Adam::new(AdamConfig::default(), &s);
        for _ in 0..3 {
            opt.update(&mut s, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(s.0.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = Scalar(Tensor::from_vec(vec![1.0]));
        let mut opt = Adam::new(AdamConfig::default(), &s);
        opt.update(&mut s, &[Tensor::from_vec(vec![1.0])]).unwrap();
        assert!((s.0.data()[0] - (1.0 - 0.001)).abs() < 1e-10);
    }

    #[test]
    fn shape_checked() {
        let mut s = Scalar(Tensor::from_vec(vec![1.0]));
        let mut opt = Adam::new(AdamConfig::default(), &s);
        assert!(opt.update(&mut s, &[Tensor::zeros(&[2])]).is_err());
    }
}
