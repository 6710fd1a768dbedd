use rand::Rng;

use super::tensor::{mat_vec, outer_acc, vec_mat};
use super::{init, NnError, Params, Tensor};

/// Affine map `y = x W + b` over rows of a [N, in] input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// [in, out]
    pub weight: Tensor,
    /// [out]
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn he<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: init::he_uniform(&[input, output], input, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: init::glorot_uniform(&[input, output], input, output, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn output_dim(&self) -> usize {
        self.weight.dim(1)
    }

    fn rows(&self, x: &Tensor) -> Result<usize, NnError> {
        let d = self.input_dim();
        if x.is_empty() && x.shape().first() == Some(&0) {
            return Ok(0);
        }
        if x.shape().last() != Some(&d) || x.len() % d != 0 {
            return Err(NnError::ShapeMismatch(format!(
                "dense expects [N,{d}], got {:?}",
                x.shape()
            )));
        }
        Ok(x.len() / d)
    }

    /// Single row-vector forward.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.data().to_vec();
        vec_mat(x, self.weight.data(), self.output_dim(), &mut y);
        y
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let n = self.rows(x)?;
        let (d, m) = (self.input_dim(), self.output_dim());
        let mut out = Vec::with_capacity(n * m);
        for r in 0..n {
            out.extend(self.apply(&x.data()[r * d..(r + 1) * d]));
        }
        Tensor::new(vec![n, m], out)
    }

    /// Returns `(dx, [dweight, dbias])`; `dx` has the shape of `x`.
    pub fn backward(&self, x: &Tensor, dout: &Tensor) -> Result<(Tensor, Vec<Tensor>), NnError> {
        let n = self.rows(x)?;
        let (d, m) = (self.input_dim(), self.output_dim());
        if dout.len() != n * m {
            return Err(NnError::ShapeMismatch(format!(
                "dense dout expects [{n},{m}], got {:?}",
                dout.shape()
            )));
        }
        let mut dx = Tensor::zeros(x.shape());
        let mut dw = Tensor::zeros(self.weight.shape());
        let mut db = Tensor::zeros(self.bias.shape());
        for r in 0..n {
            let xr = &x.data()[r * d..(r + 1) * d];
            let g = &dout.data()[r * m..(r + 1) * m];
            outer_acc(xr, g, dw.data_mut());
            db.data_mut().iter_mut().zip(g).for_each(|(a, b)| *a += b);
            mat_vec(self.weight.data(), g, &mut dx.data_mut()[r * d..(r + 1) * d]);
        }
        Ok((dx, vec![dw, db]))
    }

    /// Backward for a single row; accumulates into `grads` and returns dx.
    pub fn backward_row(&self, x: &[f64], g: &[f64], grads: &mut [Tensor]) -> Vec<f64> {
        outer_acc(x, g, grads[0].data_mut());
        grads[1].data_mut().iter_mut().zip(g).for_each(|(a, b)| *a += b);
        let mut dx = vec![0.0; x.len()];
        mat_vec(self.weight.data(), g, &mut dx);
        dx
    }
}

impl Params for Dense {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = Dense::he(4, 3, &mut rng);
        d.bias = init::uniform(&[3], 1.0, &mut rng);
        let x = init::uniform(&[2, 4], 1.0, &mut rng);
        let y = d.forward(&x).unwrap();
        for r in 0..2 {
            for o in 0..3 {
                let mut s = d.bias.data()[o];
                for i in 0..4 {
                    s += x.data()[r * 4 + i] * d.weight.data()[i * 3 + o];
                }
                assert!((y.data()[r * 3 + o] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_wrong_width() {
        assert!(Dense::zeros(4, 2).forward(&Tensor::zeros(&[2, 3])).is_err());
    }
}
