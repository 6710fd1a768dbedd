use rand::Rng;

use super::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the layer's pre-activation input.
pub fn relu_backward(pre: &Tensor, dout: &Tensor) -> Tensor {
    let mut dx = dout.clone();
    for (d, &p) in dx.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// d tanh given the tanh output `y`.
pub fn tanh_backward(y: f64) -> f64 {
    1.0 - y * y
}

/// Max-shifted softmax of one vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax along the last axis of a 2-D tensor.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let cols = x.dim(x.shape().len() - 1);
    let data: Vec<f64> = x.data().chunks(cols).flat_map(softmax).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Inverted-dropout keep mask: each entry is 0 with probability `rate`,
/// else 1/(1−rate).
pub fn dropout_mask<R: Rng + ?Sized>(shape: &[usize], rate: f64, rng: &mut R) -> Tensor {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    let mut m = Tensor::zeros(shape);
    let keep = 1.0 / (1.0 - rate);
    for v in m.data_mut() {
        *v = if rate > 0.0 && rng.gen::<f64>() < rate { 0.0 } else { keep };
    }
    m
}

/// Inverted dropout; identity at inference or when `rate` is 0.
/// Returns the mask that was applied during training.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, rng: &mut R, training: bool) -> (Tensor, Option<Tensor>) {
    if !training || rate == 0.0 {
        return (x.clone(), None);
    }
    let mask = dropout_mask(x.shape(), rate, rng);
    let mut y = x.clone();
    y.data_mut().iter_mut().zip(mask.data()).for_each(|(a, m)| *a *= m);
    (y, Some(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_clamps() {
        assert_eq!(relu(&Tensor::from_vec(vec![-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_uniform_and_stable() {
        for p in softmax(&[0.0; 5]) {
            assert!((p - 0.2).abs() < 1e-15);
        }
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0);
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(dropout(&x, 0.0, &mut rng, true).0, x);
        assert_eq!(dropout(&x, 0.0, &mut rng, false).0, x);
        assert_eq!(dropout(&x, 0.5, &mut rng, false).0, x);
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::filled(&[10_000], 1.0);
        let (y, _) = dropout(&x, 0.5, &mut rng, true);
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let mean = y.data().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }
}
