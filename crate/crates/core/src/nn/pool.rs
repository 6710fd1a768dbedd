use super::tensor::check_shape;
use super::{NnError, Tensor};

/// 2×2 stride-2 max pooling over NHWC input; odd trailing rows/columns are
/// dropped. Returns the output and, per output element, the flat input index
/// of the first (row-major) maximum in its window.
pub fn maxpool2_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>), NnError> {
    if x.shape().len() != 4 || x.dim(1) < 2 || x.dim(2) < 2 {
        return Err(NnError::ShapeMismatch(format!(
            "maxpool2 expects [N,H>=2,W>=2,C], got {:?}",
            x.shape()
        )));
    }
    let (n, h, w, c) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let mut argmax = vec![0usize; n * oh * ow * c];
    let od = out.data_mut();
    for b in 0..n {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((b * h + 2 * i + dy) * w + 2 * j + dx) * c + ch;
                        if best == usize::MAX || xd[idx] > best_v {
                            best = idx;
                            best_v = xd[idx];
                        }
                    }
                    let o = ((b * oh + i) * ow + j) * c + ch;
                    od[o] = best_v;
                    argmax[o] = best;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2_backward(dout: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor, NnError> {
    if dout.len() != argmax.len() {
        return Err(NnError::ShapeMismatch(format!(
            "maxpool2 backward: {} gradients for {} argmax entries",
            dout.len(),
            argmax.len()
        )));
    }
    check_shape(
        "maxpool2 dout",
        dout.shape(),
        &[input_shape[0], input_shape[1] / 2, input_shape[2] / 2, input_shape[3]],
    )?;
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (&g, &i) in dout.data().iter().zip(argmax) {
        dxd[i] += g;
    }
    Ok(dx)
}
