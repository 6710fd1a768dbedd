use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::check_shape;
use super::{init, NnError, Params, Tensor};

pub const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

impl Padding {
    pub fn output_side(self, side: usize) -> usize {
        match self {
            Padding::Valid => side.saturating_sub(KERNEL - 1),
            Padding::Same => side,
        }
    }

    fn offset(self) -> isize {
        match self {
            Padding::Valid => 0,
            Padding::Same => 1,
        }
    }
}

impl std::str::FromStr for Padding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            _ => Err(format!("unknown padding {s:?} (valid|same)")),
        }
    }
}

/// 3×3 stride-1 convolution over NHWC input.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// [3, 3, in_ch, out_ch]
    pub kernel: Tensor,
    /// [out_ch]
    pub bias: Tensor,
    pub padding: Padding,
}

impl Conv2d {
    pub fn zeros(in_ch: usize, out_ch: usize, padding: Padding) -> Self {
        Self {
            kernel: Tensor::zeros(&[KERNEL, KERNEL, in_ch, out_ch]),
            bias: Tensor::zeros(&[out_ch]),
            padding,
        }
    }

    pub fn he<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, padding: Padding, rng: &mut R) -> Self {
        Self {
            kernel: init::he_uniform(&[KERNEL, KERNEL, in_ch, out_ch], KERNEL * KERNEL * in_ch, rng),
            bias: Tensor::zeros(&[out_ch]),
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.dim(2)
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.dim(3)
    }

    fn geometry(&self, x: &Tensor) -> Result<(usize, usize, usize, usize, usize), NnError> {
        if x.shape().len() != 4 || x.dim(3) != self.in_channels() {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d expects [N,H,W,{}], got {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        let (n, h, w) = (x.dim(0), x.dim(1), x.dim(2));
        if self.padding == Padding::Valid && (h < KERNEL || w < KERNEL) {
            return Err(NnError::ShapeMismatch(format!("valid conv2d needs H, W >= 3, got {h}x{w}")));
        }
        Ok((n, h, w, self.padding.output_side(h), self.padding.output_side(w)))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (n, h, w, oh, ow) = self.geometry(x)?;
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let off = self.padding.offset();
        let k = self.kernel.data();
        let xd = x.data();
        let mut out = Tensor::zeros(&[n, oh, ow, cout]);
        let od = out.data_mut();
        for b in 0..n {
            for i in 0..oh {
                for j in 0..ow {
                    let o = &mut od[((b * oh + i) * ow + j) * cout..][..cout];
                    o.copy_from_slice(self.bias.data());
                    for ky in 0..KERNEL {
                        let yi = i as isize + ky as isize - off;
                        if yi < 0 || yi >= h as isize {
                            continue;
                        }
                        for kx in 0..KERNEL {
                            let xj = j as isize + kx as isize - off;
                            if xj < 0 || xj >= w as isize {
                                continue;
                            }
                            let px = &xd[((b * h + yi as usize) * w + xj as usize) * cin..][..cin];
                            let kk = &k[(ky * KERNEL + kx) * cin * cout..][..cin * cout];
                            for (ci, &xv) in px.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                for (ov, &kv) in o.iter_mut().zip(&kk[ci * cout..(ci + 1) * cout]) {
                                    *ov += xv * kv;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Returns `(dx, [dkernel, dbias])` for upstream gradient `dout`.
    pub fn backward(&self, x: &Tensor, dout: &Tensor) -> Result<(Tensor, Vec<Tensor>), NnError> {
        let (n, h, w, oh, ow) = self.geometry(x)?;
        let (cin, cout) = (self.in_channels(), self.out_channels());
        check_shape("conv2d dout", dout.shape(), &[n, oh, ow, cout])?;
        let off = self.padding.offset();
        let k = self.kernel.data();
        let xd = x.data();
        let dd = dout.data();
        let mut dx = Tensor::zeros(x.shape());
        let mut dk = Tensor::zeros(self.kernel.shape());
        let mut db = Tensor::zeros(self.bias.shape());
        {
            let dxd = dx.data_mut();
            let dkd = dk.data_mut();
            let dbd = db.data_mut();
            for b in 0..n {
                for i in 0..oh {
                    for j in 0..ow {
                        let g = &dd[((b * oh + i) * ow + j) * cout..][..cout];
                        for (acc, &gv) in dbd.iter_mut().zip(g) {
                            *acc += gv;
                        }
                        for ky in 0..KERNEL {
                            let yi = i as isize + ky as isize - off;
                            if yi < 0 || yi >= h as isize {
                                continue;
                            }
                            for kx in 0..KERNEL {
                                let xj = j as isize + kx as isize - off;
                                if xj < 0 || xj >= w as isize {
                                    continue;
                                }
                                let base = ((b * h + yi as usize) * w + xj as usize) * cin;
                                let kbase = (ky * KERNEL + kx) * cin * cout;
                                for ci in 0..cin {
                                    let xv = xd[base + ci];
                                    let krow = &k[kbase + ci * cout..][..cout];
                                    let dkrow = &mut dkd[kbase + ci * cout..][..cout];
                                    let mut acc = 0.0;
                                    for co in 0..cout {
                                        dkrow[co] += xv * g[co];
                                        acc += krow[co] * g[co];
                                    }
                                    dxd[base + ci] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((dx, vec![dk, db]))
    }
}

impl Params for Conv2d {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.bias]
    }
}
