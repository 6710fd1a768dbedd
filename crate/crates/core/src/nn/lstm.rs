use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{mat_vec, outer_acc, vec_mat};
use super::{init, sigmoid, tanh_backward, NnError, Params, Tensor};

/// Gate order used for every per-gate array: input, forget, output, candidate.
pub const GATES: [&str; 4] = ["i", "f", "o", "g"];
const I: usize = 0;
const F: usize = 1;
const O: usize = 2;
const G: usize = 3;

/// How the cell state is formed from the gated sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellMode {
    /// `C_t = f ⊙ C_{t−1} + i ⊙ C̃`
    #[default]
    Standard,
    /// `C_t = sigmoid(f ⊙ C_{t−1} + i ⊙ C̃)`, the literal published variant.
    Paper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// One LSTM cell with separate input (U), recurrent (W) and bias arrays per gate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// Per gate [input, hidden].
    pub u: [Tensor; 4],
    /// Per gate [hidden, hidden].
    pub w: [Tensor; 4],
    /// Per gate [hidden].
    pub b: [Tensor; 4],
    pub mode: CellMode,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; 4],
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Forward activations of a sequence run, consumed by [`LstmCell::backward`].
#[derive(Debug, Clone, Default)]
pub struct LstmCache {
    steps: Vec<StepCache>,
}

impl LstmCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            u: std::array::from_fn(|_| Tensor::zeros(&[input, hidden])),
            w: std::array::from_fn(|_| Tensor::zeros(&[hidden, hidden])),
            b: std::array::from_fn(|_| Tensor::zeros(&[hidden])),
            mode: CellMode::Standard,
        }
    }

    /// Glorot-uniform weights, zero biases except forget-gate bias 1.
    pub fn glorot<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(input, hidden);
        for k in 0..4 {
            cell.u[k] = init::glorot_uniform(&[input, hidden], input, hidden, rng);
            cell.w[k] = init::glorot_uniform(&[hidden, hidden], hidden, hidden, rng);
        }
        cell.b[F].fill(1.0);
        cell
    }

    pub fn input_dim(&self) -> usize {
        self.u[0].dim(0)
    }

    pub fn hidden(&self) -> usize {
        self.w[0].dim(0)
    }

    fn check(&self, x: &[f64], state: &LstmState) -> Result<(), NnError> {
        let h = self.hidden();
        if x.len() != self.input_dim() || state.h.len() != h || state.c.len() != h {
            return Err(NnError::ShapeMismatch(format!(
                "lstm step expects x[{}], h[{h}], c[{h}]; got x[{}], h[{}], c[{}]",
                self.input_dim(),
                x.len(),
                state.h.len(),
                state.c.len()
            )));
        }
        Ok(())
    }

    fn step_cached(&self, x: &[f64], prev: &LstmState) -> StepCache {
        let h = self.hidden();
        let gates: [Vec<f64>; 4] = std::array::from_fn(|k| {
            let mut a = self.b[k].data().to_vec();
            vec_mat(x, self.u[k].data(), h, &mut a);
            vec_mat(&prev.h, self.w[k].data(), h, &mut a);
            if k == G {
                a.iter().map(|v| v.tanh()).collect()
            } else {
                a.iter().map(|&v| sigmoid(v)).collect()
            }
        });
        let c: Vec<f64> = (0..h)
            .map(|j| {
                let s = gates[F][j] * prev.c[j] + gates[I][j] * gates[G][j];
                match self.mode {
                    CellMode::Standard => s,
                    CellMode::Paper => sigmoid(s),
                }
            })
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        StepCache {
            x: x.to_vec(),
            h_prev: prev.h.clone(),
            c_prev: prev.c.clone(),
            gates,
            c,
            tanh_c,
        }
    }

    /// One recurrence step.
    pub fn step(&self, x: &[f64], prev: &LstmState) -> Result<LstmState, NnError> {
        self.check(x, prev)?;
        let s = self.step_cached(x, prev);
        let h = s.tanh_c.iter().zip(&s.gates[O]).map(|(t, o)| t * o).collect();
        Ok(LstmState { h, c: s.c })
    }

    /// Runs the cell over `xs` from a zero state, keeping activations.
    pub fn run<X: AsRef<[f64]>>(&self, xs: &[X]) -> Result<(LstmState, LstmCache), NnError> {
        let mut state = LstmState::zeros(self.hidden());
        let mut cache = LstmCache::default();
        for x in xs {
            let x = x.as_ref();
            self.check(x, &state)?;
            let s = self.step_cached(x, &state);
            state = LstmState {
                h: s.tanh_c.iter().zip(&s.gates[O]).map(|(t, o)| t * o).collect(),
                c: s.c.clone(),
            };
            cache.steps.push(s);
        }
        Ok((state, cache))
    }

    /// Backpropagates a gradient on the final hidden state through the run.
    ///
    /// `truncate` limits how many trailing steps receive gradient. Returns
    /// parameter gradients (in [`Params`] order) and per-step input gradients
    /// (zero for steps outside the truncation window).
    pub fn backward(&self, cache: &LstmCache, dh_last: &[f64], truncate: Option<usize>) -> (Vec<Tensor>, Vec<Vec<f64>>) {
        let h = self.hidden();
        let d = self.input_dim();
        let mut grads: Vec<Tensor> = self.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut dxs = vec![vec![0.0; d]; cache.steps.len()];
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h];
        let window = truncate.unwrap_or(usize::MAX);
        for (t, s) in cache.steps.iter().enumerate().rev().take(window) {
            let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
            let mut dc_prev = vec![0.0; h];
            for j in 0..h {
                let (i, f, o, g) = (s.gates[I][j], s.gates[F][j], s.gates[O][j], s.gates[G][j]);
                let d_o = dh[j] * s.tanh_c[j];
                let dct = dc[j] + dh[j] * o * tanh_backward(s.tanh_c[j]);
                let ds = match self.mode {
                    CellMode::Standard => dct,
                    CellMode::Paper => dct * s.c[j] * (1.0 - s.c[j]),
                };
                da[I][j] = ds * g * i * (1.0 - i);
                da[F][j] = ds * s.c_prev[j] * f * (1.0 - f);
                da[O][j] = d_o * o * (1.0 - o);
                da[G][j] = ds * i * tanh_backward(g);
                dc_prev[j] = ds * f;
            }
            let mut dh_prev = vec![0.0; h];
            for k in 0..4 {
                outer_acc(&s.x, &da[k], grads[k].data_mut());
                outer_acc(&s.h_prev, &da[k], grads[4 + k].data_mut());
                grads[8 + k].data_mut().iter_mut().zip(&da[k]).for_each(|(a, b)| *a += b);
                mat_vec(self.u[k].data(), &da[k], &mut dxs[t]);
                mat_vec(self.w[k].data(), &da[k], &mut dh_prev);
            }
            dh = dh_prev;
            dc = dc_prev;
        }
        (grads, dxs)
    }
}

impl Params for LstmCell {
    fn params(&self) -> Vec<&Tensor> {
        self.u.iter().chain(&self.w).chain(&self.b).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.u.iter_mut().chain(self.w.iter_mut()).chain(self.b.iter_mut()).collect()
    }
}
