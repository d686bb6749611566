//! Stacked LSTM layers with explicit backpropagation through time.
//!
//! Gate rows are laid out `[input, forget, cell, output]`, each `hidden`
//! wide, in every weight matrix and bias vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += m · x` for a row-major `rows × x.len()` matrix.
pub(crate) fn matvec_acc(out: &mut [f64], m: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += mᵀ · d` for a row-major `d.len() × out.len()` matrix.
pub(crate) fn matvec_t_acc(out: &mut [f64], m: &[f64], d: &[f64]) {
    let cols = out.len();
    for (row, di) in m.chunks_exact(cols).zip(d) {
        if *di != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * di;
            }
        }
    }
}

/// `m += d ⊗ x`.
pub(crate) fn outer_acc(m: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, di) in m.chunks_exact_mut(cols).zip(d) {
        if *di != 0.0 {
            for (a, xj) in row.iter_mut().zip(x) {
                *a += di * xj;
            }
        }
    }
}

pub(crate) fn xavier(rng: &mut impl Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    /// Input weights, `4H × input`.
    pub w: Vec<f64>,
    /// Recurrent weights, `4H × H`.
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

/// Activations saved by [`LstmLayer::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct LayerTrace {
    xs: Vec<Vec<f64>>,
    /// Post-activation gates per step, `4H` each.
    gates: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
}

impl LayerTrace {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.hs
    }
}

impl LstmLayer {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayer {
            input,
            hidden,
            w: vec![0.0; 4 * hidden * input],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Xavier-uniform weights, forget-gate bias 1, other biases 0.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w = xavier(rng, 4 * hidden * input, input, 4 * hidden);
        let u = xavier(rng, 4 * hidden * hidden, hidden, 4 * hidden);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        LstmLayer { input, hidden, w, u, b }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> LayerTrace {
        let h = self.hidden;
        let mut trace = LayerTrace {
            xs: xs.to_vec(),
            gates: Vec::with_capacity(xs.len()),
            cs: Vec::with_capacity(xs.len()),
            hs: Vec::with_capacity(xs.len()),
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for x in xs {
            let mut a = self.b.clone();
            matvec_acc(&mut a, &self.w, x);
            matvec_acc(&mut a, &self.u, &h_prev);
            for k in 0..h {
                a[k] = sigmoid(a[k]);
                a[h + k] = sigmoid(a[h + k]);
                a[2 * h + k] = a[2 * h + k].tanh();
                a[3 * h + k] = sigmoid(a[3 * h + k]);
            }
            let mut c = vec![0.0; h];
            let mut hv = vec![0.0; h];
            for k in 0..h {
                c[k] = a[h + k] * c_prev[k] + a[k] * a[2 * h + k];
                hv[k] = a[3 * h + k] * c[k].tanh();
            }
            trace.gates.push(a);
            trace.cs.push(c.clone());
            trace.hs.push(hv.clone());
            h_prev = hv;
            c_prev = c;
        }
        trace
    }

    /// Backpropagates `dhs` (loss gradient w.r.t. each step's output) through
    /// time, accumulating into `grad`. Returns the gradient w.r.t. each input.
    pub fn backward(&self, trace: &LayerTrace, dhs: &[Vec<f64>], grad: &mut LstmLayer, want_dx: bool) -> Vec<Vec<f64>> {
        let h = self.hidden;
        let steps = trace.hs.len();
        let zero = vec![0.0; h];
        let mut dxs = if want_dx { vec![vec![0.0; self.input]; steps] } else { Vec::new() };
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let g = &trace.gates[t];
            let c = &trace.cs[t];
            let c_prev = if t > 0 { &trace.cs[t - 1] } else { &zero };
            let h_prev = if t > 0 { &trace.hs[t - 1] } else { &zero };
            for k in 0..h {
                let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let dh = dhs[t][k] + dh_next[k];
                let tc = c[k].tanh();
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                da[k] = dc * gg * i * (1.0 - i);
                da[h + k] = dc * c_prev[k] * f * (1.0 - f);
                da[2 * h + k] = dc * i * (1.0 - gg * gg);
                da[3 * h + k] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            outer_acc(&mut grad.w, &da, &trace.xs[t]);
            outer_acc(&mut grad.u, &da, h_prev);
            for (gb, d) in grad.b.iter_mut().zip(&da) {
                *gb += d;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(&mut dh_next, &self.u, &da);
            if want_dx {
                matvec_t_acc(&mut dxs[t], &self.w, &da);
            }
        }
        dxs
    }
}

/// Two stacked LSTM layers whose block output is the top layer's final
/// hidden state. Dropout acts on each layer's outputs, never on the
/// recurrent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmBlock {
    pub layers: Vec<LstmLayer>,
}

/// Saved state of one block forward pass.
#[derive(Debug, Clone, Default)]
pub struct BlockTrace {
    layers: Vec<LayerTrace>,
    /// Inverted-dropout masks on each layer's outputs; empty at inference.
    masks: Vec<Vec<Vec<f64>>>,
    pub output: Vec<f64>,
}

fn draw_mask(rng: &mut impl Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
}

impl LstmBlock {
    pub const LAYERS: usize = 2;

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmBlock { layers: vec![LstmLayer::zeros(input, hidden), LstmLayer::zeros(hidden, hidden)] }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let l0 = LstmLayer::init(input, hidden, rng);
        let l1 = LstmLayer::init(hidden, hidden, rng);
        LstmBlock { layers: vec![l0, l1] }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LstmLayer::param_count).sum()
    }

    /// With `dropout = Some((rate, rng))` masks are drawn and applied.
    pub fn forward<R: Rng>(&self, rows: &[Vec<f64>], mut dropout: Option<(f64, &mut R)>) -> BlockTrace {
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::new();
        let mut input = rows.to_vec();
        for layer in &self.layers {
            let trace = layer.forward(&input);
            let mut out = trace.hs.clone();
            if let Some((rate, rng)) = dropout.as_mut() {
                if *rate > 0.0 {
                    let m: Vec<Vec<f64>> = out.iter().map(|_| draw_mask(*rng, layer.hidden, *rate)).collect();
                    for (o, mk) in out.iter_mut().zip(&m) {
                        o.iter_mut().zip(mk).for_each(|(v, s)| *v *= s);
                    }
                    masks.push(m);
                }
            }
            layers.push(trace);
            input = out;
        }
        let output = input.last().cloned().unwrap_or_else(|| vec![0.0; self.hidden()]);
        BlockTrace { layers, masks, output }
    }

    /// Accumulates parameter gradients given the gradient w.r.t. the block output.
    pub fn backward(&self, trace: &BlockTrace, d_out: &[f64], grad: &mut LstmBlock) {
        let top = self.layers.len() - 1;
        let steps = trace.layers[top].hs.len();
        if steps == 0 {
            return;
        }
        let h = self.hidden();
        let mut d_outputs = vec![vec![0.0; h]; steps];
        d_outputs[steps - 1] = d_out.to_vec();
        for l in (0..=top).rev() {
            // Gradient w.r.t. this layer's masked outputs -> raw outputs.
            if let Some(m) = trace.masks.get(l) {
                for (d, mk) in d_outputs.iter_mut().zip(m) {
                    d.iter_mut().zip(mk).for_each(|(v, s)| *v *= s);
                }
            }
            let dx = self.layers[l].backward(&trace.layers[l], &d_outputs, &mut grad.layers[l], l > 0);
            d_outputs = dx;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_layer_outputs_zero() {
        let layer = LstmLayer::zeros(3, 4);
        let t = layer.forward(&[vec![1.0, -2.0, 0.5], vec![0.3, 0.3, 0.3]]);
        // Gates at 0.5, g = tanh(0) = 0, so c and h stay 0.
        assert!(t.outputs().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn init_sets_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = LstmLayer::init(5, 4, &mut rng);
        assert_eq!(&l.b[4..8], &[1.0; 4]);
        assert!(l.b[..4].iter().chain(&l.b[8..]).all(|v| *v == 0.0));
        let limit = (6.0f64 / (5.0 + 16.0)).sqrt();
        assert!(l.w.iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn dropout_masks_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = draw_mask(&mut rng, 10_000, 0.2);
        let kept = m.iter().filter(|v| **v > 0.0).count() as f64 / 10_000.0;
        assert!((kept - 0.8).abs() < 0.02);
        assert!(m.iter().all(|v| *v == 0.0 || (*v - 1.25).abs() < 1e-12));
    }
}
