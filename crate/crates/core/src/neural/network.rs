use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{matvec_acc, matvec_t_acc, outer_acc, xavier, BlockTrace, LstmBlock};
use crate::error::{Error, Result};
use crate::record::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    UnimodalAudio,
    UnimodalVisual,
    /// Early fusion: one block over concatenated audio and visual features.
    A1,
    /// Late fusion: one block per channel, merged in a shared head.
    A2,
    /// A2 whose blocks start from unimodal donors.
    Pair,
}

impl Architecture {
    pub fn is_late_fusion(self) -> bool {
        matches!(self, Architecture::A2 | Architecture::Pair)
    }

    /// Which feature channels feed each block. A1's single block gets both,
    /// concatenated audio first.
    pub fn block_channels(self) -> Vec<Vec<Channel>> {
        match self {
            Architecture::UnimodalAudio => vec![vec![Channel::Audio]],
            Architecture::UnimodalVisual => vec![vec![Channel::Visual]],
            Architecture::A1 => vec![vec![Channel::Audio, Channel::Visual]],
            Architecture::A2 | Architecture::Pair => vec![vec![Channel::Audio], vec![Channel::Visual]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense { input, output, w: vec![0.0; input * output], b: vec![0.0; output], activation }
    }

    pub(crate) fn init(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Dense { input, output, w: xavier(rng, input * output, input, output), b: vec![0.0; output], activation }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b.clone();
        matvec_acc(&mut z, &self.w, x);
        match self.activation {
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
        }
        z
    }

    /// `y` is this layer's activated output, `dy` the loss gradient w.r.t. it.
    fn backward(&self, x: &[f64], y: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let dz: Vec<f64> = match self.activation {
            Activation::Relu => dy.iter().zip(y).map(|(d, v)| if *v > 0.0 { *d } else { 0.0 }).collect(),
            Activation::Tanh => dy.iter().zip(y).map(|(d, v)| d * (1.0 - v * v)).collect(),
        };
        outer_acc(&mut grad.w, &dz, x);
        grad.b.iter_mut().zip(&dz).for_each(|(g, d)| *g += d);
        let mut dx = vec![0.0; self.input];
        matvec_t_acc(&mut dx, &self.w, &dz);
        dx
    }
}

/// Architecture descriptor; carries no learned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Input width of each block.
    pub input_dims: Vec<usize>,
    pub seq_len: usize,
    pub hidden: usize,
    /// Width of the rectified-linear layer in late-fusion heads.
    pub head_hidden: usize,
    pub dropout: f64,
}

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_HEAD_HIDDEN: usize = 256;
pub const DEFAULT_SEQ_LEN: usize = 4;
pub const DEFAULT_DROPOUT: f64 = 0.2;

impl ModelSpec {
    fn new(architecture: Architecture, input_dims: Vec<usize>) -> Self {
        ModelSpec {
            architecture,
            input_dims,
            seq_len: DEFAULT_SEQ_LEN,
            hidden: DEFAULT_HIDDEN,
            head_hidden: DEFAULT_HEAD_HIDDEN,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn unimodal(channel: Channel, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ShapeMismatch("feature dimension must be >= 1".into()));
        }
        let arch = match channel {
            Channel::Audio => Architecture::UnimodalAudio,
            Channel::Visual => Architecture::UnimodalVisual,
        };
        Ok(ModelSpec::new(arch, vec![dim]))
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_head_hidden(mut self, head_hidden: usize) -> Self {
        self.head_hidden = head_hidden;
        self
    }

    pub fn with_seq_len(mut self, seq_len: usize) -> Self {
        self.seq_len = seq_len;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let blocks = self.architecture.block_channels().len();
        if self.input_dims.len() != blocks {
            return Err(Error::ShapeMismatch(format!(
                "{:?} needs {blocks} input widths, got {}",
                self.architecture,
                self.input_dims.len()
            )));
        }
        if self.input_dims.contains(&0) || self.hidden == 0 || self.seq_len == 0 {
            return Err(Error::ShapeMismatch("dimensions must be >= 1".into()));
        }
        if self.architecture.is_late_fusion() && self.head_hidden == 0 {
            return Err(Error::ShapeMismatch("head_hidden must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn head_input(&self) -> usize {
        self.hidden * self.input_dims.len()
    }

    /// Total learned parameters.
    pub fn param_count(&self) -> usize {
        let h = self.hidden;
        let blocks: usize = self
            .input_dims
            .iter()
            .map(|d| (4 * h * (d + h) + 4 * h) + (4 * h * (h + h) + 4 * h))
            .sum();
        let head = if self.architecture.is_late_fusion() {
            self.head_input() * self.head_hidden + self.head_hidden + self.head_hidden + 1
        } else {
            self.head_input() + 1
        };
        blocks + head
    }
}

/// Early fusion over concatenated channels.
pub fn build_a1(audio_dim: usize, visual_dim: usize) -> Result<ModelSpec> {
    if audio_dim == 0 || visual_dim == 0 {
        return Err(Error::ShapeMismatch("both channels need at least one feature".into()));
    }
    Ok(ModelSpec::new(Architecture::A1, vec![audio_dim + visual_dim]))
}

/// Late fusion with one block per channel.
pub fn build_a2(audio_dim: usize, visual_dim: usize) -> Result<ModelSpec> {
    if audio_dim == 0 || visual_dim == 0 {
        return Err(Error::ShapeMismatch("both channels need at least one feature".into()));
    }
    Ok(ModelSpec::new(Architecture::A2, vec![audio_dim, visual_dim]))
}

/// All learned parameters; also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub blocks: Vec<LstmBlock>,
    pub head: Vec<Dense>,
}

impl Params {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in &self.blocks {
            for l in &b.layers {
                out.extend([l.w.as_slice(), l.u.as_slice(), l.b.as_slice()]);
            }
        }
        for d in &self.head {
            out.extend([d.w.as_slice(), d.b.as_slice()]);
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            for l in &mut b.layers {
                out.push(&mut l.w);
                out.push(&mut l.u);
                out.push(&mut l.b);
            }
        }
        for d in &mut self.head {
            out.push(&mut d.w);
            out.push(&mut d.b);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn zeros_like(&self) -> Params {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// One input window: `channels[block][step][feature]`, already arranged per
/// block, plus the regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub target: f64,
}

/// A sequence regressor: LSTM blocks, concatenated block outputs, dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub spec: ModelSpec,
    pub params: Params,
}

struct ForwardTrace {
    blocks: Vec<BlockTrace>,
    /// Head input followed by each dense layer's output.
    head_acts: Vec<Vec<f64>>,
}

impl Regressor {
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let blocks = spec.input_dims.iter().map(|d| LstmBlock::init(*d, spec.hidden, rng)).collect();
        let head = Self::head_layers(spec, |i, o, a| Dense::init(i, o, a, rng));
        Ok(Regressor { spec: spec.clone(), params: Params { blocks, head } })
    }

    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let blocks = spec.input_dims.iter().map(|d| LstmBlock::zeros(*d, spec.hidden)).collect();
        let head = Self::head_layers(spec, Dense::zeros);
        Ok(Regressor { spec: spec.clone(), params: Params { blocks, head } })
    }

    pub(crate) fn head_layers(spec: &ModelSpec, mut make: impl FnMut(usize, usize, Activation) -> Dense) -> Vec<Dense> {
        let input = spec.head_input();
        if spec.architecture.is_late_fusion() {
            let hidden = make(input, spec.head_hidden, Activation::Relu);
            let out = make(spec.head_hidden, 1, Activation::Tanh);
            vec![hidden, out]
        } else {
            vec![make(input, 1, Activation::Tanh)]
        }
    }

    pub fn check_example(&self, inputs: &[Vec<Vec<f64>>]) -> Result<()> {
        if inputs.len() != self.spec.input_dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} input channels for {} blocks",
                inputs.len(),
                self.spec.input_dims.len()
            )));
        }
        for (rows, d) in inputs.iter().zip(&self.spec.input_dims) {
            if rows.len() != self.spec.seq_len {
                return Err(Error::ShapeMismatch(format!("window of {} steps, expected {}", rows.len(), self.spec.seq_len)));
            }
            if let Some(r) = rows.iter().find(|r| r.len() != *d) {
                return Err(Error::ShapeMismatch(format!("row width {}, expected {d}", r.len())));
            }
        }
        Ok(())
    }

    fn run<R: Rng>(&self, inputs: &[Vec<Vec<f64>>], mut rng: Option<&mut R>) -> ForwardTrace {
        let rate = self.spec.dropout;
        let blocks: Vec<BlockTrace> = self
            .params
            .blocks
            .iter()
            .zip(inputs)
            .map(|(b, rows)| b.forward(rows, rng.as_deref_mut().map(|r| (rate, r))))
            .collect();
        let mut act: Vec<f64> = blocks.iter().flat_map(|t| t.output.iter().copied()).collect();
        let mut head_acts = vec![act.clone()];
        for d in &self.params.head {
            act = d.forward(&act);
            head_acts.push(act.clone());
        }
        ForwardTrace { blocks, head_acts }
    }

    /// Inference-mode prediction (no dropout).
    pub fn predict(&self, inputs: &[Vec<Vec<f64>>]) -> Result<f64> {
        self.check_example(inputs)?;
        Ok(self.run::<rand_chacha::ChaCha8Rng>(inputs, None).head_acts.last().expect("head")[0])
    }

    /// Inference-mode output of one block, i.e. the top layer's last hidden state.
    pub fn block_output(&self, block: usize, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let b = self.params.blocks.get(block).ok_or_else(|| Error::ShapeMismatch(format!("no block {block}")))?;
        if rows.iter().any(|r| r.len() != b.input_dim()) {
            return Err(Error::ShapeMismatch("row width".into()));
        }
        Ok(b.forward::<rand_chacha::ChaCha8Rng>(rows, None).output)
    }

    /// Mean squared error over `batch` in inference mode.
    pub fn loss<'a>(&self, batch: impl IntoIterator<Item = &'a Example>) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for ex in batch {
            let p = self.predict(&ex.inputs)?;
            total += (p - ex.target) * (p - ex.target);
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput("batch"));
        }
        Ok(total / n as f64)
    }

    /// Loss and exact gradients of the batch-mean squared error. Dropout is
    /// applied when `rng` is given.
    pub fn loss_and_grad<R: Rng>(&self, batch: &[&Example], mut rng: Option<&mut R>) -> Result<(f64, Params)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let mut grad = self.params.zeros_like();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for ex in batch {
            self.check_example(&ex.inputs)?;
            let trace = self.run(&ex.inputs, rng.as_deref_mut());
            let pred = trace.head_acts.last().expect("head")[0];
            let err = pred - ex.target;
            loss += err * err;
            let mut d = vec![2.0 * err / n];
            for (i, layer) in self.params.head.iter().enumerate().rev() {
                d = layer.backward(&trace.head_acts[i], &trace.head_acts[i + 1], &d, &mut grad.head[i]);
            }
            let h = self.spec.hidden;
            for (k, (block, bt)) in self.params.blocks.iter().zip(&trace.blocks).enumerate() {
                block.backward(bt, &d[k * h..(k + 1) * h], &mut grad.blocks[k]);
            }
        }
        Ok((loss / n, grad))
    }
}
