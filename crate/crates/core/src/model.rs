//! A trainable character model: plain LSTM or E-LSTM behind one interface.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::elstm::{self, EGateConfig, EGateState};
use crate::linalg::{self, argmax};
use crate::lstm::{self, one_hot, Forward, LstmParams, LstmState, StepCache};
use crate::rng::substream;
use crate::textdata::{CharDataset, Vocab};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Lstm,
    Elstm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Elstm => "elstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(ModelKind::Lstm),
            "elstm" => Ok(ModelKind::Elstm),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown model {other:?}"
            ))),
        }
    }
}

/// E-gate state together with its configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct EGate {
    pub state: EGateState,
    pub config: EGateConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub params: LstmParams,
    /// Present for E-LSTM models.
    pub gate: Option<EGate>,
}

/// Training-pass totals for one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub accuracy: f64,
    pub steps: usize,
}

/// A training failure tagged with the segment it happened in.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFailure {
    pub segment: usize,
    pub error: Error,
}

impl Model {
    /// Fresh model of the given kind; `egate` is ignored for plain LSTM.
    pub fn new(
        kind: ModelKind,
        d: usize,
        h: usize,
        v: usize,
        seed: u64,
        egate: EGateConfig,
    ) -> Result<Self> {
        let params = LstmParams::init(d, h, v, seed)?;
        let gate = match kind {
            ModelKind::Lstm => None,
            ModelKind::Elstm => Some(EGate {
                state: EGateState::new(h, v, &egate, seed)?,
                config: egate,
            }),
        };
        Ok(Self { params, gate })
    }

    pub fn kind(&self) -> ModelKind {
        if self.gate.is_some() {
            ModelKind::Elstm
        } else {
            ModelKind::Lstm
        }
    }

    /// Forward pass that also feeds the E-gate window.
    pub fn forward_train(&mut self, s0: &LstmState, xs: &[usize], ys: &[usize]) -> Result<Forward> {
        match &mut self.gate {
            None => lstm::forward_sequence(&self.params, s0, xs, ys),
            Some(g) => {
                elstm::elstm_forward_sequence(&self.params, s0, &mut g.state, &g.config, xs, ys)
            }
        }
    }

    pub fn backward(&self, caches: &[StepCache], ys: &[usize]) -> Result<LstmParams> {
        match &self.gate {
            None => lstm::backward_sequence(&self.params, caches, ys),
            Some(_) => elstm::elstm_backward(&self.params, caches, ys),
        }
    }

    /// One step with the E-gate (if any) frozen.
    pub fn step_frozen(&self, s: &LstmState, x: &[f64]) -> Result<(LstmState, StepCache)> {
        match &self.gate {
            None => lstm::lstm_step(&self.params, s, x),
            Some(g) => elstm::elstm_apply(&self.params, s, &g.state, &g.config, x),
        }
    }

    /// Clear per-epoch E-gate state.
    pub fn reset_epoch(&mut self) {
        if let Some(g) = &mut self.gate {
            g.state.reset_window();
        }
    }

    /// One pass over the dataset: forward, backward and SGD per segment.
    /// Recurrent state starts at zero and carries across segments.
    pub fn train_epoch(
        &mut self,
        ds: &CharDataset,
        seg_len: usize,
        lr: f64,
        clip: f64,
    ) -> core::result::Result<EpochStats, SegmentFailure> {
        self.reset_epoch();
        let mut state = LstmState::zeros(self.params.h);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut steps = 0;
        for (segment, seg) in ds.segments(seg_len).enumerate() {
            let fail = |error| SegmentFailure { segment, error };
            let fwd = self
                .forward_train(&state, seg.inputs, seg.targets)
                .map_err(fail)?;
            let grads = self.backward(&fwd.caches, seg.targets).map_err(fail)?;
            lstm::sgd_update(&mut self.params, &grads, lr, clip).map_err(fail)?;
            loss_sum += fwd.loss * seg.targets.len() as f64;
            correct += fwd.correct;
            steps += seg.targets.len();
            state = fwd.state;
        }
        Ok(EpochStats {
            mean_loss: loss_sum / steps as f64,
            accuracy: correct as f64 / steps as f64,
            steps,
        })
    }

    /// Mean cross-entropy and top-1 accuracy over every prediction in
    /// `indices`, with no parameter or gate updates.
    pub fn evaluate_indices(&self, indices: &[usize]) -> Result<(f64, f64)> {
        if indices.len() < 2 {
            return Err(Error::InvalidArgument(
                "evaluation needs >= 2 characters".into(),
            ));
        }
        let mut state = LstmState::zeros(self.params.h);
        let mut loss = 0.0;
        let mut correct = 0;
        for pair in indices.windows(2) {
            if pair[0] >= self.params.d || pair[1] >= self.params.v {
                return Err(Error::IndexOutOfRange {
                    index: pair[0].max(pair[1]),
                    len: self.params.v,
                });
            }
            let (next, cache) = self.step_frozen(&state, &one_hot(pair[0], self.params.d))?;
            loss += lstm::step_loss(&cache.probs, pair[1]);
            if argmax(&cache.probs) == pair[1] {
                correct += 1;
            }
            state = next;
        }
        let n = (indices.len() - 1) as f64;
        Ok((loss / n, correct as f64 / n))
    }

    /// [`Model::evaluate_indices`] over the dataset's training prefix,
    /// visited segment by segment. Segmentation does not change the result
    /// because state carries across segments and nothing is updated.
    pub fn evaluate(&self, ds: &CharDataset, seg_len: usize) -> Result<(f64, f64)> {
        if seg_len == 0 {
            return Err(Error::InvalidArgument("segment length must be >= 1".into()));
        }
        self.evaluate_indices(ds.train_indices())
    }

    /// Sample `length` characters. Decoding starts from the zero state fed
    /// with the first vocabulary symbol; logits are divided by
    /// `temperature` before the softmax. Draws use the "sample" substream.
    pub fn sample(
        &self,
        vocab: &Vocab,
        length: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<String> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "temperature must be > 0, got {temperature}"
            )));
        }
        if vocab.len() != self.params.v || vocab.len() != self.params.d {
            return Err(Error::InvalidArgument(alloc::format!(
                "vocabulary of {} symbols does not match model (d={}, v={})",
                vocab.len(),
                self.params.d,
                self.params.v
            )));
        }
        let mut rng = substream(seed, "sample");
        let mut state = LstmState::zeros(self.params.h);
        let mut x = 0;
        let mut out = String::with_capacity(length);
        for _ in 0..length {
            let (next, cache) = self.step_frozen(&state, &one_hot(x, self.params.d))?;
            let mut weights: Vec<f64> = cache.logits.iter().map(|l| l / temperature).collect();
            linalg::softmax_in_place(&mut weights);
            x = rng.categorical(&weights);
            out.push(vocab.char_at(x).expect("index within vocabulary"));
            state = next;
        }
        Ok(out)
    }

    /// Greedy decoding from the same start as [`Model::sample`].
    pub fn greedy(&self, vocab: &Vocab, length: usize) -> Result<String> {
        let mut state = LstmState::zeros(self.params.h);
        let mut x = 0;
        let mut out = String::with_capacity(length);
        for _ in 0..length {
            let (next, cache) = self.step_frozen(&state, &one_hot(x, self.params.d))?;
            x = argmax(&cache.logits);
            out.push(vocab.char_at(x).ok_or(Error::IndexOutOfRange {
                index: x,
                len: vocab.len(),
            })?);
            state = next;
        }
        Ok(out)
    }
}
