//! E-LSTM: an LSTM whose cell update gains an additive E-gate term.
//!
//! The E-gate is an extreme-learning-machine readout over forget-gate
//! activations. Forget vectors `f_t` and encoded next-character targets are
//! collected into a window; when the window fills, the readout
//! `β = (FᵀF + λI)⁻¹ Fᵀ T` (or `F⁺T` at λ = 0) is solved in closed form and
//! installed. Every later step adds `e_t = gain · βᵀ f_t` to the cell:
//!
//! ```text
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ c̃_t + e_t
//! ```
//!
//! β is only ever fit on steps that precede the step it is applied to.
//! Gradients treat `e_t` as a constant; β is never gradient-trained.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg::{ridge_solve, Matrix};
use crate::lstm::{self, Forward, LstmParams, LstmState, StepCache};
use crate::rng::substream;
use crate::{Error, Result};

/// |e| above which a step is counted as a blow-up.
pub const BLOWUP_THRESHOLD: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EGateConfig {
    /// Steps collected per closed-form solve.
    pub window: usize,
    /// Ridge penalty; 0 selects the plain pseudoinverse.
    pub lambda: f64,
    /// Multiplier on the gate output; 0 disables the gate.
    pub gain: f64,
    /// Half-width of the target-encoding projection entries.
    pub encode_scale: f64,
}

impl Default for EGateConfig {
    fn default() -> Self {
        Self {
            window: 25,
            lambda: 1e-3,
            gain: 1.0,
            encode_scale: 0.1,
        }
    }
}

impl EGateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidArgument("egate window must be >= 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "egate lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.gain >= 0.0) || !self.gain.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "egate gain must be >= 0, got {}",
                self.gain
            )));
        }
        if !(self.encode_scale >= 0.0) || !self.encode_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "egate encode_scale must be >= 0, got {}",
                self.encode_scale
            )));
        }
        Ok(())
    }
}

/// Mutable E-gate state for one model instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EGateState {
    p_encode: Matrix,
    f_window: Vec<Vec<f64>>,
    t_window: Vec<Vec<f64>>,
    beta: Matrix,
    installed: bool,
    steps: u64,
    fitted_through: Option<u64>,
    solves: u64,
    blowups: u64,
}

impl EGateState {
    /// Fresh state: β = 0, empty window, target projection drawn from the
    /// "egate-encode" substream as `encode_scale · U[-1, 1)`.
    pub fn new(h: usize, v: usize, cfg: &EGateConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if h == 0 || v == 0 {
            return Err(Error::InvalidArgument(format!(
                "egate dims must be >= 1, got h={h} v={v}"
            )));
        }
        let mut rng = substream(seed, "egate-encode");
        let p_encode = Matrix::from_fn(v, h, |_, _| cfg.encode_scale * rng.uniform(-1.0, 1.0));
        Ok(Self::from_parts(p_encode, Matrix::zeros(h, h)))
    }

    /// Rebuild from a stored projection and readout (checkpoint restore).
    /// A nonzero β counts as installed.
    pub fn from_parts(p_encode: Matrix, beta: Matrix) -> Self {
        let installed = beta.as_slice().iter().any(|&b| b != 0.0);
        Self {
            p_encode,
            f_window: Vec::new(),
            t_window: Vec::new(),
            beta,
            installed,
            steps: 0,
            fitted_through: None,
            solves: 0,
            blowups: 0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.p_encode.cols()
    }

    pub fn vocab(&self) -> usize {
        self.p_encode.rows()
    }

    pub fn p_encode(&self) -> &Matrix {
        &self.p_encode
    }

    pub fn beta(&self) -> &Matrix {
        &self.beta
    }

    /// Install a readout directly (diagnostics and gradient checks).
    pub fn set_beta(&mut self, beta: Matrix) -> Result<()> {
        if beta.shape() != self.beta.shape() {
            return Err(Error::Shape {
                op: "set_beta",
                left: self.beta.shape(),
                right: beta.shape(),
            });
        }
        self.beta = beta;
        self.installed = true;
        Ok(())
    }

    /// Whether a solved readout is in use.
    pub fn installed(&self) -> bool {
        self.installed
    }

    pub fn window_len(&self) -> usize {
        self.f_window.len()
    }

    pub fn f_window(&self) -> &[Vec<f64>] {
        &self.f_window
    }

    pub fn t_window(&self) -> &[Vec<f64>] {
        &self.t_window
    }

    /// Steps recorded into windows since creation.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Index of the last step that contributed to the installed β.
    pub fn fitted_through(&self) -> Option<u64> {
        self.fitted_through
    }

    pub fn solves(&self) -> u64 {
        self.solves
    }

    /// Steps where some |e_t| entry exceeded [`BLOWUP_THRESHOLD`].
    pub fn blowups(&self) -> u64 {
        self.blowups
    }

    /// Drop any partial window; β is kept.
    pub fn reset_window(&mut self) {
        self.f_window.clear();
        self.t_window.clear();
    }

    /// Row `y` of the frozen target projection.
    pub fn encode_target(&self, y: usize) -> Result<&[f64]> {
        if y >= self.p_encode.rows() {
            return Err(Error::IndexOutOfRange {
                index: y,
                len: self.p_encode.rows(),
            });
        }
        Ok(self.p_encode.row(y))
    }

    /// `gain · βᵀ f`, or `None` when the gate contributes nothing.
    fn gate_output(&self, f: &[f64], cfg: &EGateConfig) -> Option<Vec<f64>> {
        if cfg.gain == 0.0 || !self.installed {
            return None;
        }
        let mut e = alloc::vec![0.0; self.hidden()];
        crate::linalg::gemv_t_add(&self.beta, f, &mut e);
        for x in &mut e {
            *x *= cfg.gain;
        }
        Some(e)
    }
}

/// Closed-form readout over a full window.
pub fn egate_solve(g: &EGateState, cfg: &EGateConfig) -> Result<Matrix> {
    if g.f_window.len() != cfg.window {
        return Err(Error::InvalidArgument(format!(
            "egate window holds {} of {} steps",
            g.f_window.len(),
            cfg.window
        )));
    }
    let h = g.hidden();
    let f = Matrix::new(cfg.window, h, g.f_window.concat())?;
    let t = Matrix::new(cfg.window, h, g.t_window.concat())?;
    ridge_solve(&f, &t, cfg.lambda)
}

/// Forward step with the installed β, leaving the window untouched.
pub fn elstm_apply(
    p: &LstmParams,
    s: &LstmState,
    g: &EGateState,
    cfg: &EGateConfig,
    x: &[f64],
) -> Result<(LstmState, StepCache)> {
    if g.hidden() != p.h || g.vocab() != p.v {
        return Err(Error::Shape {
            op: "elstm gate",
            left: (p.v, p.h),
            right: (g.vocab(), g.hidden()),
        });
    }
    let gates = lstm::gates(p, s, x)?;
    let e = g.gate_output(&gates.f, cfg);
    Ok(lstm::finish(p, s, x, gates, e))
}

/// One E-LSTM training step: apply the installed gate, then record
/// `(f_t, encode(window_target))` and solve when the window fills.
///
/// `window_target` is the next-character target of this step. It only
/// reaches β after the step's own output has been computed.
pub fn elstm_step(
    p: &LstmParams,
    s: &LstmState,
    g: &mut EGateState,
    cfg: &EGateConfig,
    x: &[f64],
    window_target: usize,
) -> Result<(LstmState, StepCache)> {
    let encoded = g.encode_target(window_target)?.to_vec();
    let (next, cache) = elstm_apply(p, s, g, cfg, x)?;
    if let Some(e) = &cache.offset {
        if e.iter().any(|v| v.abs() > BLOWUP_THRESHOLD) {
            g.blowups += 1;
        }
    }
    g.f_window.push(cache.f.clone());
    g.t_window.push(encoded);
    g.steps += 1;
    if g.f_window.len() >= cfg.window {
        let beta = egate_solve(g, cfg)?;
        g.beta = beta;
        g.installed = true;
        g.solves += 1;
        g.fitted_through = Some(g.steps - 1);
        g.reset_window();
    }
    Ok((next, cache))
}

/// Run a segment with window updates enabled.
pub fn elstm_forward_sequence(
    p: &LstmParams,
    s0: &LstmState,
    g: &mut EGateState,
    cfg: &EGateConfig,
    xs: &[usize],
    ys: &[usize],
) -> Result<Forward> {
    lstm::check_sequence(xs, ys, p.d, p.v)?;
    let mut state = s0.clone();
    let mut caches = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        let (next, cache) = elstm_step(p, &state, g, cfg, &lstm::one_hot(x, p.d), y)?;
        caches.push(cache);
        state = next;
    }
    Ok(lstm::collect(caches, ys, state))
}

/// Gradients under the stop-gradient convention: each cached `e_t` is a
/// constant input to its cell update, so the recurrence is the LSTM one.
pub fn elstm_backward(p: &LstmParams, caches: &[StepCache], ys: &[usize]) -> Result<LstmParams> {
    lstm::backward_sequence(p, caches, ys)
}
