//! Central finite-difference verification of the analytic gradients.
//!
//! For the E-LSTM the gate outputs `e_t` recorded on the analytic forward
//! pass are replayed as constants while parameters are perturbed, which is
//! the function the stop-gradient backward pass differentiates.

use alloc::vec::Vec;

use crate::elstm::{self, EGateConfig, EGateState};
use crate::linalg::Matrix;
use crate::lstm::{self, one_hot, LstmParams, LstmState};
use crate::model::ModelKind;
use crate::rng::substream;
use crate::Result;

/// Perturbation used by the command-line check.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Denominator floor for [`relative_error`]. Central differences at
/// ε = 1e-5 carry roundoff near `ε_mach · |L| / ε ≈ 3e-11`, so gradients
/// smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_block: &'static str,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub params: usize,
}

/// Compare `analytic` with central differences of `loss` around `p`.
pub fn compare(
    p: &LstmParams,
    analytic: &LstmParams,
    eps: f64,
    loss: impl Fn(&LstmParams) -> Result<f64>,
) -> Result<GradCheck> {
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_block: lstm::BLOCK_NAMES[0],
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        params: p.num_params(),
    };
    let mut probe = p.clone();
    for (b, (name, grad)) in analytic.blocks().into_iter().enumerate() {
        for (j, &a) in grad.iter().enumerate() {
            let orig = probe.blocks()[b].1[j];
            probe.blocks_mut()[b].1[j] = orig + eps;
            let plus = loss(&probe)?;
            probe.blocks_mut()[b].1[j] = orig - eps;
            let minus = loss(&probe)?;
            probe.blocks_mut()[b].1[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = relative_error(a, numeric);
            if rel > report.max_rel_error {
                report = GradCheck {
                    max_rel_error: rel,
                    worst_block: name,
                    worst_index: j,
                    analytic: a,
                    numeric,
                    params: report.params,
                };
            }
        }
    }
    Ok(report)
}

pub fn check_lstm(
    p: &LstmParams,
    s0: &LstmState,
    xs: &[usize],
    ys: &[usize],
    eps: f64,
) -> Result<GradCheck> {
    let fwd = lstm::forward_sequence(p, s0, xs, ys)?;
    let analytic = lstm::backward_sequence(p, &fwd.caches, ys)?;
    compare(p, &analytic, eps, |q| {
        Ok(lstm::forward_sequence(q, s0, xs, ys)?.loss)
    })
}

/// Mean loss with a fixed per-step cell offset sequence.
pub fn loss_with_offsets(
    p: &LstmParams,
    s0: &LstmState,
    xs: &[usize],
    ys: &[usize],
    offsets: &[Option<Vec<f64>>],
) -> Result<f64> {
    let mut s = s0.clone();
    let mut total = 0.0;
    for ((&x, &y), off) in xs.iter().zip(ys).zip(offsets) {
        let xv = one_hot(x, p.d);
        let (next, cache) = match off {
            Some(e) => lstm::lstm_step_with_offset(p, &s, &xv, e)?,
            None => lstm::lstm_step(p, &s, &xv)?,
        };
        total += lstm::step_loss(&cache.probs, y);
        s = next;
    }
    Ok(total / ys.len() as f64)
}

/// Frozen-gate check. `gate` is cloned; window solves during the analytic
/// pass are allowed and their outputs are frozen like the rest.
pub fn check_elstm(
    p: &LstmParams,
    s0: &LstmState,
    gate: &EGateState,
    cfg: &EGateConfig,
    xs: &[usize],
    ys: &[usize],
    eps: f64,
) -> Result<GradCheck> {
    let mut g = gate.clone();
    let fwd = elstm::elstm_forward_sequence(p, s0, &mut g, cfg, xs, ys)?;
    let analytic = elstm::elstm_backward(p, &fwd.caches, ys)?;
    let offsets: Vec<Option<Vec<f64>>> = fwd.caches.iter().map(|c| c.offset.clone()).collect();
    compare(p, &analytic, eps, |q| {
        loss_with_offsets(q, s0, xs, ys, &offsets)
    })
}

/// A small random problem for gradient checks: 4-symbol vocabulary, every
/// parameter (biases included) uniform on [-0.5, 0.5).
#[derive(Clone, Debug)]
pub struct TinyCase {
    pub params: LstmParams,
    pub s0: LstmState,
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    pub gate: EGateState,
    pub gate_config: EGateConfig,
}

pub const TINY_VOCAB: usize = 4;

pub fn tiny_case(hidden: usize, seg_len: usize, seed: u64) -> Result<TinyCase> {
    let v = TINY_VOCAB;
    let mut params = LstmParams::zeros(v, hidden, v)?;
    let mut rng = substream(seed, "gradcheck");
    for (_, block) in params.blocks_mut() {
        for x in block.iter_mut() {
            *x = rng.uniform(-0.5, 0.5);
        }
    }
    let s0 = LstmState {
        h: (0..hidden).map(|_| rng.uniform(-0.5, 0.5)).collect(),
        c: (0..hidden).map(|_| rng.uniform(-0.5, 0.5)).collect(),
    };
    let mut data = substream(seed, "gradcheck-data");
    let seq: Vec<usize> = (0..=seg_len).map(|_| data.below(v)).collect();
    let gate_config = EGateConfig {
        window: 2,
        ..EGateConfig::default()
    };
    let mut gate = EGateState::new(hidden, v, &gate_config, seed)?;
    gate.set_beta(Matrix::from_fn(hidden, hidden, |_, _| {
        rng.uniform(-0.5, 0.5)
    }))?;
    Ok(TinyCase {
        params,
        s0,
        xs: seq[..seg_len].to_vec(),
        ys: seq[1..].to_vec(),
        gate,
        gate_config,
    })
}

/// Run the check for a model kind on [`tiny_case`].
pub fn run(
    kind: ModelKind,
    hidden: usize,
    seg_len: usize,
    seed: u64,
    eps: f64,
) -> Result<GradCheck> {
    let case = tiny_case(hidden, seg_len, seed)?;
    match kind {
        ModelKind::Lstm => check_lstm(&case.params, &case.s0, &case.xs, &case.ys, eps),
        ModelKind::Elstm => check_elstm(
            &case.params,
            &case.s0,
            &case.gate,
            &case.gate_config,
            &case.xs,
            &case.ys,
            eps,
        ),
    }
}
