//! Reference LSTM cell with a softmax readout, trained by truncated BPTT.
//!
//! Gates act on the concatenation `[h_{t-1}, x_t]`:
//!
//! ```text
//! f = σ(W_f z + b_f)   i = σ(W_i z + b_i)   c̃ = tanh(W_c z + b_c)   o = σ(W_o z + b_o)
//! c = f ⊙ c_prev + i ⊙ c̃        h = o ⊙ tanh(c)        p = softmax(W_y h + b_y)
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, gemv, gemv_t_add, outer_add, sigmoid, softmax_in_place, Matrix};
use crate::rng::substream;
use crate::{Error, Result};

/// Half-width of the uniform initialization interval.
pub const INIT_RANGE: f64 = 0.08;

/// Parameter blocks in canonical order.
pub const BLOCK_NAMES: [&str; 10] = [
    "w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o", "w_y", "b_y",
];

/// LSTM weights plus the output projection. The same type carries gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub d: usize,
    pub h: usize,
    pub v: usize,
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_c: Matrix,
    pub w_o: Matrix,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
    pub w_y: Matrix,
    pub b_y: Vec<f64>,
}

fn check_dims(d: usize, h: usize, v: usize) -> Result<()> {
    if d == 0 || h == 0 || v == 0 {
        return Err(Error::InvalidArgument(format!(
            "lstm dims must be >= 1, got d={d} h={h} v={v}"
        )));
    }
    Ok(())
}

impl LstmParams {
    /// All-zero parameters; also the gradient accumulator.
    pub fn zeros(d: usize, h: usize, v: usize) -> Result<Self> {
        check_dims(d, h, v)?;
        Ok(Self {
            d,
            h,
            v,
            w_f: Matrix::zeros(h, h + d),
            w_i: Matrix::zeros(h, h + d),
            w_c: Matrix::zeros(h, h + d),
            w_o: Matrix::zeros(h, h + d),
            b_f: vec![0.0; h],
            b_i: vec![0.0; h],
            b_c: vec![0.0; h],
            b_o: vec![0.0; h],
            w_y: Matrix::zeros(v, h),
            b_y: vec![0.0; v],
        })
    }

    /// Weights i.i.d. uniform on [-0.08, 0.08) from the "weights" substream,
    /// biases zero.
    pub fn init(d: usize, h: usize, v: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(d, h, v)?;
        let mut rng = substream(seed, "weights");
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_c, &mut p.w_o, &mut p.w_y] {
            for x in w.as_mut_slice() {
                *x = rng.uniform(-INIT_RANGE, INIT_RANGE);
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d, self.h, self.v).expect("dims already validated")
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 10] {
        [
            ("w_f", self.w_f.as_slice()),
            ("w_i", self.w_i.as_slice()),
            ("w_c", self.w_c.as_slice()),
            ("w_o", self.w_o.as_slice()),
            ("b_f", &self.b_f),
            ("b_i", &self.b_i),
            ("b_c", &self.b_c),
            ("b_o", &self.b_o),
            ("w_y", self.w_y.as_slice()),
            ("b_y", &self.b_y),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut [f64]); 10] {
        [
            ("w_f", self.w_f.as_mut_slice()),
            ("w_i", self.w_i.as_mut_slice()),
            ("w_c", self.w_c.as_mut_slice()),
            ("w_o", self.w_o.as_mut_slice()),
            ("b_f", &mut self.b_f),
            ("b_i", &mut self.b_i),
            ("b_c", &mut self.b_c),
            ("b_o", &mut self.b_o),
            ("w_y", self.w_y.as_mut_slice()),
            ("b_y", &mut self.b_y),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Euclidean norm over every block.
    pub fn global_norm(&self) -> f64 {
        libm::sqrt(
            self.blocks()
                .iter()
                .flat_map(|(_, b)| b.iter())
                .map(|x| x * x)
                .sum(),
        )
    }

    /// Check shapes against (d, h, v) and that every entry is finite.
    pub fn validate(&self) -> Result<()> {
        check_dims(self.d, self.h, self.v)?;
        let (d, h, v) = (self.d, self.h, self.v);
        for (name, m) in [
            ("w_f", &self.w_f),
            ("w_i", &self.w_i),
            ("w_c", &self.w_c),
            ("w_o", &self.w_o),
        ] {
            if m.shape() != (h, h + d) {
                return Err(Error::InvalidArgument(format!(
                    "{name} is {:?}, expected {:?}",
                    m.shape(),
                    (h, h + d)
                )));
            }
        }
        if self.w_y.shape() != (v, h) {
            return Err(Error::InvalidArgument(format!(
                "w_y is {:?}, expected {:?}",
                self.w_y.shape(),
                (v, h)
            )));
        }
        for (name, b, n) in [
            ("b_f", &self.b_f, h),
            ("b_i", &self.b_i, h),
            ("b_c", &self.b_c, h),
            ("b_o", &self.b_o, h),
            ("b_y", &self.b_y, v),
        ] {
            if b.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{name} has length {}, expected {n}",
                    b.len()
                )));
            }
        }
        for (name, block) in self.blocks() {
            if block.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(())
    }
}

/// Recurrent state carried between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(h: usize) -> Self {
        Self {
            h: vec![0.0; h],
            c: vec![0.0; h],
        }
    }
}

/// Everything one step computed, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub o: Vec<f64>,
    pub h: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Additive cell term applied at this step (E-gate output), if any.
    pub offset: Option<Vec<f64>>,
}

/// Gate activations before the cell update.
#[derive(Clone, Debug)]
pub(crate) struct Gates {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub o: Vec<f64>,
}

/// `out = W [h; x] + b`, skipping zero input entries.
fn affine(w: &Matrix, b: &[f64], h_prev: &[f64], x: &[f64], out: &mut [f64]) {
    let nh = h_prev.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = w.row(r);
        let mut s = b[r] + linalg::dot(&row[..nh], h_prev);
        for (&xj, &wj) in x.iter().zip(&row[nh..]) {
            if xj != 0.0 {
                s += xj * wj;
            }
        }
        *o = s;
    }
}

fn check_step(p: &LstmParams, s: &LstmState, x: &[f64]) -> Result<()> {
    if x.len() != p.d {
        return Err(Error::Shape {
            op: "lstm_step input",
            left: (p.d, 1),
            right: (x.len(), 1),
        });
    }
    if s.h.len() != p.h || s.c.len() != p.h {
        return Err(Error::Shape {
            op: "lstm_step state",
            left: (p.h, p.h),
            right: (s.h.len(), s.c.len()),
        });
    }
    Ok(())
}

pub(crate) fn gates(p: &LstmParams, s: &LstmState, x: &[f64]) -> Result<Gates> {
    check_step(p, s, x)?;
    let n = p.h;
    let mut g = Gates {
        f: vec![0.0; n],
        i: vec![0.0; n],
        c_tilde: vec![0.0; n],
        o: vec![0.0; n],
    };
    affine(&p.w_f, &p.b_f, &s.h, x, &mut g.f);
    affine(&p.w_i, &p.b_i, &s.h, x, &mut g.i);
    affine(&p.w_c, &p.b_c, &s.h, x, &mut g.c_tilde);
    affine(&p.w_o, &p.b_o, &s.h, x, &mut g.o);
    for k in 0..n {
        g.f[k] = sigmoid(g.f[k]);
        g.i[k] = sigmoid(g.i[k]);
        g.c_tilde[k] = libm::tanh(g.c_tilde[k]);
        g.o[k] = sigmoid(g.o[k]);
    }
    Ok(g)
}

pub(crate) fn finish(
    p: &LstmParams,
    s: &LstmState,
    x: &[f64],
    g: Gates,
    offset: Option<Vec<f64>>,
) -> (LstmState, StepCache) {
    let n = p.h;
    let mut c = vec![0.0; n];
    for k in 0..n {
        c[k] = g.f[k] * s.c[k] + g.i[k] * g.c_tilde[k];
    }
    if let Some(e) = &offset {
        for (ck, ek) in c.iter_mut().zip(e) {
            *ck += ek;
        }
    }
    let tanh_c: Vec<f64> = c.iter().map(|&v| libm::tanh(v)).collect();
    let h: Vec<f64> = g.o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
    let mut logits = vec![0.0; p.v];
    gemv(&p.w_y, &h, &mut logits);
    for (l, b) in logits.iter_mut().zip(&p.b_y) {
        *l += b;
    }
    let mut probs = logits.clone();
    softmax_in_place(&mut probs);
    let next = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: s.h.clone(),
        c_prev: s.c.clone(),
        f: g.f,
        i: g.i,
        c_tilde: g.c_tilde,
        c,
        tanh_c,
        o: g.o,
        h,
        logits,
        probs,
        offset,
    };
    (next, cache)
}

/// One forward step.
pub fn lstm_step(p: &LstmParams, s: &LstmState, x: &[f64]) -> Result<(LstmState, StepCache)> {
    let g = gates(p, s, x)?;
    Ok(finish(p, s, x, g, None))
}

/// One forward step with a constant vector added to the cell update.
pub fn lstm_step_with_offset(
    p: &LstmParams,
    s: &LstmState,
    x: &[f64],
    offset: &[f64],
) -> Result<(LstmState, StepCache)> {
    if offset.len() != p.h {
        return Err(Error::Shape {
            op: "cell offset",
            left: (p.h, 1),
            right: (offset.len(), 1),
        });
    }
    let g = gates(p, s, x)?;
    Ok(finish(p, s, x, g, Some(offset.to_vec())))
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

pub(crate) fn step_loss(probs: &[f64], target: usize) -> f64 {
    -libm::log(probs[target].max(linalg::PROB_FLOOR))
}

/// Result of running a segment forward.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Mean cross-entropy over the segment, in nats.
    pub loss: f64,
    /// Number of steps whose argmax matched the target.
    pub correct: usize,
    pub caches: Vec<StepCache>,
    pub state: LstmState,
}

pub(crate) fn check_sequence(xs: &[usize], ys: &[usize], d: usize, v: usize) -> Result<()> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "sequence lengths must match and be >= 1, got {} inputs and {} targets",
            xs.len(),
            ys.len()
        )));
    }
    if let Some(&bad) = xs.iter().find(|&&x| x >= d) {
        return Err(Error::IndexOutOfRange { index: bad, len: d });
    }
    if let Some(&bad) = ys.iter().find(|&&y| y >= v) {
        return Err(Error::IndexOutOfRange { index: bad, len: v });
    }
    Ok(())
}

/// Summarize caches into a [`Forward`].
pub(crate) fn collect(caches: Vec<StepCache>, ys: &[usize], state: LstmState) -> Forward {
    let mut total = 0.0;
    let mut correct = 0;
    for (cache, &y) in caches.iter().zip(ys) {
        total += step_loss(&cache.probs, y);
        if linalg::argmax(&cache.probs) == y {
            correct += 1;
        }
    }
    Forward {
        loss: total / ys.len() as f64,
        correct,
        caches,
        state,
    }
}

/// Run a sequence of one-hot inputs (given as indices) from `s0`.
pub fn forward_sequence(
    p: &LstmParams,
    s0: &LstmState,
    xs: &[usize],
    ys: &[usize],
) -> Result<Forward> {
    check_sequence(xs, ys, p.d, p.v)?;
    let mut state = s0.clone();
    let mut caches = Vec::with_capacity(xs.len());
    for &x in xs {
        let (next, cache) = lstm_step(p, &state, &one_hot(x, p.d))?;
        caches.push(cache);
        state = next;
    }
    Ok(collect(caches, ys, state))
}

/// Backpropagate through one step. `dh` is the full gradient arriving at
/// `h_t`, `dc_next` the gradient arriving at `c_t` from step t+1. Returns the
/// gradients with respect to `h_{t-1}` and `c_{t-1}`.
fn backprop_step(
    p: &LstmParams,
    cache: &StepCache,
    dh: &[f64],
    dc_next: &[f64],
    grads: Option<&mut LstmParams>,
) -> (Vec<f64>, Vec<f64>) {
    let n = p.h;
    let mut dzf = vec![0.0; n];
    let mut dzi = vec![0.0; n];
    let mut dzc = vec![0.0; n];
    let mut dzo = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let (f, i, ct, o, tc) = (
            cache.f[k],
            cache.i[k],
            cache.c_tilde[k],
            cache.o[k],
            cache.tanh_c[k],
        );
        let d_o = dh[k] * tc;
        let dc = dh[k] * o * (1.0 - tc * tc) + dc_next[k];
        dzf[k] = dc * cache.c_prev[k] * f * (1.0 - f);
        dzi[k] = dc * ct * i * (1.0 - i);
        dzc[k] = dc * i * (1.0 - ct * ct);
        dzo[k] = d_o * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
    let mut dz = vec![0.0; n + p.d];
    for (w, dzg) in [
        (&p.w_f, &dzf),
        (&p.w_i, &dzi),
        (&p.w_c, &dzc),
        (&p.w_o, &dzo),
    ] {
        gemv_t_add(w, dzg, &mut dz);
    }
    if let Some(g) = grads {
        let mut z = cache.h_prev.clone();
        z.extend_from_slice(&cache.x);
        for (w, b, dzg) in [
            (&mut g.w_f, &mut g.b_f, &dzf),
            (&mut g.w_i, &mut g.b_i, &dzi),
            (&mut g.w_c, &mut g.b_c, &dzc),
            (&mut g.w_o, &mut g.b_o, &dzo),
        ] {
            outer_add(w, dzg, &z);
            for (bk, d) in b.iter_mut().zip(dzg.iter()) {
                *bk += d;
            }
        }
    }
    dz.truncate(n);
    (dz, dc_prev)
}

/// Exact gradient of the mean segment cross-entropy by backpropagation
/// through time over the cached steps. Any cached cell offset is treated as
/// a constant.
pub fn backward_sequence(p: &LstmParams, caches: &[StepCache], ys: &[usize]) -> Result<LstmParams> {
    if caches.len() != ys.len() || caches.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} caches for {} targets",
            caches.len(),
            ys.len()
        )));
    }
    if let Some(&bad) = ys.iter().find(|&&y| y >= p.v) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: p.v,
        });
    }
    let scale = 1.0 / ys.len() as f64;
    let mut grads = p.zeros_like();
    let mut dh_next = vec![0.0; p.h];
    let mut dc_next = vec![0.0; p.h];
    for (cache, &y) in caches.iter().zip(ys).rev() {
        if cache.h.len() != p.h || cache.x.len() != p.d || cache.probs.len() != p.v {
            return Err(Error::Shape {
                op: "backward cache",
                left: (p.h, p.v),
                right: (cache.h.len(), cache.probs.len()),
            });
        }
        let mut dlogits: Vec<f64> = cache.probs.iter().map(|q| q * scale).collect();
        dlogits[y] -= scale;
        outer_add(&mut grads.w_y, &dlogits, &cache.h);
        for (b, d) in grads.b_y.iter_mut().zip(&dlogits) {
            *b += d;
        }
        let mut dh = dh_next;
        gemv_t_add(&p.w_y, &dlogits, &mut dh);
        let (dh_prev, dc_prev) = backprop_step(p, cache, &dh, &dc_next, Some(&mut grads));
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    Ok(grads)
}

/// Norms of `∂L_T/∂h_{T-q}` for q = 0, 1, ..., where `L_T` is the loss at
/// the final cached step alone.
pub fn grad_norm_profile(
    p: &LstmParams,
    caches: &[StepCache],
    ys: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if caches.len() < 2 || caches.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "profile needs >= 2 matching caches, got {} caches and {} targets",
            caches.len(),
            ys.len()
        )));
    }
    let last = caches.len() - 1;
    let y = ys[last];
    if y >= p.v {
        return Err(Error::IndexOutOfRange { index: y, len: p.v });
    }
    let mut dlogits = caches[last].probs.clone();
    dlogits[y] -= 1.0;
    let mut dh = vec![0.0; p.h];
    gemv_t_add(&p.w_y, &dlogits, &mut dh);
    let mut dc = vec![0.0; p.h];
    let mut out = Vec::with_capacity(caches.len());
    out.push((0, linalg::norm2(&dh)));
    for lag in 1..caches.len() {
        let (dh_prev, dc_prev) = backprop_step(p, &caches[last + 1 - lag], &dh, &dc, None);
        out.push((lag, linalg::norm2(&dh_prev)));
        dh = dh_prev;
        dc = dc_prev;
    }
    Ok(out)
}

/// Clip the global gradient norm to `clip`, then step `p -= lr · g`.
/// Returns the gradient norm before clipping. On error `p` is untouched.
pub fn sgd_update(p: &mut LstmParams, grads: &LstmParams, lr: f64, clip: f64) -> Result<f64> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be >= 0, got {lr}"
        )));
    }
    if !(clip > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "clip must be > 0, got {clip}"
        )));
    }
    if (grads.d, grads.h, grads.v) != (p.d, p.h, p.v) {
        return Err(Error::Shape {
            op: "sgd_update",
            left: (p.h, p.h + p.d),
            right: (grads.h, grads.h + grads.d),
        });
    }
    for (name, block) in grads.blocks() {
        if block.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient block {name}")));
        }
    }
    let norm = grads.global_norm();
    let scale = if norm > clip { clip / norm } else { 1.0 };
    let step = lr * scale;
    for ((_, w), (_, g)) in p.blocks_mut().into_iter().zip(grads.blocks()) {
        for (wk, gk) in w.iter_mut().zip(g) {
            *wk -= step * gk;
        }
    }
    Ok(norm)
}
