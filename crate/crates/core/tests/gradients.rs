//! Analytic gradients against finite differences and independent re-evaluation.

use elstm_core::elstm::{elstm_forward_sequence, EGateConfig, EGateState};
use elstm_core::gradcheck::{self, relative_error, tiny_case};
use elstm_core::linalg::Matrix;
use elstm_core::lstm::{
    backward_sequence, forward_sequence, grad_norm_profile, lstm_step, one_hot, sgd_update,
    LstmParams, LstmState,
};
use elstm_core::model::ModelKind;
use elstm_core::rng::substream;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straight transcription of the cell equations, sharing no code with the
/// library forward pass.
fn oracle_loss(p: &LstmParams, xs: &[usize], ys: &[usize]) -> f64 {
    let (h_n, d) = (p.h, p.d);
    let mut h = vec![0.0; h_n];
    let mut c = vec![0.0; h_n];
    let mut total = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let mut z = h.clone();
        z.extend((0..d).map(|j| if j == x { 1.0 } else { 0.0 }));
        let pre = |w: &Matrix, b: &[f64], r: usize| -> f64 {
            b[r] + (0..h_n + d).map(|k| w.get(r, k) * z[k]).sum::<f64>()
        };
        let mut new_h = vec![0.0; h_n];
        for r in 0..h_n {
            let f = sig(pre(&p.w_f, &p.b_f, r));
            let i = sig(pre(&p.w_i, &p.b_i, r));
            let ct = pre(&p.w_c, &p.b_c, r).tanh();
            let o = sig(pre(&p.w_o, &p.b_o, r));
            c[r] = f * c[r] + i * ct;
            new_h[r] = o * c[r].tanh();
        }
        h = new_h;
        let logits: Vec<f64> = (0..p.v)
            .map(|k| p.b_y[k] + (0..h_n).map(|j| p.w_y.get(k, j) * h[j]).sum::<f64>())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        total += lse - logits[y];
    }
    total / ys.len() as f64
}

#[test]
fn forward_matches_step_by_step_oracle() {
    for seed in 0..5 {
        let case = tiny_case(2, 4, seed).unwrap();
        // Re-shape to D = V = 3 with a zero initial state.
        let mut p = LstmParams::init(3, 2, 3, seed).unwrap();
        let mut rng = substream(seed, "oracle");
        for (_, b) in p.blocks_mut() {
            for x in b.iter_mut() {
                *x = rng.uniform(-1.0, 1.0);
            }
        }
        let xs: Vec<usize> = case.xs.iter().map(|x| x % 3).collect();
        let ys: Vec<usize> = case.ys.iter().map(|y| y % 3).collect();
        let got = forward_sequence(&p, &LstmState::zeros(2), &xs, &ys)
            .unwrap()
            .loss;
        let want = oracle_loss(&p, &xs, &ys);
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn lstm_gradients_match_finite_differences() {
    for seed in 0..8 {
        let r = gradcheck::run(ModelKind::Lstm, 3, 5, seed, EPS).unwrap();
        assert!(r.params <= 500);
        assert!(r.max_rel_error <= TOL, "seed {seed}: {r:?}");
    }
    let r = gradcheck::run(ModelKind::Lstm, 8, 10, 0, EPS).unwrap();
    assert!(r.params <= 500 && r.max_rel_error <= TOL, "{r:?}");
}

#[test]
fn elstm_frozen_gate_gradients_match_finite_differences() {
    for seed in 0..8 {
        let r = gradcheck::run(ModelKind::Elstm, 3, 5, seed, EPS).unwrap();
        assert!(r.max_rel_error <= TOL, "seed {seed}: {r:?}");
    }
    let r = gradcheck::run(ModelKind::Elstm, 8, 10, 3, EPS).unwrap();
    assert!(r.params <= 500 && r.max_rel_error <= TOL, "{r:?}");
}

#[test]
fn saturated_correct_logit_has_no_output_bias_gradient() {
    let mut p = LstmParams::init(4, 3, 4, 1).unwrap();
    p.w_y = Matrix::zeros(4, 3);
    p.b_y = vec![0.0, 0.0, 50.0, 0.0];
    let xs = [0, 1, 3];
    let ys = [2, 2, 2];
    let s0 = LstmState::zeros(3);
    let fwd = forward_sequence(&p, &s0, &xs, &ys).unwrap();
    let g = backward_sequence(&p, &fwd.caches, &ys).unwrap();
    let loss = |q: &LstmParams| forward_sequence(q, &s0, &xs, &ys).unwrap().loss;
    for k in 0..4 {
        assert!(g.b_y[k].abs() < 1e-20);
        let mut plus = p.clone();
        plus.b_y[k] += EPS;
        let mut minus = p.clone();
        minus.b_y[k] -= EPS;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * EPS);
        assert!(numeric.abs() < 1e-10);
    }
}

#[test]
fn relabeling_the_vocabulary_permutes_gradients() {
    let case = tiny_case(3, 6, 2).unwrap();
    let p = &case.params;
    let perm = [2usize, 0, 3, 1];
    let h = p.h;
    let mut q = p.clone();
    for w in [&mut q.w_f, &mut q.w_i, &mut q.w_c, &mut q.w_o] {
        let src = w.clone();
        for r in 0..h {
            for j in 0..4 {
                w.set(r, h + perm[j], src.get(r, h + j));
            }
        }
    }
    for k in 0..4 {
        for j in 0..h {
            q.w_y.set(perm[k], j, p.w_y.get(k, j));
        }
        q.b_y[perm[k]] = p.b_y[k];
    }
    let xs2: Vec<usize> = case.xs.iter().map(|&x| perm[x]).collect();
    let ys2: Vec<usize> = case.ys.iter().map(|&y| perm[y]).collect();
    let a = forward_sequence(p, &case.s0, &case.xs, &case.ys).unwrap();
    let b = forward_sequence(&q, &case.s0, &xs2, &ys2).unwrap();
    assert!((a.loss - b.loss).abs() < 1e-12);
    let ga = backward_sequence(p, &a.caches, &case.ys).unwrap();
    let gb = backward_sequence(&q, &b.caches, &ys2).unwrap();
    for k in 0..4 {
        assert!((ga.b_y[k] - gb.b_y[perm[k]]).abs() < 1e-12);
        for r in 0..h {
            assert!((ga.w_i.get(r, h + k) - gb.w_i.get(r, h + perm[k])).abs() < 1e-12);
        }
    }
    assert!(ga.w_f.sub(&gb.w_f).is_ok());
}

#[test]
fn clipping_preserves_direction() {
    let case = tiny_case(3, 5, 4).unwrap();
    let fwd = forward_sequence(&case.params, &case.s0, &case.xs, &case.ys).unwrap();
    let g = backward_sequence(&case.params, &fwd.caches, &case.ys).unwrap();
    let norm = g.global_norm();
    let clip = norm / 3.0;
    let mut p = case.params.clone();
    let pre = sgd_update(&mut p, &g, 0.5, clip).unwrap();
    assert_eq!(pre, norm);
    let step: Vec<f64> = case
        .params
        .blocks()
        .iter()
        .zip(p.blocks())
        .flat_map(|((_, a), (_, b))| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
        .collect();
    let flat: Vec<f64> = g.blocks().iter().flat_map(|(_, b)| b.to_vec()).collect();
    let dot: f64 = step.iter().zip(&flat).map(|(a, b)| a * b).sum();
    let ns = step.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((dot / (ns * norm) - 1.0).abs() < 1e-12);
    assert!((ns - 0.5 * clip).abs() < 1e-12);
}

#[test]
fn gradient_norm_profile_matches_perturbation() {
    let case = tiny_case(3, 6, 5).unwrap();
    let p = &case.params;
    let fwd = forward_sequence(p, &case.s0, &case.xs, &case.ys).unwrap();
    let prof = grad_norm_profile(p, &fwd.caches, &case.ys).unwrap();
    let n = case.xs.len();
    assert_eq!(prof.len(), n);

    let last = &fwd.caches[n - 1];
    let mut direct = vec![0.0; p.h];
    for k in 0..p.v {
        let d = last.probs[k] - if k == case.ys[n - 1] { 1.0 } else { 0.0 };
        for j in 0..p.h {
            direct[j] += p.w_y.get(k, j) * d;
        }
    }
    let direct_norm = direct.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((prof[0].1 - direct_norm).abs() < 1e-14);

    // Perturb h at step n-1-q, hold the paired cell state, replay to the end.
    let final_loss = |h: Vec<f64>, c: Vec<f64>, from: usize| -> f64 {
        let mut s = LstmState { h, c };
        for t in from..n {
            s = lstm_step(p, &s, &one_hot(case.xs[t], p.d)).unwrap().0;
        }
        let logits: Vec<f64> = (0..p.v)
            .map(|k| p.b_y[k] + (0..p.h).map(|j| p.w_y.get(k, j) * s.h[j]).sum::<f64>())
            .collect();
        let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
        lse - logits[case.ys[n - 1]]
    };
    for &(lag, norm) in &prof {
        let t = n - 1 - lag;
        let (h0, c0) = (fwd.caches[t].h.clone(), fwd.caches[t].c.clone());
        let mut grad = vec![0.0; p.h];
        for j in 0..p.h {
            let mut hp = h0.clone();
            hp[j] += EPS;
            let mut hm = h0.clone();
            hm[j] -= EPS;
            grad[j] = (final_loss(hp, c0.clone(), t + 1) - final_loss(hm, c0.clone(), t + 1))
                / (2.0 * EPS);
        }
        let numeric = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(
            relative_error(norm, numeric) <= 1e-4,
            "lag {lag}: {norm} vs {numeric}"
        );
    }
}

#[test]
fn zero_recurrent_weights_cut_the_profile_after_lag_zero() {
    let mut p = LstmParams::zeros(3, 2, 3).unwrap();
    p.w_y = Matrix::from_rows(&[[0.5, -0.3], [0.2, 0.1], [-0.4, 0.7]]).unwrap();
    let xs = [0, 1, 2, 1];
    let ys = [1, 2, 1, 0];
    let fwd = forward_sequence(&p, &LstmState::zeros(2), &xs, &ys).unwrap();
    let prof = grad_norm_profile(&p, &fwd.caches, &ys).unwrap();
    assert!(prof[0].1 > 0.0);
    assert!(prof[1..].iter().all(|&(_, n)| n == 0.0));
}

#[test]
fn disabled_gate_backward_is_bitwise_lstm() {
    let case = tiny_case(4, 9, 6).unwrap();
    let cfg = EGateConfig {
        window: 3,
        gain: 0.0,
        ..EGateConfig::default()
    };
    let mut gate = EGateState::new(4, 4, &cfg, 6).unwrap();
    let e = elstm_forward_sequence(&case.params, &case.s0, &mut gate, &cfg, &case.xs, &case.ys)
        .unwrap();
    let l = forward_sequence(&case.params, &case.s0, &case.xs, &case.ys).unwrap();
    assert_eq!(e.loss.to_bits(), l.loss.to_bits());
    let ge = elstm_core::elstm::elstm_backward(&case.params, &e.caches, &case.ys).unwrap();
    let gl = backward_sequence(&case.params, &l.caches, &case.ys).unwrap();
    assert_eq!(ge, gl);
}

#[test]
fn doubled_gate_outputs_keep_gradient_shapes() {
    let case = tiny_case(3, 6, 7).unwrap();
    let mut gate = case.gate.clone();
    let fwd = elstm_forward_sequence(
        &case.params,
        &case.s0,
        &mut gate,
        &case.gate_config,
        &case.xs,
        &case.ys,
    )
    .unwrap();
    let offsets: Vec<Option<Vec<f64>>> = fwd
        .caches
        .iter()
        .map(|c| {
            c.offset
                .as_ref()
                .map(|e| e.iter().map(|x| 2.0 * x).collect())
        })
        .collect();
    let base =
        gradcheck::loss_with_offsets(&case.params, &case.s0, &case.xs, &case.ys, &offsets).unwrap();
    assert!(base.is_finite());
    let g1 = elstm_core::elstm::elstm_backward(&case.params, &fwd.caches, &case.ys).unwrap();
    // Replay with doubled offsets to get caches whose cells carry 2·e_t.
    let mut s = case.s0.clone();
    let mut caches = vec![];
    for (&x, off) in case.xs.iter().zip(&offsets) {
        let xv = one_hot(x, 4);
        let (next, cache) = match off {
            Some(e) => elstm_core::lstm::lstm_step_with_offset(&case.params, &s, &xv, e).unwrap(),
            None => lstm_step(&case.params, &s, &xv).unwrap(),
        };
        caches.push(cache);
        s = next;
    }
    let g2 = elstm_core::elstm::elstm_backward(&case.params, &caches, &case.ys).unwrap();
    for ((n1, b1), (n2, b2)) in g1.blocks().iter().zip(g2.blocks()) {
        assert_eq!(n1, &n2);
        assert_eq!(b1.len(), b2.len());
    }
    assert_ne!(g1, g2);
}
