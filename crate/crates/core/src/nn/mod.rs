//! Tensors, reverse-mode differentiation, GRU/feed-forward layers and Adam.

mod adam;
pub mod gradcheck;
mod layers;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layers::{
    dense, dropout, ffn_apply, ffn_forward, gru_cell, gru_step, log_softmax, Activation, DenseVars, GruParams, GruVars,
};
pub(crate) use layers::gru_step_unchecked;
pub use tape::{sigmoid, std_from_logvar, Tape, Var, LOGVAR_FLOOR};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter array {param}")]
    NonFiniteGradient { param: usize },
    #[error("tape is not topologically ordered")]
    GraphCycle,
}

#[cfg(test)]
mod tests {
    use super::gradcheck::{finite_difference, max_relative_error};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Builds `loss(params)` on a fresh tape and compares tape gradients with
    /// central differences.
    fn check(params: Vec<Tensor>, build: impl Fn(&Tape, &[Var]) -> Var) -> f64 {
        let run = |ps: &[Tensor]| {
            let tape = Tape::new();
            let vars: Vec<Var> = ps.iter().enumerate().map(|(i, p)| tape.param(i, p)).collect();
            let loss = build(&tape, &vars);
            (tape, loss)
        };
        let (tape, loss) = run(&params);
        let mut grads: Vec<Tensor> = params.iter().map(Tensor::zeros_like).collect();
        tape.backward(loss, &mut grads).unwrap();
        let mut ps = params.clone();
        let numeric = finite_difference(&mut ps, 1e-5, |p| {
            let (t, l) = run(p);
            t.scalar(l)
        });
        max_relative_error(&grads, &numeric, 1e-6)
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 3, 4);
        let b = random(&mut rng, 4, 2);
        let c = random(&mut rng, 3, 4);
        let row = random(&mut rng, 1, 4);
        let col = random(&mut rng, 3, 1);
        // weight each output entry differently so symmetric mistakes show up
        let weights = |t: &Tape, v: Var, rng_seed: u64| {
            let (r, cc) = t.shape(v);
            let mut rr = ChaCha8Rng::seed_from_u64(rng_seed);
            let w = t.constant(random(&mut rr, r, cc));
            let p = t.mul(v, w);
            t.sum(p)
        };
        let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&Tape, &[Var]) -> Var>)> = vec![
            ("matmul", vec![a.clone(), b.clone()], Box::new(move |t, v| weights(t, t.matmul(v[0], v[1]), 1))),
            ("add", vec![a.clone(), c.clone()], Box::new(move |t, v| weights(t, t.add(v[0], v[1]), 2))),
            ("sub", vec![a.clone(), c.clone()], Box::new(move |t, v| weights(t, t.sub(v[0], v[1]), 3))),
            ("mul", vec![a.clone(), c.clone()], Box::new(move |t, v| weights(t, t.mul(v[0], v[1]), 4))),
            ("add_row", vec![a.clone(), row.clone()], Box::new(move |t, v| weights(t, t.add_row(v[0], v[1]), 5))),
            ("mul_col", vec![a.clone(), col.clone()], Box::new(move |t, v| weights(t, t.mul_col(v[0], v[1]), 6))),
            ("scale", vec![a.clone()], Box::new(move |t, v| weights(t, t.scale(v[0], -2.5), 7))),
            ("add_scalar", vec![a.clone()], Box::new(move |t, v| weights(t, t.add_scalar(v[0], 3.0), 8))),
            ("sigmoid", vec![a.clone()], Box::new(move |t, v| weights(t, t.sigmoid(v[0]), 9))),
            ("tanh", vec![a.clone()], Box::new(move |t, v| weights(t, t.tanh(v[0]), 10))),
            ("relu", vec![a.clone()], Box::new(move |t, v| weights(t, t.relu(v[0]), 11))),
            ("exp", vec![a.clone()], Box::new(move |t, v| weights(t, t.exp(v[0]), 12))),
            ("std_dev", vec![a.clone()], Box::new(move |t, v| weights(t, t.std_dev(v[0]), 13))),
            (
                "concat_cols",
                vec![a.clone(), col.clone()],
                Box::new(move |t, v| weights(t, t.concat_cols(&[v[0], v[1]]), 14)),
            ),
            (
                "gather_rows",
                vec![a.clone()],
                Box::new(move |t, v| weights(t, t.gather_rows(v[0], &[2, 0, 2, 1]), 15)),
            ),
            ("log_softmax", vec![a.clone()], Box::new(move |t, v| weights(t, t.log_softmax(v[0]), 16))),
            ("pick", vec![a.clone()], Box::new(move |t, v| weights(t, t.pick(v[0], &[3, 0, 1]), 17))),
            ("sum_cols", vec![a.clone()], Box::new(move |t, v| weights(t, t.sum_cols(v[0]), 18))),
            ("mean", vec![a.clone()], Box::new(move |t, v| t.mean(v[0]))),
        ];
        for (name, params, build) in cases {
            let err = check(params, build);
            assert!(err < 1e-6, "{name}: relative error {err}");
        }
    }

    #[test]
    fn disconnected_param_gets_zero_and_quadratic_gets_2w() {
        let w = Tensor::row(vec![0.5, -1.5, 2.0]);
        let other = Tensor::row(vec![9.0, 9.0]);
        let tape = Tape::new();
        let wv = tape.param(0, &w);
        let _ = tape.param(1, &other);
        let sq = tape.mul(wv, wv);
        let loss = tape.sum(sq);
        let mut grads = vec![w.zeros_like(), other.zeros_like()];
        tape.backward(loss, &mut grads).unwrap();
        assert_eq!(grads[0].data(), &[1.0, -3.0, 4.0]);
        assert_eq!(grads[1].data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_names_the_op() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::scalar(1000.0));
        let e = tape.exp(x);
        let _ = tape.tanh(e);
        assert_eq!(tape.check(), Err(NnError::NonFinite { op: "exp" }));
        let mut grads = vec![];
        assert!(tape.backward(e, &mut grads).is_err());
    }

    #[test]
    fn gru_zero_weights() {
        let p = GruParams::zeros(2, 3);
        let x = Tensor::row(vec![0.3, -0.7]);
        let h0 = Tensor::zeros(1, 3);
        assert_eq!(gru_cell(&p, &x, &h0).unwrap().data(), &[0.0, 0.0, 0.0]);
        let v = Tensor::row(vec![1.0, -2.0, 0.25]);
        assert_eq!(gru_cell(&p, &x, &v).unwrap().data(), &[0.5, -1.0, 0.125]);
    }

    #[test]
    fn gru_matches_straight_line_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ni, nh) = (2, 3);
        let p = GruParams {
            w_z: random(&mut rng, ni, nh),
            w_r: random(&mut rng, ni, nh),
            w_h: random(&mut rng, ni, nh),
            u_z: random(&mut rng, nh, nh),
            u_r: random(&mut rng, nh, nh),
            u_h: random(&mut rng, nh, nh),
            b_z: random(&mut rng, 1, nh),
            b_r: random(&mut rng, 1, nh),
            b_h: random(&mut rng, 1, nh),
        };
        let x = random(&mut rng, 1, ni);
        let h = random(&mut rng, 1, nh);
        let got = gru_cell(&p, &x, &h).unwrap();
        let lin = |w: &Tensor, u: &Tensor, b: &Tensor, hv: &[f64], j: usize| {
            let mut s = b.get(0, j);
            for i in 0..ni {
                s += x.get(0, i) * w.get(i, j);
            }
            for i in 0..nh {
                s += hv[i] * u.get(i, j);
            }
            s
        };
        let hv = h.data();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let r: Vec<f64> = (0..nh).map(|j| sig(lin(&p.w_r, &p.u_r, &p.b_r, hv, j))).collect();
        let rh: Vec<f64> = (0..nh).map(|j| r[j] * hv[j]).collect();
        for j in 0..nh {
            let z = sig(lin(&p.w_z, &p.u_z, &p.b_z, hv, j));
            let cand = lin(&p.w_h, &p.u_h, &p.b_h, &rh, j).tanh();
            let want = (1.0 - z) * cand + z * hv[j];
            assert!((got.get(0, j) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_shape_errors() {
        let p = GruParams::zeros(2, 3);
        let bad = gru_cell(&p, &Tensor::zeros(1, 4), &Tensor::zeros(1, 3));
        assert!(matches!(bad, Err(NnError::ShapeMismatch { .. })));
        let mut q = p.clone();
        q.u_h = Tensor::zeros(2, 3);
        assert!(matches!(
            gru_cell(&q, &Tensor::zeros(1, 2), &Tensor::zeros(1, 3)),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn ffn_identity_bias_and_reference() {
        let x = Tensor::row(vec![0.1, -0.2, 0.3]);
        let id = vec![(Tensor::identity(3), Tensor::zeros(1, 3), Activation::Identity)];
        assert_eq!(ffn_apply(&id, &x).unwrap(), x);
        let b = Tensor::row(vec![1.0, 2.0]);
        let zb = vec![(Tensor::zeros(3, 2), b.clone(), Activation::Identity)];
        assert_eq!(ffn_apply(&zb, &x).unwrap(), b);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w1, b1) = (random(&mut rng, 3, 4), random(&mut rng, 1, 4));
        let (w2, b2) = (random(&mut rng, 4, 2), random(&mut rng, 1, 2));
        let net = vec![(w1.clone(), b1.clone(), Activation::Tanh), (w2.clone(), b2.clone(), Activation::Relu)];
        let got = ffn_apply(&net, &x).unwrap();
        let h: Vec<f64> = (0..4)
            .map(|j| ((0..3).map(|i| x.get(0, i) * w1.get(i, j)).sum::<f64>() + b1.get(0, j)).tanh())
            .collect();
        for j in 0..2 {
            let o = ((0..4).map(|i| h[i] * w2.get(i, j)).sum::<f64>() + b2.get(0, j)).max(0.0);
            assert!((got.get(0, j) - o).abs() < 1e-12);
        }
        let bad = vec![(Tensor::zeros(2, 2), Tensor::zeros(1, 2), Activation::Identity)];
        assert!(matches!(ffn_apply(&bad, &x), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn log_softmax_cases() {
        let u = log_softmax(&Tensor::row(vec![0.3; 4]));
        for &v in u.data() {
            assert!((v - (0.25f64).ln()).abs() < 1e-12);
        }
        let s = log_softmax(&Tensor::row(vec![1000.0, 0.0]));
        assert_eq!(s.get(0, 0), 0.0);
        assert!((s.get(0, 1) + 1000.0).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random(&mut rng, 3, 7);
        let ls = log_softmax(&t);
        for r in 0..3 {
            let total: f64 = ls.row_slice(r).iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_first_step_and_null_gradient() {
        let mut params = vec![Tensor::row(vec![0.5, -0.5])];
        let mut st = AdamState::new(&params, AdamConfig::with_lr(0.001));
        st.step(&mut params, &[Tensor::row(vec![1.0, 1.0])], &[]).unwrap();
        for (&p, o) in params[0].data().iter().zip([0.5, -0.5]) {
            assert!((p - (o - 0.001)).abs() < 1e-9);
        }
        let mut q = vec![Tensor::row(vec![0.5, -0.5])];
        let mut st = AdamState::new(&q, AdamConfig::default());
        st.step(&mut q, &[Tensor::zeros(1, 2)], &[]).unwrap();
        assert_eq!(q[0].data(), &[0.5, -0.5]);
    }

    #[test]
    fn adam_rejects_non_finite_without_mutating() {
        let mut params = vec![Tensor::row(vec![1.0])];
        let mut st = AdamState::new(&params, AdamConfig::default());
        let before = (params.clone(), st.clone());
        let r = st.step(&mut params, &[Tensor::row(vec![f64::NAN])], &[]);
        assert_eq!(r, Err(NnError::NonFiniteGradient { param: 0 }));
        assert_eq!((params, st), before);
    }

    #[test]
    fn adam_skips_frozen_arrays() {
        let mut params = vec![Tensor::row(vec![1.0]), Tensor::row(vec![1.0])];
        let mut st = AdamState::new(&params, AdamConfig::default());
        let g = vec![Tensor::row(vec![1.0]), Tensor::row(vec![1.0])];
        st.step(&mut params, &g, &[false, true]).unwrap();
        assert_eq!(params[0].data(), &[1.0]);
        assert!(params[1].data()[0] < 1.0);
    }
}
