use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn bind(pairs: &[(&str, Tensor)]) -> HashMap<String, Tensor> {
    pairs
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect()
}

#[test]
fn tanh_of_zero_is_zero() {
    let mut g = Graph::new();
    let x = g.input("x", vec![1], true);
    let y = g.tanh(x);
    let eval = g
        .forward(&bind(&[("x", Tensor::scalar(0.0))]), EvalMode::Eval)
        .unwrap();
    assert_eq!(eval.value(y).item(), 0.0);
}

#[test]
fn sum_of_squares_forward_and_grad() {
    // sum(x⊙x) at [1,2,3] = 14, gradient 2x
    let mut g = Graph::new();
    let x = g.input("x", vec![3], true);
    let xx = g.mul(x, x).unwrap();
    let s = g.sum(xx);
    let eval = g
        .forward(
            &bind(&[("x", Tensor::vector(vec![1.0, 2.0, 3.0]))]),
            EvalMode::Eval,
        )
        .unwrap();
    assert_eq!(eval.value(s).item(), 14.0);
    let grads = g.backward(&eval, s).unwrap();
    assert_eq!(grads.input("x").unwrap().data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn matmul_identity() {
    let mut g = Graph::new();
    let i2 = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let x = g.input("x", vec![2, 1], true);
    let y = g.matmul(i2, x).unwrap();
    let eval = g
        .forward(
            &bind(&[("x", Tensor::matrix(2, 1, vec![3.0, 7.0]).unwrap())]),
            EvalMode::Eval,
        )
        .unwrap();
    assert_eq!(eval.value(y).data(), &[3.0, 7.0]);
}

#[test]
fn grad_of_tanh_at_zero_is_one() {
    let mut g = Graph::new();
    let x = g.input("x", vec![1], true);
    let y = g.tanh(x);
    let eval = g
        .forward(&bind(&[("x", Tensor::scalar(0.0))]), EvalMode::Eval)
        .unwrap();
    let grads = g.backward(&eval, y).unwrap();
    assert_eq!(grads.input("x").unwrap().item(), 1.0);
}

#[test]
fn grad_of_l2_norm() {
    // d‖x‖/dx at [3,4] = [0.6, 0.8]
    let mut g = Graph::new();
    let x = g.input("x", vec![2], true);
    let n = g.row_norm_l2(x);
    let eval = g
        .forward(
            &bind(&[("x", Tensor::vector(vec![3.0, 4.0]))]),
            EvalMode::Eval,
        )
        .unwrap();
    assert_eq!(eval.value(n).item(), 5.0);
    let grads = g.backward(&eval, n).unwrap();
    let gx = grads.input("x").unwrap();
    assert!((gx.data()[0] - 0.6).abs() < 1e-15);
    assert!((gx.data()[1] - 0.8).abs() < 1e-15);
}

#[test]
fn l2_norm_grad_is_zero_at_zero() {
    let mut g = Graph::new();
    let x = g.input("x", vec![3], true);
    let n = g.row_norm_l2(x);
    let eval = g
        .forward(
            &bind(&[("x", Tensor::vector(vec![0.0, 0.0, 0.0]))]),
            EvalMode::Eval,
        )
        .unwrap();
    assert_eq!(eval.value(n).item(), 0.0);
    let grads = g.backward(&eval, n).unwrap();
    assert_eq!(grads.input("x").unwrap().data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn finite_diff_square() {
    // f(x)=x² at x=3 → gradient 6 within 1e-6 relative
    let mut g = Graph::new();
    let x = g.input("x", vec![1], true);
    let xx = g.mul(x, x).unwrap();
    let s = g.sum(xx);
    let report = finite_diff_check(
        &g,
        &bind(&[("x", Tensor::scalar(3.0))]),
        "x",
        s,
        1e-5,
        1e-6,
        EvalMode::Eval,
    )
    .unwrap();
    assert!(report.pass, "max rel {}", report.max_rel_error);
    assert!((report.coords[0].autodiff - 6.0).abs() < 1e-12);
}

#[test]
fn finite_diff_tanh_at_zero() {
    let mut g = Graph::new();
    let x = g.input("x", vec![1], true);
    let y = g.tanh(x);
    let s = g.sum(y);
    let report = finite_diff_check(
        &g,
        &bind(&[("x", Tensor::scalar(0.0))]),
        "x",
        s,
        1e-5,
        1e-6,
        EvalMode::Eval,
    )
    .unwrap();
    assert!(report.pass);
    assert!((report.coords[0].autodiff - 1.0).abs() < 1e-12);
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = Graph::new();
    let x = g.input("x", vec![5, 4], false);
    let y = g.softmax(x);
    let data: Vec<f64> = (0..20).map(|_| rng.gen_range(-30.0..30.0)).collect();
    let eval = g
        .forward(
            &bind(&[("x", Tensor::matrix(5, 4, data).unwrap())]),
            EvalMode::Eval,
        )
        .unwrap();
    let out = eval.value(y);
    for i in 0..5 {
        let row = out.row(i);
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dropout_preserves_expectation() {
    let keep = 0.7;
    let x = Tensor::vector(vec![1.0, -2.0, 0.5, 3.0]);
    let mut g = Graph::new();
    let xin = g.input("x", vec![4], false);
    let d = g.dropout(xin, keep).unwrap();
    let bindings = bind(&[("x", x.clone())]);
    let mut acc = [0.0; 4];
    let n = 100_000u64;
    for seed in 0..n {
        let eval = g.forward(&bindings, EvalMode::Train { seed }).unwrap();
        for (a, v) in acc.iter_mut().zip(eval.value(d).data()) {
            *a += v;
        }
    }
    for (a, v) in acc.iter().zip(x.data()) {
        let mean = a / n as f64;
        assert!((mean - v).abs() <= 0.01 * v.abs(), "mean {mean} vs {v}");
    }
}

#[test]
fn dropout_deterministic_per_seed() {
    let mut g = Graph::new();
    let xin = g.input("x", vec![64], false);
    let d = g.dropout(xin, 0.6).unwrap();
    let bindings = bind(&[("x", Tensor::vector((0..64).map(|i| i as f64).collect()))]);
    let a = g.forward(&bindings, EvalMode::Train { seed: 42 }).unwrap();
    let b = g.forward(&bindings, EvalMode::Train { seed: 42 }).unwrap();
    assert_eq!(a.value(d).data(), b.value(d).data());
    let c = g.forward(&bindings, EvalMode::Train { seed: 43 }).unwrap();
    assert_ne!(a.value(d).data(), c.value(d).data());
}

#[test]
fn shape_mismatch_names_node() {
    let mut g = Graph::new();
    let a = g.input("a", vec![2, 3], false);
    let b = g.input("b", vec![4, 3], false);
    let err = g.mul(a, b).unwrap_err();
    match err {
        TensorError::ShapeMismatch { op, .. } => assert_eq!(op, "mul"),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn non_finite_output_is_an_error() {
    let mut g = Graph::new();
    let x = g.input("x", vec![1], false);
    let y = g.log(x);
    let err = g
        .forward(&bind(&[("x", Tensor::scalar(-1.0))]), EvalMode::Eval)
        .unwrap_err();
    match err {
        TensorError::NonFinite { op, .. } => assert_eq!(op, "log"),
        other => panic!("unexpected error {other:?}"),
    }
    let _ = y;
}

#[test]
fn backward_requires_scalar_seed() {
    let mut g = Graph::new();
    let x = g.input("x", vec![3], true);
    let y = g.tanh(x);
    let eval = g
        .forward(
            &bind(&[("x", Tensor::vector(vec![0.1, 0.2, 0.3]))]),
            EvalMode::Eval,
        )
        .unwrap();
    assert!(matches!(
        g.backward(&eval, y),
        Err(TensorError::NonScalarSeed(_))
    ));
}

#[test]
fn spmm_matches_dense() {
    let adj = Rc::new(
        SparseMatrix::new(
            2,
            2,
            vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)],
        )
        .unwrap(),
    );
    let mut g = Graph::new();
    let x = g.input("x", vec![2, 2], true);
    let y = g.spmm(adj, x).unwrap();
    let s = g.sum(y);
    let bindings = bind(&[("x", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap())]);
    let eval = g.forward(&bindings, EvalMode::Eval).unwrap();
    assert_eq!(eval.value(y).data(), &[0.5, 0.5, 0.5, 0.5]);
    let report = finite_diff_check(&g, &bindings, "x", s, 1e-6, 1e-6, EvalMode::Eval).unwrap();
    assert!(report.pass);
}

#[test]
fn segment_softmax_groups() {
    let mut g = Graph::new();
    let s = g.input("s", vec![5], true);
    let segs = Rc::new(vec![0usize, 0, 1, 1, 1]);
    let y = g.segment_softmax(s, segs).unwrap();
    let eval = g
        .forward(
            &bind(&[("s", Tensor::vector(vec![1.0, 1.0, 0.0, 1.0, 2.0]))]),
            EvalMode::Eval,
        )
        .unwrap();
    let out = eval.value(y).data();
    assert!((out[0] - 0.5).abs() < 1e-12);
    assert!((out[1] - 0.5).abs() < 1e-12);
    assert!((out[2] + out[3] + out[4] - 1.0).abs() < 1e-12);
}

/// Central finite differences across every differentiable primitive at
/// random points, away from the non-smooth points of relu/L1.
#[test]
fn finite_diff_all_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for trial in 0..100 {
        let data: Vec<f64> = (0..6)
            .map(|_| {
                // keep coordinates away from 0 for relu/|x| kinks
                let v: f64 = rng.gen_range(0.05..0.9);
                if rng.gen::<bool>() {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.9..0.9)).collect();

        let mut g = Graph::new();
        let x = g.input("x", vec![2, 3], true);
        let wm = g.constant(Tensor::matrix(3, 2, w[..6].to_vec()).unwrap());
        let mm = g.matmul(x, wm).unwrap();
        let t1 = g.tanh(mm);
        let t2 = g.sigmoid(t1);
        let t3 = g.artanh(t2);
        let sm = g.softmax(t3);
        let lg = g.log(sm);
        let e = g.exp(lg);
        let lr = g.leaky_relu(e, 0.2);
        let r = g.relu(lr);
        let n2 = g.row_norm_l2(r);
        let n1 = g.row_norm_l1(x);
        let q = g.add(n2, n1).unwrap();
        let c0 = g.concat_cols(q, n2).unwrap();
        let sc = g.scale(c0, n1).unwrap();
        let rs = g.row_sum(sc);
        let d = g.div(rs, n2).unwrap();
        let m = g.mean(d);
        let report = finite_diff_check(
            &g,
            &bind(&[("x", Tensor::matrix(2, 3, data).unwrap())]),
            "x",
            m,
            1e-6,
            1e-5,
            EvalMode::Eval,
        )
        .unwrap();
        assert!(
            report.pass,
            "trial {trial}: max rel error {}",
            report.max_rel_error
        );
    }
}

#[test]
fn determinism_bit_identical() {
    let mut g = Graph::new();
    let x = g.input("x", vec![4, 4], true);
    let d = g.dropout(x, 0.6).unwrap();
    let t = g.tanh(d);
    let s = g.sum(t);
    let bindings = bind(&[(
        "x",
        Tensor::matrix(4, 4, (0..16).map(|i| (i as f64).sin()).collect()).unwrap(),
    )]);
    let e1 = g.forward(&bindings, EvalMode::Train { seed: 9 }).unwrap();
    let e2 = g.forward(&bindings, EvalMode::Train { seed: 9 }).unwrap();
    assert_eq!(e1.value(s).data(), e2.value(s).data());
    let g1 = g.backward(&e1, s).unwrap();
    let g2 = g.backward(&e2, s).unwrap();
    assert_eq!(g1.input("x").unwrap().data(), g2.input("x").unwrap().data());
}

#[test]
fn column_broadcast_add_sub_fd() {
    let mut g = Graph::new();
    let x = g.input("x", vec![3, 4], true);
    let m = g.row_max_detached(x);
    let shifted = g.sub(x, m).unwrap();
    let e = g.exp(shifted);
    let z = g.row_sum(e);
    let lz0 = g.log(z);
    // add the detached shift back so the full log-sum-exp is exact
    let lz = g.add(lz0, m).unwrap();
    let c = g.input("col", vec![3, 1], true);
    let out = g.add(lz, c).unwrap();
    let s = g.sum(out);
    let mut bindings = HashMap::new();
    bindings.insert(
        "x".to_string(),
        Tensor::matrix(3, 4, (0..12).map(|i| 0.3 * i as f64 - 1.0).collect()).unwrap(),
    );
    bindings.insert(
        "col".to_string(),
        Tensor::matrix(3, 1, vec![0.1, -0.2, 0.4]).unwrap(),
    );
    for name in ["x", "col"] {
        let rep = finite_diff_check(&g, &bindings, name, s, 1e-6, 1e-5, EvalMode::Eval).unwrap();
        assert!(rep.pass, "{name}: {}", rep.max_rel_error);
    }
}
