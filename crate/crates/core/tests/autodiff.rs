//! Finite-difference and linearity properties of the tape.

use corisk::autodiff::{AutodiffError, NodeId, Tape, Tensor};
use proptest::prelude::*;

type Build = fn(&mut Tape, &[NodeId]) -> Result<NodeId, AutodiffError>;

fn loss_value(build: Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &ids).unwrap();
    tape.value(out).item()
}

/// Largest relative error between tape gradients and central differences.
fn max_fd_error(build: Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &ids).unwrap();
    tape.backward(out).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = tape.grad(ids[k]);
        for i in 0..t.len() {
            let mut up = inputs.to_vec();
            up[k].data_mut()[i] += h;
            let mut down = inputs.to_vec();
            down[k].data_mut()[i] -= h;
            let numeric = (loss_value(build, &up) - loss_value(build, &down)) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    worst
}

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

/// Keeps values away from ReLU and max-pool kinks.
fn away_from_zero(t: Tensor) -> Tensor {
    let shape = t.shape().to_vec();
    let d = t.into_data().into_iter().map(|v| if v.abs() < 0.05 { v + 0.1 } else { v }).collect();
    Tensor::new(shape, d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dense_sigmoid_mse(x in tensor(vec![3, 4], -2.0, 2.0), w in tensor(vec![4, 2], -1.0, 1.0),
                         b in tensor(vec![2], -1.0, 1.0), y in tensor(vec![3, 2], 0.0, 1.0)) {
        fn build(t: &mut Tape, v: &[NodeId]) -> Result<NodeId, AutodiffError> {
            let m = t.matmul(v[0], v[1])?;
            let z = t.add(m, v[2])?;
            let s = t.sigmoid(z);
            t.mean_sq_error(s, v[3])
        }
        prop_assert!(max_fd_error(build, &[x, w, b, y]) < 1e-5);
    }

    #[test]
    fn cross_pattern(x0 in tensor(vec![3, 5], -1.0, 1.0), w in tensor(vec![5, 1], -1.0, 1.0),
                     b in tensor(vec![5], -1.0, 1.0)) {
        fn build(t: &mut Tape, v: &[NodeId]) -> Result<NodeId, AutodiffError> {
            let s = t.matmul(v[0], v[1])?;
            let o = t.outer_scale(v[0], s)?;
            let o = t.add(o, v[2])?;
            let o = t.add(o, v[0])?;
            let sq = t.mul(o, o)?;
            Ok(t.sum(sq))
        }
        prop_assert!(max_fd_error(build, &[x0, w, b]) < 1e-5);
    }

    #[test]
    fn conv_pool_block(img in tensor(vec![2, 1, 6, 6], -1.0, 1.0), k in tensor(vec![2, 1, 3, 3], -1.0, 1.0),
                       bias in tensor(vec![2], -0.5, 0.5), w in tensor(vec![18, 1], -1.0, 1.0)) {
        fn build(t: &mut Tape, v: &[NodeId]) -> Result<NodeId, AutodiffError> {
            let c = t.conv2d(v[0], v[1], 1, 1)?;
            let c = t.channel_bias(c, v[2])?;
            let r = t.relu(c);
            let p = t.max_pool(r, 2)?;
            let f = t.flatten(p)?;
            let o = t.matmul(f, v[3])?;
            let s = t.sigmoid(o);
            Ok(t.sum(s))
        }
        let img = away_from_zero(img);
        prop_assert!(max_fd_error(build, &[img, k, bias, w]) < 1e-4);
    }

    #[test]
    fn embedding_concat(table in tensor(vec![4, 3], -1.0, 1.0), x in tensor(vec![3, 2], -1.0, 1.0),
                        idx in prop::collection::vec(0usize..4, 3)) {
        // indices enter through a thread-local since Build is a plain fn
        thread_local!(static IDX: std::cell::RefCell<Vec<usize>> = Default::default());
        IDX.with(|c| *c.borrow_mut() = idx.clone());
        fn build(t: &mut Tape, v: &[NodeId]) -> Result<NodeId, AutodiffError> {
            let idx = IDX.with(|c| c.borrow().clone());
            let e = t.gather(v[0], &idx)?;
            let c = t.concat(&[e, v[1]])?;
            let r = t.scale(c, 0.5);
            let sq = t.mul(r, c)?;
            Ok(t.sum(sq))
        }
        prop_assert!(max_fd_error(build, &[table, x]) < 1e-5);
    }

    #[test]
    fn inner_product(u in tensor(vec![6], -2.0, 2.0), v in tensor(vec![6], -2.0, 2.0)) {
        fn build(t: &mut Tape, v: &[NodeId]) -> Result<NodeId, AutodiffError> {
            let p = t.inner(v[0], v[1])?;
            let s = t.sigmoid(p);
            Ok(t.sum(s))
        }
        prop_assert!(max_fd_error(build, &[u, v]) < 1e-5);
    }

    /// Gradients of a*f + b*g equal a*grad f + b*grad g.
    #[test]
    fn gradient_is_linear_in_the_loss(x in tensor(vec![4], -2.0, 2.0), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let grad = |ca: f64, cb: f64| {
            let mut t = Tape::new();
            let id = t.leaf(x.clone());
            let s = t.sigmoid(id);
            let f = t.sum(s);
            let sq = t.mul(id, id).unwrap();
            let g = t.sum(sq);
            let fa = t.scale(f, ca);
            let gb = t.scale(g, cb);
            let l = t.add(fa, gb).unwrap();
            t.backward(l).unwrap();
            t.grad(id).into_data()
        };
        let (gf, gg, gl) = (grad(1.0, 0.0), grad(0.0, 1.0), grad(a, b));
        for i in 0..4 {
            prop_assert!((gl[i] - (a * gf[i] + b * gg[i])).abs() < 1e-12);
        }
    }
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(t.backward(x), Err(AutodiffError::NonScalarLoss(_))));
}
