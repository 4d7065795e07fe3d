use proptest::prelude::*;

use super::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn matmul_forward() {
    let g = Graph::new();
    let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let b = g.constant(t(&[2, 1], &[1.0, 1.0]));
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.shape(c), vec![2, 1]);
    assert_eq!(g.tensor(c).data(), &[3.0, 7.0]);
}

#[test]
fn elementwise_and_reductions() {
    let g = Graph::new();
    let z = g.constant(Tensor::scalar(0.0));
    assert_eq!(g.scalar(g.sigmoid(z)), 0.5);
    let ones = g.constant(Tensor::full(&[2, 3], 1.0));
    assert_eq!(g.scalar(g.sum(ones)), 6.0);
    assert_eq!(g.scalar(g.mean(ones)), 1.0);
}

#[test]
fn gradient_of_dot_product() {
    let g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let w = g.param(Tensor::vector(vec![0.3, -0.1, 0.7]));
    let loss = g.mul(w, x).unwrap();
    let loss = g.sum(loss);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(w).unwrap().data(), &[1.0, 2.0, 3.0]);
    assert!(g.grad(x).is_none());
}

#[test]
fn gradient_of_scaled_sigmoid() {
    let g = Graph::new();
    let x = g.param(Tensor::scalar(0.0));
    let y = g.sigmoid(x);
    let y = g.scale(y, 2.0);
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[0.5]);
}

#[test]
fn heaviside_forward_and_boxcar_backward() {
    let spec = SurrogateSpec::default();
    for (u, spike, grad) in [(1.2, 1.0, 0.5), (0.5, 0.0, 0.5), (2.0, 1.0, 0.0), (1.0, 1.0, 0.5), (0.49, 0.0, 0.0)] {
        let g = Graph::new();
        let x = g.param(Tensor::scalar(u));
        let s = g.heaviside_surrogate(x, spec);
        assert_eq!(g.scalar(s), spike, "u = {u}");
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[grad], "u = {u}");
    }
}

#[test]
fn fan_out_accumulates() {
    let g = Graph::new();
    let x = g.param(Tensor::vector(vec![2.0, -1.0]));
    let y = g.mul(x, x).unwrap();
    let z = g.add(y, x).unwrap();
    let loss = g.sum(z);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[5.0, -1.0]);
}

#[test]
fn backward_is_repeatable() {
    let g = Graph::new();
    let x = g.param(t(&[2, 3], &[0.1, -0.4, 0.9, 1.3, -2.0, 0.2]));
    let w = g.param(t(&[3, 2], &[0.5, -0.3, 0.8, 0.1, -0.7, 0.6]));
    let y = g.matmul(x, w).unwrap();
    let y = g.tanh(y);
    let loss = g.sum(y);
    g.backward(loss).unwrap();
    let first = (g.grad(x).unwrap(), g.grad(w).unwrap());
    g.backward(loss).unwrap();
    assert_eq!(first, (g.grad(x).unwrap(), g.grad(w).unwrap()));
}

#[test]
fn detach_blocks_gradient() {
    let g = Graph::new();
    let x = g.param(Tensor::scalar(3.0));
    let d = g.detach(x);
    let y = g.mul(d, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[3.0]);
}

#[test]
fn errors() {
    let g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(g.matmul(a, b), Err(Error::ShapeMismatch { .. })));
    let c = g.constant(Tensor::zeros(&[4]));
    assert!(matches!(g.add(a, c), Err(Error::ShapeMismatch { .. })));
    let neg = g.constant(Tensor::vector(vec![1.0, -1.0]));
    assert!(matches!(g.log(neg), Err(Error::Domain { .. })));
    assert!(matches!(g.backward(a), Err(Error::NonScalar(_))));
}

#[test]
fn suffix_broadcast_gradient_sums() {
    let g = Graph::new();
    let x = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let bias = g.param(Tensor::vector(vec![0.0, 0.0]));
    let y = g.add(x, bias).unwrap();
    let y = g.mul(y, x).unwrap();
    let loss = g.sum(y);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(bias).unwrap().data(), &[4.0, 6.0]);
}

#[test]
fn finite_differences_of_simple_functions() {
    let point = Tensor::vector(vec![0.3, -1.2, 2.5]);
    let sq = finite_diff_check(
        |g, x| {
            let y = g.mul(x, x)?;
            Ok(g.sum(y))
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert!(sq < 1e-6, "{sq}");
    let lin = finite_diff_check(|g, x| Ok(g.sum(g.affine(x, 3.0, 1.0))), &point, 1e-5).unwrap();
    assert!(lin < 1e-10, "{lin}");
    assert!(finite_diff_check(|g, x| Ok(g.sum(x)), &point, 1.0).is_err());
    assert!(matches!(finite_diff_check(|_, x| Ok(x), &point, 1e-5), Err(Error::NonScalar(_))));
}

#[test]
fn shape_ops_round_trip_gradients() {
    let point = t(&[2, 3, 2], &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8, 0.9, -1.0, 1.1, 1.2]);
    let err = finite_diff_check(
        |g, x| {
            let r = g.reverse_valid(x, &[3, 2])?;
            let u = g.unfold_time(r, 2, 1)?;
            let s = g.slice(u, 2, 1, 2)?;
            let sel = g.select(x, 1, 2)?;
            let st = g.stack(&[sel, sel], 1)?;
            let c = g.concat(&[s, st], 2)?;
            let c = g.tanh(c);
            let tr = g.reshape(c, &[4, 4])?;
            let tr = g.transpose(tr)?;
            let e = g.exp(tr);
            let l = g.log(e)?;
            let ls = g.log_softmax(l)?;
            let p = g.mul(ls, tr)?;
            Ok(g.mean(p))
        },
        &point,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn boxcar_matches_rule_on_grid() {
    let spec = SurrogateSpec::default();
    let us: Vec<f64> = (0..=600).map(|i| -2.0 + i as f64 * 0.01).collect();
    let g = Graph::new();
    let x = g.param(Tensor::vector(us.clone()));
    let s = g.heaviside_surrogate(x, spec);
    let loss = g.sum(s);
    g.backward(loss).unwrap();
    let grad = g.grad(x).unwrap();
    for (&u, &d) in us.iter().zip(grad.data()) {
        let want = if (u - 1.0).abs() <= 0.5 { 0.5 } else { 0.0 };
        assert_eq!(d, want, "u = {u}");
    }
}

proptest! {
    #[test]
    fn heaviside_output_is_binary(values in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        let g = Graph::new();
        let x = g.constant(Tensor::vector(values));
        let s = g.heaviside_surrogate(x, SurrogateSpec::default());
        prop_assert!(g.tensor(s).data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn log_softmax_rows_normalize(values in prop::collection::vec(-50f64..50.0, 12)) {
        let g = Graph::new();
        let x = g.constant(Tensor::new(vec![3, 4], values).unwrap());
        let y = g.tensor(g.log_softmax(x).unwrap());
        for row in y.data().chunks(4) {
            let total: f64 = row.iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
