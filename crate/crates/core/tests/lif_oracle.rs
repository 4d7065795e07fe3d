mod common;

use common::{lif_oracle, max_rel_diff, random_lif, random_tensor};
use spiking_ctc::autodiff::Graph;
use spiking_ctc::layers::lif_forward;
use spiking_ctc::rng::Xoshiro256;
use spiking_ctc::Tensor;

/// Runs one random instance and returns the worst relative gradient error.
fn check_instance(seed: u64, detach_reset: bool) -> f64 {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let t_len = rng.range_inclusive(1, 5);
    let hidden = rng.range_inclusive(1, 4);
    let input = rng.range_inclusive(1, 4);
    let batch = rng.range_inclusive(1, 2);
    let mut p = random_lif(&mut rng, input, hidden);
    p.detach_reset = detach_reset;
    let x = random_tensor(&mut rng, &[batch, t_len, input], 1.0);
    let n = batch * t_len * hidden;
    let c: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let d: Vec<f64> = (0..n).map(|_| rng.normal()).collect();

    let g = Graph::new();
    let xv = g.param(x.clone());
    let (out, b) = lif_forward(&g, &p, xv, &vec![t_len; batch]).unwrap();
    let cv = g.constant(Tensor::new(vec![batch, t_len, hidden], c.clone()).unwrap());
    let dv = g.constant(Tensor::new(vec![batch, t_len, hidden], d.clone()).unwrap());
    let sc = g.mul(out.output, cv).unwrap();
    let ud = g.mul(out.membrane.unwrap(), dv).unwrap();
    let total = g.add(g.sum(sc), g.sum(ud)).unwrap();
    g.backward(total).unwrap();

    let oracle = lif_oracle(&p, &x, &c, &d);
    assert_eq!(g.tensor(out.output).data(), oracle.spikes.as_slice(), "seed {seed}");
    let grads = b.gradients(&g);
    let mut worst = (g.scalar(total) - oracle.loss).abs() / oracle.loss.abs().max(1.0);
    worst = worst.max(max_rel_diff(grads[0].data(), &oracle.grad_w));
    worst = worst.max(max_rel_diff(grads[1].data(), &oracle.grad_v));
    worst = worst.max(max_rel_diff(grads[2].data(), &oracle.grad_alpha_raw));
    worst = worst.max(max_rel_diff(g.grad_or_zeros(xv).data(), &oracle.grad_x));
    worst
}

#[test]
fn lif_gradients_match_unrolled_recursion() {
    for seed in 0..100 {
        let err = check_instance(seed, false);
        assert!(err < 1e-10, "seed {seed}: {err:e}");
    }
}

#[test]
fn lif_gradients_match_with_detached_reset() {
    for seed in 100..150 {
        let err = check_instance(seed, true);
        assert!(err < 1e-10, "seed {seed}: {err:e}");
    }
}

#[test]
fn detached_reset_changes_gradients_not_values() {
    let mut rng = Xoshiro256::seed_from_u64(7);
    let mut p = random_lif(&mut rng, 3, 4);
    p.w.data_mut().iter_mut().for_each(|w| *w *= 3.0);
    let x = random_tensor(&mut rng, &[1, 5, 3], 1.0);
    let run = |p: &spiking_ctc::layers::LifParams| {
        let g = Graph::new();
        let xv = g.constant(x.clone());
        let (out, b) = lif_forward(&g, p, xv, &[5]).unwrap();
        let loss = g.sum(out.membrane.unwrap());
        g.backward(loss).unwrap();
        (g.tensor(out.output), b.gradients(&g))
    };
    let (s_full, g_full) = run(&p);
    p.detach_reset = true;
    let (s_det, g_det) = run(&p);
    assert_eq!(s_full, s_det);
    assert!(s_full.data().contains(&1.0));
    assert_ne!(g_full[0], g_det[0]);
}
