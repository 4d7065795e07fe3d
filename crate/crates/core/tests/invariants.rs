mod common;

use common::{random_lif, random_tensor};
use proptest::prelude::*;
use spiking_ctc::autodiff::Graph;
use spiking_ctc::layers::{
    lif_forward, run_bidirectional, spike_rates, BnMode, Direction, EncoderConfig, EncoderParams,
    LifParams, Module, Role,
};
use spiking_ctc::rng::Xoshiro256;
use spiking_ctc::Tensor;

fn spike_count(p: &LifParams, x: &Tensor) -> f64 {
    let g = Graph::new();
    let t = x.shape()[1];
    let (out, _) = lif_forward(&g, p, g.constant(x.clone()), &vec![t; x.shape()[0]]).unwrap();
    g.tensor(out.output).data().iter().sum()
}

/// Fraction of instances in which raising the threshold never adds spikes.
fn monotone_fraction(recurrent: impl Fn(&mut Tensor)) -> (usize, usize) {
    let mut ok = 0;
    let instances = 50;
    for seed in 0..instances {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut p = random_lif(&mut rng, 4, 6);
        recurrent(&mut p.v);
        let x = random_tensor(&mut rng, &[2, 20, 4], 1.0);
        let mut prev = f64::INFINITY;
        let mut monotone = true;
        for step in 0..30 {
            p.surrogate.threshold = 0.2 + 0.1 * step as f64;
            let n = spike_count(&p, &x);
            monotone &= n <= prev;
            prev = n;
        }
        ok += monotone as usize;
    }
    (ok, instances as usize)
}

#[test]
fn spikes_are_binary() {
    for seed in 0..50 {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut p = random_lif(&mut rng, 3, 5);
        p.bn = Some(spiking_ctc::layers::BatchNormState::new(5));
        let x = random_tensor(&mut rng, &[2, 7, 3], 2.0);
        let g = Graph::new();
        let (out, _) = lif_forward(&g, &p, g.constant(x), &[7, 4]).unwrap();
        assert!(g.tensor(out.output).data().iter().all(|&s| s == 0.0 || s == 1.0));
    }
}

#[test]
fn vanishing_leak_makes_membrane_follow_current() {
    for seed in 0..20 {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut p = LifParams::init(&mut rng, 3, 4, false);
        p.alpha_raw = Tensor::full(&[4], -20.0);
        let x = random_tensor(&mut rng, &[1, 6, 3], 1.0);
        let g = Graph::new();
        let (out, _) = lif_forward(&g, &p, g.constant(x.clone()), &[6]).unwrap();
        let s = g.tensor(out.output);
        let u = g.tensor(out.membrane.unwrap());
        let (w, v) = (p.w.data(), p.v.data());
        for t in 0..6 {
            for k in 0..4 {
                let mut i = (0..3).map(|j| w[k * 3 + j] * x.data()[t * 3 + j]).sum::<f64>();
                if t > 0 {
                    i += (0..4).map(|m| v[k * 4 + m] * s.data()[(t - 1) * 4 + m]).sum::<f64>();
                }
                assert!((u.data()[t * 4 + k] - i).abs() < 1e-8 * i.abs().max(1.0));
            }
        }
    }
}

#[test]
fn spike_count_non_increasing_in_threshold_without_recurrence() {
    let (ok, n) = monotone_fraction(|v| v.data_mut().iter_mut().for_each(|x| *x = 0.0));
    assert_eq!(ok, n);
}

fn spiking_encoder(seed: u64, bidirectional: bool) -> EncoderParams {
    let mut config = EncoderConfig::replacement(2, 2, 6, true);
    config.input_dim = 5;
    config.conv.channels = 8;
    config.vocab = 5;
    for l in &mut config.layers {
        l.bidirectional = bidirectional;
    }
    EncoderParams::init(&config, seed).unwrap()
}

/// Log-probabilities of the valid frames of each item.
fn run_encoder(params: &EncoderParams, x: &Tensor, lengths: &[usize]) -> Vec<Vec<f64>> {
    let g = Graph::new();
    let b = spiking_ctc::layers::Bindings::frozen(&g, params);
    let out = params.forward(&g, &b, g.constant(x.clone()), lengths).unwrap();
    let lp = g.tensor(out.log_probs);
    let (t_max, v) = (lp.shape()[1], lp.shape()[2]);
    out.lengths
        .iter()
        .enumerate()
        .map(|(i, &l)| lp.data()[i * t_max * v..(i * t_max + l) * v].to_vec())
        .collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_input_gives_zero_output() {
    for seed in 0..10 {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let p = random_lif(&mut rng, 3, 4);
        assert_eq!(spike_count(&p, &Tensor::zeros(&[2, 9, 3])), 0.0);
    }
    let params = spiking_encoder(3, true);
    let g = Graph::new();
    let b = spiking_ctc::layers::Bindings::frozen(&g, &params);
    let out = params.forward(&g, &b, g.constant(Tensor::zeros(&[2, 15, 5])), &[15, 11]).unwrap();
    let rates = spike_rates(&g, &out);
    assert_eq!(rates.len(), 2);
    assert!(rates.iter().all(|&(_, r)| r == 0.0));
}

#[test]
fn bidirectional_layer_is_reversal_equivariant() {
    for seed in 0..20 {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let p = random_lif(&mut rng, 3, 4);
        let x = random_tensor(&mut rng, &[3, 8, 3], 1.0);
        let lens = [8, 5, 2];
        let run = |g: &Graph, x| {
            let b = spiking_ctc::layers::Bindings::frozen(g, &p);
            run_bidirectional(g, x, &lens, |xi, _: Direction| {
                Ok(p.forward(g, &b, "", xi, &lens)?.output)
            })
            .unwrap()
        };
        let g = Graph::new();
        let xv = g.constant(x);
        let y = g.tensor(run(&g, xv));
        let y_rev = g.tensor(run(&g, g.reverse_valid(xv, &lens).unwrap()));
        for (i, &len) in lens.iter().enumerate() {
            for t in 0..len {
                for k in 0..4 {
                    let at = |tt: usize, kk: usize| ((i * 8 + tt) * 8) + kk;
                    let r = len - 1 - t;
                    assert_eq!(y_rev.data()[at(t, k)], y.data()[at(r, 4 + k)]);
                    assert_eq!(y_rev.data()[at(t, 4 + k)], y.data()[at(r, k)]);
                }
            }
        }
    }
}

#[test]
fn eval_mode_outputs_independent_of_batch_padding() {
    for seed in 0..10 {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut params = spiking_encoder(seed, true);
        params.visit_mut("", &mut |name, t, role| {
            if role == Role::Buffer {
                let var = name.ends_with("running_var");
                t.data_mut().iter_mut().for_each(|v| {
                    *v = if var { 0.5 + rng.next_f64() } else { 0.3 * rng.normal() }
                });
            }
        });
        params.set_mode(BnMode::Eval);
        let lens = [17, 9, 4];
        let t_max = 17;
        let mut x = random_tensor(&mut rng, &[3, t_max, 5], 1.5);
        for (i, &l) in lens.iter().enumerate() {
            for t in l..t_max {
                for f in 0..5 {
                    x.data_mut()[(i * t_max + t) * 5 + f] = 100.0 * rng.normal();
                }
            }
        }
        let batched = run_encoder(&params, &x, &lens);
        for (i, &l) in lens.iter().enumerate() {
            let item = Tensor::new(vec![1, l, 5], x.data()[i * t_max * 5..(i * t_max + l) * 5].to_vec()).unwrap();
            let alone = run_encoder(&params, &item, &[l]);
            assert!(max_abs(&alone[0], &batched[i]) < 1e-9, "seed {seed} item {i}");
        }
    }
}

#[test]
fn train_mode_outputs_independent_of_trailing_padding() {
    for seed in 0..10 {
        let mut rng = Xoshiro256::seed_from_u64(50 + seed);
        let params = spiking_encoder(seed, true);
        let len = 13;
        let x = random_tensor(&mut rng, &[1, len, 5], 1.5);
        let pad = rng.range_inclusive(1, 9);
        let mut padded = x.data().to_vec();
        padded.extend((0..pad * 5).map(|_| 50.0 * rng.normal()));
        let padded = Tensor::new(vec![1, len + pad, 5], padded).unwrap();
        let a = run_encoder(&params, &x, &[len]);
        let b = run_encoder(&params, &padded, &[len]);
        assert!(max_abs(&a[0], &b[0]) < 1e-9, "seed {seed}");
    }
}

proptest! {
    #[test]
    fn encoder_spikes_binary(seed in 0u64..500, frames in 5usize..20) {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let params = spiking_encoder(seed, seed % 2 == 0);
        let x = random_tensor(&mut rng, &[1, frames, 5], 2.0);
        let g = Graph::new();
        let b = spiking_ctc::layers::Bindings::frozen(&g, &params);
        let out = params.forward(&g, &b, g.constant(x), &[frames]).unwrap();
        for (_, s) in &out.spikes {
            prop_assert!(g.tensor(*s).data().iter().all(|&v| v == 0.0 || v == 1.0));
        }
        for (_, r) in spike_rates(&g, &out) {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
