mod common;

use common::{module_fd_check, random_tensor, weighted_sum};
use spiking_ctc::autodiff::{finite_diff_check, finite_diff_check_many};
use spiking_ctc::layers::{
    Activation, BatchNormState, ConvParams, ConvSpec, EncoderConfig, EncoderParams, LayerKind,
    LayerSpec, LstmParams, RnnParams,
};
use spiking_ctc::rng::Xoshiro256;
use spiking_ctc::Tensor;

const TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;

fn shape(rng: &mut Xoshiro256) -> (usize, usize, usize, usize) {
    (
        rng.range_inclusive(1, 3),
        rng.range_inclusive(2, 5),
        rng.range_inclusive(1, 4),
        rng.range_inclusive(1, 4),
    )
}

fn lengths(rng: &mut Xoshiro256, batch: usize, t_max: usize) -> Vec<usize> {
    let mut l: Vec<usize> = (0..batch).map(|_| rng.range_inclusive(2, t_max)).collect();
    l[0] = t_max;
    l
}

#[test]
fn lstm_gradients() {
    for seed in 0..INSTANCES {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let (batch, t_max, input, hidden) = shape(&mut rng);
        let mut p = LstmParams::init(&mut rng, input, hidden);
        p.bias.data_mut().iter_mut().for_each(|v| *v = rng.normal() * 0.5);
        let x = random_tensor(&mut rng, &[batch, t_max, input], 1.0);
        let lens = lengths(&mut rng, batch, t_max);
        let err = module_fd_check(&p, &x, |g, b, p, xv| {
            let out = p.forward(g, b, "", xv, &lens).unwrap();
            weighted_sum(g, out.output, seed)
        });
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn rnn_gradients() {
    for seed in 0..INSTANCES {
        let mut rng = Xoshiro256::seed_from_u64(100 + seed);
        let (batch, t_max, input, hidden) = shape(&mut rng);
        let act = [Activation::Tanh, Activation::Sigmoid, Activation::Relu][seed as usize % 3];
        let p = RnnParams::init(&mut rng, input, hidden, false, act);
        let x = random_tensor(&mut rng, &[batch, t_max, input], 1.0);
        let lens = lengths(&mut rng, batch, t_max);
        let err = module_fd_check(&p, &x, |g, b, p, xv| {
            let out = p.forward(g, b, "", xv, &lens).unwrap();
            weighted_sum(g, out.output, seed)
        });
        assert!(err < TOL, "seed {seed} {act:?}: {err:e}");
    }
}

#[test]
fn batch_norm_train_mode_gradients() {
    for seed in 0..INSTANCES {
        let mut rng = Xoshiro256::seed_from_u64(200 + seed);
        let (batch, t_max, _, features) = shape(&mut rng);
        let mut bn = BatchNormState::new(features);
        bn.gamma.data_mut().iter_mut().for_each(|v| *v = 1.0 + 0.3 * rng.normal());
        bn.beta.data_mut().iter_mut().for_each(|v| *v = 0.3 * rng.normal());
        let x = random_tensor(&mut rng, &[batch, t_max, features], 1.0);
        let lens = lengths(&mut rng, batch, t_max);
        let err = module_fd_check(&bn, &x, |g, b, bn, xv| {
            let (y, _) = bn.apply(g, b, "", xv, &lens).unwrap();
            weighted_sum(g, y, seed)
        });
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn rnn_with_batch_norm_gradients() {
    for seed in 0..INSTANCES {
        let mut rng = Xoshiro256::seed_from_u64(300 + seed);
        let (batch, t_max, input, hidden) = shape(&mut rng);
        let p = RnnParams::init(&mut rng, input, hidden, true, Activation::Tanh);
        let x = random_tensor(&mut rng, &[batch, t_max, input], 1.0);
        let lens = lengths(&mut rng, batch, t_max);
        let err = module_fd_check(&p, &x, |g, b, p, xv| {
            let out = p.forward(g, b, "", xv, &lens).unwrap();
            weighted_sum(g, out.output, seed)
        });
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn conv_gradients() {
    for seed in 0..INSTANCES {
        let mut rng = Xoshiro256::seed_from_u64(400 + seed);
        let batch = rng.range_inclusive(1, 3);
        let t_max = rng.range_inclusive(3, 9);
        let input = rng.range_inclusive(1, 4);
        let spec = ConvSpec {
            channels: rng.range_inclusive(1, 5),
            kernel: 3,
            stride: 2,
        };
        let mut p = ConvParams::init(&mut rng, &spec, input);
        p.bias.data_mut().iter_mut().for_each(|v| *v = 0.2 * rng.normal());
        let x = random_tensor(&mut rng, &[batch, t_max, input], 1.0);
        let lens: Vec<usize> = (0..batch).map(|i| if i == 0 { t_max } else { rng.range_inclusive(3, t_max) }).collect();
        let err = module_fd_check(&p, &x, |g, b, p, xv| {
            let (y, _) = p.forward(g, b, "", xv, &lens).unwrap();
            weighted_sum(g, y, seed)
        });
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn log_softmax_gradients() {
    for seed in 0..INSTANCES {
        let mut rng = Xoshiro256::seed_from_u64(500 + seed);
        let rows = rng.range_inclusive(1, 5);
        let width = rng.range_inclusive(2, 6);
        let x = random_tensor(&mut rng, &[rows, width], 2.0);
        let err = finite_diff_check(
            |g, x| {
                let y = g.log_softmax(x)?;
                Ok(weighted_sum(g, y, seed))
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn ctc_gradients() {
    for seed in 0..INSTANCES {
        let mut rng = Xoshiro256::seed_from_u64(600 + seed);
        let batch = rng.range_inclusive(1, 3);
        let t_max = rng.range_inclusive(3, 8);
        let vocab = rng.range_inclusive(2, 5);
        let x = random_tensor(&mut rng, &[batch, t_max, vocab], 1.0);
        let lens = lengths(&mut rng, batch, t_max);
        let targets: Vec<Vec<usize>> = lens
            .iter()
            .map(|&l| {
                let n = rng.range_inclusive(1, (l / 2).max(1));
                (0..n).map(|_| rng.range_inclusive(1, vocab - 1)).collect()
            })
            .collect();
        let err = finite_diff_check(
            |g, x| {
                let lp = g.log_softmax(x)?;
                Ok(g.ctc_loss(lp, &targets, &lens)?.loss)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn matmul_chain_gradients() {
    for seed in 0..INSTANCES {
        let mut rng = Xoshiro256::seed_from_u64(700 + seed);
        let (m, k, n) = (rng.range_inclusive(1, 4), rng.range_inclusive(1, 4), rng.range_inclusive(1, 4));
        let a = random_tensor(&mut rng, &[m, k], 1.0);
        let b = random_tensor(&mut rng, &[k, n], 1.0);
        let err = finite_diff_check_many(
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                let y = g.tanh(y);
                Ok(weighted_sum(g, y, seed))
            },
            &[a, b],
            1e-6,
        )
        .unwrap();
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn nonspiking_encoder_end_to_end_gradients() {
    for seed in 0..4 {
        let mut rng = Xoshiro256::seed_from_u64(800 + seed);
        let config = EncoderConfig {
            input_dim: 3,
            conv: ConvSpec {
                channels: 4,
                kernel: 3,
                stride: 2,
            },
            layers: vec![
                LayerSpec {
                    kind: LayerKind::Rnn,
                    hidden: 3,
                    bidirectional: true,
                },
                LayerSpec {
                    kind: LayerKind::Lstm,
                    hidden: 3,
                    bidirectional: true,
                },
            ],
            vocab: 4,
            rnn_activation: Activation::Tanh,
            ..EncoderConfig::default()
        };
        let params = EncoderParams::init(&config, seed).unwrap();
        let x = random_tensor(&mut rng, &[2, 11, 3], 1.0);
        let lens = vec![11, 9];
        let targets = vec![vec![1, 2], vec![3]];
        let err = module_fd_check(&params, &x, |g, b, p, xv| {
            let out = p.forward(g, b, xv, &lens).unwrap();
            g.ctc_loss(out.log_probs, &targets, &out.lengths).unwrap().loss
        });
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn finite_difference_tolerates_only_smooth_inputs() {
    let x = Tensor::vector(vec![0.9]);
    let err = finite_diff_check(
        |g, x| Ok(g.sum(g.heaviside_surrogate(x, Default::default()))),
        &x,
        1e-6,
    )
    .unwrap();
    assert!(err > 0.4);
}
