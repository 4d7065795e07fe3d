mod common;

use common::{ctc_brute_force, random_tensor};
use proptest::prelude::*;
use spiking_ctc::autodiff::Graph;
use spiking_ctc::loss::ctc::collapse;
use spiking_ctc::loss::{ctc_item, is_feasible};
use spiking_ctc::rng::Xoshiro256;

fn log_softmax_rows(x: &[f64], vocab: usize) -> Vec<f64> {
    x.chunks(vocab)
        .flat_map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter().map(move |v| v - lse)
        })
        .collect()
}

#[test]
fn forward_backward_matches_enumeration() {
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 200 {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        seed += 1;
        let frames = rng.range_inclusive(1, 8);
        let vocab = rng.range_inclusive(2, 4);
        let len = rng.range_inclusive(0, 3);
        let target: Vec<usize> = (0..len).map(|_| rng.range_inclusive(1, vocab - 1)).collect();
        if !is_feasible(frames, &target) {
            assert!(ctc_item(&vec![0.0; frames * vocab], frames, vocab, &target).is_none());
            continue;
        }
        let raw = random_tensor(&mut rng, &[frames, vocab], 2.0);
        let lp = log_softmax_rows(raw.data(), vocab);
        let expected = ctc_brute_force(&lp, frames, vocab, &target);
        let got = ctc_item(&lp, frames, vocab, &target).unwrap().loss;
        assert!(
            (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
            "frames {frames} vocab {vocab} target {target:?}: {got} vs {expected}"
        );
        checked += 1;
    }
}

#[test]
fn batch_loss_is_mean_of_items() {
    let mut rng = Xoshiro256::seed_from_u64(42);
    let (b, t, v) = (3, 6, 4);
    let raw = random_tensor(&mut rng, &[b, t, v], 1.0);
    let targets = vec![vec![1, 2], vec![3, 3], vec![2]];
    let lens = vec![6, 5, 3];
    let g = Graph::new();
    let lp = g.log_softmax(g.constant(raw)).unwrap();
    let loss = g.ctc_loss(lp, &targets, &lens).unwrap();
    let data = g.tensor(lp);
    let mut total = 0.0;
    for i in 0..b {
        let rows = &data.data()[i * t * v..(i * t + lens[i]) * v];
        total += ctc_brute_force(rows, lens[i], v, &targets[i]);
    }
    assert!((g.scalar(loss.loss) - total / 3.0).abs() < 1e-9);
}

#[test]
fn infeasible_items_flagged_and_excluded() {
    let g = Graph::new();
    let lp = g.log_softmax(g.constant(spiking_ctc::Tensor::zeros(&[2, 3, 3]))).unwrap();
    let loss = g.ctc_loss(lp, &[vec![1, 1], vec![1, 2]], &[3, 2]).unwrap();
    assert_eq!(loss.feasible, vec![true, true]);
    let loss = g.ctc_loss(lp, &[vec![1, 1], vec![1, 1]], &[3, 2]).unwrap();
    assert_eq!(loss.feasible, vec![true, false]);
    assert!(loss.per_item[1].is_infinite());
    assert!(g.scalar(loss.loss).is_finite());
}

proptest! {
    #[test]
    fn collapse_removes_blanks_and_repeats(labels in proptest::collection::vec(0usize..4, 0..12)) {
        let c = collapse(&labels);
        prop_assert!(c.iter().all(|&k| k != 0));
        prop_assert!(c.len() <= labels.len());
        let spaced: Vec<usize> = c.iter().flat_map(|&k| [k, 0]).collect();
        prop_assert_eq!(collapse(&spaced), c);
    }

    #[test]
    fn loss_is_nonnegative(seed in 0u64..1000) {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let frames = rng.range_inclusive(2, 10);
        let vocab = rng.range_inclusive(2, 6);
        let target: Vec<usize> = (0..frames / 2).map(|_| rng.range_inclusive(1, vocab - 1)).collect();
        prop_assume!(is_feasible(frames, &target));
        let raw = random_tensor(&mut rng, &[frames, vocab], 3.0);
        let lp = log_softmax_rows(raw.data(), vocab);
        let item = ctc_item(&lp, frames, vocab, &target).unwrap();
        prop_assert!(item.loss >= -1e-12);
        for row in item.grad.chunks(vocab) {
            // Minus the per-frame alignment posterior.
            prop_assert!((row.iter().sum::<f64>() + 1.0).abs() < 1e-9);
        }
    }
}
