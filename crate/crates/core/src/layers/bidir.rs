use crate::autodiff::{Graph, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Runs `layer` over `x` and over its per-item time reversal, re-reverses
/// the second result and concatenates both on the feature axis.
///
/// Reversal respects `lengths`, so padding frames stay at the end in both
/// directions and never feed valid frames.
pub fn run_bidirectional<F>(g: &Graph, x: Var, lengths: &[usize], mut layer: F) -> Result<Var>
where
    F: FnMut(Var, Direction) -> Result<Var>,
{
    let fwd = layer(x, Direction::Forward)?;
    let reversed = g.reverse_valid(x, lengths)?;
    let bwd = layer(reversed, Direction::Backward)?;
    let bwd = g.reverse_valid(bwd, lengths)?;
    g.concat(&[fwd, bwd], 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{rnn_forward, Activation, RnnParams};
    use crate::rng::Xoshiro256;
    use crate::tensor::Tensor;

    fn tied_rnn() -> RnnParams {
        let mut rng = Xoshiro256::seed_from_u64(3);
        RnnParams::init(&mut rng, 2, 3, false, Activation::Tanh)
    }

    #[test]
    fn palindrome_gives_mirrored_halves() {
        let p = tied_rnn();
        let frames = [[0.1, 0.9], [-0.4, 0.3], [0.7, -0.2], [-0.4, 0.3], [0.1, 0.9]];
        let data: Vec<f64> = frames.iter().flatten().copied().collect();
        let g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 5, 2], data).unwrap());
        let y = run_bidirectional(&g, x, &[5], |xi, _| Ok(rnn_forward(&g, &p, xi, &[5])?.0.output))
            .unwrap();
        let y = g.tensor(y);
        assert_eq!(y.shape(), &[1, 5, 6]);
        for t in 0..5 {
            for h in 0..3 {
                assert_eq!(y.at(&[0, t, h]), y.at(&[0, 4 - t, 3 + h]));
            }
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let mut p = tied_rnn();
        p.activation = Activation::Relu;
        let g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 4, 2]));
        let y = run_bidirectional(&g, x, &[4, 3], |xi, _| {
            Ok(rnn_forward(&g, &p, xi, &[4, 3])?.0.output)
        })
        .unwrap();
        assert!(g.tensor(y).data().iter().all(|&v| v == 0.0));
    }
}
