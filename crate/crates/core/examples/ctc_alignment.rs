//! CTC loss, its gradient and greedy decoding on a hand-made posterior.
//!
//! ```text
//! cargo run --example ctc_alignment
//! ```

use spiking_ctc::autodiff::Graph;
use spiking_ctc::loss::{ctc_greedy_decode, ErrorRate};
use spiking_ctc::Tensor;

fn main() -> spiking_ctc::Result<()> {
    // Blank, "1", "2" over six frames, peaked on the path 1 1 _ 2 2 _.
    let path = [1, 1, 0, 2, 2, 0];
    let vocab = 3;
    let mut logits = Tensor::zeros(&[1, path.len(), vocab]);
    for (t, &k) in path.iter().enumerate() {
        logits.data_mut()[t * vocab + k] = 3.0;
    }
    let target = vec![vec![1, 2]];
    let g = Graph::new();
    let x = g.param(logits);
    let lp = g.log_softmax(x)?;
    let ctc = g.ctc_loss(lp, &target, &[path.len()])?;
    g.backward(ctc.loss)?;
    println!("loss -ln p([1 2] | x) = {:.6}", g.scalar(ctc.loss));
    println!("gradient w.r.t. logits (blank, 1, 2):");
    for row in g.grad_or_zeros(x).data().chunks(vocab) {
        println!("  {:+.4} {:+.4} {:+.4}", row[0], row[1], row[2]);
    }
    let lpt = g.tensor(lp);
    let hyp = ctc_greedy_decode(lpt.data(), [1, path.len(), vocab], &[path.len()]);
    println!("greedy decode: {:?}", hyp[0]);
    let wrong = [1, 1, 2];
    println!(
        "token error rate of {wrong:?} against {:?}: {:.3}",
        target[0],
        ErrorRate::compute(&target[0], &wrong).rate
    );
    Ok(())
}
