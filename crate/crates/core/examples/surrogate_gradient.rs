//! Shows the spike nonlinearity and its boxcar pseudo-derivative, then the
//! gradient a small LIF layer passes back to its input through time.
//!
//! ```text
//! cargo run --example surrogate_gradient
//! ```

use spiking_ctc::autodiff::{Graph, SurrogateSpec};
use spiking_ctc::layers::{lif_forward, LifParams};
use spiking_ctc::rng::Xoshiro256;
use spiking_ctc::Tensor;

fn main() -> spiking_ctc::Result<()> {
    let spec = SurrogateSpec::default();
    let g = Graph::new();
    let us: Vec<f64> = (0..=12).map(|i| -0.5 + 0.25 * i as f64).collect();
    let u = g.param(Tensor::vector(us.clone()));
    let s = g.heaviside_surrogate(u, spec);
    g.backward(g.sum(s))?;
    let grad = g.grad_or_zeros(u);
    println!("u\ts\tds/du");
    for (i, v) in us.iter().enumerate() {
        println!("{v:.2}\t{}\t{}", g.tensor(s).data()[i], grad.data()[i]);
    }

    let mut rng = Xoshiro256::seed_from_u64(1);
    let mut layer = LifParams::init(&mut rng, 3, 4, false);
    layer.w.data_mut().iter_mut().for_each(|w| *w *= 4.0);
    let frames = 12;
    let mut x = Tensor::zeros(&[1, frames, 3]);
    x.data_mut().iter_mut().for_each(|v| *v = rng.uniform(0.0, 1.0));
    let g = Graph::new();
    let xv = g.param(x);
    let (out, _) = lif_forward(&g, &layer, xv, &[frames])?;
    let last = g.select(out.membrane.unwrap(), 1, frames - 1)?;
    g.backward(g.sum(last))?;
    let gx = g.grad_or_zeros(xv);
    println!("\nspikes per frame and |d sum(u[T-1]) / d x[t]|:");
    for t in 0..frames {
        let spikes: f64 = g.tensor(out.output).data()[t * 4..t * 4 + 4].iter().sum();
        let mag: f64 = gx.data()[t * 3..t * 3 + 3].iter().map(|v| v.abs()).sum();
        println!("t={t:2}  spikes {spikes}  grad {mag:.5}");
    }
    Ok(())
}
