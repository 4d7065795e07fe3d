#![allow(dead_code)]

use spiking_ctc::autodiff::SurrogateSpec;
use spiking_ctc::layers::LifParams;
use spiking_ctc::rng::Xoshiro256;
use spiking_ctc::Tensor;

pub fn random_tensor(rng: &mut Xoshiro256, shape: &[usize], scale: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = scale * rng.normal());
    t
}

pub fn random_lif(rng: &mut Xoshiro256, input: usize, hidden: usize) -> LifParams {
    LifParams {
        w: random_tensor(rng, &[hidden, input], 1.5),
        v: random_tensor(rng, &[hidden, hidden], 0.8),
        alpha_raw: random_tensor(rng, &[hidden], 1.0),
        bn: None,
        surrogate: SurrogateSpec::default(),
        detach_reset: false,
    }
}

/// Gradients of a LIF layer computed by explicit backward recursion over
/// time, independent of the tape.
pub struct LifOracle {
    pub loss: f64,
    pub spikes: Vec<f64>,
    pub membrane: Vec<f64>,
    pub grad_x: Vec<f64>,
    pub grad_w: Vec<f64>,
    pub grad_v: Vec<f64>,
    pub grad_alpha_raw: Vec<f64>,
}

/// Loss `sum(c * s) + sum(d * u)` over `x: [B, T, in]` with all frames valid.
pub fn lif_oracle(
    p: &LifParams,
    x: &Tensor,
    c: &[f64],
    d: &[f64],
) -> LifOracle {
    let (b, t_max, n_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let h = p.w.shape()[0];
    let w = p.w.data();
    let v = p.v.data();
    let alpha: Vec<f64> = p.alpha_raw.data().iter().map(|a| 1.0 / (1.0 + (-a).exp())).collect();
    let spec = p.surrogate;
    let idx = |bi: usize, t: usize, k: usize| (bi * t_max + t) * h + k;

    let mut current = vec![0.0; b * t_max * h];
    let mut u = vec![0.0; b * t_max * h];
    let mut s = vec![0.0; b * t_max * h];
    for bi in 0..b {
        for t in 0..t_max {
            for k in 0..h {
                let mut i_k = 0.0;
                for j in 0..n_in {
                    i_k += w[k * n_in + j] * x.data()[(bi * t_max + t) * n_in + j];
                }
                let (u_prev, s_prev) = if t == 0 {
                    (0.0, 0.0)
                } else {
                    (u[idx(bi, t - 1, k)], s[idx(bi, t - 1, k)])
                };
                if t > 0 {
                    for m in 0..h {
                        i_k += v[k * h + m] * s[idx(bi, t - 1, m)];
                    }
                }
                let uk = alpha[k] * (u_prev - s_prev) + (1.0 - alpha[k]) * i_k;
                current[idx(bi, t, k)] = i_k;
                u[idx(bi, t, k)] = uk;
                s[idx(bi, t, k)] = spec.forward(uk);
            }
        }
    }
    let loss: f64 = (0..s.len()).map(|i| c[i] * s[i] + d[i] * u[i]).sum();

    let mut gu = d.to_vec();
    let mut gs = c.to_vec();
    let mut grad_x = vec![0.0; x.numel()];
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_v = vec![0.0; v.len()];
    let mut grad_alpha = vec![0.0; h];
    for bi in 0..b {
        for t in (0..t_max).rev() {
            for k in 0..h {
                let i = idx(bi, t, k);
                gu[i] += gs[i] * spec.derivative(u[i]);
                let (u_prev, s_prev) = if t == 0 {
                    (0.0, 0.0)
                } else {
                    (u[idx(bi, t - 1, k)], s[idx(bi, t - 1, k)])
                };
                grad_alpha[k] += gu[i] * (u_prev - s_prev - current[i]);
                let gi = (1.0 - alpha[k]) * gu[i];
                if t > 0 {
                    let ip = idx(bi, t - 1, k);
                    gu[ip] += alpha[k] * gu[i];
                    if !p.detach_reset {
                        gs[ip] -= alpha[k] * gu[i];
                    }
                    for m in 0..h {
                        let sm = idx(bi, t - 1, m);
                        grad_v[k * h + m] += gi * s[sm];
                        gs[sm] += v[k * h + m] * gi;
                    }
                }
                for j in 0..n_in {
                    let xi = (bi * t_max + t) * n_in + j;
                    grad_w[k * n_in + j] += gi * x.data()[xi];
                    grad_x[xi] += w[k * n_in + j] * gi;
                }
            }
        }
    }
    let grad_alpha_raw = grad_alpha
        .iter()
        .zip(&alpha)
        .map(|(g, a)| g * a * (1.0 - a))
        .collect();
    LifOracle {
        loss,
        spikes: s,
        membrane: u,
        grad_x,
        grad_w,
        grad_v,
        grad_alpha_raw,
    }
}

/// Largest `|a - b| / max(1, |b|)`.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Negative log-likelihood of `target` by enumerating every frame labelling.
pub fn ctc_brute_force(log_probs: &[f64], frames: usize, vocab: usize, target: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut path = vec![0usize; frames];
    loop {
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &l in &path {
            if Some(l) != prev && l != 0 {
                collapsed.push(l);
            }
            prev = Some(l);
        }
        if collapsed == target {
            let lp: f64 = path.iter().enumerate().map(|(t, &l)| log_probs[t * vocab + l]).sum();
            total += lp.exp();
        }
        let mut pos = 0;
        loop {
            if pos == frames {
                return -total.ln();
            }
            path[pos] += 1;
            if path[pos] < vocab {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Central-difference check of every trainable tensor of `module` and of
/// the input `x`. `loss` must produce a scalar from smooth operations.
/// Returns the largest `|analytic - numeric| / max(1, |analytic|)`.
pub fn module_fd_check<M, F>(module: &M, x: &Tensor, loss: F) -> f64
where
    M: spiking_ctc::layers::Module + Clone,
    F: Fn(&spiking_ctc::autodiff::Graph, &spiking_ctc::layers::Bindings, &M, spiking_ctc::autodiff::Var) -> spiking_ctc::autodiff::Var,
{
    use spiking_ctc::autodiff::Graph;
    use spiking_ctc::layers::{Bindings, Role};
    const EPS: f64 = 1e-6;

    let g = Graph::new();
    let b = Bindings::new(&g, module);
    let xv = g.param(x.clone());
    let out = loss(&g, &b, module, xv);
    g.backward(out).unwrap();
    let mut analytic = b.gradients(&g);
    analytic.push(g.grad_or_zeros(xv));

    let eval = |m: &M, x: &Tensor| {
        let g = Graph::new();
        let b = Bindings::frozen(&g, m);
        let xv = g.constant(x.clone());
        let out = loss(&g, &b, m, xv);
        g.scalar(out)
    };
    let perturbed = |k: usize, i: usize, delta: f64| {
        let mut m = module.clone();
        let mut xp = x.clone();
        if k == analytic.len() - 1 {
            xp.data_mut()[i] += delta;
        } else {
            let mut seen = 0;
            m.visit_mut("", &mut |_, t, role| {
                if role == Role::Trainable {
                    if seen == k {
                        t.data_mut()[i] += delta;
                    }
                    seen += 1;
                }
            });
        }
        eval(&m, &xp)
    };
    let mut worst = 0.0f64;
    for (k, grad) in analytic.iter().enumerate() {
        for i in 0..grad.numel() {
            let numeric = (perturbed(k, i, EPS) - perturbed(k, i, -EPS)) / (2.0 * EPS);
            let a = grad.data()[i];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    worst
}

/// `sum(weights * y)` for a fixed random weighting of `y`'s entries.
pub fn weighted_sum(
    g: &spiking_ctc::autodiff::Graph,
    y: spiking_ctc::autodiff::Var,
    seed: u64,
) -> spiking_ctc::autodiff::Var {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let w = random_tensor(&mut rng, &g.shape(y), 1.0);
    let prod = g.mul(y, g.constant(w)).unwrap();
    g.sum(prod)
}
