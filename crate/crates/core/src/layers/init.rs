use crate::rng::Xoshiro256;
use crate::tensor::Tensor;

/// Tensor with entries uniform in `[-bound, bound)`.
pub fn uniform_tensor(rng: &mut Xoshiro256, shape: &[usize], bound: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.uniform(-bound, bound));
    t
}

/// `1 / sqrt(fan_in)`.
pub(crate) fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}
