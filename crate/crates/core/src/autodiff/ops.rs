use super::kernels::{gemm, log_sum_exp, sigmoid, split_axis};
use super::{Graph, Node, SurrogateSpec, Var};
use crate::error::{Error, Result};
use crate::loss::ctc::ctc_item;
use crate::tensor::Tensor;

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine {
        x: Var,
        scale: f64,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
        lens: Vec<usize>,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape(Var),
    ReverseValid {
        x: Var,
        lengths: Vec<usize>,
    },
    UnfoldTime {
        x: Var,
        kernel: usize,
        stride: usize,
    },
    Heaviside {
        u: Var,
        spec: SurrogateSpec,
    },
    LogSoftmax(Var),
    BatchNorm {
        z: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        mask: Vec<bool>,
        train: bool,
    },
    Ctc {
        x: Var,
        local: Vec<f64>,
    },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![*a, *b],
            Affine { x, .. }
            | Slice { x, .. }
            | ReverseValid { x, .. }
            | UnfoldTime { x, .. }
            | Ctc { x, .. } => vec![*x],
            Transpose(x) | Sigmoid(x) | Tanh(x) | Relu(x) | Log(x) | Exp(x) | Sum(x)
            | Mean(x) | Reshape(x) | LogSoftmax(x) => vec![*x],
            Heaviside { u, .. } => vec![*u],
            Concat { inputs, .. } => inputs.clone(),
            BatchNorm { z, gamma, beta, .. } => vec![*z, *gamma, *beta],
        }
    }
}

/// Normalization statistics for [`Graph::batch_norm`].
#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a> {
    /// Normalize with statistics of the valid rows of this batch.
    Train { eps: f64 },
    /// Normalize with fixed running statistics.
    Eval {
        mean: &'a [f64],
        var: &'a [f64],
        eps: f64,
    },
}

/// Per-feature statistics of one training-mode batch-norm call.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (`count - 1`) variance, used for the running estimate.
    pub var_unbiased: Vec<f64>,
    pub count: usize,
}

/// Output of [`Graph::ctc_loss`].
#[derive(Clone, Debug)]
pub struct CtcLoss {
    /// Mean negative log-likelihood over the feasible items.
    pub loss: Var,
    /// Per-item negative log-likelihood; `+inf` for infeasible items.
    pub per_item: Vec<f64>,
    pub feasible: Vec<bool>,
}

fn suffix_broadcast(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

impl Graph {
    fn binary(
        &self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if !suffix_broadcast(ta.shape(), tb.shape()) {
                return Err(Error::ShapeMismatch {
                    op: name,
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let bd = tb.data();
            let nb = bd.len();
            let data = ta
                .data()
                .chunks(nb)
                .flat_map(|chunk| chunk.iter().zip(bd).map(|(&x, &y)| f(x, y)))
                .collect();
            Tensor::from_parts(ta.shape().to_vec(), data)
        };
        Ok(self.push(value, op))
    }

    /// Elementwise `a + b`; `b` may broadcast over leading axes of `a`.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.nodes.borrow()[x.0].value.map(|v| scale * v + shift);
        self.push(value, Op::Affine { x, scale })
    }

    pub fn scale(&self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// Copy of `x` that stops gradient flow.
    pub fn detach(&self, x: Var) -> Var {
        let value = self.tensor(x);
        self.push_node(value, Op::Leaf, false)
    }

    /// 2-D matrix product `[m, k] x [k, n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (sa, sb) = (ta.shape(), tb.shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    lhs: sa.to_vec(),
                    rhs: sb.to_vec(),
                });
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, ta.data(), (k, 1), tb.data(), (n, 1), &mut c, 0.0);
            Tensor::from_parts(vec![m, n], c)
        };
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&self, x: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x.0].value;
            if t.ndim() != 2 {
                return Err(Error::ShapeMismatch {
                    op: "transpose",
                    lhs: t.shape().to_vec(),
                    rhs: vec![],
                });
            }
            let (r, c) = (t.shape()[0], t.shape()[1]);
            let d = t.data();
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = d[i * c + j];
                }
            }
            Tensor::from_parts(vec![c, r], out)
        };
        Ok(self.push(value, Op::Transpose(x)))
    }

    fn unary(&self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.nodes.borrow()[x.0].value.map(f);
        self.push(value, op)
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn exp(&self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    /// Natural log; every element must be strictly positive.
    pub fn log(&self, x: Var) -> Result<Var> {
        {
            let nodes = self.nodes.borrow();
            if let Some(bad) = nodes[x.0].value.data().iter().find(|&&v| !(v > 0.0)) {
                return Err(Error::Domain {
                    op: "log",
                    msg: format!("non-positive input {bad}"),
                });
            }
        }
        Ok(self.unary(x, f64::ln, Op::Log(x)))
    }

    /// Sum over all elements, producing a scalar.
    pub fn sum(&self, x: Var) -> Var {
        let s = self.nodes.borrow()[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&self, x: Var) -> Var {
        let m = {
            let nodes = self.nodes.borrow();
            let d = nodes[x.0].value.data();
            d.iter().sum::<f64>() / d.len() as f64
        };
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.tensor(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&self, inputs: &[Var], axis: usize) -> Result<Var> {
        let nodes = self.nodes.borrow();
        let first = nodes[inputs
            .first()
            .ok_or_else(|| Error::invalid("concat of nothing"))?
            .0]
            .value
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(Error::invalid(format!("concat axis {axis} for shape {first:?}")));
        }
        let mut lens = Vec::with_capacity(inputs.len());
        for v in inputs {
            let s = nodes[v.0].value.shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            lens.push(s[axis]);
        }
        let value = gather_concat(&nodes, inputs, &first, axis, &lens);
        drop(nodes);
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
                lens,
            },
        ))
    }

    /// Stacks equally shaped inputs along a new axis at position `axis`.
    pub fn stack(&self, inputs: &[Var], axis: usize) -> Result<Var> {
        let nodes = self.nodes.borrow();
        let first = nodes[inputs
            .first()
            .ok_or_else(|| Error::invalid("stack of nothing"))?
            .0]
            .value
            .shape()
            .to_vec();
        if axis > first.len() {
            return Err(Error::invalid(format!("stack axis {axis} for shape {first:?}")));
        }
        for v in inputs {
            let s = nodes[v.0].value.shape();
            if s != first.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
        }
        let mut unit = first.clone();
        unit.insert(axis, 1);
        let lens = vec![1; inputs.len()];
        let value = gather_concat(&nodes, inputs, &unit, axis, &lens);
        drop(nodes);
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
                lens,
            },
        ))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x);
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::invalid(format!(
                "slice {start}..{} on axis {axis} of {shape:?}",
                start + len
            )));
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        Ok(self.slice_impl(x, &shape, axis, start, len, out_shape))
    }

    /// Index `index` along `axis`, dropping that axis.
    pub fn select(&self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let shape = self.shape(x);
        if axis >= shape.len() || index >= shape[axis] {
            return Err(Error::invalid(format!(
                "select index {index} on axis {axis} of {shape:?}"
            )));
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        Ok(self.slice_impl(x, &shape, axis, index, 1, out_shape))
    }

    fn slice_impl(
        &self,
        x: Var,
        shape: &[usize],
        axis: usize,
        start: usize,
        len: usize,
        out_shape: Vec<usize>,
    ) -> Var {
        let (outer, extent, inner) = split_axis(shape, axis);
        let data = {
            let nodes = self.nodes.borrow();
            let d = nodes[x.0].value.data();
            let mut out = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = (o * extent + start) * inner;
                out.extend_from_slice(&d[base..base + len * inner]);
            }
            out
        };
        self.push(
            Tensor::from_parts(out_shape, data),
            Op::Slice {
                x,
                axis,
                start,
                len,
            },
        )
    }

    /// Reverses each batch item `[b, 0..lengths[b]]` along the time axis
    /// (axis 1), leaving padding frames in place.
    pub fn reverse_valid(&self, x: Var, lengths: &[usize]) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() < 2 || lengths.len() != shape[0] || lengths.iter().any(|&l| l > shape[1]) {
            return Err(Error::invalid(format!(
                "reverse_valid lengths {lengths:?} for shape {shape:?}"
            )));
        }
        let (t_max, inner) = (shape[1], shape[2..].iter().product::<usize>());
        let data = {
            let nodes = self.nodes.borrow();
            let d = nodes[x.0].value.data();
            let mut out = vec![0.0; d.len()];
            for (b, &len) in lengths.iter().enumerate() {
                for t in 0..t_max {
                    let src = if t < len { len - 1 - t } else { t };
                    let (dst_off, src_off) = ((b * t_max + t) * inner, (b * t_max + src) * inner);
                    out[dst_off..dst_off + inner].copy_from_slice(&d[src_off..src_off + inner]);
                }
            }
            out
        };
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::ReverseValid {
                x,
                lengths: lengths.to_vec(),
            },
        ))
    }

    /// Sliding windows along time: `[B, T, F] -> [B, T', kernel * F]` with
    /// `T' = (T - kernel) / stride + 1`. Window element `j * F + f` is frame
    /// `t' * stride + j`, feature `f`.
    pub fn unfold_time(&self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() != 3 || kernel == 0 || stride == 0 {
            return Err(Error::invalid(format!(
                "unfold_time kernel {kernel} stride {stride} on {shape:?}"
            )));
        }
        let (b, t, f) = (shape[0], shape[1], shape[2]);
        if t < kernel {
            return Err(Error::invalid(format!(
                "input length {t} shorter than kernel {kernel}"
            )));
        }
        let t_out = (t - kernel) / stride + 1;
        let data = {
            let nodes = self.nodes.borrow();
            let d = nodes[x.0].value.data();
            let mut out = Vec::with_capacity(b * t_out * kernel * f);
            for bi in 0..b {
                for to in 0..t_out {
                    let start = (bi * t + to * stride) * f;
                    out.extend_from_slice(&d[start..start + kernel * f]);
                }
            }
            out
        };
        Ok(self.push(
            Tensor::from_parts(vec![b, t_out, kernel * f], data),
            Op::UnfoldTime { x, kernel, stride },
        ))
    }

    /// Spike threshold: Heaviside forward, boxcar surrogate backward.
    pub fn heaviside_surrogate(&self, u: Var, spec: SurrogateSpec) -> Var {
        self.unary(u, |v| spec.forward(v), Op::Heaviside { u, spec })
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&self, x: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x.0].value;
            let width = *t
                .shape()
                .last()
                .ok_or_else(|| Error::invalid("log_softmax of a scalar"))?;
            let data = t
                .data()
                .chunks(width)
                .flat_map(|row| {
                    let lse = log_sum_exp(row);
                    row.iter().map(move |v| v - lse)
                })
                .collect();
            Tensor::from_parts(t.shape().to_vec(), data)
        };
        Ok(self.push(value, Op::LogSoftmax(x)))
    }

    /// Batch normalization of `z: [N, F]` per feature.
    ///
    /// Rows with `mask[i] == false` neither contribute to training statistics
    /// nor receive an output (they are zero). Returns the batch statistics in
    /// training mode so the caller can update running estimates.
    pub fn batch_norm(
        &self,
        z: Var,
        gamma: Var,
        beta: Var,
        mask: Option<&[bool]>,
        mode: BatchNormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let nodes = self.nodes.borrow();
        let (tz, tg, tb) = (&nodes[z.0].value, &nodes[gamma.0].value, &nodes[beta.0].value);
        if tz.ndim() != 2 {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                lhs: tz.shape().to_vec(),
                rhs: tg.shape().to_vec(),
            });
        }
        let (n, f) = (tz.shape()[0], tz.shape()[1]);
        for t in [tg, tb] {
            if t.shape() != [f] {
                return Err(Error::ShapeMismatch {
                    op: "batch_norm",
                    lhs: tz.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        let mask: Vec<bool> = match mask {
            Some(m) if m.len() != n => {
                return Err(Error::invalid(format!("mask of {} rows for {n} rows", m.len())))
            }
            Some(m) => m.to_vec(),
            None => vec![true; n],
        };
        let count = mask.iter().filter(|&&m| m).count();
        let zd = tz.data();
        let (mean, var, eps, train) = match mode {
            BatchNormMode::Train { eps } => {
                if count < 2 {
                    return Err(Error::invalid(format!(
                        "batch norm needs at least 2 valid frames, got {count}"
                    )));
                }
                let mut mean = vec![0.0; f];
                for (row, _) in zd.chunks(f).zip(&mask).filter(|(_, &m)| m) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                let mut var = vec![0.0; f];
                for (row, _) in zd.chunks(f).zip(&mask).filter(|(_, &m)| m) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= count as f64);
                (mean, var, eps, true)
            }
            BatchNormMode::Eval { mean, var, eps } => {
                if mean.len() != f || var.len() != f {
                    return Err(Error::invalid("running statistics size"));
                }
                (mean.to_vec(), var.to_vec(), eps, false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        if inv_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                op: "batch_norm",
                msg: "zero variance with eps = 0".into(),
            });
        }
        let (gd, bd) = (tg.data(), tb.data());
        let mut xhat = vec![0.0; n * f];
        let mut out = vec![0.0; n * f];
        for (i, &valid) in mask.iter().enumerate() {
            if !valid {
                continue;
            }
            for j in 0..f {
                let h = (zd[i * f + j] - mean[j]) * inv_std[j];
                xhat[i * f + j] = h;
                out[i * f + j] = gd[j] * h + bd[j];
            }
        }
        let stats = train.then(|| BatchStats {
            var_unbiased: var
                .iter()
                .map(|v| v * count as f64 / (count - 1) as f64)
                .collect(),
            mean,
            count,
        });
        let value = Tensor::from_parts(vec![n, f], out);
        drop(nodes);
        let v = self.push(
            value,
            Op::BatchNorm {
                z,
                gamma,
                beta,
                xhat,
                inv_std,
                mask,
                train,
            },
        );
        Ok((v, stats))
    }

    /// Connectionist temporal classification loss over `log_probs: [B, T, V]`
    /// with blank id 0, reduced by the mean over feasible items.
    ///
    /// Items whose target cannot be aligned within their frame count get an
    /// infinite per-item loss, are flagged, and contribute no gradient. If no
    /// item is feasible the loss is `+inf`.
    pub fn ctc_loss(
        &self,
        log_probs: Var,
        targets: &[Vec<usize>],
        frame_lengths: &[usize],
    ) -> Result<CtcLoss> {
        let nodes = self.nodes.borrow();
        let t = &nodes[log_probs.0].value;
        if t.ndim() != 3 {
            return Err(Error::ShapeMismatch {
                op: "ctc_loss",
                lhs: t.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (b, t_max, vocab) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        if targets.len() != b || frame_lengths.len() != b {
            return Err(Error::invalid(format!(
                "ctc_loss: batch {b} with {} targets and {} lengths",
                targets.len(),
                frame_lengths.len()
            )));
        }
        let mut local = vec![0.0; b * t_max * vocab];
        let mut per_item = vec![f64::INFINITY; b];
        let mut feasible = vec![false; b];
        for i in 0..b {
            let len = frame_lengths[i];
            if len == 0 || len > t_max {
                return Err(Error::invalid(format!("ctc_loss: frame length {len} of {t_max}")));
            }
            if let Some(&bad) = targets[i].iter().find(|&&k| k == 0 || k >= vocab) {
                return Err(Error::invalid(format!(
                    "ctc_loss: token {bad} outside 1..{vocab}"
                )));
            }
            let off = i * t_max * vocab;
            let rows = &t.data()[off..off + len * vocab];
            if let Some(item) = ctc_item(rows, len, vocab, &targets[i]) {
                per_item[i] = item.loss;
                feasible[i] = true;
                local[off..off + len * vocab].copy_from_slice(&item.grad);
            }
        }
        let count = feasible.iter().filter(|&&f| f).count();
        let loss = if count == 0 {
            f64::INFINITY
        } else {
            // Sorted summation makes the mean independent of batch order.
            let mut finite: Vec<f64> = per_item.iter().copied().filter(|v| v.is_finite()).collect();
            finite.sort_by(f64::total_cmp);
            let scale = 1.0 / count as f64;
            local.iter_mut().for_each(|g| *g *= scale);
            finite.iter().sum::<f64>() * scale
        };
        drop(nodes);
        let v = self.push(
            Tensor::scalar(loss),
            Op::Ctc {
                x: log_probs,
                local,
            },
        );
        Ok(CtcLoss {
            loss: v,
            per_item,
            feasible,
        })
    }
}

fn gather_concat(nodes: &[Node], inputs: &[Var], unit_shape: &[usize], axis: usize, lens: &[usize]) -> Tensor {
    let (outer, _, inner) = split_axis(unit_shape, axis);
    let total: usize = lens.iter().sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &len) in inputs.iter().zip(lens) {
            let d = nodes[v.0].value.data();
            let block = len * inner;
            out.extend_from_slice(&d[o * block..(o + 1) * block]);
        }
    }
    let mut shape = unit_shape.to_vec();
    shape[axis] = total;
    Tensor::from_parts(shape, out)
}

fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], p: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[p.0].requires_grad {
        return None;
    }
    let n = nodes[p.0].value.numel();
    Some(grads[p.0].get_or_insert_with(|| vec![0.0; n]))
}

/// Adds `g * da` into `a` and the broadcast-reduced `g * db` into `b`.
fn backward_binary(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    a: Var,
    b: Var,
    g: &[f64],
    da: impl Fn(f64, f64) -> f64,
    db: impl Fn(f64, f64) -> f64,
) {
    let (ad, bd) = (nodes[a.0].value.data(), nodes[b.0].value.data());
    let nb = bd.len();
    if let Some(ga) = acc(grads, nodes, a) {
        for (i, (o, &gi)) in ga.iter_mut().zip(g).enumerate() {
            *o += gi * da(ad[i], bd[i % nb]);
        }
    }
    if let Some(gb) = acc(grads, nodes, b) {
        for (i, &gi) in g.iter().enumerate() {
            gb[i % nb] += gi * db(ad[i], bd[i % nb]);
        }
    }
}

pub(crate) fn backward_node(
    nodes: &[Node],
    op: &Op,
    out: &Tensor,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    match op {
        Op::Leaf => {}
        Op::Add(a, b) => backward_binary(nodes, grads, *a, *b, g, |_, _| 1.0, |_, _| 1.0),
        Op::Sub(a, b) => backward_binary(nodes, grads, *a, *b, g, |_, _| 1.0, |_, _| -1.0),
        Op::Mul(a, b) => backward_binary(nodes, grads, *a, *b, g, |_, y| y, |x, _| x),
        Op::Affine { x, scale } => {
            if let Some(gx) = acc(grads, nodes, *x) {
                gx.iter_mut().zip(g).for_each(|(o, gi)| *o += scale * gi);
            }
        }
        Op::MatMul(a, b) => {
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
            if let Some(ga) = acc(grads, nodes, *a) {
                // dA = G B^T
                gemm(m, n, k, g, (n, 1), tb.data(), (1, n), ga, 1.0);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                // dB = A^T G
                gemm(k, m, n, ta.data(), (1, k), g, (n, 1), gb, 1.0);
            }
        }
        Op::Transpose(x) => {
            let (r, c) = (out.shape()[1], out.shape()[0]);
            if let Some(gx) = acc(grads, nodes, *x) {
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] += g[j * r + i];
                    }
                }
            }
        }
        Op::Sigmoid(x) => unary_back(nodes, grads, *x, g, out.data(), |_, y| y * (1.0 - y)),
        Op::Tanh(x) => unary_back(nodes, grads, *x, g, out.data(), |_, y| 1.0 - y * y),
        Op::Exp(x) => unary_back(nodes, grads, *x, g, out.data(), |_, y| y),
        Op::Relu(x) => unary_back(nodes, grads, *x, g, out.data(), |v, _| {
            if v > 0.0 {
                1.0
            } else {
                0.0
            }
        }),
        Op::Log(x) => unary_back(nodes, grads, *x, g, out.data(), |v, _| 1.0 / v),
        Op::Heaviside { u, spec } => {
            unary_back(nodes, grads, *u, g, out.data(), |v, _| spec.derivative(v))
        }
        Op::Sum(x) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                gx.iter_mut().for_each(|o| *o += g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                let s = g[0] / gx.len() as f64;
                gx.iter_mut().for_each(|o| *o += s);
            }
        }
        Op::Reshape(x) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                gx.iter_mut().zip(g).for_each(|(o, gi)| *o += gi);
            }
        }
        Op::Concat { inputs, axis, lens } => {
            let total: usize = lens.iter().sum();
            let outer: usize = out.shape()[..*axis].iter().product();
            let inner = out.numel() / (outer * total);
            let mut offset = 0;
            for (v, &len) in inputs.iter().zip(lens) {
                if let Some(gx) = acc(grads, nodes, *v) {
                    let block = len * inner;
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        gx[o * block..(o + 1) * block]
                            .iter_mut()
                            .zip(&g[src..src + block])
                            .for_each(|(a, b)| *a += b);
                    }
                }
                offset += len;
            }
        }
        Op::Slice {
            x,
            axis,
            start,
            len,
        } => {
            let (outer, extent, inner) = split_axis(nodes[x.0].value.shape(), *axis);
            if let Some(gx) = acc(grads, nodes, *x) {
                let block = len * inner;
                for o in 0..outer {
                    let dst = (o * extent + start) * inner;
                    gx[dst..dst + block]
                        .iter_mut()
                        .zip(&g[o * block..(o + 1) * block])
                        .for_each(|(a, b)| *a += b);
                }
            }
        }
        Op::ReverseValid { x, lengths } => {
            let shape = out.shape();
            let (t_max, inner) = (shape[1], shape[2..].iter().product::<usize>());
            if let Some(gx) = acc(grads, nodes, *x) {
                for (b, &len) in lengths.iter().enumerate() {
                    for t in 0..t_max {
                        let src = if t < len { len - 1 - t } else { t };
                        let (go, xo) = ((b * t_max + t) * inner, (b * t_max + src) * inner);
                        for k in 0..inner {
                            gx[xo + k] += g[go + k];
                        }
                    }
                }
            }
        }
        Op::UnfoldTime { x, kernel, stride } => {
            let xs = nodes[x.0].value.shape();
            let (b, t, f) = (xs[0], xs[1], xs[2]);
            let t_out = out.shape()[1];
            let width = kernel * f;
            if let Some(gx) = acc(grads, nodes, *x) {
                for bi in 0..b {
                    for to in 0..t_out {
                        let dst = (bi * t + to * stride) * f;
                        let src = (bi * t_out + to) * width;
                        gx[dst..dst + width]
                            .iter_mut()
                            .zip(&g[src..src + width])
                            .for_each(|(a, b)| *a += b);
                    }
                }
            }
        }
        Op::LogSoftmax(x) => {
            let width = *out.shape().last().unwrap();
            if let Some(gx) = acc(grads, nodes, *x) {
                for ((gx_row, g_row), y_row) in gx
                    .chunks_mut(width)
                    .zip(g.chunks(width))
                    .zip(out.data().chunks(width))
                {
                    let total: f64 = g_row.iter().sum();
                    for ((o, gi), y) in gx_row.iter_mut().zip(g_row).zip(y_row) {
                        *o += gi - y.exp() * total;
                    }
                }
            }
        }
        Op::BatchNorm {
            z,
            gamma,
            beta,
            xhat,
            inv_std,
            mask,
            train,
        } => {
            let f = inv_std.len();
            let gamma_d = nodes[gamma.0].value.data().to_vec();
            let count = mask.iter().filter(|&&m| m).count() as f64;
            let valid_rows = || {
                g.chunks(f)
                    .zip(xhat.chunks(f))
                    .enumerate()
                    .filter(|(i, _)| mask[*i])
            };
            let mut sum_g = vec![0.0; f];
            let mut sum_gx = vec![0.0; f];
            for (_, (gr, xr)) in valid_rows() {
                for j in 0..f {
                    sum_g[j] += gr[j];
                    sum_gx[j] += gr[j] * xr[j];
                }
            }
            if let Some(gg) = acc(grads, nodes, *gamma) {
                gg.iter_mut().zip(&sum_gx).for_each(|(o, v)| *o += v);
            }
            if let Some(gb) = acc(grads, nodes, *beta) {
                gb.iter_mut().zip(&sum_g).for_each(|(o, v)| *o += v);
            }
            if let Some(gz) = acc(grads, nodes, *z) {
                for (i, (gr, xr)) in valid_rows() {
                    for j in 0..f {
                        let dxhat = gr[j] * gamma_d[j];
                        gz[i * f + j] += if *train {
                            inv_std[j] / count
                                * (count * dxhat
                                    - gamma_d[j] * sum_g[j]
                                    - xr[j] * gamma_d[j] * sum_gx[j])
                        } else {
                            dxhat * inv_std[j]
                        };
                    }
                }
            }
        }
        Op::Ctc { x, local } => {
            if let Some(gx) = acc(grads, nodes, *x) {
                gx.iter_mut().zip(local).for_each(|(o, l)| *o += g[0] * l);
            }
        }
    }
}

fn unary_back(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    x: Var,
    g: &[f64],
    out: &[f64],
    d: impl Fn(f64, f64) -> f64,
) {
    let xd = nodes[x.0].value.data();
    if let Some(gx) = acc(grads, nodes, x) {
        for i in 0..gx.len() {
            gx[i] += g[i] * d(xd[i], out[i]);
        }
    }
}
