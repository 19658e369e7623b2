//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Every operation appends a node holding its output value and enough
//! context to push gradients back to its inputs. [`Tape::backward`] walks
//! the nodes in reverse creation order, which is a valid topological order.

use alloc::format;
use alloc::vec::Vec;

use super::gemm::{matmul, Operand};
use super::mmd::{mmd_squared_with_grad, MmdOutput};
use super::Tensor;
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Var,
        padding: usize,
    },
    Relu(Var),
    AvgPool2(Var),
    Reshape(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Mask {
        input: Var,
        mask: Vec<f64>,
    },
    MeanRows(Var),
    SubRow {
        input: Var,
        row: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Mmd {
        x: Var,
        y: Var,
        grad_x: Vec<f64>,
        grad_y: Vec<f64>,
    },
    Axpy {
        a: Var,
        b: Var,
        scale: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that influenced it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }
}

fn mismatch(layer: &'static str, expected: impl core::fmt::Display, actual: &[usize]) -> Error {
    Error::ShapeMismatch {
        layer,
        expected: format!("{expected}"),
        actual: format!("{actual:?}"),
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, delta: Vec<f64>) {
    match &mut grads[var.0] {
        Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
        slot @ None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// One-dimensional convolution along the last axis with zero padding.
    /// `input` is `[batch, in, time]`, `kernel` `[out, in, width]`, `bias`
    /// `[out]`.
    pub fn conv1d(
        &mut self,
        layer: &'static str,
        input: Var,
        kernel: Var,
        bias: Var,
        padding: usize,
    ) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(input), self.shape(kernel), self.shape(bias));
        if ks.len() != 3 {
            return Err(mismatch(layer, "kernel [out, in, width]", ks));
        }
        let (cout, cin, width) = (ks[0], ks[1], ks[2]);
        if xs.len() != 3 || xs[1] != cin {
            return Err(mismatch(layer, format!("input [batch, {cin}, time]"), xs));
        }
        if bs != [cout] {
            return Err(mismatch(layer, format!("bias [{cout}]"), bs));
        }
        let (batch, time) = (xs[0], xs[2]);
        if time + 2 * padding < width {
            return Err(mismatch(
                layer,
                format!("time axis of at least {}", width - 2 * padding),
                xs,
            ));
        }
        let out_len = time + 2 * padding - width + 1;
        let x = self.value(input).data();
        let k = self.value(kernel).data();
        let b = self.value(bias).data();
        let patches = im2col(x, [batch, cin, time], width, padding, out_len);
        let cols = batch * out_len;
        let mut y = alloc::vec![0.0; cout * cols];
        matmul(
            Operand::new(k, cout, cin * width),
            Operand::new(&patches, cin * width, cols),
            &mut y,
            0.0,
        );
        let mut out = alloc::vec![0.0; batch * cout * out_len];
        for n in 0..batch {
            for o in 0..cout {
                let src = &y[o * cols + n * out_len..][..out_len];
                let dst = &mut out[(n * cout + o) * out_len..][..out_len];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d = s + b[o]);
            }
        }
        let value = Tensor::new(alloc::vec![batch, cout, out_len], out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                kernel,
                bias,
                padding,
            },
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let value = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|x| x.max(0.0)).collect(),
        )
        .expect("same shape");
        self.push(value, Op::Relu(input))
    }

    /// Non-overlapping mean over pairs along the last axis of
    /// `[batch, channels, time]`; an odd trailing step is dropped.
    pub fn avg_pool2(&mut self, layer: &'static str, input: Var) -> Result<Var> {
        let s = self.shape(input);
        if s.len() != 3 || s[2] < 2 {
            return Err(mismatch(layer, "[batch, channels, time >= 2]", s));
        }
        let (rows, time) = (s[0] * s[1], s[2]);
        let half = time / 2;
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(rows * half);
        for r in 0..rows {
            let src = &x[r * time..][..time];
            out.extend((0..half).map(|t| 0.5 * (src[2 * t] + src[2 * t + 1])));
        }
        let value = Tensor::new(alloc::vec![s[0], s[1], half], out)?;
        Ok(self.push(value, Op::AvgPool2(input)))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(input)))
    }

    /// `input [batch, in] * weight[out, in]^T + bias[out]`.
    pub fn linear(
        &mut self,
        layer: &'static str,
        input: Var,
        weight: Var,
        bias: Var,
    ) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(input), self.shape(weight), self.shape(bias));
        if ws.len() != 2 {
            return Err(mismatch(layer, "weight [out, in]", ws));
        }
        let (out_dim, in_dim) = (ws[0], ws[1]);
        if xs.len() != 2 || xs[1] != in_dim {
            return Err(mismatch(layer, format!("input [batch, {in_dim}]"), xs));
        }
        if bs != [out_dim] {
            return Err(mismatch(layer, format!("bias [{out_dim}]"), bs));
        }
        let batch = xs[0];
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let mut out = alloc::vec![0.0; batch * out_dim];
        matmul(
            Operand::new(x, batch, in_dim),
            Operand::transpose_of(w, in_dim, out_dim),
            &mut out,
            0.0,
        );
        out.chunks_exact_mut(out_dim)
            .for_each(|row| row.iter_mut().zip(b).for_each(|(v, b)| *v += b));
        let value = Tensor::new(alloc::vec![batch, out_dim], out)?;
        Ok(self.push(
            value,
            Op::Linear {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Elementwise product with a constant mask (inverted dropout).
    pub fn mask(&mut self, input: Var, mask: Vec<f64>) -> Result<Var> {
        let v = self.value(input);
        if mask.len() != v.len() {
            return Err(mismatch(
                "dropout",
                format!("mask of {} values", v.len()),
                &[mask.len()],
            ));
        }
        let value = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().zip(&mask).map(|(x, m)| x * m).collect(),
        )?;
        Ok(self.push(value, Op::Mask { input, mask }))
    }

    /// Column means of `[batch, dim]`, giving `[dim]`.
    pub fn mean_rows(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input);
        if s.len() != 2 || s[0] == 0 {
            return Err(mismatch("mean", "[batch >= 1, dim]", s));
        }
        let (batch, dim) = (s[0], s[1]);
        let x = self.value(input).data();
        let mut mean = alloc::vec![0.0; dim];
        for n in 0..batch {
            mean.iter_mut()
                .zip(&x[n * dim..][..dim])
                .for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= batch as f64);
        let value = Tensor::new(alloc::vec![dim], mean)?;
        Ok(self.push(value, Op::MeanRows(input)))
    }

    /// Subtracts the vector `row [dim]` from every row of `input [batch, dim]`.
    pub fn sub_row(&mut self, input: Var, row: Var) -> Result<Var> {
        let (s, r) = (self.shape(input), self.shape(row));
        if s.len() != 2 || r != [s[1]] {
            return Err(mismatch("difference", format!("row of {:?}", s.get(1)), r));
        }
        let dim = s[1];
        let rv = self.value(row).data();
        let data = self
            .value(input)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x - rv[i % dim])
            .collect();
        let value = Tensor::new(s.to_vec(), data)?;
        Ok(self.push(value, Op::SubRow { input, row }))
    }

    /// Mean softmax cross-entropy of `logits [batch, classes]` against class
    /// indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != targets.len() || s[0] == 0 {
            return Err(mismatch(
                "cross-entropy",
                format!("[{}, classes]", targets.len()),
                s,
            ));
        }
        let classes = s[1];
        if let Some(t) = targets.iter().find(|t| **t >= classes) {
            return Err(Error::InvalidLabel((*t + 1).min(255) as u8));
        }
        let z = self.value(logits).data();
        let mut probs = Vec::with_capacity(z.len());
        let mut total = 0.0;
        for (n, &target) in targets.iter().enumerate() {
            let row = &z[n * classes..][..classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
            let log_sum = libm::log(sum) + max;
            total += log_sum - row[target];
            probs.extend(row.iter().map(|v| libm::exp(v - log_sum)));
        }
        let value = Tensor::scalar(total / targets.len() as f64);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Squared maximum mean discrepancy between the rows of `x` and `y`
    /// (see [`mmd_squared`](super::mmd_squared)).
    pub fn mmd_squared(&mut self, x: Var, y: Var) -> Result<Var> {
        let (xs, ys) = (self.shape(x), self.shape(y));
        if xs.len() != 2 || ys.len() != 2 || xs[1] != ys[1] || xs[0] == 0 || ys[0] == 0 {
            return Err(mismatch(
                "domain adaptation",
                format!("[_, {:?}]", xs.get(1)),
                ys,
            ));
        }
        let dim = xs[1];
        let MmdOutput {
            value,
            grad_x,
            grad_y,
        } = mmd_squared_with_grad(self.value(x).data(), self.value(y).data(), dim);
        Ok(self.push(
            Tensor::scalar(value),
            Op::Mmd {
                x,
                y,
                grad_x,
                grad_y,
            },
        ))
    }

    /// `a + scale * b` for tensors of equal shape.
    pub fn axpy(&mut self, a: Var, b: Var, scale: f64) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(
                "sum",
                format!("{:?}", self.shape(a)),
                self.shape(b),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + scale * y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Axpy { a, b, scale }))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(
            self.value(output).len(),
            1,
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Vec<f64>>> = alloc::vec![None; self.nodes.len()];
        grads[output.0] = Some(alloc::vec![1.0]);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Conv1d {
                    input,
                    kernel,
                    bias,
                    padding,
                } => {
                    let (gx, gk, gb) = self.conv1d_backward(*input, *kernel, *padding, &g);
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *kernel, gk);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Relu(input) => {
                    let x = self.value(*input).data();
                    let gx = g
                        .iter()
                        .zip(x)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *input, gx);
                }
                Op::AvgPool2(input) => {
                    let s = self.shape(*input);
                    let (rows, time) = (s[0] * s[1], s[2]);
                    let half = time / 2;
                    let mut gx = alloc::vec![0.0; rows * time];
                    for r in 0..rows {
                        for t in 0..half {
                            let v = 0.5 * g[r * half + t];
                            gx[r * time + 2 * t] = v;
                            gx[r * time + 2 * t + 1] = v;
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::Reshape(input) => accumulate(&mut grads, *input, g.clone()),
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input);
                    let w = self.value(*weight).data();
                    let (batch, in_dim) = (x.shape()[0], x.shape()[1]);
                    let out_dim = w.len() / in_dim;
                    let x = x.data();
                    let mut gx = alloc::vec![0.0; batch * in_dim];
                    let mut gw = alloc::vec![0.0; out_dim * in_dim];
                    let mut gb = alloc::vec![0.0; out_dim];
                    matmul(
                        Operand::new(&g, batch, out_dim),
                        Operand::new(w, out_dim, in_dim),
                        &mut gx,
                        0.0,
                    );
                    matmul(
                        Operand::transpose_of(&g, out_dim, batch),
                        Operand::new(x, batch, in_dim),
                        &mut gw,
                        0.0,
                    );
                    g.chunks_exact(out_dim)
                        .for_each(|row| gb.iter_mut().zip(row).for_each(|(s, v)| *s += v));
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Mask { input, mask } => {
                    let gx = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                    accumulate(&mut grads, *input, gx);
                }
                Op::MeanRows(input) => {
                    let s = self.shape(*input);
                    let (batch, dim) = (s[0], s[1]);
                    let scale = 1.0 / batch as f64;
                    let gx = (0..batch * dim).map(|k| g[k % dim] * scale).collect();
                    accumulate(&mut grads, *input, gx);
                }
                Op::SubRow { input, row } => {
                    let dim = self.shape(*row)[0];
                    let mut gr = alloc::vec![0.0; dim];
                    g.iter().enumerate().for_each(|(k, v)| gr[k % dim] -= v);
                    accumulate(&mut grads, *input, g.clone());
                    accumulate(&mut grads, *row, gr);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let classes = self.shape(*logits)[1];
                    let scale = g[0] / targets.len() as f64;
                    let mut gz: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (n, t) in targets.iter().enumerate() {
                        gz[n * classes + t] -= scale;
                    }
                    accumulate(&mut grads, *logits, gz);
                }
                Op::Mmd {
                    x,
                    y,
                    grad_x,
                    grad_y,
                } => {
                    accumulate(&mut grads, *x, grad_x.iter().map(|v| v * g[0]).collect());
                    accumulate(&mut grads, *y, grad_y.iter().map(|v| v * g[0]).collect());
                }
                Op::Axpy { a, b, scale } => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.iter().map(|v| v * scale).collect());
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn conv1d_backward(
        &self,
        input: Var,
        kernel: Var,
        padding: usize,
        g: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let xs = self.shape(input);
        let ks = self.shape(kernel);
        let (batch, cin, time) = (xs[0], xs[1], xs[2]);
        let (cout, width) = (ks[0], ks[2]);
        let out_len = time + 2 * padding - width + 1;
        let x = self.value(input).data();
        let k = self.value(kernel).data();
        let cols = batch * out_len;
        let patches = im2col(x, [batch, cin, time], width, padding, out_len);
        let mut gy = alloc::vec![0.0; cout * cols];
        for n in 0..batch {
            for o in 0..cout {
                gy[o * cols + n * out_len..][..out_len]
                    .copy_from_slice(&g[(n * cout + o) * out_len..][..out_len]);
            }
        }
        let gb = gy.chunks_exact(cols).map(|row| row.iter().sum()).collect();
        let mut gk = alloc::vec![0.0; k.len()];
        matmul(
            Operand::new(&gy, cout, cols),
            Operand::transpose_of(&patches, cols, cin * width),
            &mut gk,
            0.0,
        );
        let mut gp = alloc::vec![0.0; cin * width * cols];
        matmul(
            Operand::transpose_of(k, cin * width, cout),
            Operand::new(&gy, cout, cols),
            &mut gp,
            0.0,
        );
        let mut gx = alloc::vec![0.0; x.len()];
        col2im(&gp, &mut gx, [batch, cin, time], width, padding, out_len);
        (gx, gk, gb)
    }
}

/// Patch matrix `[in * width, batch * out_len]` of a `[batch, in, time]`
/// input; padded positions stay zero.
fn im2col(
    x: &[f64],
    [batch, cin, time]: [usize; 3],
    width: usize,
    padding: usize,
    out_len: usize,
) -> Vec<f64> {
    let cols = batch * out_len;
    let mut patches = alloc::vec![0.0; cin * width * cols];
    for c in 0..cin {
        for j in 0..width {
            let row = &mut patches[(c * width + j) * cols..][..cols];
            let (lo, hi) = valid_range(j, padding, time, out_len);
            for n in 0..batch {
                let src = &x[(n * cin + c) * time..][..time];
                row[n * out_len + lo..n * out_len + hi]
                    .copy_from_slice(&src[lo + j - padding..hi + j - padding]);
            }
        }
    }
    patches
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im(
    patches: &[f64],
    gx: &mut [f64],
    [batch, cin, time]: [usize; 3],
    width: usize,
    padding: usize,
    out_len: usize,
) {
    let cols = batch * out_len;
    for c in 0..cin {
        for j in 0..width {
            let row = &patches[(c * width + j) * cols..][..cols];
            let (lo, hi) = valid_range(j, padding, time, out_len);
            for n in 0..batch {
                let dst = &mut gx[(n * cin + c) * time..][..time];
                dst[lo + j - padding..hi + j - padding]
                    .iter_mut()
                    .zip(&row[n * out_len + lo..n * out_len + hi])
                    .for_each(|(d, v)| *d += v);
            }
        }
    }
}

/// Output positions `t` for which tap `j` reads inside the unpadded input.
fn valid_range(j: usize, padding: usize, time: usize, out_len: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(j);
    let hi = (time + padding).saturating_sub(j).min(out_len);
    (lo, hi.max(lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn conv_loss(x: &[f64], k: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(alloc::vec![2, 2, 6], x.to_vec()).unwrap());
        let kv = tape.leaf(Tensor::new(alloc::vec![3, 2, 3], k.to_vec()).unwrap());
        let bv = tape.leaf(Tensor::new(alloc::vec![3], alloc::vec![0.1, -0.2, 0.3]).unwrap());
        let y = tape.conv1d("conv", xv, kv, bv, 1).unwrap();
        let p = tape.avg_pool2("pool", y).unwrap();
        let flat = tape.reshape(p, &[2, 9]).unwrap();
        let m = tape.mean_rows(flat).unwrap();
        let d = tape.sub_row(flat, m).unwrap();
        let w = tape.leaf(
            Tensor::new(
                alloc::vec![2, 9],
                (0..18).map(|i| (i as f64 * 0.37).sin()).collect(),
            )
            .unwrap(),
        );
        let b = tape.leaf(Tensor::zeros(&[2]));
        let z = tape.linear("head", d, w, b).unwrap();
        let loss = tape.softmax_cross_entropy(z, &[0, 1]).unwrap();
        let grads = tape.backward(loss);
        (
            tape.value(loss).data()[0],
            grads.get(xv).unwrap().to_vec(),
            grads.get(kv).unwrap().to_vec(),
        )
    }

    #[test]
    fn conv_pipeline_matches_finite_differences() {
        let x: Vec<f64> = (0..24).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let k: Vec<f64> = (0..18).map(|i| ((i * 5 % 7) as f64 - 3.0) * 0.2).collect();
        let (_, gx, gk) = conv_loss(&x, &k);
        let nx = numeric_grad(|x| conv_loss(x, &k).0, &x);
        let nk = numeric_grad(|k| conv_loss(&x, k).0, &k);
        for (a, n) in gx.iter().zip(&nx).chain(gk.iter().zip(&nk)) {
            assert!((a - n).abs() < 1e-7, "{a} vs {n}");
        }
    }

    #[test]
    fn conv_shape_errors_name_the_layer() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[1, 3, 8]));
        let k = tape.leaf(Tensor::zeros(&[4, 2, 5]));
        let b = tape.leaf(Tensor::zeros(&[4]));
        match tape.conv1d("conv1", x, k, b, 2) {
            Err(Error::ShapeMismatch { layer, .. }) => assert_eq!(layer, "conv1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn softmax_cross_entropy_of_uniform_logits() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(&[3, 5]));
        let l = tape.softmax_cross_entropy(z, &[0, 2, 4]).unwrap();
        assert!((tape.value(l).data()[0] - libm::log(5.0)).abs() < 1e-15);
    }
}
