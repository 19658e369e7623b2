//! Squared maximum mean discrepancy with a Gaussian kernel.
//!
//! For row sets `X` (m rows) and `Y` (n rows) the biased estimate is
//!
//! ```text
//! MMD^2 = mean_{i,j in X} k(x_i, x_j) + mean_{i,j in Y} k(y_i, y_j)
//!         - 2 mean_{i in X, j in Y} k(x_i, y_j)
//! k(a, b) = exp(-|a - b|^2 / h)
//! ```
//!
//! where `h` is the median squared distance over all distinct pairs of the
//! joint set `X u Y`. The estimate is a squared RKHS norm and therefore never
//! negative. The bandwidth is part of the function: gradients flow through
//! the median pair(s) as well.

use alloc::vec::Vec;

use super::gemm::{matmul, Operand};

pub(crate) struct MmdOutput {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
}

struct Pairwise {
    /// Squared distance of each unordered pair `i < j`, with the pair.
    distances: Vec<(f64, u32, u32)>,
    bandwidth: f64,
    /// Pairs defining the median and their weights in it.
    median: Vec<(u32, u32, f64)>,
}

fn joint_rows(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len() + y.len());
    z.extend_from_slice(x);
    z.extend_from_slice(y);
    z
}

/// Squared distances from the Gram matrix, `|a|^2 + |b|^2 - 2 a.b`,
/// clamped at zero against rounding.
fn pairwise(z: &[f64], dim: usize) -> Pairwise {
    let n = z.len() / dim;
    let mut gram = alloc::vec![0.0; n * n];
    matmul(
        Operand::new(z, n, dim),
        Operand::transpose_of(z, dim, n),
        &mut gram,
        0.0,
    );
    let mut distances = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = gram[i * n + i] + gram[j * n + j] - 2.0 * gram[i * n + j];
            distances.push((d.max(0.0), i as u32, j as u32));
        }
    }
    if distances.is_empty() {
        return Pairwise {
            distances,
            bandwidth: 1.0,
            median: Vec::new(),
        };
    }
    let mut scratch = distances.clone();
    let count = scratch.len();
    let mid = count / 2;
    let cmp = |a: &(f64, u32, u32), b: &(f64, u32, u32)| a.0.total_cmp(&b.0);
    let (lower, upper, _) = scratch.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    let (bandwidth, median) = if count % 2 == 1 {
        (upper.0, alloc::vec![(upper.1, upper.2, 1.0)])
    } else {
        let below = *lower.iter().max_by(|a, b| cmp(a, b)).expect("count >= 2");
        (
            0.5 * (below.0 + upper.0),
            alloc::vec![(below.1, below.2, 0.5), (upper.1, upper.2, 0.5)],
        )
    };
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Pairwise {
            distances,
            bandwidth,
            median,
        }
    } else {
        Pairwise {
            distances,
            bandwidth: 1.0,
            median: Vec::new(),
        }
    }
}

/// Squared MMD between the rows of `x` and `y`, each of width `dim`.
pub fn mmd_squared(x: &[f64], y: &[f64], dim: usize) -> f64 {
    mmd_squared_with_grad(x, y, dim).value
}

/// Bandwidth chosen by the median heuristic for the joint row set.
pub fn median_bandwidth(x: &[f64], y: &[f64], dim: usize) -> f64 {
    pairwise(&joint_rows(x, y), dim).bandwidth
}

pub(crate) fn mmd_squared_with_grad(x: &[f64], y: &[f64], dim: usize) -> MmdOutput {
    let z = joint_rows(x, y);
    let (m, n) = (x.len() / dim, y.len() / dim);
    let total = m + n;
    let p = pairwise(&z, dim);
    let h = p.bandwidth;

    // Weight of each ordered pair in the estimate; diagonal kernels are 1.
    let weight = |i: usize, j: usize| match (i < m, j < m) {
        (true, true) => 1.0 / (m * m) as f64,
        (false, false) => 1.0 / (n * n) as f64,
        _ => -1.0 / (m * n) as f64,
    };
    let mut value = 1.0 / m as f64 + 1.0 / n as f64;
    let mut d_bandwidth = 0.0;
    // Symmetric dMMD/d(distance) per pair, bandwidth term included below.
    let mut coupling = alloc::vec![0.0; total * total];
    for &(d, i, j) in &p.distances {
        let (i, j) = (i as usize, j as usize);
        let w = 2.0 * weight(i, j);
        let k = libm::exp(-d / h);
        value += w * k;
        d_bandwidth += w * k * d / (h * h);
        coupling[i * total + j] = -w * k / h;
    }
    for &(i, j, share) in &p.median {
        coupling[i as usize * total + j as usize] += share * d_bandwidth;
    }
    for i in 0..total {
        for j in i + 1..total {
            coupling[j * total + i] = coupling[i * total + j];
        }
    }

    // d|z_i - z_j|^2 / dz_i = 2 (z_i - z_j), so
    // grad = 2 (diag(rowsum C) Z - C Z).
    let mut grad = alloc::vec![0.0; total * dim];
    matmul(
        Operand::new(&coupling, total, total),
        Operand::new(&z, total, dim),
        &mut grad,
        0.0,
    );
    for i in 0..total {
        let row_sum: f64 = coupling[i * total..][..total].iter().sum();
        let zi = &z[i * dim..][..dim];
        grad[i * dim..][..dim]
            .iter_mut()
            .zip(zi)
            .for_each(|(g, zv)| *g = 2.0 * (row_sum * zv - *g));
    }

    let grad_y = grad.split_off(m * dim);
    MmdOutput {
        value: value.max(0.0),
        grad_x: grad,
        grad_y,
    }
}
