//! Row-major matrix products on flat buffers.

/// Row-major `rows x cols` buffer, optionally read transposed from a
/// `cols x rows` buffer.
#[derive(Clone, Copy)]
pub(crate) struct Operand<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Operand<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// Transpose of the row-major `cols x rows` matrix in `data`.
    pub fn transpose_of(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            transposed: true,
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.rows as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a * b + beta * out`, with `out` row-major `a.rows x b.cols`.
pub(crate) fn matmul(a: Operand<'_>, b: Operand<'_>, out: &mut [f64], beta: f64) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(b.rows, k, "inner dimensions differ");
    assert_eq!(a.data.len(), m * k, "left operand length");
    assert_eq!(b.data.len(), k * n, "right operand length");
    assert_eq!(out.len(), m * n, "output length");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the assertions above make every index the kernel forms from
    // these dimensions and strides fall inside the three slices, and `out`
    // is a unique borrow that cannot alias the inputs.
    #[allow(unsafe_code)]
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn products_match_naive_loops() {
        for (m, k, n) in [(7, 9, 11), (1, 3, 2), (16, 35, 40)] {
            let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.71).cos()).collect();
            let mut naive = alloc::vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    naive[i * n + j] = (0..k).map(|l| a[i * k + l] * b[l * n + j]).sum();
                }
            }
            let mut out = alloc::vec![1.0; m * n];
            matmul(
                Operand::new(&a, m, k),
                Operand::new(&b, k, n),
                &mut out,
                0.0,
            );
            out.iter()
                .zip(&naive)
                .for_each(|(x, y)| assert!((x - y).abs() < 1e-12));

            // same product with both operands stored transposed, accumulated
            let at: Vec<f64> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
            let bt: Vec<f64> = (0..n * k).map(|i| b[(i % k) * n + i / k]).collect();
            matmul(
                Operand::transpose_of(&at, m, k),
                Operand::transpose_of(&bt, k, n),
                &mut out,
                1.0,
            );
            out.iter()
                .zip(&naive)
                .for_each(|(x, y)| assert!((x - 2.0 * y).abs() < 1e-12));
        }
    }
}
