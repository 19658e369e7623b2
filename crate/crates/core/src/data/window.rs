use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::sim::{Domain, FlightLog};
use crate::Label;

/// Rows of the input matrix: p-dot, q-dot, r-dot, then w1^2 to w4^2.
pub const INPUT_ROWS: usize = 7;

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOrigin {
    pub flight: u32,
    /// Time of the window's last column, s.
    pub end_time: f64,
}

/// One `7 x (L + 1)` input matrix. Rows are the signals in
/// [`SIGNAL_NAMES`](crate::sim::SIGNAL_NAMES) order and columns run from
/// `t - L` to `t` in increasing time. Stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub matrix: Vec<f64>,
    pub columns: usize,
    pub label: Label,
    pub domain: Domain,
    pub origin: SampleOrigin,
}

impl Sample {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.matrix[r * self.columns..(r + 1) * self.columns]
    }

    pub fn get(&self, row: usize, column: usize) -> f64 {
        self.matrix[row * self.columns + column]
    }
}

/// Cuts a flight into windows of `window + 1` consecutive rows ending at
/// row indices `window, window + stride, ...`. A log shorter than
/// `window + 1` rows yields no samples.
pub fn window_flight(log: &FlightLog, window: usize, stride: usize) -> Vec<Sample> {
    let stride = stride.max(1);
    let columns = window + 1;
    if log.rows.len() < columns {
        log::warn!(
            "flight {} has {} rows, fewer than the window's {columns}; no samples produced",
            log.id,
            log.rows.len()
        );
        return Vec::new();
    }
    (window..log.rows.len())
        .step_by(stride)
        .map(|end| {
            let rows = &log.rows[end - window..=end];
            let mut matrix = alloc::vec![0.0; INPUT_ROWS * columns];
            for (c, row) in rows.iter().enumerate() {
                for (r, value) in row.signals().into_iter().enumerate() {
                    matrix[r * columns + c] = value;
                }
            }
            Sample {
                matrix,
                columns,
                label: log.label,
                domain: log.domain,
                origin: SampleOrigin {
                    flight: log.id,
                    end_time: log.rows[end].time,
                },
            }
        })
        .collect()
}
