use std::io::Write;

use crate::error::{Error, Result};
use crate::flows::{scan_sequential, FlowOrder, ScanStats};
use crate::linalg::Matrix;
use crate::logsig::hybrid_solve;
use crate::structured::ChannelFamily;

/// Self-similar Lipschitz path in the plane with `2^levels` equal segments of
/// total length `total`. Segment `j` points at angle `Σ_k ±angle`, the sign
/// of term `k` given by bit `k` of `j` counted from the top. Every window of
/// `2^m` aligned segments bends the same way at every scale, so the area a
/// window sweeps is quadratic in its width and truncating the log-signature
/// at depth `N` leaves a local error of order `w^(N+1)`.
pub fn bent_path(levels: u32, angle: f64, total: f64) -> Matrix {
    let n = 1usize << levels;
    let delta = total / n as f64;
    Matrix::from_fn(n, 2, |j, c| {
        let phi: f64 = (0..levels)
            .map(|k| if (j >> (levels - 1 - k)) & 1 == 0 { angle } else { -angle })
            .sum();
        delta * if c == 0 { phi.cos() } else { phi.sin() }
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRow {
    pub depth: usize,
    pub window: usize,
    /// Largest max-norm state error over window boundaries.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderTable {
    pub rows: Vec<OrderRow>,
    /// `(depth, fitted slope)`.
    pub slopes: Vec<(usize, f64)>,
}

impl OrderTable {
    pub fn slope(&self, depth: usize) -> Option<f64> {
        self.slopes.iter().find(|(d, _)| *d == depth).map(|(_, s)| *s)
    }

    pub fn error(&self, depth: usize, window: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.depth == depth && r.window == window)
            .map(|r| r.error)
    }
}

/// Boundary errors of the hybrid Log-ODE solver against the per-segment
/// exponential solution, and their log-log slopes in the window width.
pub fn logode_order_probe<S: AsRef<[f64]> + Sync>(
    family: &ChannelFamily<S>,
    increments: &Matrix,
    h0: &[f64],
    depths: &[usize],
    windows: &[usize],
) -> Result<OrderTable> {
    if windows.len() < 2 {
        return Err(Error::InvalidArgument("order probe needs at least two window widths".into()));
    }
    let reference = scan_sequential(family, increments, h0, FlowOrder::Exponential)?;
    let n = increments.rows();
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &depth in depths {
        let mut errs = Vec::new();
        for &w in windows {
            let states = hybrid_solve(family, increments, w, depth, h0, &ScanStats::new())?;
            let error = states
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let r = &reference[(k * w).min(n)];
                    s.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            rows.push(OrderRow { depth, window: w, error });
            errs.push(error);
        }
        let ws: Vec<f64> = windows.iter().map(|&w| w as f64).collect();
        slopes.push((depth, fit_slope(&ws, &errs)));
    }
    Ok(OrderTable { rows, slopes })
}

/// Columns: `depth,window,error`.
pub fn write_order_csv<W: Write>(out: W, table: &OrderTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("order CSV: {e}"));
    w.write_record(["depth", "window", "error"]).map_err(io)?;
    for r in &table.rows {
        w.write_record([r.depth.to_string(), r.window.to_string(), format!("{:e}", r.error)])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("order CSV: {e}")))
}
