//! Empirical probes: Gram statistics of iterated random structured products,
//! Log-ODE convergence order, scan equivalence and closure counters.

mod gram;
mod order;

pub use gram::{
    default_word_pairs, format_word, gram, gram_sweep, log_blocks, parse_word, word_apply, write_gram_csv,
    GramProbeConfig, GramRow, Word,
};
pub use order::{bent_path, fit_slope, logode_order_probe, write_order_csv, OrderRow, OrderTable};

use rayon::prelude::*;

use crate::error::Result;
use crate::flows::{scan_parallel, scan_sequential, FlowOrder, ScanCounts, ScanStats};
use crate::linalg::{Matrix, Rng};
use crate::structured::{init_family, InitPolicy, StructureSpec};

/// Random increments with a unit time channel scaled to keep `n`-step
/// products of moderate size.
fn probe_increments(rng: &mut Rng, n: usize, d_omega: usize) -> Matrix {
    let s = 1.0 / (n as f64).sqrt();
    Matrix::from_fn(n, d_omega, |_, c| if c == 0 { s } else { s * rng.normal() })
}

/// Largest relative state difference between the parallel and sequential
/// solvers for one random family.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRow {
    pub kind: String,
    pub seed: u64,
    pub n: usize,
    pub d_h: usize,
    pub max_rel_err: f64,
}

pub fn scan_equivalence(spec: &StructureSpec, d_h: usize, n: usize, d_omega: usize, seed: u64) -> Result<EquivalenceRow> {
    let mut rng = Rng::new(seed);
    let fam = init_family(spec, d_h, d_omega, InitPolicy::Training, &mut rng)?;
    let incs = probe_increments(&mut rng, n, d_omega);
    let h0 = rng.normal_vec(d_h, 1.0);
    let seq = scan_sequential(&fam, &incs, &h0, FlowOrder::First)?;
    let par = scan_parallel(&fam, &incs, &h0, FlowOrder::First, &ScanStats::new())?;
    let max_rel_err = seq
        .par_iter()
        .zip(&par)
        .map(|(s, p)| {
            let num = s.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den = s.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            num / den
        })
        .reduce(|| 0.0, f64::max);
    Ok(EquivalenceRow {
        kind: spec.to_string(),
        seed,
        n,
        d_h,
        max_rel_err,
    })
}

/// Composition counters of one parallel scan.
pub fn closure_profile(spec: &StructureSpec, d_h: usize, n: usize, d_omega: usize, seed: u64) -> Result<ScanCounts> {
    let mut rng = Rng::new(seed);
    let fam = init_family(spec, d_h, d_omega, InitPolicy::Training, &mut rng)?;
    let incs = probe_increments(&mut rng, n, d_omega);
    let stats = ScanStats::new();
    scan_parallel(&fam, &incs, &vec![1.0; d_h], FlowOrder::First, &stats)?;
    Ok(stats.snapshot())
}
