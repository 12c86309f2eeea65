use rayon::prelude::*;

use super::element::{ensure_finite, FlowElement, FlowOrder, ScanStats};
use crate::error::{check_dim, Result};
use crate::linalg::Matrix;
use crate::structured::ChannelFamily;

/// `n × d_ω` increments `Δω_j`, one row per interval.
pub type IncrementSequence = Matrix;

/// Per-interval flows for a whole increment sequence. The linear parts of all
/// combined matrices come from one `(n × d_ω)·(d_ω × lin)` product.
pub fn build_flows<S: AsRef<[f64]> + Sync>(
    family: &ChannelFamily<S>,
    increments: &IncrementSequence,
    order: FlowOrder,
) -> Result<Vec<FlowElement>> {
    check_dim("build_flows increments", family.d_omega(), increments.cols())?;
    let theta = family.lin_coeffs();
    let mut lin = Matrix::zeros(increments.rows(), theta.cols());
    Matrix::gemm(1.0, increments, false, &theta, false, 0.0, &mut lin)?;
    (0..increments.rows())
        .into_par_iter()
        .map(|j| {
            let c = family.combine_from_lin(lin.row(j), increments.row(j));
            match order {
                FlowOrder::First => Ok(FlowElement::first_order(c)),
                FlowOrder::Exponential => FlowElement::exponential(&c),
            }
        })
        .collect()
}

/// Recurrent evaluation `h_{j+1} = Flow_j h_j`; returns all `n + 1` states.
pub fn scan_sequential<S: AsRef<[f64]> + Sync>(
    family: &ChannelFamily<S>,
    increments: &IncrementSequence,
    h0: &[f64],
    order: FlowOrder,
) -> Result<Vec<Vec<f64>>> {
    check_dim("scan_sequential h0", family.d_h(), h0.len())?;
    let flows = build_flows(family, increments, order)?;
    let mut states = Vec::with_capacity(flows.len() + 1);
    states.push(h0.to_vec());
    for f in &flows {
        let next = f.apply(states.last().expect("nonempty"))?;
        ensure_finite(&next, "scan_sequential")?;
        states.push(next);
    }
    Ok(states)
}

/// Inclusive prefix compositions `P_j = E_j ∘ … ∘ E_0` by a work-efficient
/// up-sweep/down-sweep scan. The combine tree depends only on `n`, so results
/// do not depend on the number of worker threads.
pub fn scan_elements(mut a: Vec<FlowElement>, stats: &ScanStats) -> Result<Vec<FlowElement>> {
    let n = a.len();
    if n <= 1 {
        return Ok(a);
    }
    let levels = n.next_power_of_two().trailing_zeros() as usize;
    let round = |a: &mut Vec<FlowElement>, first: usize, stride: usize, half: usize| -> Result<()> {
        let idx: Vec<usize> = (first..n).step_by(stride).collect();
        let updates = idx
            .into_par_iter()
            .map(|i| a[i].compose(&a[i - half], stats).map(|f| (i, f)))
            .collect::<Result<Vec<_>>>()?;
        for (i, f) in updates {
            a[i] = f;
        }
        Ok(())
    };
    for lvl in 0..levels {
        let stride = 1 << (lvl + 1);
        round(&mut a, stride - 1, stride, stride / 2)?;
    }
    for lvl in (0..levels.saturating_sub(1)).rev() {
        let stride = 1 << (lvl + 1);
        let half = stride / 2;
        round(&mut a, stride + half - 1, stride, half)?;
    }
    stats.add_rounds(levels as u64, levels.saturating_sub(1) as u64);
    Ok(a)
}

/// Parallel evaluation: scan the interval flows, then apply every prefix to
/// `h0`. Returns all `n + 1` states.
pub fn scan_parallel<S: AsRef<[f64]> + Sync>(
    family: &ChannelFamily<S>,
    increments: &IncrementSequence,
    h0: &[f64],
    order: FlowOrder,
    stats: &ScanStats,
) -> Result<Vec<Vec<f64>>> {
    check_dim("scan_parallel h0", family.d_h(), h0.len())?;
    let flows = build_flows(family, increments, order)?;
    let prefixes = scan_elements(flows, stats)?;
    let mut states = vec![h0.to_vec()];
    let tail = prefixes
        .par_iter()
        .map(|p| p.apply(h0))
        .collect::<Result<Vec<_>>>()?;
    for s in &tail {
        ensure_finite(s, "scan_parallel")?;
    }
    states.extend(tail);
    Ok(states)
}

/// Affine-state recurrence `H_{j+1} = M_j H_j + B_j`, evaluated by the scan.
pub fn scan_affine(elements: Vec<FlowElement>, h0: &Matrix, stats: &ScanStats) -> Result<Vec<Matrix>> {
    let prefixes = scan_elements(elements, stats)?;
    let mut states = vec![h0.clone()];
    states.extend(
        prefixes
            .par_iter()
            .map(|p| p.apply_matrix(h0))
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(states)
}

/// Affine-state recurrence evaluated step by step.
pub fn scan_affine_sequential(elements: &[FlowElement], h0: &Matrix) -> Result<Vec<Matrix>> {
    let mut states = vec![h0.clone()];
    for e in elements {
        let next = e.apply_matrix(states.last().expect("nonempty"))?;
        states.push(next);
    }
    Ok(states)
}
