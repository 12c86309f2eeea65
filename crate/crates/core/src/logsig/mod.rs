//! Truncated log-signatures of piecewise-linear paths, Lie-bracket lifting of
//! the channel matrices, and the Log-ODE interval flow.

mod basis;
mod tensor;

use rayon::prelude::*;

pub use basis::{is_lyndon, lyndon_words, witt_dimension, HallBasis, HallElement, HallTree, MAX_DEPTH};
pub use tensor::{chen_product, path_signature, segment_signature, TensorPoly};

use crate::error::{check_dim, Error, Result};
use crate::flows::{scan_elements, FlowElement, IncrementSequence, ScanStats};
use crate::linalg::{matmul, Matrix};
use crate::structured::{block_offsets, ChannelFamily, StructureKind, StructuredMatrix};

/// Coordinates `λ_k` of a truncated log-signature in a [`HallBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogSignature {
    pub coeffs: Vec<f64>,
}

/// Log-signature of the piecewise-linear path whose segments are the rows
/// of `increments`.
pub fn log_signature(increments: &IncrementSequence, basis: &HallBasis) -> Result<LogSignature> {
    check_dim("log_signature channels", basis.alphabet(), increments.cols())?;
    let rows: Vec<&[f64]> = (0..increments.rows()).map(|j| increments.row(j)).collect();
    let sig = path_signature(&rows, basis.alphabet(), basis.depth())?;
    let coeffs = basis.project(&sig.log()?)?;
    Ok(LogSignature { coeffs })
}

fn commutator(a: &StructuredMatrix, b: &StructuredMatrix) -> Result<StructuredMatrix> {
    let d_h = a.d_h();
    match (a.kind(), b.kind()) {
        (StructureKind::Diagonal, StructureKind::Diagonal) => StructuredMatrix::zeros(StructureKind::Diagonal, d_h),
        (StructureKind::BlockDiagonal { sizes }, StructureKind::BlockDiagonal { sizes: sb }) if sizes == sb => {
            let (pa, pb) = (a.params(), b.params());
            let mut out = vec![0.0; pa.len()];
            for (_, poff, n) in block_offsets(sizes) {
                let x = Matrix::new(n, n, pa[poff..poff + n * n].to_vec())?;
                let y = Matrix::new(n, n, pb[poff..poff + n * n].to_vec())?;
                let c = matmul(&x, &y)?.sub(&matmul(&y, &x)?)?;
                out[poff..poff + n * n].copy_from_slice(c.data());
            }
            StructuredMatrix::new(a.kind().clone(), d_h, out)
        }
        _ => {
            let (x, y) = (a.materialize(), b.materialize());
            let c = matmul(&x, &y)?.sub(&matmul(&y, &x)?)?;
            StructuredMatrix::new(StructureKind::Dense, d_h, c.into_data())
        }
    }
}

/// Matrices `Ā^k` for every basis element: the channel matrices for letters
/// and commutators `[Ā^i, Ā^j]` for brackets. Diagonal and block-diagonal
/// families keep their structure; other kinds are materialized.
pub fn lift_vector_fields<S: AsRef<[f64]>>(
    family: &ChannelFamily<S>,
    basis: &HallBasis,
) -> Result<Vec<StructuredMatrix>> {
    check_dim("lift_vector_fields channels", family.d_omega(), basis.alphabet())?;
    let mut lifted: Vec<StructuredMatrix> = Vec::with_capacity(basis.len());
    for el in basis.elements() {
        let m = match el.tree {
            HallTree::Letter(i) => {
                let member = family.member(i);
                if member.kind().closed_under_product() {
                    member.to_owned()
                } else {
                    StructuredMatrix::new(StructureKind::Dense, family.d_h(), member.materialize().into_data())?
                }
            }
            HallTree::Bracket(i, j) => commutator(&lifted[i], &lifted[j])?,
        };
        lifted.push(m);
    }
    Ok(lifted)
}

/// Interval flow `exp(Σ_k s_k λ_k Ā^k)` for one window.
///
/// Flows act on the hidden state from the left, so later increments multiply
/// earlier ones from the left and the word-to-matrix map reverses products.
/// With `Ā^k = Ā^i Ā^j − Ā^j Ā^i`, an element of word length `m` therefore
/// enters with sign `s_k = (−1)^(m−1)`.
pub fn logode_flow(basis: &HallBasis, lifted: &[StructuredMatrix], logsig: &LogSignature) -> Result<FlowElement> {
    check_dim("logode_flow", lifted.len(), logsig.coeffs.len())?;
    check_dim("logode_flow basis", basis.len(), lifted.len())?;
    let first = lifted
        .first()
        .ok_or_else(|| Error::InvalidArgument("logode_flow needs at least one vector field".into()))?;
    let mut sum = vec![0.0; first.param_count()];
    for ((m, &lam), el) in lifted.iter().zip(&logsig.coeffs).zip(basis.elements()) {
        let lam = if el.word.len() % 2 == 0 { -lam } else { lam };
        if lam != 0.0 {
            for (s, p) in sum.iter_mut().zip(m.params()) {
                *s += lam * p;
            }
        }
    }
    let combined = StructuredMatrix::new(first.kind().clone(), first.d_h(), sum)?;
    FlowElement::exponential(&combined)
}

/// Log-ODE on consecutive windows of `window` increments (the last window may
/// be shorter), followed by a parallel scan over the window flows. Returns the
/// states at window boundaries, starting with `h0`.
pub fn hybrid_solve<S: AsRef<[f64]>>(
    family: &ChannelFamily<S>,
    increments: &IncrementSequence,
    window: usize,
    depth: usize,
    h0: &[f64],
    stats: &ScanStats,
) -> Result<Vec<Vec<f64>>> {
    if window == 0 {
        return Err(Error::InvalidArgument("hybrid window must be positive".into()));
    }
    check_dim("hybrid_solve h0", family.d_h(), h0.len())?;
    let basis = HallBasis::new(family.d_omega(), depth)?;
    let lifted = lift_vector_fields(family, &basis)?;
    let n = increments.rows();
    let starts: Vec<usize> = (0..n).step_by(window).collect();
    let flows = starts
        .par_iter()
        .map(|&s| {
            let e = (s + window).min(n);
            let rows: Vec<&[f64]> = (s..e).map(|j| increments.row(j)).collect();
            let sig = path_signature(&rows, basis.alphabet(), depth)?;
            let ls = LogSignature {
                coeffs: basis.project(&sig.log()?)?,
            };
            logode_flow(&basis, &lifted, &ls)
        })
        .collect::<Result<Vec<_>>>()?;
    let prefixes = scan_elements(flows, stats)?;
    let mut states = vec![h0.to_vec()];
    for p in &prefixes {
        states.push(p.apply(h0)?);
    }
    Ok(states)
}
