use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::hadamard::fwht_in_place;
use crate::linalg::{axpy_slice, dot, Matrix};

/// Fixed sparsity pattern: `(row, col)` coordinates, sorted row-major, no duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMask {
    d_h: usize,
    entries: Vec<(u32, u32)>,
}

impl SparseMask {
    pub fn new(d_h: usize, mut entries: Vec<(u32, u32)>) -> Result<Self> {
        entries.sort_unstable();
        entries.dedup();
        if entries
            .iter()
            .any(|&(r, c)| r as usize >= d_h || c as usize >= d_h)
        {
            return Err(Error::Structure("sparse mask entry out of range".into()));
        }
        Ok(Self { d_h, entries })
    }

    pub fn full(d_h: usize) -> Self {
        let entries = (0..d_h as u32)
            .flat_map(|r| (0..d_h as u32).map(move |c| (r, c)))
            .collect();
        Self { d_h, entries }
    }

    pub fn d_h(&self) -> usize {
        self.d_h
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn position(&self, r: u32, c: u32) -> Option<usize> {
        self.entries.binary_search(&(r, c)).ok()
    }
}

/// How the stored Walsh–Hadamard diagonal parameters map to the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalMap {
    /// `δ = tanh(θ)`, keeping every diagonal entry in `(−1, 1)`.
    Tanh,
    /// `δ = θ` (unconstrained; used for random-feature probes).
    Identity,
}

/// Structural family of one state-transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureKind {
    Dense,
    Diagonal,
    /// `D + Σ_j u_j v_jᵀ`.
    Dplr { rank: usize },
    BlockDiagonal { sizes: Vec<usize> },
    Sparse { mask: Arc<SparseMask> },
    /// `(1/√d_h) · H · diag(δ)` with `H` the Sylvester Hadamard matrix.
    WalshHadamard { map: DiagonalMap },
}

impl StructureKind {
    pub fn name(&self) -> &'static str {
        match self {
            StructureKind::Dense => "dense",
            StructureKind::Diagonal => "diagonal",
            StructureKind::Dplr { .. } => "dplr",
            StructureKind::BlockDiagonal { .. } => "block-diagonal",
            StructureKind::Sparse { .. } => "sparse",
            StructureKind::WalshHadamard { .. } => "walsh-hadamard",
        }
    }

    /// Number of stored parameters of one `d_h × d_h` matrix of this kind.
    pub fn param_count(&self, d_h: usize) -> usize {
        match self {
            StructureKind::Dense => d_h * d_h,
            StructureKind::Diagonal | StructureKind::WalshHadamard { .. } => d_h,
            StructureKind::Dplr { rank } => d_h * (1 + 2 * rank),
            StructureKind::BlockDiagonal { sizes } => sizes.iter().map(|b| b * b).sum(),
            StructureKind::Sparse { mask } => mask.len(),
        }
    }

    pub fn validate(&self, d_h: usize) -> Result<()> {
        match self {
            StructureKind::BlockDiagonal { sizes } => {
                if sizes.contains(&0) {
                    return Err(Error::Structure("block sizes must be positive".into()));
                }
                let total: usize = sizes.iter().sum();
                if total != d_h {
                    return Err(Error::Structure(format!(
                        "block sizes sum to {total}, expected d_h = {d_h}"
                    )));
                }
            }
            StructureKind::Sparse { mask } => check_dim("sparse mask", d_h, mask.d_h())?,
            StructureKind::WalshHadamard { .. } => {
                if !d_h.is_power_of_two() {
                    return Err(Error::Structure(format!(
                        "Walsh-Hadamard requires a power-of-two d_h, got {d_h}"
                    )));
                }
            }
            StructureKind::Dense | StructureKind::Diagonal | StructureKind::Dplr { .. } => {}
        }
        Ok(())
    }

    /// Whether products of two matrices of this kind stay in the kind.
    pub fn closed_under_product(&self) -> bool {
        matches!(
            self,
            StructureKind::Diagonal | StructureKind::BlockDiagonal { .. }
        )
    }
}

/// Number of structural nonzeros per matrix times the channel count.
pub fn nonzero_count(kind: &StructureKind, d_h: usize, d_omega: usize) -> usize {
    kind.param_count(d_h) * d_omega
}

pub(crate) fn block_offsets(sizes: &[usize]) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    // (row offset, parameter offset, size)
    sizes.iter().scan((0usize, 0usize), |acc, &b| {
        let out = (acc.0, acc.1, b);
        acc.0 += b;
        acc.1 += b * b;
        Some(out)
    })
}

/// One structured `d_h × d_h` matrix. `S` is the parameter storage, so the
/// same type serves owned matrices and borrowed views of a parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMatrix<S = Vec<f64>> {
    kind: StructureKind,
    d_h: usize,
    params: S,
}

impl StructuredMatrix<Vec<f64>> {
    pub fn zeros(kind: StructureKind, d_h: usize) -> Result<Self> {
        let n = kind.param_count(d_h);
        Self::new(kind, d_h, vec![0.0; n])
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

impl<S: AsRef<[f64]>> StructuredMatrix<S> {
    pub fn new(kind: StructureKind, d_h: usize, params: S) -> Result<Self> {
        kind.validate(d_h)?;
        check_dim("StructuredMatrix params", kind.param_count(d_h), params.as_ref().len())?;
        Ok(Self { kind, d_h, params })
    }

    pub fn kind(&self) -> &StructureKind {
        &self.kind
    }

    pub fn d_h(&self) -> usize {
        self.d_h
    }

    pub fn params(&self) -> &[f64] {
        self.params.as_ref()
    }

    pub fn view(&self) -> StructuredMatrix<&[f64]> {
        StructuredMatrix {
            kind: self.kind.clone(),
            d_h: self.d_h,
            params: self.params.as_ref(),
        }
    }

    pub fn to_owned(&self) -> StructuredMatrix {
        StructuredMatrix {
            kind: self.kind.clone(),
            d_h: self.d_h,
            params: self.params.as_ref().to_vec(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.as_ref().len()
    }

    /// Effective Walsh–Hadamard diagonal.
    fn wh_diag(&self, map: DiagonalMap) -> Vec<f64> {
        let p = self.params.as_ref();
        match map {
            DiagonalMap::Tanh => p.iter().map(|x| x.tanh()).collect(),
            DiagonalMap::Identity => p.to_vec(),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("StructuredMatrix::apply", self.d_h, v.len())?;
        let mut out = vec![0.0; self.d_h];
        self.apply_add(v, &mut out);
        Ok(out)
    }

    /// `out += A v`. Lengths are the caller's responsibility.
    pub fn apply_add(&self, v: &[f64], out: &mut [f64]) {
        let p = self.params.as_ref();
        let n = self.d_h;
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(out.len(), n);
        match &self.kind {
            StructureKind::Dense => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o += dot(&p[r * n..(r + 1) * n], v);
                }
            }
            StructureKind::Diagonal => {
                for ((o, &d), &x) in out.iter_mut().zip(p).zip(v) {
                    *o += d * x;
                }
            }
            StructureKind::Dplr { rank } => {
                let (diag, rest) = p.split_at(n);
                let (us, vs) = rest.split_at(rank * n);
                for ((o, &d), &x) in out.iter_mut().zip(diag).zip(v) {
                    *o += d * x;
                }
                for j in 0..*rank {
                    let s = dot(&vs[j * n..(j + 1) * n], v);
                    axpy_slice(s, &us[j * n..(j + 1) * n], out);
                }
            }
            StructureKind::BlockDiagonal { sizes } => {
                for (off, poff, b) in block_offsets(sizes) {
                    let blk = &p[poff..poff + b * b];
                    let x = &v[off..off + b];
                    for r in 0..b {
                        out[off + r] += dot(&blk[r * b..(r + 1) * b], x);
                    }
                }
            }
            StructureKind::Sparse { mask } => {
                for (&(r, c), &w) in mask.entries().iter().zip(p) {
                    out[r as usize] += w * v[c as usize];
                }
            }
            StructureKind::WalshHadamard { map } => {
                let diag = self.wh_diag(*map);
                let mut t: Vec<f64> = diag.iter().zip(v).map(|(d, x)| d * x).collect();
                fwht_in_place(&mut t, true).expect("power-of-two d_h validated at construction");
                for (o, x) in out.iter_mut().zip(&t) {
                    *o += x;
                }
            }
        }
    }

    /// `out += Aᵀ v`.
    pub fn apply_transpose_add(&self, v: &[f64], out: &mut [f64]) {
        let p = self.params.as_ref();
        let n = self.d_h;
        match &self.kind {
            StructureKind::Dense => {
                for (r, &vr) in v.iter().enumerate() {
                    axpy_slice(vr, &p[r * n..(r + 1) * n], out);
                }
            }
            StructureKind::Diagonal => {
                for ((o, &d), &x) in out.iter_mut().zip(p).zip(v) {
                    *o += d * x;
                }
            }
            StructureKind::Dplr { rank } => {
                let (diag, rest) = p.split_at(n);
                let (us, vs) = rest.split_at(rank * n);
                for ((o, &d), &x) in out.iter_mut().zip(diag).zip(v) {
                    *o += d * x;
                }
                for j in 0..*rank {
                    let s = dot(&us[j * n..(j + 1) * n], v);
                    axpy_slice(s, &vs[j * n..(j + 1) * n], out);
                }
            }
            StructureKind::BlockDiagonal { sizes } => {
                for (off, poff, b) in block_offsets(sizes) {
                    let blk = &p[poff..poff + b * b];
                    for r in 0..b {
                        axpy_slice(v[off + r], &blk[r * b..(r + 1) * b], &mut out[off..off + b]);
                    }
                }
            }
            StructureKind::Sparse { mask } => {
                for (&(r, c), &w) in mask.entries().iter().zip(p) {
                    out[c as usize] += w * v[r as usize];
                }
            }
            StructureKind::WalshHadamard { map } => {
                let diag = self.wh_diag(*map);
                let mut t = v.to_vec();
                fwht_in_place(&mut t, true).expect("power-of-two d_h validated at construction");
                for ((o, d), x) in out.iter_mut().zip(&diag).zip(&t) {
                    *o += d * x;
                }
            }
        }
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("StructuredMatrix::apply_transpose", self.d_h, v.len())?;
        let mut out = vec![0.0; self.d_h];
        self.apply_transpose_add(v, &mut out);
        Ok(out)
    }

    /// Accumulates `scale · ∂(aᵀ A h)/∂θ` into `grad`, where `θ` are the stored
    /// parameters. Entries outside the structure never receive gradient.
    pub fn param_grad_add(&self, a: &[f64], h: &[f64], scale: f64, grad: &mut [f64]) {
        let p = self.params.as_ref();
        let n = self.d_h;
        match &self.kind {
            StructureKind::Dense => {
                for (r, &ar) in a.iter().enumerate() {
                    axpy_slice(scale * ar, h, &mut grad[r * n..(r + 1) * n]);
                }
            }
            StructureKind::Diagonal => {
                for ((g, &x), &y) in grad.iter_mut().zip(a).zip(h) {
                    *g += scale * x * y;
                }
            }
            StructureKind::Dplr { rank } => {
                let (_, rest) = p.split_at(n);
                let (us, vs) = rest.split_at(rank * n);
                let (gd, grest) = grad.split_at_mut(n);
                let (gu, gv) = grest.split_at_mut(rank * n);
                for ((g, &x), &y) in gd.iter_mut().zip(a).zip(h) {
                    *g += scale * x * y;
                }
                for j in 0..*rank {
                    let vh = dot(&vs[j * n..(j + 1) * n], h);
                    let ua = dot(&us[j * n..(j + 1) * n], a);
                    axpy_slice(scale * vh, a, &mut gu[j * n..(j + 1) * n]);
                    axpy_slice(scale * ua, h, &mut gv[j * n..(j + 1) * n]);
                }
            }
            StructureKind::BlockDiagonal { sizes } => {
                for (off, poff, b) in block_offsets(sizes) {
                    for r in 0..b {
                        let s = scale * a[off + r];
                        axpy_slice(s, &h[off..off + b], &mut grad[poff + r * b..poff + (r + 1) * b]);
                    }
                }
            }
            StructureKind::Sparse { mask } => {
                for (g, &(r, c)) in grad.iter_mut().zip(mask.entries()) {
                    *g += scale * a[r as usize] * h[c as usize];
                }
            }
            StructureKind::WalshHadamard { map } => {
                // aᵀ (H/√n) diag(δ) h = ((H/√n) a) · (δ ⊙ h)
                let mut ha = a.to_vec();
                fwht_in_place(&mut ha, true).expect("power-of-two d_h validated at construction");
                for (k, g) in grad.iter_mut().enumerate() {
                    let dd = match map {
                        DiagonalMap::Tanh => 1.0 - p[k].tanh().powi(2),
                        DiagonalMap::Identity => 1.0,
                    };
                    *g += scale * ha[k] * h[k] * dd;
                }
            }
        }
    }

    pub fn materialize(&self) -> Matrix {
        let n = self.d_h;
        let p = self.params.as_ref();
        match &self.kind {
            StructureKind::Dense => Matrix::new(n, n, p.to_vec()).expect("validated length"),
            StructureKind::Diagonal => Matrix::from_diag(p),
            StructureKind::Dplr { rank } => {
                let mut m = Matrix::from_diag(&p[..n]);
                let us = &p[n..n + rank * n];
                let vs = &p[n + rank * n..];
                for j in 0..*rank {
                    let u = &us[j * n..(j + 1) * n];
                    let v = &vs[j * n..(j + 1) * n];
                    for (r, &ur) in u.iter().enumerate() {
                        axpy_slice(ur, v, m.row_mut(r));
                    }
                }
                m
            }
            StructureKind::BlockDiagonal { sizes } => {
                let mut m = Matrix::zeros(n, n);
                for (off, poff, b) in block_offsets(sizes) {
                    for r in 0..b {
                        for c in 0..b {
                            m.set(off + r, off + c, p[poff + r * b + c]);
                        }
                    }
                }
                m
            }
            StructureKind::Sparse { mask } => {
                let mut m = Matrix::zeros(n, n);
                for (&(r, c), &w) in mask.entries().iter().zip(p) {
                    m.set(r as usize, c as usize, w);
                }
                m
            }
            StructureKind::WalshHadamard { map } => {
                let diag = self.wh_diag(*map);
                let s = 1.0 / (n as f64).sqrt();
                Matrix::from_fn(n, n, |r, c| {
                    let sign = if (r & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    s * sign * diag[c]
                })
            }
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.kind.param_count(self.d_h)
    }
}
