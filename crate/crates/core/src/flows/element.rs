use std::borrow::Cow;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{expm, matmul, Matrix};
use crate::structured::{block_offsets, ChannelFamily, StructureKind, StructuredMatrix};

/// Flow approximation order for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowOrder {
    /// `I + Σ_i Δω^i A^i`.
    First,
    /// `exp(Σ_i Δω^i A^i)`; reference mode.
    Exponential,
}

/// Counters for composition work. Shared by reference across scan workers.
#[derive(Debug, Default)]
pub struct ScanStats {
    combines: AtomicU64,
    dense_materializations: AtomicU64,
    up_sweep_rounds: AtomicU64,
    down_sweep_rounds: AtomicU64,
}

/// Plain snapshot of [`ScanStats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanCounts {
    pub combines: u64,
    pub dense_materializations: u64,
    pub up_sweep_rounds: u64,
    pub down_sweep_rounds: u64,
}

impl ScanStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> ScanCounts {
        ScanCounts {
            combines: self.combines.load(Ordering::Relaxed),
            dense_materializations: self.dense_materializations.load(Ordering::Relaxed),
            up_sweep_rounds: self.up_sweep_rounds.load(Ordering::Relaxed),
            down_sweep_rounds: self.down_sweep_rounds.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn add_rounds(&self, up: u64, down: u64) {
        self.up_sweep_rounds.fetch_add(up, Ordering::Relaxed);
        self.down_sweep_rounds.fetch_add(down, Ordering::Relaxed);
    }

    fn combine(&self) {
        self.combines.fetch_add(1, Ordering::Relaxed);
    }

    fn materialize(&self) {
        self.dense_materializations.fetch_add(1, Ordering::Relaxed);
    }
}

/// Linear part of a flow.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowMap {
    Identity(usize),
    Diagonal(Vec<f64>),
    BlockDiagonal { sizes: Arc<[usize]>, blocks: Vec<f64> },
    /// `I + A` for a kind that is not closed under products, kept unmaterialized
    /// until it takes part in a composition.
    Lazy(Arc<StructuredMatrix>),
    Dense(Matrix),
}

impl FlowMap {
    pub fn dim(&self) -> usize {
        match self {
            FlowMap::Identity(n) => *n,
            FlowMap::Diagonal(d) => d.len(),
            FlowMap::BlockDiagonal { sizes, .. } => sizes.iter().sum(),
            FlowMap::Lazy(a) => a.d_h(),
            FlowMap::Dense(m) => m.rows(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, FlowMap::Dense(_))
    }

    fn to_dense(&self) -> Matrix {
        match self {
            FlowMap::Identity(n) => Matrix::identity(*n),
            FlowMap::Diagonal(d) => Matrix::from_diag(d),
            FlowMap::BlockDiagonal { sizes, blocks } => {
                let n = self.dim();
                let mut m = Matrix::zeros(n, n);
                for (off, poff, b) in block_offsets(sizes) {
                    for r in 0..b {
                        for c in 0..b {
                            m.set(off + r, off + c, blocks[poff + r * b + c]);
                        }
                    }
                }
                m
            }
            FlowMap::Lazy(a) => {
                let mut m = a.materialize();
                m.add_identity(1.0);
                m
            }
            FlowMap::Dense(m) => m.clone(),
        }
    }

    /// `out = M v`.
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            FlowMap::Identity(_) => out.copy_from_slice(v),
            FlowMap::Diagonal(d) => {
                for ((o, &x), &y) in out.iter_mut().zip(d).zip(v) {
                    *o = x * y;
                }
            }
            FlowMap::BlockDiagonal { sizes, blocks } => {
                for (off, poff, b) in block_offsets(sizes) {
                    for r in 0..b {
                        let row = &blocks[poff + r * b..poff + (r + 1) * b];
                        out[off + r] = row.iter().zip(&v[off..off + b]).map(|(a, x)| a * x).sum();
                    }
                }
            }
            FlowMap::Lazy(a) => {
                out.copy_from_slice(v);
                a.apply_add(v, out);
            }
            FlowMap::Dense(m) => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = m.row(r).iter().zip(v).map(|(a, x)| a * x).sum();
                }
            }
        }
    }

    /// `self ∘ other` (other applied first).
    fn compose(&self, other: &FlowMap, stats: &ScanStats) -> Result<FlowMap> {
        check_dim("FlowMap::compose", self.dim(), other.dim())?;
        Ok(match (self, other) {
            (FlowMap::Identity(_), g) => g.clone(),
            (f, FlowMap::Identity(_)) => f.clone(),
            (FlowMap::Diagonal(a), FlowMap::Diagonal(b)) => {
                FlowMap::Diagonal(a.iter().zip(b).map(|(x, y)| x * y).collect())
            }
            (
                FlowMap::BlockDiagonal { sizes: sa, blocks: ba },
                FlowMap::BlockDiagonal { sizes: sb, blocks: bb },
            ) if sa == sb => {
                let mut out = vec![0.0; ba.len()];
                for (_, poff, b) in block_offsets(sa) {
                    let x = Matrix::new(b, b, ba[poff..poff + b * b].to_vec())?;
                    let y = Matrix::new(b, b, bb[poff..poff + b * b].to_vec())?;
                    out[poff..poff + b * b].copy_from_slice(matmul(&x, &y)?.data());
                }
                FlowMap::BlockDiagonal {
                    sizes: sa.clone(),
                    blocks: out,
                }
            }
            (f, g) => {
                let (a, b) = (densify(f, stats), densify(g, stats));
                FlowMap::Dense(matmul(&a, &b)?)
            }
        })
    }
}

fn densify<'a>(m: &'a FlowMap, stats: &ScanStats) -> Cow<'a, Matrix> {
    if let FlowMap::Dense(d) = m {
        Cow::Borrowed(d)
    } else {
        stats.materialize();
        Cow::Owned(m.to_dense())
    }
}

/// Map `H ↦ M H + B` across one interval; the bias is absent for plain
/// linear flows and has one column per hidden-state column otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowElement {
    map: FlowMap,
    bias: Option<Matrix>,
}

impl FlowElement {
    pub fn identity(d_h: usize) -> Self {
        Self {
            map: FlowMap::Identity(d_h),
            bias: None,
        }
    }

    pub fn from_map(map: FlowMap) -> Self {
        Self { map, bias: None }
    }

    pub fn with_bias(mut self, bias: Matrix) -> Result<Self> {
        check_dim("FlowElement bias rows", self.dim(), bias.rows())?;
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn map(&self) -> &FlowMap {
        &self.map
    }

    pub fn bias(&self) -> Option<&Matrix> {
        self.bias.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    /// `I + C` for a combined matrix `C`.
    pub fn first_order(c: StructuredMatrix) -> Self {
        let map = match c.kind() {
            StructureKind::Diagonal => FlowMap::Diagonal(c.params().iter().map(|x| 1.0 + x).collect()),
            StructureKind::BlockDiagonal { sizes } => {
                let mut blocks = c.params().to_vec();
                for (_, poff, b) in block_offsets(sizes) {
                    for r in 0..b {
                        blocks[poff + r * b + r] += 1.0;
                    }
                }
                FlowMap::BlockDiagonal {
                    sizes: sizes.clone().into(),
                    blocks,
                }
            }
            _ => FlowMap::Lazy(Arc::new(c)),
        };
        Self::from_map(map)
    }

    /// `exp(C)`, block-wise for closed kinds.
    pub fn exponential(c: &StructuredMatrix) -> Result<Self> {
        let map = match c.kind() {
            StructureKind::Diagonal => FlowMap::Diagonal(c.params().iter().map(|x| x.exp()).collect()),
            StructureKind::BlockDiagonal { sizes } => {
                let p = c.params();
                let mut blocks = vec![0.0; p.len()];
                for (_, poff, b) in block_offsets(sizes) {
                    let m = Matrix::new(b, b, p[poff..poff + b * b].to_vec())?;
                    blocks[poff..poff + b * b].copy_from_slice(expm(&m)?.data());
                }
                FlowMap::BlockDiagonal {
                    sizes: sizes.clone().into(),
                    blocks,
                }
            }
            _ => FlowMap::Dense(expm(&c.materialize())?),
        };
        Ok(Self::from_map(map))
    }

    /// Dense copy of the linear part.
    pub fn to_dense(&self) -> Matrix {
        self.map.to_dense()
    }

    /// `M h (+ b)` for a single-column state.
    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_dim("FlowElement::apply", self.dim(), h.len())?;
        let mut out = vec![0.0; h.len()];
        self.map.apply_into(h, &mut out);
        if let Some(b) = &self.bias {
            check_dim("FlowElement::apply bias columns", 1, b.cols())?;
            for (o, r) in out.iter_mut().zip(0..b.rows()) {
                *o += b.get(r, 0);
            }
        }
        Ok(out)
    }

    /// `M H + B` for a `d_h × n_cols` state.
    pub fn apply_matrix(&self, h: &Matrix) -> Result<Matrix> {
        check_dim("FlowElement::apply_matrix", self.dim(), h.rows())?;
        let ht = h.transpose();
        let mut out = Matrix::zeros(h.cols(), h.rows());
        for k in 0..h.cols() {
            self.map.apply_into(ht.row(k), out.row_mut(k));
        }
        let mut out = out.transpose();
        if let Some(b) = &self.bias {
            out = out.add(b)?;
        }
        Ok(out)
    }

    /// `self ∘ other`: the map `x ↦ self(other(x))`.
    pub fn compose(&self, other: &FlowElement, stats: &ScanStats) -> Result<FlowElement> {
        stats.combine();
        let map = self.map.compose(&other.map, stats)?;
        let bias = match (&self.bias, &other.bias) {
            (None, None) => None,
            (Some(bf), None) => Some(bf.clone()),
            (bf, Some(bg)) => {
                let mut mb = self.map_bias(bg);
                if let Some(bf) = bf {
                    mb = mb.add(bf)?;
                }
                Some(mb)
            }
        };
        Ok(FlowElement { map, bias })
    }

    fn map_bias(&self, b: &Matrix) -> Matrix {
        let bt = b.transpose();
        let mut out = Matrix::zeros(b.cols(), b.rows());
        for k in 0..b.cols() {
            self.map.apply_into(bt.row(k), out.row_mut(k));
        }
        out.transpose()
    }
}

/// One interval flow of a channel family driven by increment `d_omega`.
pub fn build_flow<S: AsRef<[f64]>>(
    family: &ChannelFamily<S>,
    d_omega: &[f64],
    order: FlowOrder,
) -> Result<FlowElement> {
    let c = family.combine(d_omega)?;
    match order {
        FlowOrder::First => Ok(FlowElement::first_order(c)),
        FlowOrder::Exponential => FlowElement::exponential(&c),
    }
}

pub(crate) fn ensure_finite(v: &[f64], op: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}
