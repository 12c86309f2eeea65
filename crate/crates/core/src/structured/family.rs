use std::sync::Arc;

use super::matrix::{DiagonalMap, SparseMask, StructureKind, StructuredMatrix};
use super::spec::{BlockSizes, StructureSpec};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy_slice, dot, Matrix, Rng};

/// Scale conventions for random initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitPolicy {
    /// Random-feature scales used by the expressivity probes: Gaussian entries
    /// normalized by the number of nonzeros per row, unconstrained
    /// Walsh–Hadamard diagonals.
    Diagnostics,
    /// Small-norm initialization for gradient training.
    Training,
}

#[derive(Debug)]
struct SparseUnion {
    mask: Arc<SparseMask>,
    /// For each channel, union index of each of its mask entries.
    maps: Vec<Vec<u32>>,
}

/// Shape information shared by all channels of a family.
#[derive(Debug)]
pub struct FamilyStructure {
    d_h: usize,
    kinds: Vec<StructureKind>,
    union: Option<SparseUnion>,
}

impl FamilyStructure {
    pub fn new(d_h: usize, kinds: Vec<StructureKind>) -> Result<Self> {
        let first = kinds
            .first()
            .ok_or_else(|| Error::Structure("family needs at least one channel".into()))?;
        for k in &kinds {
            k.validate(d_h)?;
            let same = match (first, k) {
                (StructureKind::Sparse { .. }, StructureKind::Sparse { .. }) => true,
                _ => first == k,
            };
            if !same {
                return Err(Error::Structure(format!(
                    "mixed structures in one family: {} and {}",
                    first.name(),
                    k.name()
                )));
            }
        }
        let union = if let StructureKind::Sparse { .. } = first {
            let mut all: Vec<(u32, u32)> = kinds
                .iter()
                .flat_map(|k| match k {
                    StructureKind::Sparse { mask } => mask.entries().to_vec(),
                    _ => unreachable!(),
                })
                .collect();
            all.sort_unstable();
            all.dedup();
            let mask = SparseMask::new(d_h, all)?;
            let maps = kinds
                .iter()
                .map(|k| match k {
                    StructureKind::Sparse { mask: m } => m
                        .entries()
                        .iter()
                        .map(|&(r, c)| mask.position(r, c).expect("subset of union") as u32)
                        .collect(),
                    _ => unreachable!(),
                })
                .collect();
            Some(SparseUnion {
                mask: Arc::new(mask),
                maps,
            })
        } else {
            None
        };
        Ok(Self { d_h, kinds, union })
    }

    pub fn d_h(&self) -> usize {
        self.d_h
    }

    pub fn d_omega(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, i: usize) -> &StructureKind {
        &self.kinds[i]
    }

    pub fn kinds(&self) -> &[StructureKind] {
        &self.kinds
    }

    /// Width of the part of each matrix that is linear in the parameters and
    /// shared across channels after alignment (sparse masks are aligned on
    /// their union).
    pub fn lin_dim(&self) -> usize {
        match &self.kinds[0] {
            StructureKind::Sparse { .. } => self.union.as_ref().map_or(0, |u| u.mask.len()),
            StructureKind::Dplr { .. } => self.d_h,
            k => k.param_count(self.d_h),
        }
    }

    /// Kind of `Σ_i ω_i A_i`.
    pub fn combined_kind(&self) -> StructureKind {
        match &self.kinds[0] {
            StructureKind::Sparse { .. } => StructureKind::Sparse {
                mask: self.union.as_ref().expect("sparse union").mask.clone(),
            },
            StructureKind::Dplr { rank } => StructureKind::Dplr {
                rank: rank * self.kinds.len(),
            },
            StructureKind::WalshHadamard { .. } => StructureKind::WalshHadamard {
                map: DiagonalMap::Identity,
            },
            k => k.clone(),
        }
    }
}

/// The `d_ω` matrices `A^1..A^{d_ω}` of one SLiCE layer.
#[derive(Debug, Clone)]
pub struct ChannelFamily<S = Vec<f64>> {
    structure: Arc<FamilyStructure>,
    params: Vec<S>,
}

impl ChannelFamily<Vec<f64>> {
    pub fn from_members(members: Vec<StructuredMatrix>) -> Result<Self> {
        let d_h = members
            .first()
            .map(|m| m.d_h())
            .ok_or_else(|| Error::Structure("family needs at least one channel".into()))?;
        let kinds = members.iter().map(|m| m.kind().clone()).collect();
        let structure = Arc::new(FamilyStructure::new(d_h, kinds)?);
        let params = members.into_iter().map(|m| m.params().to_vec()).collect();
        Ok(Self { structure, params })
    }

    pub fn params_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.params[i]
    }
}

impl<S: AsRef<[f64]>> ChannelFamily<S> {
    pub fn with_params(structure: Arc<FamilyStructure>, params: Vec<S>) -> Result<Self> {
        check_dim("ChannelFamily channels", structure.d_omega(), params.len())?;
        for (k, p) in structure.kinds.iter().zip(&params) {
            check_dim("ChannelFamily params", k.param_count(structure.d_h), p.as_ref().len())?;
        }
        Ok(Self { structure, params })
    }

    pub fn structure(&self) -> &Arc<FamilyStructure> {
        &self.structure
    }

    pub fn d_h(&self) -> usize {
        self.structure.d_h
    }

    pub fn d_omega(&self) -> usize {
        self.structure.d_omega()
    }

    pub fn params(&self, i: usize) -> &[f64] {
        self.params[i].as_ref()
    }

    pub fn member(&self, i: usize) -> StructuredMatrix<&[f64]> {
        StructuredMatrix::new(self.structure.kinds[i].clone(), self.d_h(), self.params[i].as_ref())
            .expect("validated at construction")
    }

    pub fn view(&self) -> ChannelFamily<&[f64]> {
        ChannelFamily {
            structure: self.structure.clone(),
            params: self.params.iter().map(|p| p.as_ref()).collect(),
        }
    }

    pub fn to_owned(&self) -> ChannelFamily {
        ChannelFamily {
            structure: self.structure.clone(),
            params: self.params.iter().map(|p| p.as_ref().to_vec()).collect(),
        }
    }

    /// Total stored nonzeros across channels.
    pub fn nonzero_count(&self) -> usize {
        self.params.iter().map(|p| p.as_ref().len()).sum()
    }

    /// `d_ω × lin_dim` coefficient matrix `Θ`; the linear part of
    /// `Σ_i ω_i A^i` is the row vector `ω Θ`.
    pub fn lin_coeffs(&self) -> Matrix {
        let n_lin = self.structure.lin_dim();
        let d_h = self.d_h();
        let mut theta = Matrix::zeros(self.d_omega(), n_lin);
        for (i, p) in self.params.iter().enumerate() {
            let p = p.as_ref();
            let row = theta.row_mut(i);
            match &self.structure.kinds[i] {
                StructureKind::Sparse { .. } => {
                    let map = &self.structure.union.as_ref().expect("sparse union").maps[i];
                    for (&u, &w) in map.iter().zip(p) {
                        row[u as usize] = w;
                    }
                }
                StructureKind::Dplr { .. } => row.copy_from_slice(&p[..d_h]),
                StructureKind::WalshHadamard {
                    map: DiagonalMap::Tanh,
                } => {
                    for (r, &x) in row.iter_mut().zip(p) {
                        *r = x.tanh();
                    }
                }
                _ => row.copy_from_slice(p),
            }
        }
        theta
    }

    /// `Σ_i ω_i A^i` given its precomputed linear part `lin = ω Θ`.
    pub fn combine_from_lin(&self, lin: &[f64], omega: &[f64]) -> StructuredMatrix {
        let d_h = self.d_h();
        let kind = self.structure.combined_kind();
        let params = match &self.structure.kinds[0] {
            StructureKind::Dplr { rank } => {
                let r = *rank;
                let total = r * self.d_omega();
                let mut p = vec![0.0; d_h * (1 + 2 * total)];
                p[..d_h].copy_from_slice(lin);
                let (us, vs) = p[d_h..].split_at_mut(total * d_h);
                for (i, src) in self.params.iter().enumerate() {
                    let src = src.as_ref();
                    for j in 0..r {
                        let k = i * r + j;
                        let u = &src[d_h + j * d_h..d_h + (j + 1) * d_h];
                        let v = &src[d_h + (r + j) * d_h..d_h + (r + j + 1) * d_h];
                        axpy_slice(omega[i], u, &mut us[k * d_h..(k + 1) * d_h]);
                        vs[k * d_h..(k + 1) * d_h].copy_from_slice(v);
                    }
                }
                p
            }
            _ => lin.to_vec(),
        };
        StructuredMatrix::new(kind, d_h, params).expect("combined structure is consistent")
    }

    /// `Σ_i ω_i A^i`.
    pub fn combine(&self, omega: &[f64]) -> Result<StructuredMatrix> {
        check_dim("ChannelFamily::combine", self.d_omega(), omega.len())?;
        let theta = self.lin_coeffs();
        let lin = theta.matvec_transpose(omega)?;
        Ok(self.combine_from_lin(&lin, omega))
    }

    /// Accumulates `∂(aᵀ C h)/∂lin` for a combined matrix `C`.
    pub fn lin_grad_add(&self, combined: &StructuredMatrix, a: &[f64], h: &[f64], out: &mut [f64]) {
        match combined.kind() {
            StructureKind::Dplr { .. } => {
                for ((o, &x), &y) in out.iter_mut().zip(a).zip(h) {
                    *o += x * y;
                }
            }
            _ => combined.param_grad_add(a, h, 1.0, out),
        }
    }

    /// Gradients of `aᵀ C(ω) h` through the low-rank factors, which are not
    /// part of the linear view. Accumulates into per-channel `grads` and
    /// `d_omega_grad`. No-op for other kinds.
    pub fn lowrank_grad_add(
        &self,
        omega: &[f64],
        a: &[f64],
        h: &[f64],
        grads: &mut [Vec<f64>],
        d_omega_grad: &mut [f64],
    ) {
        let StructureKind::Dplr { rank } = self.structure.kinds[0] else {
            return;
        };
        let d_h = self.d_h();
        for (i, src) in self.params.iter().enumerate() {
            let src = src.as_ref();
            let g = &mut grads[i];
            for j in 0..rank {
                let uo = d_h + j * d_h;
                let vo = d_h + (rank + j) * d_h;
                let ua = dot(&src[uo..uo + d_h], a);
                let vh = dot(&src[vo..vo + d_h], h);
                axpy_slice(omega[i] * vh, a, &mut g[uo..uo + d_h]);
                axpy_slice(omega[i] * ua, h, &mut g[vo..vo + d_h]);
                d_omega_grad[i] += ua * vh;
            }
        }
    }

    /// Maps a gradient with respect to `Θ` back to per-channel parameter
    /// gradients (accumulating).
    pub fn scatter_lin_grad(&self, theta_grad: &Matrix, grads: &mut [Vec<f64>]) {
        let d_h = self.d_h();
        for (i, p) in self.params.iter().enumerate() {
            let row = theta_grad.row(i);
            let g = &mut grads[i];
            match &self.structure.kinds[i] {
                StructureKind::Sparse { .. } => {
                    let map = &self.structure.union.as_ref().expect("sparse union").maps[i];
                    for (gk, &u) in g.iter_mut().zip(map) {
                        *gk += row[u as usize];
                    }
                }
                StructureKind::Dplr { .. } => axpy_slice(1.0, row, &mut g[..d_h]),
                StructureKind::WalshHadamard {
                    map: DiagonalMap::Tanh,
                } => {
                    for ((gk, &r), &x) in g.iter_mut().zip(row).zip(p.as_ref()) {
                        *gk += r * (1.0 - x.tanh().powi(2));
                    }
                }
                _ => axpy_slice(1.0, row, g),
            }
        }
    }

    /// Applies `A^i` for every channel to `v`, returning the `d_ω` results.
    pub fn apply_all(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.d_omega())
            .map(|i| {
                let mut out = vec![0.0; self.d_h()];
                self.member(i).apply_add(v, &mut out);
                out
            })
            .collect()
    }
}

fn draw_kind(spec: &StructureSpec, d_h: usize, rng: &mut Rng, policy: InitPolicy) -> Result<StructureKind> {
    Ok(match spec {
        StructureSpec::Dense => StructureKind::Dense,
        StructureSpec::Diagonal => StructureKind::Diagonal,
        StructureSpec::Dplr { rank } => StructureKind::Dplr { rank: *rank },
        StructureSpec::BlockDiagonal(sizes) => StructureKind::BlockDiagonal {
            sizes: sizes.resolve(d_h)?,
        },
        StructureSpec::Sparse { epsilon } => {
            let p = StructureSpec::sparse_keep_probability(*epsilon, d_h);
            let mut entries = Vec::new();
            for r in 0..d_h as u32 {
                for c in 0..d_h as u32 {
                    if rng.bernoulli(p) {
                        entries.push((r, c));
                    }
                }
            }
            StructureKind::Sparse {
                mask: Arc::new(SparseMask::new(d_h, entries)?),
            }
        }
        StructureSpec::WalshHadamard => StructureKind::WalshHadamard {
            map: match policy {
                InitPolicy::Diagnostics => DiagonalMap::Identity,
                InitPolicy::Training => DiagonalMap::Tanh,
            },
        },
    })
}

fn draw_params(spec: &StructureSpec, kind: &StructureKind, d_h: usize, rng: &mut Rng, policy: InitPolicy) -> Vec<f64> {
    let n = kind.param_count(d_h);
    let dh = d_h as f64;
    match (kind, policy) {
        (StructureKind::Dense, _) => rng.normal_vec(n, 1.0 / dh.sqrt()),
        (StructureKind::Diagonal, InitPolicy::Diagnostics) => rng.normal_vec(n, 1.0),
        (StructureKind::Diagonal, InitPolicy::Training) => rng.normal_vec(n, 1.0 / dh.sqrt()),
        (StructureKind::Dplr { .. }, policy) => {
            let diag_std = match policy {
                InitPolicy::Diagnostics => 1.0,
                InitPolicy::Training => 1.0 / dh.sqrt(),
            };
            let mut p = rng.normal_vec(d_h, diag_std);
            p.extend(rng.normal_vec(n - d_h, 1.0 / dh.sqrt()));
            p
        }
        (StructureKind::BlockDiagonal { sizes }, _) => sizes
            .iter()
            .flat_map(|&b| rng.normal_vec(b * b, 1.0 / (b as f64).sqrt()))
            .collect(),
        (StructureKind::Sparse { .. }, _) => {
            let StructureSpec::Sparse { epsilon } = spec else {
                unreachable!()
            };
            let p = StructureSpec::sparse_keep_probability(*epsilon, d_h);
            rng.normal_vec(n, 1.0 / (dh * p).sqrt())
        }
        (StructureKind::WalshHadamard { .. }, InitPolicy::Diagnostics) => rng.normal_vec(n, 1.0),
        (StructureKind::WalshHadamard { .. }, InitPolicy::Training) => {
            rng.normal_vec(n, 1.0 / dh.sqrt())
        }
    }
}

/// Draws a random family of `d_omega` matrices.
pub fn init_family(
    spec: &StructureSpec,
    d_h: usize,
    d_omega: usize,
    policy: InitPolicy,
    rng: &mut Rng,
) -> Result<ChannelFamily> {
    spec.validate(d_h)?;
    if d_omega == 0 {
        return Err(Error::Structure("d_omega must be positive".into()));
    }
    let mut kinds = Vec::with_capacity(d_omega);
    let mut params = Vec::with_capacity(d_omega);
    for _ in 0..d_omega {
        let kind = draw_kind(spec, d_h, rng, policy)?;
        params.push(draw_params(spec, &kind, d_h, rng, policy));
        kinds.push(kind);
    }
    let structure = Arc::new(FamilyStructure::new(d_h, kinds)?);
    ChannelFamily::with_params(structure, params)
}

/// Uniform block layout helper.
pub fn uniform_blocks(b: usize) -> StructureSpec {
    StructureSpec::BlockDiagonal(BlockSizes::Uniform(b))
}
