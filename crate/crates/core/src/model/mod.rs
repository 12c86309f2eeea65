//! Stacked SLiCE blocks: embedding, structured linear CDE layers, pointwise
//! mixing, layer normalization and a per-position readout.

mod config;
mod params;

use std::sync::Arc;

use rayon::prelude::*;

pub use config::{BlockStyle, SliceLayerConfig, SliceModelConfig, Solver};
pub use config::{order_name, parse_order};
pub use params::ParamStore;

use crate::error::{check_dim, Error, Result};
use crate::flows::{
    build_flows, scan_affine, scan_affine_sequential, scan_parallel, scan_sequential, FlowOrder, IncrementSequence,
    ScanStats,
};
use crate::linalg::{Matrix, Rng};
use crate::logsig::hybrid_solve;
use crate::structured::{init_family, ChannelFamily, FamilyStructure, InitPolicy};

/// Increments `Δω_j = dt_j · (1, X_j)`.
pub fn build_omega(x: &Matrix, dt: &[f64]) -> Result<IncrementSequence> {
    check_dim("build_omega dt", x.rows(), dt.len())?;
    if let Some(bad) = dt.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::InvalidArgument(format!("step durations must be positive, got {bad}")));
    }
    let mut out = Matrix::zeros(x.rows(), x.cols() + 1);
    for (j, &t) in dt.iter().enumerate() {
        let row = out.row_mut(j);
        row[0] = t;
        for (o, &v) in row[1..].iter_mut().zip(x.row(j)) {
            *o = t * v;
        }
    }
    Ok(out)
}

fn check_family<S: AsRef<[f64]>>(cfg: &SliceLayerConfig, family: &ChannelFamily<S>) -> Result<()> {
    check_dim("layer d_h", cfg.d_h, family.d_h())?;
    check_dim("layer d_omega", cfg.d_omega, family.d_omega())
}

/// Hidden states of one layer: `n + 1` states for the step-wise solvers,
/// window-boundary states for the hybrid solver. The first state is `h0`.
pub fn layer_forward<S: AsRef<[f64]> + Sync>(
    cfg: &SliceLayerConfig,
    family: &ChannelFamily<S>,
    increments: &IncrementSequence,
    h0: &[f64],
    stats: &ScanStats,
) -> Result<Vec<Vec<f64>>> {
    check_family(cfg, family)?;
    match cfg.solver {
        Solver::Sequential => scan_sequential(family, increments, h0, cfg.order),
        Solver::ParallelScan => scan_parallel(family, increments, h0, cfg.order, stats),
        Solver::Hybrid { window, depth } => hybrid_solve(family, increments, window, depth, h0, stats),
    }
}

/// Matrix-valued hidden state: each column `k` follows
/// `h^k_{j+1} = Flow_j h^k_j + B^k Δξ^k_j`.
pub fn matrix_state_forward<S: AsRef<[f64]> + Sync>(
    cfg: &SliceLayerConfig,
    family: &ChannelFamily<S>,
    bias: &Matrix,
    omega: &IncrementSequence,
    xi: &Matrix,
    h0: &Matrix,
    stats: &ScanStats,
) -> Result<Vec<Matrix>> {
    check_family(cfg, family)?;
    check_dim("matrix_state_forward bias rows", cfg.d_h, bias.rows())?;
    check_dim("matrix_state_forward xi columns", bias.cols(), xi.cols())?;
    check_dim("matrix_state_forward xi rows", omega.rows(), xi.rows())?;
    check_dim("matrix_state_forward H0 rows", cfg.d_h, h0.rows())?;
    check_dim("matrix_state_forward H0 columns", bias.cols(), h0.cols())?;
    let flows = build_flows(family, omega, cfg.order)?;
    let elements = flows
        .into_iter()
        .enumerate()
        .map(|(j, f)| {
            let b = Matrix::from_fn(bias.rows(), bias.cols(), |r, k| bias.get(r, k) * xi.get(j, k));
            f.with_bias(b)
        })
        .collect::<Result<Vec<_>>>()?;
    match cfg.solver {
        Solver::Sequential => scan_affine_sequential(&elements, h0),
        Solver::ParallelScan => scan_affine(elements, h0, stats),
        Solver::Hybrid { .. } => Err(Error::Config(
            "matrix-valued states support the sequential and parallel solvers only".into(),
        )),
    }
}

/// Normalizes `z` to zero mean and unit variance; returns `1/σ`.
pub fn layer_norm(z: &[f64], eps: f64, out: &mut [f64]) -> f64 {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let inv = if var + eps > 0.0 { 1.0 / (var + eps).sqrt() } else { 0.0 };
    for (o, x) in out.iter_mut().zip(z) {
        *o = (x - mean) * inv;
    }
    inv
}

#[derive(Debug, Clone)]
pub(crate) struct LayerLayout {
    pub structure: Arc<FamilyStructure>,
    /// Offsets of each channel inside the transition buffer.
    pub offsets: Vec<usize>,
    pub a: usize,
    pub h0: usize,
    pub mix_w: usize,
    pub mix_b: usize,
    pub gate: Option<(usize, usize)>,
    pub gamma: usize,
    pub beta: usize,
}

/// A SLiCE stack with its parameters.
#[derive(Debug, Clone)]
pub struct SliceModel {
    config: SliceModelConfig,
    pub(crate) layers: Vec<LayerLayout>,
    pub(crate) embed: usize,
    pub(crate) readout_w: usize,
    pub(crate) readout_b: usize,
    params: ParamStore,
}

impl SliceModel {
    /// Random initialization. Sparse masks are drawn from `rng` as well, so a
    /// model is reproduced exactly by its configuration and seed.
    pub fn new(config: SliceModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let e = config.embed_dim;
        let embed = params.push("embed", rng.normal_vec(config.vocab * e, config.embed_std))?;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (l, c) in config.layers.iter().enumerate() {
            let d = c.d_h;
            let fam = init_family(&c.structure, d, c.d_omega, InitPolicy::Training, rng)?;
            let mut offsets = vec![0];
            let mut flat = Vec::new();
            // the combined matrix sums d_omega members, so scale to keep its variance per member
            let scale = config.init_scale / (fam.d_omega() as f64).sqrt();
            for i in 0..fam.d_omega() {
                flat.extend(fam.params(i).iter().map(|x| x * scale));
                offsets.push(flat.len());
            }
            let structure = fam.structure().clone();
            let a = params.push(format!("layer{l}.a"), flat)?;
            let h0 = params.push(format!("layer{l}.h0"), vec![1.0 / (d as f64).sqrt(); d])?;
            let std = 1.0 / (d as f64).sqrt();
            let mix_w = params.push(format!("layer{l}.mix.w"), rng.normal_vec(d * d, std))?;
            let mix_b = params.push(format!("layer{l}.mix.b"), vec![0.0; d])?;
            let gate = match config.block {
                BlockStyle::Glu => Some((
                    params.push(format!("layer{l}.gate.w"), rng.normal_vec(d * d, std))?,
                    params.push(format!("layer{l}.gate.b"), vec![0.0; d])?,
                )),
                BlockStyle::TanhMix => None,
            };
            let gamma = params.push(format!("layer{l}.norm.gamma"), vec![1.0; d])?;
            let beta = params.push(format!("layer{l}.norm.beta"), vec![0.0; d])?;
            layers.push(LayerLayout {
                structure,
                offsets,
                a,
                h0,
                mix_w,
                mix_b,
                gate,
                gamma,
                beta,
            });
        }
        let d = config.output_width();
        let readout_w = params.push(
            "readout.w",
            rng.normal_vec(config.classes * d, 1.0 / (d as f64).sqrt()),
        )?;
        let readout_b = params.push("readout.b", vec![0.0; config.classes])?;
        Ok(Self {
            config,
            layers,
            embed,
            readout_w,
            readout_b,
            params,
        })
    }

    pub fn config(&self) -> &SliceModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Channel family of layer `l`, borrowing the parameter buffer.
    pub fn family(&self, l: usize) -> ChannelFamily<&[f64]> {
        let lay = &self.layers[l];
        let buf = self.params.get(lay.a);
        let slices = lay.offsets.windows(2).map(|w| &buf[w[0]..w[1]]).collect();
        ChannelFamily::with_params(lay.structure.clone(), slices).expect("layout matches structure")
    }

    /// Nonzero transition parameters per matrix, summed over channels and layers.
    pub fn transition_nonzeros(&self) -> usize {
        (0..self.layers.len()).map(|l| self.family(l).nonzero_count()).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.total_len()
    }
}

/// Intermediate values of one block, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub omega: Matrix,
    /// `n + 1` hidden states.
    pub states: Matrix,
    /// Mix pre-activation (GLU: value branch).
    pub pre: Matrix,
    pub gate_pre: Option<Matrix>,
    pub mixed: Matrix,
    pub normed: Matrix,
    pub inv_std: Vec<f64>,
    pub mask: Option<Matrix>,
}

/// Full forward trace of one sequence.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) tokens: Vec<usize>,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) final_hidden: Matrix,
    pub logits: Matrix,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y W^T + b` for row-major `y` (n × d_in) and `w` (d_out × d_in).
pub(crate) fn linear(y: &Matrix, w: &[f64], b: &[f64]) -> Result<Matrix> {
    let d_out = b.len();
    let wm = Matrix::new(d_out, y.cols(), w.to_vec())?;
    let mut out = Matrix::from_fn(y.rows(), d_out, |_, c| b[c]);
    Matrix::gemm(1.0, y, false, &wm, true, 1.0, &mut out)?;
    Ok(out)
}

fn layer_states(model: &SliceModel, l: usize, omega: &Matrix) -> Result<Matrix> {
    let cfg = &model.config.layers[l];
    if let Solver::Hybrid { window, .. } = cfg.solver {
        if window != 1 {
            return Err(Error::Config(
                "per-position outputs need every state; use a hybrid window of 1 or a step-wise solver".into(),
            ));
        }
    }
    let family = model.family(l);
    let h0 = model.params.get(model.layers[l].h0);
    let states = layer_forward(cfg, &family, omega, h0, &ScanStats::new())?;
    let d = cfg.d_h;
    let mut m = Matrix::zeros(states.len(), d);
    for (j, s) in states.iter().enumerate() {
        m.row_mut(j).copy_from_slice(s);
    }
    Ok(m)
}

/// Forward pass for one token sequence, keeping every intermediate.
pub fn forward_cached(model: &SliceModel, tokens: &[usize], train: bool, rng: &mut Rng) -> Result<ForwardCache> {
    let cfg = &model.config;
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty token sequence".into()));
    }
    if let Some(t) = tokens.iter().find(|&&t| t >= cfg.vocab) {
        return Err(Error::InvalidArgument(format!("token {t} outside vocabulary of {}", cfg.vocab)));
    }
    let n = tokens.len();
    let e = cfg.embed_dim;
    let emb = model.params.get(model.embed);
    let mut x = Matrix::from_fn(n, e, |j, c| emb[tokens[j] * e + c]);
    let dt = vec![1.0; n];
    let mut caches = Vec::with_capacity(cfg.layers.len());
    for (l, lay) in model.layers.iter().enumerate() {
        let d = cfg.layers[l].d_h;
        let omega = build_omega(&x, &dt)?;
        let states = layer_states(model, l, &omega)?;
        let y = Matrix::new(n, d, states.data()[d..].to_vec())?;
        let pre = linear(&y, model.params.get(lay.mix_w), model.params.get(lay.mix_b))?;
        let (mixed, gate_pre) = match lay.gate {
            None => (Matrix::from_fn(n, d, |j, c| pre.get(j, c).tanh()), None),
            Some((gw, gb)) => {
                let g = linear(&y, model.params.get(gw), model.params.get(gb))?;
                let m = Matrix::from_fn(n, d, |j, c| pre.get(j, c) * sigmoid(g.get(j, c)));
                (m, Some(g))
            }
        };
        let mut normed = Matrix::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for j in 0..n {
            inv_std.push(layer_norm(mixed.row(j), cfg.norm_eps, normed.row_mut(j)));
        }
        let (gamma, beta) = (model.params.get(lay.gamma), model.params.get(lay.beta));
        let mut out = Matrix::from_fn(n, d, |j, c| normed.get(j, c) * gamma[c] + beta[c]);
        let mask = if train && cfg.dropout > 0.0 {
            let keep = 1.0 - cfg.dropout;
            let m = Matrix::from_fn(n, d, |_, _| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 });
            out.data_mut().iter_mut().zip(m.data()).for_each(|(o, s)| *o *= s);
            Some(m)
        } else {
            None
        };
        if cfg.residual {
            out = out.add(&x)?;
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("model_forward"));
        }
        caches.push(LayerCache {
            omega,
            states,
            pre,
            gate_pre,
            mixed,
            normed,
            inv_std,
            mask,
        });
        x = out;
    }
    let logits = linear(&x, model.params.get(model.readout_w), model.params.get(model.readout_b))?;
    Ok(ForwardCache {
        tokens: tokens.to_vec(),
        layers: caches,
        final_hidden: x,
        logits,
    })
}

/// Per-position class logits (`n × classes`). Dropout is active only when
/// `train` is set.
pub fn model_forward(model: &SliceModel, tokens: &[usize], train: bool, rng: &mut Rng) -> Result<Matrix> {
    forward_cached(model, tokens, train, rng).map(|c| c.logits)
}

/// Evaluation-mode logits for many sequences in parallel.
pub fn predict_batch(model: &SliceModel, batch: &[Vec<usize>]) -> Result<Vec<Matrix>> {
    batch
        .par_iter()
        .map(|t| model_forward(model, t, false, &mut Rng::new(0)))
        .collect()
}

pub(crate) fn sigmoid_fn(x: f64) -> f64 {
    sigmoid(x)
}

pub(crate) fn first_order_only(model: &SliceModel) -> Result<()> {
    for (l, c) in model.config.layers.iter().enumerate() {
        if c.order != FlowOrder::First {
            return Err(Error::Config(format!(
                "layer {l}: gradients are implemented for first-order flows only"
            )));
        }
        if let Solver::Hybrid { .. } = c.solver {
            return Err(Error::Config(format!("layer {l}: the hybrid solver is evaluation-only")));
        }
    }
    Ok(())
}
