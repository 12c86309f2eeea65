use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy_slice, Matrix, Rng};
use crate::model::{first_order_only, forward_cached, sigmoid_fn, ForwardCache, ParamStore, SliceModel};
use crate::structured::ChannelFamily;

/// One supervised sequence: a label per position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Sequences per gradient shard. Fixed so that the reduction order, and hence
/// the result, does not depend on the number of worker threads.
const SHARD: usize = 8;

fn sequence_rng(seed: u64, idx: usize) -> Rng {
    Rng::new(seed).child(idx as u64)
}

/// Cross-entropy of every position; returns the summed loss and
/// `softmax − onehot`.
pub(crate) fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_dim("cross_entropy labels", logits.rows(), labels.len())?;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (j, &y) in labels.iter().enumerate() {
        if y >= logits.cols() {
            return Err(Error::InvalidArgument(format!("label {y} outside {} classes", logits.cols())));
        }
        let row = logits.row(j);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        let lse = mx + z.ln();
        loss += lse - row[y];
        let g = grad.row_mut(j);
        for (gk, &v) in g.iter_mut().zip(row) {
            *gk = (v - lse).exp();
        }
        g[y] -= 1.0;
    }
    Ok((loss, grad))
}

/// `buf (rows × cols) += alpha · op(a) op(b)`.
fn gemm_acc(buf: &mut [f64], rows: usize, cols: usize, a: &Matrix, ta: bool, b: &Matrix, tb: bool) -> Result<()> {
    let mut m = Matrix::new(rows, cols, buf.to_vec())?;
    Matrix::gemm(1.0, a, ta, b, tb, 1.0, &mut m)?;
    buf.copy_from_slice(m.data());
    Ok(())
}

fn col_sum_add(m: &Matrix, out: &mut [f64]) {
    for j in 0..m.rows() {
        axpy_slice(1.0, m.row(j), out);
    }
}

/// Adjoint of `s_{j+1} = (I + C_j) s_j` with outputs `y_j = s_{j+1}`.
/// Accumulates per-channel parameter gradients and returns `∂L/∂s_0` and
/// `∂L/∂Δω`.
pub(crate) fn slice_backward<S: AsRef<[f64]>>(
    family: &ChannelFamily<S>,
    omega: &Matrix,
    states: &Matrix,
    d_y: &Matrix,
    grads: &mut [Vec<f64>],
) -> Result<(Vec<f64>, Matrix)> {
    let n = omega.rows();
    let d = family.d_h();
    check_dim("slice_backward states", n + 1, states.rows())?;
    check_dim("slice_backward d_y", n, d_y.rows())?;
    let theta = family.lin_coeffs();
    let mut lin = Matrix::zeros(n, theta.cols());
    Matrix::gemm(1.0, omega, false, &theta, false, 0.0, &mut lin)?;
    let mut glin = Matrix::zeros(n, theta.cols());
    let mut d_omega = Matrix::zeros(n, family.d_omega());
    let mut g = vec![0.0; d];
    for j in (0..n).rev() {
        axpy_slice(1.0, d_y.row(j), &mut g);
        let c = family.combine_from_lin(lin.row(j), omega.row(j));
        let s = states.row(j);
        family.lin_grad_add(&c, &g, s, glin.row_mut(j));
        family.lowrank_grad_add(omega.row(j), &g, s, grads, d_omega.row_mut(j));
        let mut next = g.clone();
        c.apply_transpose_add(&g, &mut next);
        g = next;
    }
    let mut d_theta = Matrix::zeros(theta.rows(), theta.cols());
    Matrix::gemm(1.0, omega, true, &glin, false, 0.0, &mut d_theta)?;
    family.scatter_lin_grad(&d_theta, grads);
    Matrix::gemm(1.0, &glin, false, &theta, true, 1.0, &mut d_omega)?;
    Ok((g, d_omega))
}

/// Accumulates `scale · ∂(Σ_j CE_j)/∂θ` for one cached sequence into `grads`.
pub(crate) fn sequence_backward(
    model: &SliceModel,
    cache: &ForwardCache,
    labels: &[usize],
    scale: f64,
    grads: &mut ParamStore,
) -> Result<f64> {
    let cfg = model.config();
    let params = model.params();
    let (loss, mut dlogits) = cross_entropy(&cache.logits, labels)?;
    dlogits.data_mut().iter_mut().for_each(|x| *x *= scale);
    let n = cache.tokens.len();
    let d_out = cfg.output_width();
    gemm_acc(grads.get_mut(model.readout_w), cfg.classes, d_out, &dlogits, true, &cache.final_hidden, false)?;
    col_sum_add(&dlogits, grads.get_mut(model.readout_b));
    let w = Matrix::new(cfg.classes, d_out, params.get(model.readout_w).to_vec())?;
    let mut dx = Matrix::zeros(n, d_out);
    Matrix::gemm(1.0, &dlogits, false, &w, false, 0.0, &mut dx)?;

    for (l, lay) in model.layers.iter().enumerate().rev() {
        let c = &cache.layers[l];
        let d = cfg.layers[l].d_h;
        let residual = cfg.residual.then(|| dx.clone());
        let mut dout = dx;
        if let Some(m) = &c.mask {
            dout.data_mut().iter_mut().zip(m.data()).for_each(|(g, s)| *g *= s);
        }
        let gamma = params.get(lay.gamma);
        {
            let dg = grads.get_mut(lay.gamma);
            for j in 0..n {
                for ((o, &g), &u) in dg.iter_mut().zip(dout.row(j)).zip(c.normed.row(j)) {
                    *o += g * u;
                }
            }
        }
        col_sum_add(&dout, grads.get_mut(lay.beta));
        let mut dz = Matrix::zeros(n, d);
        for j in 0..n {
            let u = c.normed.row(j);
            let du: Vec<f64> = dout.row(j).iter().zip(gamma).map(|(g, w)| g * w).collect();
            let mean_du = du.iter().sum::<f64>() / d as f64;
            let mean_duu = du.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let s = c.inv_std[j];
            for ((o, &a), &b) in dz.row_mut(j).iter_mut().zip(&du).zip(u) {
                *o = s * (a - mean_du - b * mean_duu);
            }
        }
        let y = Matrix::new(n, d, c.states.data()[d..].to_vec())?;
        let (dpre, dgate) = match &c.gate_pre {
            None => {
                let dp = Matrix::from_fn(n, d, |j, k| dz.get(j, k) * (1.0 - c.mixed.get(j, k).powi(2)));
                (dp, None)
            }
            Some(gp) => {
                let dp = Matrix::from_fn(n, d, |j, k| dz.get(j, k) * sigmoid_fn(gp.get(j, k)));
                let dg = Matrix::from_fn(n, d, |j, k| {
                    let sg = sigmoid_fn(gp.get(j, k));
                    dz.get(j, k) * c.pre.get(j, k) * sg * (1.0 - sg)
                });
                (dp, Some(dg))
            }
        };
        gemm_acc(grads.get_mut(lay.mix_w), d, d, &dpre, true, &y, false)?;
        col_sum_add(&dpre, grads.get_mut(lay.mix_b));
        let mut dy = Matrix::zeros(n, d);
        let wm = Matrix::new(d, d, params.get(lay.mix_w).to_vec())?;
        Matrix::gemm(1.0, &dpre, false, &wm, false, 0.0, &mut dy)?;
        if let (Some(dg), Some((gw, gb))) = (&dgate, lay.gate) {
            gemm_acc(grads.get_mut(gw), d, d, dg, true, &y, false)?;
            col_sum_add(dg, grads.get_mut(gb));
            let vm = Matrix::new(d, d, params.get(gw).to_vec())?;
            Matrix::gemm(1.0, dg, false, &vm, false, 1.0, &mut dy)?;
        }

        let family = model.family(l);
        let mut fam_grads: Vec<Vec<f64>> = lay.offsets.windows(2).map(|w| vec![0.0; w[1] - w[0]]).collect();
        let (dh0, d_omega) = slice_backward(&family, &c.omega, &c.states, &dy, &mut fam_grads)?;
        let ga = grads.get_mut(lay.a);
        for (w, g) in lay.offsets.windows(2).zip(&fam_grads) {
            axpy_slice(1.0, g, &mut ga[w[0]..w[1]]);
        }
        axpy_slice(1.0, &dh0, grads.get_mut(lay.h0));

        let w_in = cfg.input_width(l);
        let mut dx_in = Matrix::from_fn(n, w_in, |j, k| d_omega.get(j, k + 1));
        if let Some(r) = residual {
            dx_in = dx_in.add(&r)?;
        }
        dx = dx_in;
    }
    let e = cfg.embed_dim;
    let ge = grads.get_mut(model.embed);
    for (j, &t) in cache.tokens.iter().enumerate() {
        axpy_slice(1.0, dx.row(j), &mut ge[t * e..(t + 1) * e]);
    }
    Ok(loss)
}

fn total_positions(batch: &[Example]) -> Result<usize> {
    let total: usize = batch.iter().map(|e| e.tokens.len()).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(total)
}

/// Mean per-position cross-entropy over a batch and its exact gradient.
/// Dropout masks are drawn from `seed` per sequence, so the same seed gives
/// the same masks in [`batch_loss`].
pub fn backward(model: &SliceModel, batch: &[Example], train: bool, seed: u64) -> Result<(f64, ParamStore)> {
    first_order_only(model)?;
    let total = total_positions(batch)?;
    let scale = 1.0 / total as f64;
    let shards = batch
        .par_chunks(SHARD)
        .enumerate()
        .map(|(s, chunk)| {
            let mut grads = model.params().zeros_like();
            let mut loss = 0.0;
            for (k, ex) in chunk.iter().enumerate() {
                let mut rng = sequence_rng(seed, s * SHARD + k);
                let cache = forward_cached(model, &ex.tokens, train, &mut rng)?;
                loss += sequence_backward(model, &cache, &ex.labels, scale, &mut grads)?;
            }
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = shards.into_iter();
    let (mut loss, mut grads) = iter.next().expect("nonempty batch");
    for (l, g) in iter {
        loss += l;
        grads.axpy(1.0, &g)?;
    }
    Ok((loss * scale, grads))
}

/// Mean per-position cross-entropy without gradients.
pub fn batch_loss(model: &SliceModel, batch: &[Example], train: bool, seed: u64) -> Result<f64> {
    let total = total_positions(batch)?;
    let losses = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = sequence_rng(seed, i);
            let cache = forward_cached(model, &ex.tokens, train, &mut rng)?;
            cross_entropy(&cache.logits, &ex.labels).map(|(l, _)| l)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / total as f64)
}

/// Analytic-versus-finite-difference agreement for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    /// `‖g_analytic − g_fd‖₂ / max(‖g_analytic‖₂, ‖g_fd‖₂)`.
    pub rel_err: f64,
    pub norm: f64,
}

/// Central finite differences with step `eps` on every parameter.
pub fn gradient_check(model: &SliceModel, batch: &[Example], train: bool, seed: u64, eps: f64) -> Result<Vec<GroupCheck>> {
    let (_, analytic) = backward(model, batch, train, seed)?;
    let mut probe = model.clone();
    let mut out = Vec::new();
    for g in 0..model.params().len() {
        let len = model.params().get(g).len();
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut f2 = 0.0;
        for k in 0..len {
            let orig = probe.params().get(g)[k];
            probe.params_mut().get_mut(g)[k] = orig + eps;
            let lp = batch_loss(&probe, batch, train, seed)?;
            probe.params_mut().get_mut(g)[k] = orig - eps;
            let lm = batch_loss(&probe, batch, train, seed)?;
            probe.params_mut().get_mut(g)[k] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let an = analytic.get(g)[k];
            diff2 += (an - fd).powi(2);
            a2 += an * an;
            f2 += fd * fd;
        }
        let denom = a2.sqrt().max(f2.sqrt());
        out.push(GroupCheck {
            name: model.params().name(g).to_string(),
            rel_err: if denom > 0.0 { diff2.sqrt() / denom } else { 0.0 },
            norm: a2.sqrt(),
        });
    }
    Ok(out)
}
