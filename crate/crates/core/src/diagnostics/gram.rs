use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, Rng};
use crate::structured::{init_family, BlockSizes, ChannelFamily, InitPolicy, StructureSpec};

/// Word over channel indices (0-based).
pub type Word = Vec<usize>;

/// `A_I h = A_{i_1} ⋯ A_{i_n} h`, applied right to left.
pub fn word_apply<S: AsRef<[f64]>>(family: &ChannelFamily<S>, word: &[usize], h0: &[f64]) -> Vec<f64> {
    let mut h = h0.to_vec();
    for &i in word.iter().rev() {
        let mut next = vec![0.0; h.len()];
        family.member(i).apply_add(&h, &mut next);
        h = next;
    }
    h
}

/// `(1/d_h) ⟨A_I h₀, A_J h₀⟩`.
pub fn gram<S: AsRef<[f64]>>(i: &[usize], j: &[usize], family: &ChannelFamily<S>, h0: &[f64]) -> Result<f64> {
    if let Some(&bad) = i.iter().chain(j).find(|&&c| c >= family.d_omega()) {
        return Err(Error::InvalidArgument(format!("letter {bad} outside alphabet of {}", family.d_omega())));
    }
    let a = word_apply(family, i, h0);
    let b = word_apply(family, j, h0);
    Ok(dot(&a, &b) / family.d_h() as f64)
}

/// 1-based letters, `-` for the empty word.
pub fn format_word(w: &[usize]) -> String {
    if w.is_empty() {
        "-".into()
    } else {
        w.iter().map(|c| (c + 1).to_string()).collect()
    }
}

pub fn parse_word(s: &str) -> Result<Word> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.chars()
        .map(|ch| match ch.to_digit(10) {
            Some(d) if d >= 1 => Ok(d as usize - 1),
            _ => Err(Error::InvalidArgument(format!("bad word {s:?}: letters are 1..9"))),
        })
        .collect()
}

/// Blocks of size `⌈log₂ d_h⌉` with a smaller final block when needed.
pub fn log_blocks(d_h: usize) -> StructureSpec {
    let b = (d_h.max(2) as f64).log2().ceil() as usize;
    let mut sizes = vec![b; d_h / b];
    if !d_h.is_multiple_of(b) {
        sizes.push(d_h % b);
    }
    StructureSpec::BlockDiagonal(BlockSizes::Explicit(sizes))
}

/// Pairs of words up to length 3 over two letters covering equal, distinct
/// and reordered products.
pub fn default_word_pairs() -> Vec<(Word, Word)> {
    vec![
        (vec![], vec![]),
        (vec![0], vec![0]),
        (vec![0], vec![1]),
        (vec![0, 1], vec![0, 1]),
        (vec![0, 1], vec![1, 0]),
        (vec![0], vec![0, 1]),
        (vec![0, 1, 0], vec![1, 0, 0]),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramProbeConfig {
    pub specs: Vec<StructureSpec>,
    pub dims: Vec<usize>,
    pub pairs: Vec<(Word, Word)>,
    pub trials: usize,
    pub seed: u64,
    pub d_omega: usize,
}

impl Default for GramProbeConfig {
    fn default() -> Self {
        Self {
            specs: vec![StructureSpec::Dense, StructureSpec::Diagonal],
            dims: vec![64, 256, 1024],
            pairs: default_word_pairs(),
            trials: 200,
            seed: 0,
            d_omega: 2,
        }
    }
}

/// Statistics of `|gram − δ_{I,J}|` over independent trials.
#[derive(Debug, Clone, PartialEq)]
pub struct GramRow {
    pub kind: String,
    pub d_h: usize,
    pub i: Word,
    pub j: Word,
    pub trials: usize,
    pub median_dev: f64,
    pub q25_dev: f64,
    pub q75_dev: f64,
    pub mean_gram: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One row per `(kind, d_h, I, J)`. Each trial draws a fresh family in
/// diagnostics scaling and a standard Gaussian `h₀`.
pub fn gram_sweep(cfg: &GramProbeConfig) -> Result<Vec<GramRow>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("gram sweep needs at least one trial".into()));
    }
    let mut rows = Vec::new();
    for (si, spec) in cfg.specs.iter().enumerate() {
        for &d in &cfg.dims {
            // trials × pairs values
            let values = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = Rng::new(cfg.seed).child(((si as u64) << 48) ^ ((d as u64) << 24) ^ t as u64);
                    let fam = init_family(spec, d, cfg.d_omega, InitPolicy::Diagnostics, &mut rng)?;
                    let h0 = rng.normal_vec(d, 1.0);
                    cfg.pairs.iter().map(|(i, j)| gram(i, j, &fam, &h0)).collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            for (p, (i, j)) in cfg.pairs.iter().enumerate() {
                let delta = if i == j { 1.0 } else { 0.0 };
                let grams: Vec<f64> = values.iter().map(|v| v[p]).collect();
                let mut devs: Vec<f64> = grams.iter().map(|g| (g - delta).abs()).collect();
                devs.sort_by(f64::total_cmp);
                rows.push(GramRow {
                    kind: spec.to_string(),
                    d_h: d,
                    i: i.clone(),
                    j: j.clone(),
                    trials: cfg.trials,
                    median_dev: quantile(&devs, 0.5),
                    q25_dev: quantile(&devs, 0.25),
                    q75_dev: quantile(&devs, 0.75),
                    mean_gram: grams.iter().sum::<f64>() / grams.len() as f64,
                });
            }
        }
    }
    Ok(rows)
}

/// Columns: `kind,d_h,I,J,trials,median_dev,q25_dev,q75_dev,mean_gram`.
pub fn write_gram_csv<W: Write>(out: W, rows: &[GramRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("gram CSV: {e}"));
    w.write_record(["kind", "d_h", "I", "J", "trials", "median_dev", "q25_dev", "q75_dev", "mean_gram"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.kind.clone(),
            r.d_h.to_string(),
            format_word(&r.i),
            format_word(&r.j),
            r.trials.to_string(),
            r.median_dev.to_string(),
            r.q25_dev.to_string(),
            r.q75_dev.to_string(),
            r.mean_gram.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("gram CSV: {e}")))
}
