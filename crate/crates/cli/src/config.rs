//! Run configuration in a flat `key = value` text format with `[task]`,
//! `[model]` and `[train]` sections. `#` starts a comment.
//!
//! ```text
//! [task]
//! name = a5
//! train_min = 3
//! train_max = 8
//!
//! [model]
//! structure = bd:8
//! d_h = 64
//! ```
//!
//! Unset keys take the defaults of [`RunConfig::for_task`]. Serialization
//! always writes every key, so a parsed file round-trips exactly.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use slicekit::flows::FlowOrder;
use slicekit::model::{order_name, parse_order, BlockStyle, SliceModelConfig, Solver};
use slicekit::structured::{BlockSizes, StructureSpec};
use slicekit::tasks::Task;
use slicekit::train::{OptimConfig, TrainConfig};

use crate::error::{CliError, CliResult};

pub const SECTIONS: [&str; 3] = ["task", "model", "train"];

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSection {
    pub task: Task,
    pub train_min: usize,
    pub train_max: usize,
    /// Lengths evaluated separately; each one is a bucket in the summary.
    pub eval_lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub structure: StructureSpec,
    pub d_h: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub block: BlockStyle,
    pub dropout: f64,
    pub solver: Solver,
    pub order: FlowOrder,
    pub residual: bool,
    pub init_scale: f64,
    pub embed_std: f64,
    pub norm_eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub short_fraction: f64,
    pub target_acc: Option<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

/// Evaluation lengths used when a config does not list any.
pub fn default_eval_lengths(task: Task, train_min: usize, train_max: usize) -> Vec<usize> {
    let wanted: Vec<usize> = match task {
        Task::A5 => (train_min..=train_max).collect(),
        _ => vec![train_max, 64, 128, 256],
    };
    let mut out: Vec<usize> = wanted
        .into_iter()
        .filter_map(|l| {
            let next = if l >= 256 { l - 1 } else { l + 1 };
            [l, next].into_iter().find(|&c| task.valid_length(c))
        })
        .collect();
    out.dedup();
    out
}

/// Hidden dimension whose transition matrices have about `budget` nonzeros.
pub fn budget_hidden_dim(spec: &StructureSpec, budget: usize) -> usize {
    let n = budget as f64;
    let d = match spec {
        StructureSpec::Dense => n.sqrt(),
        StructureSpec::Diagonal | StructureSpec::WalshHadamard => n,
        StructureSpec::Dplr { rank } => n / (1 + 2 * rank) as f64,
        StructureSpec::BlockDiagonal(BlockSizes::Uniform(b)) => n / *b as f64,
        StructureSpec::BlockDiagonal(BlockSizes::DiagonalDense(b)) => n + *b as f64 - (b * b) as f64,
        StructureSpec::BlockDiagonal(BlockSizes::Explicit(s)) => s.iter().sum::<usize>() as f64,
        StructureSpec::Sparse { epsilon } => n.powf(1.0 / (1.0 + epsilon)),
    };
    (d.round() as usize).max(1)
}

impl RunConfig {
    /// Desk-scale defaults: batch 64, 10k steps, d_h 64.
    pub fn for_task(task: Task) -> Self {
        let (train_min, train_max) = match task {
            Task::A5 => (3, 8),
            _ => (3, 40),
        };
        let optim = OptimConfig::default();
        let tc = TrainConfig::default();
        Self {
            task: TaskSection {
                task,
                train_min,
                train_max,
                eval_lengths: default_eval_lengths(task, train_min, train_max),
            },
            model: ModelSection {
                structure: StructureSpec::BlockDiagonal(BlockSizes::Uniform(8)),
                d_h: 64,
                embed_dim: 64,
                layers: if task == Task::A5 { 1 } else { 2 },
                block: BlockStyle::TanhMix,
                dropout: 0.0,
                solver: Solver::Sequential,
                order: FlowOrder::First,
                residual: false,
                init_scale: 1.0,
                embed_std: 1.0,
                norm_eps: 1e-6,
            },
            train: TrainSection {
                steps: optim.steps,
                batch_size: tc.batch_size,
                peak_lr: optim.peak_lr,
                min_lr: optim.min_lr,
                warmup_steps: optim.warmup_steps,
                weight_decay: optim.weight_decay,
                beta1: optim.beta1,
                beta2: optim.beta2,
                eps: optim.eps,
                clip_norm: optim.clip_norm,
                seed: tc.seed,
                eval_every: tc.eval_every,
                eval_samples: tc.eval_samples,
                short_fraction: tc.short_fraction,
                target_acc: tc.target_acc,
                out_dir: PathBuf::from("runs").join(task.to_string()),
            },
        }
    }

    /// Batch 256, 100k steps, and hidden dimensions matched to 1024 (A5) or
    /// 512 (regular tasks) nonzeros per transition matrix.
    pub fn apply_paper_scale(&mut self) {
        let t = &mut self.train;
        t.batch_size = 256;
        t.steps = 100_000;
        t.warmup_steps = 10_000;
        let budget = if self.task.task == Task::A5 { 1024 } else { 512 };
        self.model.d_h = budget_hidden_dim(&self.model.structure, budget);
        if self.task.task == Task::A5 {
            self.task.train_max = 20;
        } else {
            t.peak_lr = 2e-3;
            t.min_lr = 1e-5;
            self.model.dropout = 0.01;
            self.model.layers = 2;
            self.task.train_max = 40;
        }
        self.task.eval_lengths = match self.task.task {
            Task::A5 => default_eval_lengths(Task::A5, self.task.train_min, 20),
            t => default_eval_lengths(t, 40, 40),
        };
    }

    pub fn model_config(&self) -> CliResult<SliceModelConfig> {
        let m = &self.model;
        let task = self.task.task;
        let mut c = SliceModelConfig::stacked(
            task.vocab(),
            m.embed_dim,
            task.classes(),
            m.layers,
            m.structure.clone(),
            m.d_h,
            m.solver,
        );
        for l in &mut c.layers {
            l.order = m.order;
        }
        c.block = m.block;
        c.dropout = m.dropout;
        c.residual = m.residual;
        c.init_scale = m.init_scale;
        c.embed_std = m.embed_std;
        c.norm_eps = m.norm_eps;
        c.validate()?;
        Ok(c)
    }

    pub fn optim_config(&self) -> OptimConfig {
        let t = &self.train;
        OptimConfig {
            steps: t.steps,
            peak_lr: t.peak_lr,
            min_lr: t.min_lr,
            warmup_steps: t.warmup_steps,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            clip_norm: t.clip_norm,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            optim: self.optim_config(),
            batch_size: t.batch_size,
            seed: t.seed,
            eval_every: t.eval_every,
            eval_samples: t.eval_samples,
            short_fraction: t.short_fraction,
            target_acc: t.target_acc,
        }
    }

    /// Checks everything that can be checked before a run starts.
    pub fn validate(&self) -> CliResult<()> {
        self.model_config()?;
        self.optim_config().validate()?;
        let ts = &self.task;
        slicekit::tasks::LengthSampler::new(ts.task, ts.train_min, ts.train_max)?;
        if ts.eval_lengths.is_empty() {
            return Err(CliError::Config("task.eval_lengths must list at least one length".into()));
        }
        if let Some(&bad) = ts.eval_lengths.iter().find(|&&l| !ts.task.valid_length(l)) {
            return Err(CliError::Config(format!("task.eval_lengths: {bad} is not a valid {} length", ts.task)));
        }
        let t = &self.train;
        if t.batch_size == 0 || t.eval_every == 0 || t.eval_samples == 0 {
            return Err(CliError::Config("train.batch_size, eval_every and eval_samples must be positive".into()));
        }
        if !(0.0..1.0).contains(&t.short_fraction) {
            return Err(CliError::Config("train.short_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Parses a config file. `[task] name` is required.
    pub fn parse(text: &str) -> CliResult<Self> {
        let entries = parse_entries(text)?;
        let name = entries
            .iter()
            .find(|e| e.section == "task" && e.key == "name")
            .ok_or_else(|| CliError::Config("missing required field task.name".into()))?;
        let task: Task = name.value.parse().map_err(|e| field_error("task.name", e))?;
        let mut cfg = Self::for_task(task);
        let mut explicit_eval = false;
        let mut range_changed = false;
        for e in &entries {
            if e.section == "task" && e.key == "eval_lengths" {
                explicit_eval = true;
            }
            if e.section == "task" && (e.key == "train_min" || e.key == "train_max") {
                range_changed = true;
            }
            cfg.set(&e.section, &e.key, &e.value)?;
        }
        if range_changed && !explicit_eval {
            cfg.task.eval_lengths = default_eval_lengths(task, cfg.task.train_min, cfg.task.train_max);
        }
        Ok(cfg)
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> CliResult<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {spec:?} is not section.key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| CliError::Config(format!("override {spec:?} is not section.key=value")))?;
        self.set(section, key, value.trim())
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> CliResult<()> {
        let field = format!("{section}.{key}");
        let f = field.as_str();
        match (section, key) {
            ("task", "name") => {
                let task: Task = parse_field(f, value)?;
                if task != self.task.task {
                    let keep = (self.model.clone(), self.train.clone());
                    *self = Self::for_task(task);
                    (self.model, self.train) = keep;
                }
            }
            ("task", "train_min") => self.task.train_min = parse_field(f, value)?,
            ("task", "train_max") => self.task.train_max = parse_field(f, value)?,
            ("task", "eval_lengths") => self.task.eval_lengths = parse_list(f, value)?,
            ("model", "structure") => self.model.structure = parse_field(f, value)?,
            ("model", "d_h") => self.model.d_h = parse_field(f, value)?,
            ("model", "embed_dim") => self.model.embed_dim = parse_field(f, value)?,
            ("model", "layers") => self.model.layers = parse_field(f, value)?,
            ("model", "block") => self.model.block = parse_field(f, value)?,
            ("model", "dropout") => self.model.dropout = parse_field(f, value)?,
            ("model", "solver") => self.model.solver = parse_field(f, value)?,
            ("model", "order") => self.model.order = parse_order(value).map_err(|e| field_error(f, e))?,
            ("model", "residual") => self.model.residual = parse_field(f, value)?,
            ("model", "init_scale") => self.model.init_scale = parse_field(f, value)?,
            ("model", "embed_std") => self.model.embed_std = parse_field(f, value)?,
            ("model", "norm_eps") => self.model.norm_eps = parse_field(f, value)?,
            ("train", "steps") => self.train.steps = parse_field(f, value)?,
            ("train", "batch_size") => self.train.batch_size = parse_field(f, value)?,
            ("train", "peak_lr") => self.train.peak_lr = parse_field(f, value)?,
            ("train", "min_lr") => self.train.min_lr = parse_field(f, value)?,
            ("train", "warmup_steps") => self.train.warmup_steps = parse_field(f, value)?,
            ("train", "weight_decay") => self.train.weight_decay = parse_field(f, value)?,
            ("train", "beta1") => self.train.beta1 = parse_field(f, value)?,
            ("train", "beta2") => self.train.beta2 = parse_field(f, value)?,
            ("train", "eps") => self.train.eps = parse_field(f, value)?,
            ("train", "clip_norm") => self.train.clip_norm = parse_optional(f, value)?,
            ("train", "seed") => self.train.seed = parse_field(f, value)?,
            ("train", "eval_every") => self.train.eval_every = parse_field(f, value)?,
            ("train", "eval_samples") => self.train.eval_samples = parse_field(f, value)?,
            ("train", "short_fraction") => self.train.short_fraction = parse_field(f, value)?,
            ("train", "target_acc") => self.train.target_acc = parse_optional(f, value)?,
            ("train", "out_dir") => self.train.out_dir = PathBuf::from(value),
            _ if !SECTIONS.contains(&section) => {
                return Err(CliError::Config(format!("unknown section [{section}]")));
            }
            _ => return Err(CliError::Config(format!("unknown field {field}"))),
        }
        Ok(())
    }

    /// Canonical text form listing every key.
    pub fn serialize(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let (t, m, r) = (&self.task, &self.model, &self.train);
        let mut s = String::new();
        let _ = writeln!(s, "[task]");
        let _ = writeln!(s, "name = {}", t.task);
        let _ = writeln!(s, "train_min = {}", t.train_min);
        let _ = writeln!(s, "train_max = {}", t.train_max);
        let _ = writeln!(s, "eval_lengths = {}", list(&t.eval_lengths));
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "structure = {}", m.structure);
        let _ = writeln!(s, "d_h = {}", m.d_h);
        let _ = writeln!(s, "embed_dim = {}", m.embed_dim);
        let _ = writeln!(s, "layers = {}", m.layers);
        let _ = writeln!(s, "block = {}", m.block);
        let _ = writeln!(s, "dropout = {}", m.dropout);
        let _ = writeln!(s, "solver = {}", m.solver);
        let _ = writeln!(s, "order = {}", order_name(m.order));
        let _ = writeln!(s, "residual = {}", m.residual);
        let _ = writeln!(s, "init_scale = {}", m.init_scale);
        let _ = writeln!(s, "embed_std = {}", m.embed_std);
        let _ = writeln!(s, "norm_eps = {}", m.norm_eps);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "steps = {}", r.steps);
        let _ = writeln!(s, "batch_size = {}", r.batch_size);
        let _ = writeln!(s, "peak_lr = {}", r.peak_lr);
        let _ = writeln!(s, "min_lr = {}", r.min_lr);
        let _ = writeln!(s, "warmup_steps = {}", r.warmup_steps);
        let _ = writeln!(s, "weight_decay = {}", r.weight_decay);
        let _ = writeln!(s, "beta1 = {}", r.beta1);
        let _ = writeln!(s, "beta2 = {}", r.beta2);
        let _ = writeln!(s, "eps = {}", r.eps);
        let _ = writeln!(s, "clip_norm = {}", opt(r.clip_norm));
        let _ = writeln!(s, "seed = {}", r.seed);
        let _ = writeln!(s, "eval_every = {}", r.eval_every);
        let _ = writeln!(s, "eval_samples = {}", r.eval_samples);
        let _ = writeln!(s, "short_fraction = {}", r.short_fraction);
        let _ = writeln!(s, "target_acc = {}", opt(r.target_acc));
        let _ = writeln!(s, "out_dir = {}", r.out_dir.display());
        s
    }
}

#[derive(Debug)]
struct Entry {
    section: String,
    key: String,
    value: String,
}

fn parse_entries(text: &str) -> CliResult<Vec<Entry>> {
    let mut section: Option<String> = None;
    let mut out: Vec<Entry> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| CliError::Config(format!("line {}: {msg}", n + 1));
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| at(format!("unterminated section header {line:?}")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(at(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
        let section = section
            .clone()
            .ok_or_else(|| at(format!("key {:?} appears before any section", key.trim())))?;
        let key = key.trim().to_string();
        if out.iter().any(|e| e.section == section && e.key == key) {
            return Err(at(format!("duplicate field {section}.{key}")));
        }
        out.push(Entry {
            section,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn field_error(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

fn parse_field<T: FromStr>(field: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| field_error(field, format!("{value:?}: {e}")))
}

fn parse_optional(field: &str, value: &str) -> CliResult<Option<f64>> {
    match value.trim() {
        "none" | "" => Ok(None),
        v => parse_field(field, v).map(Some),
    }
}

fn parse_list(field: &str, value: &str) -> CliResult<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_field(field, s))
        .collect()
}
