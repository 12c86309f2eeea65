use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use slicekit::diagnostics::{
    bent_path, closure_profile, gram_sweep, log_blocks, logode_order_probe, scan_equivalence, write_gram_csv,
    write_order_csv, GramProbeConfig, GramRow, OrderTable,
};
use slicekit::linalg::Rng;
use slicekit::model::SliceModel;
use slicekit::structured::{init_family, InitPolicy, StructureSpec};
use slicekit::tasks::{dump_instances, LengthSampler, Task};
use slicekit::train::{
    evaluate_lengths, train, validation_sets, write_metrics_csv, AdamW, EvalRecord, LengthAccuracy, Metric,
};

use crate::checkpoint::Checkpoint;
use crate::config::{budget_hidden_dim, RunConfig};
use crate::error::{io_at, CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.txt";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_at(dir))
}

fn create_file(path: &Path) -> CliResult<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_at(path))?))
}

/// Model weights are drawn from this stream; training uses others.
fn model_rng(seed: u64) -> Rng {
    Rng::new(seed).child(0)
}

pub fn build_model(cfg: &RunConfig) -> CliResult<SliceModel> {
    Ok(SliceModel::new(cfg.model_config()?, &mut model_rng(cfg.train.seed))?)
}

/// Best accuracy seen at one evaluation length.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSummary {
    pub length: usize,
    pub best_acc_all: f64,
    pub best_acc_final: f64,
    /// Best value of the task's primary metric and the first step reaching it.
    pub best_primary: f64,
    pub best_step: usize,
}

pub fn summarize(records: &[EvalRecord], metric: Metric) -> Vec<BucketSummary> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    (0..first.accuracy.len())
        .map(|k| {
            let mut s = BucketSummary {
                length: first.accuracy[k].length,
                best_acc_all: 0.0,
                best_acc_final: 0.0,
                best_primary: f64::NEG_INFINITY,
                best_step: 0,
            };
            for r in records {
                let a = r.accuracy[k];
                s.best_acc_all = s.best_acc_all.max(a.acc_all);
                s.best_acc_final = s.best_acc_final.max(a.acc_final);
                if a.get(metric) > s.best_primary {
                    s.best_primary = a.get(metric);
                    s.best_step = r.step;
                }
            }
            s
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[BucketSummary]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["length", "best_acc_all", "best_acc_final", "best_primary", "best_step"])?;
    for r in rows {
        w.write_record([
            r.length.to_string(),
            r.best_acc_all.to_string(),
            r.best_acc_final.to_string(),
            r.best_primary.to_string(),
            r.best_step.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<EvalRecord>,
    pub summary: Vec<BucketSummary>,
    pub steps_done: usize,
    pub model: SliceModel,
}

/// Trains one model and writes `config.txt`, `metrics.csv`, `summary.csv`
/// and `checkpoint.bin` under the configured output directory.
pub fn run_train(cfg: &RunConfig, mut progress: impl FnMut(&EvalRecord)) -> CliResult<TrainOutcome> {
    cfg.validate()?;
    let dir = cfg.train.out_dir.clone();
    create_dir(&dir)?;
    let text = cfg.serialize();
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, &text).map_err(io_at(&cfg_path))?;

    let task = cfg.task.task;
    let mut model = build_model(cfg)?;
    let sampler = LengthSampler::new(task, cfg.task.train_min, cfg.task.train_max)?;
    let (records, optimizer, steps_done) = if cfg.train.steps == 0 {
        (Vec::new(), AdamW::new(model.params()), 0)
    } else {
        let log = train(&mut model, task, &sampler, &cfg.task.eval_lengths, &cfg.train_config(), &mut progress)?;
        (log.records, log.optimizer, log.steps_done)
    };

    write_metrics_csv(create_file(&dir.join(METRICS_FILE))?, &cfg.task.eval_lengths, &records)?;
    let summary = summarize(&records, task.primary_metric());
    write_summary_csv(create_file(&dir.join(SUMMARY_FILE))?, &summary)?;
    Checkpoint::capture(text, steps_done as u64, &model, &optimizer).save(&dir.join(CHECKPOINT_FILE))?;
    Ok(TrainOutcome {
        out_dir: dir,
        records,
        summary,
        steps_done,
        model,
    })
}

/// Rebuilds a model from a checkpoint.
pub fn load_model(path: &Path) -> CliResult<(RunConfig, SliceModel)> {
    let ck = Checkpoint::load(path)?;
    let cfg = RunConfig::parse(&ck.config)?;
    let mut model = build_model(&cfg)?;
    ck.restore(&mut model)?;
    Ok((cfg, model))
}

/// Accuracy of a checkpointed model per length, written to `eval.csv` in `out_dir`.
pub fn run_eval(
    checkpoint: &Path,
    lengths: Option<&[usize]>,
    samples: usize,
    seed: u64,
    out_dir: &Path,
) -> CliResult<Vec<LengthAccuracy>> {
    let (cfg, model) = load_model(checkpoint)?;
    let task = cfg.task.task;
    let lengths = lengths.unwrap_or(&cfg.task.eval_lengths);
    let sets = validation_sets(task, lengths, samples, seed)?;
    let acc = evaluate_lengths(&model, &sets)?;
    create_dir(out_dir)?;
    let mut w = csv::Writer::from_writer(create_file(&out_dir.join("eval.csv"))?);
    w.write_record(["length", "acc_all", "acc_final"])?;
    for a in &acc {
        w.write_record([a.length.to_string(), a.acc_all.to_string(), a.acc_final.to_string()])?;
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(acc)
}

/// Writes `count` instances with lengths drawn from `[min, max]` to
/// `<out_dir>/<task>_<min>-<max>_seed<seed>.tsv`.
pub fn dump_dataset(task: Task, count: usize, min: usize, max: usize, seed: u64, out_dir: &Path) -> CliResult<PathBuf> {
    let sampler = LengthSampler::new(task, min, max)?;
    let mut rng = Rng::new(seed);
    let instances = (0..count)
        .map(|_| {
            let len = sampler.draw(&mut rng);
            task.generate(&mut rng, len)
        })
        .collect::<slicekit::Result<Vec<_>>>()?;
    create_dir(out_dir)?;
    let path = out_dir.join(format!("{task}_{min}-{max}_seed{seed}.tsv"));
    let mut w = create_file(&path)?;
    dump_instances(&mut w, &instances).map_err(io_at(&path))?;
    w.flush().map_err(io_at(&path))?;
    Ok(path)
}

/// Minimal number of layers reaching the target at one length, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kind: String,
    pub d_h: usize,
    pub length: usize,
    pub layers: Option<usize>,
    pub best_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kinds: Vec<StructureSpec>,
    pub lengths: Vec<usize>,
    pub max_layers: usize,
    /// Nonzeros per transition matrix used to pick each kind's `d_h`; the
    /// base config's `d_h` is used when absent.
    pub budget: Option<usize>,
    pub target: f64,
}

/// For each kind and length, trains models with `1..=max_layers` layers on
/// lengths up to that length and records the first depth whose validation
/// accuracy at that length reaches the target. Writes `layer_sweep.csv`.
pub fn layer_sweep(
    base: &RunConfig,
    sweep: &SweepConfig,
    out_dir: &Path,
    mut on_row: impl FnMut(&SweepRow),
) -> CliResult<Vec<SweepRow>> {
    create_dir(out_dir)?;
    let task = base.task.task;
    let metric = task.primary_metric();
    let mut rows = Vec::new();
    for kind in &sweep.kinds {
        let d_h = sweep.budget.map_or(base.model.d_h, |b| budget_hidden_dim(kind, b));
        for &length in &sweep.lengths {
            let mut row = SweepRow {
                kind: kind.to_string(),
                d_h,
                length,
                layers: None,
                best_acc: 0.0,
            };
            for layers in 1..=sweep.max_layers {
                let mut cfg = base.clone();
                cfg.model.structure = kind.clone();
                cfg.model.d_h = d_h;
                cfg.model.layers = layers;
                cfg.task.train_min = base.task.train_min.min(length);
                cfg.task.train_max = length;
                cfg.task.eval_lengths = vec![length];
                cfg.train.target_acc = Some(sweep.target);
                cfg.train.out_dir = out_dir.join(format!("{}_L{length}_layers{layers}", kind.to_string().replace([':', ','], "-")));
                let outcome = run_train(&cfg, |_| {})?;
                let best = outcome.summary.first().map_or(0.0, |s| s.best_primary);
                row.best_acc = row.best_acc.max(best);
                if outcome.records.iter().any(|r| r.min_acc(metric) >= sweep.target) {
                    row.layers = Some(layers);
                    break;
                }
            }
            on_row(&row);
            rows.push(row);
        }
    }
    write_sweep_csv(create_file(&out_dir.join("layer_sweep.csv"))?, &rows)?;
    Ok(rows)
}

/// Columns: `kind,d_h,length,layers,best_acc`; `layers` is `fail` when no
/// depth reached the target.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "d_h", "length", "layers", "best_acc"])?;
    for r in rows {
        w.write_record([
            r.kind.clone(),
            r.d_h.to_string(),
            r.length.to_string(),
            r.layers.map_or_else(|| "fail".to_string(), |l| l.to_string()),
            r.best_acc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Gram,
    LogodeOrder,
    ScanEquivalence,
    Profile,
}

impl std::str::FromStr for ProbeKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "gram" => Ok(ProbeKind::Gram),
            "logode-order" => Ok(ProbeKind::LogodeOrder),
            "scan-equivalence" => Ok(ProbeKind::ScanEquivalence),
            "profile" => Ok(ProbeKind::Profile),
            other => Err(CliError::Config(format!(
                "unknown probe {other:?}; expected gram, logode-order, scan-equivalence or profile"
            ))),
        }
    }
}

pub const ALL_KINDS: [&str; 6] = ["dense", "diagonal", "dplr:2", "bd:4", "sparse:0.5", "wh"];

pub fn all_kinds() -> Vec<StructureSpec> {
    ALL_KINDS.iter().map(|k| k.parse().expect("valid kind")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    pub seed: u64,
    /// Gram trials per dimension.
    pub trials: usize,
    /// Gram dimensions.
    pub dims: Vec<usize>,
    /// Seeds per configuration for scan equivalence.
    pub seeds: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 200,
            dims: vec![64, 256, 1024],
            seeds: 20,
        }
    }
}

/// CSV files written by a probe and the thresholds that failed.
#[derive(Debug, Clone, Default)]
pub struct ProbeReport {
    pub files: Vec<PathBuf>,
    pub checks: Vec<(String, bool)>,
}

impl ProbeReport {
    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push((name.into(), ok));
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect()
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

pub fn run_probe(kind: ProbeKind, opts: &ProbeOptions, out_dir: &Path) -> CliResult<ProbeReport> {
    create_dir(out_dir)?;
    match kind {
        ProbeKind::Gram => gram_probe(opts, out_dir),
        ProbeKind::LogodeOrder => order_probe(opts, out_dir),
        ProbeKind::ScanEquivalence => equivalence_probe(opts, out_dir),
        ProbeKind::Profile => profile_probe(opts, out_dir),
    }
}

fn find<'a>(rows: &'a [GramRow], kind: &str, d_h: usize, i: &[usize], j: &[usize]) -> Option<&'a GramRow> {
    rows.iter().find(|r| r.kind == kind && r.d_h == d_h && r.i == i && r.j == j)
}

fn gram_probe(opts: &ProbeOptions, out_dir: &Path) -> CliResult<ProbeReport> {
    let cfg = GramProbeConfig {
        specs: ["dense", "diagonal", "sparse:0.5", "wh", "bd:4"]
            .iter()
            .map(|k| k.parse().expect("valid kind"))
            .collect(),
        dims: opts.dims.clone(),
        trials: opts.trials,
        seed: opts.seed,
        ..Default::default()
    };
    let mut rows = gram_sweep(&cfg)?;
    // blocks of ⌈log₂ d_h⌉ depend on the dimension, so each one is its own sweep
    for &d in &opts.dims {
        let one = GramProbeConfig {
            specs: vec![log_blocks(d)],
            dims: vec![d],
            ..cfg.clone()
        };
        rows.extend(gram_sweep(&one)?.into_iter().map(|r| GramRow {
            kind: "bd:log".into(),
            ..r
        }));
    }
    let path = out_dir.join("gram.csv");
    write_gram_csv(create_file(&path)?, &rows)?;

    let mut report = ProbeReport {
        files: vec![path],
        ..Default::default()
    };
    let mut dims = opts.dims.clone();
    dims.sort_unstable();
    for &d in &dims {
        if dims.contains(&(4 * d)) {
            let dev = |n| find(&rows, "dense", n, &[0], &[1]).map_or(f64::NAN, |r| r.median_dev);
            let ratio = dev(d) / dev(4 * d);
            report.check(format!("dense deviation shrinks {ratio:.2}x from d_h={d} to {} (need >= 1.4)", 4 * d), ratio >= 1.4);
        }
    }
    if let Some(&top) = dims.last() {
        if let Some(r) = find(&rows, "diagonal", top, &[0, 1], &[1, 0]) {
            report.check(
                format!("diagonal gram((1,2),(2,1)) = {:.3} at d_h={top} (need >= 0.8)", r.mean_gram),
                r.mean_gram >= 0.8,
            );
        }
        for (i, j) in &cfg.pairs {
            if let (Some(dn), Some(sp)) = (find(&rows, "dense", top, i, j), find(&rows, "sparse:0.5", top, i, j)) {
                let (a, b) = (dn.median_dev, sp.median_dev);
                report.check(
                    format!("sparse tracks dense within 2x at d_h={top}, I={i:?} J={j:?} ({b:.4} vs {a:.4})"),
                    b <= 2.0 * a && a <= 2.0 * b,
                );
            }
        }
    }
    Ok(report)
}

/// Path, family and initial state of the order probe.
pub fn order_probe_setup(spec: &StructureSpec, seed: u64) -> CliResult<(slicekit::structured::ChannelFamily, slicekit::linalg::Matrix, Vec<f64>)> {
    let mut rng = Rng::new(seed).child(21);
    let fam = init_family(spec, 4, 2, InitPolicy::Diagnostics, &mut rng)?;
    let h0 = rng.normal_vec(4, 1.0);
    Ok((fam, bent_path(12, 0.1, 1.0), h0))
}

pub const ORDER_WINDOWS: [usize; 6] = [8, 16, 32, 64, 128, 256];

pub fn order_tables(seed: u64) -> CliResult<(OrderTable, OrderTable)> {
    let (fam, path, h0) = order_probe_setup(&StructureSpec::Dense, seed)?;
    let dense = logode_order_probe(&fam, &path, &h0, &[1, 2], &ORDER_WINDOWS)?;
    let (fam, path, h0) = order_probe_setup(&StructureSpec::Diagonal, seed)?;
    let diag = logode_order_probe(&fam, &path, &h0, &[1, 2], &ORDER_WINDOWS)?;
    Ok((dense, diag))
}

fn order_probe(opts: &ProbeOptions, out_dir: &Path) -> CliResult<ProbeReport> {
    let (dense, diag) = order_tables(opts.seed)?;
    let p1 = out_dir.join("logode_order.csv");
    write_order_csv(create_file(&p1)?, &dense)?;
    let p2 = out_dir.join("logode_order_diagonal.csv");
    write_order_csv(create_file(&p2)?, &diag)?;
    let mut report = ProbeReport {
        files: vec![p1, p2],
        ..Default::default()
    };
    for (depth, lo, hi) in [(1, 0.7, 1.3), (2, 1.7, 2.3)] {
        let s = dense.slope(depth).unwrap_or(f64::NAN);
        report.check(format!("depth-{depth} slope {s:.3} in [{lo}, {hi}]"), (lo..=hi).contains(&s));
    }
    let gap = ORDER_WINDOWS
        .iter()
        .map(|&w| (diag.error(1, w).unwrap_or(f64::NAN) - diag.error(2, w).unwrap_or(f64::NAN)).abs())
        .fold(0.0, f64::max);
    report.check(format!("diagonal depth-2 matches depth-1 (max gap {gap:.1e}, need <= 1e-12)"), gap <= 1e-12);
    Ok(report)
}

/// `(n, d_h)` sizes of the scan-equivalence probe.
pub const EQUIVALENCE_SIZES: [(usize, usize); 3] = [(17, 8), (256, 32), (1024, 64)];

fn equivalence_probe(opts: &ProbeOptions, out_dir: &Path) -> CliResult<ProbeReport> {
    let path = out_dir.join("scan_equivalence.csv");
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    w.write_record(["kind", "seed", "n", "d_h", "max_rel_err"])?;
    let mut report = ProbeReport::default();
    for spec in all_kinds() {
        let mut worst: f64 = 0.0;
        for &(n, d_h) in &EQUIVALENCE_SIZES {
            for s in 0..opts.seeds {
                let row = scan_equivalence(&spec, d_h, n, 3, opts.seed.wrapping_add(s))?;
                worst = worst.max(row.max_rel_err);
                w.write_record([
                    row.kind,
                    row.seed.to_string(),
                    n.to_string(),
                    d_h.to_string(),
                    format!("{:e}", row.max_rel_err),
                ])?;
            }
        }
        report.check(format!("{spec}: parallel vs sequential max rel err {worst:.1e} (need <= 1e-10)"), worst <= 1e-10);
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    report.files.push(path);
    Ok(report)
}

fn profile_probe(opts: &ProbeOptions, out_dir: &Path) -> CliResult<ProbeReport> {
    let (d_h, n) = (64, 256);
    let path = out_dir.join("profile.csv");
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    w.write_record(["kind", "d_h", "n", "combines", "dense_materializations", "up_sweep_rounds", "down_sweep_rounds"])?;
    let mut report = ProbeReport::default();
    for spec in all_kinds() {
        let c = closure_profile(&spec, d_h, n, 3, opts.seed)?;
        w.write_record([
            spec.to_string(),
            d_h.to_string(),
            n.to_string(),
            c.combines.to_string(),
            c.dense_materializations.to_string(),
            c.up_sweep_rounds.to_string(),
            c.down_sweep_rounds.to_string(),
        ])?;
        let closed = matches!(spec, StructureSpec::Diagonal | StructureSpec::BlockDiagonal(_));
        let ok = if closed { c.dense_materializations == 0 } else { c.dense_materializations >= 1 };
        let want = if closed { "0" } else { ">= 1" };
        report.check(format!("{spec}: {} dense materializations (need {want})", c.dense_materializations), ok);
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    report.files.push(path);
    Ok(report)
}
