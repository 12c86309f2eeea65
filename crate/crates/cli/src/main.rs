use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slicekit::structured::StructureSpec;
use slicekit::tasks::Task;
use slicekit_cli::run::{self, ProbeKind, ProbeOptions, SweepConfig};
use slicekit_cli::{init_threads, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "slicekit", version, about = "Structured linear CDE sequence models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Config file with [task], [model] and [train] sections.
    config: Option<PathBuf>,
    /// Task used when no config file is given.
    #[arg(long)]
    task: Option<Task>,
    /// Override one key, e.g. `--set model.d_h=128`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Batch 256, 100k steps and hidden sizes matched to the full nonzero budget.
    #[arg(long)]
    paper_scale: bool,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match (&self.config, self.task) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                RunConfig::parse(&text)?
            }
            (None, Some(task)) => RunConfig::for_task(task),
            (None, None) => return Err(CliError::Config("missing required field task.name (pass a config file or --task)".into())),
        };
        if self.paper_scale {
            cfg.apply_paper_scale();
        }
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A length list such as `3-8` or `3,5,8`, kept as one clap value.
#[derive(Clone, Debug)]
struct Lengths(Vec<usize>);

fn parse_lengths(s: &str) -> Result<Lengths, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.parse().map_err(|_| format!("bad length {a:?}"))?, b.parse().map_err(|_| format!("bad length {b:?}"))?);
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| format!("bad length {part:?}"))?),
        }
    }
    if out.is_empty() {
        return Err("no lengths given".into());
    }
    Ok(Lengths(out))
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes metrics, summary and checkpoint to train.out_dir.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run a diagnostic probe and write its CSV; exits nonzero when a threshold fails.
    Probe {
        /// gram, logode-order, scan-equivalence or profile.
        kind: ProbeKind,
        #[arg(long, default_value = "probes")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Gram dimensions, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 256, 1024])]
        dims: Vec<usize>,
        /// Seeds per size for scan equivalence.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Minimal number of stacked layers per (kind, length) reaching the target accuracy.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Structures to sweep, e.g. `bd:4,diagonal` (separate with `;` when a kind contains commas).
        #[arg(long, value_delimiter = ';', default_value = "bd:4;diagonal")]
        kinds: Vec<String>,
        /// Sequence lengths, e.g. `3-8` or `3,5,8`.
        #[arg(long, value_parser = parse_lengths, default_value = "3-8")]
        lengths: Lengths,
        #[arg(long, default_value_t = 4)]
        max_layers: usize,
        /// Nonzeros per transition matrix used to size each kind; defaults to model.d_h as is.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
    },
    /// Write generated task instances as `tokens<TAB>labels` lines.
    DumpDataset {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        min: usize,
        #[arg(long, default_value_t = 20)]
        max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint per length; writes eval.csv.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_lengths)]
        lengths: Option<Lengths>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { cfg } => {
            let config = cfg.resolve()?;
            if cfg.print_config {
                print!("{}", config.serialize());
                return Ok(());
            }
            let metric = config.task.task.primary_metric();
            let out = run::run_train(&config, |r| {
                let accs: Vec<String> = r.accuracy.iter().map(|a| format!("{}:{:.3}", a.length, a.get(metric))).collect();
                eprintln!("step {:>7}  lr {:.2e}  loss {:.4}  {}", r.step, r.lr, r.train_loss, accs.join(" "));
            })?;
            println!("length,best_primary,best_step");
            for s in &out.summary {
                println!("{},{:.4},{}", s.length, s.best_primary, s.best_step);
            }
            eprintln!("{} steps; artifacts in {}", out.steps_done, out.out_dir.display());
        }
        Command::Probe {
            kind,
            out,
            seed,
            trials,
            dims,
            seeds,
        } => {
            let opts = ProbeOptions { seed, trials, dims, seeds };
            let report = run::run_probe(kind, &opts, &out)?;
            for (name, ok) in &report.checks {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            if !report.passed() {
                return Err(CliError::Threshold(report.failures().join("; ")));
            }
        }
        Command::Sweep {
            cfg,
            kinds,
            lengths,
            max_layers,
            budget,
            target,
        } => {
            let mut base = cfg.resolve()?;
            if base.train.target_acc.is_none() {
                base.train.target_acc = Some(target);
            }
            if cfg.print_config {
                print!("{}", base.serialize());
                return Ok(());
            }
            let kinds = kinds
                .iter()
                .map(|k| k.parse::<StructureSpec>())
                .collect::<slicekit::Result<Vec<_>>>()?;
            let sweep = SweepConfig {
                kinds,
                lengths: lengths.0,
                max_layers,
                budget,
                target,
            };
            let out = base.train.out_dir.clone();
            run::layer_sweep(&base, &sweep, &out, |r| {
                let layers = r.layers.map_or_else(|| "fail".into(), |l| l.to_string());
                println!("{} d_h={} length={} layers={layers} best={:.3}", r.kind, r.d_h, r.length, r.best_acc);
            })?;
            eprintln!("wrote {}", out.join("layer_sweep.csv").display());
        }
        Command::DumpDataset {
            task,
            count,
            min,
            max,
            seed,
            out,
        } => {
            let path = run::dump_dataset(task, count, min, max, seed, &out)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Eval {
            checkpoint,
            lengths,
            samples,
            seed,
            out,
        } => {
            let dir = out.unwrap_or_else(|| checkpoint.parent().map(PathBuf::from).unwrap_or_default());
            let acc = run::run_eval(&checkpoint, lengths.as_ref().map(|l| l.0.as_slice()), samples, seed, &dir)?;
            println!("length,acc_all,acc_final");
            for a in acc {
                println!("{},{:.4},{:.4}", a.length, a.acc_all, a.acc_final);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
