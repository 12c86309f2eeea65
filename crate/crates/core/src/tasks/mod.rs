//! Deterministic generators for the A5 word problem and four regular-language
//! tasks, with per-position labels and train/eval length splits.

mod a5;
mod regular;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

pub use a5::{a5_elements, a5_index, a5_mul, a5_prefix_products, a5_table_text, compose, Perm, A5_ORDER};
pub use regular::{
    cycle_labels, even_pairs_labels, mod_arith_labels, parity_labels, ModOps, BACKWARD, FORWARD, MODULUS, OP_ADD,
    OP_MUL, OP_SUB, STAY,
};

use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::train::Example;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    A5,
    CycleNavigation,
    EvenPairs,
    ModArith(ModOps),
    Parity,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::A5 => "a5",
            Task::CycleNavigation => "cycle_nav",
            Task::EvenPairs => "even_pairs",
            Task::ModArith(ModOps::AddSubMul) => "mod_arith",
            Task::ModArith(ModOps::AddMul) => "mod_arith_addmul",
            Task::Parity => "parity",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "a5" => Task::A5,
            "cycle_nav" => Task::CycleNavigation,
            "even_pairs" => Task::EvenPairs,
            "mod_arith" => Task::ModArith(ModOps::AddSubMul),
            "mod_arith_addmul" => Task::ModArith(ModOps::AddMul),
            "parity" => Task::Parity,
            other => {
                return Err(Error::Config(format!(
                    "unknown task {other:?}; expected a5, cycle_nav, even_pairs, mod_arith, mod_arith_addmul or parity"
                )))
            }
        })
    }
}

/// The four regular-language tasks.
pub const REGULAR_TASKS: [Task; 4] = [
    Task::CycleNavigation,
    Task::EvenPairs,
    Task::ModArith(ModOps::AddSubMul),
    Task::Parity,
];

/// Tokens with a label per position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    pub task: Task,
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
}

impl TaskInstance {
    pub fn to_example(&self) -> Example {
        Example {
            tokens: self.tokens.clone(),
            labels: self.labels.clone(),
        }
    }
}

impl Task {
    pub fn vocab(&self) -> usize {
        match self {
            Task::A5 => A5_ORDER,
            Task::CycleNavigation => 3,
            Task::EvenPairs | Task::Parity => 2,
            Task::ModArith(_) => 8,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Task::A5 => A5_ORDER,
            Task::CycleNavigation | Task::ModArith(_) => 5,
            Task::EvenPairs | Task::Parity => 2,
        }
    }

    pub fn valid_length(&self, len: usize) -> bool {
        match self {
            Task::A5 => (2..=20).contains(&len),
            Task::ModArith(_) => len % 2 == 1,
            _ => len >= 1,
        }
    }

    /// Per-position labels for a token sequence.
    pub fn labels(&self, tokens: &[usize]) -> Result<Vec<usize>> {
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.vocab()) {
            return Err(Error::InvalidArgument(format!("token {t} outside the {self} vocabulary")));
        }
        Ok(match self {
            Task::A5 => a5_prefix_products(tokens),
            Task::CycleNavigation => cycle_labels(tokens),
            Task::EvenPairs => even_pairs_labels(tokens),
            Task::ModArith(_) => mod_arith_labels(tokens)?,
            Task::Parity => parity_labels(tokens),
        })
    }

    /// One random instance of the given length.
    pub fn generate(&self, rng: &mut Rng, len: usize) -> Result<TaskInstance> {
        if !self.valid_length(len) {
            return Err(Error::InvalidArgument(format!("length {len} is not valid for {self}")));
        }
        let tokens: Vec<usize> = match self {
            Task::ModArith(ops) => {
                let op_set: &[usize] = match ops {
                    ModOps::AddSubMul => &[OP_ADD, OP_SUB, OP_MUL],
                    ModOps::AddMul => &[OP_ADD, OP_MUL],
                };
                (0..len)
                    .map(|j| {
                        if j % 2 == 0 {
                            rng.below(MODULUS)
                        } else {
                            op_set[rng.below(op_set.len())]
                        }
                    })
                    .collect()
            }
            _ => (0..len).map(|_| rng.below(self.vocab())).collect(),
        };
        let labels = self.labels(&tokens)?;
        Ok(TaskInstance {
            task: *self,
            tokens,
            labels,
        })
    }

    /// `(train, eval)` length ranges: 3–20 for both on A5, 3–40 and 40–256
    /// on the regular tasks.
    pub fn default_split(&self) -> LengthSplit {
        match self {
            Task::A5 => LengthSplit::new(*self, (3, 20), (3, 20)),
            _ => LengthSplit::new(*self, (3, 40), (40, 256)),
        }
        .expect("default ranges are valid")
    }
}

/// Uniform draws over the valid lengths of a task in `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthSampler {
    lengths: Vec<usize>,
}

impl LengthSampler {
    pub fn new(task: Task, lo: usize, hi: usize) -> Result<Self> {
        let lengths: Vec<usize> = (lo..=hi).filter(|&l| task.valid_length(l)).collect();
        if lengths.is_empty() {
            return Err(Error::Config(format!("no valid {task} lengths in [{lo}, {hi}]")));
        }
        Ok(Self { lengths })
    }

    pub fn draw(&self, rng: &mut Rng) -> usize {
        self.lengths[rng.below(self.lengths.len())]
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn min(&self) -> usize {
        self.lengths[0]
    }

    pub fn max(&self) -> usize {
        *self.lengths.last().expect("nonempty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthSplit {
    pub task: Task,
    pub train: LengthSampler,
    pub eval: LengthSampler,
}

impl LengthSplit {
    pub fn new(task: Task, train: (usize, usize), eval: (usize, usize)) -> Result<Self> {
        Ok(Self {
            task,
            train: LengthSampler::new(task, train.0, train.1)?,
            eval: LengthSampler::new(task, eval.0, eval.1)?,
        })
    }
}

/// Convenience wrapper returning the two samplers.
pub fn length_split(task: Task, train: (usize, usize), eval: (usize, usize)) -> Result<(LengthSampler, LengthSampler)> {
    let s = LengthSplit::new(task, train, eval)?;
    Ok((s.train, s.eval))
}

/// A training batch. For A5, `short_fraction` of the sequences (rounded
/// down, at least one when positive) have length 2.
pub fn sample_batch(
    task: Task,
    sampler: &LengthSampler,
    batch: usize,
    short_fraction: f64,
    rng: &mut Rng,
) -> Result<Vec<TaskInstance>> {
    let short = if task == Task::A5 && short_fraction > 0.0 {
        ((batch as f64 * short_fraction) as usize).max(1).min(batch)
    } else {
        0
    };
    (0..batch)
        .map(|i| {
            let len = if i < short { 2 } else { sampler.draw(rng) };
            task.generate(rng, len)
        })
        .collect()
}

/// Fraction of final-position labels matched by uniform random guessing.
pub fn random_guess_accuracy(task: Task, sampler: &LengthSampler, samples: usize, rng: &mut Rng) -> Result<f64> {
    let mut hits = 0usize;
    for _ in 0..samples {
        let len = sampler.draw(rng);
        let inst = task.generate(rng, len)?;
        let guess = rng.below(task.classes());
        hits += usize::from(guess == *inst.labels.last().expect("nonempty"));
    }
    Ok(hits as f64 / samples as f64)
}

/// Writes one instance per line as `tokens<TAB>labels`, ids separated by spaces.
pub fn dump_instances<W: Write>(out: &mut W, instances: &[TaskInstance]) -> std::io::Result<()> {
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    for inst in instances {
        writeln!(out, "{}\t{}", join(&inst.tokens), join(&inst.labels))?;
    }
    Ok(())
}

/// Reads the format written by [`dump_instances`].
pub fn read_instances<R: BufRead>(input: R, task: Task) -> Result<Vec<TaskInstance>> {
    let parse = |s: &str| -> Result<Vec<usize>> {
        s.split_whitespace()
            .map(|x| x.parse().map_err(|_| Error::InvalidArgument(format!("bad token id {x:?}"))))
            .collect()
    };
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidArgument(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (t, l) = line
            .split_once('\t')
            .ok_or_else(|| Error::InvalidArgument(format!("line {}: missing tab separator", i + 1)))?;
        let (tokens, labels) = (parse(t)?, parse(l)?);
        if tokens.len() != labels.len() {
            return Err(Error::InvalidArgument(format!("line {}: token and label counts differ", i + 1)));
        }
        out.push(TaskInstance { task, tokens, labels });
    }
    Ok(out)
}
