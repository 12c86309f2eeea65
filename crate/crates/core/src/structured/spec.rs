use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Block layout of a block-diagonal family.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockSizes {
    /// Equal blocks of size `b`; `b` must divide `d_h`.
    Uniform(usize),
    /// `d_h − b` singleton blocks followed by one dense `b × b` block.
    DiagonalDense(usize),
    Explicit(Vec<usize>),
}

impl BlockSizes {
    pub fn resolve(&self, d_h: usize) -> Result<Vec<usize>> {
        match self {
            BlockSizes::Uniform(b) => {
                if *b == 0 || !d_h.is_multiple_of(*b) {
                    return Err(Error::Structure(format!(
                        "block size {b} does not divide d_h = {d_h}"
                    )));
                }
                Ok(vec![*b; d_h / b])
            }
            BlockSizes::DiagonalDense(b) => {
                if *b == 0 || *b > d_h {
                    return Err(Error::Structure(format!(
                        "dense block {b} does not fit in d_h = {d_h}"
                    )));
                }
                let mut sizes = vec![1; d_h - b];
                sizes.push(*b);
                Ok(sizes)
            }
            BlockSizes::Explicit(sizes) => {
                if sizes.iter().sum::<usize>() != d_h || sizes.contains(&0) {
                    return Err(Error::Structure(format!(
                        "block sizes {sizes:?} do not partition d_h = {d_h}"
                    )));
                }
                Ok(sizes.clone())
            }
        }
    }
}

/// Configuration-level description of a structural family. Unlike
/// [`StructureKind`](super::StructureKind) it carries no per-matrix data
/// (sparse masks are drawn at initialization).
#[derive(Debug, Clone, PartialEq)]
pub enum StructureSpec {
    Dense,
    Diagonal,
    Dplr { rank: usize },
    BlockDiagonal(BlockSizes),
    /// Bernoulli mask with keep probability `d_h^(ε−1)`.
    Sparse { epsilon: f64 },
    WalshHadamard,
}

impl StructureSpec {
    pub fn validate(&self, d_h: usize) -> Result<()> {
        if d_h == 0 {
            return Err(Error::Structure("d_h must be positive".into()));
        }
        match self {
            StructureSpec::Dplr { rank } if *rank == 0 => {
                Err(Error::Structure("DPLR rank must be at least 1".into()))
            }
            StructureSpec::BlockDiagonal(sizes) => sizes.resolve(d_h).map(|_| ()),
            StructureSpec::Sparse { epsilon } if !(*epsilon > 0.0 && *epsilon < 1.0) => Err(
                Error::Structure(format!("sparsity epsilon must lie in (0, 1), got {epsilon}")),
            ),
            StructureSpec::WalshHadamard if !d_h.is_power_of_two() => Err(Error::Structure(
                format!("Walsh-Hadamard requires a power-of-two d_h, got {d_h}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn sparse_keep_probability(epsilon: f64, d_h: usize) -> f64 {
        (d_h as f64).powf(epsilon - 1.0).min(1.0)
    }

    /// Nonzeros of one matrix (expected value for sparse masks).
    pub fn expected_nonzeros(&self, d_h: usize) -> Result<f64> {
        self.validate(d_h)?;
        Ok(match self {
            StructureSpec::Dense => (d_h * d_h) as f64,
            StructureSpec::Diagonal | StructureSpec::WalshHadamard => d_h as f64,
            StructureSpec::Dplr { rank } => (d_h * (1 + 2 * rank)) as f64,
            StructureSpec::BlockDiagonal(sizes) => {
                sizes.resolve(d_h)?.iter().map(|b| b * b).sum::<usize>() as f64
            }
            StructureSpec::Sparse { epsilon } => {
                (d_h * d_h) as f64 * Self::sparse_keep_probability(*epsilon, d_h)
            }
        })
    }
}

impl fmt::Display for StructureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureSpec::Dense => write!(f, "dense"),
            StructureSpec::Diagonal => write!(f, "diagonal"),
            StructureSpec::Dplr { rank } => write!(f, "dplr:{rank}"),
            StructureSpec::BlockDiagonal(BlockSizes::Uniform(b)) => write!(f, "bd:{b}"),
            StructureSpec::BlockDiagonal(BlockSizes::DiagonalDense(b)) => write!(f, "dde:{b}"),
            StructureSpec::BlockDiagonal(BlockSizes::Explicit(s)) => {
                let parts: Vec<String> = s.iter().map(|b| b.to_string()).collect();
                write!(f, "bd:{}", parts.join(","))
            }
            StructureSpec::Sparse { epsilon } => write!(f, "sparse:{epsilon}"),
            StructureSpec::WalshHadamard => write!(f, "wh"),
        }
    }
}

impl FromStr for StructureSpec {
    type Err = Error;

    /// Accepts `dense`, `diagonal`, `dplr:R`, `bd:B`, `bd:B1,B2,..`, `dde:B`,
    /// `sparse:EPS` and `wh`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let bad = || Error::Config(format!("unrecognized structure `{s}`"));
        let int = |a: &str| a.trim().parse::<usize>().map_err(|_| bad());
        match (head.to_ascii_lowercase().as_str(), arg) {
            ("dense", None) => Ok(StructureSpec::Dense),
            ("diagonal" | "diag", None) => Ok(StructureSpec::Diagonal),
            ("wh" | "walsh-hadamard", None) => Ok(StructureSpec::WalshHadamard),
            ("dplr", Some(a)) => Ok(StructureSpec::Dplr { rank: int(a)? }),
            ("dde", Some(a)) => Ok(StructureSpec::BlockDiagonal(BlockSizes::DiagonalDense(int(a)?))),
            ("bd" | "block-diagonal", Some(a)) => {
                let sizes = a.split(',').map(int).collect::<Result<Vec<_>>>()?;
                if sizes.len() == 1 {
                    Ok(StructureSpec::BlockDiagonal(BlockSizes::Uniform(sizes[0])))
                } else {
                    Ok(StructureSpec::BlockDiagonal(BlockSizes::Explicit(sizes)))
                }
            }
            ("sparse", Some(a)) => Ok(StructureSpec::Sparse {
                epsilon: a.trim().parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}
