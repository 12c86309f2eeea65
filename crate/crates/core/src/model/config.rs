use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::flows::FlowOrder;
use crate::logsig::MAX_DEPTH;
use crate::structured::StructureSpec;

/// How a layer evaluates its recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Sequential,
    ParallelScan,
    /// Log-ODE flows over windows of `window` steps at truncation `depth`,
    /// then a scan over the window flows.
    Hybrid { window: usize, depth: usize },
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Solver::Sequential => write!(f, "sequential"),
            Solver::ParallelScan => write!(f, "parallel"),
            Solver::Hybrid { window, depth } => write!(f, "hybrid:{window}:{depth}"),
        }
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "sequential" => return Ok(Solver::Sequential),
            "parallel" => return Ok(Solver::ParallelScan),
            _ => {}
        }
        let parts: Vec<&str> = s.split(':').collect();
        if let ["hybrid", w, n] = parts.as_slice() {
            let parse = |x: &str| {
                x.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad hybrid solver parameter {x:?} in {s:?}")))
            };
            return Ok(Solver::Hybrid {
                window: parse(w)?,
                depth: parse(n)?,
            });
        }
        Err(Error::Config(format!(
            "unknown solver {s:?}; expected sequential, parallel or hybrid:W:N"
        )))
    }
}

pub fn parse_order(s: &str) -> Result<FlowOrder> {
    match s.trim() {
        "first" => Ok(FlowOrder::First),
        "exponential" | "exp" => Ok(FlowOrder::Exponential),
        other => Err(Error::Config(format!("unknown flow order {other:?}; expected first or exponential"))),
    }
}

pub fn order_name(o: FlowOrder) -> &'static str {
    match o {
        FlowOrder::First => "first",
        FlowOrder::Exponential => "exponential",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceLayerConfig {
    pub structure: StructureSpec,
    pub d_h: usize,
    /// Input width plus the time channel.
    pub d_omega: usize,
    pub order: FlowOrder,
    pub solver: Solver,
}

impl SliceLayerConfig {
    pub fn validate(&self) -> Result<()> {
        self.structure.validate(self.d_h)?;
        if self.d_omega < 1 {
            return Err(Error::Config("d_omega must include the time channel".into()));
        }
        if let Solver::Hybrid { window, depth } = self.solver {
            if window == 0 || depth == 0 || depth > MAX_DEPTH {
                return Err(Error::Config(format!(
                    "hybrid solver needs window ≥ 1 and depth in 1..={MAX_DEPTH}, got {window}, {depth}"
                )));
            }
        }
        Ok(())
    }
}

/// Pointwise map applied after each SLiCE layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStyle {
    /// `tanh(W y + b)`.
    TanhMix,
    /// `(W y + b) ⊙ σ(V y + c)`.
    Glu,
}

impl fmt::Display for BlockStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockStyle::TanhMix => "tanh",
            BlockStyle::Glu => "glu",
        })
    }
}

impl FromStr for BlockStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tanh" => Ok(BlockStyle::TanhMix),
            "glu" => Ok(BlockStyle::Glu),
            other => Err(Error::Config(format!("unknown block style {other:?}; expected tanh or glu"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceModelConfig {
    pub vocab: usize,
    pub embed_dim: usize,
    pub layers: Vec<SliceLayerConfig>,
    pub block: BlockStyle,
    pub dropout: f64,
    pub classes: usize,
    /// Adds the block input to its output when widths agree.
    pub residual: bool,
    /// Variance floor inside the layer normalization.
    pub norm_eps: f64,
    /// Multiplier on the random initialization of the transition matrices,
    /// applied on top of a `1/√d_omega` factor.
    pub init_scale: f64,
    /// Standard deviation of the embedding initialization.
    pub embed_std: f64,
}

impl SliceModelConfig {
    /// `layers` identical SLiCE blocks of width `d_h` on top of an embedding.
    pub fn stacked(
        vocab: usize,
        embed_dim: usize,
        classes: usize,
        layers: usize,
        structure: StructureSpec,
        d_h: usize,
        solver: Solver,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| SliceLayerConfig {
                structure: structure.clone(),
                d_h,
                d_omega: if l == 0 { embed_dim } else { d_h } + 1,
                order: FlowOrder::First,
                solver,
            })
            .collect();
        Self {
            vocab,
            embed_dim,
            layers,
            block: BlockStyle::TanhMix,
            dropout: 0.0,
            classes,
            residual: false,
            norm_eps: 1e-6,
            init_scale: 1.0,
            embed_std: 1.0,
        }
    }

    /// Input width of layer `l`.
    pub fn input_width(&self, l: usize) -> usize {
        if l == 0 {
            self.embed_dim
        } else {
            self.layers[l - 1].d_h
        }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.embed_dim, |c| c.d_h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        if self.vocab == 0 || self.embed_dim == 0 || self.classes == 0 {
            return Err(Error::Config("vocab, embed_dim and classes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.norm_eps >= 0.0) || !(self.init_scale > 0.0) || !(self.embed_std > 0.0) {
            return Err(Error::Config("norm_eps must be ≥ 0, init_scale and embed_std > 0".into()));
        }
        for (l, c) in self.layers.iter().enumerate() {
            c.validate()?;
            let want = self.input_width(l) + 1;
            if c.d_omega != want {
                return Err(Error::Config(format!(
                    "layer {l}: d_omega = {} but input width + 1 = {want}",
                    c.d_omega
                )));
            }
            if self.residual && self.input_width(l) != c.d_h {
                return Err(Error::Config(format!(
                    "layer {l}: residual connection needs input width {} = d_h {}",
                    self.input_width(l),
                    c.d_h
                )));
            }
        }
        Ok(())
    }
}
