//! Structured state-transition matrices and the channel families that drive
//! a SLiCE layer.

mod family;
mod matrix;
mod spec;

pub use family::{init_family, uniform_blocks, ChannelFamily, FamilyStructure, InitPolicy};
pub(crate) use matrix::block_offsets;
pub use matrix::{nonzero_count, DiagonalMap, SparseMask, StructureKind, StructuredMatrix};
pub use spec::{BlockSizes, StructureSpec};
