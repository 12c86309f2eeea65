//! Interval flows of the linear CDE, their composition, and sequential and
//! parallel-prefix evaluation.

mod element;
mod scan;

pub use element::{build_flow, FlowElement, FlowMap, FlowOrder, ScanCounts, ScanStats};
pub use scan::{
    build_flows, scan_affine, scan_affine_sequential, scan_elements, scan_parallel, scan_sequential,
    IncrementSequence,
};
