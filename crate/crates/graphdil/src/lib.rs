//! Edge groups of graphs, extensions of edge-indexed operator families to the
//! group, and dilations of the extended families.

pub mod linops;
pub mod report;
pub mod rewrite;
pub mod dynamics;
pub mod extend;
pub mod dilate;
pub mod system;
pub mod sample;
