//! Directed Steiner tree approximation through label-consistent subtrees.

pub mod decomp;
pub mod gen;
pub mod graph;
pub mod lcst;
pub mod lp;
pub mod oracle;
pub mod pipeline;
pub mod rational;
pub mod reduction;
pub mod rounding;
