// Negated comparisons throughout also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atmosphere;
pub mod estimation;
pub mod eval;
pub mod gnss;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod simulator;
pub mod trrtk;
