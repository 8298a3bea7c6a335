#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod direction;
pub mod envs;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod numeric;
pub mod reductions;
pub mod rng;
pub mod scale;
