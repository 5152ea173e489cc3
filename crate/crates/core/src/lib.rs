#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod orlicz;
pub mod quad;
pub mod gibbs;
pub mod solve;
pub mod asymptotics;
pub mod montecarlo;
pub mod cli;
