//! Agent-based continuous double auction market simulator with reinforcement
//! learning market makers and liquidity takers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod analysis;
pub mod exchange;
pub mod harness;
pub mod lob;
pub mod rl;
