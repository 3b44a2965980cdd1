//! Token-passing DAG ledger and route-learning engine.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod apow;
pub mod harness;
pub mod ledger;
pub mod network;
pub mod rl;
pub mod token;
pub mod traffic;
