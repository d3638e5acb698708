//! Honest protocol roles.

pub mod otway_rees;
pub mod rpc;
