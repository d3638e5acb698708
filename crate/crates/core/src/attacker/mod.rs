//! Attacker interface, attack-program language, interpreter and fuzzer.

pub mod dsl;
pub mod fuzz;
pub mod interface;
pub mod interp;

use crate::world::Protocol;

pub use dsl::{parse_attack, DslError, Program};
pub use interp::{run_attack, run_in};

pub const RPCATTACK_0: &str = include_str!("../../attacks/rpcattack_0.dsl");
pub const RPCATTACK_1: &str = include_str!("../../attacks/rpcattack_1.dsl");
pub const OR_HONEST: &str = include_str!("../../attacks/or_honest.dsl");

/// Built-in honest relay for `protocol`.
pub fn honest_script(protocol: Protocol) -> &'static str {
    if protocol.is_rpc() {
        RPCATTACK_0
    } else {
        OR_HONEST
    }
}
