//! Executable Dolev-Yao runtime: symbolic terms and levels kept in step with
//! concrete cryptography, plus protocol roles and an attacker harness.

pub mod attacker;
pub mod backend;
pub mod codec;
pub mod exec;
pub mod level;
pub mod log;
pub mod protocols;
pub mod report;
pub mod state;
pub mod syntax;
pub mod term;
pub mod world;

pub use codec::ConcreteBytes;
pub use level::Level;
pub use state::CryptoState;
pub use term::{Event, Term, Usage};
pub use world::{Protocol, RunOutcome, RunVerdict, World};
