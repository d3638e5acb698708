//! Executes attack programs against a fresh world.

use std::collections::HashMap;

use super::dsl::{CommandKind, Program};
use super::interface::{call, Value};
use crate::world::{Protocol, RunOutcome, World};

/// Runs a validated program against a fresh `init()` state.
pub fn run_attack(prog: &Program, protocol: Protocol, seed: u64) -> RunOutcome {
    run_in(World::new(protocol, seed), prog)
}

/// Runs `prog` in a prepared world, then drains the roles and returns the
/// verdict. Commands after a halt are skipped.
pub fn run_in(mut w: World, prog: &Program) -> RunOutcome {
    let mut env: HashMap<&str, Value> = HashMap::new();
    for c in &prog.commands {
        if w.is_halted() {
            break;
        }
        match &c.kind {
            CommandKind::AssignStr { target, text } => {
                w.run_roles();
                env.insert(target, Value::Str(text.clone()));
            }
            CommandKind::CallAssign { target, func, args } => {
                let vals = args_of(&env, args);
                let v = call(&mut w, func, &vals)
                    .unwrap_or_else(|| Value::Failed(format!("{func} returns nothing")));
                env.insert(target, v);
            }
            CommandKind::Call { func, args } => {
                let vals = args_of(&env, args);
                call(&mut w, func, &vals);
            }
        }
    }
    w.finish()
}

fn args_of(env: &HashMap<&str, Value>, args: &[String]) -> Vec<Value> {
    args.iter()
        .map(|a| {
            env.get(a.as_str())
                .cloned()
                .unwrap_or_else(|| Value::Failed(format!("`{a}` is unassigned")))
        })
        .collect()
}
