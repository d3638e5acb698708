//! Bounded random search over attack programs.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dsl::{parse_attack, Command, CommandKind, Decl, Program};
use super::interface::{interface, AttType, Signature};
use super::interp::run_attack;
use super::{OR_HONEST, RPCATTACK_0, RPCATTACK_1};
use crate::exec::Execution;
use crate::level::Level;
use crate::term::{Event, SEncKeyUsage, Usage};
use crate::world::{Protocol, RunOutcome, RunVerdict};

#[derive(Clone, Copy, Debug)]
pub struct FuzzConfig {
    pub protocol: Protocol,
    pub count: usize,
    pub max_len: usize,
    pub seed: u64,
    pub exec: Execution,
    /// Run the built-in scripts first and mutate them later on.
    pub use_corpus: bool,
}

impl FuzzConfig {
    pub fn new(protocol: Protocol, count: usize, max_len: usize, seed: u64) -> FuzzConfig {
        FuzzConfig {
            protocol,
            count,
            max_len,
            seed,
            exec: Execution::default(),
            use_corpus: true,
        }
    }
}

/// One noteworthy fuzzed run, with a script that replays it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub index: usize,
    pub run_seed: u64,
    pub verdict: RunVerdict,
    pub script: String,
}

/// A Low key literal without the matching compromise event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SecrecyViolation {
    pub index: usize,
    pub key: String,
    pub usage: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FuzzReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub count: usize,
    pub max_len: usize,
    pub histogram: BTreeMap<String, usize>,
    /// Assumption failures by kind and the wrapper that detected them.
    pub assumption_failures: BTreeMap<String, usize>,
    /// Assertion failures; none of these has a prior assumption failure.
    pub counterexamples: Vec<Finding>,
    /// Contract violations.
    pub faults: Vec<Finding>,
    pub secrecy_violations: Vec<SecrecyViolation>,
    /// Runs whose final log was good and had its key literals checked.
    pub secrecy_checked_runs: usize,
    pub assertions_checked: usize,
    pub suppressed_assertions: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive(seed: u64, index: usize, salt: u64) -> u64 {
    splitmix(splitmix(seed ^ salt).wrapping_add(index as u64))
}

pub fn corpus(protocol: Protocol) -> Vec<Program> {
    let texts: &[&str] = if protocol.is_rpc() {
        &[RPCATTACK_0, RPCATTACK_1]
    } else {
        &[OR_HONEST]
    };
    texts
        .iter()
        .map(|t| parse_attack(t, protocol).expect("built-in scripts are valid"))
        .collect()
}

const STRING_POOL: &[&[u8]] = &[
    b"Alice",
    b"Bob",
    b"Charlie",
    b"Request",
    b"Request1",
    b"Request2",
    b"Response",
    b"1",
    b"2",
    b"\x00\x00\x00\x01ab",
    b"\x00\x00\x00\x00",
];

fn weight(name: &str) -> u32 {
    match name {
        "att_toBytespub" | "att_channel_read" | "att_channel_write" => 4,
        n if n.starts_with("att_run_") || n.starts_with("att_getChannel_") => 3,
        "att_setup" | "att_or_setup" | "att_pair" | "att_fst" | "att_snd" => 2,
        _ => 1,
    }
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    sigs: Vec<Signature>,
    decls: Vec<Decl>,
    commands: Vec<Command>,
    /// Assigned variables in assignment order.
    vars: Vec<(String, AttType)>,
    names: HashSet<String>,
    next: usize,
}

impl<'a> Gen<'a> {
    fn new(protocol: Protocol, rng: &'a mut ChaCha8Rng) -> Gen<'a> {
        Gen {
            rng,
            sigs: interface(protocol),
            decls: Vec::new(),
            commands: Vec::new(),
            vars: Vec::new(),
            names: HashSet::new(),
            next: 0,
        }
    }

    /// Starts from the first `n` commands of `prog`.
    fn from_prefix(protocol: Protocol, rng: &'a mut ChaCha8Rng, prog: &Program, n: usize) -> Gen<'a> {
        let mut g = Gen::new(protocol, rng);
        g.decls = prog.decls.clone();
        g.names = prog.decls.iter().map(|d| d.name.clone()).collect();
        for c in prog.commands.iter().take(n) {
            if let Some(t) = c.target() {
                let ty = prog.decls.iter().find(|d| d.name == t).expect("validated").ty;
                g.vars.push((t.to_string(), ty));
            }
            g.commands.push(c.clone());
        }
        g
    }

    fn fresh_name(&mut self, ty: AttType) -> String {
        let prefix = match ty {
            AttType::Str => "s",
            AttType::Bool => "f",
            AttType::Bytes => "x",
            AttType::Channel => "c",
            AttType::Session => "q",
        };
        loop {
            let name = format!("{prefix}{}", self.next);
            self.next += 1;
            if self.names.insert(name.clone()) {
                self.decls.push(Decl { name: name.clone(), ty, line: 0 });
                return name;
            }
        }
    }

    fn pick_var(&mut self, ty: AttType) -> Option<String> {
        let of_type: Vec<&String> = self.vars.iter().filter(|(_, t)| *t == ty).map(|(n, _)| n).collect();
        if of_type.is_empty() {
            return None;
        }
        Some(of_type[self.rng.gen_range(0..of_type.len())].clone())
    }

    fn has(&self, ty: AttType) -> bool {
        self.vars.iter().any(|(_, t)| *t == ty)
    }

    fn random_string(&mut self) -> Vec<u8> {
        if self.rng.gen_bool(0.85) {
            STRING_POOL[self.rng.gen_range(0..STRING_POOL.len())].to_vec()
        } else {
            let n = self.rng.gen_range(1..=6);
            (0..n).map(|_| self.rng.gen_range(b'a'..=b'z')).collect()
        }
    }

    fn step(&mut self) {
        let mut options: Vec<(Option<Signature>, u32)> = vec![(None, 2)];
        for s in &self.sigs {
            if s.params.iter().all(|p| self.has(*p)) {
                options.push((Some(*s), weight(s.name)));
            }
        }
        let total: u32 = options.iter().map(|(_, w)| w).sum();
        let mut roll = self.rng.gen_range(0..total);
        let choice = options
            .iter()
            .find(|(_, w)| {
                if roll < *w {
                    true
                } else {
                    roll -= w;
                    false
                }
            })
            .expect("roll is below the total weight")
            .0;
        let kind = match choice {
            None => {
                let text = self.random_string();
                let target = self.fresh_name(AttType::Str);
                self.vars.push((target.clone(), AttType::Str));
                CommandKind::AssignStr { target, text }
            }
            Some(sig) => {
                let args: Vec<String> = sig
                    .params
                    .iter()
                    .map(|p| self.pick_var(*p).expect("checked satisfiable"))
                    .collect();
                let func = sig.name.to_string();
                match sig.ret {
                    Some(ty) => {
                        let target = self.fresh_name(ty);
                        self.vars.push((target.clone(), ty));
                        CommandKind::CallAssign { target, func, args }
                    }
                    None => CommandKind::Call { func, args },
                }
            }
        };
        self.commands.push(Command::new(kind));
    }

    fn finish(self) -> Program {
        Program {
            decls: self.decls,
            commands: self.commands,
        }
    }
}

/// A random grammar-valid program with 1 to `max_len` commands.
pub fn generate(protocol: Protocol, max_len: usize, rng: &mut ChaCha8Rng) -> Program {
    let len = rng.gen_range(1..=max_len.max(1));
    let mut g = Gen::new(protocol, rng);
    for _ in 0..len {
        g.step();
    }
    g.finish()
}

/// A prefix of `base` extended with random commands, at most `max_len` long.
pub fn extend_prefix(protocol: Protocol, base: &Program, max_len: usize, rng: &mut ChaCha8Rng) -> Program {
    let cap = base.commands.len().min(max_len);
    let keep = rng.gen_range(0..=cap);
    let extra = rng.gen_range(0..=max_len - keep);
    let mut g = Gen::from_prefix(protocol, rng, base, keep);
    for _ in 0..extra {
        g.step();
    }
    g.finish()
}

/// `base`, truncated to `max_len`, with one call argument replaced by
/// another earlier variable of the same type.
pub fn swap_argument(base: &Program, max_len: usize, rng: &mut ChaCha8Rng) -> Program {
    let mut prog = base.clone();
    prog.commands.truncate(max_len);
    let ty_of = |name: &str| prog.decls.iter().find(|d| d.name == name).map(|d| d.ty);
    let calls: Vec<usize> = prog
        .commands
        .iter()
        .enumerate()
        .filter(|(_, c)| c.call().is_some_and(|(_, a)| !a.is_empty()))
        .map(|(i, _)| i)
        .collect();
    if calls.is_empty() {
        return prog;
    }
    let ci = calls[rng.gen_range(0..calls.len())];
    let (_, args) = prog.commands[ci].call().expect("filtered calls");
    let ai = rng.gen_range(0..args.len());
    let ty = ty_of(&args[ai]);
    let earlier: Vec<String> = prog.commands[..ci]
        .iter()
        .filter_map(|c| c.target())
        .filter(|t| ty_of(t) == ty)
        .map(str::to_string)
        .collect();
    if earlier.is_empty() {
        return prog;
    }
    let pick = earlier[rng.gen_range(0..earlier.len())].clone();
    match &mut prog.commands[ci].kind {
        CommandKind::CallAssign { args, .. } | CommandKind::Call { args, .. } => args[ai] = pick,
        CommandKind::AssignStr { .. } => unreachable!(),
    }
    prog
}

/// The `index`-th program of a fuzzing campaign; depends only on the
/// configuration and `index`.
pub fn program_at(cfg: &FuzzConfig, corpus: &[Program], index: usize) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, index, 0x9e0));
    let max_len = cfg.max_len.max(1);
    if cfg.use_corpus && !corpus.is_empty() {
        if index < corpus.len() {
            let mut p = corpus[index].clone();
            p.commands.truncate(max_len);
            return p;
        }
        let base = &corpus[rng.gen_range(0..corpus.len())];
        match rng.gen_range(0..4) {
            2 => return extend_prefix(cfg.protocol, base, max_len, &mut rng),
            3 => return swap_argument(base, max_len, &mut rng),
            _ => {}
        }
    }
    generate(cfg.protocol, max_len, &mut rng)
}

/// Every Low key literal with an HMAC or encryption usage must have its
/// compromise event logged. Checked only for good logs.
pub fn weak_secrecy_violations(out: &mut RunOutcome) -> Option<Vec<(String, String)>> {
    if !out.cs.log().is_good() {
        return None;
    }
    let keys: Vec<_> = out
        .cs
        .log()
        .iter()
        .filter_map(|e| match e {
            Event::New(t, u @ (Usage::HmacKey(_) | Usage::SEncKey(_))) => Some((t.clone(), u.clone())),
            _ => None,
        })
        .collect();
    let mut bad = Vec::new();
    for (t, u) in keys {
        if !out.cs.level(Level::Low, &t) {
            continue;
        }
        let log = out.cs.log();
        let compromised = match &u {
            Usage::HmacKey(h) => {
                let (a, b) = h.principals();
                log.has_bad(a) || log.has_bad(b)
            }
            Usage::SEncKey(SEncKeyUsage::PrinKey(p)) => log.has_bad(p),
            _ => true,
        };
        if !compromised {
            bad.push((t.to_string(), u.to_string()));
        }
    }
    Some(bad)
}

struct RunSummary {
    verdict: RunVerdict,
    run_seed: u64,
    program: Program,
    secrecy: Option<Vec<(String, String)>>,
    assertions: usize,
    suppressed: usize,
    failure: Option<String>,
}

pub fn fuzz_attacks(cfg: &FuzzConfig) -> FuzzReport {
    assert!(cfg.count >= 1, "fuzz_attacks needs count >= 1");
    let corpus = corpus(cfg.protocol);
    let runs = cfg.exec.map(cfg.count, |i| {
        let program = program_at(cfg, &corpus, i);
        let run_seed = derive(cfg.seed, i, 0x5ced);
        let mut out = run_attack(&program, cfg.protocol, run_seed);
        RunSummary {
            secrecy: weak_secrecy_violations(&mut out),
            verdict: out.verdict,
            run_seed,
            program,
            assertions: out.assertions_checked,
            suppressed: out.suppressed_assertions,
            failure: out.failure.as_ref().map(|f| format!("{} in {}", f.kind, f.op)),
        }
    });
    let mut report = FuzzReport {
        protocol: cfg.protocol,
        seed: cfg.seed,
        count: cfg.count,
        max_len: cfg.max_len,
        histogram: BTreeMap::new(),
        assumption_failures: BTreeMap::new(),
        counterexamples: Vec::new(),
        faults: Vec::new(),
        secrecy_violations: Vec::new(),
        secrecy_checked_runs: 0,
        assertions_checked: 0,
        suppressed_assertions: 0,
    };
    for (index, r) in runs.into_iter().enumerate() {
        *report.histogram.entry(r.verdict.name().to_string()).or_default() += 1;
        if let Some(f) = &r.failure {
            *report.assumption_failures.entry(f.clone()).or_default() += 1;
        }
        report.assertions_checked += r.assertions;
        report.suppressed_assertions += r.suppressed;
        if let Some(v) = r.secrecy {
            report.secrecy_checked_runs += 1;
            report
                .secrecy_violations
                .extend(v.into_iter().map(|(key, usage)| SecrecyViolation { index, key, usage }));
        }
        let finding = || Finding {
            index,
            run_seed: r.run_seed,
            verdict: r.verdict.clone(),
            script: replay_script(cfg.protocol, r.run_seed, &r.program),
        };
        match r.verdict {
            RunVerdict::AssertionFailure { .. } => report.counterexamples.push(finding()),
            RunVerdict::ContractViolation { .. } => report.faults.push(finding()),
            _ => {}
        }
    }
    report
}

/// Canonical script with a header naming the protocol and seed to replay it.
pub fn replay_script(protocol: Protocol, run_seed: u64, prog: &Program) -> String {
    format!("# replay: dyrun run {protocol} <this file> --seed {run_seed}\n{prog}")
}
