//! Sessions, channels, role scheduling and verdict bookkeeping for one run.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backend::{MacBackend, RandomSource, SeededSource};
use crate::codec::ConcreteBytes;
use crate::level::Level;
use crate::state::{AssumptionFailure, CryptoState, FailureKind, WrapperError};
use crate::term::{Term, Usage};

pub type ChannelId = usize;
pub type SessionId = usize;

/// Fresh key and nonce length in bytes.
pub const KEY_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    RpcCorrect,
    RpcFlawed,
    OtwayRees,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::RpcCorrect, Protocol::RpcFlawed, Protocol::OtwayRees];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::RpcCorrect => "rpc-correct",
            Protocol::RpcFlawed => "rpc-flawed",
            Protocol::OtwayRees => "otway-rees",
        }
    }

    pub fn is_rpc(self) -> bool {
        matches!(self, Protocol::RpcCorrect | Protocol::RpcFlawed)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Protocol, String> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol `{s}` (expected rpc-correct, rpc-flawed or otway-rees)"))
    }
}

/// A duplex link between one side of a session and the network.
///
/// Roles read from `inbox` and write to `outbox`; the attacker does the
/// opposite.
#[derive(Clone, Debug, Default)]
pub struct Channel {
    pub name: String,
    inbox: VecDeque<ConcreteBytes>,
    outbox: VecDeque<ConcreteBytes>,
}

impl Channel {
    pub fn pending_for_role(&self) -> usize {
        self.inbox.len()
    }

    pub fn pending_for_attacker(&self) -> usize {
        self.outbox.len()
    }
}

#[derive(Clone, Debug)]
pub enum Session {
    Rpc {
        client: ConcreteBytes,
        server: ConcreteBytes,
        key: ConcreteBytes,
        client_ch: ChannelId,
        server_ch: ChannelId,
    },
    OtwayRees {
        initiator: ConcreteBytes,
        responder: ConcreteBytes,
        initiator_ch: ChannelId,
        responder_ch: ChannelId,
        server_ch: ChannelId,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunVerdict {
    Ok,
    AssertionFailure { location: String, assertion: String },
    AssumptionFailure { failure: FailureKind, detail: String },
    Deadlock { location: String },
    ContractViolation { location: String, detail: String },
}

impl RunVerdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunVerdict::Ok => 0,
            RunVerdict::AssertionFailure { .. } => 10,
            RunVerdict::AssumptionFailure { .. } => 11,
            RunVerdict::Deadlock { .. } => 12,
            RunVerdict::ContractViolation { .. } => 13,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunVerdict::Ok => "ok",
            RunVerdict::AssertionFailure { .. } => "assertion-failure",
            RunVerdict::AssumptionFailure { .. } => "assumption-failure",
            RunVerdict::Deadlock { .. } => "deadlock",
            RunVerdict::ContractViolation { .. } => "contract-violation",
        }
    }

    pub fn is_assertion_failure(&self) -> bool {
        matches!(self, RunVerdict::AssertionFailure { .. })
    }
}

impl fmt::Display for RunVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunVerdict::Ok => f.write_str("ok"),
            RunVerdict::AssertionFailure { location, assertion } => {
                write!(f, "assertion failure at {location}: {assertion}")
            }
            RunVerdict::AssumptionFailure { detail, .. } => write!(f, "assumption failure: {detail}"),
            RunVerdict::Deadlock { location } => write!(f, "deadlock at {location}"),
            RunVerdict::ContractViolation { location, detail } => {
                write!(f, "contract violation at {location}: {detail}")
            }
        }
    }
}

/// Why a role step stopped short of completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stop {
    /// Waiting for input on a channel; the role's state is unchanged.
    Blocked(ChannelId),
    /// A check failed and the role gave up, without affecting the verdict.
    Abort(String),
    /// The role broke a wrapper or channel contract.
    Fault(String),
}

impl From<WrapperError> for Stop {
    fn from(e: WrapperError) -> Stop {
        if e.is_contract_violation() {
            Stop::Fault(e.to_string())
        } else {
            Stop::Abort(e.to_string())
        }
    }
}

/// A resumable protocol role. `step` runs until the role finishes or blocks
/// on a channel read.
pub trait Role: Send {
    fn step(&mut self, w: &mut World) -> Result<(), Stop>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoleState {
    Runnable,
    Waiting(ChannelId),
    Done,
    Aborted(String),
}

struct RoleSlot {
    label: String,
    role: Option<Box<dyn Role>>,
    state: RoleState,
}

/// Summary of a role for reports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoleSummary {
    pub label: String,
    pub state: String,
}

/// Everything one run owns: crypto state, channels, sessions and roles.
pub struct World {
    pub cs: CryptoState,
    protocol: Protocol,
    seed: u64,
    rng: Box<dyn RandomSource>,
    sched: ChaCha8Rng,
    channels: Vec<Channel>,
    sessions: Vec<Session>,
    roles: Vec<RoleSlot>,
    prin_keys: IndexMap<ConcreteBytes, ConcreteBytes>,
    first: Option<RunVerdict>,
    deadlock: Option<String>,
    halted: bool,
    assertions_checked: usize,
    suppressed: usize,
    ignored_faults: usize,
    seen_violations: usize,
}

impl fmt::Debug for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("World")
            .field("protocol", &self.protocol)
            .field("seed", &self.seed)
            .field("channels", &self.channels.len())
            .field("sessions", &self.sessions.len())
            .field("roles", &self.roles.len())
            .field("first", &self.first)
            .finish()
    }
}

impl World {
    pub fn new(protocol: Protocol, seed: u64) -> World {
        World {
            cs: CryptoState::init(),
            protocol,
            seed,
            rng: Box::new(SeededSource::new(seed)),
            sched: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5c4e_d01e_0000),
            channels: Vec::new(),
            sessions: Vec::new(),
            roles: Vec::new(),
            prin_keys: IndexMap::new(),
            first: None,
            deadlock: None,
            halted: false,
            assertions_checked: 0,
            suppressed: 0,
            ignored_faults: 0,
            seen_violations: 0,
        }
    }

    pub fn with_random_source(mut self, rng: Box<dyn RandomSource>) -> World {
        self.rng = rng;
        self
    }

    pub fn with_mac_backend(mut self, mac: Arc<dyn MacBackend>) -> World {
        self.cs = std::mem::take(&mut self.cs).with_mac_backend(mac);
        self
    }

    pub fn with_audit(mut self, on: bool) -> World {
        self.cs = std::mem::take(&mut self.cs).with_audit(on);
        self
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn session(&self, s: SessionId) -> Option<&Session> {
        self.sessions.get(s)
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn channel(&self, ch: ChannelId) -> Option<&Channel> {
        self.channels.get(ch)
    }

    pub fn add_session(&mut self, s: Session) -> SessionId {
        self.sessions.push(s);
        self.sessions.len() - 1
    }

    pub fn new_channel(&mut self, name: impl Into<String>) -> ChannelId {
        self.channels.push(Channel {
            name: name.into(),
            ..Channel::default()
        });
        self.channels.len() - 1
    }

    /// Term registered for `b`; a fault if there is none.
    pub fn term(&self, b: &ConcreteBytes) -> Result<Term, Stop> {
        self.cs
            .term_of(b)
            .cloned()
            .ok_or_else(|| Stop::Fault(format!("0x{} is not registered", b.to_hex())))
    }

    pub fn fresh(&mut self, usage: Usage) -> Result<ConcreteBytes, WrapperError> {
        self.cs.fresh(usage, KEY_LEN, &mut *self.rng)
    }

    /// Public random value, registered as an attacker-known literal.
    pub fn nonce(&mut self) -> Result<ConcreteBytes, WrapperError> {
        let b = crate::backend::random_bytes(&mut *self.rng, KEY_LEN);
        self.cs.to_string(b.as_slice())
    }

    pub fn pair4(
        &mut self,
        a: &ConcreteBytes,
        b: &ConcreteBytes,
        c: &ConcreteBytes,
        d: &ConcreteBytes,
    ) -> Result<ConcreteBytes, WrapperError> {
        let cd = self.cs.pair(c, d)?;
        let bcd = self.cs.pair(b, &cd)?;
        self.cs.pair(a, &bcd)
    }

    pub fn unpair4(&mut self, m: &ConcreteBytes) -> Result<[ConcreteBytes; 4], WrapperError> {
        let (a, rest) = self.cs.destruct(m)?;
        let (b, rest) = self.cs.destruct(&rest)?;
        let (c, d) = self.cs.destruct(&rest)?;
        Ok([a, b, c, d])
    }

    /// Long-term encryption key of principal `p`, created on first use.
    pub fn principal_key(&mut self, p: &ConcreteBytes) -> Result<ConcreteBytes, Stop> {
        if let Some(k) = self.prin_keys.get(p) {
            return Ok(k.clone());
        }
        let tp = self.term(p)?;
        let k = self.fresh(Usage::SEncKey(crate::term::SEncKeyUsage::PrinKey(tp)))?;
        self.prin_keys.insert(p.clone(), k.clone());
        Ok(k)
    }

    pub fn known_principal_key(&self, p: &ConcreteBytes) -> Option<&ConcreteBytes> {
        self.prin_keys.get(p)
    }

    /// Role-side read: takes the next message addressed to the role.
    pub fn role_read(&mut self, ch: ChannelId) -> Result<ConcreteBytes, Stop> {
        self.channels[ch].inbox.pop_front().ok_or(Stop::Blocked(ch))
    }

    /// Role-side write. The bytes must be registered to a Low term.
    pub fn role_write(&mut self, ch: ChannelId, b: ConcreteBytes) -> Result<(), Stop> {
        let t = self.term(&b)?;
        if !self.cs.level(Level::Low, &t) {
            return Err(Stop::Fault(format!(
                "channel_write: {t} is not Low on channel {}",
                self.channels[ch].name
            )));
        }
        self.channels[ch].outbox.push_back(b);
        Ok(())
    }

    /// Attacker-side write; `b` is a bytespub value.
    pub fn attacker_write(&mut self, ch: ChannelId, b: ConcreteBytes) {
        self.channels[ch].inbox.push_back(b);
    }

    /// Attacker-side read. Runs the roles first; an empty channel once every
    /// role is blocked or finished is a deadlock and halts the run.
    pub fn attacker_read(&mut self, ch: ChannelId) -> Option<ConcreteBytes> {
        self.run_roles();
        if self.halted {
            return None;
        }
        let out = self.channels[ch].outbox.pop_front();
        if out.is_none() {
            let name = self.channels[ch].name.clone();
            self.deadlock(format!("attacker read on {name}"));
        }
        out
    }

    /// Records a correspondence check.
    pub fn check(&mut self, location: &str, assertion: String, holds: bool) {
        self.assertions_checked += 1;
        if !holds {
            self.fail_assertion(location.to_string(), assertion);
        }
    }

    fn fail_assertion(&mut self, location: String, assertion: String) {
        if self.cs.failure().is_some() {
            self.suppressed += 1;
        } else if self.first.is_none() {
            self.first = Some(RunVerdict::AssertionFailure { location, assertion });
        }
    }

    /// A broken runtime invariant; reported like an assertion failure.
    pub fn invariant_violation(&mut self, name: &str, detail: String) {
        self.fail_assertion(format!("invariant:{name}"), detail);
    }

    /// A contract fault. Before any assumption failure it ends the run.
    pub fn contract_violation(&mut self, location: String, detail: String) {
        if self.cs.failure().is_some() {
            self.ignored_faults += 1;
            return;
        }
        if self.first.is_none() {
            self.first = Some(RunVerdict::ContractViolation { location, detail });
        }
        self.halted = true;
    }

    fn deadlock(&mut self, location: String) {
        if self.deadlock.is_none() {
            self.deadlock = Some(location);
        }
        self.halted = true;
    }

    /// Turns state-level invariant violations into verdict events.
    pub fn sync_violations(&mut self) {
        while self.seen_violations < self.cs.violations().len() {
            let v = self.cs.violations()[self.seen_violations].clone();
            self.seen_violations += 1;
            self.invariant_violation(v.op, v.detail);
        }
    }

    pub fn spawn(&mut self, label: String, role: Box<dyn Role>) {
        self.roles.push(RoleSlot {
            label,
            role: Some(role),
            state: RoleState::Runnable,
        });
    }

    pub fn next_role_index(&self) -> usize {
        self.roles.len()
    }

    fn runnable(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| match r.state {
                RoleState::Runnable => true,
                RoleState::Waiting(ch) => !self.channels[ch].inbox.is_empty(),
                _ => false,
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Steps runnable roles, picked in seeded random order, until none can
    /// make progress.
    pub fn run_roles(&mut self) {
        while !self.halted {
            let ready = self.runnable();
            if ready.is_empty() {
                break;
            }
            let i = ready[self.sched.gen_range(0..ready.len())];
            self.step_role(i);
        }
    }

    fn step_role(&mut self, i: usize) {
        let Some(mut role) = self.roles[i].role.take() else {
            return;
        };
        let result = role.step(self);
        let state = match result {
            Ok(()) => RoleState::Done,
            Err(Stop::Blocked(ch)) => {
                self.roles[i].role = Some(role);
                RoleState::Waiting(ch)
            }
            Err(Stop::Abort(why)) => RoleState::Aborted(why),
            Err(Stop::Fault(detail)) => {
                let label = self.roles[i].label.clone();
                self.contract_violation(label, detail.clone());
                RoleState::Aborted(detail)
            }
        };
        self.roles[i].state = state;
        self.sync_violations();
    }

    pub fn roles(&self) -> Vec<RoleSummary> {
        self.roles
            .iter()
            .map(|r| RoleSummary {
                label: r.label.clone(),
                state: match &r.state {
                    RoleState::Runnable => "runnable".into(),
                    RoleState::Waiting(ch) => format!("waiting on {}", self.channels[*ch].name),
                    RoleState::Done => "done".into(),
                    RoleState::Aborted(why) => format!("aborted: {why}"),
                },
            })
            .collect()
    }

    /// Drains the roles and computes the verdict.
    pub fn finish(mut self) -> RunOutcome {
        self.run_roles();
        self.sync_violations();
        let failure = self.cs.failure().cloned();
        let verdict = if let Some(v) = self.first.clone() {
            v
        } else if let Some(f) = &failure {
            RunVerdict::AssumptionFailure {
                failure: f.kind,
                detail: f.to_string(),
            }
        } else if let Some(loc) = self.deadlock.clone() {
            RunVerdict::Deadlock { location: loc }
        } else {
            RunVerdict::Ok
        };
        RunOutcome {
            verdict,
            seed: self.seed,
            protocol: self.protocol,
            assertions_checked: self.assertions_checked,
            suppressed_assertions: self.suppressed,
            ignored_faults: self.ignored_faults,
            failure,
            roles: self.roles(),
            cs: self.cs,
        }
    }
}

/// Result of a finished run, including its final crypto state.
#[derive(Debug)]
pub struct RunOutcome {
    pub verdict: RunVerdict,
    pub seed: u64,
    pub protocol: Protocol,
    pub assertions_checked: usize,
    /// Assertion failures that came after an assumption failure.
    pub suppressed_assertions: usize,
    /// Contract faults that came after an assumption failure.
    pub ignored_faults: usize,
    pub failure: Option<AssumptionFailure>,
    pub roles: Vec<RoleSummary>,
    pub cs: CryptoState,
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo {
        ch: ChannelId,
    }

    impl Role for Echo {
        fn step(&mut self, w: &mut World) -> Result<(), Stop> {
            let m = w.role_read(self.ch)?;
            w.role_write(self.ch, m)
        }
    }

    struct Leak {
        ch: ChannelId,
    }

    impl Role for Leak {
        fn step(&mut self, w: &mut World) -> Result<(), Stop> {
            let a = w.cs.to_string(b"a")?;
            let k = w.fresh(Usage::HmacKey(crate::term::HmacKeyUsage::KeyAB(
                w.term(&a)?,
                w.term(&a)?,
            )))?;
            w.role_write(self.ch, k)
        }
    }

    #[test]
    fn protocol_names_roundtrip() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
        }
        assert!("tls".parse::<Protocol>().is_err());
    }

    #[test]
    fn channel_write_then_read() {
        let mut w = World::new(Protocol::RpcCorrect, 0);
        let ch = w.new_channel("c");
        let x = w.cs.to_string(b"x").unwrap();
        w.spawn("echo".into(), Box::new(Echo { ch }));
        w.attacker_write(ch, x.clone());
        assert_eq!(w.attacker_read(ch), Some(x));
        assert_eq!(w.finish().verdict, RunVerdict::Ok);
    }

    #[test]
    fn empty_read_deadlocks() {
        let mut w = World::new(Protocol::RpcCorrect, 0);
        let ch = w.new_channel("c");
        w.spawn("echo".into(), Box::new(Echo { ch }));
        assert_eq!(w.attacker_read(ch), None);
        assert!(w.is_halted());
        let out = w.finish();
        assert_eq!(out.verdict.exit_code(), 12);
        assert_eq!(out.roles[0].state, "waiting on c");
    }

    #[test]
    fn writing_a_secret_is_a_contract_violation() {
        let mut w = World::new(Protocol::RpcCorrect, 0);
        let ch = w.new_channel("c");
        w.spawn("leak".into(), Box::new(Leak { ch }));
        let out = w.finish();
        assert!(matches!(out.verdict, RunVerdict::ContractViolation { ref location, .. } if location == "leak"));
        assert_eq!(out.verdict.exit_code(), 13);
    }

    #[test]
    fn assertion_failures_after_assumption_failure_are_suppressed() {
        let mut w = World::new(Protocol::RpcCorrect, 0);
        w.check("x", "first".into(), true);
        let k = w.cs.to_string(b"k").unwrap();
        let t = w.term(&k).unwrap();
        w.cs.register(&k, &Term::pair(t.clone(), t));
        w.check("x", "second".into(), false);
        let out = w.finish();
        assert_eq!(out.suppressed_assertions, 1);
        assert_eq!(out.assertions_checked, 2);
        assert!(matches!(
            out.verdict,
            RunVerdict::AssumptionFailure { failure: FailureKind::Collision, .. }
        ));
    }

    #[test]
    fn verdict_serializes_with_kind_tag() {
        let v = RunVerdict::AssertionFailure {
            location: "l".into(),
            assertion: "a".into(),
        };
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"kind":"assertion-failure","location":"l","assertion":"a"}"#
        );
        assert_eq!(serde_json::to_string(&RunVerdict::Ok).unwrap(), r#"{"kind":"ok"}"#);
    }
}
