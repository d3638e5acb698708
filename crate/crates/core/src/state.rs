//! The global cryptographic state: event log plus representation table, and
//! the hybrid wrappers that do concrete crypto while keeping both in step.
//!
//! A wrapper first computes its concrete result, then the symbolic term that
//! result stands for, and finally registers the pair in the table. If the
//! bytes (or the term) are already bound to something else, the symbolic
//! model's no-collision assumption has been violated: the state records a
//! sticky [`AssumptionFailure`] and leaves the table unchanged.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::backend::{self, MacBackend, RandomSource, Sha1Hmac};
use crate::codec::{pair_decode, pair_encode, CodecError, ConcreteBytes};
use crate::level::{can_hmac, can_senc, hmac_comp, Level, LevelCache};
use crate::log::Log;
use crate::term::{Event, Shape, Term, Usage, TAG_REQUEST, TAG_RESPONSE};

/// Bijection between registered byte strings and terms.
#[derive(Clone, Debug, Default)]
pub struct RepresentationTable {
    b2t: IndexMap<ConcreteBytes, Term>,
    t2b: HashMap<Term, ConcreteBytes>,
}

impl RepresentationTable {
    pub fn term_of(&self, b: &ConcreteBytes) -> Option<&Term> {
        self.b2t.get(b)
    }

    pub fn bytes_of(&self, t: &Term) -> Option<&ConcreteBytes> {
        self.t2b.get(t)
    }

    pub fn len(&self) -> usize {
        self.b2t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b2t.is_empty()
    }

    /// Entries in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&ConcreteBytes, &Term)> {
        self.b2t.iter()
    }

    /// Every entry of `self` is present, unchanged, in `other`.
    pub fn is_subset_of(&self, other: &RepresentationTable) -> bool {
        self.b2t.iter().all(|(b, t)| other.b2t.get(b) == Some(t))
            && self.t2b.iter().all(|(t, b)| other.t2b.get(t) == Some(b))
    }

    fn insert(&mut self, b: ConcreteBytes, t: Term) {
        self.t2b.insert(t.clone(), b.clone());
        self.b2t.insert(b, t);
    }

    /// Structural validity against `log`; returns one message per broken
    /// clause.
    pub fn check_valid(&self, log: &Log, cache: &mut LevelCache) -> Vec<String> {
        let mut out = Vec::new();
        if self.b2t.len() != self.t2b.len() {
            out.push(format!(
                "table domains differ: {} byte strings, {} terms",
                self.b2t.len(),
                self.t2b.len()
            ));
        }
        for (b, t) in &self.b2t {
            if self.t2b.get(t) != Some(b) {
                out.push(format!("bijection broken at 0x{}", b.to_hex()));
            }
            if let Some(lit) = t.as_literal() {
                if lit != b.as_slice() {
                    out.push(format!("literal {t} registered for 0x{}", b.to_hex()));
                }
            }
            if !cache.level(Level::High, t, log) {
                out.push(format!("registered term {t} is not High"));
            }
        }
        for (t, b) in &self.t2b {
            if self.b2t.get(b) != Some(t) {
                out.push(format!("bijection broken at term {t}"));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    /// One byte string stands for two distinct terms.
    Collision,
    /// The attacker supplied bytes of a term that is not Low.
    LuckyGuess,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::Collision => "collision",
            FailureKind::LuckyGuess => "lucky-guess",
        })
    }
}

/// Record of the first violated symbolic assumption in a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssumptionFailure {
    pub kind: FailureKind,
    pub op: &'static str,
    pub bytes: ConcreteBytes,
    pub existing: Term,
    pub attempted: Option<Term>,
}

impl fmt::Display for AssumptionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} in {} on 0x{}: table holds {}",
            self.kind,
            self.op,
            self.bytes.to_hex(),
            self.existing
        )?;
        if let Some(t) = &self.attempted {
            write!(f, ", attempted {t}")?;
        }
        Ok(())
    }
}

/// A broken state invariant found by the audit hook or a wrapper's internal
/// check. Outside an assumption failure this is a bug in the runtime.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InvariantViolation {
    pub op: &'static str,
    pub detail: String,
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.op, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WrapperError {
    /// The caller did not establish the wrapper's precondition.
    #[error("{op}: contract violation: {detail}")]
    Contract { op: &'static str, detail: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("{0}: decryption failed")]
    Decryption(&'static str),
}

impl WrapperError {
    pub fn is_contract_violation(&self) -> bool {
        matches!(self, WrapperError::Contract { .. })
    }

    fn contract(op: &'static str, detail: impl Into<String>) -> WrapperError {
        WrapperError::Contract {
            op,
            detail: detail.into(),
        }
    }
}

/// Outcome of [`CryptoState::register`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Registration {
    Inserted,
    AlreadyPresent,
    Collision,
}

/// Log, table and assumption-failure flag, plus the MAC backend in use.
pub struct CryptoState {
    log: Log,
    table: RepresentationTable,
    failure: Option<AssumptionFailure>,
    violations: Vec<InvariantViolation>,
    mac: Arc<dyn MacBackend>,
    cache: LevelCache,
    audit: bool,
}

impl fmt::Debug for CryptoState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CryptoState")
            .field("events", &self.log.len())
            .field("table", &self.table.len())
            .field("failure", &self.failure)
            .field("mac", &self.mac)
            .finish()
    }
}

impl Default for CryptoState {
    fn default() -> CryptoState {
        CryptoState::init()
    }
}

impl CryptoState {
    /// Empty log and table, then the two protocol tags logged as attacker
    /// guesses and registered as literals.
    ///
    /// The audit hook is on in debug builds.
    pub fn init() -> CryptoState {
        let mut cs = CryptoState {
            log: Log::new(),
            table: RepresentationTable::default(),
            failure: None,
            violations: Vec::new(),
            mac: Arc::new(Sha1Hmac),
            cache: LevelCache::new(),
            audit: cfg!(debug_assertions),
        };
        for tag in [TAG_REQUEST, TAG_RESPONSE] {
            let t = Term::literal(tag);
            cs.log.add(Event::New(t.clone(), Usage::AttackerGuess));
            cs.table.insert(ConcreteBytes::from(tag), t);
        }
        cs
    }

    pub fn with_mac_backend(mut self, mac: Arc<dyn MacBackend>) -> CryptoState {
        self.mac = mac;
        self
    }

    pub fn with_audit(mut self, on: bool) -> CryptoState {
        self.audit = on;
        self
    }

    pub fn log(&self) -> &Log {
        &self.log
    }

    pub fn table(&self) -> &RepresentationTable {
        &self.table
    }

    pub fn failure(&self) -> Option<&AssumptionFailure> {
        self.failure.as_ref()
    }

    pub fn violations(&self) -> &[InvariantViolation] {
        &self.violations
    }

    pub fn audit_enabled(&self) -> bool {
        self.audit
    }

    pub fn level(&mut self, l: Level, t: &Term) -> bool {
        self.cache.level(l, t, &self.log)
    }

    /// Level of the term registered for `b`; false if `b` is unregistered.
    pub fn bytes_level(&mut self, l: Level, b: &ConcreteBytes) -> bool {
        match self.table.term_of(b).cloned() {
            Some(t) => self.level(l, &t),
            None => false,
        }
    }

    pub fn term_of(&self, b: &ConcreteBytes) -> Option<&Term> {
        self.table.term_of(b)
    }

    fn lookup(&self, op: &'static str, b: &ConcreteBytes) -> Result<Term, WrapperError> {
        self.table
            .term_of(b)
            .cloned()
            .ok_or_else(|| WrapperError::contract(op, format!("0x{} is not registered", b.to_hex())))
    }

    fn assume_failed(&mut self, failure: AssumptionFailure) {
        if self.failure.is_none() {
            self.failure = Some(failure);
        }
    }

    fn violation(&mut self, op: &'static str, detail: String) {
        self.violations.push(InvariantViolation { op, detail });
    }

    /// Runs `f` and, when auditing a failure-free state, checks that the log
    /// stayed good, both log and table only grew, and the table is still a
    /// valid bijection of High terms.
    fn audited<T>(&mut self, op: &'static str, f: impl FnOnce(&mut CryptoState) -> T) -> T {
        let snapshot =
            (self.audit && self.failure.is_none()).then(|| (self.log.clone(), self.table.clone()));
        let out = f(self);
        if let Some((old_log, old_table)) = snapshot {
            if self.failure.is_none() {
                self.audit_against(op, &old_log, &old_table);
            }
        }
        out
    }

    fn audit_against(&mut self, op: &'static str, old_log: &Log, old_table: &RepresentationTable) {
        if !self.log.is_good() {
            self.violation(op, "log is not good".into());
        }
        if !old_log.is_subset_of(&self.log) {
            self.violation(op, "log shrank".into());
        }
        if !old_table.is_subset_of(&self.table) {
            self.violation(op, "table entries changed or disappeared".into());
        }
        for detail in self.table.check_valid(&self.log, &mut self.cache) {
            self.violation(op, detail);
        }
    }

    /// Runs the full invariant audit against the current state, regardless of
    /// the audit flag.
    pub fn audit_now(&mut self) -> Vec<String> {
        let mut out = self.table.check_valid(&self.log, &mut self.cache);
        if !self.log.is_good() {
            out.push("log is not good".into());
        }
        out
    }

    /// Binds `b` to `t`, or records a collision if either side is already
    /// bound to something else.
    pub fn register(&mut self, b: &ConcreteBytes, t: &Term) -> Registration {
        self.register_in("register", b, t)
    }

    fn register_in(&mut self, op: &'static str, b: &ConcreteBytes, t: &Term) -> Registration {
        let by_bytes = self.table.term_of(b).cloned();
        let by_term = self.table.bytes_of(t).cloned();
        match (by_bytes, by_term) {
            (Some(existing), _) if existing == *t => Registration::AlreadyPresent,
            (None, None) => {
                if let Some(lit) = t.as_literal() {
                    if lit != b.as_slice() {
                        self.violation(op, format!("literal {t} offered for 0x{}", b.to_hex()));
                        return Registration::Collision;
                    }
                }
                if self.failure.is_none() && !self.level(Level::High, t) {
                    self.violation(op, format!("registering {t}, which is not High"));
                }
                self.table.insert(b.clone(), t.clone());
                Registration::Inserted
            }
            (existing, _) => {
                self.assume_failed(AssumptionFailure {
                    kind: FailureKind::Collision,
                    op,
                    bytes: b.clone(),
                    existing: existing.unwrap_or_else(|| t.clone()),
                    attempted: Some(t.clone()),
                });
                Registration::Collision
            }
        }
    }

    /// Appends `e` to the log. `New` events must keep the log good.
    pub fn log_event(&mut self, e: Event) -> Result<(), WrapperError> {
        self.audited("log_event", |cs| {
            if let Event::New(t, u) = &e {
                if !t.is_literal() {
                    return Err(WrapperError::contract("log_event", format!("New on non-literal {t}")));
                }
                if cs.log.usages_of(t).iter().any(|u0| u0 != u) {
                    return Err(WrapperError::contract(
                        "log_event",
                        format!("{t} already has a different usage"),
                    ));
                }
            }
            cs.log.add(e);
            Ok(())
        })
    }

    /// Converts attacker-chosen bytes into a registered value.
    ///
    /// Fresh bytes become a Low literal with an `AttackerGuess` event. Bytes
    /// already registered to a Low term reuse that term; bytes registered to
    /// a term that is not Low are a lucky guess.
    #[allow(clippy::wrong_self_convention)]
    pub fn to_string(&mut self, raw: &[u8]) -> Result<ConcreteBytes, WrapperError> {
        self.audited("to_string", |cs| cs.register_raw(raw))
    }

    fn register_raw(&mut self, raw: &[u8]) -> Result<ConcreteBytes, WrapperError> {
        if raw.is_empty() {
            return Err(WrapperError::contract("to_string", "empty input"));
        }
        let b = ConcreteBytes::from(raw);
        if let Some(t) = self.table.term_of(&b).cloned() {
            if !self.level(Level::Low, &t) {
                self.assume_failed(AssumptionFailure {
                    kind: FailureKind::LuckyGuess,
                    op: "to_string",
                    bytes: b.clone(),
                    existing: t,
                    attempted: Some(Term::literal(raw)),
                });
            }
            return Ok(b);
        }
        let t = Term::literal(raw);
        self.log.add(Event::New(t.clone(), Usage::AttackerGuess));
        self.register_in("to_string", &b, &t);
        Ok(b)
    }

    /// Draws `nbytes` fresh bytes for a key or secret with `usage`.
    pub fn fresh(
        &mut self,
        usage: Usage,
        nbytes: usize,
        src: &mut dyn RandomSource,
    ) -> Result<ConcreteBytes, WrapperError> {
        self.audited("fresh", |cs| {
            if usage == Usage::AttackerGuess {
                return Err(WrapperError::contract(
                    "fresh",
                    "attacker guesses go through to_string",
                ));
            }
            let b = backend::random_bytes(src, nbytes);
            let t = Term::literal(b.as_slice());
            if let Some(existing) = cs.table.term_of(&b).cloned() {
                cs.assume_failed(AssumptionFailure {
                    kind: FailureKind::Collision,
                    op: "fresh",
                    bytes: b.clone(),
                    existing,
                    attempted: Some(t),
                });
                return Ok(b);
            }
            cs.log.add(Event::New(t.clone(), usage));
            cs.register_in("fresh", &b, &t);
            Ok(b)
        })
    }

    pub fn hmac(&mut self, k: &ConcreteBytes, m: &ConcreteBytes) -> Result<ConcreteBytes, WrapperError> {
        self.audited("hmac", |cs| {
            let tk = cs.lookup("hmac", k)?;
            let tm = cs.lookup("hmac", m)?;
            let allowed = can_hmac(&tk, &tm, &cs.log)
                || (cs.level(Level::Low, &tk) && cs.level(Level::Low, &tm));
            if !allowed {
                return Err(WrapperError::contract(
                    "hmac",
                    format!("neither the payload property nor Low/Low holds for key {tk}, message {tm}"),
                ));
            }
            let out = ConcreteBytes::new(cs.mac.mac(k.as_slice(), m.as_slice()));
            cs.register_in("hmac", &out, &Term::hmac(tk, tm));
            Ok(out)
        })
    }

    /// Recomputes the MAC of `m` under `k` and compares it with `mac`.
    ///
    /// On a match the registered term of `mac` must be `Hmac(k, m)`
    /// (otherwise a collision is recorded), and for keys with an HMAC usage
    /// the inversion property `can_hmac ∨ hmac_comp` is re-checked.
    pub fn hmac_verify(
        &mut self,
        k: &ConcreteBytes,
        m: &ConcreteBytes,
        mac: &ConcreteBytes,
    ) -> Result<bool, WrapperError> {
        self.audited("hmac_verify", |cs| {
            let tk = cs.lookup("hmac_verify", k)?;
            let tm = cs.lookup("hmac_verify", m)?;
            let tmac = cs.lookup("hmac_verify", mac)?;
            let computed = cs.mac.mac(k.as_slice(), m.as_slice());
            if computed != mac.as_slice() {
                return Ok(false);
            }
            let expected = Term::hmac(tk.clone(), tm.clone());
            if tmac != expected {
                cs.assume_failed(AssumptionFailure {
                    kind: FailureKind::Collision,
                    op: "hmac_verify",
                    bytes: mac.clone(),
                    existing: tmac,
                    attempted: Some(expected),
                });
                return Ok(true);
            }
            let has_hmac_usage = cs.log.usages_of(&tk).iter().any(|u| matches!(u, Usage::HmacKey(_)));
            if cs.failure.is_none()
                && has_hmac_usage
                && !(can_hmac(&tk, &tm, &cs.log) || hmac_comp(&tk, &cs.log))
            {
                cs.violation(
                    "hmac_verify",
                    format!("verified {expected} but neither can_hmac nor hmac_comp holds"),
                );
            }
            Ok(true)
        })
    }

    pub fn pair(&mut self, b1: &ConcreteBytes, b2: &ConcreteBytes) -> Result<ConcreteBytes, WrapperError> {
        self.audited("pair", |cs| {
            let t1 = cs.lookup("pair", b1)?;
            let t2 = cs.lookup("pair", b2)?;
            let out = pair_encode(b1, b2)?;
            cs.register_in("pair", &out, &Term::pair(t1, t2));
            Ok(out)
        })
    }

    /// Splits a pair encoding.
    ///
    /// The term of `b` must be a `Pair`, or be Low. A Low non-pair whose
    /// bytes happen to parse as a pair yields attacker-known component
    /// literals, and the byte string then denotes two terms: a collision.
    pub fn destruct(&mut self, b: &ConcreteBytes) -> Result<(ConcreteBytes, ConcreteBytes), WrapperError> {
        self.audited("destruct", |cs| {
            let t = cs.lookup("destruct", b)?;
            if let Shape::Pair(t1, t2) = t.shape() {
                let (x, y) = pair_decode(b)?;
                cs.register_in("destruct", &x, t1);
                cs.register_in("destruct", &y, t2);
                return Ok((x, y));
            }
            if !cs.level(Level::Low, &t) {
                return Err(WrapperError::contract(
                    "destruct",
                    format!("{t} is neither a pair nor Low"),
                ));
            }
            let (x, y) = pair_decode(b)?;
            if x.is_empty() || y.is_empty() {
                return Err(CodecError::MalformedPair("empty component").into());
            }
            cs.register_raw(x.as_slice())?;
            cs.register_raw(y.as_slice())?;
            let attempted = match (cs.table.term_of(&x), cs.table.term_of(&y)) {
                (Some(tx), Some(ty)) => Some(Term::pair(tx.clone(), ty.clone())),
                _ => None,
            };
            cs.assume_failed(AssumptionFailure {
                kind: FailureKind::Collision,
                op: "destruct",
                bytes: b.clone(),
                existing: t,
                attempted,
            });
            Ok((x, y))
        })
    }

    pub fn senc(&mut self, k: &ConcreteBytes, p: &ConcreteBytes) -> Result<ConcreteBytes, WrapperError> {
        self.audited("senc", |cs| {
            let tk = cs.lookup("senc", k)?;
            let tp = cs.lookup("senc", p)?;
            let allowed = can_senc(&tk, &tp, &cs.log)
                || (cs.level(Level::Low, &tk) && cs.level(Level::Low, &tp));
            if !allowed {
                return Err(WrapperError::contract(
                    "senc",
                    format!("neither the payload property nor Low/Low holds for key {tk}, plaintext {tp}"),
                ));
            }
            let out = ConcreteBytes::new(backend::senc(k.as_slice(), p.as_slice()));
            cs.register_in("senc", &out, &Term::senc(tk, tp));
            Ok(out)
        })
    }

    pub fn sdec(&mut self, k: &ConcreteBytes, c: &ConcreteBytes) -> Result<ConcreteBytes, WrapperError> {
        self.audited("sdec", |cs| {
            let tk = cs.lookup("sdec", k)?;
            let tc = cs.lookup("sdec", c)?;
            let p = backend::sdec(k.as_slice(), c.as_slice())
                .map(ConcreteBytes::new)
                .map_err(|_| WrapperError::Decryption("sdec"))?;
            match tc.shape() {
                Shape::SEnc(k2, tp) if *k2 == tk => {
                    cs.register_in("sdec", &p, tp);
                    Ok(p)
                }
                _ => {
                    // Authenticated under k, yet not registered as an
                    // encryption under k.
                    let attempted = cs.table.term_of(&p).map(|tp| Term::senc(tk.clone(), tp.clone()));
                    cs.assume_failed(AssumptionFailure {
                        kind: FailureKind::Collision,
                        op: "sdec",
                        bytes: c.clone(),
                        existing: tc,
                        attempted,
                    });
                    Err(WrapperError::Decryption("sdec"))
                }
            }
        })
    }

    /// Text dump: events in logging order, then table entries in
    /// registration order.
    pub fn dump(&self) -> String {
        let mut out = String::from("# dyrun state dump\n");
        for e in self.log.iter() {
            let _ = writeln!(out, "event {e}");
        }
        for (b, t) in self.table.iter() {
            let _ = writeln!(out, "entry {} {t}", b.to_hex());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{tag_request, HmacKeyUsage};

    fn cb(s: &str) -> ConcreteBytes {
        ConcreteBytes::from(s.as_bytes())
    }

    struct Repeat(u8);
    impl RandomSource for Repeat {
        fn fill(&mut self, buf: &mut [u8]) {
            buf.fill(self.0);
        }
    }

    #[derive(Debug)]
    struct ConstMac;
    impl MacBackend for ConstMac {
        fn mac(&self, _k: &[u8], _m: &[u8]) -> Vec<u8> {
            vec![0x5a]
        }
    }

    fn key_ab(cs: &mut CryptoState, a: &ConcreteBytes, b: &ConcreteBytes) -> ConcreteBytes {
        let usage = Usage::HmacKey(HmacKeyUsage::KeyAB(
            cs.term_of(a).unwrap().clone(),
            cs.term_of(b).unwrap().clone(),
        ));
        cs.fresh(usage, 16, &mut crate::backend::SeededSource::new(3)).unwrap()
    }

    #[test]
    fn init_registers_tags() {
        let mut cs = CryptoState::init();
        assert_eq!(cs.log().len(), 2);
        assert_eq!(cs.term_of(&cb("1")), Some(&tag_request()));
        assert!(cs.level(Level::Low, &tag_request()));
        assert!(cs.audit_now().is_empty());
    }

    #[test]
    fn register_fresh_idempotent_and_collision() {
        let mut cs = CryptoState::init();
        let b = cb("hello");
        let t = Term::literal(b"hello".as_slice());
        cs.log_event(Event::New(t.clone(), Usage::AttackerGuess)).unwrap();
        assert_eq!(cs.register(&b, &t), Registration::Inserted);
        assert_eq!(cs.register(&b, &t), Registration::AlreadyPresent);
        assert!(cs.failure().is_none());
        let other = Term::pair(tag_request(), tag_request());
        assert_eq!(cs.register(&b, &other), Registration::Collision);
        assert_eq!(cs.failure().unwrap().kind, FailureKind::Collision);
        assert_eq!(cs.term_of(&b), Some(&t));
    }

    #[test]
    fn to_string_semantics() {
        let mut cs = CryptoState::init();
        let alice = cs.to_string(b"Alice").unwrap();
        let n = cs.log().len();
        assert!(cs.bytes_level(Level::Low, &alice));
        assert_eq!(cs.to_string(b"Alice").unwrap(), alice);
        assert_eq!(cs.log().len(), n);
        assert!(cs.to_string(b"").unwrap_err().is_contract_violation());

        let bob = cs.to_string(b"Bob").unwrap();
        let k = key_ab(&mut cs, &alice, &bob);
        assert!(cs.failure().is_none());
        cs.to_string(k.as_slice()).unwrap();
        assert_eq!(cs.failure().unwrap().kind, FailureKind::LuckyGuess);
    }

    #[test]
    fn to_string_reuses_low_non_literal() {
        let mut cs = CryptoState::init();
        let a = cs.to_string(b"a").unwrap();
        let p = cs.pair(&a, &a).unwrap();
        let n = cs.log().len();
        assert_eq!(cs.to_string(p.as_slice()).unwrap(), p);
        assert_eq!(cs.log().len(), n);
        assert!(cs.failure().is_none());
    }

    #[test]
    fn hmac_contract() {
        let mut cs = CryptoState::init();
        let alice = cs.to_string(b"Alice").unwrap();
        let bob = cs.to_string(b"Bob").unwrap();
        let req = cs.to_string(b"Request").unwrap();
        let k = key_ab(&mut cs, &alice, &bob);
        let m = cs.pair(&cb("1"), &req).unwrap();
        let err = cs.hmac(&k, &m).unwrap_err();
        assert!(err.is_contract_violation());

        let ta = cs.term_of(&alice).unwrap().clone();
        let tb = cs.term_of(&bob).unwrap().clone();
        let treq = cs.term_of(&req).unwrap().clone();
        cs.log_event(Event::Request(ta, tb, treq.clone())).unwrap();
        let mac = cs.hmac(&k, &m).unwrap();
        assert_eq!(mac.len(), 20);
        let tk = cs.term_of(&k).unwrap().clone();
        assert_eq!(
            cs.term_of(&mac),
            Some(&Term::hmac(tk, Term::pair(tag_request(), treq)))
        );
        assert!(cs.hmac_verify(&k, &m, &mac).unwrap());
        assert!(!cs.hmac_verify(&k, &req, &mac).unwrap());

        // attacker-style MAC with Low key and payload
        let ak = cs.to_string(b"attacker key").unwrap();
        assert!(cs.hmac(&ak, &req).is_ok());
        assert!(cs.violations().is_empty(), "{:?}", cs.violations());
        assert!(cs.failure().is_none());
    }

    #[test]
    fn pair_and_destruct() {
        let mut cs = CryptoState::init();
        let x = cs.to_string(b"x").unwrap();
        let y = cs.to_string(b"yy").unwrap();
        let p = cs.pair(&x, &y).unwrap();
        let tp = cs.term_of(&p).unwrap().clone();
        assert_eq!(
            tp,
            Term::pair(cs.term_of(&x).unwrap().clone(), cs.term_of(&y).unwrap().clone())
        );
        assert_eq!(cs.destruct(&p).unwrap(), (x.clone(), y));
        assert!(matches!(cs.destruct(&x), Err(WrapperError::Codec(_))));
        assert!(cs.failure().is_none());
    }

    #[test]
    fn destruct_of_pair_shaped_literal_is_a_collision() {
        let mut cs = CryptoState::init();
        let raw = [0, 0, 0, 1, b'a', b'b'];
        let b = cs.to_string(&raw).unwrap();
        let (x, y) = cs.destruct(&b).unwrap();
        assert_eq!((x.as_slice(), y.as_slice()), (&b"a"[..], &b"b"[..]));
        assert_eq!(cs.failure().unwrap().kind, FailureKind::Collision);
    }

    #[test]
    fn destruct_of_secret_non_pair_is_a_contract_violation() {
        let mut cs = CryptoState::init();
        let a = cs.to_string(b"a").unwrap();
        let k = key_ab(&mut cs, &a, &a);
        assert!(cs.destruct(&k).unwrap_err().is_contract_violation());
    }

    #[test]
    fn fresh_rejects_attacker_guess_and_detects_repeats() {
        let mut cs = CryptoState::init();
        assert!(cs
            .fresh(Usage::AttackerGuess, 16, &mut Repeat(1))
            .unwrap_err()
            .is_contract_violation());
        let a = cs.to_string(b"a").unwrap();
        let ta = cs.term_of(&a).unwrap().clone();
        let usage = Usage::HmacKey(HmacKeyUsage::KeyAB(ta.clone(), ta));
        let k1 = cs.fresh(usage.clone(), 16, &mut Repeat(9)).unwrap();
        assert!(cs.failure().is_none());
        assert!(!cs.bytes_level(Level::Low, &k1));
        let k2 = cs.fresh(usage, 16, &mut Repeat(9)).unwrap();
        assert_eq!(k1, k2);
        assert_eq!(cs.failure().unwrap().kind, FailureKind::Collision);
    }

    #[test]
    fn constant_mac_backend_collides() {
        let mut cs = CryptoState::init().with_mac_backend(Arc::new(ConstMac));
        let k = cs.to_string(b"k").unwrap();
        let m1 = cs.to_string(b"m1").unwrap();
        let m2 = cs.to_string(b"m2").unwrap();
        let h1 = cs.hmac(&k, &m1).unwrap();
        assert!(cs.failure().is_none());
        let h2 = cs.hmac(&k, &m2).unwrap();
        assert_eq!(h1, h2);
        let f = cs.failure().unwrap();
        assert_eq!(f.kind, FailureKind::Collision);
        assert_eq!(f.op, "hmac");
    }

    #[test]
    fn senc_and_sdec() {
        let mut cs = CryptoState::init();
        let k = cs.to_string(b"some key").unwrap();
        let p = cs.to_string(b"plain").unwrap();
        let c = cs.senc(&k, &p).unwrap();
        assert_eq!(cs.sdec(&k, &c).unwrap(), p);
        let k2 = cs.to_string(b"other key").unwrap();
        assert_eq!(cs.sdec(&k2, &c).unwrap_err(), WrapperError::Decryption("sdec"));

        let a = cs.to_string(b"a").unwrap();
        let ta = cs.term_of(&a).unwrap().clone();
        let prin = cs
            .fresh(
                Usage::SEncKey(crate::term::SEncKeyUsage::PrinKey(ta)),
                16,
                &mut crate::backend::SeededSource::new(5),
            )
            .unwrap();
        assert!(cs.senc(&prin, &p).unwrap_err().is_contract_violation());
        assert!(cs.failure().is_none());
    }

    #[test]
    fn log_event_rules() {
        let mut cs = CryptoState::init();
        let e = Event::Bad(Term::literal(b"a".as_slice()));
        cs.log_event(e.clone()).unwrap();
        cs.log_event(e.clone()).unwrap();
        assert!(cs.log().contains(&e));
        assert!(cs
            .log_event(Event::New(tag_request(), Usage::HmacKey(HmacKeyUsage::KeyAB(
                tag_request(),
                tag_request()
            ))))
            .unwrap_err()
            .is_contract_violation());
    }

    #[test]
    fn audit_catches_corrupted_table() {
        let mut cs = CryptoState::init().with_audit(true);
        // A term with no supporting New event is not High.
        cs.table
            .insert(cb("ghost"), Term::literal(b"ghost".as_slice()));
        let a = cs.to_string(b"a").unwrap();
        cs.pair(&a, &a).unwrap();
        assert!(cs
            .violations()
            .iter()
            .any(|v| v.detail.contains("is not High")));
    }

    #[test]
    fn dump_lists_events_and_entries() {
        let cs = CryptoState::init();
        let d = cs.dump();
        assert!(d.contains("event New(Literal(0x31),AttackerGuess)"));
        assert!(d.contains("entry 32 Literal(0x32)"));
    }
}
