//! Decision procedure for the `Level` predicate.
//!
//! The nine derivation rules are syntax-directed on the term's head
//! constructor: a literal is decided by its `New` events, and every other
//! constructor only has premises on its immediate subterms plus log
//! predicates. Structural recursion therefore terminates, and existential
//! witnesses (principals, requests, nonces) are recovered by pattern-matching
//! the payload and checking log membership rather than by search.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::log::Log;
use crate::term::{
    request_payload, response_payload, unbound_response_payload, unpair4, Event, HmacKeyUsage,
    SEncKeyUsage, Shape, Term, Usage,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Known to, or derivable by, the attacker.
    Low,
    /// Data honest principals may hold.
    High,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Low => "Low",
            Level::High => "High",
        })
    }
}

/// Payload property of an HMAC key usage.
fn hmac_payload(hu: &HmacKeyUsage, m: &Term, log: &Log) -> bool {
    let (a, b) = hu.principals();
    if let Some(req) = request_payload(m) {
        if log.contains(&Event::Request(a.clone(), b.clone(), req.clone())) {
            return true;
        }
    }
    match hu {
        HmacKeyUsage::KeyAB(..) | HmacKeyUsage::SessionKey(..) => match response_payload(m) {
            Some((req, resp)) => log.contains(&Event::Response(
                a.clone(),
                b.clone(),
                req.clone(),
                resp.clone(),
            )),
            None => false,
        },
        HmacKeyUsage::KeyABUnbound(..) => match unbound_response_payload(m) {
            // The request is existentially quantified and not determined by
            // the payload, so scan the logged responses.
            Some(resp) => log.iter().any(|e| {
                matches!(e, Event::Response(ea, eb, _, er) if ea == a && eb == b && er == resp)
            }),
            None => false,
        },
    }
}

/// `k` has an HMAC key usage whose payload property holds for `m`.
pub fn can_hmac(k: &Term, m: &Term, log: &Log) -> bool {
    log.usages_of(k).iter().any(|u| match u {
        Usage::HmacKey(hu) => hmac_payload(hu, m, log),
        _ => false,
    })
}

fn session_key(a: &Term, b: &Term, k: &Term, log: &Log) -> bool {
    log.contains(&Event::New(
        k.clone(),
        Usage::HmacKey(HmacKeyUsage::SessionKey(a.clone(), b.clone())),
    ))
}

/// Payload property of the principal key of `q`.
fn prin_key_payload(q: &Term, p: &Term, log: &Log) -> bool {
    let Some((x1, x2, x3, x4)) = unpair4(p) else {
        return false;
    };
    // Ticket issued to q as initiator: (q, b, kqb, nq).
    let as_initiator = x1 == q
        && x2 != q
        && session_key(q, x2, x3, log)
        && log.contains(&Event::Initiator(q.clone(), x4.clone(), x3.clone(), x2.clone()));
    // Ticket issued to q as responder: (a, q, kaq, nq).
    let as_responder = x2 == q
        && x1 != q
        && session_key(x1, q, x3, log)
        && log.contains(&Event::Responder(q.clone(), x4.clone(), x3.clone(), x1.clone()));
    as_initiator || as_responder
}

/// `k` is some principal's long-term key and `p` satisfies that key's payload
/// property.
pub fn can_senc(k: &Term, p: &Term, log: &Log) -> bool {
    log.usages_of(k).iter().any(|u| match u {
        Usage::SEncKey(SEncKeyUsage::PrinKey(q)) => prin_key_payload(q, p, log),
        _ => false,
    })
}

/// Some HMAC key usage of `k` names a principal with a logged `Bad` event.
pub fn hmac_comp(k: &Term, log: &Log) -> bool {
    log.usages_of(k).iter().any(|u| match u {
        Usage::HmacKey(hu) => {
            let (a, b) = hu.principals();
            log.has_bad(a) || log.has_bad(b)
        }
        _ => false,
    })
}

pub fn senc_comp(k: &Term, log: &Log) -> bool {
    log.usages_of(k).iter().any(|u| match u {
        Usage::SEncKey(SEncKeyUsage::PrinKey(p)) => log.has_bad(p),
        _ => false,
    })
}

/// Compromise condition for nonces; no nonce usage exists, so never holds.
pub fn nonce_comp(_t: &Term, _log: &Log) -> bool {
    false
}

fn literal_level(l: Level, t: &Term, log: &Log) -> bool {
    log.usages_of(t).iter().any(|u| match u {
        Usage::AttackerGuess => true,
        Usage::Nonce(_) => l == Level::High || nonce_comp(t, log),
        Usage::HmacKey(_) => l == Level::High || hmac_comp(t, log),
        Usage::SEncKey(_) => l == Level::High || senc_comp(t, log),
    })
}

struct Decider<'a> {
    log: &'a Log,
    memo: &'a mut HashMap<(Level, Term), bool>,
}

impl Decider<'_> {
    fn level(&mut self, l: Level, t: &Term) -> bool {
        if let Some(&v) = self.memo.get(&(l, t.clone())) {
            return v;
        }
        let v = match t.shape() {
            Shape::Literal(_) => literal_level(l, t, self.log),
            Shape::Pair(a, b) => self.level(l, a) && self.level(l, b),
            Shape::Hmac(k, m) => {
                (can_hmac(k, m, self.log) && self.level(l, m))
                    || (self.level(Level::Low, k) && self.level(Level::Low, m))
            }
            // The plaintext may be at any level; High suffices because Low
            // implies High.
            Shape::SEnc(k, p) => {
                (can_senc(k, p, self.log) && self.level(Level::High, p))
                    || (self.level(Level::Low, k) && self.level(Level::Low, p))
            }
        };
        self.memo.insert((l, t.clone()), v);
        v
    }
}

/// Decides whether `Level l t` is derivable over `log`.
///
/// The rules are only meaningful for good logs, but the procedure is total.
pub fn level(l: Level, t: &Term, log: &Log) -> bool {
    let mut memo = HashMap::new();
    Decider {
        log,
        memo: &mut memo,
    }
    .level(l, t)
}

/// Memo table for level queries against one evolving log.
///
/// Entries are valid only for the exact `(log id, version)` they were
/// computed against; any other log state clears the table.
#[derive(Debug, Default)]
pub struct LevelCache {
    key: Option<(u64, u64)>,
    memo: HashMap<(Level, Term), bool>,
}

impl LevelCache {
    pub fn new() -> LevelCache {
        LevelCache::default()
    }

    pub fn level(&mut self, l: Level, t: &Term, log: &Log) -> bool {
        let key = (log.id(), log.version());
        if self.key != Some(key) {
            self.memo.clear();
            self.key = Some(key);
        }
        Decider {
            log,
            memo: &mut self.memo,
        }
        .level(l, t)
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}

/// Name of a derivation rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    AttackerGuess,
    Nonce,
    HmacKey,
    SEncKey,
    Pair,
    Hmac,
    HmacLow,
    SEnc,
    SEncLow,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::AttackerGuess => "attacker-guess",
            Rule::Nonce => "nonce",
            Rule::HmacKey => "hmac-key",
            Rule::SEncKey => "senc-key",
            Rule::Pair => "pair",
            Rule::Hmac => "hmac",
            Rule::HmacLow => "hmac-low",
            Rule::SEnc => "senc",
            Rule::SEncLow => "senc-low",
        })
    }
}

/// A derivation tree for one `Level` judgement. Debug output only.
#[derive(Clone, Debug)]
pub struct Derivation {
    pub rule: Rule,
    pub level: Level,
    pub term: Term,
    /// Side condition discharged against the log, if any.
    pub side: Option<String>,
    pub premises: Vec<Derivation>,
}

impl Derivation {
    fn render(&self, depth: usize, out: &mut String) {
        use std::fmt::Write;
        let _ = write!(
            out,
            "{:indent$}[{}] {} {}",
            "",
            self.rule,
            self.level,
            self.term,
            indent = depth * 2
        );
        if let Some(side) = &self.side {
            let _ = write!(out, "  ({side})");
        }
        out.push('\n');
        for p in &self.premises {
            p.render(depth + 1, out);
        }
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.render(0, &mut s);
        f.write_str(&s)
    }
}

/// Builds a derivation of `Level l t` if one exists.
pub fn explain(l: Level, t: &Term, log: &Log) -> Option<Derivation> {
    let node = |rule, side: Option<String>, premises| Derivation {
        rule,
        level: l,
        term: t.clone(),
        side,
        premises,
    };
    match t.shape() {
        Shape::Literal(_) => {
            for u in log.usages_of(t) {
                let found = match u {
                    Usage::AttackerGuess => Some((Rule::AttackerGuess, None)),
                    Usage::Nonce(nu) => match *nu {},
                    Usage::HmacKey(hu) if l == Level::High || hmac_comp(t, log) => Some((
                        Rule::HmacKey,
                        Some(match l {
                            Level::High => format!("usage {u}"),
                            Level::Low => {
                                let (a, b) = hu.principals();
                                let bad = if log.has_bad(a) { a } else { b };
                                format!("usage {u}; compromised by Bad({bad})")
                            }
                        }),
                    )),
                    Usage::SEncKey(SEncKeyUsage::PrinKey(p))
                        if l == Level::High || senc_comp(t, log) =>
                    {
                        Some((
                            Rule::SEncKey,
                            Some(match l {
                                Level::High => format!("usage {u}"),
                                Level::Low => format!("usage {u}; compromised by Bad({p})"),
                            }),
                        ))
                    }
                    _ => None,
                };
                if let Some((rule, side)) = found {
                    return Some(node(rule, side, vec![]));
                }
            }
            None
        }
        Shape::Pair(a, b) => Some(node(
            Rule::Pair,
            None,
            vec![explain(l, a, log)?, explain(l, b, log)?],
        )),
        Shape::Hmac(k, m) => {
            if can_hmac(k, m, log) {
                if let Some(dm) = explain(l, m, log) {
                    return Some(node(Rule::Hmac, Some("payload property holds".into()), vec![dm]));
                }
            }
            let dk = explain(Level::Low, k, log)?;
            let dm = explain(Level::Low, m, log)?;
            Some(node(Rule::HmacLow, None, vec![dk, dm]))
        }
        Shape::SEnc(k, p) => {
            if can_senc(k, p, log) {
                if let Some(dp) = explain(Level::High, p, log) {
                    return Some(node(Rule::SEnc, Some("payload property holds".into()), vec![dp]));
                }
            }
            let dk = explain(Level::Low, k, log)?;
            let dp = explain(Level::Low, p, log)?;
            Some(node(Rule::SEncLow, None, vec![dk, dp]))
        }
    }
}
