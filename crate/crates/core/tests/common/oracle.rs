//! Reference semantics for the level relation, written directly from the
//! inference rules: the least set of (level, term) judgements over a
//! subterm-closed universe that is closed under every rule. Log predicates
//! are evaluated by scanning the event list.

use std::collections::HashSet;

use dyrun::term::{tag_request, tag_response, Event, HmacKeyUsage, SEncKeyUsage, Shape, Usage};
use dyrun::{Level, Term};

pub struct Oracle<'a> {
    pub events: &'a [Event],
}

impl<'a> Oracle<'a> {
    pub fn new(events: &'a [Event]) -> Oracle<'a> {
        Oracle { events }
    }

    pub fn logged(&self, e: &Event) -> bool {
        self.events.iter().any(|x| x == e)
    }

    fn bad(&self, p: &Term) -> bool {
        self.logged(&Event::Bad(p.clone()))
    }

    fn news_of<'b>(&'b self, t: &'b Term) -> impl Iterator<Item = &'b Usage> + 'b {
        self.events.iter().filter_map(move |e| match e {
            Event::New(x, u) if x == t => Some(u),
            _ => None,
        })
    }

    fn hmac_usages<'b>(&'b self, k: &'b Term) -> impl Iterator<Item = &'b HmacKeyUsage> + 'b {
        self.news_of(k).filter_map(|u| match u {
            Usage::HmacKey(h) => Some(h),
            _ => None,
        })
    }

    /// Some logged request or response of `a` to `b` is carried by `m`.
    fn payload(&self, hu: &HmacKeyUsage, m: &Term) -> bool {
        let (a, b, unbound) = match hu {
            HmacKeyUsage::KeyAB(a, b) | HmacKeyUsage::SessionKey(a, b) => (a, b, false),
            HmacKeyUsage::KeyABUnbound(a, b) => (a, b, true),
        };
        self.events.iter().any(|e| match e {
            Event::Request(x, y, req) if x == a && y == b => {
                *m == Term::pair(tag_request(), req.clone())
            }
            Event::Response(x, y, req, resp) if x == a && y == b => {
                if unbound {
                    *m == Term::pair(tag_response(), resp.clone())
                } else {
                    *m == Term::pair(tag_response(), Term::pair(req.clone(), resp.clone()))
                }
            }
            _ => false,
        })
    }

    pub fn can_hmac(&self, k: &Term, m: &Term) -> bool {
        self.hmac_usages(k).any(|hu| self.payload(hu, m))
    }

    pub fn hmac_comp(&self, k: &Term) -> bool {
        self.hmac_usages(k).any(|hu| match hu {
            HmacKeyUsage::KeyAB(a, b)
            | HmacKeyUsage::KeyABUnbound(a, b)
            | HmacKeyUsage::SessionKey(a, b) => self.bad(a) || self.bad(b),
        })
    }

    fn prin_keys<'b>(&'b self, k: &'b Term) -> impl Iterator<Item = &'b Term> + 'b {
        self.news_of(k).filter_map(|u| match u {
            Usage::SEncKey(SEncKeyUsage::PrinKey(p)) => Some(p),
            _ => None,
        })
    }

    pub fn can_senc(&self, k: &Term, m: &Term) -> bool {
        self.prin_keys(k).any(|p| {
            self.events.iter().any(|e| match e {
                Event::Initiator(q, np, kpb, b) if q == p && b != p => {
                    *m == Term::pair(p.clone(), Term::pair(b.clone(), Term::pair(kpb.clone(), np.clone())))
                        && self.logged(&Event::New(
                            kpb.clone(),
                            Usage::HmacKey(HmacKeyUsage::SessionKey(p.clone(), b.clone())),
                        ))
                }
                Event::Responder(q, np, kap, a) if q == p && a != p => {
                    *m == Term::pair(a.clone(), Term::pair(p.clone(), Term::pair(kap.clone(), np.clone())))
                        && self.logged(&Event::New(
                            kap.clone(),
                            Usage::HmacKey(HmacKeyUsage::SessionKey(a.clone(), p.clone())),
                        ))
                }
                _ => false,
            })
        })
    }

    pub fn senc_comp(&self, k: &Term) -> bool {
        self.prin_keys(k).any(|p| self.bad(p))
    }

    /// Saturates the rules over the subterm closure of `roots`.
    pub fn saturate(&self, roots: &[Term]) -> Judgements {
        let universe = closure(roots);
        let mut j = Judgements::default();
        loop {
            let mut changed = false;
            for t in &universe {
                for l in [Level::Low, Level::High] {
                    if j.holds(l, t) {
                        continue;
                    }
                    if self.rule_fires(&j, l, t) {
                        j.insert(l, t.clone());
                        changed = true;
                    }
                }
            }
            if !changed {
                return j;
            }
        }
    }

    fn rule_fires(&self, j: &Judgements, l: Level, t: &Term) -> bool {
        match t.shape() {
            Shape::Literal(_) => self.news_of(t).any(|u| match u {
                Usage::AttackerGuess => true,
                Usage::Nonce(_) => l == Level::High,
                Usage::HmacKey(_) => l == Level::High || self.hmac_comp(t),
                Usage::SEncKey(_) => l == Level::High || self.senc_comp(t),
            }),
            Shape::Pair(a, b) => j.holds(l, a) && j.holds(l, b),
            Shape::Hmac(k, m) => {
                (self.can_hmac(k, m) && j.holds(l, m))
                    || (j.holds(Level::Low, k) && j.holds(Level::Low, m))
            }
            Shape::SEnc(k, p) => {
                (self.can_senc(k, p) && (j.holds(Level::Low, p) || j.holds(Level::High, p)))
                    || (j.holds(Level::Low, k) && j.holds(Level::Low, p))
            }
        }
    }

    pub fn level(&self, l: Level, t: &Term) -> bool {
        self.saturate(std::slice::from_ref(t)).holds(l, t)
    }
}

#[derive(Default)]
pub struct Judgements {
    low: HashSet<Term>,
    high: HashSet<Term>,
}

impl Judgements {
    pub fn holds(&self, l: Level, t: &Term) -> bool {
        match l {
            Level::Low => self.low.contains(t),
            Level::High => self.high.contains(t),
        }
    }

    fn insert(&mut self, l: Level, t: Term) {
        match l {
            Level::Low => self.low.insert(t),
            Level::High => self.high.insert(t),
        };
    }
}

/// All subterms of `roots`, children before parents.
pub fn closure(roots: &[Term]) -> Vec<Term> {
    fn go(t: &Term, seen: &mut HashSet<Term>, out: &mut Vec<Term>) {
        if seen.contains(t) {
            return;
        }
        match t.shape() {
            Shape::Literal(_) => {}
            Shape::Pair(a, b) | Shape::Hmac(a, b) | Shape::SEnc(a, b) => {
                go(a, seen, out);
                go(b, seen, out);
            }
        }
        seen.insert(t.clone());
        out.push(t.clone());
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in roots {
        go(r, &mut seen, &mut out);
    }
    out
}

/// Good: every `New` is on a literal and no literal has two usages.
pub fn good(events: &[Event]) -> bool {
    events.iter().all(|e| match e {
        Event::New(t, u) => {
            matches!(t.shape(), Shape::Literal(_))
                && events
                    .iter()
                    .all(|f| !matches!(f, Event::New(t2, u2) if t2 == t && u2 != u))
        }
        _ => true,
    })
}
