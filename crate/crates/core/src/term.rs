//! Symbolic terms, key usages and protocol events.
//!
//! Terms are reference-counted trees with a cached structural hash, so that
//! attacker programs which repeatedly MAC or pair their own outputs (and so
//! build terms whose tree size is exponential in program length) stay cheap
//! to hash, compare and use as map keys.

use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

/// Byte sequence carried by the request tag literal (`"1"`).
pub const TAG_REQUEST: &[u8] = b"1";
/// Byte sequence carried by the response tag literal (`"2"`).
pub const TAG_RESPONSE: &[u8] = b"2";

/// A symbolic cryptographic expression.
#[derive(Clone)]
pub struct Term(Arc<Node>);

struct Node {
    shape: Shape,
    hash: u64,
    nodes: u64,
    depth: u32,
}

/// The head constructor of a [`Term`] together with its arguments.
#[derive(Clone, PartialEq, Eq)]
pub enum Shape {
    Literal(Vec<u8>),
    Pair(Term, Term),
    Hmac(Term, Term),
    SEnc(Term, Term),
}

impl Term {
    fn build(shape: Shape) -> Term {
        let mut h = DefaultHasher::new();
        let (nodes, depth) = match &shape {
            Shape::Literal(bs) => {
                0u8.hash(&mut h);
                bs.hash(&mut h);
                (1, 1)
            }
            Shape::Pair(a, b) | Shape::Hmac(a, b) | Shape::SEnc(a, b) => {
                let tag: u8 = match &shape {
                    Shape::Pair(..) => 1,
                    Shape::Hmac(..) => 2,
                    _ => 3,
                };
                tag.hash(&mut h);
                a.0.hash.hash(&mut h);
                b.0.hash.hash(&mut h);
                (
                    a.0.nodes.saturating_add(b.0.nodes).saturating_add(1),
                    a.0.depth.max(b.0.depth) + 1,
                )
            }
        };
        Term(Arc::new(Node {
            hash: h.finish(),
            shape,
            nodes,
            depth,
        }))
    }

    pub fn literal(bytes: impl Into<Vec<u8>>) -> Term {
        Term::build(Shape::Literal(bytes.into()))
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::build(Shape::Pair(a, b))
    }

    pub fn hmac(key: Term, msg: Term) -> Term {
        Term::build(Shape::Hmac(key, msg))
    }

    pub fn senc(key: Term, plaintext: Term) -> Term {
        Term::build(Shape::SEnc(key, plaintext))
    }

    pub fn shape(&self) -> &Shape {
        &self.0.shape
    }

    pub fn as_literal(&self) -> Option<&[u8]> {
        match self.shape() {
            Shape::Literal(bs) => Some(bs),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&Term, &Term)> {
        match self.shape() {
            Shape::Pair(a, b) => Some((a, b)),
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self.shape(), Shape::Literal(_))
    }

    /// Number of constructor nodes in the tree (shared subterms counted once
    /// per occurrence). Saturates at `u64::MAX`.
    pub fn node_count(&self) -> u64 {
        self.0.nodes
    }

    pub fn depth(&self) -> u32 {
        self.0.depth
    }

    /// Distinct subterms, including `self`, in post-order.
    pub fn subterms(&self) -> Vec<Term> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        fn walk(t: &Term, seen: &mut std::collections::HashSet<Term>, out: &mut Vec<Term>) {
            if seen.contains(t) {
                return;
            }
            match t.shape() {
                Shape::Literal(_) => {}
                Shape::Pair(a, b) | Shape::Hmac(a, b) | Shape::SEnc(a, b) => {
                    walk(a, seen, out);
                    walk(b, seen, out);
                }
            }
            seen.insert(t.clone());
            out.push(t.clone());
        }
        walk(self, &mut seen, &mut out);
        out
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.hash == other.0.hash
                && self.0.nodes == other.0.nodes
                && self.0.shape == other.0.shape)
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

pub fn tag_request() -> Term {
    Term::literal(TAG_REQUEST)
}

pub fn tag_response() -> Term {
    Term::literal(TAG_RESPONSE)
}

/// `Pair(a, Pair(b, Pair(c, d)))`.
pub fn pair4(a: Term, b: Term, c: Term, d: Term) -> Term {
    Term::pair(a, Term::pair(b, Term::pair(c, d)))
}

/// Inverse of [`pair4`].
pub fn unpair4(m: &Term) -> Option<(&Term, &Term, &Term, &Term)> {
    let (a, rest) = m.as_pair()?;
    let (b, rest) = rest.as_pair()?;
    let (c, d) = rest.as_pair()?;
    Some((a, b, c, d))
}

/// The request carried by a well-formed request payload `Pair(tagRequest, req)`.
pub fn request_payload(m: &Term) -> Option<&Term> {
    let (tag, req) = m.as_pair()?;
    (tag.as_literal()? == TAG_REQUEST).then_some(req)
}

/// The `(req, resp)` carried by a response payload `Pair(tagResponse, Pair(req, resp))`.
pub fn response_payload(m: &Term) -> Option<(&Term, &Term)> {
    let (tag, body) = m.as_pair()?;
    if tag.as_literal()? != TAG_RESPONSE {
        return None;
    }
    body.as_pair()
}

/// The response carried by a payload `Pair(tagResponse, resp)` that does not
/// bind the request.
pub fn unbound_response_payload(m: &Term) -> Option<&Term> {
    let (tag, resp) = m.as_pair()?;
    (tag.as_literal()? == TAG_RESPONSE).then_some(resp)
}

pub fn requested(m: &Term, req: &Term) -> bool {
    request_payload(m) == Some(req)
}

pub fn responded(m: &Term, req: &Term, resp: &Term) -> bool {
    response_payload(m) == Some((req, resp))
}

/// Nonce usages. No protocol in this crate gives a literal a nonce usage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NonceUsage {}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum HmacKeyUsage {
    /// RPC key shared by client `a` and server `b`.
    KeyAB(Term, Term),
    /// RPC key of the flawed protocol variant, whose response payloads do not
    /// include the request.
    KeyABUnbound(Term, Term),
    /// Otway-Rees session key for initiator `a` and responder `b`.
    SessionKey(Term, Term),
}

impl HmacKeyUsage {
    /// The two principals sharing the key.
    pub fn principals(&self) -> (&Term, &Term) {
        match self {
            HmacKeyUsage::KeyAB(a, b)
            | HmacKeyUsage::KeyABUnbound(a, b)
            | HmacKeyUsage::SessionKey(a, b) => (a, b),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum SEncKeyUsage {
    /// Long-term key shared between principal `p` and the trusted server.
    PrinKey(Term),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Usage {
    AttackerGuess,
    Nonce(NonceUsage),
    HmacKey(HmacKeyUsage),
    SEncKey(SEncKeyUsage),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Event {
    New(Term, Usage),
    Request(Term, Term, Term),
    Response(Term, Term, Term, Term),
    Initiator(Term, Term, Term, Term),
    Responder(Term, Term, Term, Term),
    Bad(Term),
}

impl Event {
    pub fn is_new(&self) -> bool {
        matches!(self, Event::New(..))
    }
}

// Canonical rendering: prefix notation, literals as 0x-prefixed lowercase hex.

pub(crate) fn write_hex(f: &mut impl fmt::Write, bytes: &[u8]) -> fmt::Result {
    for b in bytes {
        write!(f, "{b:02x}")?;
    }
    Ok(())
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    write_hex(&mut s, bytes).expect("writing to a String cannot fail");
    s
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape() {
            Shape::Literal(bs) => {
                f.write_str("Literal(0x")?;
                write_hex(f, bs)?;
                f.write_str(")")
            }
            Shape::Pair(a, b) => write!(f, "Pair({a},{b})"),
            Shape::Hmac(a, b) => write!(f, "Hmac({a},{b})"),
            Shape::SEnc(a, b) => write!(f, "SEnc({a},{b})"),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Usage::AttackerGuess => f.write_str("AttackerGuess"),
            Usage::Nonce(nu) => match *nu {},
            Usage::HmacKey(HmacKeyUsage::KeyAB(a, b)) => write!(f, "HmacKey(KeyAB({a},{b}))"),
            Usage::HmacKey(HmacKeyUsage::KeyABUnbound(a, b)) => {
                write!(f, "HmacKey(KeyABUnbound({a},{b}))")
            }
            Usage::HmacKey(HmacKeyUsage::SessionKey(a, b)) => {
                write!(f, "HmacKey(SessionKey({a},{b}))")
            }
            Usage::SEncKey(SEncKeyUsage::PrinKey(p)) => write!(f, "SEncKey(PrinKey({p}))"),
        }
    }
}

impl fmt::Debug for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::New(t, u) => write!(f, "New({t},{u})"),
            Event::Request(a, b, r) => write!(f, "Request({a},{b},{r})"),
            Event::Response(a, b, r, s) => write!(f, "Response({a},{b},{r},{s})"),
            Event::Initiator(p, n, k, b) => write!(f, "Initiator({p},{n},{k},{b})"),
            Event::Responder(p, n, k, a) => write!(f, "Responder({p},{n},{k},{a})"),
            Event::Bad(p) => write!(f, "Bad({p})"),
        }
    }
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
