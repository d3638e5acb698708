//! Random small good logs and term universes for the level properties.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dyrun::log::Log;
use dyrun::term::{pair4, tag_request, tag_response, Event, HmacKeyUsage, SEncKeyUsage, Usage};
use dyrun::Term;

use super::oracle::closure;

pub const MAX_UNIVERSE: usize = 40;
pub const MAX_EVENTS: usize = 20;

pub struct Instance {
    pub events: Vec<Event>,
    pub log: Log,
    pub roots: Vec<Term>,
    pub universe: Vec<Term>,
    pub principals: Vec<Term>,
    pub keys: Vec<(Term, Option<Usage>)>,
    pub data: Vec<Term>,
}

fn lit(s: &str) -> Term {
    Term::literal(s.as_bytes().to_vec())
}

struct Builder {
    rng: ChaCha8Rng,
    events: Vec<Event>,
}

impl Builder {
    fn push(&mut self, e: Event) {
        if self.events.len() < MAX_EVENTS && !self.events.contains(&e) {
            self.events.push(e);
        }
    }
}

pub fn instance(seed: u64) -> Instance {
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        events: Vec::new(),
    };
    let n_prin = b.rng.gen_range(2..=3);
    let principals: Vec<Term> = ["A", "B", "C"][..n_prin].iter().map(|s| lit(s)).collect();
    let data: Vec<Term> = ["d0", "d1", "d2"].iter().map(|s| lit(s)).collect();

    for t in [tag_request(), tag_response()] {
        if b.rng.gen_bool(0.8) {
            b.push(Event::New(t, Usage::AttackerGuess));
        }
    }
    for p in principals.iter().chain(&data) {
        if b.rng.gen_bool(0.5) {
            b.push(Event::New(p.clone(), Usage::AttackerGuess));
        }
    }

    let n_keys = b.rng.gen_range(2..=4);
    let mut keys = Vec::new();
    for i in 0..n_keys {
        let k = lit(&format!("k{i}"));
        let p = principals.choose(&mut b.rng).unwrap().clone();
        let q = principals.choose(&mut b.rng).unwrap().clone();
        let usage = match b.rng.gen_range(0..6) {
            0 => Some(Usage::HmacKey(HmacKeyUsage::KeyAB(p, q))),
            1 => Some(Usage::HmacKey(HmacKeyUsage::KeyABUnbound(p, q))),
            2 => Some(Usage::HmacKey(HmacKeyUsage::SessionKey(p, q))),
            3 => Some(Usage::SEncKey(SEncKeyUsage::PrinKey(p))),
            4 => Some(Usage::AttackerGuess),
            _ => None,
        };
        if let Some(u) = &usage {
            b.push(Event::New(k.clone(), u.clone()));
        }
        keys.push((k, usage));
    }

    // Small payloads drawn from data, principals and keys.
    let atoms: Vec<Term> = data.iter().chain(&principals).cloned().collect();
    let all_atoms: Vec<Term> = atoms.iter().cloned().chain(keys.iter().map(|(k, _)| k.clone())).collect();
    let pick = |rng: &mut ChaCha8Rng, pool: &[Term]| pool.choose(rng).unwrap().clone();

    let n_protocol_events = b.rng.gen_range(0..=8);
    for _ in 0..n_protocol_events {
        let (a, bb) = match keys.choose(&mut b.rng).unwrap() {
            (_, Some(Usage::HmacKey(hu))) if b.rng.gen_bool(0.8) => {
                let (a, bb) = hu.principals();
                (a.clone(), bb.clone())
            }
            _ => (pick(&mut b.rng, &principals), pick(&mut b.rng, &principals)),
        };
        let x = pick(&mut b.rng, &atoms);
        let y = pick(&mut b.rng, &atoms);
        let e = match b.rng.gen_range(0..5) {
            0 | 1 => Event::Request(a, bb, x),
            2 | 3 => Event::Response(a, bb, x, y),
            _ => {
                // Otway-Rees style record on a session key, if any.
                let sk = keys.iter().find_map(|(k, u)| match u {
                    Some(Usage::HmacKey(HmacKeyUsage::SessionKey(p, q))) => Some((k, p, q)),
                    _ => None,
                });
                match sk {
                    Some((k, p, q)) if b.rng.gen_bool(0.5) => {
                        Event::Initiator(p.clone(), x, k.clone(), q.clone())
                    }
                    Some((k, p, q)) => Event::Responder(q.clone(), x, k.clone(), p.clone()),
                    None => Event::Request(a, bb, x),
                }
            }
        };
        b.push(e);
    }
    for p in &principals {
        if b.rng.gen_bool(0.25) {
            b.push(Event::Bad(p.clone()));
        }
    }

    // Query terms: targeted ones built from logged events plus random ones.
    let mut roots = Vec::new();
    let logged: Vec<Event> = b.events.clone();
    let mut targeted = Vec::new();
    for (k, u) in &keys {
        for e in &logged {
            match (u, e) {
                (Some(Usage::HmacKey(_)), Event::Request(_, _, req)) => {
                    targeted.push(Term::hmac(k.clone(), Term::pair(tag_request(), req.clone())))
                }
                (Some(Usage::HmacKey(_)), Event::Response(_, _, req, resp)) => {
                    targeted.push(Term::hmac(
                        k.clone(),
                        Term::pair(tag_response(), Term::pair(req.clone(), resp.clone())),
                    ));
                    targeted.push(Term::hmac(k.clone(), Term::pair(tag_response(), resp.clone())));
                }
                (Some(Usage::SEncKey(_)), Event::Initiator(p, n, sk, q)) => {
                    targeted.push(Term::senc(k.clone(), pair4(p.clone(), q.clone(), sk.clone(), n.clone())))
                }
                (Some(Usage::SEncKey(_)), Event::Responder(q, n, sk, p)) => {
                    targeted.push(Term::senc(k.clone(), pair4(p.clone(), q.clone(), sk.clone(), n.clone())))
                }
                _ => {}
            }
        }
    }
    targeted.shuffle(&mut b.rng);
    let mut candidates: Vec<Term> = targeted.into_iter().take(4).collect();
    for _ in 0..6 {
        candidates.push(random_term(&mut b.rng, &all_atoms, 3));
    }
    candidates.shuffle(&mut b.rng);
    for t in candidates {
        let mut next = roots.clone();
        next.push(t);
        if closure(&next).len() <= MAX_UNIVERSE {
            roots = next;
        }
    }
    let universe = closure(&roots);
    let events = b.events;
    let log: Log = events.iter().cloned().collect();
    Instance {
        events,
        log,
        roots,
        universe,
        principals,
        keys,
        data,
    }
}

pub fn random_term(rng: &mut ChaCha8Rng, atoms: &[Term], depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.3) {
        let t = atoms.choose(rng).unwrap().clone();
        return match rng.gen_range(0..8) {
            0 => tag_request(),
            1 => tag_response(),
            _ => t,
        };
    }
    let a = random_term(rng, atoms, depth - 1);
    let b = random_term(rng, atoms, depth - 1);
    match rng.gen_range(0..4) {
        0 | 1 => Term::pair(a, b),
        2 => Term::hmac(a, b),
        _ => Term::senc(a, b),
    }
}

/// Extra events for log extension: more protocol events, compromises and
/// usages for literals that had none (which may break goodness, which the
/// monotonicity property does not need).
pub fn extension(inst: &Instance, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let atoms: Vec<Term> = inst.data.iter().chain(&inst.principals).cloned().collect();
    let mut out = Vec::new();
    for _ in 0..rng.gen_range(1..=6) {
        let a = inst.principals.choose(&mut rng).unwrap().clone();
        let b = inst.principals.choose(&mut rng).unwrap().clone();
        let x = atoms.choose(&mut rng).unwrap().clone();
        let y = atoms.choose(&mut rng).unwrap().clone();
        let k = inst.keys.choose(&mut rng).unwrap().0.clone();
        out.push(match rng.gen_range(0..6) {
            0 => Event::Bad(a),
            1 => Event::Request(a, b, x),
            2 => Event::Response(a, b, x, y),
            3 => Event::New(x, Usage::AttackerGuess),
            4 => Event::New(k, Usage::HmacKey(HmacKeyUsage::KeyAB(a, b))),
            _ => Event::Initiator(a, x, k, b),
        });
    }
    out
}
