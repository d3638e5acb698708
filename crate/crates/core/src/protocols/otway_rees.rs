//! Otway-Rees key exchange through a trusted server that shares a long-term
//! encryption key with every principal.
//!
//! ```text
//! a -> b : a | b | Na
//! b -> s : a | b | Na | Nb
//! s -> b : SEnc(Ka, (a, b, Kab, Na)), SEnc(Kb, (a, b, Kab, Nb))
//! b -> a : SEnc(Ka, (a, b, Kab, Na))
//! ```

use crate::codec::ConcreteBytes;
use crate::term::{Event, HmacKeyUsage, Term, Usage};
use crate::world::{ChannelId, Role, Session, SessionId, Stop, World};

/// Creates a session and both principals' long-term keys if needed.
pub fn setup(
    w: &mut World,
    initiator: &ConcreteBytes,
    responder: &ConcreteBytes,
) -> Result<SessionId, Stop> {
    w.principal_key(initiator)?;
    w.principal_key(responder)?;
    let n = w.sessions().len();
    let initiator_ch = w.new_channel(format!("s{n}.initiator"));
    let responder_ch = w.new_channel(format!("s{n}.responder"));
    let server_ch = w.new_channel(format!("s{n}.server"));
    Ok(w.add_session(Session::OtwayRees {
        initiator: initiator.clone(),
        responder: responder.clone(),
        initiator_ch,
        responder_ch,
        server_ch,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Initiator,
    Responder,
    Server,
}

struct Parts {
    a: ConcreteBytes,
    b: ConcreteBytes,
    ia: ChannelId,
    rb: ChannelId,
    sv: ChannelId,
}

fn parts(w: &World, s: SessionId) -> Result<Parts, Stop> {
    match w.session(s) {
        Some(Session::OtwayRees {
            initiator,
            responder,
            initiator_ch,
            responder_ch,
            server_ch,
        }) => Ok(Parts {
            a: initiator.clone(),
            b: responder.clone(),
            ia: *initiator_ch,
            rb: *responder_ch,
            sv: *server_ch,
        }),
        _ => Err(Stop::Abort(format!("session {s} is not an Otway-Rees session"))),
    }
}

pub fn channel(w: &World, s: SessionId, side: Side) -> Result<ChannelId, Stop> {
    let p = parts(w, s)?;
    Ok(match side {
        Side::Initiator => p.ia,
        Side::Responder => p.rb,
        Side::Server => p.sv,
    })
}

/// Logs `Bad(p)` and returns p's long-term key.
pub fn compromise_principal(w: &mut World, p: &ConcreteBytes) -> Result<ConcreteBytes, Stop> {
    let k = w.principal_key(p)?;
    let t = w.term(p)?;
    w.cs.log_event(Event::Bad(t))?;
    Ok(k)
}

pub fn spawn(w: &mut World, s: SessionId, side: Side) -> Result<(), Stop> {
    let p = parts(w, s)?;
    let i = w.next_role_index();
    match side {
        Side::Initiator => {
            let key = w.principal_key(&p.a)?;
            w.spawn(
                format!("or-initiator[{i}]"),
                Box::new(Initiator {
                    label: format!("or-initiator[{i}]"),
                    a: p.a,
                    b: p.b,
                    key,
                    ch: p.ia,
                    na: None,
                }),
            );
        }
        Side::Responder => {
            let key = w.principal_key(&p.b)?;
            w.spawn(
                format!("or-responder[{i}]"),
                Box::new(Responder {
                    label: format!("or-responder[{i}]"),
                    b: p.b,
                    key,
                    ch: p.rb,
                    first: None,
                }),
            );
        }
        Side::Server => w.spawn(format!("or-server[{i}]"), Box::new(Server { ch: p.sv })),
    }
    Ok(())
}

fn bad_disjuncts(w: &World, a: &Term, b: &Term) -> bool {
    w.cs.log().has_bad(a) || w.cs.log().has_bad(b)
}

struct Initiator {
    label: String,
    a: ConcreteBytes,
    b: ConcreteBytes,
    key: ConcreteBytes,
    ch: ChannelId,
    na: Option<ConcreteBytes>,
}

impl Role for Initiator {
    fn step(&mut self, w: &mut World) -> Result<(), Stop> {
        let na = match &self.na {
            Some(na) => na.clone(),
            None => {
                let na = w.nonce()?;
                let bn = w.cs.pair(&self.b, &na)?;
                let m1 = w.cs.pair(&self.a, &bn)?;
                w.role_write(self.ch, m1)?;
                self.na = Some(na.clone());
                na
            }
        };
        let ticket = w.role_read(self.ch)?;
        let p = w.cs.sdec(&self.key, &ticket)?;
        let [a, b, kab, na2] = w.unpair4(&p)?;
        if a != self.a || b != self.b || na2 != na {
            return Err(Stop::Abort("ticket does not match the session".into()));
        }
        let (ta, tb, tk, tn) = (w.term(&a)?, w.term(&b)?, w.term(&kab)?, w.term(&na)?);
        let expected = Event::Initiator(ta.clone(), tn, tk, tb.clone());
        let holds = w.cs.log().contains(&expected) || bad_disjuncts(w, &ta, &tb);
        w.check(&self.label, format!("{expected} || Bad({ta}) || Bad({tb})"), holds);
        Ok(())
    }
}

struct Responder {
    label: String,
    b: ConcreteBytes,
    key: ConcreteBytes,
    ch: ChannelId,
    /// Initiator named in the first message, and our nonce.
    first: Option<(ConcreteBytes, ConcreteBytes)>,
}

impl Role for Responder {
    fn step(&mut self, w: &mut World) -> Result<(), Stop> {
        let (a, nb) = match &self.first {
            Some(f) => f.clone(),
            None => {
                let m1 = w.role_read(self.ch)?;
                let (a, rest) = w.cs.destruct(&m1)?;
                let (b, na) = w.cs.destruct(&rest)?;
                if b != self.b {
                    return Err(Stop::Abort("first message names another responder".into()));
                }
                if a == self.b {
                    return Err(Stop::Abort("initiator and responder coincide".into()));
                }
                let nb = w.nonce()?;
                let m2 = w.pair4(&a, &b, &na, &nb)?;
                w.role_write(self.ch, m2)?;
                self.first = Some((a.clone(), nb.clone()));
                (a, nb)
            }
        };
        let m3 = w.role_read(self.ch)?;
        let (ticket_a, ticket_b) = w.cs.destruct(&m3)?;
        let p = w.cs.sdec(&self.key, &ticket_b)?;
        let [a2, b2, kab, nb2] = w.unpair4(&p)?;
        if a2 != a || b2 != self.b || nb2 != nb {
            return Err(Stop::Abort("ticket does not match the session".into()));
        }
        let (ta, tb, tk, tn) = (w.term(&a)?, w.term(&self.b)?, w.term(&kab)?, w.term(&nb)?);
        let expected = Event::Responder(tb.clone(), tn, tk, ta.clone());
        let holds = w.cs.log().contains(&expected) || bad_disjuncts(w, &ta, &tb);
        w.check(&self.label, format!("{expected} || Bad({ta}) || Bad({tb})"), holds);
        w.role_write(self.ch, ticket_a)
    }
}

struct Server {
    ch: ChannelId,
}

impl Role for Server {
    fn step(&mut self, w: &mut World) -> Result<(), Stop> {
        let m2 = w.role_read(self.ch)?;
        let [a, b, na, nb] = w.unpair4(&m2)?;
        if a == b {
            return Err(Stop::Abort("initiator and responder coincide".into()));
        }
        let (Some(ka), Some(kb)) = (
            w.known_principal_key(&a).cloned(),
            w.known_principal_key(&b).cloned(),
        ) else {
            return Err(Stop::Abort("unknown principal".into()));
        };
        let (ta, tb) = (w.term(&a)?, w.term(&b)?);
        let kab = w.fresh(Usage::HmacKey(HmacKeyUsage::SessionKey(ta.clone(), tb.clone())))?;
        let (tk, tna, tnb) = (w.term(&kab)?, w.term(&na)?, w.term(&nb)?);
        w.cs.log_event(Event::Initiator(ta.clone(), tna, tk.clone(), tb.clone()))?;
        w.cs.log_event(Event::Responder(tb, tnb, tk, ta))?;
        let pa = w.pair4(&a, &b, &kab, &na)?;
        let ca = w.cs.senc(&ka, &pa)?;
        let pb = w.pair4(&a, &b, &kab, &nb)?;
        let cb = w.cs.senc(&kb, &pb)?;
        let out = w.cs.pair(&ca, &cb)?;
        w.role_write(self.ch, out)
    }
}
