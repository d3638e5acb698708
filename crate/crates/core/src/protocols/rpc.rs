//! Authenticated RPC: a client MACs its request under a key shared with the
//! server, and the server MACs its response together with the request.
//!
//! The flawed variant leaves the request out of the response MAC.

use crate::codec::ConcreteBytes;
use crate::term::{Event, HmacKeyUsage, Term, Usage, TAG_REQUEST, TAG_RESPONSE};
use crate::world::{ChannelId, Role, Session, SessionId, Stop, World};

/// Payload of every server response.
pub const RESPONSE_TEXT: &[u8] = b"Response";

/// Creates a session between `client` and `server` with a fresh shared key.
pub fn setup(
    w: &mut World,
    client: &ConcreteBytes,
    server: &ConcreteBytes,
) -> Result<SessionId, Stop> {
    let (a, b) = (w.term(client)?, w.term(server)?);
    let usage = if w.protocol() == crate::world::Protocol::RpcFlawed {
        HmacKeyUsage::KeyABUnbound(a, b)
    } else {
        HmacKeyUsage::KeyAB(a, b)
    };
    let key = w.fresh(Usage::HmacKey(usage))?;
    let n = w.sessions().len();
    let client_ch = w.new_channel(format!("s{n}.client"));
    let server_ch = w.new_channel(format!("s{n}.server"));
    Ok(w.add_session(Session::Rpc {
        client: client.clone(),
        server: server.clone(),
        key,
        client_ch,
        server_ch,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Client,
    Server,
}

fn parts(w: &World, s: SessionId) -> Result<(ConcreteBytes, ConcreteBytes, ConcreteBytes, ChannelId, ChannelId), Stop> {
    match w.session(s) {
        Some(Session::Rpc {
            client,
            server,
            key,
            client_ch,
            server_ch,
        }) => Ok((client.clone(), server.clone(), key.clone(), *client_ch, *server_ch)),
        _ => Err(Stop::Abort(format!("session {s} is not an RPC session"))),
    }
}

/// Logs `Bad` for one side of the session and hands the shared key out.
pub fn compromise(w: &mut World, s: SessionId, side: Side) -> Result<ConcreteBytes, Stop> {
    let (client, server, key, _, _) = parts(w, s)?;
    let p = match side {
        Side::Client => client,
        Side::Server => server,
    };
    let t = w.term(&p)?;
    w.cs.log_event(Event::Bad(t))?;
    Ok(key)
}

pub fn channel(w: &World, s: SessionId, side: Side) -> Result<ChannelId, Stop> {
    let (_, _, _, c, sv) = parts(w, s)?;
    Ok(match side {
        Side::Client => c,
        Side::Server => sv,
    })
}

pub fn spawn_client(w: &mut World, s: SessionId, request: ConcreteBytes) -> Result<(), Stop> {
    let (a, b, key, ch, _) = parts(w, s)?;
    let label = format!("rpc-client[{}]", w.next_role_index());
    let flawed = w.protocol() == crate::world::Protocol::RpcFlawed;
    w.spawn(
        label.clone(),
        Box::new(Client {
            label,
            a,
            b,
            key,
            ch,
            req: request,
            flawed,
            sent: false,
        }),
    );
    Ok(())
}

pub fn spawn_server(w: &mut World, s: SessionId) -> Result<(), Stop> {
    let (a, b, key, _, ch) = parts(w, s)?;
    let label = format!("rpc-server[{}]", w.next_role_index());
    let flawed = w.protocol() == crate::world::Protocol::RpcFlawed;
    w.spawn(
        label.clone(),
        Box::new(Server {
            label,
            a,
            b,
            key,
            ch,
            flawed,
        }),
    );
    Ok(())
}

fn response_mac_payload(
    w: &mut World,
    flawed: bool,
    req: &ConcreteBytes,
    resp: &ConcreteBytes,
) -> Result<ConcreteBytes, Stop> {
    let tag = ConcreteBytes::from(TAG_RESPONSE);
    let body = if flawed {
        resp.clone()
    } else {
        w.cs.pair(req, resp)?
    };
    Ok(w.cs.pair(&tag, &body)?)
}

fn bad_disjuncts(w: &World, a: &Term, b: &Term) -> bool {
    w.cs.log().has_bad(a) || w.cs.log().has_bad(b)
}

struct Client {
    label: String,
    a: ConcreteBytes,
    b: ConcreteBytes,
    key: ConcreteBytes,
    ch: ChannelId,
    req: ConcreteBytes,
    flawed: bool,
    sent: bool,
}

impl Role for Client {
    fn step(&mut self, w: &mut World) -> Result<(), Stop> {
        let (ta, tb, treq) = (w.term(&self.a)?, w.term(&self.b)?, w.term(&self.req)?);
        if !self.sent {
            w.cs.log_event(Event::Request(ta.clone(), tb.clone(), treq.clone()))?;
            let m = w.cs.pair(&ConcreteBytes::from(TAG_REQUEST), &self.req)?;
            let mac = w.cs.hmac(&self.key, &m)?;
            let msg = w.cs.pair(&self.req, &mac)?;
            w.role_write(self.ch, msg)?;
            self.sent = true;
        }
        let reply = w.role_read(self.ch)?;
        let (resp, mac) = w.cs.destruct(&reply)?;
        let m = response_mac_payload(w, self.flawed, &self.req, &resp)?;
        if !w.cs.hmac_verify(&self.key, &m, &mac)? {
            return Err(Stop::Abort("response MAC did not verify".into()));
        }
        let tresp = w.term(&resp)?;
        let expected = Event::Response(ta.clone(), tb.clone(), treq, tresp);
        let holds = w.cs.log().contains(&expected) || bad_disjuncts(w, &ta, &tb);
        w.check(
            &self.label,
            format!("{expected} || Bad({ta}) || Bad({tb})"),
            holds,
        );
        Ok(())
    }
}

struct Server {
    label: String,
    a: ConcreteBytes,
    b: ConcreteBytes,
    key: ConcreteBytes,
    ch: ChannelId,
    flawed: bool,
}

impl Role for Server {
    fn step(&mut self, w: &mut World) -> Result<(), Stop> {
        let msg = w.role_read(self.ch)?;
        let (req, mac) = w.cs.destruct(&msg)?;
        let m = w.cs.pair(&ConcreteBytes::from(TAG_REQUEST), &req)?;
        if !w.cs.hmac_verify(&self.key, &m, &mac)? {
            return Err(Stop::Abort("request MAC did not verify".into()));
        }
        let (ta, tb, treq) = (w.term(&self.a)?, w.term(&self.b)?, w.term(&req)?);
        let expected = Event::Request(ta.clone(), tb.clone(), treq.clone());
        let holds = w.cs.log().contains(&expected) || bad_disjuncts(w, &ta, &tb);
        w.check(
            &self.label,
            format!("{expected} || Bad({ta}) || Bad({tb})"),
            holds,
        );
        let resp = w.cs.to_string(RESPONSE_TEXT)?;
        let tresp = w.term(&resp)?;
        w.cs.log_event(Event::Response(ta, tb, treq, tresp))?;
        let m2 = response_mac_payload(w, self.flawed, &req, &resp)?;
        let mac2 = w.cs.hmac(&self.key, &m2)?;
        let out = w.cs.pair(&resp, &mac2)?;
        w.role_write(self.ch, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Protocol, RunVerdict};

    fn relay(protocol: Protocol, compromise_first: bool) -> crate::world::RunOutcome {
        let mut w = World::new(protocol, 1);
        let a = w.cs.to_string(b"Alice").unwrap();
        let b = w.cs.to_string(b"Bob").unwrap();
        let r = w.cs.to_string(b"Request").unwrap();
        let s = setup(&mut w, &a, &b).unwrap();
        if compromise_first {
            compromise(&mut w, s, Side::Client).unwrap();
        }
        let (cc, sc) = (channel(&w, s, Side::Client).unwrap(), channel(&w, s, Side::Server).unwrap());
        spawn_server(&mut w, s).unwrap();
        spawn_client(&mut w, s, r).unwrap();
        let req = w.attacker_read(cc).unwrap();
        w.attacker_write(sc, req);
        let resp = w.attacker_read(sc).unwrap();
        w.attacker_write(cc, resp);
        w.finish()
    }

    #[test]
    fn honest_relay_is_ok_for_both_variants() {
        for p in [Protocol::RpcCorrect, Protocol::RpcFlawed] {
            let out = relay(p, false);
            assert_eq!(out.verdict, RunVerdict::Ok, "{p}");
            assert_eq!(out.assertions_checked, 2);
            assert!(out.roles.iter().all(|r| r.state == "done"));
            let names: Vec<_> = out
                .cs
                .log()
                .iter()
                .filter(|e| matches!(e, Event::Request(..) | Event::Response(..)))
                .map(|e| e.to_string())
                .collect();
            assert!(names[0].starts_with("Request("));
            assert!(names[1].starts_with("Response("));
        }
    }

    #[test]
    fn compromised_client_still_ok() {
        let out = relay(Protocol::RpcCorrect, true);
        assert_eq!(out.verdict, RunVerdict::Ok);
    }

    #[test]
    fn compromised_key_is_low() {
        let mut w = World::new(Protocol::RpcCorrect, 2);
        let a = w.cs.to_string(b"Alice").unwrap();
        let b = w.cs.to_string(b"Bob").unwrap();
        let s = setup(&mut w, &a, &b).unwrap();
        let Some(Session::Rpc { key, .. }) = w.session(s).cloned() else {
            panic!()
        };
        assert!(!w.cs.bytes_level(crate::level::Level::Low, &key));
        let k = compromise(&mut w, s, Side::Server).unwrap();
        assert_eq!(k, key);
        assert!(w.cs.bytes_level(crate::level::Level::Low, &key));
    }
}
