//! The attacker's view of the system: functions over Low data only.

use std::fmt;
use std::str::FromStr;

use crate::codec::ConcreteBytes;
use crate::level::Level;
use crate::protocols::{otway_rees, rpc};
use crate::state::WrapperError;
use crate::world::{ChannelId, Protocol, SessionId, Stop, World};

/// Largest byte string the attacker may build with `att_pair`.
pub const MAX_ATTACKER_BYTES: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttType {
    Str,
    Bool,
    Bytes,
    Channel,
    Session,
}

impl AttType {
    pub const ALL: [AttType; 5] = [
        AttType::Str,
        AttType::Bool,
        AttType::Bytes,
        AttType::Channel,
        AttType::Session,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttType::Str => "string",
            AttType::Bool => "bool",
            AttType::Bytes => "bytespub",
            AttType::Channel => "channel",
            AttType::Session => "session",
        }
    }
}

impl fmt::Display for AttType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttType {
    type Err = ();

    fn from_str(s: &str) -> Result<AttType, ()> {
        AttType::ALL.into_iter().find(|t| t.name() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    pub name: &'static str,
    pub params: &'static [AttType],
    pub ret: Option<AttType>,
}

use AttType::{Bool, Bytes, Channel, Session, Str};

const fn sig(name: &'static str, params: &'static [AttType], ret: Option<AttType>) -> Signature {
    Signature { name, params, ret }
}

const COMMON: [Signature; 8] = [
    sig("att_toBytespub", &[Str], Some(Bytes)),
    sig("att_pair", &[Bytes, Bytes], Some(Bytes)),
    sig("att_fst", &[Bytes], Some(Bytes)),
    sig("att_snd", &[Bytes], Some(Bytes)),
    sig("att_hmacsha1", &[Bytes, Bytes], Some(Bytes)),
    sig("att_hmacsha1Verify", &[Bytes, Bytes, Bytes], Some(Bool)),
    sig("att_channel_write", &[Channel, Bytes], None),
    sig("att_channel_read", &[Channel], Some(Bytes)),
];

const RPC: [Signature; 7] = [
    sig("att_setup", &[Bytes, Bytes], Some(Session)),
    sig("att_run_client", &[Session, Bytes], None),
    sig("att_run_server", &[Session], None),
    sig("att_compromise_client", &[Session], Some(Bytes)),
    sig("att_compromise_server", &[Session], Some(Bytes)),
    sig("att_getChannel_client", &[Session], Some(Channel)),
    sig("att_getChannel_server", &[Session], Some(Channel)),
];

const OTWAY_REES: [Signature; 10] = [
    sig("att_senc", &[Bytes, Bytes], Some(Bytes)),
    sig("att_sdec", &[Bytes, Bytes], Some(Bytes)),
    sig("att_or_setup", &[Bytes, Bytes], Some(Session)),
    sig("att_run_initiator", &[Session], None),
    sig("att_run_responder", &[Session], None),
    sig("att_run_server", &[Session], None),
    sig("att_getChannel_initiator", &[Session], Some(Channel)),
    sig("att_getChannel_responder", &[Session], Some(Channel)),
    sig("att_getChannel_server", &[Session], Some(Channel)),
    sig("att_compromise_principal", &[Bytes], Some(Bytes)),
];

/// Every function the attacker may call against `protocol`.
pub fn interface(protocol: Protocol) -> Vec<Signature> {
    let extra: &[Signature] = if protocol.is_rpc() { &RPC } else { &OTWAY_REES };
    COMMON.iter().chain(extra).copied().collect()
}

pub fn lookup(protocol: Protocol, name: &str) -> Option<Signature> {
    interface(protocol).into_iter().find(|s| s.name == name)
}

/// A runtime attacker value. `Failed` stands for a call that returned an
/// error value; passing it on makes later calls fail too.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Str(Vec<u8>),
    Bool(bool),
    Bytes(ConcreteBytes),
    Channel(ChannelId),
    Session(SessionId),
    Failed(String),
}

impl Value {
    pub fn is_failed(&self) -> bool {
        matches!(self, Value::Failed(_))
    }
}

enum CallError {
    Failed(String),
    Fault(String),
}

impl From<WrapperError> for CallError {
    fn from(e: WrapperError) -> CallError {
        if e.is_contract_violation() {
            CallError::Fault(e.to_string())
        } else {
            CallError::Failed(e.to_string())
        }
    }
}

impl From<Stop> for CallError {
    fn from(s: Stop) -> CallError {
        match s {
            Stop::Fault(d) => CallError::Fault(d),
            Stop::Abort(d) => CallError::Failed(d),
            Stop::Blocked(_) => CallError::Failed("blocked".into()),
        }
    }
}

fn bytes(v: &Value) -> Result<&ConcreteBytes, CallError> {
    match v {
        Value::Bytes(b) => Ok(b),
        other => Err(CallError::Fault(format!("expected bytespub, got {other:?}"))),
    }
}

fn session(v: &Value) -> Result<SessionId, CallError> {
    match v {
        Value::Session(s) => Ok(*s),
        other => Err(CallError::Fault(format!("expected session, got {other:?}"))),
    }
}

fn channel(v: &Value) -> Result<ChannelId, CallError> {
    match v {
        Value::Channel(c) => Ok(*c),
        other => Err(CallError::Fault(format!("expected channel, got {other:?}"))),
    }
}

/// Calls `name` with `args`. Roles are advanced first. Procedures return
/// `None`.
///
/// Failures of the call come back as [`Value::Failed`]; contract faults are
/// turned into a verdict on `w`. Every bytespub result is checked to be Low.
pub fn call(w: &mut World, name: &str, args: &[Value]) -> Option<Value> {
    w.run_roles();
    let ret = lookup(w.protocol(), name).and_then(|s| s.ret);
    if w.is_halted() {
        return ret.map(|_| Value::Failed("run halted".into()));
    }
    if let Some(Value::Failed(why)) = args.iter().find(|a| a.is_failed()) {
        return ret.map(|_| Value::Failed(why.clone()));
    }
    let result = dispatch(w, name, args);
    w.sync_violations();
    match result {
        Ok(v) => {
            if let Some(Value::Bytes(b)) = &v {
                if w.cs.failure().is_none() && !w.cs.bytes_level(Level::Low, b) {
                    w.invariant_violation(
                        "attacker-closure",
                        format!("{name} returned 0x{}, which is not Low", b.to_hex()),
                    );
                }
            }
            v
        }
        Err(CallError::Failed(why)) => ret.map(|_| Value::Failed(why)),
        Err(CallError::Fault(detail)) => {
            w.contract_violation(format!("attacker:{name}"), detail.clone());
            ret.map(|_| Value::Failed(detail))
        }
    }
}

fn dispatch(w: &mut World, name: &str, args: &[Value]) -> Result<Option<Value>, CallError> {
    let arg = |i: usize| -> Result<&Value, CallError> {
        args.get(i)
            .ok_or_else(|| CallError::Fault(format!("{name}: missing argument {}", i + 1)))
    };
    let rpc = w.protocol().is_rpc();
    let v = match name {
        "att_toBytespub" => match arg(0)? {
            Value::Str(s) if s.is_empty() => return Err(CallError::Failed("empty string".into())),
            Value::Str(s) => Value::Bytes(w.cs.to_string(s)?),
            other => return Err(CallError::Fault(format!("expected string, got {other:?}"))),
        },
        "att_pair" => {
            let (x, y) = (bytes(arg(0)?)?, bytes(arg(1)?)?);
            if x.len() + y.len() + 4 > MAX_ATTACKER_BYTES {
                return Err(CallError::Failed("pair too large".into()));
            }
            Value::Bytes(w.cs.pair(x, y)?)
        }
        "att_fst" => Value::Bytes(w.cs.destruct(bytes(arg(0)?)?)?.0),
        "att_snd" => Value::Bytes(w.cs.destruct(bytes(arg(0)?)?)?.1),
        "att_hmacsha1" => Value::Bytes(w.cs.hmac(bytes(arg(0)?)?, bytes(arg(1)?)?)?),
        "att_hmacsha1Verify" => {
            Value::Bool(w.cs.hmac_verify(bytes(arg(0)?)?, bytes(arg(1)?)?, bytes(arg(2)?)?)?)
        }
        "att_channel_write" => {
            let ch = channel(arg(0)?)?;
            w.attacker_write(ch, bytes(arg(1)?)?.clone());
            return Ok(None);
        }
        "att_channel_read" => match w.attacker_read(channel(arg(0)?)?) {
            Some(b) => Value::Bytes(b),
            None => return Err(CallError::Failed("channel empty".into())),
        },
        "att_setup" if rpc => {
            let (a, b) = (bytes(arg(0)?)?.clone(), bytes(arg(1)?)?.clone());
            Value::Session(rpc::setup(w, &a, &b)?)
        }
        "att_run_client" if rpc => {
            let req = bytes(arg(1)?)?.clone();
            rpc::spawn_client(w, session(arg(0)?)?, req)?;
            return Ok(None);
        }
        "att_run_server" if rpc => {
            rpc::spawn_server(w, session(arg(0)?)?)?;
            return Ok(None);
        }
        "att_compromise_client" if rpc => {
            Value::Bytes(rpc::compromise(w, session(arg(0)?)?, rpc::Side::Client)?)
        }
        "att_compromise_server" if rpc => {
            Value::Bytes(rpc::compromise(w, session(arg(0)?)?, rpc::Side::Server)?)
        }
        "att_getChannel_client" if rpc => {
            Value::Channel(rpc::channel(w, session(arg(0)?)?, rpc::Side::Client)?)
        }
        "att_getChannel_server" if rpc => {
            Value::Channel(rpc::channel(w, session(arg(0)?)?, rpc::Side::Server)?)
        }
        "att_senc" if !rpc => Value::Bytes(w.cs.senc(bytes(arg(0)?)?, bytes(arg(1)?)?)?),
        "att_sdec" if !rpc => Value::Bytes(w.cs.sdec(bytes(arg(0)?)?, bytes(arg(1)?)?)?),
        "att_or_setup" if !rpc => {
            let (a, b) = (bytes(arg(0)?)?.clone(), bytes(arg(1)?)?.clone());
            Value::Session(otway_rees::setup(w, &a, &b)?)
        }
        "att_run_initiator" | "att_run_responder" | "att_run_server" if !rpc => {
            let side = match name {
                "att_run_initiator" => otway_rees::Side::Initiator,
                "att_run_responder" => otway_rees::Side::Responder,
                _ => otway_rees::Side::Server,
            };
            otway_rees::spawn(w, session(arg(0)?)?, side)?;
            return Ok(None);
        }
        "att_getChannel_initiator" | "att_getChannel_responder" | "att_getChannel_server" if !rpc => {
            let side = match name {
                "att_getChannel_initiator" => otway_rees::Side::Initiator,
                "att_getChannel_responder" => otway_rees::Side::Responder,
                _ => otway_rees::Side::Server,
            };
            Value::Channel(otway_rees::channel(w, session(arg(0)?)?, side)?)
        }
        "att_compromise_principal" if !rpc => {
            let p = bytes(arg(0)?)?.clone();
            Value::Bytes(otway_rees::compromise_principal(w, &p)?)
        }
        _ => return Err(CallError::Fault(format!("{name} is not in the {} interface", w.protocol()))),
    };
    Ok(Some(v))
}
