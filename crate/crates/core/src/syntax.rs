//! Parser for the canonical term, usage and event renderings, and for state
//! dumps built from them.

use thiserror::Error;

use crate::codec::ConcreteBytes;
use crate::log::Log;
use crate::term::{Event, HmacKeyUsage, SEncKeyUsage, Term, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{context}at offset {offset}: {msg}")]
pub struct SyntaxError {
    pub context: String,
    pub offset: usize,
    pub msg: String,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Parser<'a> {
        Parser { src, pos: 0 }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            context: String::new(),
            offset: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), SyntaxError> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> Result<&'a str, SyntaxError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .unwrap_or(rest.len());
        if len == 0 {
            return self.err("expected a constructor name");
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn end(&mut self) -> Result<(), SyntaxError> {
        if self.peek().is_some() {
            return self.err("trailing input");
        }
        Ok(())
    }

    /// `0x<hex>` or a double-quoted UTF-8 string.
    fn literal_bytes(&mut self) -> Result<Vec<u8>, SyntaxError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if let Some(body) = rest.strip_prefix('"') {
            let Some(close) = body.find('"') else {
                return self.err("unterminated string");
            };
            self.pos += close + 2;
            return Ok(body.as_bytes()[..close].to_vec());
        }
        let Some(hex) = rest.strip_prefix("0x") else {
            return self.err("expected 0x-prefixed hex or a quoted string");
        };
        let len = hex.find(|c: char| !c.is_ascii_hexdigit()).unwrap_or(hex.len());
        let digits = &hex[..len];
        if digits.len() % 2 != 0 {
            return self.err("odd number of hex digits");
        }
        self.pos += 2 + len;
        Ok((0..digits.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&digits[i..i + 2], 16).expect("validated hex"))
            .collect())
    }

    fn args<const N: usize>(&mut self) -> Result<[Term; N], SyntaxError> {
        self.expect('(')?;
        let mut out = Vec::with_capacity(N);
        for i in 0..N {
            if i > 0 {
                self.expect(',')?;
            }
            out.push(self.term()?);
        }
        self.expect(')')?;
        Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        let start = self.pos;
        match self.ident()? {
            "Literal" => {
                self.expect('(')?;
                let b = self.literal_bytes()?;
                self.expect(')')?;
                Ok(Term::literal(b))
            }
            "Pair" => {
                let [a, b] = self.args()?;
                Ok(Term::pair(a, b))
            }
            "Hmac" => {
                let [a, b] = self.args()?;
                Ok(Term::hmac(a, b))
            }
            "SEnc" => {
                let [a, b] = self.args()?;
                Ok(Term::senc(a, b))
            }
            other => {
                self.pos = start;
                self.err(format!("unknown term constructor `{other}`"))
            }
        }
    }

    fn usage(&mut self) -> Result<Usage, SyntaxError> {
        let start = self.pos;
        match self.ident()? {
            "AttackerGuess" => Ok(Usage::AttackerGuess),
            "HmacKey" => {
                self.expect('(')?;
                let inner = self.pos;
                let u = match self.ident()? {
                    "KeyAB" => {
                        let [a, b] = self.args()?;
                        HmacKeyUsage::KeyAB(a, b)
                    }
                    "KeyABUnbound" => {
                        let [a, b] = self.args()?;
                        HmacKeyUsage::KeyABUnbound(a, b)
                    }
                    "SessionKey" => {
                        let [a, b] = self.args()?;
                        HmacKeyUsage::SessionKey(a, b)
                    }
                    other => {
                        self.pos = inner;
                        return self.err(format!("unknown HMAC key usage `{other}`"));
                    }
                };
                self.expect(')')?;
                Ok(Usage::HmacKey(u))
            }
            "SEncKey" => {
                self.expect('(')?;
                let inner = self.pos;
                if self.ident()? != "PrinKey" {
                    self.pos = inner;
                    return self.err("expected PrinKey");
                }
                let [p] = self.args()?;
                self.expect(')')?;
                Ok(Usage::SEncKey(SEncKeyUsage::PrinKey(p)))
            }
            "Nonce" => {
                self.pos = start;
                self.err("the nonce usage type has no values")
            }
            other => {
                self.pos = start;
                self.err(format!("unknown usage `{other}`"))
            }
        }
    }

    fn event(&mut self) -> Result<Event, SyntaxError> {
        let start = self.pos;
        match self.ident()? {
            "New" => {
                self.expect('(')?;
                let t = self.term()?;
                self.expect(',')?;
                let u = self.usage()?;
                self.expect(')')?;
                Ok(Event::New(t, u))
            }
            "Request" => {
                let [a, b, r] = self.args()?;
                Ok(Event::Request(a, b, r))
            }
            "Response" => {
                let [a, b, r, s] = self.args()?;
                Ok(Event::Response(a, b, r, s))
            }
            "Initiator" => {
                let [p, n, k, b] = self.args()?;
                Ok(Event::Initiator(p, n, k, b))
            }
            "Responder" => {
                let [p, n, k, a] = self.args()?;
                Ok(Event::Responder(p, n, k, a))
            }
            "Bad" => {
                let [p] = self.args()?;
                Ok(Event::Bad(p))
            }
            other => {
                self.pos = start;
                self.err(format!("unknown event `{other}`"))
            }
        }
    }
}

pub fn parse_term(s: &str) -> Result<Term, SyntaxError> {
    let mut p = Parser::new(s);
    let t = p.term()?;
    p.end()?;
    Ok(t)
}

pub fn parse_usage(s: &str) -> Result<Usage, SyntaxError> {
    let mut p = Parser::new(s);
    let u = p.usage()?;
    p.end()?;
    Ok(u)
}

pub fn parse_event(s: &str) -> Result<Event, SyntaxError> {
    let mut p = Parser::new(s);
    let e = p.event()?;
    p.end()?;
    Ok(e)
}

/// Parsed state dump: the log and the table entries.
#[derive(Debug, Default)]
pub struct Dump {
    pub log: Log,
    pub entries: Vec<(ConcreteBytes, Term)>,
}

/// Reads the format written by [`crate::state::CryptoState::dump`]: one
/// `event <event>` or `entry <hex> <term>` per line, `#` comments. A bare
/// event rendering on its own line is accepted as well.
pub fn parse_dump(text: &str) -> Result<Dump, SyntaxError> {
    let mut dump = Dump::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
        if line.is_empty() {
            continue;
        }
        let at_line = |mut e: SyntaxError| {
            e.context = format!("line {}: ", i + 1);
            e
        };
        if let Some(rest) = line.strip_prefix("entry ") {
            let rest = rest.trim_start();
            let (hex, term) = rest.split_once(char::is_whitespace).ok_or_else(|| SyntaxError {
                context: format!("line {}: ", i + 1),
                offset: 0,
                msg: "expected `entry <hex> <term>`".into(),
            })?;
            let bytes = Parser::new(&format!("0x{hex}"))
                .literal_bytes()
                .map_err(at_line)?;
            dump.entries.push((ConcreteBytes::new(bytes), parse_term(term).map_err(at_line)?));
        } else {
            let ev = line.strip_prefix("event ").unwrap_or(line);
            dump.log.add(parse_event(ev).map_err(at_line)?);
        }
    }
    Ok(dump)
}
