//! Attack programs: a line-based, straight-line, single-assignment language
//! over the attacker interface.
//!
//! ```text
//! let <var> : <type>        # string, bool, bytespub, channel, session
//! <var> = "<text>"          # \\, \" and \xNN escapes
//! <var> = <fn>(<args>)
//! <fn>(<args>)
//! ```
//!
//! Statements end at a newline or `;`. `#` starts a comment.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use super::interface::{lookup, AttType};
use crate::world::Protocol;

/// A rejected program. `item` is the number of the violated grammar rule:
///
/// 1. declarations have the form `let x : T` with a known type `T`, once per
///    name;
/// 2. commands are a call-assignment, a procedure call or a string
///    assignment;
/// 3. a variable is assigned at most once and every variable is declared;
/// 4. call arguments are assigned earlier;
/// 5. the called function exists in the interface and argument types match
///    its parameters;
/// 6. an assignment target has the function's result type, or `string` for a
///    string literal.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: grammar item {item}: {msg}")]
pub struct DslError {
    pub line: usize,
    pub item: u8,
    pub msg: String,
}

fn fail<T>(line: usize, item: u8, msg: impl Into<String>) -> Result<T, DslError> {
    Err(DslError {
        line,
        item,
        msg: msg.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decl {
    pub name: String,
    pub ty: AttType,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CommandKind {
    AssignStr { target: String, text: Vec<u8> },
    CallAssign { target: String, func: String, args: Vec<String> },
    Call { func: String, args: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Command {
    pub kind: CommandKind,
    pub line: usize,
}

impl Command {
    pub fn new(kind: CommandKind) -> Command {
        Command { kind, line: 0 }
    }

    pub fn target(&self) -> Option<&str> {
        match &self.kind {
            CommandKind::AssignStr { target, .. } | CommandKind::CallAssign { target, .. } => {
                Some(target)
            }
            CommandKind::Call { .. } => None,
        }
    }

    pub fn call(&self) -> Option<(&str, &[String])> {
        match &self.kind {
            CommandKind::CallAssign { func, args, .. } | CommandKind::Call { func, args } => {
                Some((func, args))
            }
            CommandKind::AssignStr { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub commands: Vec<Command>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(Vec<u8>),
    Punct(char),
}

fn lex_line(text: &str, line: usize) -> Result<Vec<Vec<Tok>>, DslError> {
    let mut stmts = vec![Vec::new()];
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '#' => break,
            ';' => stmts.push(Vec::new()),
            c if c.is_whitespace() => {}
            ':' | '=' | '(' | ')' | ',' => stmts.last_mut().unwrap().push(Tok::Punct(c)),
            '"' => {
                let mut out = Vec::new();
                loop {
                    match chars.next() {
                        None => return fail(line, 2, "unterminated string literal"),
                        Some((_, '"')) => break,
                        Some((_, '\\')) => match chars.next() {
                            Some((_, '\\')) => out.push(b'\\'),
                            Some((_, '"')) => out.push(b'"'),
                            Some((_, 'x')) => {
                                let hex: String = (0..2).filter_map(|_| chars.next().map(|(_, h)| h)).collect();
                                match u8::from_str_radix(&hex, 16) {
                                    Ok(b) if hex.len() == 2 => out.push(b),
                                    _ => return fail(line, 2, format!("bad escape \\x{hex}")),
                                }
                            }
                            other => {
                                return fail(line, 2, format!("unknown escape {:?}", other.map(|(_, c)| c)))
                            }
                        },
                        Some((_, c)) => {
                            let mut buf = [0; 4];
                            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                        }
                    }
                }
                stmts.last_mut().unwrap().push(Tok::Str(out));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = i + c.len_utf8();
                while let Some(&(j, d)) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        chars.next();
                        end = j + d.len_utf8();
                    } else {
                        break;
                    }
                }
                stmts.last_mut().unwrap().push(Tok::Ident(text[i..end].to_string()));
            }
            other => return fail(line, 2, format!("unexpected character {other:?}")),
        }
    }
    Ok(stmts.into_iter().filter(|s| !s.is_empty()).collect())
}

fn parse_args(toks: &[Tok], line: usize) -> Result<Vec<String>, DslError> {
    // toks: `( a , b , ... )`
    let n = toks.len();
    if n < 2 || toks[0] != Tok::Punct('(') || toks[n - 1] != Tok::Punct(')') {
        return fail(line, 2, "expected a parenthesised argument list");
    }
    let inner = &toks[1..n - 1];
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    let mut args = Vec::new();
    for (i, t) in inner.iter().enumerate() {
        match (i % 2, t) {
            (0, Tok::Ident(name)) => args.push(name.clone()),
            (1, Tok::Punct(',')) => {}
            _ => return fail(line, 2, "arguments must be variable names separated by commas"),
        }
    }
    if inner.len().is_multiple_of(2) {
        return fail(line, 2, "trailing comma in argument list");
    }
    Ok(args)
}

fn parse_stmt(toks: &[Tok], line: usize, prog: &mut Program) -> Result<(), DslError> {
    use Tok::*;
    match toks {
        [Ident(kw), rest @ ..] if kw == "let" => match rest {
            [Ident(name), Punct(':'), Ident(ty)] => {
                let Ok(ty) = ty.parse::<AttType>() else {
                    return fail(line, 1, format!("unknown type `{ty}`"));
                };
                prog.decls.push(Decl {
                    name: name.clone(),
                    ty,
                    line,
                });
                Ok(())
            }
            _ => fail(line, 1, "expected `let <name> : <type>`"),
        },
        [Ident(target), Punct('='), Str(text)] => {
            prog.commands.push(Command {
                kind: CommandKind::AssignStr {
                    target: target.clone(),
                    text: text.clone(),
                },
                line,
            });
            Ok(())
        }
        [Ident(target), Punct('='), Ident(func), args @ ..] => {
            let args = parse_args(args, line)?;
            prog.commands.push(Command {
                kind: CommandKind::CallAssign {
                    target: target.clone(),
                    func: func.clone(),
                    args,
                },
                line,
            });
            Ok(())
        }
        [Ident(func), args @ ..] => {
            let args = parse_args(args, line)?;
            prog.commands.push(Command {
                kind: CommandKind::Call {
                    func: func.clone(),
                    args,
                },
                line,
            });
            Ok(())
        }
        _ => fail(line, 2, "not a declaration, assignment or call"),
    }
}

/// Parses without checking the grammar constraints against an interface.
pub fn parse(text: &str) -> Result<Program, DslError> {
    let mut prog = Program::default();
    for (i, l) in text.lines().enumerate() {
        for stmt in lex_line(l, i + 1)? {
            parse_stmt(&stmt, i + 1, &mut prog)?;
        }
    }
    Ok(prog)
}

/// Parses and validates against the interface of `protocol`.
pub fn parse_attack(text: &str, protocol: Protocol) -> Result<Program, DslError> {
    let prog = parse(text)?;
    prog.validate(protocol)?;
    Ok(prog)
}

impl Program {
    pub fn validate(&self, protocol: Protocol) -> Result<(), DslError> {
        let mut types: HashMap<&str, AttType> = HashMap::new();
        for d in &self.decls {
            if types.insert(&d.name, d.ty).is_some() {
                return fail(d.line, 1, format!("`{}` is declared twice", d.name));
            }
        }
        let mut assigned: HashMap<&str, usize> = HashMap::new();
        for c in &self.commands {
            if let Some((func, args)) = c.call() {
                for a in args {
                    if !types.contains_key(a.as_str()) {
                        return fail(c.line, 3, format!("`{a}` is not declared"));
                    }
                    if !assigned.contains_key(a.as_str()) {
                        return fail(c.line, 4, format!("`{a}` is used before it is assigned"));
                    }
                }
                let Some(sig) = lookup(protocol, func) else {
                    return fail(
                        c.line,
                        5,
                        format!("`{func}` is not in the {protocol} interface"),
                    );
                };
                if sig.params.len() != args.len() {
                    return fail(
                        c.line,
                        5,
                        format!("`{func}` takes {} arguments, got {}", sig.params.len(), args.len()),
                    );
                }
                for (a, want) in args.iter().zip(sig.params) {
                    let got = types[a.as_str()];
                    if got != *want {
                        return fail(
                            c.line,
                            5,
                            format!("`{a}` has type {got}, `{func}` expects {want}"),
                        );
                    }
                }
            }
            if let Some(target) = c.target() {
                let Some(&ty) = types.get(target) else {
                    return fail(c.line, 3, format!("`{target}` is not declared"));
                };
                if let Some(prev) = assigned.insert(target, c.line) {
                    return fail(
                        c.line,
                        3,
                        format!("`{target}` was already assigned on line {prev}"),
                    );
                }
                let want = match &c.kind {
                    CommandKind::AssignStr { .. } => Some(AttType::Str),
                    CommandKind::CallAssign { func, .. } => lookup(protocol, func).and_then(|s| s.ret),
                    CommandKind::Call { .. } => unreachable!(),
                };
                match want {
                    Some(w) if w == ty => {}
                    Some(w) => {
                        return fail(
                            c.line,
                            6,
                            format!("`{target}` has type {ty}, but the value has type {w}"),
                        )
                    }
                    None => {
                        return fail(c.line, 6, format!("`{target}` is assigned from a procedure"))
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn escape(text: &[u8]) -> String {
    let mut s = String::new();
    for &b in text {
        match b {
            b'"' => s.push_str("\\\""),
            b'\\' => s.push_str("\\\\"),
            0x20..=0x7e => s.push(b as char),
            _ => {
                let _ = write!(s, "\\x{b:02x}");
            }
        }
    }
    s
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CommandKind::AssignStr { target, text } => write!(f, "{target} = \"{}\"", escape(text)),
            CommandKind::CallAssign { target, func, args } => {
                write!(f, "{target} = {func}({})", args.join(", "))
            }
            CommandKind::Call { func, args } => write!(f, "{func}({})", args.join(", ")),
        }
    }
}

/// Canonical form: declarations first, then commands, one per line.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            writeln!(f, "let {} : {}", d.name, d.ty)?;
        }
        for c in &self.commands {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}
