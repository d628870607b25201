//! Textual contract syntax: tokenizer, recursive-descent parser and
//! canonical pretty-printer.
//!
//! ```text
//! contract C1_timing {
//!   input pc_data: real;
//!   output c1_data: real;
//!   assume pc_data in [0, 1];
//!   guarantee timing period 150 ms deadline 10 ms;
//! }
//!
//! contract C3_colour {
//!   input data_sensor: real;
//!   output data_out: real;
//!   guarantee set data_out in [750, 755] [568, 590] [535, 558];
//! }
//!
//! contract C6_duty {
//!   output c6_data: real;
//!   guarantee bound c6_data in [0, 100];
//! }
//!
//! contract C7_pressure {
//!   input p_obs: real;
//!   guarantee envelope p_obs k1 -0.5 k2 100 tol 0.05;
//! }
//! ```
//!
//! `//` starts a line comment. A file may hold any number of contract
//! blocks. `assume` lines are optional; none means the contract makes no
//! assumptions.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Assumption, Contract, Direction, GuaranteeKind, Interval, PortDecl};
use crate::value::Domain;

#[derive(Debug, Error, PartialEq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src[self.pos..].chars().next()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, msg: msg.into() }
    }

    fn next_token(&mut self) -> Result<Spanned, ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.src[self.pos..].starts_with("//") => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let tok = match self.peek() {
            None => Tok::Eof,
            Some('{') => {
                self.bump();
                Tok::LBrace
            }
            Some('}') => {
                self.bump();
                Tok::RBrace
            }
            Some('[') => {
                self.bump();
                Tok::LBracket
            }
            Some(']') => {
                self.bump();
                Tok::RBracket
            }
            Some(':') => {
                self.bump();
                Tok::Colon
            }
            Some(';') => {
                self.bump();
                Tok::Semi
            }
            Some(',') => {
                self.bump();
                Tok::Comma
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = self.pos;
                self.bump();
                while let Some(c) = self.peek() {
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '-' || c == '+'
                    {
                        // allow exponent signs only right after e/E
                        if (c == '-' || c == '+')
                            && !matches!(
                                self.src[start..self.pos].chars().last(),
                                Some('e') | Some('E')
                            )
                        {
                            break;
                        }
                        self.bump();
                    } else {
                        break;
                    }
                }
                let text = &self.src[start..self.pos];
                let v: f64 = text
                    .parse()
                    .map_err(|_| ParseError { line, col, msg: format!("bad number `{text}`") })?;
                Tok::Number(v)
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            Some(c) => return Err(self.error(format!("unexpected character `{c}`"))),
        };
        Ok(Spanned { tok, line, col })
    }
}

struct Parser {
    toks: Vec<Spanned>,
    idx: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        let mut lex = Lexer::new(src);
        let mut toks = Vec::new();
        loop {
            let t = lex.next_token()?;
            let eof = t.tok == Tok::Eof;
            toks.push(t);
            if eof {
                break;
            }
        }
        Ok(Parser { toks, idx: 0 })
    }

    fn peek(&self) -> &Spanned {
        &self.toks[self.idx]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn err_at(t: &Spanned, msg: impl Into<String>) -> ParseError {
        ParseError { line: t.line, col: t.col, msg: msg.into() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        let t = self.bump();
        if t.tok == tok {
            Ok(())
        } else {
            Err(Self::err_at(&t, format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Ident(s) => Ok(s),
            _ => Err(Self::err_at(&t, format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let t = self.bump();
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(()),
            _ => Err(Self::err_at(&t, format!("expected `{kw}`"))),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Number(v) => Ok(v),
            _ => Err(Self::err_at(&t, format!("expected {what}"))),
        }
    }

    /// `[lo, hi]`
    fn interval(&mut self) -> Result<Interval, ParseError> {
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.number("interval low endpoint")?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.number("interval high endpoint")?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok(Interval { lo, hi })
    }

    fn domain(&mut self) -> Result<Domain, ParseError> {
        let t = self.bump();
        match &t.tok {
            Tok::Ident(s) => match s.as_str() {
                "real" => Ok(Domain::Real),
                "integer" => Ok(Domain::Integer),
                "boolean" => Ok(Domain::Boolean),
                other => Err(Self::err_at(&t, format!("unknown domain `{other}`"))),
            },
            _ => Err(Self::err_at(&t, "expected port domain")),
        }
    }

    /// duration: `<number> ms`
    fn duration_ms(&mut self, what: &str) -> Result<f64, ParseError> {
        let v = self.number(what)?;
        self.keyword("ms")?;
        Ok(v)
    }

    fn guarantee(&mut self) -> Result<GuaranteeKind, ParseError> {
        let t = self.bump();
        let kw = match &t.tok {
            Tok::Ident(s) => s.clone(),
            Tok::Semi => return Err(Self::err_at(&t, "empty guarantee block")),
            _ => return Err(Self::err_at(&t, "expected guarantee kind")),
        };
        match kw.as_str() {
            "timing" => {
                self.keyword("period")?;
                let period_ms = self.duration_ms("period")?;
                self.keyword("deadline")?;
                let deadline_ms = self.duration_ms("deadline")?;
                Ok(GuaranteeKind::Timing { period_ms, deadline_ms })
            }
            "bound" => {
                let port = self.ident("port name")?;
                self.keyword("in")?;
                let interval = self.interval()?;
                Ok(GuaranteeKind::Bound { port, interval })
            }
            "set" => {
                let port = self.ident("port name")?;
                self.keyword("in")?;
                let mut intervals = vec![self.interval()?];
                while self.peek().tok == Tok::LBracket {
                    intervals.push(self.interval()?);
                }
                Ok(GuaranteeKind::SetMembership { port, intervals })
            }
            "envelope" => {
                let port = self.ident("port name")?;
                self.keyword("k1")?;
                let k1 = self.number("k1")?;
                self.keyword("k2")?;
                let k2 = self.number("k2")?;
                self.keyword("tol")?;
                let rel_tol = self.number("tol")?;
                Ok(GuaranteeKind::Envelope { port, k1, k2, rel_tol })
            }
            other => Err(Self::err_at(&t, format!("unknown guarantee keyword `{other}`"))),
        }
    }

    fn contract(&mut self) -> Result<Contract, ParseError> {
        self.keyword("contract")?;
        let id = self.ident("contract id")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut assumptions = Vec::new();
        let mut guarantee = None;
        loop {
            let t = self.bump();
            match &t.tok {
                Tok::RBrace => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "input" | "output" => {
                        let name = self.ident("port name")?;
                        self.expect(Tok::Colon, "`:`")?;
                        let domain = self.domain()?;
                        self.expect(Tok::Semi, "`;`")?;
                        let direction = if kw == "input" { Direction::In } else { Direction::Out };
                        let decl = PortDecl { name, domain, direction };
                        if kw == "input" {
                            inputs.push(decl);
                        } else {
                            outputs.push(decl);
                        }
                    }
                    "assume" => {
                        let port = self.ident("port name")?;
                        self.keyword("in")?;
                        let interval = self.interval()?;
                        self.expect(Tok::Semi, "`;`")?;
                        assumptions.push(Assumption { port, interval });
                    }
                    "guarantee" => {
                        if guarantee.is_some() {
                            return Err(Self::err_at(&t, "duplicate guarantee"));
                        }
                        guarantee = Some(self.guarantee()?);
                        self.expect(Tok::Semi, "`;`")?;
                    }
                    other => {
                        return Err(Self::err_at(&t, format!("unexpected keyword `{other}`")))
                    }
                },
                _ => return Err(Self::err_at(&t, "expected declaration or `}`")),
            }
        }
        let guarantee = guarantee.ok_or_else(|| {
            Self::err_at(self.peek(), format!("contract `{id}` has no guarantee"))
        })?;
        Ok(Contract { id, inputs, outputs, assumptions, guarantee })
    }
}

/// Parses exactly one contract.
pub fn parse_contract(text: &str) -> Result<Contract, ParseError> {
    let contracts = parse_contracts(text)?;
    match contracts.len() {
        1 => Ok(contracts.into_iter().next().unwrap()),
        n => Err(ParseError { line: 1, col: 1, msg: format!("expected 1 contract, found {n}") }),
    }
}

/// Parses every contract block in a file.
pub fn parse_contracts(text: &str) -> Result<Vec<Contract>, ParseError> {
    let mut p = Parser::new(text)?;
    let mut out = Vec::new();
    while p.peek().tok != Tok::Eof {
        out.push(p.contract()?);
    }
    Ok(out)
}

fn fmt_num(v: f64) -> String {
    // shortest round-trip representation
    format!("{v}")
}

/// Canonical textual form; `parse(print(c)) == c`.
pub fn print_contract(c: &Contract) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "contract {} {{", c.id);
    for p in &c.inputs {
        let _ = writeln!(s, "  input {}: {};", p.name, p.domain);
    }
    for p in &c.outputs {
        let _ = writeln!(s, "  output {}: {};", p.name, p.domain);
    }
    for a in &c.assumptions {
        let _ = writeln!(
            s,
            "  assume {} in [{}, {}];",
            a.port,
            fmt_num(a.interval.lo),
            fmt_num(a.interval.hi)
        );
    }
    match &c.guarantee {
        GuaranteeKind::Timing { period_ms, deadline_ms } => {
            let _ = writeln!(
                s,
                "  guarantee timing period {} ms deadline {} ms;",
                fmt_num(*period_ms),
                fmt_num(*deadline_ms)
            );
        }
        GuaranteeKind::Bound { port, interval } => {
            let _ = writeln!(
                s,
                "  guarantee bound {} in [{}, {}];",
                port,
                fmt_num(interval.lo),
                fmt_num(interval.hi)
            );
        }
        GuaranteeKind::SetMembership { port, intervals } => {
            let ivs: Vec<String> = intervals
                .iter()
                .map(|iv| format!("[{}, {}]", fmt_num(iv.lo), fmt_num(iv.hi)))
                .collect();
            let _ = writeln!(s, "  guarantee set {} in {};", port, ivs.join(" "));
        }
        GuaranteeKind::Envelope { port, k1, k2, rel_tol } => {
            let _ = writeln!(
                s,
                "  guarantee envelope {} k1 {} k2 {} tol {};",
                port,
                fmt_num(*k1),
                fmt_num(*k2),
                fmt_num(*rel_tol)
            );
        }
    }
    s.push_str("}\n");
    s
}
