//! Parser for the branch-superposition mini-language.
//!
//! Grammar (whitespace insignificant, ASCII only, no exponent notation in
//! numbers):
//!
//! ```text
//! superposition := alias | ['-'|'+'] term (('+'|'-') term)*
//! alias         := "SWAP" | "CNOT" | "TOFFOLI" | "GHZ" | "W" | "EF"
//! term          := coefficient '*' '[' factor (',' factor)* ']'
//! coefficient   := catom (('+'|'-') catom)*
//! catom         := 'i' | number ['i'] | 'pi' | 'exp' '(' 'i' '*' rexpr ')'
//! rexpr         := ['+'|'-'] rfactor (('*'|'/') rfactor)*
//! rfactor       := number | 'pi'
//! factor        := 'I' | 'X' | 'Y' | 'Z' | 'P0' | 'P1'
//!                | 'H' '(' rexpr ')' | 'Q' '(' rexpr ')'
//!                | 'U' '[' coefficient ',' coefficient ';'
//!                          coefficient ',' coefficient ']'
//! number        := digits ['.' digits]
//! ```
//!
//! Coefficients are rescaled so the squared magnitudes sum to one, so equal
//! superpositions can be written with integer weights: "1*[Z,Z] + 1*[X,X]"
//! is (ZZ + XX)/sqrt(2).  Angles are radians.  `H`/`Q` are half- and
//! quarter-wave plate Jones matrices, not basis kets.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use super::{
    ccu, controlled_unitary, entanglement_filter, ghz_operator, swap_superposition, w_operator,
    BranchSuperposition, BranchTerm, LocalOperator, OperatorError,
};
use crate::opalg::{ComplexMatrix, C64};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at position {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

/// Parses a full superposition expression.
pub fn parse_superposition(src: &str) -> Result<BranchSuperposition, ParseError> {
    match src.trim() {
        "SWAP" => return Ok(swap_superposition()),
        "CNOT" => return Ok(controlled_unitary(&LocalOperator::pauli_x())),
        "TOFFOLI" => return Ok(ccu(&LocalOperator::pauli_x())),
        "GHZ" => return Ok(ghz_operator()),
        "W" => return Ok(w_operator()),
        "EF" => return Ok(entanglement_filter()),
        _ => {}
    }

    let mut cur = Cursor::new(src)?;
    let mut terms = Vec::new();
    let mut term_positions = Vec::new();

    cur.skip_ws();
    let mut sign = 1.0;
    if cur.eat(b'-') {
        sign = -1.0;
    } else {
        cur.eat(b'+');
    }
    loop {
        cur.skip_ws();
        term_positions.push(cur.pos);
        let (coefficient, factors) = parse_term(&mut cur)?;
        terms.push(BranchTerm::new(coefficient * sign, factors));
        cur.skip_ws();
        match cur.peek() {
            None => break,
            Some(b'+') => {
                cur.bump();
                sign = 1.0;
            }
            Some(b'-') => {
                cur.bump();
                sign = -1.0;
            }
            Some(ch) => {
                return Err(cur.error(format!(
                    "expected '+', '-' or end of input, found '{}'",
                    ch as char
                )))
            }
        }
    }

    BranchSuperposition::new(terms).map_err(|e| match e {
        OperatorError::MismatchedParties { index, got, expected } => ParseError {
            position: term_positions[index],
            message: format!("term has {got} factors, expected {expected}"),
        },
        other => ParseError { position: 0, message: other.to_string() },
    })
}

/// Parses a single local-operator token such as "Z", "P1", "H(pi/8)" or
/// "U[0,1;1,0]", requiring the whole input to be consumed.
pub fn parse_local_operator(src: &str) -> Result<LocalOperator, ParseError> {
    let mut cur = Cursor::new(src)?;
    let op = parse_factor(&mut cur)?;
    cur.skip_ws();
    if let Some(ch) = cur.peek() {
        return Err(cur.error(format!("unexpected trailing input '{}'", ch as char)));
    }
    Ok(op)
}

struct Cursor<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        if let Some(position) = src.bytes().position(|b| !b.is_ascii()) {
            return Err(ParseError { position, message: "input must be ASCII".into() });
        }
        Ok(Self { src, bytes: src.as_bytes(), pos: 0 })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    /// Skips whitespace, then consumes `b` if it is next.
    fn eat(&mut self, b: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8, what: &str) -> Result<(), ParseError> {
        if self.eat(b) {
            Ok(())
        } else {
            match self.peek() {
                Some(ch) => Err(self.error(format!("expected {what}, found '{}'", ch as char))),
                None => Err(self.error(format!("expected {what}, found end of input"))),
            }
        }
    }

    /// Skips whitespace, then consumes a keyword followed by a non-alphanumeric
    /// boundary.
    fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let end = self.pos + kw.len();
        if end > self.bytes.len() || &self.src[self.pos..end] != kw {
            return false;
        }
        if self.bytes.get(end).is_some_and(|b| b.is_ascii_alphanumeric()) {
            return false;
        }
        self.pos = end;
        true
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { position: self.pos, message: message.into() }
    }

    fn error_at(&self, position: usize, message: impl Into<String>) -> ParseError {
        ParseError { position, message: message.into() }
    }
}

fn parse_term(cur: &mut Cursor) -> Result<(C64, Vec<LocalOperator>), ParseError> {
    let coefficient = parse_complex_sum(cur)?;
    cur.expect(b'*', "'*' between coefficient and factor list")?;
    cur.expect(b'[', "'[' opening the factor list")?;
    let mut factors = vec![parse_factor(cur)?];
    while cur.eat(b',') {
        factors.push(parse_factor(cur)?);
    }
    cur.expect(b']', "']' closing the factor list")?;
    Ok((coefficient, factors))
}

fn parse_complex_sum(cur: &mut Cursor) -> Result<C64, ParseError> {
    let mut acc = parse_complex_atom(cur)?;
    loop {
        cur.skip_ws();
        // A '+' or '-' here extends the coefficient; the '*' of the factor
        // list ends it.  Term separators are only reachable after a complete
        // term, so the greedy read is unambiguous.
        match cur.peek() {
            Some(b'+') => {
                cur.bump();
                acc += parse_complex_atom(cur)?;
            }
            Some(b'-') => {
                cur.bump();
                acc -= parse_complex_atom(cur)?;
            }
            _ => return Ok(acc),
        }
    }
}

fn parse_complex_atom(cur: &mut Cursor) -> Result<C64, ParseError> {
    cur.skip_ws();
    match cur.peek() {
        Some(b'i') => {
            cur.bump();
            Ok(Complex64::I)
        }
        Some(b'p') => {
            if cur.eat_keyword("pi") {
                Ok(C64::new(PI, 0.0))
            } else {
                Err(cur.error("expected 'pi'"))
            }
        }
        Some(b'e') => {
            if !cur.eat_keyword("exp") {
                return Err(cur.error("expected 'exp'"));
            }
            cur.expect(b'(', "'(' after exp")?;
            cur.expect(b'i', "'i' (exp only takes imaginary arguments, exp(i*x))")?;
            cur.expect(b'*', "'*' after i")?;
            let x = parse_real_expr(cur)?;
            cur.expect(b')', "')' closing exp")?;
            Ok(C64::from_polar(1.0, x))
        }
        Some(b) if b.is_ascii_digit() || b == b'.' => {
            let v = parse_number(cur)?;
            if cur.peek() == Some(b'i') {
                cur.bump();
                Ok(C64::new(0.0, v))
            } else {
                Ok(C64::new(v, 0.0))
            }
        }
        Some(ch) => Err(cur.error(format!(
            "expected a coefficient (number, i, pi or exp(i*x)), found '{}'",
            ch as char
        ))),
        None => Err(cur.error("expected a coefficient, found end of input")),
    }
}

fn parse_real_expr(cur: &mut Cursor) -> Result<f64, ParseError> {
    cur.skip_ws();
    let mut sign = 1.0;
    if cur.eat(b'-') {
        sign = -1.0;
    } else {
        cur.eat(b'+');
    }
    let mut acc = sign * parse_real_factor(cur)?;
    loop {
        cur.skip_ws();
        match cur.peek() {
            Some(b'*') => {
                cur.bump();
                acc *= parse_real_factor(cur)?;
            }
            Some(b'/') => {
                cur.bump();
                let pos = cur.pos;
                let d = parse_real_factor(cur)?;
                if d == 0.0 {
                    return Err(cur.error_at(pos, "division by zero"));
                }
                acc /= d;
            }
            _ => return Ok(acc),
        }
    }
}

fn parse_real_factor(cur: &mut Cursor) -> Result<f64, ParseError> {
    cur.skip_ws();
    match cur.peek() {
        Some(b'p') => {
            if cur.eat_keyword("pi") {
                Ok(PI)
            } else {
                Err(cur.error("expected 'pi'"))
            }
        }
        Some(b) if b.is_ascii_digit() || b == b'.' => parse_number(cur),
        Some(ch) => Err(cur.error(format!("expected a number or 'pi', found '{}'", ch as char))),
        None => Err(cur.error("expected a number or 'pi', found end of input")),
    }
}

fn parse_number(cur: &mut Cursor) -> Result<f64, ParseError> {
    let start = cur.pos;
    let mut seen_dot = false;
    while let Some(b) = cur.peek() {
        if b.is_ascii_digit() {
            cur.bump();
        } else if b == b'.' && !seen_dot {
            seen_dot = true;
            cur.bump();
        } else {
            break;
        }
    }
    let text = &cur.src[start..cur.pos];
    if text.is_empty() || text == "." {
        return Err(cur.error_at(start, "expected a number"));
    }
    let v: f64 = text
        .parse()
        .map_err(|_| cur.error_at(start, format!("invalid number literal '{text}'")))?;
    if !v.is_finite() {
        return Err(cur.error_at(start, format!("number literal '{text}' is out of range")));
    }
    Ok(v)
}

fn parse_factor(cur: &mut Cursor) -> Result<LocalOperator, ParseError> {
    cur.skip_ws();
    let start = cur.pos;
    match cur.peek() {
        Some(b'I') => {
            cur.bump();
            Ok(LocalOperator::identity())
        }
        Some(b'X') => {
            cur.bump();
            Ok(LocalOperator::pauli_x())
        }
        Some(b'Y') => {
            cur.bump();
            Ok(LocalOperator::pauli_y())
        }
        Some(b'Z') => {
            cur.bump();
            Ok(LocalOperator::pauli_z())
        }
        Some(b'P') => {
            cur.bump();
            match cur.bump() {
                Some(b'0') => Ok(LocalOperator::proj0()),
                Some(b'1') => Ok(LocalOperator::proj1()),
                _ => Err(cur.error_at(start, "expected 'P0' or 'P1'")),
            }
        }
        Some(b'H') | Some(b'Q') => {
            let which = cur.bump().unwrap();
            cur.expect(b'(', "'(' after a wave-plate factor")?;
            let theta = parse_real_expr(cur)?;
            cur.expect(b')', "')' closing the wave-plate angle")?;
            let op = if which == b'H' {
                LocalOperator::hwp(theta)
            } else {
                LocalOperator::qwp(theta)
            };
            // Keep the source form as the label so display round-trips.
            let label: String = cur.src[start..cur.pos].split_whitespace().collect();
            Ok(LocalOperator::from_matrix(label, op.matrix().clone()).expect("2x2 by construction"))
        }
        Some(b'U') => {
            cur.bump();
            cur.expect(b'[', "'[' opening the explicit matrix")?;
            let a = parse_complex_sum(cur)?;
            cur.expect(b',', "',' between matrix entries")?;
            let b = parse_complex_sum(cur)?;
            cur.expect(b';', "';' between matrix rows")?;
            let c = parse_complex_sum(cur)?;
            cur.expect(b',', "',' between matrix entries")?;
            let d = parse_complex_sum(cur)?;
            cur.expect(b']', "']' closing the explicit matrix")?;
            let label: String = cur.src[start..cur.pos].split_whitespace().collect();
            let matrix = ComplexMatrix::new(2, 2, vec![a, b, c, d])
                .map_err(|e| cur.error_at(start, e.to_string()))?;
            LocalOperator::from_matrix(label, matrix).map_err(|e| cur.error_at(start, e.to_string()))
        }
        Some(ch) => Err(cur.error(format!(
            "expected a local operator (I, X, Y, Z, P0, P1, H(t), Q(t) or U[a,b;c,d]), found '{}'",
            ch as char
        ))),
        None => Err(cur.error("expected a local operator, found end of input")),
    }
}
