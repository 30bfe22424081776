//! Expression grammar for coefficients.
//!
//! ```text
//! expr    := ['-'] term (('+' | '-') term)*
//! term    := factor ('*' factor)*
//! factor  := '-' factor | primary ['^' int]
//! primary := int ['/' int] | jet | symbol | '(' expr ')'
//! jet     := 'u' int ['_' 'x'+ | '@' int]
//! symbol  := name ['[' int (',' int)* ']'] (',' int)*
//! ```
//!
//! Whitespace may separate tokens. Symbol indices are split into upper and
//! lower ones by the arity declared in the [`FieldSpec`]; trailing `,k` are
//! derivatives by `u^k`. This is the format `DiffPoly` prints.

use wnl_core::kernel::KernelError;
use wnl_core::{DiffPoly, FieldSpec, Q};

/// Error with the 1-based column in the original string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExprError {
    pub column: usize,
    pub kind: ExprErrorKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprErrorKind {
    Syntax(String),
    Kernel(KernelError),
}

impl std::fmt::Display for ExprError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            ExprErrorKind::Syntax(m) => write!(f, "column {}: {m}", self.column),
            ExprErrorKind::Kernel(e) => write!(f, "column {}: {e}", self.column),
        }
    }
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    spec: &'a FieldSpec,
}

pub fn parse_expr(src: &str, spec: &FieldSpec) -> Result<DiffPoly, ExprError> {
    let chars = src.chars().enumerate().map(|(i, c)| (i + 1, c)).collect();
    let mut p = Parser { chars, pos: 0, spec };
    if p.peek().is_none() {
        return Err(p.error("empty expression"));
    }
    let e = p.expr()?;
    match p.peek() {
        None => Ok(e),
        Some(c) => Err(p.error(format!("unexpected `{c}`"))),
    }
}

impl Parser<'_> {
    fn raw(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    /// Next non-blank character.
    fn peek(&mut self) -> Option<char> {
        while self.raw().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
        self.raw()
    }

    fn column(&self) -> usize {
        self.chars.get(self.pos).map_or(self.chars.len() + 1, |&(i, _)| i)
    }

    fn error(&self, msg: impl Into<String>) -> ExprError {
        ExprError { column: self.column(), kind: ExprErrorKind::Syntax(msg.into()) }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn digits(&mut self) -> Option<String> {
        self.peek();
        let start = self.pos;
        while self.raw().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.chars[start..self.pos].iter().map(|&(_, c)| c).collect())
    }

    fn small(&mut self, what: &str) -> Result<u32, ExprError> {
        self.peek();
        let col = self.column();
        let d = self.digits().ok_or_else(|| self.error(format!("expected {what}")))?;
        d.parse().map_err(|_| ExprError { column: col, kind: ExprErrorKind::Syntax(format!("{what} too large")) })
    }

    fn index(&mut self) -> Result<u8, ExprError> {
        self.peek();
        let col = self.column();
        let k = self.small("an index")?;
        let k = u8::try_from(k).map_err(|_| ExprError { column: col, kind: ExprErrorKind::Syntax("index too large".into()) })?;
        self.spec.check_index(k).map_err(|e| ExprError { column: col, kind: ExprErrorKind::Kernel(e) })?;
        Ok(k)
    }

    fn expr(&mut self) -> Result<DiffPoly, ExprError> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc += self.term()?;
            } else if self.eat('-') {
                acc -= self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<DiffPoly, ExprError> {
        let mut acc = self.factor()?;
        while self.eat('*') {
            acc = &acc * &self.factor()?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<DiffPoly, ExprError> {
        if self.eat('-') {
            return Ok(-self.factor()?);
        }
        let base = self.primary()?;
        if self.eat('^') {
            let e = self.small("an exponent")?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<DiffPoly, ExprError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<DiffPoly, ExprError> {
        let num = self.digits().unwrap();
        let text = if self.eat('/') {
            self.peek();
            let col = self.column();
            let den = self.digits().ok_or_else(|| self.error("expected a denominator"))?;
            if den.bytes().all(|b| b == b'0') {
                return Err(ExprError { column: col, kind: ExprErrorKind::Syntax("zero denominator".into()) });
            }
            format!("{num}/{den}")
        } else {
            num
        };
        let q: Q = text.parse().map_err(|_| self.error("malformed number"))?;
        Ok(DiffPoly::constant(q))
    }

    fn name(&mut self) -> Result<DiffPoly, ExprError> {
        let col = self.column();
        let start = self.pos;
        while self.raw().is_some_and(|c| c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
        if name.strip_prefix('u').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())) {
            self.pos = start + 1;
            let field = self.index()?;
            let order = if self.eat('_') {
                let mut k = 0;
                while self.eat('x') {
                    k += 1;
                }
                if k == 0 {
                    return Err(self.error("expected `x` after `_`"));
                }
                k
            } else if self.eat('@') {
                self.small("a jet order")?
            } else {
                0
            };
            return Ok(DiffPoly::jet(field, order));
        }
        let mut idx = Vec::new();
        if self.eat('[') {
            idx.push(self.index()?);
            while self.eat(',') {
                idx.push(self.index()?);
            }
            self.expect(']')?;
        }
        let mut deriv = Vec::new();
        while self.eat(',') {
            deriv.push(self.index()?);
        }
        let kernel = |e| ExprError { column: col, kind: ExprErrorKind::Kernel(e) };
        let (up, _) = self.spec.arity(&name).ok_or_else(|| kernel(KernelError::UnknownSymbol(name.clone())))?;
        let split = (up as usize).min(idx.len());
        let sym = self.spec.sym(&name, &idx[..split], &idx[split..]).map_err(kernel)?;
        Ok(DiffPoly::sym(sym.with_deriv(&deriv)))
    }
}
