//! Jet-space differential polynomials with exact rational coefficients.
//!
//! Every backend speaks [`DiffPoly`]. Atoms cover jet variables, opaque
//! coefficient functions of the fields, and the formal covector arguments
//! `psi^a_i` together with their nonlocal companions `~psi^a_alpha`.

mod calculus;
mod poly;
mod print;

pub use calculus::{
    binom, euler_operator, euler_operator_with, euler_psi, partial_atom, partial_jet, partial_psi, total_derivative,
    total_derivative_at, total_derivative_with, translation_integral, DerivCtx, TildeTable,
};
pub use poly::{DiffPoly, Monomial};

use num_bigint::BigInt;
use num_rational::BigRational;
use smallvec::SmallVec;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Exact rational scalar.
pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qr(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Evaluation point of a quantity; only the distribution backend uses more than `X`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Point {
    X,
    Y,
    Z,
}

impl Point {
    pub const ALL: [Point; 3] = [Point::X, Point::Y, Point::Z];

    pub fn name(self) -> char {
        match self {
            Point::X => 'x',
            Point::Y => 'y',
            Point::Z => 'z',
        }
    }
}

/// `u^field` differentiated `order` times, evaluated at `point`. Fields are 1-based.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct JetVar {
    pub field: u8,
    pub order: u32,
    pub point: Point,
}

impl JetVar {
    pub fn new(field: u8, order: u32) -> Self {
        JetVar { field, order, point: Point::X }
    }

    pub fn at(field: u8, order: u32, point: Point) -> Self {
        JetVar { field, order, point }
    }
}

/// Opaque function of the order-0 fields, e.g. `Gamma^{12}_{1,2}`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct CoeffSym {
    pub name: Arc<str>,
    pub upper: SmallVec<[u8; 3]>,
    pub lower: SmallVec<[u8; 3]>,
    /// Sorted multiset of fields this symbol has been differentiated by.
    pub deriv: SmallVec<[u8; 4]>,
    pub point: Point,
}

impl CoeffSym {
    pub fn new(name: &str, upper: &[u8], lower: &[u8]) -> Self {
        CoeffSym {
            name: Arc::from(name),
            upper: SmallVec::from_slice(upper),
            lower: SmallVec::from_slice(lower),
            deriv: SmallVec::new(),
            point: Point::X,
        }
    }

    pub fn with_deriv(mut self, ks: &[u8]) -> Self {
        self.deriv.extend_from_slice(ks);
        self.deriv.sort_unstable();
        self
    }

    pub fn at(mut self, point: Point) -> Self {
        self.point = point;
        self
    }

    /// `self_{,k}`.
    pub fn differentiated(&self, k: u8) -> Self {
        let mut c = self.clone();
        let pos = c.deriv.iter().position(|&d| d > k).unwrap_or(c.deriv.len());
        c.deriv.insert(pos, k);
        c
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Atom {
    Coeff(CoeffSym),
    Jet(JetVar),
    /// `d^order psi^arg_idx`.
    Psi { arg: u8, idx: u8, order: u32 },
    /// `~psi^arg_tail = D^{-1}(w^i_tail psi^arg_i)`.
    Tilde { arg: u8, tail: u16 },
}

impl Atom {
    pub fn is_jet(&self) -> bool {
        matches!(self, Atom::Jet(_))
    }

    pub fn is_psi_like(&self) -> bool {
        matches!(self, Atom::Psi { .. } | Atom::Tilde { .. })
    }

    pub fn point(&self) -> Option<Point> {
        match self {
            Atom::Coeff(c) => Some(c.point),
            Atom::Jet(j) => Some(j.point),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: u8, n: u8 },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("symbol `{name}` expects {upper} upper and {lower} lower indices")]
    ArityMismatch { name: String, upper: u8, lower: u8 },
}

/// Number of fields plus the declared opaque symbols and their arities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSpec {
    pub n: u8,
    symbols: BTreeMap<Arc<str>, (u8, u8)>,
}

impl FieldSpec {
    pub fn new(n: u8) -> Self {
        assert!(n >= 1, "at least one field");
        FieldSpec { n, symbols: BTreeMap::new() }
    }

    /// Field count with the usual `g`, `Gamma`, `w` symbols of hydrodynamic brackets.
    pub fn hydrodynamic(n: u8) -> Self {
        FieldSpec::new(n)
            .with_symbol("g", 2, 0)
            .with_symbol("Gamma", 2, 1)
            .with_symbol("w", 1, 1)
    }

    pub fn with_symbol(mut self, name: &str, upper: u8, lower: u8) -> Self {
        self.symbols.insert(Arc::from(name), (upper, lower));
        self
    }

    pub fn arity(&self, name: &str) -> Option<(u8, u8)> {
        self.symbols.get(name).copied()
    }

    pub fn symbols(&self) -> impl Iterator<Item = (&str, (u8, u8))> {
        self.symbols.iter().map(|(k, v)| (k.as_ref(), *v))
    }

    pub fn check_index(&self, index: u8) -> Result<(), KernelError> {
        if index == 0 || index > self.n {
            Err(KernelError::IndexOutOfRange { index, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Validated symbol constructor.
    pub fn sym(&self, name: &str, upper: &[u8], lower: &[u8]) -> Result<CoeffSym, KernelError> {
        let (u, l) = self
            .arity(name)
            .ok_or_else(|| KernelError::UnknownSymbol(name.to_string()))?;
        if upper.len() != u as usize || lower.len() != l as usize {
            return Err(KernelError::ArityMismatch { name: name.to_string(), upper: u, lower: l });
        }
        for &i in upper.iter().chain(lower) {
            self.check_index(i)?;
        }
        Ok(CoeffSym::new(name, upper, lower))
    }

    /// Checks that every atom of `p` is well formed for this spec.
    pub fn check(&self, p: &DiffPoly) -> Result<(), KernelError> {
        for (m, _) in p.terms() {
            for (a, _) in m.factors() {
                match a {
                    Atom::Coeff(c) => {
                        let (u, l) = self
                            .arity(&c.name)
                            .ok_or_else(|| KernelError::UnknownSymbol(c.name.to_string()))?;
                        if c.upper.len() != u as usize || c.lower.len() != l as usize {
                            return Err(KernelError::ArityMismatch {
                                name: c.name.to_string(),
                                upper: u,
                                lower: l,
                            });
                        }
                        for &i in c.upper.iter().chain(&c.lower).chain(&c.deriv) {
                            self.check_index(i)?;
                        }
                    }
                    Atom::Jet(j) => self.check_index(j.field)?,
                    Atom::Psi { idx, .. } => self.check_index(*idx)?,
                    Atom::Tilde { .. } => {}
                }
            }
        }
        Ok(())
    }
}

/// Canonical form of `p`. Values are canonical by construction, so this
/// rebuilds the term map and is the identity on well-formed input.
pub fn normalize(p: &DiffPoly) -> DiffPoly {
    DiffPoly::from_terms(p.terms().map(|(m, c)| (m.clone(), c.clone())))
}
