//! Exact symbolic checks of skew-symmetry and the Jacobi identity for weakly
//! nonlocal Poisson brackets.
//!
//! Three independent backends compute the Jacobi obstruction of an operator
//! `P = B^{ij s} D^s + e w^i D^{-1} w^j`:
//!
//! * [`dist`]: the distribution calculus with `delta` and `nu = sgn/2`,
//! * [`schouten`]: the Schouten bracket of variational bivectors,
//! * [`pva`]: lambda-brackets of a Poisson vertex algebra.
//!
//! [`geometry`] supplies an independent oracle for hydrodynamic-type brackets
//! and rewrites residuals modulo its conditions.

pub mod dist;
pub mod geometry;
pub mod kernel;
pub mod operator;
pub mod par;
pub mod pva;
pub mod schouten;

pub use kernel::{Atom, CoeffSym, DiffPoly, FieldSpec, JetVar, Monomial, Point, Q};
pub use operator::WnlOperator;

/// Named residual polynomial; the empty set means the checked identity holds.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Residual {
    pub label: String,
    pub expr: DiffPoly,
}

/// Canonical list of residuals, sorted and free of zeros.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConditionSet {
    items: Vec<Residual>,
}

impl ConditionSet {
    pub fn new() -> Self {
        ConditionSet::default()
    }

    pub fn from_items(it: impl IntoIterator<Item = Residual>) -> Self {
        let mut items: Vec<Residual> = it.into_iter().filter(|r| !r.expr.is_zero()).collect();
        items.sort();
        ConditionSet { items }
    }

    pub fn push(&mut self, label: impl Into<String>, expr: DiffPoly) {
        if !expr.is_zero() {
            let r = Residual { label: label.into(), expr };
            let pos = self.items.binary_search(&r).unwrap_or_else(|e| e);
            self.items.insert(pos, r);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Residual> {
        self.items.iter()
    }

    pub fn exprs(&self) -> impl Iterator<Item = &DiffPoly> {
        self.items.iter().map(|r| &r.expr)
    }

    pub fn extend(&mut self, other: ConditionSet) {
        for r in other.items {
            self.push(r.label, r.expr);
        }
    }

    pub fn find(&self, label: &str) -> Option<&DiffPoly> {
        self.items.iter().find(|r| r.label == label).map(|r| &r.expr)
    }
}

impl IntoIterator for ConditionSet {
    type Item = Residual;
    type IntoIter = std::vec::IntoIter<Residual>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.into_iter()
    }
}
