use super::{q, Atom, CoeffSym, JetVar, Point, Q};
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Product of atom powers, sorted by atom with positive exponents.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Monomial(Vec<(Atom, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn atom(a: Atom) -> Self {
        Monomial(vec![(a, 1)])
    }

    pub fn power(a: Atom, e: u32) -> Self {
        if e == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(a, e)])
        }
    }

    /// Builds a monomial from unsorted factors, merging repeats.
    pub fn from_factors(mut fs: Vec<(Atom, u32)>) -> Self {
        fs.retain(|(_, e)| *e > 0);
        fs.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Atom, u32)> = Vec::with_capacity(fs.len());
        for (a, e) in fs {
            match out.last_mut() {
                Some((b, f)) if *b == a => *f += e,
                _ => out.push((a, e)),
            }
        }
        Monomial(out)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> &[(Atom, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn exponent(&self, a: &Atom) -> u32 {
        self.0
            .binary_search_by(|(b, _)| b.cmp(a))
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a[i].0.clone(), a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    pub fn divides(&self, other: &Monomial) -> bool {
        self.0.iter().all(|(a, e)| other.exponent(a) >= *e)
    }

    /// `other / self`, assuming `self.divides(other)`.
    pub fn quotient_of(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(other.0.len());
        for (a, e) in &other.0 {
            let d = self.exponent(a);
            if *e > d {
                out.push((a.clone(), e - d));
            }
        }
        Monomial(out)
    }

    /// Removes one power of the factor at position `k`.
    pub fn without_one(&self, k: usize) -> Monomial {
        let mut v = self.0.clone();
        if v[k].1 == 1 {
            v.remove(k);
        } else {
            v[k].1 -= 1;
        }
        Monomial(v)
    }

    /// Splits into the part whose atoms satisfy `pred` and the rest.
    pub fn split(&self, pred: impl Fn(&Atom) -> bool) -> (Monomial, Monomial) {
        let (a, b): (Vec<_>, Vec<_>) = self.0.iter().cloned().partition(|(x, _)| pred(x));
        (Monomial(a), Monomial(b))
    }

    /// Graded lexicographic comparison on exponent vectors (a monomial order).
    pub fn cmp_grlex(&self, other: &Monomial) -> std::cmp::Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            // Larger exponent on the smallest differing atom wins.
            let (a, b) = (&self.0, &other.0);
            let (mut i, mut j) = (0, 0);
            loop {
                match (a.get(i), b.get(j)) {
                    (None, None) => return std::cmp::Ordering::Equal,
                    (Some(_), None) => return std::cmp::Ordering::Greater,
                    (None, Some(_)) => return std::cmp::Ordering::Less,
                    (Some((x, e)), Some((y, f))) => match x.cmp(y) {
                        std::cmp::Ordering::Less => return std::cmp::Ordering::Greater,
                        std::cmp::Ordering::Greater => return std::cmp::Ordering::Less,
                        std::cmp::Ordering::Equal => {
                            if e != f {
                                return e.cmp(f);
                            }
                            i += 1;
                            j += 1;
                        }
                    },
                }
            }
        })
    }
}

/// Finite sum of monomials with nonzero rational coefficients.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct DiffPoly {
    terms: BTreeMap<Monomial, Q>,
}

impl DiffPoly {
    pub fn zero() -> Self {
        DiffPoly::default()
    }

    pub fn one() -> Self {
        DiffPoly::constant(q(1))
    }

    pub fn constant(c: Q) -> Self {
        DiffPoly::term(Monomial::one(), c)
    }

    pub fn int(c: i64) -> Self {
        DiffPoly::constant(q(c))
    }

    pub fn term(m: Monomial, c: Q) -> Self {
        let mut p = DiffPoly::zero();
        p.add_term(m, c);
        p
    }

    pub fn atom(a: Atom) -> Self {
        DiffPoly::term(Monomial::atom(a), q(1))
    }

    /// `u^field_order` at `x`.
    pub fn jet(field: u8, order: u32) -> Self {
        DiffPoly::atom(Atom::Jet(JetVar::new(field, order)))
    }

    pub fn jet_at(field: u8, order: u32, point: Point) -> Self {
        DiffPoly::atom(Atom::Jet(JetVar::at(field, order, point)))
    }

    pub fn sym(c: CoeffSym) -> Self {
        DiffPoly::atom(Atom::Coeff(c))
    }

    pub fn psi(arg: u8, idx: u8, order: u32) -> Self {
        DiffPoly::atom(Atom::Psi { arg, idx, order })
    }

    pub fn tilde(arg: u8, tail: u16) -> Self {
        DiffPoly::atom(Atom::Tilde { arg, tail })
    }

    pub fn from_terms(it: impl IntoIterator<Item = (Monomial, Q)>) -> Self {
        let mut p = DiffPoly::zero();
        for (m, c) in it {
            p.add_term(m, c);
        }
        p
    }

    pub fn sum(it: impl IntoIterator<Item = DiffPoly>) -> Self {
        let mut acc = DiffPoly::zero();
        for p in it {
            acc += p;
        }
        acc
    }

    pub fn add_term(&mut self, m: Monomial, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Q)> + ExactSizeIterator {
        self.terms.iter()
    }

    pub fn into_terms(self) -> impl Iterator<Item = (Monomial, Q)> {
        self.terms.into_iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Q {
        self.terms.get(m).cloned().unwrap_or_else(Q::zero)
    }

    /// The constant term, if the polynomial is a constant.
    pub fn as_constant(&self) -> Option<Q> {
        match self.terms.len() {
            0 => Some(Q::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn scale(&self, c: &Q) -> DiffPoly {
        if c.is_zero() {
            return DiffPoly::zero();
        }
        DiffPoly { terms: self.terms.iter().map(|(m, d)| (m.clone(), d * c)).collect() }
    }

    pub fn mul_monomial(&self, m: &Monomial, c: &Q) -> DiffPoly {
        if c.is_zero() {
            return DiffPoly::zero();
        }
        // Multiplying by a monomial is injective, so no merging is needed.
        DiffPoly { terms: self.terms.iter().map(|(n, d)| (n.mul(m), d * c)).collect() }
    }

    pub fn pow(&self, e: u32) -> DiffPoly {
        let mut acc = DiffPoly::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Replaces atoms by polynomials; `f` returns `None` to keep an atom.
    pub fn substitute(&self, f: &dyn Fn(&Atom) -> Option<DiffPoly>) -> DiffPoly {
        let mut cache: BTreeMap<Atom, Option<DiffPoly>> = BTreeMap::new();
        let mut out = DiffPoly::zero();
        for (m, c) in &self.terms {
            let mut kept = Vec::new();
            let mut acc = DiffPoly::constant(c.clone());
            for (a, e) in m.factors() {
                let img = cache.entry(a.clone()).or_insert_with(|| f(a));
                match img {
                    Some(p) => acc = &acc * &p.pow(*e),
                    None => kept.push((a.clone(), *e)),
                }
                if acc.is_zero() {
                    break;
                }
            }
            if !acc.is_zero() {
                out += acc.mul_monomial(&Monomial::from_factors(kept), &q(1));
            }
        }
        out
    }

    /// Renames atoms one-for-one.
    pub fn map_atoms(&self, f: &dyn Fn(&Atom) -> Atom) -> DiffPoly {
        DiffPoly::from_terms(self.terms.iter().map(|(m, c)| {
            (Monomial::from_factors(m.factors().iter().map(|(a, e)| (f(a), *e)).collect()), c.clone())
        }))
    }

    /// Moves every jet and coefficient symbol at `from` to `to`.
    pub fn retag(&self, from: Point, to: Point) -> DiffPoly {
        if from == to {
            return self.clone();
        }
        self.map_atoms(&|a| match a {
            Atom::Jet(j) if j.point == from => Atom::Jet(JetVar { point: to, ..*j }),
            Atom::Coeff(c) if c.point == from => Atom::Coeff(c.clone().at(to)),
            _ => a.clone(),
        })
    }

    /// Groups terms by the sub-monomial of atoms satisfying `pred`.
    pub fn split_by(&self, pred: impl Fn(&Atom) -> bool) -> BTreeMap<Monomial, DiffPoly> {
        let mut out: BTreeMap<Monomial, DiffPoly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let (k, rest) = m.split(&pred);
            out.entry(k).or_default().add_term(rest, c.clone());
        }
        out.retain(|_, v| !v.is_zero());
        out
    }

    pub fn atoms(&self) -> std::collections::BTreeSet<Atom> {
        self.terms.keys().flat_map(|m| m.factors().iter().map(|(a, _)| a.clone())).collect()
    }

    pub fn any_atom(&self, pred: impl Fn(&Atom) -> bool) -> bool {
        self.terms.keys().any(|m| m.factors().iter().any(|(a, _)| pred(a)))
    }

    /// Highest jet order at `point` for `field`, if it occurs.
    pub fn max_jet_order(&self, point: Point) -> Option<u32> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().iter())
            .filter_map(|(a, _)| match a {
                Atom::Jet(j) if j.point == point => Some(j.order),
                _ => None,
            })
            .max()
    }

    pub fn max_psi_order(&self, arg: u8) -> Option<u32> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().iter())
            .filter_map(|(a, _)| match a {
                Atom::Psi { arg: b, order, .. } if *b == arg => Some(*order),
                _ => None,
            })
            .max()
    }

    /// Leading term under graded lex.
    pub fn leading_grlex(&self) -> Option<(&Monomial, &Q)> {
        self.terms.iter().max_by(|a, b| a.0.cmp_grlex(b.0))
    }

    /// Divides by the leading coefficient of the map order (first term), so
    /// that `p` and `c p` have the same representative.
    pub fn primitive(&self) -> (Q, DiffPoly) {
        match self.terms.iter().next() {
            None => (q(1), DiffPoly::zero()),
            Some((_, c)) => {
                let c = c.clone();
                (c.clone(), self.scale(&(Q::one() / c)))
            }
        }
    }

    /// Same as [`primitive`](Self::primitive) but only normalizes the sign.
    pub fn sign_normalized(&self) -> DiffPoly {
        match self.terms.iter().next() {
            Some((_, c)) if c.is_negative() => -self,
            _ => self.clone(),
        }
    }
}

impl AddAssign<&DiffPoly> for DiffPoly {
    fn add_assign(&mut self, rhs: &DiffPoly) {
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), c.clone());
        }
    }
}

impl AddAssign<DiffPoly> for DiffPoly {
    fn add_assign(&mut self, rhs: DiffPoly) {
        if self.terms.len() < rhs.terms.len() {
            let lhs = std::mem::replace(self, rhs);
            for (m, c) in lhs.terms {
                self.add_term(m, c);
            }
        } else {
            for (m, c) in rhs.terms {
                self.add_term(m, c);
            }
        }
    }
}

impl SubAssign<&DiffPoly> for DiffPoly {
    fn sub_assign(&mut self, rhs: &DiffPoly) {
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), -c.clone());
        }
    }
}

impl SubAssign<DiffPoly> for DiffPoly {
    fn sub_assign(&mut self, rhs: DiffPoly) {
        for (m, c) in rhs.terms {
            self.add_term(m, -c);
        }
    }
}

impl Add for &DiffPoly {
    type Output = DiffPoly;
    fn add(self, rhs: &DiffPoly) -> DiffPoly {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Add for DiffPoly {
    type Output = DiffPoly;
    fn add(mut self, rhs: DiffPoly) -> DiffPoly {
        self += rhs;
        self
    }
}

impl Sub for &DiffPoly {
    type Output = DiffPoly;
    fn sub(self, rhs: &DiffPoly) -> DiffPoly {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Sub for DiffPoly {
    type Output = DiffPoly;
    fn sub(mut self, rhs: DiffPoly) -> DiffPoly {
        self -= rhs;
        self
    }
}

impl Neg for &DiffPoly {
    type Output = DiffPoly;
    fn neg(self) -> DiffPoly {
        DiffPoly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }
}

impl Neg for DiffPoly {
    type Output = DiffPoly;
    fn neg(mut self) -> DiffPoly {
        for c in self.terms.values_mut() {
            *c = -c.clone();
        }
        self
    }
}

impl Mul for &DiffPoly {
    type Output = DiffPoly;
    fn mul(self, rhs: &DiffPoly) -> DiffPoly {
        let (small, big) = if self.len() <= rhs.len() { (self, rhs) } else { (rhs, self) };
        let mut out = DiffPoly::zero();
        for (m, c) in &small.terms {
            for (n, d) in &big.terms {
                out.add_term(m.mul(n), c * d);
            }
        }
        out
    }
}

impl Mul for DiffPoly {
    type Output = DiffPoly;
    fn mul(self, rhs: DiffPoly) -> DiffPoly {
        &self * &rhs
    }
}

impl Mul<&Q> for &DiffPoly {
    type Output = DiffPoly;
    fn mul(self, rhs: &Q) -> DiffPoly {
        self.scale(rhs)
    }
}

impl From<Q> for DiffPoly {
    fn from(c: Q) -> Self {
        DiffPoly::constant(c)
    }
}

impl From<CoeffSym> for DiffPoly {
    fn from(c: CoeffSym) -> Self {
        DiffPoly::sym(c)
    }
}
