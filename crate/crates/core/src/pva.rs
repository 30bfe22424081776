//! Lambda-brackets of weakly nonlocal Poisson vertex algebras.
//!
//! Nonlocal quantities stay symbolic and are never expanded in Laurent series:
//!
//! * `[(lambda+D)^{-1} G]` and `[(mu+D)^{-1} G]`, which outer derivations treat
//!   through `D [(lambda+D)^{-1} G] = G - lambda [(lambda+D)^{-1} G]`,
//! * `O (lambda+mu+D)^{-1} F`, linear in `F`.
//!
//! The Jacobi identity `{u^i_l {u^j_m u^k}} - {u^j_m {u^i_l u^k}} - {{u^i_l u^j}_{l+m} u^k}`
//! is assembled from the generator matrix `{u^i_lambda u^j} = P^{ji}(lambda)` by
//! sesquilinearity and the Leibniz rules.

use crate::kernel::{binom, partial_jet, q, DerivCtx, DiffPoly, JetVar, Point, Q};
use crate::operator::WnlOperator;
use crate::schouten::{RawBracket, SkewCheck};
use crate::{par, ConditionSet};
use num_traits::{One, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{AddAssign, Neg, Sub, SubAssign};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PvaError {
    #[error("operator is not skew-symmetric ({0} residuals)")]
    NotSkew(usize),
    #[error("unsupported bracket argument: {0}")]
    Unsupported(String),
    #[error("term matches no type: {0}")]
    UnclassifiableTerm(String),
    #[error("no dictionary image for {0}")]
    Dictionary(String),
}

/// Spectral parameter of a bracket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    Lambda,
    Mu,
}

impl Param {
    pub fn other(self) -> Param {
        match self {
            Param::Lambda => Param::Mu,
            Param::Mu => Param::Lambda,
        }
    }

    fn unit(self) -> (u32, u32) {
        match self {
            Param::Lambda => (1, 0),
            Param::Mu => (0, 1),
        }
    }
}

/// `lambda^lam mu^mu [(lambda+D)^{-1} x] [(mu+D)^{-1} y]`.
///
/// Atom arguments are kept primitive (first coefficient 1).
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Shape {
    pub lam: u32,
    pub mu: u32,
    pub x: Option<DiffPoly>,
    pub y: Option<DiffPoly>,
}

impl Shape {
    pub fn power(lam: u32, mu: u32) -> Shape {
        Shape { lam, mu, x: None, y: None }
    }

    pub fn atom(&self, p: Param) -> Option<&DiffPoly> {
        match p {
            Param::Lambda => self.x.as_ref(),
            Param::Mu => self.y.as_ref(),
        }
    }

    fn set_atom(&mut self, p: Param, v: Option<DiffPoly>) {
        match p {
            Param::Lambda => self.x = v,
            Param::Mu => self.y = v,
        }
    }

    fn with_atom(mut self, p: Param, v: Option<DiffPoly>) -> Shape {
        self.set_atom(p, v);
        self
    }

    fn shifted(&self, lam: u32, mu: u32) -> Shape {
        Shape { lam: self.lam + lam, mu: self.mu + mu, ..self.clone() }
    }

    fn lowered(&self, p: Param) -> Shape {
        match p {
            Param::Lambda => Shape { lam: self.lam - 1, ..self.clone() },
            Param::Mu => Shape { mu: self.mu - 1, ..self.clone() },
        }
    }

    fn exponent(&self, p: Param) -> u32 {
        match p {
            Param::Lambda => self.lam,
            Param::Mu => self.mu,
        }
    }

    pub fn has_atoms(&self) -> bool {
        self.x.is_some() || self.y.is_some()
    }
}

/// Moves scalar factors of atom arguments into the coefficient; `None` if an atom vanishes.
fn normalize_shape(mut s: Shape, mut c: DiffPoly) -> Option<(Shape, DiffPoly)> {
    for p in [Param::Lambda, Param::Mu] {
        if let Some(g) = s.atom(p) {
            let (k, gp) = g.primitive();
            if gp.is_zero() {
                return None;
            }
            c = c.scale(&k);
            s.set_atom(p, Some(gp));
        }
    }
    Some((s, c))
}

/// Finite sum of plain terms `A * shape` and terms `O (lambda+mu+D)^{-1}[A * shape]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LambdaExpr {
    plain: BTreeMap<Shape, DiffPoly>,
    tot: BTreeMap<(DiffPoly, Shape), DiffPoly>,
}

impl LambdaExpr {
    pub fn zero() -> Self {
        LambdaExpr::default()
    }

    pub fn poly(a: DiffPoly) -> Self {
        LambdaExpr::term(Shape::default(), a)
    }

    pub fn term(s: Shape, c: DiffPoly) -> Self {
        let mut e = LambdaExpr::zero();
        e.add_plain(s, c);
        e
    }

    pub fn is_zero(&self) -> bool {
        self.plain.is_empty() && self.tot.is_empty()
    }

    pub fn len(&self) -> usize {
        self.plain.len() + self.tot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    pub fn plain(&self) -> impl Iterator<Item = (&Shape, &DiffPoly)> {
        self.plain.iter()
    }

    /// Terms `(O, shape, A)` standing for `O (lambda+mu+D)^{-1}[A * shape]`.
    pub fn tot(&self) -> impl Iterator<Item = (&DiffPoly, &Shape, &DiffPoly)> {
        self.tot.iter().map(|((o, s), a)| (o, s, a))
    }

    pub fn has_tot(&self) -> bool {
        !self.tot.is_empty()
    }

    pub fn coefficient(&self, s: &Shape) -> DiffPoly {
        self.plain.get(s).cloned().unwrap_or_default()
    }

    /// Payload of `O (lambda+mu+D)^{-1}[. * s]`, with `O` taken up to a scalar.
    pub fn tot_coefficient(&self, outer: &DiffPoly, s: &Shape) -> DiffPoly {
        let (k, o) = outer.primitive();
        if o.is_zero() {
            return DiffPoly::zero();
        }
        let Some((s, c)) = normalize_shape(s.clone(), DiffPoly::one()) else {
            return DiffPoly::zero();
        };
        let unit = c.as_constant().expect("normalized shape scale is a constant");
        self.tot
            .get(&(o, s))
            .map(|a| a.scale(&(unit / k)))
            .unwrap_or_default()
    }

    pub fn add_plain(&mut self, s: Shape, c: DiffPoly) {
        if c.is_zero() {
            return;
        }
        let Some((s, c)) = normalize_shape(s, c) else { return };
        let e = self.plain.entry(s).or_default();
        *e += c;
        if e.is_zero() {
            self.plain.retain(|_, v| !v.is_zero());
        }
    }

    pub fn add_tot(&mut self, outer: DiffPoly, s: Shape, c: DiffPoly) {
        if c.is_zero() {
            return;
        }
        let (k, o) = outer.primitive();
        if o.is_zero() {
            return;
        }
        let Some((s, c)) = normalize_shape(s, c.scale(&k)) else { return };
        let e = self.tot.entry((o, s)).or_default();
        *e += c;
        if e.is_zero() {
            self.tot.retain(|_, v| !v.is_zero());
        }
    }

    pub fn scaled(&self, c: &Q) -> LambdaExpr {
        if c.is_zero() {
            return LambdaExpr::zero();
        }
        LambdaExpr {
            plain: self.plain.iter().map(|(s, a)| (s.clone(), a.scale(c))).collect(),
            tot: self.tot.iter().map(|(k, a)| (k.clone(), a.scale(c))).collect(),
        }
    }

    /// Left multiplication by a differential polynomial.
    pub fn mul_poly(&self, b: &DiffPoly) -> LambdaExpr {
        let mut out = LambdaExpr::zero();
        for (s, a) in &self.plain {
            out.add_plain(s.clone(), a * b);
        }
        for ((o, s), a) in &self.tot {
            out.add_tot(o * b, s.clone(), a.clone());
        }
        out
    }

    /// Multiplication by `lambda^lam mu^mu`.
    pub fn mul_param(&self, lam: u32, mu: u32) -> LambdaExpr {
        if lam == 0 && mu == 0 {
            return self.clone();
        }
        LambdaExpr {
            plain: self.plain.iter().map(|(s, a)| (s.shifted(lam, mu), a.clone())).collect(),
            tot: self.tot.iter().map(|((o, s), a)| ((o.clone(), s.shifted(lam, mu)), a.clone())).collect(),
        }
    }

    /// Multiplication by the atom `[(p+D)^{-1} g]`; defined on plain terms free of that atom.
    pub fn mul_atom(&self, p: Param, g: &DiffPoly) -> Result<LambdaExpr, PvaError> {
        if self.has_tot() {
            return Err(PvaError::Unsupported("product of (lambda+mu+D)^-1 with an atom".into()));
        }
        let mut out = LambdaExpr::zero();
        for (s, a) in &self.plain {
            if s.atom(p).is_some() {
                return Err(PvaError::Unsupported(format!("repeated {p:?} atom")));
            }
            out.add_plain(s.clone().with_atom(p, Some(g.clone())), a.clone());
        }
        Ok(out)
    }

    /// Total derivative acting on the whole expression.
    pub fn d(&self, n: u8) -> LambdaExpr {
        let ctx = DerivCtx::new(n);
        let mut out = LambdaExpr::zero();
        for (s, a) in &self.plain {
            for (s2, c2) in d_term(&ctx, s, a) {
                out.add_plain(s2, c2);
            }
        }
        for ((o, s), a) in &self.tot {
            let od = ctx.d(o);
            if !od.is_zero() {
                out.add_tot(od, s.clone(), a.clone());
            }
            // D (lambda+mu+D)^{-1} F = (lambda+mu+D)^{-1} D F
            for (s2, c2) in d_term(&ctx, s, a) {
                out.add_tot(o.clone(), s2, c2);
            }
        }
        out
    }

    /// `(lambda? + mu? + D)^power` applied to the expression.
    pub fn shift_power(&self, n: u8, lam: bool, mu: bool, power: u32) -> LambdaExpr {
        let mut e = self.clone();
        for _ in 0..power {
            if e.is_zero() {
                break;
            }
            let mut next = e.d(n);
            if lam {
                next += &e.mul_param(1, 0);
            }
            if mu {
                next += &e.mul_param(0, 1);
            }
            e = next;
        }
        e
    }

    /// Canonical form for equality tests: atom arguments split into monomials,
    /// `lambda` never multiplies `[(lambda+D)^{-1} .]`, `mu` never multiplies
    /// `[(mu+D)^{-1} .]`, and every `(lambda+mu+D)^{-1}` payload is brought to
    /// its `mu`-free form (or `lambda`-free when it carries a `mu` atom).
    pub fn canonical(&self, n: u8) -> LambdaExpr {
        let ctx = DerivCtx::new(n);
        let mut out = LambdaExpr::zero();
        for (s, a) in &self.plain {
            canon_plain(&ctx, s.clone(), a.clone(), &mut out.plain);
        }
        let mut work: Vec<(DiffPoly, Shape, DiffPoly)> =
            self.tot.iter().map(|((o, s), a)| (o.clone(), s.clone(), a.clone())).collect();
        while let Some((o, s, a)) = work.pop() {
            if o.len() > 1 || o.terms().next().is_some_and(|(_, c)| !c.is_one()) {
                for (m, c) in o.terms() {
                    work.push((DiffPoly::term(m.clone(), q(1)), s.clone(), a.scale(c)));
                }
                continue;
            }
            let mut inner = BTreeMap::new();
            canon_plain(&ctx, s, a, &mut inner);
            for (s, a) in inner {
                match tot_reduction(&s) {
                    None => out.add_tot(o.clone(), s, a),
                    Some(p) => {
                        // O (l+m+D)^{-1}[p H] = O H - O (l+m+D)^{-1}[(other + D) H]
                        let h = LambdaExpr::term(s.lowered(p), a);
                        for (s2, c2) in &h.mul_poly(&o).plain {
                            canon_plain(&ctx, s2.clone(), c2.clone(), &mut out.plain);
                        }
                        let rest = h.shift_power(n, p == Param::Mu, p == Param::Lambda, 1);
                        for (s2, c2) in rest.plain {
                            work.push((o.clone(), s2, -c2));
                        }
                    }
                }
            }
        }
        out.plain.retain(|_, v| !v.is_zero());
        out.tot.retain(|_, v| !v.is_zero());
        out
    }

    /// Canonical form of `{f_{lambda+D} h}_-> g` given `self = {f_lambda h}`:
    /// `lambda` also differentiates `g`, so `A lambda^p -> A (lambda+D)^p g` and
    /// `A [(lambda+D)^{-1} m] -> A [(lambda+D)^{-1} m g]`.
    pub fn shifted_onto(&self, n: u8, g: &DiffPoly) -> Result<LambdaExpr, PvaError> {
        let c = self.canonical(n);
        if c.has_tot() || c.plain.keys().any(|s| s.mu > 0 || s.y.is_some()) {
            return Err(PvaError::Unsupported("shift of a two-parameter expression".into()));
        }
        let mut out = LambdaExpr::zero();
        for (s, a) in &c.plain {
            match &s.x {
                None => out += &LambdaExpr::poly(g.clone()).shift_power(n, true, false, s.lam).mul_poly(a),
                Some(m) => out.add_plain(Shape::default().with_atom(Param::Lambda, Some(m * g)), a.clone()),
            }
        }
        Ok(out.canonical(n))
    }

    /// Canonical form of `{f_{-lambda-D} g}` (derivations acting on the
    /// coefficients) given `self = {f_lambda g}`.
    pub fn transposed(&self, n: u8) -> Result<LambdaExpr, PvaError> {
        let c = self.canonical(n);
        if c.has_tot() || c.plain.keys().any(|s| s.mu > 0 || s.y.is_some()) {
            return Err(PvaError::Unsupported("transpose of a two-parameter expression".into()));
        }
        let ctx = DerivCtx::new(n);
        let mut out = LambdaExpr::zero();
        for (s, a) in &c.plain {
            match &s.x {
                None => {
                    // (-lambda-D)^p A = (-1)^p sum_r C(p,r) lambda^{p-r} D^r A
                    let sign = if s.lam % 2 == 0 { q(1) } else { q(-1) };
                    let mut dr = a.clone();
                    for r in 0..=s.lam {
                        out.add_plain(Shape::power(s.lam - r, 0), dr.scale(&(&sign * binom(s.lam, r))));
                        dr = ctx.d(&dr);
                    }
                }
                // adjoint of A D^{-1} m is -m D^{-1} A
                Some(m) => out.add_plain(Shape::default().with_atom(Param::Lambda, Some(a.clone())), -m),
            }
        }
        Ok(out.canonical(n))
    }
}

/// Parameter to eliminate from a canonical `(lambda+mu+D)^{-1}` payload, if any.
fn tot_reduction(s: &Shape) -> Option<Param> {
    match (&s.x, &s.y) {
        (_, None) if s.mu > 0 => Some(Param::Mu),
        (None, Some(_)) if s.lam > 0 => Some(Param::Lambda),
        _ => None,
    }
}

fn d_term(ctx: &DerivCtx, s: &Shape, a: &DiffPoly) -> Vec<(Shape, DiffPoly)> {
    let mut v = vec![(s.clone(), ctx.d(a))];
    for p in [Param::Lambda, Param::Mu] {
        if let Some(g) = s.atom(p) {
            // D [(p+D)^{-1} g] = g - p [(p+D)^{-1} g]
            let (l, m) = p.unit();
            v.push((s.clone().with_atom(p, None), a * g));
            v.push((s.shifted(l, m), -a));
        }
    }
    v
}

fn canon_plain(ctx: &DerivCtx, s: Shape, a: DiffPoly, out: &mut BTreeMap<Shape, DiffPoly>) {
    if a.is_zero() {
        return;
    }
    for p in [Param::Lambda, Param::Mu] {
        if let Some(g) = s.atom(p) {
            if g.len() > 1 || g.terms().next().is_some_and(|(_, c)| !c.is_one()) {
                for (m, c) in g.terms() {
                    let sm = s.clone().with_atom(p, Some(DiffPoly::term(m.clone(), q(1))));
                    canon_plain(ctx, sm, a.scale(c), out);
                }
                return;
            }
            if g.is_zero() {
                return;
            }
        }
    }
    for p in [Param::Lambda, Param::Mu] {
        if let Some(m) = s.atom(p) {
            if s.exponent(p) > 0 {
                // p [(p+D)^{-1} m] = m - [(p+D)^{-1} D m]
                let low = s.lowered(p);
                canon_plain(ctx, low.clone().with_atom(p, None), &a * m, out);
                let dm = ctx.d(m);
                if !dm.is_zero() {
                    canon_plain(ctx, low.with_atom(p, Some(dm)), -a, out);
                }
                return;
            }
        }
    }
    let e = out.entry(s).or_default();
    *e += a;
}

impl AddAssign<&LambdaExpr> for LambdaExpr {
    fn add_assign(&mut self, o: &LambdaExpr) {
        for (s, a) in &o.plain {
            let e = self.plain.entry(s.clone()).or_default();
            *e += a;
        }
        for (k, a) in &o.tot {
            let e = self.tot.entry(k.clone()).or_default();
            *e += a;
        }
        self.plain.retain(|_, v| !v.is_zero());
        self.tot.retain(|_, v| !v.is_zero());
    }
}

impl SubAssign<&LambdaExpr> for LambdaExpr {
    fn sub_assign(&mut self, o: &LambdaExpr) {
        *self += &-o;
    }
}

impl Neg for &LambdaExpr {
    type Output = LambdaExpr;
    fn neg(self) -> LambdaExpr {
        self.scaled(&q(-1))
    }
}

impl Sub for LambdaExpr {
    type Output = LambdaExpr;
    fn sub(mut self, o: LambdaExpr) -> LambdaExpr {
        self -= &o;
        self
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        match self.lam {
            0 => {}
            1 => parts.push("lambda".to_string()),
            k => parts.push(format!("lambda^{k}")),
        }
        match self.mu {
            0 => {}
            1 => parts.push("mu".to_string()),
            k => parts.push(format!("mu^{k}")),
        }
        if let Some(g) = &self.x {
            parts.push(format!("[(lambda+D)^-1 ({g})]"));
        }
        if let Some(g) = &self.y {
            parts.push(format!("[(mu+D)^-1 ({g})]"));
        }
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("*"))
        }
    }
}

impl fmt::Display for LambdaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (s, a) in &self.plain {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({a})*{s}")?;
        }
        for ((o, s), a) in &self.tot {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({o})*(lambda+mu+D)^-1[({a})*{s}]")?;
        }
        Ok(())
    }
}

/// `{u^i_p u^j} = P^{ji}(p)`; tails give `e w^j [(p+D)^{-1} w^i]`.
pub fn generator_bracket(p: &WnlOperator, i: u8, j: u8, param: Param) -> LambdaExpr {
    let (l, m) = param.unit();
    let mut out = LambdaExpr::zero();
    for ((a, b, s), c) in p.local() {
        if a == j && b == i {
            out.add_plain(Shape::power(l * s, m * s), c.clone());
        }
    }
    for t in p.tails() {
        let (wi, wj) = (&t.w[i as usize - 1], &t.w[j as usize - 1]);
        if wi.is_zero() || wj.is_zero() {
            continue;
        }
        out.add_plain(Shape::default().with_atom(param, Some(wi.clone())), wj.scale(&t.e));
    }
    out
}

/// Matrix with entry `[i-1][j-1] = {u^i_lambda u^j}`.
pub fn lambda_bracket(p: &WnlOperator) -> Vec<Vec<LambdaExpr>> {
    (1..=p.n)
        .map(|i| (1..=p.n).map(|j| generator_bracket(p, i, j, Param::Lambda)).collect())
        .collect()
}

/// `{u^i_p A}` for a local density `A`.
fn bracket_poly(p: &WnlOperator, i: u8, param: Param, a: &DiffPoly) -> LambdaExpr {
    let n = p.n;
    let top = a.max_jet_order(Point::X).unwrap_or(0);
    let lam = param == Param::Lambda;
    let mut out = LambdaExpr::zero();
    for l in 1..=n {
        let mut shifted = generator_bracket(p, i, l, param);
        for s in 0..=top {
            if shifted.is_zero() {
                break;
            }
            if s > 0 {
                shifted = shifted.shift_power(n, lam, !lam, 1);
            }
            let da = partial_jet(a, JetVar::new(l, s));
            if !da.is_zero() {
                out += &shifted.mul_poly(&da);
            }
        }
    }
    out
}

/// `{u^i_p h}` for `h` built from plain terms whose atoms belong to the other parameter.
///
/// Uses `{u^i_p [(q+D)^{-1} G]} = (lambda+mu+D)^{-1} {u^i_p G}`.
pub fn bracket_generator(p: &WnlOperator, i: u8, param: Param, h: &LambdaExpr) -> Result<LambdaExpr, PvaError> {
    if h.has_tot() {
        return Err(PvaError::Unsupported("(lambda+mu+D)^-1 in the right argument".into()));
    }
    let other = param.other();
    let mut out = LambdaExpr::zero();
    for (s, a) in h.plain() {
        if s.atom(param).is_some() {
            return Err(PvaError::Unsupported(format!("{param:?} atom in the right argument")));
        }
        let mut base = bracket_poly(p, i, param, a).mul_param(s.lam, s.mu);
        if let Some(g) = s.atom(other) {
            base = base.mul_atom(other, g)?;
            let inner = bracket_poly(p, i, param, g).mul_param(s.lam, s.mu);
            for (s2, b) in inner.plain() {
                out.add_tot(a.clone(), s2.clone(), b.clone());
            }
        }
        out += &base;
    }
    Ok(out)
}

/// `P^{kl}(lambda+mu+D) H`, with tails giving `e w^k (lambda+mu+D)^{-1}[w^l H]`.
fn apply_entry_total(p: &WnlOperator, k: u8, l: u8, h: &LambdaExpr) -> LambdaExpr {
    let mut out = LambdaExpr::zero();
    for ((a, b, s), c) in p.local() {
        if a == k && b == l {
            out += &h.shift_power(p.n, true, true, s).mul_poly(c);
        }
    }
    for t in p.tails() {
        let (wk, wl) = (&t.w[k as usize - 1], &t.w[l as usize - 1]);
        if wk.is_zero() || wl.is_zero() {
            continue;
        }
        for (s, c) in h.plain() {
            out.add_tot(wk.clone(), s.clone(), (wl * c).scale(&t.e));
        }
    }
    out
}

/// `{f_{lambda+mu} u^k}` for `f` carrying `lambda` and `[(lambda+D)^{-1} .]` only.
///
/// The atom is handled by left Leibniz and `{[(lambda+D)^{-1} G]_nu b} = (lambda-nu)^{-1} {G_nu b}`,
/// which with `nu = lambda+mu+D` turns the cofactor `A` into `-[(mu+D)^{-1} A]`.
pub fn bracket_total(p: &WnlOperator, f: &LambdaExpr, k: u8) -> Result<LambdaExpr, PvaError> {
    if f.has_tot() {
        return Err(PvaError::Unsupported("(lambda+mu+D)^-1 in the left argument".into()));
    }
    let n = p.n;
    let mut out = LambdaExpr::zero();
    let minus_shift = |h: LambdaExpr, tau: u32, sign: i64| {
        let s = if tau.is_multiple_of(2) { sign } else { -sign };
        h.shift_power(n, true, true, tau).scaled(&q(s))
    };
    for (s, a) in f.plain() {
        if s.mu > 0 || s.y.is_some() {
            return Err(PvaError::Unsupported("mu-dependence in the left argument".into()));
        }
        let mut term = LambdaExpr::zero();
        let top_a = a.max_jet_order(Point::X).unwrap_or(0);
        for l in 1..=n {
            for tau in 0..=top_a {
                let da = partial_jet(a, JetVar::new(l, tau));
                if da.is_zero() {
                    continue;
                }
                let h = LambdaExpr::term(Shape { x: s.x.clone(), ..Shape::default() }, da);
                term += &apply_entry_total(p, k, l, &minus_shift(h, tau, 1));
            }
        }
        if let Some(g) = &s.x {
            let top_g = g.max_jet_order(Point::X).unwrap_or(0);
            for l in 1..=n {
                for tau in 0..=top_g {
                    let dg = partial_jet(g, JetVar::new(l, tau));
                    if dg.is_zero() {
                        continue;
                    }
                    let h = LambdaExpr::term(Shape::default().with_atom(Param::Mu, Some(a.clone())), dg);
                    term += &apply_entry_total(p, k, l, &minus_shift(h, tau, -1));
                }
            }
        }
        out += &term.mul_param(s.lam, 0);
    }
    Ok(out)
}

/// `{f_lambda g}` for local densities `f`, `g` by the master formula.
pub fn master_formula(p: &WnlOperator, f: &DiffPoly, g: &DiffPoly) -> LambdaExpr {
    let n = p.n;
    let top_f = f.max_jet_order(Point::X).unwrap_or(0);
    let top_g = g.max_jet_order(Point::X).unwrap_or(0);
    let mut out = LambdaExpr::zero();
    for i in 1..=n {
        // H_i = sum_tau (-lambda-D)^tau df/du^i_tau
        let mut h = LambdaExpr::zero();
        for tau in 0..=top_f {
            let df = partial_jet(f, JetVar::new(i, tau));
            if !df.is_zero() {
                let sign = if tau % 2 == 0 { q(1) } else { q(-1) };
                h += &LambdaExpr::poly(df).shift_power(n, true, false, tau).scaled(&sign);
            }
        }
        if h.is_zero() {
            continue;
        }
        for j in 1..=n {
            // P^{ji}(lambda+D) H_i
            let mut ph = LambdaExpr::zero();
            for ((a, b, s), c) in p.local() {
                if a == j && b == i {
                    ph += &h.shift_power(n, true, false, s).mul_poly(c);
                }
            }
            for t in p.tails() {
                let (wi, wj) = (&t.w[i as usize - 1], &t.w[j as usize - 1]);
                if wi.is_zero() || wj.is_zero() {
                    continue;
                }
                // (lambda+D)^{-1}[w^i lambda^r H_r] = lambda^r [(lambda+D)^{-1} w^i H_r]
                for (s, c) in h.plain() {
                    let sh = Shape::power(s.lam, 0).with_atom(Param::Lambda, Some(wi * c));
                    ph.add_plain(sh, wj.scale(&t.e));
                }
            }
            let mut shifted = ph;
            for sigma in 0..=top_g {
                if shifted.is_zero() {
                    break;
                }
                if sigma > 0 {
                    shifted = shifted.shift_power(n, true, false, 1);
                }
                let dg = partial_jet(g, JetVar::new(j, sigma));
                if !dg.is_zero() {
                    out += &shifted.mul_poly(&dg);
                }
            }
        }
    }
    out
}

/// Coefficients of `{u^i_lambda u^j} + {u^j_{-lambda-D} u^i}` by powers of `lambda`.
/// Tails `e w D^{-1} w` are skew by construction and contribute nothing.
pub fn pva_skew_residuals(p: &WnlOperator) -> ConditionSet {
    let ctx = DerivCtx::new(p.n);
    let mut out = ConditionSet::new();
    for i in 1..=p.n {
        for j in 1..=p.n {
            let mut by_power: BTreeMap<u32, DiffPoly> = BTreeMap::new();
            for ((a, b, s), c) in p.local() {
                if a == j && b == i {
                    *by_power.entry(s).or_default() += c;
                }
                if a == i && b == j {
                    let sign = if s % 2 == 0 { q(1) } else { q(-1) };
                    let mut dr = c.clone();
                    for r in 0..=s {
                        *by_power.entry(s - r).or_default() += dr.scale(&(&sign * binom(s, r)));
                        dr = ctx.d(&dr);
                    }
                }
            }
            for (pw, c) in by_power {
                out.push(format!("skew[i={i},j={j}] lambda^{pw}"), c);
            }
        }
    }
    out
}

/// `J^{ijk}_{lambda,mu}` for every triple of generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PvaJacobi {
    pub n: u8,
    pub entries: BTreeMap<(u8, u8, u8), LambdaExpr>,
}

impl PvaJacobi {
    pub fn get(&self, i: u8, j: u8, k: u8) -> &LambdaExpr {
        &self.entries[&(i, j, k)]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(LambdaExpr::is_zero)
    }

    pub fn eliminate_type3(&self) -> PvaJacobi {
        PvaJacobi {
            n: self.n,
            entries: self.entries.iter().map(|(k, v)| (*k, eliminate_type3(self.n, v))).collect(),
        }
    }
}

/// `J^{ijk}` for one triple: PVA1 - PVA2 - PVA3.
pub fn pva_jacobi_entry(p: &WnlOperator, i: u8, j: u8, k: u8) -> Result<LambdaExpr, PvaError> {
    let first = bracket_generator(p, i, Param::Lambda, &generator_bracket(p, j, k, Param::Mu))?;
    let second = bracket_generator(p, j, Param::Mu, &generator_bracket(p, i, k, Param::Lambda))?;
    let third = bracket_total(p, &generator_bracket(p, i, j, Param::Lambda), k)?;
    Ok(first - second - third)
}

pub fn pva_jacobi(p: &WnlOperator, check: SkewCheck) -> Result<PvaJacobi, PvaError> {
    if check == SkewCheck::Enforce {
        let r = pva_skew_residuals(p);
        if !r.is_empty() {
            return Err(PvaError::NotSkew(r.len()));
        }
    }
    let n = p.n;
    let triples: Vec<(u8, u8, u8)> =
        (1..=n).flat_map(|i| (1..=n).flat_map(move |j| (1..=n).map(move |k| (i, j, k)))).collect();
    let results = par::map(triples.clone(), |(i, j, k)| pva_jacobi_entry(p, i, j, k));
    let mut entries = BTreeMap::new();
    for (t, r) in triples.into_iter().zip(results) {
        entries.insert(t, r?);
    }
    Ok(PvaJacobi { n, entries })
}

/// Rewrites `O (lambda+mu+D)^{-1}[A lambda^p mu^q]`, `q > 0`, by
/// `(lambda+mu+D)^{-1}[mu H] = H - (lambda+mu+D)^{-1}[(lambda+D) H]` until no `mu`
/// remains inside. Payloads with a `[(lambda+D)^{-1}]` atom lose `mu` the same way,
/// payloads with a `[(mu+D)^{-1}]` atom lose `lambda` symmetrically.
pub fn eliminate_type3(n: u8, j: &LambdaExpr) -> LambdaExpr {
    let mut out = LambdaExpr { plain: j.plain.clone(), tot: BTreeMap::new() };
    let mut work: Vec<(DiffPoly, Shape, DiffPoly)> =
        j.tot.iter().map(|((o, s), a)| (o.clone(), s.clone(), a.clone())).collect();
    while let Some((o, s, a)) = work.pop() {
        let p = match (&s.x, &s.y) {
            (None, None) if s.mu > 0 => Param::Mu,
            (Some(_), None) if s.mu > 0 && s.lam == 0 => Param::Mu,
            (None, Some(_)) if s.lam > 0 && s.mu == 0 => Param::Lambda,
            _ => {
                out.add_tot(o, s, a);
                continue;
            }
        };
        let h = LambdaExpr::term(s.lowered(p), a);
        out += &h.mul_poly(&o);
        let rest = h.shift_power(n, p == Param::Mu, p == Param::Lambda, 1);
        for (s2, c2) in rest.plain {
            work.push((o.clone(), s2, -c2));
        }
    }
    out
}

/// The eight term types of a weakly nonlocal Jacobi expression.
pub fn term_type(s: &Shape, total: bool) -> Result<u8, PvaError> {
    let t = match (total, s.x.is_some(), s.y.is_some()) {
        (false, false, false) => 1,
        (false, true, false) if s.lam == 0 => 4,
        (false, false, true) if s.mu == 0 => 5,
        (false, true, true) if s.lam == 0 && s.mu == 0 => 8,
        (true, false, false) if s.mu == 0 => 2,
        (true, false, false) => 3,
        (true, true, false) => 6,
        (true, false, true) => 7,
        _ => return Err(PvaError::UnclassifiableTerm(format!("{}{s}", if total { "(lambda+mu+D)^-1 " } else { "" }))),
    };
    Ok(t)
}

/// Partition of `j` by term type.
pub fn classify_terms(j: &LambdaExpr) -> Result<BTreeMap<u8, LambdaExpr>, PvaError> {
    let mut out: BTreeMap<u8, LambdaExpr> = BTreeMap::new();
    for (s, a) in j.plain() {
        out.entry(term_type(s, false)?).or_default().add_plain(s.clone(), a.clone());
    }
    for (o, s, a) in j.tot() {
        out.entry(term_type(s, true)?).or_default().add_tot(o.clone(), s.clone(), a.clone());
    }
    Ok(out)
}

/// Zeroth-order payloads of every term of `j` after type-3 elimination. Each payload
/// must vanish on its own, so no Laurent expansion is needed.
pub fn zeroth_order_residuals(n: u8, label: &str, j: &LambdaExpr) -> Result<ConditionSet, PvaError> {
    let j = eliminate_type3(n, j);
    let mut out = ConditionSet::new();
    for (ty, part) in classify_terms(&j)? {
        for (s, a) in part.plain() {
            push_split(&mut out, format!("{label} type{ty} {s}"), a);
        }
        for (o, s, a) in part.tot() {
            push_split(&mut out, format!("{label} type{ty} ({o})*(lambda+mu+D)^-1[{s}]"), a);
        }
    }
    Ok(out)
}

fn push_split(out: &mut ConditionSet, label: String, a: &DiffPoly) {
    for (m, c) in a.split_by(|a| a.is_jet()) {
        out.push(format!("{label} @ {m}"), c);
    }
}

/// Jacobi residuals of `p` in the lambda-bracket formalism.
pub fn jacobi_residuals(p: &WnlOperator, check: SkewCheck) -> Result<ConditionSet, PvaError> {
    let jac = pva_jacobi(p, check)?;
    let mut out = ConditionSet::new();
    for (&(i, j, k), e) in &jac.entries {
        out.extend(zeroth_order_residuals(p.n, &format!("J[i={i},j={j},k={k}]"), e)?);
    }
    Ok(out)
}

/// Matches primitive atom arguments with tail components.
struct TailLookup {
    by_arg: BTreeMap<(u8, DiffPoly), (u16, Q)>,
    rep: Vec<Option<u8>>,
}

impl TailLookup {
    fn new(p: &WnlOperator) -> Self {
        let mut by_arg = BTreeMap::new();
        let mut rep = Vec::new();
        for (a, t) in p.tails().iter().enumerate() {
            let mut first = None;
            for (i, w) in t.w.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                let i = i as u8 + 1;
                first.get_or_insert(i);
                let (c, g) = w.primitive();
                by_arg.entry((i, g)).or_insert((a as u16, c));
            }
            rep.push(first);
        }
        TailLookup { by_arg, rep }
    }

    /// `[(p+D)^{-1} g] = factor * [(p+D)^{-1} w^idx_alpha]`; `None` for non-representative indices.
    fn resolve(&self, idx: u8, g: &DiffPoly) -> Result<Option<(u16, Q)>, PvaError> {
        let (a, c) = self
            .by_arg
            .get(&(idx, g.clone()))
            .ok_or_else(|| PvaError::Dictionary(format!("atom argument {g} at index {idx}")))?;
        if self.rep[*a as usize] != Some(idx) {
            return Ok(None);
        }
        Ok(Some((*a, Q::one() / c)))
    }
}

fn slot(look: &TailLookup, arg: u8, idx: u8, order: u32, atom: Option<&DiffPoly>) -> Result<Option<DiffPoly>, PvaError> {
    match atom {
        None => Ok(Some(DiffPoly::psi(arg, idx, order))),
        Some(_) if order > 0 => Err(PvaError::Dictionary("spectral power on its own atom".into())),
        Some(g) => Ok(look.resolve(idx, g)?.map(|(a, c)| DiffPoly::tilde(arg, a).scale(&c))),
    }
}

/// Trilinear form `sum_{ijk} psi^3_k J^{ijk}` with `lambda` and `mu` acting on
/// `psi^1_i` and `psi^2_j`. `[(lambda+D)^{-1} w^i_a]` becomes `~psi^1_a`, and
/// `w^k_a (lambda+mu+D)^{-1} F` pairs with `psi^3_k` into `-~psi^3_a F`.
pub fn to_trilinear(p: &WnlOperator, jac: &PvaJacobi) -> Result<RawBracket, PvaError> {
    let look = TailLookup::new(p);
    let mut expr = DiffPoly::zero();
    for (&(i, j, k), e) in &jac.entries {
        let body = |s: &Shape, a: &DiffPoly| -> Result<Option<DiffPoly>, PvaError> {
            let Some(f1) = slot(&look, 1, i, s.lam, s.x.as_ref())? else { return Ok(None) };
            let Some(f2) = slot(&look, 2, j, s.mu, s.y.as_ref())? else { return Ok(None) };
            Ok(Some(&(a * &f1) * &f2))
        };
        for (s, a) in e.plain() {
            if let Some(b) = body(s, a)? {
                expr += &b * &DiffPoly::psi(3, k, 0);
            }
        }
        for (o, s, a) in e.tot() {
            let Some((beta, c)) = look.resolve(k, o)? else { continue };
            if let Some(b) = body(s, a)? {
                expr -= (&b * &DiffPoly::tilde(3, beta)).scale(&c);
            }
        }
    }
    Ok(RawBracket { n: p.n, expr, tildes: WnlOperator::tilde_table(&[p]) })
}
