//! Schouten bracket `[P, Q]` of weakly nonlocal bivectors.
//!
//! The bracket is a trilinear expression in the covectors `psi^1, psi^2, psi^3`
//! and their nonlocal companions `~psi^a_alpha`. [`normalize_three_vector`]
//! integrates by parts into a canonical form whose coefficients vanish iff
//! the bracket does.

use crate::kernel::{
    euler_operator, euler_operator_with, partial_jet, translation_integral, Atom, DerivCtx,
    DiffPoly, JetVar, Monomial, Point, TildeTable, Q,
};
use crate::operator::WnlOperator;
use crate::{par, ConditionSet};
use num_traits::Zero;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Recipe {
    /// `<l_{P,psi^1}(Q psi^2), psi^3>` + cyclic + `(P <-> Q)`.
    #[default]
    A,
    /// Six-term form using the adjoint of the linearization.
    B,
    /// Routed through the Euler operator of `<Q psi^1, psi^2>`.
    C,
}

/// Whether skew-adjointness is verified before computing a bracket.
///
/// Symbolic operators with opaque coefficients are skew only modulo
/// conditions; `Assume` computes the bracket as if they held.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkewCheck {
    Enforce,
    Assume,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchoutenError {
    #[error("operator is not skew-adjoint ({0} residuals)")]
    NotSkewAdjoint(usize),
    #[error("operators act on {0} and {1} fields")]
    FieldMismatch(u8, u8),
    #[error("term is not trilinear in psi^1, psi^2, psi^3: {0}")]
    NotTrilinear(String),
    #[error("tail {0} is not a constant multiple of u_x, so gradients have no local primitive")]
    UnsupportedTail(usize),
}

/// Unnormalized bracket together with the tail table its `~psi` atoms refer to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawBracket {
    pub n: u8,
    pub expr: DiffPoly,
    pub tildes: TildeTable,
}

const CYCLIC: [(u8, u8, u8); 3] = [(1, 2, 3), (2, 3, 1), (3, 1, 2)];

fn next(a: u8) -> u8 {
    a % 3 + 1
}

struct Setup<'a> {
    p: &'a WnlOperator,
    q: &'a WnlOperator,
    op: u16,
    oq: u16,
    tt: TildeTable,
}

fn setup<'a>(
    p: &'a WnlOperator,
    q: &'a WnlOperator,
    check: SkewCheck,
) -> Result<Setup<'a>, SchoutenError> {
    if p.n != q.n {
        return Err(SchoutenError::FieldMismatch(p.n, q.n));
    }
    if check == SkewCheck::Enforce {
        for op in [p, q] {
            let r = op.skew_residuals();
            if !r.is_empty() {
                return Err(SchoutenError::NotSkewAdjoint(r.len()));
            }
        }
    }
    // The same operator on both sides shares its tail labels.
    if p == q {
        Ok(Setup { p, q, op: 0, oq: 0, tt: WnlOperator::tilde_table(&[p]) })
    } else {
        let oq = p.tails().len() as u16;
        Ok(Setup { p, q, op: 0, oq, tt: WnlOperator::tilde_table(&[p, q]) })
    }
}

/// `<l_{X, psi^a}(Y psi^b), psi^c>`.
fn lin_term(x: &WnlOperator, ox: u16, y: &WnlOperator, oy: u16, abc: (u8, u8, u8), tt: &TildeTable) -> DiffPoly {
    let (a, b, c) = abc;
    x.linearize(a, &y.apply(b, oy), ox, tt).pair(c)
}

/// `E_u <Y psi^a, psi^b>` for formal `psi`, where `~psi^a` depends on `u` through its tail.
fn euler_of_pairing(y: &WnlOperator, oy: u16, a: u8, b: u8, tt: &TildeTable) -> Vec<DiffPoly> {
    let n = y.n;
    let ctx = DerivCtx::with_tildes(n, tt);
    let ya = y.apply(a, oy);
    let dens = DiffPoly::sum(ya.iter().enumerate().map(|(i, v)| v * &DiffPoly::psi(b, i as u8 + 1, 0)));
    let mut out: Vec<DiffPoly> = (1..=n).map(|k| euler_operator_with(&ctx, &dens, k)).collect();
    // integral X^b ~psi^a varies as -~psi^b dX^a through ~psi^a.
    for (al, t) in y.tails().iter().enumerate() {
        let ga = oy + al as u16;
        let xa = DiffPoly::sum(t.w.iter().enumerate().map(|(i, w)| w * &DiffPoly::psi(a, i as u8 + 1, 0)));
        let tb = DiffPoly::tilde(b, ga);
        let top = xa.max_jet_order(Point::X).unwrap_or(0);
        for k in 1..=n {
            let mut acc = DiffPoly::zero();
            for s in (0..=top).rev() {
                let part = &tb * &partial_jet(&xa, JetVar::new(k, s));
                acc = part - ctx.d(&acc);
            }
            out[k as usize - 1] -= acc.scale(&t.e);
        }
    }
    out
}

pub fn schouten_raw(p: &WnlOperator, q: &WnlOperator, recipe: Recipe) -> Result<RawBracket, SchoutenError> {
    schouten_raw_with(p, q, recipe, SkewCheck::Enforce)
}

pub fn schouten_raw_with(
    p: &WnlOperator,
    q: &WnlOperator,
    recipe: Recipe,
    check: SkewCheck,
) -> Result<RawBracket, SchoutenError> {
    let s = setup(p, q, check)?;
    let tt = &s.tt;
    let pq = [(s.p, s.op, s.q, s.oq), (s.q, s.oq, s.p, s.op)];
    let parts: Vec<DiffPoly> = match recipe {
        Recipe::A => {
            let jobs: Vec<_> = pq.iter().flat_map(|&x| CYCLIC.iter().map(move |&c| (x, c))).collect();
            par::map(jobs, |((x, ox, y, oy), abc)| lin_term(x, ox, y, oy, abc, tt))
        }
        Recipe::B => {
            let jobs: Vec<u8> = (0..6).collect();
            par::map(jobs, |k| match k {
                0 => lin_term(s.p, s.op, s.q, s.oq, (1, 2, 3), tt),
                1 => -lin_term(s.p, s.op, s.q, s.oq, (2, 1, 3), tt),
                2 => lin_term(s.q, s.oq, s.p, s.op, (1, 2, 3), tt),
                3 => -lin_term(s.q, s.oq, s.p, s.op, (2, 1, 3), tt),
                4 => -s.p.apply_paired(&s.q.linearization_adjoint(2, 1, s.oq, tt), 3, s.op, tt),
                _ => -s.q.apply_paired(&s.p.linearization_adjoint(2, 1, s.op, tt), 3, s.oq, tt),
            })
        }
        Recipe::C => {
            let jobs: Vec<_> = pq.iter().flat_map(|&x| CYCLIC.iter().map(move |&c| (x, c))).collect();
            par::map(jobs, |((x, ox, y, oy), (a, b, c))| {
                x.apply_paired(&euler_of_pairing(y, oy, a, b, tt), c, ox, tt)
            })
        }
    };
    Ok(RawBracket { n: p.n, expr: DiffPoly::sum(parts), tildes: s.tt })
}

/// `1/2 [P, P] = <l_{P,psi^1}(P psi^2), psi^3>` + cyclic.
pub fn half_square(p: &WnlOperator, check: SkewCheck) -> Result<RawBracket, SchoutenError> {
    let s = setup(p, p, check)?;
    let tt = &s.tt;
    let parts = par::map(CYCLIC.to_vec(), |abc| lin_term(p, 0, p, 0, abc, tt));
    Ok(RawBracket { n: p.n, expr: DiffPoly::sum(parts), tildes: s.tt })
}

/// `c d^p psi^1_j d^q psi^2_k psi^3_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalKey {
    pub j: u8,
    pub p: u32,
    pub k: u8,
    pub q: u32,
    pub i: u8,
}

/// `c ~psi^a_alpha d^order psi^b_k psi^c_i` with `(a, b, c)` a cyclic shift of `(1, 2, 3)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SingleKey {
    pub a: u8,
    pub alpha: u16,
    pub order: u32,
    pub k: u8,
    pub i: u8,
}

/// `c ~psi^a_alpha ~psi^b_beta psi^c_k` with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DoubleKey {
    pub c: u8,
    pub alpha: u16,
    pub beta: u16,
    pub k: u8,
}

impl fmt::Display for LocalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "local[j={},p={},k={},q={},i={}]", self.j, self.p, self.k, self.q, self.i)
    }
}

impl fmt::Display for SingleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "single[a={},alpha={},order={},k={},i={}]",
            self.a, self.alpha, self.order, self.k, self.i
        )
    }
}

impl fmt::Display for DoubleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "double[c={},alpha={},beta={},k={}]", self.c, self.alpha, self.beta, self.k)
    }
}

/// Canonical three-vector: local, single-nonlocal and double-nonlocal tables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ThreeVector {
    pub local: BTreeMap<LocalKey, DiffPoly>,
    pub single: BTreeMap<SingleKey, DiffPoly>,
    pub double: BTreeMap<DoubleKey, DiffPoly>,
}

fn add_entry<K: Ord>(t: &mut BTreeMap<K, DiffPoly>, k: K, v: DiffPoly) {
    let e = t.entry(k).or_default();
    *e += v;
}

fn prune<K: Ord>(t: &mut BTreeMap<K, DiffPoly>) {
    t.retain(|_, v| !v.is_zero());
}

impl ThreeVector {
    pub fn is_zero(&self) -> bool {
        self.local.is_empty() && self.single.is_empty() && self.double.is_empty()
    }

    pub fn scaled(&self, c: &Q) -> ThreeVector {
        let mut out = self.clone();
        for v in out.local.values_mut().chain(out.single.values_mut()).chain(out.double.values_mut()) {
            *v = v.scale(c);
        }
        out.prune();
        out
    }

    /// `self - other`, table by table.
    pub fn minus(&self, other: &ThreeVector) -> ThreeVector {
        let mut out = self.clone();
        for (k, v) in &other.local {
            add_entry(&mut out.local, *k, -v);
        }
        for (k, v) in &other.single {
            add_entry(&mut out.single, *k, -v);
        }
        for (k, v) in &other.double {
            add_entry(&mut out.double, *k, -v);
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        prune(&mut self.local);
        prune(&mut self.single);
        prune(&mut self.double);
    }

    /// The trilinear expression the tables encode.
    pub fn to_expr(&self) -> DiffPoly {
        let mut out = DiffPoly::zero();
        for (k, c) in &self.local {
            let m = &(&DiffPoly::psi(1, k.j, k.p) * &DiffPoly::psi(2, k.k, k.q)) * &DiffPoly::psi(3, k.i, 0);
            out += c * &m;
        }
        for (k, c) in &self.single {
            let b = next(k.a);
            let m = &(&DiffPoly::tilde(k.a, k.alpha) * &DiffPoly::psi(b, k.k, k.order))
                * &DiffPoly::psi(next(b), k.i, 0);
            out += c * &m;
        }
        for (k, c) in &self.double {
            let (a, b) = other_two(k.c);
            let m = &(&DiffPoly::tilde(a, k.alpha) * &DiffPoly::tilde(b, k.beta)) * &DiffPoly::psi(k.c, k.k, 0);
            out += c * &m;
        }
        out
    }

    /// One residual per nonzero table entry.
    pub fn entries(&self) -> ConditionSet {
        let mut out = ConditionSet::new();
        for (k, v) in &self.local {
            out.push(k.to_string(), v.clone());
        }
        for (k, v) in &self.single {
            out.push(k.to_string(), v.clone());
        }
        for (k, v) in &self.double {
            out.push(k.to_string(), v.clone());
        }
        out
    }

    /// Table entries split further by monomials in the jet variables, leaving
    /// functions of the fields alone.
    pub fn coefficients(&self) -> ConditionSet {
        let mut out = ConditionSet::new();
        for r in self.entries() {
            for (m, c) in r.expr.split_by(|a| a.is_jet()) {
                out.push(format!("{} @ {}", r.label, m), c);
            }
        }
        out
    }
}

fn other_two(c: u8) -> (u8, u8) {
    match c {
        1 => (2, 3),
        2 => (1, 3),
        _ => (1, 2),
    }
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Psi { idx: u8, order: u32 },
    Tilde { tail: u16 },
}

struct Parsed {
    slots: [Slot; 3],
    coeff: Monomial,
}

fn parse(m: &Monomial) -> Option<Parsed> {
    let mut slots: [Option<Slot>; 3] = [None; 3];
    let mut rest = Vec::new();
    for (a, e) in m.factors() {
        let (arg, slot) = match a {
            Atom::Psi { arg, idx, order } => (*arg, Slot::Psi { idx: *idx, order: *order }),
            Atom::Tilde { arg, tail } => (*arg, Slot::Tilde { tail: *tail }),
            _ => {
                rest.push((a.clone(), *e));
                continue;
            }
        };
        if *e != 1 || !(1..=3).contains(&arg) || slots[arg as usize - 1].is_some() {
            return None;
        }
        slots[arg as usize - 1] = Some(slot);
    }
    Some(Parsed { slots: [slots[0]?, slots[1]?, slots[2]?], coeff: Monomial::from_factors(rest) })
}

/// The argument kept at order zero in the canonical form of this term.
fn last_arg(p: &Parsed) -> Result<u8, ()> {
    let tildes: Vec<u8> =
        (1..=3u8).filter(|&a| matches!(p.slots[a as usize - 1], Slot::Tilde { .. })).collect();
    match tildes.as_slice() {
        [] => Ok(3),
        [a] => Ok(next(next(*a))),
        [a, b] => Ok(6 - a - b),
        _ => Err(()),
    }
}

/// Canonical tables plus `R` with `raw = tables + D R`.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub tv: ThreeVector,
    pub discarded: DiffPoly,
}

fn tail_of(s: Slot) -> u16 {
    match s {
        Slot::Tilde { tail } => tail,
        Slot::Psi { .. } => unreachable!("slot is not a ~psi"),
    }
}

fn psi_of(s: Slot) -> (u8, u32) {
    match s {
        Slot::Psi { idx, order } => (idx, order),
        Slot::Tilde { .. } => unreachable!("slot is not a psi"),
    }
}

fn insert_canonical(tv: &mut ThreeVector, p: &Parsed, last: u8, coef: DiffPoly) {
    let s = |a: u8| p.slots[a as usize - 1];
    let tildes = (1..=3u8).filter(|&a| matches!(s(a), Slot::Tilde { .. })).count();
    let (i, _) = psi_of(s(last));
    match tildes {
        0 => {
            let (j, pp) = psi_of(s(1));
            let (k, qq) = psi_of(s(2));
            add_entry(&mut tv.local, LocalKey { j, p: pp, k, q: qq, i }, coef);
        }
        1 => {
            let a = next(last);
            let b = next(a);
            let (k, order) = psi_of(s(b));
            add_entry(&mut tv.single, SingleKey { a, alpha: tail_of(s(a)), order, k, i }, coef);
        }
        _ => {
            let (a, b) = other_two(last);
            let key = DoubleKey { c: last, alpha: tail_of(s(a)), beta: tail_of(s(b)), k: i };
            add_entry(&mut tv.double, key, coef);
        }
    }
}

/// Integrates by parts until the designated argument of every term is
/// undifferentiated: `psi^3` for local terms, the argument after the
/// differentiated one for single terms, the plain `psi` for double terms.
pub fn normalize_three_vector(raw: &RawBracket) -> Result<Normalized, SchoutenError> {
    let ctx = DerivCtx::with_tildes(raw.n, &raw.tildes);
    let mut tv = ThreeVector::default();
    let mut discarded = DiffPoly::zero();
    let mut work = raw.expr.clone();
    while !work.is_zero() {
        let mut groups: BTreeMap<(u8, u8, u32), DiffPoly> = BTreeMap::new();
        for (m, c) in work.terms() {
            let p = parse(m).ok_or_else(|| SchoutenError::NotTrilinear(m.to_string()))?;
            let last = last_arg(&p).map_err(|_| SchoutenError::NotTrilinear(m.to_string()))?;
            let (i, r) = psi_of(p.slots[last as usize - 1]);
            if r == 0 {
                insert_canonical(&mut tv, &p, last, DiffPoly::term(p.coeff.clone(), c.clone()));
            } else {
                let psi = Atom::Psi { arg: last, idx: i, order: r };
                let k = m.factors().iter().position(|(a, _)| *a == psi).unwrap();
                groups.entry((last, i, r)).or_default().add_term(m.without_one(k), c.clone());
            }
        }
        let steps = par::map(groups.into_iter().collect(), |((c, i, r), rest)| {
            let lower = DiffPoly::psi(c, i, r - 1);
            (&rest * &lower, -(&ctx.d(&rest) * &lower))
        });
        work = DiffPoly::zero();
        for (d, w) in steps {
            discarded += d;
            work += w;
        }
    }
    tv.prune();
    reduce_double_relations(&mut tv, &raw.tildes, &mut discarded);
    Ok(Normalized { tv, discarded })
}

type Pos = (DoubleKey, Monomial);

struct Relation {
    row: BTreeMap<Pos, Q>,
    /// Triple `~psi` product whose derivative this row is.
    source: DiffPoly,
}

fn sub_scaled(row: &mut BTreeMap<Pos, Q>, other: &BTreeMap<Pos, Q>, lam: &Q) {
    for (k, v) in other {
        let e = row.entry(k.clone()).or_insert_with(Q::zero);
        *e -= lam * v;
        if e.is_zero() {
            row.remove(k);
        }
    }
}

/// `D(~psi^1_a ~psi^2_b ~psi^3_c)` lies in the span of the double tables, so
/// those tables are only defined modulo these constant-coefficient relations.
/// Reducing against a row echelon basis of them picks a unique representative.
fn reduce_double_relations(tv: &mut ThreeVector, tt: &TildeTable, discarded: &mut DiffPoly) {
    let t = tt.w.len() as u16;
    if t == 0 || tv.double.is_empty() {
        return;
    }
    let mut rels: Vec<Relation> = Vec::new();
    for a in 0..t {
        for b in 0..t {
            for c in 0..t {
                let mut row = BTreeMap::new();
                let parts = [
                    (DoubleKey { c: 1, alpha: b, beta: c, k: 0 }, a),
                    (DoubleKey { c: 2, alpha: a, beta: c, k: 0 }, b),
                    (DoubleKey { c: 3, alpha: a, beta: b, k: 0 }, c),
                ];
                for (key, tail) in parts {
                    for (k, w) in tt.w[tail as usize].iter().enumerate() {
                        for (m, v) in w.terms() {
                            let pos = (DoubleKey { k: k as u8 + 1, ..key }, m.clone());
                            let e = row.entry(pos.clone()).or_insert_with(Q::zero);
                            *e += v;
                            if e.is_zero() {
                                row.remove(&pos);
                            }
                        }
                    }
                }
                let source = &(&DiffPoly::tilde(1, a) * &DiffPoly::tilde(2, b)) * &DiffPoly::tilde(3, c);
                rels.push(Relation { row, source });
            }
        }
    }
    // Reduced row echelon form.
    let mut basis: Vec<Relation> = Vec::new();
    for mut r in rels {
        for b in &basis {
            let (piv, pv) = b.row.iter().next().unwrap();
            if let Some(v) = r.row.get(piv) {
                let lam = v / pv;
                sub_scaled(&mut r.row, &b.row, &lam);
                r.source -= b.source.scale(&lam);
            }
        }
        if r.row.is_empty() {
            continue;
        }
        let (piv, pv) = r.row.iter().next().map(|(k, v)| (k.clone(), v.clone())).unwrap();
        for b in basis.iter_mut() {
            if let Some(v) = b.row.get(&piv) {
                let lam = v / &pv;
                sub_scaled(&mut b.row, &r.row, &lam);
                b.source -= r.source.scale(&lam);
            }
        }
        basis.push(r);
        basis.sort_by(|x, y| x.row.keys().next().cmp(&y.row.keys().next()));
    }
    let mut flat: BTreeMap<Pos, Q> = BTreeMap::new();
    for (k, v) in &tv.double {
        for (m, c) in v.terms() {
            flat.insert((*k, m.clone()), c.clone());
        }
    }
    for b in &basis {
        let (piv, pv) = b.row.iter().next().unwrap();
        if let Some(v) = flat.get(piv) {
            let lam = v / pv;
            sub_scaled(&mut flat, &b.row, &lam);
            *discarded += b.source.scale(&lam);
        }
    }
    tv.double.clear();
    for ((k, m), c) in flat {
        tv.double.entry(k).or_default().add_term(m, c);
    }
    prune(&mut tv.double);
}

/// Checks `raw == tables + D(discarded)` exactly.
pub fn audit(raw: &RawBracket, norm: &Normalized) -> bool {
    let ctx = DerivCtx::with_tildes(raw.n, &raw.tildes);
    raw.expr == &norm.tv.to_expr() + &ctx.d(&norm.discarded)
}

/// Canonical form of `[P, Q]` by the given recipe.
pub fn schouten(p: &WnlOperator, q: &WnlOperator, recipe: Recipe) -> Result<ThreeVector, SchoutenError> {
    Ok(normalize_three_vector(&schouten_raw(p, q, recipe)?)?.tv)
}

/// Jacobi obstruction of `P` as the coefficients of `1/2 [P, P]`.
pub fn jacobi_residuals(p: &WnlOperator, check: SkewCheck) -> Result<ConditionSet, SchoutenError> {
    Ok(normalize_three_vector(&half_square(p, check)?)?.tv.coefficients())
}

/// `c` with `w^i = c u^i_x` for every `i`, if the tail has that shape.
pub fn translation_tail_scale(w: &[DiffPoly]) -> Option<Q> {
    let mut scale: Option<Q> = None;
    for (i, wi) in w.iter().enumerate() {
        let u = DiffPoly::jet(i as u8 + 1, 1);
        let c = if wi.is_zero() {
            Q::zero()
        } else {
            let (m, c) = wi.terms().next().unwrap();
            if wi.len() != 1 || *m != *u.terms().next().unwrap().0 {
                return None;
            }
            c.clone()
        };
        match &scale {
            None => scale = Some(c),
            Some(s) if *s != c => return None,
            _ => {}
        }
    }
    scale
}

fn tail_scales(tt: &TildeTable) -> Result<Vec<Q>, SchoutenError> {
    tt.w.iter()
        .enumerate()
        .map(|(a, w)| translation_tail_scale(w).ok_or(SchoutenError::UnsupportedTail(a)))
        .collect()
}

/// Evaluates a raw bracket at `psi^a = E(f_a)`. Tails must be `c u_x`, which
/// makes `~psi^a = c F_a` local by [`translation_integral`].
pub fn substitute_gradients(raw: &RawBracket, f: &[DiffPoly; 3]) -> Result<DiffPoly, SchoutenError> {
    let n = raw.n;
    let scales = tail_scales(&raw.tildes)?;
    let ctx = DerivCtx::new(n);
    let grads: Vec<Vec<DiffPoly>> =
        f.iter().map(|fa| (1..=n).map(|i| euler_operator(n, fa, i)).collect()).collect();
    let prims: Vec<DiffPoly> = f.iter().map(|fa| translation_integral(n, fa)).collect();
    let mut table: BTreeMap<Atom, DiffPoly> = BTreeMap::new();
    for a in raw.expr.atoms() {
        let v = match &a {
            Atom::Psi { arg, idx, order } => {
                ctx.d_n(&grads[*arg as usize - 1][*idx as usize - 1], *order)
            }
            Atom::Tilde { arg, tail } => prims[*arg as usize - 1].scale(&scales[*tail as usize]),
            _ => continue,
        };
        table.insert(a, v);
    }
    Ok(raw.expr.substitute(&|a| table.get(a).cloned()))
}

/// `X chi` for `chi = E(h)`, with tails resolved through `h`.
fn apply_to_gradient(x: &WnlOperator, scales: &[Q], chi: &[DiffPoly], h: &DiffPoly) -> Vec<DiffPoly> {
    let n = x.n;
    let ctx = DerivCtx::new(n);
    let mut out = vec![DiffPoly::zero(); n as usize];
    for ((i, j, s), b) in x.local() {
        out[i as usize - 1] += b * &ctx.d_n(&chi[j as usize - 1], s);
    }
    if !x.tails().is_empty() {
        let prim = translation_integral(n, h);
        for (t, c) in x.tails().iter().zip(scales) {
            let inner = prim.scale(&(&t.e * c));
            for (i, wi) in t.w.iter().enumerate() {
                out[i] += wi * &inner;
            }
        }
    }
    out
}

/// Recipe C evaluated directly at `psi^a = E(f_a)`, where the covectors
/// depend on `u` and the Euler operator sees that dependence.
pub fn recipe_c_on_gradients(
    p: &WnlOperator,
    q: &WnlOperator,
    f: &[DiffPoly; 3],
    check: SkewCheck,
) -> Result<DiffPoly, SchoutenError> {
    setup(p, q, check)?;
    let n = p.n;
    let sp = tail_scales(&WnlOperator::tilde_table(&[p]))?;
    let sq = tail_scales(&WnlOperator::tilde_table(&[q]))?;
    let grads: Vec<Vec<DiffPoly>> =
        f.iter().map(|fa| (1..=n).map(|i| euler_operator(n, fa, i)).collect()).collect();
    let jobs: Vec<_> = [(p, &sp, q, &sq), (q, &sq, p, &sp)]
        .into_iter()
        .flat_map(|x| CYCLIC.iter().map(move |&c| (x, c)))
        .collect();
    let parts = par::map(jobs, |((x, sx, y, sy), (a, b, c))| {
        let ya = apply_to_gradient(y, sy, &grads[a as usize - 1], &f[a as usize - 1]);
        let h = DiffPoly::sum(ya.iter().zip(&grads[b as usize - 1]).map(|(l, r)| l * r));
        let rho: Vec<DiffPoly> = (1..=n).map(|k| euler_operator(n, &h, k)).collect();
        let xr = apply_to_gradient(x, sx, &rho, &h);
        DiffPoly::sum(xr.iter().zip(&grads[c as usize - 1]).map(|(l, r)| l * r))
    });
    Ok(DiffPoly::sum(parts))
}

/// True iff two densities in `u` alone differ by a total derivative.
pub fn densities_agree(n: u8, a: &DiffPoly, b: &DiffPoly) -> bool {
    let d = a - b;
    (1..=n).all(|k| euler_operator(n, &d, k).is_zero())
}
