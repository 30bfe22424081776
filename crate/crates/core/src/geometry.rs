//! Riemannian oracle for hydrodynamic-type brackets
//!
//! `P^{ij} = g^{ij} D + Gamma^{ij}_k u^k_x + sum_a c_a w^i_{ak} u^k_x D^{-1} w^j_{ah} u^h_x`
//!
//! and reduction of backend residuals modulo its conditions.

use std::collections::{BTreeMap, HashSet};

use num_traits::One;

use crate::kernel::{partial_jet, q, Atom, CoeffSym, DiffPoly, JetVar, Monomial, Q};
use crate::schouten::SkewCheck;
use crate::{dist, pva, schouten, ConditionSet, WnlOperator};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("metric g is degenerate")]
    SingularMetric,
    #[error("reduction stopped after {0} products")]
    NonTerminating(usize),
    #[error("malformed hydrodynamic data: {0}")]
    Shape(String),
    #[error("backend failure: {0}")]
    Backend(String),
}

/// One nonlocal tail `c w^i_k u^k_x D^{-1} w^j_h u^h_x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PbhtTail {
    pub c: Q,
    /// `w[i - 1][k - 1] = w^i_k`.
    pub w: Vec<Vec<DiffPoly>>,
}

/// Coefficients of a hydrodynamic-type operator, all functions of `u` alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PbhtData {
    pub n: u8,
    /// `g[i - 1][j - 1] = g^{ij}`.
    pub g: Vec<Vec<DiffPoly>>,
    /// `gamma[i - 1][j - 1][k - 1] = Gamma^{ij}_k`.
    pub gamma: Vec<Vec<Vec<DiffPoly>>>,
    pub tails: Vec<PbhtTail>,
}

fn sym(name: &str, upper: &[u8], lower: &[u8]) -> DiffPoly {
    DiffPoly::sym(CoeffSym::new(name, upper, lower))
}

fn has_jets(p: &DiffPoly) -> bool {
    p.any_atom(|a| matches!(a, Atom::Jet(j) if j.order > 0))
}

/// `sum_k a_k u^k_x` split into `a_k`, if `p` has that shape.
fn linear_in_ux(n: u8, p: &DiffPoly) -> Option<Vec<DiffPoly>> {
    let mut out = vec![DiffPoly::zero(); n as usize];
    for (m, c) in p.split_by(|a| matches!(a, Atom::Jet(j) if j.order > 0)) {
        match m.factors() {
            [(Atom::Jet(j), 1)] if j.order == 1 => out[j.field as usize - 1] = c,
            _ => return None,
        }
    }
    Some(out)
}

impl PbhtData {
    pub fn new(g: Vec<Vec<DiffPoly>>, gamma: Vec<Vec<Vec<DiffPoly>>>, tails: Vec<PbhtTail>) -> Result<Self, GeometryError> {
        let n = g.len();
        let square = |m: &Vec<Vec<DiffPoly>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if n == 0 || n > u8::MAX as usize || !square(&g) {
            return Err(GeometryError::Shape("g must be a nonempty square matrix".into()));
        }
        if gamma.len() != n || !gamma.iter().all(square) {
            return Err(GeometryError::Shape("Gamma must be n x n x n".into()));
        }
        if !tails.iter().all(|t| square(&t.w)) {
            return Err(GeometryError::Shape("each w must be n x n".into()));
        }
        let d = PbhtData { n: n as u8, g, gamma, tails };
        if d.entries().any(has_jets) {
            return Err(GeometryError::Shape("coefficients may depend on u only".into()));
        }
        Ok(d)
    }

    /// Opaque `g^{ij}`, `Gamma^{ij}_k` and, optionally, one tail `w^i_k` with `c = 1`.
    pub fn symbolic(n: u8, with_tail: bool) -> Self {
        let r = 1..=n;
        let g = r.clone().map(|i| r.clone().map(|j| sym("g", &[i, j], &[])).collect()).collect();
        let gamma = r
            .clone()
            .map(|i| r.clone().map(|j| r.clone().map(|k| sym("Gamma", &[i, j], &[k])).collect()).collect())
            .collect();
        let tails = if with_tail {
            let w = r.clone().map(|i| r.clone().map(|k| sym("w", &[i], &[k])).collect()).collect();
            vec![PbhtTail { c: q(1), w }]
        } else {
            vec![]
        };
        PbhtData { n, g, gamma, tails }
    }

    fn entries(&self) -> impl Iterator<Item = &DiffPoly> {
        self.g
            .iter()
            .flatten()
            .chain(self.gamma.iter().flatten().flatten())
            .chain(self.tails.iter().flat_map(|t| t.w.iter().flatten()))
    }

    pub fn g(&self, i: u8, j: u8) -> &DiffPoly {
        &self.g[i as usize - 1][j as usize - 1]
    }

    pub fn gamma(&self, i: u8, j: u8, k: u8) -> &DiffPoly {
        &self.gamma[i as usize - 1][j as usize - 1][k as usize - 1]
    }

    pub fn to_operator(&self) -> WnlOperator {
        let n = self.n;
        let ux = |k: u8| DiffPoly::jet(k, 1);
        let mut p = WnlOperator::zero(n);
        for i in 1..=n {
            for j in 1..=n {
                p.add_local(i, j, 1, self.g(i, j).clone()).unwrap();
                let g0 = DiffPoly::sum((1..=n).map(|k| self.gamma(i, j, k) * &ux(k)));
                p.add_local(i, j, 0, g0).unwrap();
            }
        }
        for t in &self.tails {
            let w = t.w.iter().map(|row| DiffPoly::sum((1..=n).map(|k| &row[k as usize - 1] * &ux(k)))).collect();
            p.add_tail(t.c.clone(), w).unwrap();
        }
        p
    }

    /// Reads off `g`, `Gamma`, `w` if `p` is of hydrodynamic type.
    pub fn from_operator(p: &WnlOperator) -> Option<Self> {
        let n = p.n as usize;
        let mut g = vec![vec![DiffPoly::zero(); n]; n];
        let mut gamma = vec![vec![vec![DiffPoly::zero(); n]; n]; n];
        for ((i, j), (s, c)) in p.local().map(|((i, j, s), c)| ((i as usize - 1, j as usize - 1), (s, c))) {
            match s {
                1 if !has_jets(c) => g[i][j] = c.clone(),
                0 => gamma[i][j] = linear_in_ux(p.n, c)?,
                _ => return None,
            }
        }
        let mut tails = Vec::new();
        for t in p.tails() {
            let w = t.w.iter().map(|wi| linear_in_ux(p.n, wi)).collect::<Option<Vec<_>>>()?;
            tails.push(PbhtTail { c: t.e.clone(), w });
        }
        Some(PbhtData { n: p.n, g, gamma, tails })
    }

    pub fn metric_det(&self) -> DiffPoly {
        det(&self.g)
    }

    /// The conditions in polynomial form with every free index raised: metric
    /// symmetry and compatibility, symmetry of `g Gamma` and `g w`, Codazzi as
    /// `g^{kj}(nabla_k w^i_m - nabla_m w^i_k)` and Gauss as
    /// `g^{is} g^{jt} (R^p_{stk} - ...)`. No inverse of `g` is needed, so this is
    /// the base used by [`reduce_modulo`]; it has the same zero set as
    /// [`geometric_check`] whenever `g` is invertible.
    pub fn raised_conditions(&self) -> ConditionSet {
        let mut out = self.algebraic_conditions();
        let n = self.n;
        let d = |f: &DiffPoly, k: u8| partial_jet(f, JetVar::new(k, 0));
        for (a, t) in self.tails.iter().enumerate() {
            let w = |i: u8, k: u8| &t.w[i as usize - 1][k as usize - 1];
            for i in 1..=n {
                for j in 1..=n {
                    for m in 1..=n {
                        let mut r = DiffPoly::zero();
                        for k in 1..=n {
                            r += self.g(k, j) * &(d(w(i, m), k) - d(w(i, k), m));
                            r -= self.gamma(j, i, k) * w(k, m);
                            r += self.gamma(k, i, m) * w(j, k);
                        }
                        out.push(format!("codazzi[a={a}][i={i},j={j},m={m}]"), r);
                    }
                }
            }
        }
        for i in 1..=n {
            for j in 1..=n {
                for p in 1..=n {
                    for k in 1..=n {
                        let mut r = DiffPoly::zero();
                        for h in 1..=n {
                            r += &(d(self.gamma(j, p, h), k) - d(self.gamma(j, p, k), h)) * self.g(h, i);
                            r += self.gamma(i, j, h) * self.gamma(h, p, k);
                            r -= self.gamma(i, p, h) * self.gamma(h, j, k);
                            for t in &self.tails {
                                let w = |i: u8, k: u8| &t.w[i as usize - 1][k as usize - 1];
                                let ww = &(w(j, h) * w(p, k)) - &(w(p, h) * w(j, k));
                                r += (self.g(h, i) * &ww).scale(&t.c);
                            }
                        }
                        out.push(format!("gauss[i={i},j={j},p={p},k={k}]"), r);
                    }
                }
            }
        }
        out
    }

    /// Conditions not involving curvature or derivatives of `w`.
    fn algebraic_conditions(&self) -> ConditionSet {
        let n = self.n;
        let d = |f: &DiffPoly, k: u8| partial_jet(f, JetVar::new(k, 0));
        let mut out = ConditionSet::new();
        for i in 1..=n {
            for j in i + 1..=n {
                out.push(format!("sym_g[{i},{j}]"), self.g(i, j) - self.g(j, i));
            }
        }
        for i in 1..=n {
            for j in 1..=n {
                for k in 1..=n {
                    let r = &(d(self.g(i, j), k) - self.gamma(i, j, k).clone()) - self.gamma(j, i, k);
                    out.push(format!("compat[{i},{j};{k}]"), r);
                }
            }
        }
        for i in 1..=n {
            for j in i + 1..=n {
                for k in 1..=n {
                    let r = DiffPoly::sum(
                        (1..=n).map(|s| &(self.g(i, s) * self.gamma(j, k, s)) - &(self.g(j, s) * self.gamma(i, k, s))),
                    );
                    out.push(format!("sym_gGamma[{i},{j};{k}]"), r);
                }
            }
        }
        for (a, t) in self.tails.iter().enumerate() {
            let w = |i: u8, k: u8| &t.w[i as usize - 1][k as usize - 1];
            for i in 1..=n {
                for j in i + 1..=n {
                    let r = DiffPoly::sum((1..=n).map(|s| &(self.g(i, s) * w(j, s)) - &(self.g(j, s) * w(i, s))));
                    out.push(format!("sym_gw[a={a}][{i},{j}]"), r);
                }
            }
        }
        out
    }
}

fn minor(m: &[Vec<DiffPoly>], row: usize, col: usize) -> Vec<Vec<DiffPoly>> {
    m.iter()
        .enumerate()
        .filter(|&(r, _)| r != row)
        .map(|(_, v)| v.iter().enumerate().filter(|&(c, _)| c != col).map(|(_, x)| x.clone()).collect())
        .collect()
}

/// Determinant by cofactor expansion along the first row.
pub fn det(m: &[Vec<DiffPoly>]) -> DiffPoly {
    match m.len() {
        0 => DiffPoly::one(),
        1 => m[0][0].clone(),
        _ => DiffPoly::sum(m[0].iter().enumerate().filter(|(_, a)| !a.is_zero()).map(|(c, a)| {
            let t = a * &det(&minor(m, 0, c));
            if c % 2 == 0 {
                t
            } else {
                -t
            }
        })),
    }
}

/// `adj(m)` with `m adj(m) = det(m) Id`.
pub fn adjugate(m: &[Vec<DiffPoly>]) -> Vec<Vec<DiffPoly>> {
    let n = m.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let c = det(&minor(m, j, i));
                    if (i + j) % 2 == 0 {
                        c
                    } else {
                        -c
                    }
                })
                .collect()
        })
        .collect()
}

/// The six geometric conditions in their lowered form, with the Levi-Civita
/// connection `Gamma^k_{ij} = -g_{il} Gamma^{lk}_j` and
/// `R^{ij}_{kh} = g^{is} R^j_{skh}`. Codazzi residuals are multiplied by
/// `det g` and Gauss residuals by `(det g)^2` so that they stay polynomial.
pub fn geometric_check(d: &PbhtData) -> Result<ConditionSet, GeometryError> {
    let n = d.n;
    let dg = d.metric_det();
    if dg.is_zero() {
        return Err(GeometryError::SingularMetric);
    }
    let adj = adjugate(&d.g);
    let der = |f: &DiffPoly, k: u8| partial_jet(f, JetVar::new(k, 0));
    // c[k][i][j] = det(g) Gamma^k_{ij}
    let c: Vec<Vec<Vec<DiffPoly>>> = (1..=n)
        .map(|k| {
            (1..=n)
                .map(|i| {
                    (1..=n)
                        .map(|j| -DiffPoly::sum((1..=n).map(|l| &adj[i as usize - 1][l as usize - 1] * d.gamma(l, k, j))))
                        .collect()
                })
                .collect()
        })
        .collect();
    let cc = |k: u8, i: u8, j: u8| &c[k as usize - 1][i as usize - 1][j as usize - 1];

    let mut out = d.algebraic_conditions();
    for (a, t) in d.tails.iter().enumerate() {
        let w = |i: u8, k: u8| &t.w[i as usize - 1][k as usize - 1];
        for j in 1..=n {
            for i in 1..=n {
                for k in i + 1..=n {
                    let mut r = &dg * &(der(w(j, k), i) - der(w(j, i), k));
                    for s in 1..=n {
                        r += cc(j, i, s) * w(s, k);
                        r -= cc(s, i, k) * w(j, s);
                        r -= cc(j, k, s) * w(s, i);
                        r += cc(s, k, i) * w(j, s);
                    }
                    out.push(format!("codazzi[a={a}][j={j};i={i},k={k}]"), r);
                }
            }
        }
    }
    let ddet: Vec<DiffPoly> = (1..=n).map(|k| der(&dg, k)).collect();
    // det^2 R^j_{skh}, R^j_{skh} = Gamma^j_{ks,h} - Gamma^j_{hs,k} + Gamma^j_{hl} Gamma^l_{ks} - Gamma^j_{kl} Gamma^l_{hs},
    // the sign under which the round sphere with w = Id and c = 1 satisfies Gauss.
    let riemann = |j: u8, s: u8, k: u8, h: u8| {
        let mut r = &dg * &(der(cc(j, k, s), h) - der(cc(j, h, s), k));
        r -= cc(j, k, s) * &ddet[h as usize - 1];
        r += cc(j, h, s) * &ddet[k as usize - 1];
        for l in 1..=n {
            r += cc(j, h, l) * cc(l, k, s);
            r -= cc(j, k, l) * cc(l, h, s);
        }
        r
    };
    let dg2 = dg.pow(2);
    for k in 1..=n {
        for h in k + 1..=n {
            let lowered: Vec<Vec<DiffPoly>> =
                (1..=n).map(|j| (1..=n).map(|s| riemann(j, s, k, h)).collect()).collect();
            for i in 1..=n {
                for j in 1..=n {
                    let mut r = DiffPoly::sum((1..=n).map(|s| d.g(i, s) * &lowered[j as usize - 1][s as usize - 1]));
                    for t in &d.tails {
                        let w = |i: u8, k: u8| &t.w[i as usize - 1][k as usize - 1];
                        let ww = &(w(i, k) * w(j, h)) - &(w(j, k) * w(i, h));
                        r -= (&dg2 * &ww).scale(&t.c);
                    }
                    out.push(format!("gauss[i={i},j={j};k={k},h={h}]"), r);
                }
            }
        }
    }
    Ok(out)
}

/// Knobs for [`reduce_modulo_with`].
#[derive(Clone, Debug)]
pub struct ReduceOptions {
    /// A residual `r` also counts as reduced when `m r` lies in the ideal for
    /// one of these `m` (typically powers of `det g`).
    pub multipliers: Vec<DiffPoly>,
    /// Products may exceed the degree of the target by this much.
    pub extra_degree: u32,
    pub max_products: usize,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { multipliers: vec![DiffPoly::one()], extra_degree: 1, max_products: 400_000 }
    }
}

fn deriv_orders(p: &DiffPoly) -> impl Iterator<Item = usize> {
    p.atoms().into_iter().filter_map(|a| match a {
        Atom::Coeff(c) => Some(c.deriv.len()),
        _ => None,
    })
}

fn deriv_order(p: &DiffPoly) -> usize {
    deriv_orders(p).max().unwrap_or(0)
}

fn n_fields(p: &DiffPoly) -> u8 {
    p.atoms()
        .iter()
        .filter_map(|a| match a {
            Atom::Coeff(c) => c.upper.iter().chain(&c.lower).chain(&c.deriv).copied().max(),
            Atom::Jet(j) => Some(j.field),
            _ => None,
        })
        .max()
        .unwrap_or(1)
}

/// All `D_K b` for multi-indices `|K| <= order`.
fn prolongations(n: u8, b: &DiffPoly, order: usize) -> Vec<DiffPoly> {
    let mut out = vec![b.clone()];
    let mut layer = vec![(1u8, b.clone())];
    for _ in 0..order {
        let mut next = Vec::new();
        for (lo, p) in &layer {
            for k in *lo..=n {
                let dp = partial_jet(p, JetVar::new(k, 0));
                if !dp.is_zero() {
                    out.push(dp.clone());
                    next.push((k, dp));
                }
            }
        }
        layer = next;
    }
    out
}

/// Ideal generated by a set of conditions and their prolongations.
///
/// Conditions with a coefficient symbol occurring only linearly and alone are
/// oriented into rewrite rules (largest derivative order first), as metric
/// symmetry `g^{ji} -> g^{ij}` and compatibility `g^{ij}_{,k} -> Gamma^{ij}_k + Gamma^{ji}_k`.
/// Everything else becomes a relation, and membership is decided by row echelon
/// over the products `m r` of relations with monomials.
struct Ideal {
    rules: BTreeMap<Atom, DiffPoly>,
    relations: Vec<DiffPoly>,
    by_atom: BTreeMap<Atom, Vec<(usize, Monomial)>>,
    constants: Vec<usize>,
    echelon: BTreeMap<Monomial, DiffPoly>,
    made: HashSet<(usize, Monomial)>,
    visited: HashSet<Monomial>,
    max_products: usize,
}

impl Ideal {
    fn new(base: &ConditionSet, n: u8, order: usize, max_products: usize) -> Self {
        let mut id = Ideal {
            rules: BTreeMap::new(),
            relations: Vec::new(),
            by_atom: BTreeMap::new(),
            constants: Vec::new(),
            echelon: BTreeMap::new(),
            made: HashSet::new(),
            visited: HashSet::new(),
            max_products,
        };
        let mut gens: Vec<DiffPoly> = Vec::new();
        for b in base.exprs() {
            // Prolong until the lowest-order symbols of `b` reach `order`: a
            // relation between derivatives of order `order` may only follow
            // from a prolongation that also involves higher ones.
            let extra = order.saturating_sub(deriv_orders(b).min().unwrap_or(0));
            gens.extend(prolongations(n, b, extra));
        }
        // Lower derivative orders first so that rules for g^{ij}_{,K} see the
        // symmetry of g already applied.
        gens.sort_by_key(deriv_order);
        let mut pending = Vec::new();
        for b in gens {
            let b = id.apply(&b);
            match solvable_atom(&b) {
                Some((a, c)) => {
                    let rhs = (&b - &DiffPoly::atom(a.clone()).scale(&c)).scale(&(-Q::one() / c));
                    for r in id.rules.values_mut() {
                        *r = r.substitute(&|x| (x == &a).then(|| rhs.clone()));
                    }
                    id.rules.insert(a, rhs);
                }
                None if !b.is_zero() => pending.push(b),
                None => {}
            }
        }
        let mut seen = HashSet::new();
        for b in pending {
            let b = id.apply(&b);
            if b.is_zero() {
                continue;
            }
            let (_, b) = b.primitive();
            if seen.insert(b.clone()) {
                id.add_relation(b);
            }
        }
        id
    }

    fn add_relation(&mut self, b: DiffPoly) {
        let idx = self.relations.len();
        for (m, _) in b.terms() {
            match m.factors().first() {
                Some((a, _)) => self.by_atom.entry(a.clone()).or_default().push((idx, m.clone())),
                None => self.constants.push(idx),
            }
        }
        self.relations.push(b);
    }

    fn apply(&self, p: &DiffPoly) -> DiffPoly {
        if self.rules.is_empty() {
            return p.clone();
        }
        p.substitute(&|a| self.rules.get(a).cloned())
    }

    fn reduce_row(&self, mut r: DiffPoly) -> DiffPoly {
        while let Some((lead, c)) = leading(&r) {
            match self.echelon.get(&lead) {
                Some(row) => r -= row.scale(&c),
                None => break,
            }
        }
        r
    }

    fn insert_row(&mut self, r: DiffPoly) {
        let r = self.reduce_row(r);
        if let Some((lead, c)) = leading(&r) {
            self.echelon.insert(lead, r.scale(&(Q::one() / c)));
        }
    }

    /// Adds every product `m r` with a term equal to a monomial reachable from `t`.
    fn close_over(&mut self, t: &DiffPoly, extra_degree: u32) -> Result<(), GeometryError> {
        let top = t.terms().map(|(m, _)| m.degree()).max().unwrap_or(0) + extra_degree;
        let mut queue: Vec<Monomial> = t.terms().map(|(m, _)| m.clone()).collect();
        while let Some(m) = queue.pop() {
            if !self.visited.insert(m.clone()) {
                continue;
            }
            let mut cands: Vec<(usize, Monomial)> = Vec::new();
            for (a, _) in m.factors() {
                if let Some(v) = self.by_atom.get(a) {
                    cands.extend(v.iter().filter(|(_, s)| s.divides(&m)).map(|(i, s)| (*i, s.quotient_of(&m))));
                }
            }
            cands.extend(self.constants.iter().map(|&i| (i, m.clone())));
            for key in cands {
                if !self.made.insert(key.clone()) {
                    continue;
                }
                if self.made.len() > self.max_products {
                    return Err(GeometryError::NonTerminating(self.max_products));
                }
                let prod = self.relations[key.0].mul_monomial(&key.1, &q(1));
                for (pm, _) in prod.terms() {
                    if pm.degree() <= top && !self.visited.contains(pm) {
                        queue.push(pm.clone());
                    }
                }
                self.insert_row(prod);
            }
        }
        Ok(())
    }

    fn contains(&mut self, t: &DiffPoly, extra_degree: u32) -> Result<bool, GeometryError> {
        if t.is_zero() {
            return Ok(true);
        }
        self.close_over(t, extra_degree)?;
        Ok(self.reduce_row(t.clone()).is_zero())
    }
}

fn leading(p: &DiffPoly) -> Option<(Monomial, Q)> {
    p.terms().next_back().map(|(m, c)| (m.clone(), c.clone()))
}

/// Largest coefficient symbol that occurs in `b` only as a lone linear term.
fn solvable_atom(b: &DiffPoly) -> Option<(Atom, Q)> {
    let mut count: BTreeMap<&Atom, usize> = BTreeMap::new();
    for (m, _) in b.terms() {
        for (a, _) in m.factors() {
            *count.entry(a).or_default() += 1;
        }
    }
    b.terms()
        .filter_map(|(m, c)| match m.factors() {
            [(a @ Atom::Coeff(_), 1)] if count[a] == 1 => Some((a.clone(), c.clone())),
            _ => None,
        })
        .max_by(|(a, _), (b, _)| {
            let key = |x: &Atom| match x {
                Atom::Coeff(s) => s.deriv.len(),
                _ => 0,
            };
            key(a).cmp(&key(b)).then_with(|| a.cmp(b))
        })
}

/// Residuals of `c` that do not vanish modulo `base` (with prolongations up to
/// the derivative order present in `c`). Survivors are returned after the
/// rewrite rules have been applied.
pub fn reduce_modulo(c: &ConditionSet, base: &ConditionSet) -> Result<ConditionSet, GeometryError> {
    reduce_modulo_with(c, base, &ReduceOptions::default())
}

pub fn reduce_modulo_with(c: &ConditionSet, base: &ConditionSet, opts: &ReduceOptions) -> Result<ConditionSet, GeometryError> {
    let order = c.exprs().map(deriv_order).max().unwrap_or(0);
    let n = c.exprs().chain(base.exprs()).map(n_fields).max().unwrap_or(1);
    let mut id = Ideal::new(base, n, order, opts.max_products);
    let mults: Vec<DiffPoly> = opts.multipliers.iter().map(|m| id.apply(m)).collect();
    let mut out = ConditionSet::new();
    for r in c.iter() {
        let t = id.apply(&r.expr);
        let mut reduced = false;
        for m in &mults {
            if id.contains(&(m * &t), opts.extra_degree)? {
                reduced = true;
                break;
            }
        }
        if !reduced {
            out.push(r.label.clone(), t);
        }
    }
    Ok(out)
}

/// Verdicts and residuals of one backend.
#[derive(Clone, Debug)]
pub struct BackendOutcome {
    pub name: &'static str,
    pub residuals: ConditionSet,
    /// Residuals left after reduction modulo the geometric conditions; `None`
    /// when the operator is not of hydrodynamic type.
    pub unexplained: Option<ConditionSet>,
}

impl BackendOutcome {
    pub fn passes(&self) -> bool {
        self.residuals.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub skew: ConditionSet,
    /// Whether skewness was assumed rather than verified (opaque coefficients).
    pub assumed_skew: bool,
    pub backends: Vec<BackendOutcome>,
    /// The geometric conditions, for hydrodynamic-type operators.
    pub geometry: Option<ConditionSet>,
    /// `(a, b, k)`: `k` residuals of backend `a` survive reduction modulo those of `b`.
    pub pairwise: Vec<(&'static str, &'static str, usize)>,
}

impl ComparisonReport {
    /// All backends (and the geometric oracle, when present) give the same verdict.
    pub fn verdicts_agree(&self) -> bool {
        let mut v = self.backends.iter().map(|b| b.passes());
        let first = v.next().unwrap_or(true);
        v.all(|x| x == first) && self.geometry.as_ref().is_none_or(|g| g.is_empty() == first)
    }

    pub fn verdict(&self) -> bool {
        self.skew_ok() && self.backends.iter().all(|b| b.passes())
    }

    fn skew_ok(&self) -> bool {
        self.skew.is_empty() || self.assumed_skew
    }

    /// Every residual of every backend vanishes modulo the geometric conditions.
    pub fn geometry_explains(&self) -> bool {
        self.backends.iter().all(|b| b.unexplained.as_ref().is_none_or(|u| u.is_empty()))
    }
}

/// Options for [`compare_backends`].
#[derive(Clone, Debug, Default)]
pub struct CompareOptions {
    /// Also reduce each backend's residuals modulo every other backend's.
    pub pairwise: bool,
    pub reduce: ReduceOptions,
}

fn opaque(c: &ConditionSet) -> bool {
    c.exprs().all(|e| e.any_atom(|a| matches!(a, Atom::Coeff(_))))
}

/// Runs the three backends (and the geometric oracle for hydrodynamic-type
/// operators) on `p` and cross-checks them.
pub fn compare_backends(p: &WnlOperator, opts: &CompareOptions) -> Result<ComparisonReport, GeometryError> {
    let skew = p.skew_residuals();
    let assumed_skew = !skew.is_empty() && opaque(&skew);
    let check = if assumed_skew { SkewCheck::Assume } else { SkewCheck::Enforce };
    let bad = |e: String| GeometryError::Backend(e);
    let mut backends = Vec::new();
    if skew.is_empty() || assumed_skew {
        let d = dist::dist_residuals(&dist::jacobi_reduced(p));
        let s = schouten::jacobi_residuals(p, check).map_err(|e| bad(e.to_string()))?;
        let v = pva::jacobi_residuals(p, check).map_err(|e| bad(e.to_string()))?;
        for (name, residuals) in [("dist", d), ("schouten", s), ("pva", v)] {
            backends.push(BackendOutcome { name, residuals, unexplained: None });
        }
    }
    let data = PbhtData::from_operator(p);
    let mut geometry = None;
    if let Some(d) = &data {
        let g = geometric_check(d)?;
        let base = d.raised_conditions();
        let mut ro = opts.reduce.clone();
        let dg = d.metric_det();
        ro.multipliers.extend([dg.clone(), dg.pow(2)]);
        for b in &mut backends {
            b.unexplained = Some(reduce_modulo_with(&b.residuals, &base, &ro)?);
        }
        geometry = Some(g);
    }
    let mut pairwise = Vec::new();
    if opts.pairwise {
        for a in &backends {
            for b in &backends {
                if a.name != b.name {
                    let left = reduce_modulo_with(&a.residuals, &b.residuals, &opts.reduce)?;
                    pairwise.push((a.name, b.name, left.len()));
                }
            }
        }
    }
    Ok(ComparisonReport { skew, assumed_skew, backends, geometry, pairwise })
}
