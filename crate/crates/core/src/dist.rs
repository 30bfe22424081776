//! Distribution backend: the Jacobi distribution `J^{ijk}_{xyz}` built from
//! `P^{ij}_{x,y} = B^{ij s}(x) delta^(s)(x-y) + e w^i(x) nu(x-y) w^j(y)` and its
//! reduced form.
//!
//! `nu(x-y) = sgn(x-y)/2`, so `d/dx nu(x-y) = delta(x-y)`. The reduced form has
//! three kinds of terms:
//!
//! * `e_mn(x) delta^(m)(x-y) delta^(n)(x-z)`,
//! * `b(c,o) nu(c-o) delta^(n)(c-u)` with `o` the cyclic successor of `c`,
//!   i.e. `nu_xy delta_xz`, `nu_yz delta_yx`, `nu_zx delta_zy`, with `b` free of `u`,
//! * `a(x,y,z) nu(c-o) nu(c-u)`, i.e. `nu_xy nu_xz` and its cyclic shifts.

use crate::kernel::{binom, partial_jet, q, Atom, DerivCtx, DiffPoly, JetVar, Monomial, Point, Q};
use crate::kernel::TildeTable;
use crate::operator::WnlOperator;
use crate::schouten::ThreeVector;
use crate::{par, ConditionSet};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DistKind {
    Delta(u32),
    Nu,
}

/// `kind(a - b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DistFactor {
    pub kind: DistKind,
    pub a: Point,
    pub b: Point,
}

impl DistFactor {
    pub fn delta(n: u32, a: Point, b: Point) -> Self {
        DistFactor { kind: DistKind::Delta(n), a, b }
    }

    pub fn nu(a: Point, b: Point) -> Self {
        DistFactor { kind: DistKind::Nu, a, b }
    }

    fn touches(&self, p: Point) -> bool {
        self.a == p || self.b == p
    }

    /// The same distribution written as `kind(p - other)`, with its sign.
    fn factor_at(&self, p: Point) -> (Q, DistFactor) {
        if self.a == p {
            return (q(1), *self);
        }
        let sign = match self.kind {
            DistKind::Delta(n) if n % 2 == 0 => q(1),
            _ => q(-1),
        };
        (sign, DistFactor { a: self.b, b: self.a, ..*self })
    }
}

impl fmt::Display for DistFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = (self.a.name(), self.b.name());
        match self.kind {
            DistKind::Nu => write!(f, "nu({a}-{b})"),
            DistKind::Delta(0) => write!(f, "delta({a}-{b})"),
            DistKind::Delta(n) => write!(f, "delta^({n})({a}-{b})"),
        }
    }
}

/// Product of distribution factors, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DistMono(Vec<DistFactor>);

impl DistMono {
    pub fn new(mut fs: Vec<DistFactor>) -> Self {
        fs.sort();
        DistMono(fs)
    }

    pub fn factors(&self) -> &[DistFactor] {
        &self.0
    }
}

impl fmt::Display for DistMono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", s.join("*"))
    }
}

/// Index triple `(i, j, k)` of `J^{ijk}`, paired with test functions at `x, y, z`.
pub type Idx3 = [u8; 3];

/// Sum of point-tagged coefficients times distribution monomials, per index triple.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DistExpr {
    terms: BTreeMap<(Idx3, DistMono), DiffPoly>,
}

impl DistExpr {
    pub fn add_term(&mut self, idx: Idx3, mono: DistMono, c: DiffPoly) {
        if c.is_zero() {
            return;
        }
        let key = (idx, mono);
        let e = self.terms.entry(key.clone()).or_default();
        *e += c;
        if e.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add(&mut self, other: &DistExpr) {
        for ((i, m), c) in &other.terms {
            self.add_term(*i, m.clone(), c.clone());
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

    pub fn terms(&self) -> impl Iterator<Item = (&Idx3, &DistMono, &DiffPoly)> {
        self.terms.iter().map(|((i, m), c)| (i, m, c))
    }

    /// Coefficient of `mono` in `J^{idx}`; factors may be given in any order.
    pub fn coefficient(&self, idx: Idx3, factors: &[DistFactor]) -> DiffPoly {
        self.terms.get(&(idx, DistMono::new(factors.to_vec()))).cloned().unwrap_or_default()
    }
}

/// `P^{ij}_{a,b}` as a list of coefficient times one factor.
fn kernel(p: &WnlOperator, i: u8, j: u8, a: Point, b: Point) -> Vec<(DiffPoly, DistFactor)> {
    let mut out = Vec::new();
    for ((ii, jj, s), c) in p.local() {
        if ii == i && jj == j {
            out.push((c.retag(Point::X, a), DistFactor::delta(s, a, b)));
        }
    }
    for t in p.tails() {
        let wi = t.w[i as usize - 1].retag(Point::X, a);
        let wj = t.w[j as usize - 1].retag(Point::X, b);
        let c = (&wi * &wj).scale(&t.e);
        if !c.is_zero() {
            out.push((c, DistFactor::nu(a, b)));
        }
    }
    out
}

/// `d/da` of a kernel whose factors are all oriented `(a, b)`.
fn kernel_d(n: u8, a: Point, k: &[(DiffPoly, DistFactor)]) -> Vec<(DiffPoly, DistFactor)> {
    let ctx = DerivCtx::at(n, a);
    let mut out = Vec::new();
    for (c, f) in k {
        debug_assert_eq!(f.a, a);
        let dc = ctx.d(c);
        if !dc.is_zero() {
            out.push((dc, *f));
        }
        let df = match f.kind {
            DistKind::Delta(m) => DistFactor::delta(m + 1, f.a, f.b),
            DistKind::Nu => DistFactor::delta(0, f.a, f.b),
        };
        out.push((c.clone(), df));
    }
    out
}

/// One of the six sums making up `J`, e.g. `dP^{ij}_{x,y}/du^l_s(x) d_x^s P^{lk}_{x,z}`.
#[derive(Clone, Copy, Debug)]
struct SumShape {
    /// Positions in `(i, j, k)` of the first kernel's indices.
    first: (usize, usize),
    points: (Point, Point),
    /// Point whose jets the first kernel is differentiated by.
    d: Point,
    second: usize,
    far: Point,
}

const SHAPES: [SumShape; 6] = {
    use Point::{X, Y, Z};
    [
        SumShape { first: (0, 1), points: (X, Y), d: X, second: 2, far: Z },
        SumShape { first: (0, 1), points: (X, Y), d: Y, second: 2, far: Z },
        SumShape { first: (2, 0), points: (Z, X), d: Z, second: 1, far: Y },
        SumShape { first: (2, 0), points: (Z, X), d: X, second: 1, far: Y },
        SumShape { first: (1, 2), points: (Y, Z), d: Y, second: 0, far: X },
        SumShape { first: (1, 2), points: (Y, Z), d: Z, second: 0, far: X },
    ]
};

/// A summand of `J`: sum number `sum` (1..=6) at jet order `sigma`.
#[derive(Clone, Debug)]
pub struct Summand {
    pub sum: u8,
    pub sigma: u32,
    pub expr: DistExpr,
}

impl Summand {
    /// Position in the listing that orders all order-0 sums before all order-1 sums.
    pub fn position(&self) -> usize {
        self.sigma as usize * 6 + self.sum as usize
    }
}

fn max_coeff_order(p: &WnlOperator) -> u32 {
    let mut top = 0;
    for (_, c) in p.local() {
        top = top.max(c.max_jet_order(Point::X).unwrap_or(0));
    }
    for t in p.tails() {
        for w in &t.w {
            top = top.max(w.max_jet_order(Point::X).unwrap_or(0));
        }
    }
    top
}

/// All summands of `J^{ijk}_{xyz}`, for every index triple.
pub fn jacobi_summands(p: &WnlOperator) -> Vec<Summand> {
    let n = p.n;
    let top = max_coeff_order(p);
    let mut jobs = Vec::new();
    for (si, _) in SHAPES.iter().enumerate() {
        for sigma in 0..=top {
            jobs.push((si, sigma));
        }
    }
    par::map(jobs, |(si, sigma)| {
        let sh = SHAPES[si];
        let mut expr = DistExpr::default();
        for i in 1..=n {
            for j in 1..=n {
                for k in 1..=n {
                    let idx = [i, j, k];
                    let first = kernel(p, idx[sh.first.0], idx[sh.first.1], sh.points.0, sh.points.1);
                    for l in 1..=n {
                        let dfirst: Vec<_> = first
                            .iter()
                            .map(|(c, f)| (partial_jet(c, JetVar::at(l, sigma, sh.d)), *f))
                            .filter(|(c, _)| !c.is_zero())
                            .collect();
                        if dfirst.is_empty() {
                            continue;
                        }
                        let mut second = kernel(p, l, idx[sh.second], sh.d, sh.far);
                        for _ in 0..sigma {
                            second = kernel_d(n, sh.d, &second);
                        }
                        for (c1, f1) in &dfirst {
                            for (c2, f2) in &second {
                                expr.add_term(idx, DistMono::new(vec![*f1, *f2]), c1 * c2);
                            }
                        }
                    }
                }
            }
        }
        Summand { sum: si as u8 + 1, sigma, expr }
    })
}

/// `J^{ijk}_{xyz}`, unreduced.
pub fn jacobi_dist(p: &WnlOperator) -> DistExpr {
    let mut out = DistExpr::default();
    for s in jacobi_summands(p) {
        out.add(&s.expr);
    }
    out
}

fn next_point(p: Point) -> Point {
    match p {
        Point::X => Point::Y,
        Point::Y => Point::Z,
        Point::Z => Point::X,
    }
}

fn prev_point(p: Point) -> Point {
    next_point(next_point(p))
}

fn arg_of(p: Point) -> u8 {
    match p {
        Point::X => 1,
        Point::Y => 2,
        Point::Z => 3,
    }
}

fn shared(f: &DistFactor, g: &DistFactor) -> Point {
    *[f.a, f.b].iter().find(|p| g.touches(**p)).expect("factors on disjoint pairs")
}

/// Splits a monomial into its parts at each point; psi atoms are not expected.
fn split_points(m: &Monomial) -> [Monomial; 3] {
    let mut parts: [Vec<(Atom, u32)>; 3] = Default::default();
    for (a, e) in m.factors() {
        let p = a.point().expect("distribution coefficients carry only point-tagged atoms");
        parts[arg_of(p) as usize - 1].push((a.clone(), *e));
    }
    parts.map(Monomial::from_factors)
}

fn part(parts: &[Monomial; 3], p: Point) -> DiffPoly {
    DiffPoly::term(parts[arg_of(p) as usize - 1].clone(), q(1))
}

struct Reducer {
    n: u8,
    out: DistExpr,
    /// Local terms as a trilinear density in `psi^1, psi^2, psi^3` at `x`.
    density: DiffPoly,
}

impl Reducer {
    /// `c delta^(m)(s-b) delta^(n)(s-d)` into the density.
    fn local(&mut self, idx: Idx3, c: &DiffPoly, s: Point, fm: (u32, Point), fn_: (u32, Point)) {
        let ctx = DerivCtx::new(self.n);
        let test = |p: Point| DiffPoly::psi(arg_of(p), idx[arg_of(p) as usize - 1], 0);
        for (mono, v) in c.terms() {
            let parts = split_points(mono);
            let at = |p: Point| part(&parts, p).retag(p, Point::X);
            let mut t = (&at(s) * &test(s)).scale(v);
            for (ord, b) in [fm, fn_] {
                t = &t * &ctx.d_n(&(&at(b) * &test(b)), ord);
            }
            self.density += t;
        }
    }

    fn nu_delta(&mut self, idx: Idx3, c: &DiffPoly, nu: DistFactor, de: DistFactor) {
        let ctr = shared(&nu, &de);
        let (s1, nu) = nu.factor_at(ctr);
        let (s2, de) = de.factor_at(ctr);
        let sign = &s1 * &s2;
        let o = nu.b;
        let u = de.b;
        let DistKind::Delta(m) = de.kind else { unreachable!() };
        if o == next_point(ctr) {
            self.target(idx, &c.scale(&sign), ctr, o, u, m);
            return;
        }
        // nu(c-o) delta^(m)(c-u): move the centre to u through
        // f(c) delta^(m)(u-c) = sum_k C(m,k) f^(m-k)(u) delta^(k)(u-c), with f = C_c nu(c-o).
        let sign = if m % 2 == 0 { sign } else { -sign };
        let ctx = DerivCtx::at(self.n, u);
        for (mono, v) in c.terms() {
            let parts = split_points(mono);
            let rest = &(&part(&parts, o) * &part(&parts, u)).scale(&(v * &sign));
            let cc = part(&parts, ctr).retag(ctr, u);
            let mut dcc = vec![cc];
            for _ in 0..m {
                let d = ctx.d(dcc.last().unwrap());
                dcc.push(d);
            }
            for k in 0..=m {
                let jmax = m - k;
                for r in 0..=jmax {
                    let coef = binom(m, k) * binom(jmax, r);
                    let cf = (rest * &dcc[(jmax - r) as usize]).scale(&coef);
                    if cf.is_zero() {
                        continue;
                    }
                    if r == 0 {
                        self.target(idx, &cf, u, o, ctr, k);
                    } else {
                        self.local(idx, &cf, u, (r - 1, o), (k, ctr));
                    }
                }
            }
        }
    }

    /// `c nu(ctr-o) delta^(m)(ctr-u)` with `o` the successor of `ctr`; strips `u` from `c`.
    fn target(&mut self, idx: Idx3, c: &DiffPoly, ctr: Point, o: Point, u: Point, m: u32) {
        let ctx = DerivCtx::at(self.n, ctr);
        let nu = DistFactor::nu(ctr, o);
        for (mono, v) in c.terms() {
            let parts = split_points(mono);
            let keep = (&part(&parts, ctr) * &part(&parts, o)).scale(v);
            let mut fu = part(&parts, u).retag(u, ctr);
            // f(u) delta^(m)(c-u) = sum_k C(m,k) f^(m-k)(c) delta^(k)(c-u)
            let mut ders = vec![fu.clone()];
            for _ in 0..m {
                fu = ctx.d(&fu);
                ders.push(fu.clone());
            }
            for k in 0..=m {
                let cf = (&keep * &ders[(m - k) as usize]).scale(&binom(m, k));
                self.out.add_term(idx, DistMono::new(vec![nu, DistFactor::delta(k, ctr, u)]), cf);
            }
        }
    }

    fn nu_nu(&mut self, idx: Idx3, c: &DiffPoly, f: DistFactor, g: DistFactor) {
        let ctr = shared(&f, &g);
        let (s1, _) = f.factor_at(ctr);
        let (s2, _) = g.factor_at(ctr);
        let mono = DistMono::new(vec![
            DistFactor::nu(ctr, next_point(ctr)),
            DistFactor::nu(ctr, prev_point(ctr)),
        ]);
        self.out.add_term(idx, mono, c.scale(&(&s1 * &s2)));
    }

    fn delta_delta(&mut self, idx: Idx3, c: &DiffPoly, f: DistFactor, g: DistFactor) {
        let s = shared(&f, &g);
        let (s1, f) = f.factor_at(s);
        let (s2, g) = g.factor_at(s);
        let (DistKind::Delta(m), DistKind::Delta(k)) = (f.kind, g.kind) else { unreachable!() };
        self.local(idx, &c.scale(&(&s1 * &s2)), s, (m, f.b), (k, g.b));
    }

    fn finish(mut self) -> DistExpr {
        // Integrate by parts until psi^1 is undifferentiated, then read off e_mn.
        let ctx = DerivCtx::new(self.n);
        let mut work = std::mem::take(&mut self.density);
        while !work.is_zero() {
            let mut next = DiffPoly::zero();
            for (m, c) in work.terms() {
                let pos = m
                    .factors()
                    .iter()
                    .position(|(a, _)| matches!(a, Atom::Psi { arg: 1, .. }))
                    .expect("local density term without psi^1");
                let Atom::Psi { idx: i, order, .. } = m.factors()[pos].0 else { unreachable!() };
                if order == 0 {
                    let mut idx = [i, 0, 0];
                    let mut ords = [0u32; 3];
                    let mut coef = Vec::new();
                    for (a, e) in m.factors() {
                        match a {
                            Atom::Psi { arg, idx: t, order } => {
                                idx[*arg as usize - 1] = *t;
                                ords[*arg as usize - 1] = *order;
                            }
                            _ => coef.push((a.clone(), *e)),
                        }
                    }
                    let mono = DistMono::new(vec![
                        DistFactor::delta(ords[1], Point::X, Point::Y),
                        DistFactor::delta(ords[2], Point::X, Point::Z),
                    ]);
                    self.out.add_term(idx, mono, DiffPoly::term(Monomial::from_factors(coef), c.clone()));
                } else {
                    let rest = DiffPoly::term(m.without_one(pos), c.clone());
                    next -= &ctx.d(&rest) * &DiffPoly::psi(1, i, order - 1);
                }
            }
            work = next;
        }
        self.out
    }
}

/// Brings `e` to the reduced form described in the module docs.
pub fn reduce_dist(n: u8, e: &DistExpr) -> DistExpr {
    let mut r = Reducer { n, out: DistExpr::default(), density: DiffPoly::zero() };
    for (idx, mono, c) in e.terms() {
        match mono.factors() {
            [f, g] => match (f.kind, g.kind) {
                (DistKind::Nu, DistKind::Nu) => r.nu_nu(*idx, c, *f, *g),
                (DistKind::Nu, DistKind::Delta(_)) => r.nu_delta(*idx, c, *f, *g),
                (DistKind::Delta(_), DistKind::Nu) => r.nu_delta(*idx, c, *g, *f),
                _ => r.delta_delta(*idx, c, *f, *g),
            },
            other => panic!("reduction expects products of two factors, got {}", other.len()),
        }
    }
    r.finish()
}

/// Centre of a reduced term: the point shared by its two factors.
fn centre(mono: &DistMono) -> Point {
    let [f, g] = mono.factors() else { panic!("reduced terms have two factors") };
    shared(f, g)
}

/// Coefficients of the reduced form, split by monomials in every atom that is
/// not a function of the fields at the term's centre.
pub fn dist_residuals(reduced: &DistExpr) -> ConditionSet {
    let mut out = ConditionSet::new();
    for (idx, mono, c) in reduced.terms() {
        let ctr = centre(mono);
        let label = format!("J[{},{},{}] {}", idx[0], idx[1], idx[2], mono);
        for (m, v) in c.split_by(|a| a.is_jet() || a.point() != Some(ctr)) {
            out.push(format!("{label} @ {m}"), v.retag(ctr, Point::X));
        }
    }
    out
}

fn point_of(arg: u8) -> Point {
    [Point::X, Point::Y, Point::Z][arg as usize - 1]
}

/// Distributional form of a canonical three-vector, reduced.
///
/// `psi^1, psi^2, psi^3` are test functions at `x, y, z` and
/// `~psi^a = integral nu(s - t) w^m(t) psi^a_m(t) dt`.
pub fn from_three_vector(n: u8, tv: &ThreeVector, tt: &TildeTable) -> DistExpr {
    let mut r = Reducer { n, out: DistExpr::default(), density: DiffPoly::zero() };
    for (key, c) in &tv.local {
        let t = &(&DiffPoly::psi(1, key.j, key.p) * &DiffPoly::psi(2, key.k, key.q)) * &DiffPoly::psi(3, key.i, 0);
        r.density += c * &t;
    }
    for (key, c) in &tv.single {
        let b = key.a % 3 + 1;
        let cc = b % 3 + 1;
        let (ctr, o, u) = (point_of(cc), point_of(key.a), point_of(b));
        let mono = DistMono::new(vec![DistFactor::nu(ctr, o), DistFactor::delta(key.order, ctr, u)]);
        for (m, w) in tt.w[key.alpha as usize].iter().enumerate() {
            let mut idx = [0u8; 3];
            idx[cc as usize - 1] = key.i;
            idx[b as usize - 1] = key.k;
            idx[key.a as usize - 1] = m as u8 + 1;
            r.out.add_term(idx, mono.clone(), &c.retag(Point::X, ctr) * &w.retag(Point::X, o));
        }
    }
    for (key, c) in &tv.double {
        let (a, b) = match key.c {
            1 => (2, 3),
            2 => (1, 3),
            _ => (1, 2),
        };
        let ctr = point_of(key.c);
        let mono = DistMono::new(vec![DistFactor::nu(ctr, point_of(a)), DistFactor::nu(ctr, point_of(b))]);
        for (ma, wa) in tt.w[key.alpha as usize].iter().enumerate() {
            for (mb, wb) in tt.w[key.beta as usize].iter().enumerate() {
                let mut idx = [0u8; 3];
                idx[key.c as usize - 1] = key.k;
                idx[a as usize - 1] = ma as u8 + 1;
                idx[b as usize - 1] = mb as u8 + 1;
                let v = &(&c.retag(Point::X, ctr) * &wa.retag(Point::X, point_of(a))) * &wb.retag(Point::X, point_of(b));
                r.out.add_term(idx, mono.clone(), v);
            }
        }
    }
    r.finish()
}

impl DistExpr {
    pub fn scaled(&self, c: &Q) -> DistExpr {
        let mut out = DistExpr::default();
        for (i, m, v) in self.terms() {
            out.add_term(*i, m.clone(), v.scale(c));
        }
        out
    }

    /// Terms whose factors are both `delta`, both `nu`, or mixed.
    pub fn part(&self, kinds: (bool, bool)) -> DistExpr {
        let mut out = DistExpr::default();
        for (i, m, v) in self.terms() {
            let nus = m.factors().iter().filter(|f| f.kind == DistKind::Nu).count();
            let keep = match kinds {
                (false, false) => nus == 0,
                (true, false) | (false, true) => nus == 1,
                (true, true) => nus == 2,
            };
            if keep {
                out.add_term(*i, m.clone(), v.clone());
            }
        }
        out
    }
}

/// Reduced Jacobi distribution of `P`.
pub fn jacobi_reduced(p: &WnlOperator) -> DistExpr {
    reduce_dist(p.n, &jacobi_dist(p))
}

impl fmt::Display for DistExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (k, (idx, m, c)) in self.terms().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "J[{},{},{}] {m}: {c}", idx[0], idx[1], idx[2])?;
        }
        Ok(())
    }
}
