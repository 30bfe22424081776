use super::{q, Atom, DiffPoly, JetVar, Monomial, Point, Q};
use num_traits::Zero;

/// Tail vectors `w_alpha` used to differentiate `~psi^a_alpha`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TildeTable {
    /// `w[alpha][i - 1] = w^i_alpha`.
    pub w: Vec<Vec<DiffPoly>>,
}

impl TildeTable {
    pub fn new(w: Vec<Vec<DiffPoly>>) -> Self {
        TildeTable { w }
    }

    /// `D ~psi^arg_tail = w^i_tail psi^arg_i`.
    pub fn derivative(&self, arg: u8, tail: u16) -> DiffPoly {
        let w = self
            .w
            .get(tail as usize)
            .unwrap_or_else(|| panic!("no tail {tail} registered for ~psi"));
        DiffPoly::sum(
            w.iter()
                .enumerate()
                .map(|(i, wi)| wi * &DiffPoly::psi(arg, i as u8 + 1, 0)),
        )
    }
}

/// Everything a total derivative needs besides the polynomial itself.
#[derive(Clone, Copy, Debug)]
pub struct DerivCtx<'a> {
    pub n: u8,
    pub point: Point,
    pub tildes: Option<&'a TildeTable>,
}

impl<'a> DerivCtx<'a> {
    pub fn new(n: u8) -> Self {
        DerivCtx { n, point: Point::X, tildes: None }
    }

    pub fn at(n: u8, point: Point) -> Self {
        DerivCtx { n, point, tildes: None }
    }

    pub fn with_tildes(n: u8, tildes: &'a TildeTable) -> Self {
        DerivCtx { n, point: Point::X, tildes: Some(tildes) }
    }

    fn atom_derivative(&self, a: &Atom) -> DiffPoly {
        match a {
            Atom::Jet(j) if j.point == self.point => {
                DiffPoly::atom(Atom::Jet(JetVar { order: j.order + 1, ..*j }))
            }
            Atom::Jet(_) => DiffPoly::zero(),
            Atom::Coeff(c) if c.point == self.point => DiffPoly::sum((1..=self.n).map(|k| {
                DiffPoly::from_terms([(
                    Monomial::from_factors(vec![
                        (Atom::Coeff(c.differentiated(k)), 1),
                        (Atom::Jet(JetVar::at(k, 1, self.point)), 1),
                    ]),
                    q(1),
                )])
            })),
            Atom::Coeff(_) => DiffPoly::zero(),
            Atom::Psi { arg, idx, order } => {
                DiffPoly::atom(Atom::Psi { arg: *arg, idx: *idx, order: order + 1 })
            }
            Atom::Tilde { arg, tail } => self
                .tildes
                .expect("total derivative of ~psi needs a tail table")
                .derivative(*arg, *tail),
        }
    }

    pub fn d(&self, p: &DiffPoly) -> DiffPoly {
        let mut cache: std::collections::BTreeMap<Atom, DiffPoly> = Default::default();
        let mut out = DiffPoly::zero();
        for (m, c) in p.terms() {
            for (k, (a, e)) in m.factors().iter().enumerate() {
                let da = cache.entry(a.clone()).or_insert_with(|| self.atom_derivative(a));
                if da.is_zero() {
                    continue;
                }
                out += da.mul_monomial(&m.without_one(k), &(c * q(*e as i64)));
            }
        }
        out
    }

    pub fn d_n(&self, p: &DiffPoly, times: u32) -> DiffPoly {
        let mut r = p.clone();
        for _ in 0..times {
            if r.is_zero() {
                break;
            }
            r = self.d(&r);
        }
        r
    }
}

/// `D_x p` for polynomials without `~psi` atoms.
pub fn total_derivative(n: u8, p: &DiffPoly) -> DiffPoly {
    DerivCtx::new(n).d(p)
}

/// Total derivative in the variable of `point`; atoms at other points are constants.
pub fn total_derivative_at(n: u8, point: Point, p: &DiffPoly) -> DiffPoly {
    DerivCtx::at(n, point).d(p)
}

/// Total derivative using `D ~psi^a_alpha = w^i_alpha psi^a_i`.
pub fn total_derivative_with(n: u8, tildes: &TildeTable, p: &DiffPoly) -> DiffPoly {
    DerivCtx::with_tildes(n, tildes).d(p)
}

/// Formal partial derivative by an atom treated as an independent coordinate.
pub fn partial_atom(p: &DiffPoly, v: &Atom) -> DiffPoly {
    let mut out = DiffPoly::zero();
    for (m, c) in p.terms() {
        let e = m.exponent(v);
        if e > 0 {
            let k = m.factors().iter().position(|(a, _)| a == v).unwrap();
            out.add_term(m.without_one(k), c * q(e as i64));
        }
    }
    out
}

/// `dp/du^k_sigma`. Coefficient symbols depend on order-0 fields at their own point.
pub fn partial_jet(p: &DiffPoly, v: JetVar) -> DiffPoly {
    let mut out = partial_atom(p, &Atom::Jet(v));
    if v.order == 0 {
        for (m, c) in p.terms() {
            for (k, (a, e)) in m.factors().iter().enumerate() {
                if let Atom::Coeff(s) = a {
                    if s.point == v.point {
                        let rest = m.without_one(k);
                        let f = Monomial::atom(Atom::Coeff(s.differentiated(v.field)));
                        out.add_term(rest.mul(&f), c * q(*e as i64));
                    }
                }
            }
        }
    }
    out
}

pub fn partial_psi(p: &DiffPoly, arg: u8, idx: u8, order: u32) -> DiffPoly {
    partial_atom(p, &Atom::Psi { arg, idx, order })
}

fn alternating_sum(ctx: &DerivCtx, parts: Vec<DiffPoly>) -> DiffPoly {
    // Horner form: sum_s (-D)^s a_s = a_0 - D(a_1 - D(a_2 - ...)).
    let mut acc = DiffPoly::zero();
    for a in parts.into_iter().rev() {
        acc = a - ctx.d(&acc);
    }
    acc
}

/// Variational derivative `delta p / delta u^i` at `x`.
pub fn euler_operator(n: u8, p: &DiffPoly, i: u8) -> DiffPoly {
    let ctx = DerivCtx::new(n);
    let top = p.max_jet_order(Point::X).unwrap_or(0);
    let parts = (0..=top).map(|s| partial_jet(p, JetVar::new(i, s))).collect();
    alternating_sum(&ctx, parts)
}

/// Variational derivative by `u^i`, with `ctx` supplying the tail rule if needed.
/// Atoms other than jets and coefficients are held fixed.
pub fn euler_operator_with(ctx: &DerivCtx, p: &DiffPoly, i: u8) -> DiffPoly {
    let top = p.max_jet_order(ctx.point).unwrap_or(0);
    let parts = (0..=top).map(|s| partial_jet(p, JetVar::at(i, s, ctx.point))).collect();
    alternating_sum(ctx, parts)
}

/// `F` with `D F = sum_i u^i_x E_i(f)`, the conserved density that translation
/// invariance attaches to `f`.
pub fn translation_integral(n: u8, f: &DiffPoly) -> DiffPoly {
    let ctx = DerivCtx::new(n);
    let top = f.max_jet_order(Point::X).unwrap_or(0);
    let mut r = DiffPoly::zero();
    for i in 1..=n {
        for j in 1..=top {
            let mut a = partial_jet(f, JetVar::new(i, j));
            for l in 0..j {
                if a.is_zero() {
                    break;
                }
                let sign = if l % 2 == 0 { q(1) } else { q(-1) };
                r += (&a * &DiffPoly::jet(i, j - l)).scale(&sign);
                a = ctx.d(&a);
            }
        }
    }
    f - &r
}

/// Variational derivative by `psi^arg_idx`, with `ctx` supplying the tail rule if needed.
pub fn euler_psi(ctx: &DerivCtx, p: &DiffPoly, arg: u8, idx: u8) -> DiffPoly {
    let top = p.max_psi_order(arg).unwrap_or(0);
    let parts = (0..=top).map(|s| partial_psi(p, arg, idx, s)).collect();
    alternating_sum(ctx, parts)
}

/// Binomial coefficient as an exact rational.
pub fn binom(n: u32, k: u32) -> Q {
    if k > n {
        return Q::zero();
    }
    let mut r = q(1);
    for t in 0..k {
        r = r * q((n - t) as i64) / q((t + 1) as i64);
    }
    r
}
