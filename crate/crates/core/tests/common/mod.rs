#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::Rng;
use wnl_core::kernel::{q, DiffPoly, Monomial};
use wnl_core::{Atom, JetVar, WnlOperator};

/// Random polynomial in `u^k_s` (`s <= order`) of total degree `<= deg`
/// with at most `terms` terms and small integer coefficients.
pub fn random_poly(rng: &mut StdRng, n: u8, order: u32, deg: u32, terms: usize) -> DiffPoly {
    let mut p = DiffPoly::zero();
    for _ in 0..rng.gen_range(1..=terms) {
        let d = rng.gen_range(0..=deg);
        let fs = (0..d)
            .map(|_| (Atom::Jet(JetVar::new(rng.gen_range(1..=n), rng.gen_range(0..=order))), 1))
            .collect();
        p.add_term(Monomial::from_factors(fs), q(rng.gen_range(-3..=3)));
    }
    p
}

/// `P0 - P0*` for a random local `P0`, plus optionally one tail.
///
/// `translation_tail` restricts the tail to `c u_x`.
pub fn random_skew(rng: &mut StdRng, n: u8, order: u32, tail: bool, translation_tail: bool) -> WnlOperator {
    let mut p0 = WnlOperator::zero(n);
    for _ in 0..rng.gen_range(1..=3) {
        let i = rng.gen_range(1..=n);
        let j = rng.gen_range(1..=n);
        let s = rng.gen_range(0..=order);
        p0.add_local(i, j, s, random_poly(rng, n, 1, 2, 2)).unwrap();
    }
    let mut p = p0.plus(&p0.adjoint().scaled(&q(-1)));
    if tail {
        let w = if translation_tail {
            let c = q(rng.gen_range(1..=2));
            (1..=n).map(|i| DiffPoly::jet(i, 1).scale(&c)).collect()
        } else {
            (1..=n).map(|_| random_poly(rng, n, 1, 2, 2)).collect()
        };
        p.add_tail(q(if rng.gen_bool(0.5) { 1 } else { -1 }), w).unwrap();
    }
    p
}

/// Random local density for gradient substitutions.
pub fn random_density(rng: &mut StdRng, n: u8) -> DiffPoly {
    random_poly(rng, n, 1, 3, 3)
}

pub mod goldens;
pub mod props;

pub mod strategies {
    use proptest::prelude::*;
    use wnl_core::kernel::{q, DiffPoly, Monomial};
    use wnl_core::{Atom, CoeffSym, JetVar};

    /// Jet variable or opaque `g^{ab}` (possibly differentiated) over `n` fields.
    pub fn atom(n: u8, order: u32) -> impl Strategy<Value = Atom> {
        prop_oneof![
            3 => (1..=n, 0..=order).prop_map(|(f, o)| Atom::Jet(JetVar::new(f, o))),
            1 => (1..=n, 1..=n, proptest::collection::vec(1..=n, 0..=2)).prop_map(|(a, b, d)| {
                Atom::Coeff(CoeffSym::new("g", &[a, b], &[]).with_deriv(&d))
            }),
        ]
    }

    /// Polynomial with up to `terms` terms of degree at most 3.
    pub fn poly(n: u8, order: u32, terms: usize) -> impl Strategy<Value = DiffPoly> {
        let term = (-4i64..=4, proptest::collection::vec(atom(n, order), 0..=3));
        proptest::collection::vec(term, 0..=terms).prop_map(|ts| {
            let mut p = DiffPoly::zero();
            for (c, atoms) in ts {
                p.add_term(Monomial::from_factors(atoms.into_iter().map(|a| (a, 1)).collect()), q(c));
            }
            p
        })
    }

    /// Field count paired with a polynomial over it.
    pub fn sized_poly(order: u32, terms: usize) -> impl Strategy<Value = (u8, DiffPoly)> {
        (1u8..=3).prop_flat_map(move |n| (Just(n), poly(n, order, terms)))
    }
}
