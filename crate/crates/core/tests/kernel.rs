mod common;

use common::props;
use common::strategies::sized_poly;
use proptest::prelude::*;
use wnl_core::kernel::{
    euler_operator, normalize, partial_jet, q, qr, total_derivative, FieldSpec, KernelError,
};
use wnl_core::{CoeffSym, DiffPoly, JetVar};

fn u(i: u8, k: u32) -> DiffPoly {
    DiffPoly::jet(i, k)
}

fn sym(name: &str, up: &[u8], lo: &[u8], d: &[u8]) -> DiffPoly {
    DiffPoly::sym(CoeffSym::new(name, up, lo).with_deriv(d))
}

#[test]
fn total_derivative_examples() {
    assert_eq!(total_derivative(1, &u(1, 0)), u(1, 1));
    let g11 = sym("g", &[1, 1], &[], &[]);
    let expect = &sym("g", &[1, 1], &[], &[1]) * &u(1, 1) + &sym("g", &[1, 1], &[], &[2]) * &u(2, 1);
    assert_eq!(total_derivative(2, &g11), expect);
    let p = &u(1, 0) * &u(1, 1);
    assert_eq!(total_derivative(1, &p), u(1, 1).pow(2) + &u(1, 0) * &u(1, 2));
}

#[test]
fn partial_jet_examples() {
    let p = &u(1, 1) * &u(2, 0);
    assert_eq!(partial_jet(&p, JetVar::new(1, 1)), u(2, 0));
    let p = &sym("Gamma", &[1, 2], &[1], &[]) * &u(1, 1);
    assert_eq!(partial_jet(&p, JetVar::new(2, 0)), &sym("Gamma", &[1, 2], &[1], &[2]) * &u(1, 1));
    assert!(partial_jet(&sym("g", &[1, 1], &[], &[]), JetVar::new(1, 1)).is_zero());
}

#[test]
fn euler_examples() {
    let p = &u(1, 0) * &u(1, 2);
    assert_eq!(euler_operator(1, &p, 1), u(1, 2).scale(&q(2)));
    let p = u(1, 1).pow(2).scale(&qr(1, 2));
    assert_eq!(euler_operator(1, &p, 1), -u(1, 2));
    let p = &sym("g", &[1, 2], &[], &[]) * &u(2, 3);
    assert!(euler_operator(2, &total_derivative(2, &p), 1).is_zero());
    assert!(euler_operator(2, &total_derivative(2, &p), 2).is_zero());
}

#[test]
fn normalize_examples() {
    let a = &u(1, 0) * &u(2, 0) - &u(2, 0) * &u(1, 0);
    assert!(normalize(&a).is_zero());
    let b = sym("g", &[1, 2], &[], &[2, 1]) - sym("g", &[1, 2], &[], &[1, 2]);
    assert!(normalize(&b).is_zero());
    let c = u(1, 0).scale(&qr(1, 2)).scale(&q(2));
    assert_eq!(normalize(&c), u(1, 0));
}

#[test]
fn printing_follows_the_input_grammar() {
    let p = &sym("g", &[1, 2], &[], &[1]) * &u(2, 1) - u(1, 3).scale(&qr(3, 2)) + DiffPoly::int(2);
    assert_eq!(p.to_string(), "2 + g[1,2],1*u2_x - 3/2*u1@3");
    assert_eq!(DiffPoly::zero().to_string(), "0");
}

#[test]
fn field_spec_validation() {
    let fs = FieldSpec::hydrodynamic(2);
    assert!(fs.sym("Gamma", &[1, 2], &[2]).is_ok());
    assert_eq!(fs.sym("g", &[1, 3], &[]), Err(KernelError::IndexOutOfRange { index: 3, n: 2 }));
    assert_eq!(fs.sym("h", &[1], &[]), Err(KernelError::UnknownSymbol("h".into())));
    assert!(matches!(fs.sym("w", &[1, 1], &[]), Err(KernelError::ArityMismatch { .. })));
    assert!(fs.check(&u(3, 0)).is_err());
    assert!(fs.check(&sym("g", &[1, 2], &[], &[3])).is_err());
    assert!(fs.check(&(&sym("w", &[2], &[1], &[1]) * &u(2, 4))).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn euler_annihilates_total_derivatives(v in props::euler_strategy()) {
        props::euler_annihilates_total_derivatives(v)?;
    }

    #[test]
    fn total_derivative_is_a_derivation(v in props::pair_strategy(4)) {
        props::total_derivative_is_a_derivation(v)?;
    }

    #[test]
    fn jet_partial_commutes_with_total_derivative(
        (n, p) in sized_poly(4, 5),
        i in 1u8..=3,
        sigma in 0u32..=5,
    ) {
        let i = i.min(n);
        let lhs = partial_jet(&total_derivative(n, &p), JetVar::new(i, sigma));
        let mut rhs = total_derivative(n, &partial_jet(&p, JetVar::new(i, sigma)));
        if sigma > 0 {
            rhs += partial_jet(&p, JetVar::new(i, sigma - 1));
        }
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn normalize_is_idempotent_and_additive(v in props::pair_strategy(6)) {
        props::normalize_is_idempotent_and_additive(v)?;
    }
}
