//! Property bodies shared by the module suites and the acceptance suite.

use super::strategies::{poly, sized_poly};
use super::{random_poly, random_skew};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use wnl_core::dist::{jacobi_dist, reduce_dist};
use wnl_core::kernel::{euler_operator, normalize, q, total_derivative};
use wnl_core::pva::{classify_terms, eliminate_type3, master_formula, pva_jacobi_entry, LambdaExpr, Shape};
use wnl_core::{DiffPoly, WnlOperator};

pub type Outcome = Result<(), TestCaseError>;

/// Runs `f` on `cases` values of `s`.
pub fn check<S: Strategy>(cases: u32, s: S, f: impl Fn(S::Value) -> Outcome) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&s, f).map_err(|e| e.to_string())
}

fn u(i: u8, k: u32) -> DiffPoly {
    DiffPoly::jet(i, k)
}

fn sum(n: u8, f: impl Fn(u8) -> DiffPoly) -> DiffPoly {
    DiffPoly::sum((1..=n).map(f))
}

/// Arbitrary (not necessarily skew) operator with up to `tails` tails.
pub fn random_operator(rng: &mut StdRng, n: u8, order: u32, tails: usize) -> WnlOperator {
    let mut p = WnlOperator::zero(n);
    for _ in 0..rng.gen_range(1..=4) {
        let (i, j, s) = (rng.gen_range(1..=n), rng.gen_range(1..=n), rng.gen_range(0..=order));
        p.add_local(i, j, s, random_poly(rng, n, 2, 2, 3)).unwrap();
    }
    for _ in 0..rng.gen_range(0..=tails) {
        let w = (1..=n).map(|_| random_poly(rng, n, 1, 2, 2)).collect();
        p.add_tail(q(rng.gen_range(-2..=2)), w).unwrap();
    }
    p
}

/// Skew operator with a random local part and usually a random tail.
pub fn random_poisson_candidate(rng: &mut StdRng, n: u8) -> WnlOperator {
    let tail = rng.gen_bool(0.7);
    random_skew(rng, n, 2, tail, false)
}

pub fn densities(rng: &mut StdRng, n: u8) -> [DiffPoly; 3] {
    [0, 1, 2].map(|_| random_poly(rng, n, 2, 2, 3))
}

/// Tail `w^i_k u^k_x D^{-1} w^j_h u^h_x` from a matrix of functions of the fields.
pub fn tail_operator(w: &[Vec<DiffPoly>]) -> WnlOperator {
    let n = w.len() as u8;
    let mut p = WnlOperator::zero(n);
    let v = (0..n as usize).map(|i| sum(n, |k| &w[i][k as usize - 1] * &u(k, 1))).collect();
    p.add_tail(q(1), v).unwrap();
    p
}

pub fn random_affinor(rng: &mut StdRng, n: u8) -> Vec<Vec<DiffPoly>> {
    (0..n).map(|_| (0..n).map(|_| random_poly(rng, n, 0, 2, 2)).collect()).collect()
}

/// `J(N, N)` for `N = tail_operator(w)`: one type-2 term and single-atom payloads.
pub fn expected_jnn(w: &[Vec<DiffPoly>], i: u8, j: u8, k: u8) -> LambdaExpr {
    let n = w.len() as u8;
    let wm = |a: u8, b: u8| w[a as usize - 1][b as usize - 1].clone();
    let tail = |a: u8| sum(n, |m| &wm(a, m) * &u(m, 1));
    // (w w)^a_b u^b_x
    let ww = |a: u8| sum(n, |l| &wm(a, l) * &tail(l));
    let mut e = LambdaExpr::zero();
    e.add_tot(tail(k), Shape::default(), &ww(j) * &tail(i) - &ww(i) * &tail(j));
    e.add_plain(Shape { y: Some(tail(j)), ..Shape::default() }, &ww(k) * &tail(i) - &tail(k) * &ww(i));
    e.add_plain(Shape { x: Some(tail(i)), ..Shape::default() }, &tail(k) * &ww(j) - &ww(k) * &tail(j));
    e
}

/// A type-3 shape (or an atom shape with a positive power of the other parameter) and a seed.
pub fn type3_payload() -> impl Strategy<Value = (Shape, u64)> {
    (0u32..=2, 1u32..=3, 0usize..3, any::<u64>()).prop_map(|(p, qq, kind, seed)| {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_poly(&mut rng, 2, 1, 2, 2);
        let g = if g.is_zero() { u(1, 1) } else { g };
        let shape = match kind {
            0 => Shape::power(p, qq),
            1 => Shape { mu: qq, x: Some(g), ..Shape::default() },
            _ => Shape { lam: qq, y: Some(g), ..Shape::default() },
        };
        (shape, seed)
    })
}

pub fn euler_strategy() -> impl Strategy<Value = (u8, DiffPoly)> {
    sized_poly(4, 5)
}

pub fn euler_annihilates_total_derivatives((n, p): (u8, DiffPoly)) -> Outcome {
    let dp = total_derivative(n, &p);
    for i in 1..=n {
        prop_assert!(euler_operator(n, &dp, i).is_zero());
    }
    Ok(())
}

pub fn pair_strategy(terms: usize) -> impl Strategy<Value = (DiffPoly, DiffPoly)> {
    (poly(3, 4, terms), poly(3, 4, terms))
}

pub fn total_derivative_is_a_derivation((a, b): (DiffPoly, DiffPoly)) -> Outcome {
    let lhs = total_derivative(3, &(&a * &b));
    let rhs = &total_derivative(3, &a) * &b + &a * &total_derivative(3, &b);
    prop_assert_eq!(lhs, rhs);
    Ok(())
}

pub fn normalize_is_idempotent_and_additive((a, b): (DiffPoly, DiffPoly)) -> Outcome {
    let na = normalize(&a);
    prop_assert_eq!(normalize(&na), na.clone());
    let nb = normalize(&b);
    prop_assert_eq!(normalize(&(&a + &b)), normalize(&(&na + &nb)));
    prop_assert!(normalize(&(&a + &(-&a))).is_zero());
    Ok(())
}

pub fn operator_strategy() -> impl Strategy<Value = (u64, u8, u32)> {
    (any::<u64>(), 1u8..=3, 0u32..=3)
}

pub fn adjoint_is_an_involution((seed, n, order): (u64, u8, u32)) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let p = random_operator(&mut rng, n, order, 2);
    prop_assert_eq!(p.adjoint().adjoint(), p);
    Ok(())
}

pub fn skew_strategy() -> impl Strategy<Value = (u64, u8, bool)> {
    (any::<u64>(), 1u8..=2, any::<bool>())
}

pub fn reduce_dist_is_idempotent((seed, n, tail): (u64, u8, bool)) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let p = random_skew(&mut rng, n, 2, tail, false);
    let once = reduce_dist(n, &jacobi_dist(&p));
    prop_assert_eq!(reduce_dist(n, &once), once);
    Ok(())
}

pub fn seeded(max_n: u8) -> impl Strategy<Value = (u64, u8)> {
    (any::<u64>(), 1u8..=max_n)
}

/// `{Df_lambda g} = -lambda {f_lambda g}` and `{f_lambda Dg} = (lambda + D) {f_lambda g}`.
pub fn sesquilinearity((seed, n): (u64, u8)) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let p = random_poisson_candidate(&mut rng, n);
    let [f, g, _] = densities(&mut rng, n);
    let fg = master_formula(&p, &f, &g);
    let left = master_formula(&p, &total_derivative(n, &f), &g);
    prop_assert_eq!(left.canonical(n), fg.mul_param(1, 0).scaled(&q(-1)).canonical(n));
    let right = master_formula(&p, &f, &total_derivative(n, &g));
    prop_assert_eq!(right.canonical(n), fg.shift_power(n, true, false, 1).canonical(n));
    Ok(())
}

/// Both Leibniz rules of the master formula.
pub fn leibniz_rules((seed, n): (u64, u8)) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let p = random_poisson_candidate(&mut rng, n);
    let [f, g, h] = densities(&mut rng, n);
    // {f_lambda g h} = {f_lambda g} h + g {f_lambda h}
    let lhs = master_formula(&p, &f, &(&g * &h));
    let mut rhs = master_formula(&p, &f, &g).mul_poly(&h);
    rhs += &master_formula(&p, &f, &h).mul_poly(&g);
    prop_assert_eq!(lhs.canonical(n), rhs.canonical(n));
    // {f g_lambda h} = {f_{lambda+D} h}_-> g + {g_{lambda+D} h}_-> f
    let lhs = master_formula(&p, &(&f * &g), &h);
    let mut rhs = master_formula(&p, &f, &h).shifted_onto(n, &g).unwrap();
    rhs += &master_formula(&p, &g, &h).shifted_onto(n, &f).unwrap();
    prop_assert_eq!(lhs.canonical(n), rhs);
    Ok(())
}

/// `{g_lambda f} = -{f_{-lambda-D} g}`.
pub fn skew_symmetry((seed, n): (u64, u8)) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let p = random_poisson_candidate(&mut rng, n);
    let [f, g, _] = densities(&mut rng, n);
    let gf = master_formula(&p, &g, &f).canonical(n);
    let fg = master_formula(&p, &f, &g).transposed(n).unwrap();
    prop_assert_eq!(gf, fg.scaled(&q(-1)));
    Ok(())
}

/// `O (l+m+D)^{-1} F1 = P + O (l+m+D)^{-1} F2` holds iff `F1 - F2 = (l+m+D)(P/O)`;
/// with `O = 1` this is checked without any inverse.
pub fn type3_elimination_preserves_value((shape, seed): (Shape, u64)) -> Outcome {
    let n = 2;
    let mut rng = StdRng::seed_from_u64(seed ^ 0x9e37);
    let a = random_poly(&mut rng, n, 2, 2, 3);
    let mut e = LambdaExpr::zero();
    e.add_tot(DiffPoly::one(), shape.clone(), a.clone());
    let out = eliminate_type3(n, &e);
    let mut local = LambdaExpr::zero();
    let mut rest = LambdaExpr::zero();
    for (sh, c) in out.plain() {
        local.add_plain(sh.clone(), c.clone());
    }
    for (o, sh, c) in out.tot() {
        prop_assert_eq!(o, &DiffPoly::one());
        rest.add_plain(sh.clone(), c.clone());
    }
    let diff = LambdaExpr::term(shape, a) - rest;
    prop_assert_eq!(diff.canonical(n), local.shift_power(n, true, true, 1).canonical(n));
    prop_assert!(!classify_terms(&out).unwrap().contains_key(&3));
    Ok(())
}

/// `J(N, N)` has no two-atom terms and equals [`expected_jnn`].
pub fn tail_jacobi_structure((seed, n): (u64, u8)) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let w = random_affinor(&mut rng, n);
    let p = tail_operator(&w);
    if p.tails().is_empty() {
        return Ok(());
    }
    for i in 1..=n {
        for j in 1..=n {
            for k in 1..=n {
                let e = pva_jacobi_entry(&p, i, j, k).unwrap().canonical(n);
                prop_assert_eq!(&e, &expected_jnn(&w, i, j, k).canonical(n));
                for t in classify_terms(&e).unwrap().keys() {
                    prop_assert!([2, 4, 5].contains(t));
                }
            }
        }
    }
    Ok(())
}
