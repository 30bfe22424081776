//! Reference coefficients of the symbolic hydrodynamic operator with one tail
//! at `n = 2`, shared by the golden tests and the acceptance suite.

use std::collections::BTreeSet;
use wnl_core::dist::{jacobi_summands, reduce_dist, DistExpr, DistFactor, DistMono, Idx3};
use wnl_core::kernel::{q, DerivCtx};
use wnl_core::pva::{eliminate_type3, pva_jacobi, PvaJacobi, Shape};
use wnl_core::schouten::{half_square, normalize_three_vector, LocalKey, SingleKey, SkewCheck, ThreeVector};
use wnl_core::{Atom, CoeffSym, ConditionSet, DiffPoly, JetVar, Monomial, Point, WnlOperator};

use Point::{X, Y, Z};

pub const N: u8 = 2;

pub fn s(name: &str, up: &[u8], lo: &[u8], d: &[u8], at: Point) -> DiffPoly {
    DiffPoly::sym(CoeffSym::new(name, up, lo).with_deriv(d).at(at))
}
pub fn g(i: u8, j: u8, at: Point) -> DiffPoly {
    s("g", &[i, j], &[], &[], at)
}
pub fn gd(i: u8, j: u8, l: u8, at: Point) -> DiffPoly {
    s("g", &[i, j], &[], &[l], at)
}
pub fn gam(i: u8, j: u8, k: u8, at: Point) -> DiffPoly {
    s("Gamma", &[i, j], &[k], &[], at)
}
pub fn gamd(i: u8, j: u8, k: u8, l: u8, at: Point) -> DiffPoly {
    s("Gamma", &[i, j], &[k], &[l], at)
}
pub fn w(i: u8, k: u8, at: Point) -> DiffPoly {
    s("w", &[i], &[k], &[], at)
}
pub fn wd(i: u8, k: u8, l: u8, at: Point) -> DiffPoly {
    s("w", &[i], &[k], &[l], at)
}
pub fn ux(k: u8, at: Point) -> DiffPoly {
    DiffPoly::atom(Atom::Jet(JetVar::at(k, 1, at)))
}
pub fn uxx(k: u8, at: Point) -> DiffPoly {
    DiffPoly::atom(Atom::Jet(JetVar::at(k, 2, at)))
}
pub fn sum(f: impl Fn(u8) -> DiffPoly) -> DiffPoly {
    DiffPoly::sum((1..=N).map(f))
}
/// `w^i_s u^s_x` at a point, the tail vector component.
pub fn tail(i: u8, at: Point) -> DiffPoly {
    sum(|t| &w(i, t, at) * &ux(t, at))
}
pub fn d_at(at: Point, p: &DiffPoly) -> DiffPoly {
    DerivCtx::at(N, at).d(p)
}
pub fn delta(n: u32, a: Point, b: Point) -> DistFactor {
    DistFactor::delta(n, a, b)
}
pub fn nu(a: Point, b: Point) -> DistFactor {
    DistFactor::nu(a, b)
}
pub fn triples() -> impl Iterator<Item = Idx3> {
    (1..=N).flat_map(|i| (1..=N).flat_map(move |j| (1..=N).map(move |k| [i, j, k])))
}

pub fn operator() -> WnlOperator {
    WnlOperator::hydrodynamic_symbolic(N, true)
}

/// Coefficient of the jet monomial `m` in `p`, as a function of the fields.
pub fn jet_coeff(p: &DiffPoly, m: JetVar) -> DiffPoly {
    p.split_by(|a| a.is_jet()).remove(&Monomial::atom(Atom::Jet(m))).unwrap_or_default()
}

fn same(what: String, got: &DiffPoly, want: &DiffPoly) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want}"))
    }
}

// ---------------------------------------------------------------- distributions

pub type Table = Vec<(Vec<DistFactor>, DiffPoly)>;

pub fn first_summand(idx: Idx3) -> Table {
    let [i, j, k] = idx;
    vec![
        (vec![delta(1, X, Y), delta(1, X, Z)], sum(|l| &g(l, k, X) * &gd(i, j, l, X))),
        (
            vec![nu(X, Y), nu(X, Z)],
            &(&sum(|l| sum(|s| &(&wd(i, s, l, X) * &tail(l, X)) * &ux(s, X))) * &tail(j, Y)) * &tail(k, Z),
        ),
        (vec![delta(1, X, Y), delta(0, X, Z)], sum(|l| &gd(i, j, l, X) * &sum(|t| &gam(l, k, t, X) * &ux(t, X)))),
        (vec![delta(0, X, Y), delta(1, X, Z)], sum(|l| &g(l, k, X) * &sum(|s| &gamd(i, j, s, l, X) * &ux(s, X)))),
        (
            vec![delta(0, X, Y), delta(0, X, Z)],
            sum(|l| {
                &(&sum(|s| &gamd(i, j, s, l, X) * &ux(s, X)) * &sum(|t| &gam(l, k, t, X) * &ux(t, X)))
                    - &(&(&gd(i, j, l, X) * &tail(l, X)) * &tail(k, X))
            }),
        ),
        (
            vec![nu(Y, Z), delta(0, Y, X)],
            &(-d_at(Y, &sum(|l| &gd(i, j, l, Y) * &tail(l, Y)))
                + sum(|l| &sum(|s| &gamd(i, j, s, l, Y) * &ux(s, Y)) * &tail(l, Y)))
                * &tail(k, Z),
        ),
        (
            vec![nu(X, Y), delta(0, X, Z)],
            &sum(|l| sum(|s| &(&wd(i, s, l, X) * &ux(s, X)) * &sum(|r| &gam(l, k, r, X) * &ux(r, X))))
                * &tail(j, Y),
        ),
        (vec![nu(Y, Z), delta(1, Y, X)], -(&sum(|l| &gd(i, j, l, Y) * &tail(l, Y)) * &tail(k, Z))),
        (
            vec![nu(X, Y), delta(1, X, Z)],
            &sum(|l| sum(|s| &(&g(l, k, X) * &wd(i, s, l, X)) * &ux(s, X))) * &tail(j, Y),
        ),
    ]
}

pub fn third_summand(idx: Idx3) -> Table {
    let [i, j, k] = idx;
    let gg = sum(|l| &g(l, j, X) * &gd(k, i, l, X));
    let gdgam = sum(|l| &gd(k, i, l, X) * &sum(|t| &gam(l, j, t, X) * &ux(t, X)));
    let gdw = sum(|l| &gd(k, i, l, X) * &tail(l, X));
    vec![
        (vec![delta(2, X, Y), delta(0, X, Z)], -gg.clone()),
        (vec![delta(1, X, Y), delta(1, X, Z)], -gg.clone()),
        (
            vec![delta(1, X, Y), delta(0, X, Z)],
            -d_at(X, &gg) - gdgam.clone() + sum(|l| &g(l, j, X) * &sum(|s| &gamd(k, i, s, l, X) * &ux(s, X))),
        ),
        (vec![delta(0, X, Y), delta(1, X, Z)], -gdgam.clone()),
        (
            vec![delta(0, X, Y), delta(0, X, Z)],
            -d_at(X, &gdgam)
                + sum(|l| &sum(|s| &gamd(k, i, s, l, X) * &ux(s, X)) * &sum(|t| &gam(l, j, t, X) * &ux(t, X)))
                - &gdw * &tail(j, X),
        ),
        (
            vec![nu(X, Y), delta(0, X, Z)],
            &(-d_at(X, &gdw) + sum(|l| &sum(|s| &gamd(k, i, s, l, X) * &ux(s, X)) * &tail(l, X))) * &tail(j, Y),
        ),
        (
            vec![nu(Z, X), delta(0, Z, Y)],
            &sum(|l| sum(|s| &(&wd(k, s, l, Z) * &ux(s, Z)) * &sum(|t| &gam(l, j, t, Z) * &ux(t, Z)))) * &tail(i, X),
        ),
        (
            vec![nu(Z, X), delta(1, Z, Y)],
            &sum(|l| sum(|s| &(&g(l, j, Z) * &wd(k, s, l, Z)) * &ux(s, Z))) * &tail(i, X),
        ),
        (vec![nu(X, Y), delta(1, X, Z)], -(&gdw * &tail(j, Y))),
        (
            vec![nu(Z, X), nu(Z, Y)],
            &(&sum(|l| sum(|s| &(&wd(k, s, l, Z) * &tail(l, Z)) * &ux(s, Z))) * &tail(i, X)) * &tail(j, Y),
        ),
    ]
}

pub fn seventh_summand(idx: Idx3) -> Table {
    let [i, j, k] = idx;
    let gam_l = |l: u8, at: Point| gam(i, j, l, at);
    // D^2 w^l(u) u_x pieces at a point: Gamma^{lk}_t u^t_xx + Gamma^{lk}_{t,s} u^s_x u^t_x + tails.
    let second = |l: u8, at: Point| {
        sum(|t| sum(|s| &(&gamd(l, k, t, s, at) * &ux(s, at)) * &ux(t, at)))
            + sum(|t| &gam(l, k, t, at) * &uxx(t, at))
            + &tail(l, at) * &tail(k, at)
    };
    let dtail = |l: u8, at: Point| {
        sum(|s| sum(|m| &(&wd(l, s, m, at) * &ux(m, at)) * &ux(s, at))) + sum(|s| &w(l, s, at) * &uxx(s, at))
    };
    let first = |l: u8| sum(|s| &gd(l, k, s, X) * &ux(s, X)) + sum(|t| &gam(l, k, t, X) * &ux(t, X));
    vec![
        (vec![delta(0, X, Y), delta(2, X, Z)], sum(|l| &g(l, k, X) * &gam_l(l, X))),
        (vec![nu(X, Y), delta(2, X, Z)], &sum(|l| &w(i, l, X) * &g(l, k, X)) * &tail(j, Y)),
        (vec![delta(0, X, Y), delta(1, X, Z)], sum(|l| &gam_l(l, X) * &first(l))),
        (vec![delta(0, X, Y), delta(0, X, Z)], sum(|l| &gam_l(l, X) * &second(l, X))),
        (vec![nu(Y, Z), delta(0, Y, X)], &sum(|l| &gam_l(l, Y) * &dtail(l, Y)) * &tail(k, Z)),
        (vec![nu(X, Y), delta(0, X, Z)], &sum(|l| &w(i, l, X) * &second(l, X)) * &tail(j, Y)),
        (vec![nu(X, Y), delta(1, X, Z)], &sum(|l| &w(i, l, X) * &first(l)) * &tail(j, Y)),
        (vec![nu(X, Y), nu(X, Z)], &(&sum(|l| &w(i, l, X) * &dtail(l, X)) * &tail(k, Z)) * &tail(j, Y)),
    ]
}

/// Checks that `reduced` has exactly the listed patterns with the listed coefficients.
pub fn check_dist_table(reduced: &DistExpr, table: impl Fn(Idx3) -> Table) -> Result<(), String> {
    for idx in triples() {
        let expect = table(idx);
        let got: BTreeSet<DistMono> =
            reduced.terms().filter(|(i, _, _)| **i == idx).map(|(_, m, _)| m.clone()).collect();
        let want: BTreeSet<DistMono> = expect.iter().map(|(f, _)| DistMono::new(f.clone())).collect();
        if got != want {
            return Err(format!("patterns of J{idx:?}: got {got:?}, want {want:?}"));
        }
        for (fs, c) in expect {
            same(format!("J{idx:?} {}", DistMono::new(fs.clone())), &reduced.coefficient(idx, &fs), &c)?;
        }
    }
    Ok(())
}

/// Reduced form of the summand at `position` of the Jacobi distribution.
pub fn reduced_summand(p: &WnlOperator, position: usize) -> DistExpr {
    let s = jacobi_summands(p).into_iter().find(|s| s.position() == position).unwrap();
    reduce_dist(N, &s.expr)
}

/// The first, third and seventh summand tables.
pub fn check_dist_goldens() -> Result<(), String> {
    let p = operator();
    check_dist_table(&reduced_summand(&p, 1), first_summand)?;
    check_dist_table(&reduced_summand(&p, 3), third_summand)?;
    check_dist_table(&reduced_summand(&p, 7), seventh_summand)
}

// ---------------------------------------------------------------- three-vectors

pub fn half_square_tv() -> ThreeVector {
    normalize_three_vector(&half_square(&operator(), SkewCheck::Assume).unwrap()).unwrap().tv
}

/// Coefficient of `psi^1_j D^2 psi^2_p psi^3_i`.
pub fn second_order_local(i: u8, j: u8, p: u8) -> DiffPoly {
    sum(|h| &gam(i, j, h, X) * &g(h, p, X)) - sum(|k| &gd(j, p, k, X) * &g(k, i, X))
        + sum(|h| &gam(j, p, h, X) * &g(h, i, X))
}

/// Coefficient of `~psi^1 D^2 psi^2_p psi^3_i`, the `g w` symmetry.
pub fn gw_symmetry(i: u8, p: u8) -> DiffPoly {
    sum(|k| &w(i, k, X) * &g(k, p, X)) - sum(|k| &w(p, k, X) * &g(k, i, X))
}

/// Gauss condition: `u^k_xx` part of the coefficient of `psi^1_j psi^2_p psi^3_i`.
pub fn gauss(i: u8, j: u8, p: u8, k: u8) -> DiffPoly {
    sum(|h| &(&gamd(j, p, h, k, X) - &gamd(j, p, k, h, X)) * &g(h, i, X))
        + sum(|h| &gam(i, j, h, X) * &gam(h, p, k, X))
        - sum(|h| &gam(i, p, h, X) * &gam(h, j, k, X))
        + sum(|h| &g(h, i, X) * &(&(&w(j, h, X) * &w(p, k, X)) - &(&w(p, h, X) * &w(j, k, X))))
}

/// Codazzi condition: `u^m_xx` part of the coefficient of `~psi^2 psi^3_i psi^1_j`.
pub fn codazzi(i: u8, j: u8, m: u8) -> DiffPoly {
    -sum(|k| &gd(i, j, k, X) * &w(k, m, X))
        + sum(|k| &gam(i, j, k, X) * &w(k, m, X))
        + sum(|k| &w(j, k, X) * &gam(k, i, m, X))
        + sum(|k| &wd(i, m, k, X) * &g(k, j, X))
        - sum(|k| &wd(i, k, m, X) * &g(k, j, X))
}

pub fn gauss_entries() -> Vec<(String, DiffPoly)> {
    let mut out = Vec::new();
    for [i, j, p] in triples() {
        for k in 1..=N {
            out.push((format!("gauss[i={i},j={j},p={p},k={k}]"), gauss(i, j, p, k)));
        }
    }
    out
}

pub fn codazzi_entries() -> Vec<(String, DiffPoly)> {
    triples().map(|[i, j, m]| (format!("codazzi[i={i},j={j},m={m}]"), codazzi(i, j, m))).collect()
}

/// The `g w` symmetry and the skewness conditions, used to state the Gauss coefficient.
pub fn gw_and_skewness() -> ConditionSet {
    let p = operator();
    let mut out = ConditionSet::new();
    for i in 1..=N {
        for pp in 1..=N {
            out.push(format!("gw[{i},{pp}]"), gw_symmetry(i, pp));
        }
    }
    for r in p.skew_residuals() {
        for (m, c) in r.expr.split_by(|a| a.is_jet()) {
            out.push(format!("{} @ {m}", r.label), c);
        }
    }
    out
}

pub fn check_second_order_local(tv: &ThreeVector) -> Result<(), String> {
    for [i, j, p] in triples() {
        let got = tv.local.get(&LocalKey { j, p: 0, k: p, q: 2, i }).cloned().unwrap_or_default();
        same(format!("local i={i} j={j} p={p}"), &got, &second_order_local(i, j, p))?;
    }
    Ok(())
}

pub fn check_second_order_single_nonlocal(tv: &ThreeVector) -> Result<(), String> {
    for i in 1..=N {
        for p in 1..=N {
            let got = tv.single.get(&SingleKey { a: 1, alpha: 0, order: 2, k: p, i }).cloned().unwrap_or_default();
            same(format!("single i={i} p={p}"), &got, &gw_symmetry(i, p))?;
        }
    }
    Ok(())
}

pub fn check_codazzi(tv: &ThreeVector) -> Result<(), String> {
    for [i, j, m] in triples() {
        let entry = tv.single.get(&SingleKey { a: 2, alpha: 0, order: 0, k: i, i: j }).cloned().unwrap_or_default();
        same(format!("codazzi i={i} j={j} m={m}"), &jet_coeff(&entry, JetVar::new(m, 2)), &codazzi(i, j, m))?;
    }
    Ok(())
}

/// The Gauss coefficient agrees with [`gauss`] modulo [`gw_and_skewness`].
pub fn check_gauss(tv: &ThreeVector) -> Result<(), String> {
    use wnl_core::geometry::reduce_modulo;
    let mut diffs = ConditionSet::new();
    for [i, j, p] in triples() {
        let entry = tv.local.get(&LocalKey { j, p: 0, k: p, q: 0, i }).cloned().unwrap_or_default();
        for k in 1..=N {
            let got = jet_coeff(&entry, JetVar::new(k, 2));
            if got.is_zero() {
                return Err(format!("gauss i={i} j={j} p={p} k={k} vanishes"));
            }
            diffs.push(format!("gauss i={i} j={j} p={p} k={k}"), got - gauss(i, j, p, k));
        }
    }
    let left = reduce_modulo(&diffs, &gw_and_skewness()).map_err(|e| e.to_string())?;
    let first = left.iter().next().map(|r| format!("{}: {} left", r.label, r.expr));
    first.map_or(Ok(()), Err)
}

// ---------------------------------------------------------------- lambda brackets

/// Identifies `g^{ij}` with `g^{ji}`, derivatives included.
pub fn symmetric_g(p: &DiffPoly) -> DiffPoly {
    p.substitute(&|a| match a {
        Atom::Coeff(c) if &*c.name == "g" && c.upper[0] > c.upper[1] => {
            let mut c = c.clone();
            c.upper.swap(0, 1);
            Some(DiffPoly::sym(c))
        }
        _ => None,
    })
}

/// The lambda-form Jacobi expression with type-3 terms eliminated.
pub fn pva_jacobi_normal() -> PvaJacobi {
    let j = pva_jacobi(&operator(), SkewCheck::Assume).unwrap();
    PvaJacobi { n: N, entries: j.entries.iter().map(|(k, v)| (*k, eliminate_type3(N, v))).collect() }
}

fn sym_same(what: String, got: &DiffPoly, want: &DiffPoly) -> Result<(), String> {
    same(what, &symmetric_g(got), &symmetric_g(want))
}

fn tail_atom(j: u8) -> Shape {
    Shape { y: Some(sum(|m| &w(j, m, X) * &ux(m, X))), ..Shape::default() }
}

pub fn check_lambda_squared(jac: &PvaJacobi) -> Result<(), String> {
    for [i, j, k] in triples() {
        let got = jac.get(i, j, k).coefficient(&Shape::power(2, 0));
        let want = sum(|l| &g(l, i, X) * &gam(k, j, l, X)) - sum(|l| &g(k, l, X) * &gd(j, i, l, X))
            + sum(|l| &g(k, l, X) * &gam(j, i, l, X));
        sym_same(format!("lambda^2 i={i} j={j} k={k}"), &got, &want)?;
    }
    Ok(())
}

pub fn check_lambda_mu(jac: &PvaJacobi) -> Result<(), String> {
    for [i, j, k] in triples() {
        let got = jac.get(i, j, k).coefficient(&Shape::power(1, 1));
        let want = sum(|l| &g(i, l, X) * &gd(k, j, l, X))
            - sum(|l| &g(l, j, X) * &gd(k, i, l, X))
            - sum(|l| &g(k, l, X) * &gd(j, i, l, X))
            + sum(|l| &g(k, l, X) * &gam(j, i, l, X)).scale(&q(2));
        sym_same(format!("lambda mu i={i} j={j} k={k}"), &got, &want)?;
    }
    Ok(())
}

pub fn check_nonlocal_lambda_squared(jac: &PvaJacobi) -> Result<(), String> {
    for [i, j, k] in triples() {
        let shape = Shape { lam: 2, ..tail_atom(j) };
        let got = jac.get(i, j, k).coefficient(&shape);
        let want = sum(|l| &g(i, l, X) * &w(k, l, X)) - sum(|l| &g(k, l, X) * &w(i, l, X));
        sym_same(format!("(mu+D)^-1 w lambda^2 i={i} j={j} k={k}"), &got, &want)?;
    }
    Ok(())
}

pub fn check_second_order_local_payload(jac: &PvaJacobi) -> Result<(), String> {
    for [i, j, k] in triples() {
        let c = jac.get(i, j, k).coefficient(&Shape::power(0, 0));
        for sx in 1..=N {
            let want = sum(|l| &g(k, l, X) * &(&gamd(j, i, l, sx, X) - &gamd(j, i, sx, l, X)))
                + sum(|l| &gam(k, j, l, X) * &gam(l, i, sx, X))
                - sum(|l| &gam(k, i, l, X) * &gam(l, j, sx, X))
                + sum(|l| &g(k, l, X) * &(&(&w(j, l, X) * &w(i, sx, X)) - &(&w(i, l, X) * &w(j, sx, X))));
            sym_same(format!("u_xx payload i={i} j={j} k={k} s={sx}"), &jet_coeff(&c, JetVar::new(sx, 2)), &want)?;
        }
    }
    Ok(())
}

pub fn check_second_order_nonlocal_payload(jac: &PvaJacobi) -> Result<(), String> {
    for [i, j, k] in triples() {
        let c = jac.get(i, j, k).coefficient(&tail_atom(j));
        for sx in 1..=N {
            let want = sum(|l| &w(k, l, X) * &gam(l, i, sx, X)) - sum(|l| &w(l, sx, X) * &gam(k, i, l, X))
                + sum(|l| &g(k, l, X) * &(&wd(i, sx, l, X) - &wd(i, l, sx, X)));
            sym_same(
                format!("nonlocal u_xx payload i={i} j={j} k={k} s={sx}"),
                &jet_coeff(&c, JetVar::new(sx, 2)),
                &want,
            )?;
        }
    }
    Ok(())
}
