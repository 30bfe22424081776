//! Weakly nonlocal matrix operators `B^{ij s} D^s + sum_a e_a w^i_a D^{-1} w^j_a`.

use crate::kernel::{
    binom, partial_jet, q, CoeffSym, DerivCtx, DiffPoly, JetVar, Point, TildeTable, Q,
};
use crate::{ConditionSet, Monomial};
use num_traits::Zero;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OperatorError {
    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: u8, n: u8 },
    #[error("tail vector has {got} entries, expected {n}")]
    TailLength { got: usize, n: u8 },
    #[error("tail has different left and right vectors; only e w D^-1 w tails are accepted")]
    AsymmetricTail,
    #[error("operator is not skew-adjoint ({0} residuals)")]
    NotSkewAdjoint(usize),
}

/// One summand `e w^i D^{-1} w^j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tail {
    pub e: Q,
    /// `w[i - 1] = w^i`.
    pub w: Vec<DiffPoly>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WnlOperator {
    pub n: u8,
    local: BTreeMap<(u8, u8, u32), DiffPoly>,
    tails: Vec<Tail>,
}

/// Result of linearizing an operator applied to a covector.
///
/// Component `i` is `local[i-1] + sum e w^i_a D^{-1} X` over `nonlocal = (a, e, X)`,
/// where `a` is the global tail index.
#[derive(Clone, Debug, Default)]
pub struct Linearization {
    pub local: Vec<DiffPoly>,
    pub nonlocal: Vec<(u16, Q, DiffPoly)>,
}

impl Linearization {
    /// `integral <l, psi^c>`, with `D^{-1}` moved onto `psi^c` so that
    /// `w^i psi^c_i D^{-1} X` becomes `-~psi^c X`.
    pub fn pair(&self, c: u8) -> DiffPoly {
        let mut out = DiffPoly::zero();
        for (i, l) in self.local.iter().enumerate() {
            out += l * &DiffPoly::psi(c, i as u8 + 1, 0);
        }
        for (a, e, x) in &self.nonlocal {
            out -= (&DiffPoly::tilde(c, *a) * x).scale(e);
        }
        out
    }
}

impl WnlOperator {
    pub fn zero(n: u8) -> Self {
        WnlOperator { n, local: BTreeMap::new(), tails: Vec::new() }
    }

    /// `D` acting on a single field.
    pub fn dx() -> Self {
        let mut p = WnlOperator::zero(1);
        p.add_local(1, 1, 1, DiffPoly::int(1)).unwrap();
        p
    }

    fn check(&self, i: u8) -> Result<(), OperatorError> {
        if i == 0 || i > self.n {
            Err(OperatorError::IndexOutOfRange { index: i, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Adds `c D^sigma` to entry `(i, j)`.
    pub fn add_local(&mut self, i: u8, j: u8, sigma: u32, c: DiffPoly) -> Result<(), OperatorError> {
        self.check(i)?;
        self.check(j)?;
        let e = self.local.entry((i, j, sigma)).or_default();
        *e += c;
        if e.is_zero() {
            self.local.remove(&(i, j, sigma));
        }
        Ok(())
    }

    pub fn add_tail(&mut self, e: Q, w: Vec<DiffPoly>) -> Result<(), OperatorError> {
        if w.len() != self.n as usize {
            return Err(OperatorError::TailLength { got: w.len(), n: self.n });
        }
        if !e.is_zero() && w.iter().any(|x| !x.is_zero()) {
            self.tails.push(Tail { e, w });
        }
        Ok(())
    }

    /// Accepts `e l^i D^{-1} r^j` only in the reduced form `l == r`.
    pub fn add_tail_pair(&mut self, e: Q, left: Vec<DiffPoly>, right: Vec<DiffPoly>) -> Result<(), OperatorError> {
        if left != right {
            return Err(OperatorError::AsymmetricTail);
        }
        self.add_tail(e, left)
    }

    pub fn local(&self) -> impl Iterator<Item = ((u8, u8, u32), &DiffPoly)> {
        self.local.iter().map(|(k, v)| (*k, v))
    }

    pub fn local_entry(&self, i: u8, j: u8, sigma: u32) -> Option<&DiffPoly> {
        self.local.get(&(i, j, sigma))
    }

    pub fn tails(&self) -> &[Tail] {
        &self.tails
    }

    pub fn order(&self) -> u32 {
        self.local.keys().map(|k| k.2).max().unwrap_or(0)
    }

    pub fn is_local(&self) -> bool {
        self.tails.is_empty()
    }

    /// The local part alone.
    pub fn local_part(&self) -> WnlOperator {
        WnlOperator { n: self.n, local: self.local.clone(), tails: Vec::new() }
    }

    /// The tails alone.
    pub fn tail_part(&self) -> WnlOperator {
        WnlOperator { n: self.n, local: BTreeMap::new(), tails: self.tails.clone() }
    }

    pub fn scaled(&self, c: &Q) -> WnlOperator {
        let mut out = WnlOperator::zero(self.n);
        for (k, v) in &self.local {
            out.add_local(k.0, k.1, k.2, v.scale(c)).unwrap();
        }
        for t in &self.tails {
            out.add_tail(&t.e * c, t.w.clone()).unwrap();
        }
        out
    }

    /// Sum of local parts; tails are concatenated.
    pub fn plus(&self, other: &WnlOperator) -> WnlOperator {
        let mut out = self.clone();
        for (k, v) in &other.local {
            out.add_local(k.0, k.1, k.2, v.clone()).unwrap();
        }
        out.tails.extend(other.tails.iter().cloned());
        out
    }

    /// Tail vectors in order, for the `D ~psi` rule.
    pub fn tilde_table(ops: &[&WnlOperator]) -> TildeTable {
        TildeTable::new(ops.iter().flat_map(|p| p.tails.iter().map(|t| t.w.clone())).collect())
    }

    /// `P*`: local part expanded by Leibniz, tails `(e, w) -> (-e, w)`.
    pub fn adjoint(&self) -> WnlOperator {
        let ctx = DerivCtx::new(self.n);
        let mut out = WnlOperator::zero(self.n);
        for (&(i, j, s), b) in &self.local {
            // (-1)^s D^s (b .) = (-1)^s sum_r C(s, r) (D^{s-r} b) D^r
            let sign = if s % 2 == 0 { q(1) } else { q(-1) };
            let mut db = b.clone();
            let mut derivs = vec![db.clone()];
            for _ in 0..s {
                db = ctx.d(&db);
                derivs.push(db.clone());
            }
            for r in 0..=s {
                let c = &sign * binom(s, r);
                out.add_local(j, i, r, derivs[(s - r) as usize].scale(&c)).unwrap();
            }
        }
        for t in &self.tails {
            out.tails.push(Tail { e: -t.e.clone(), w: t.w.clone() });
        }
        out
    }

    /// Local coefficients of `P + P*`; empty iff `P` is skew-adjoint.
    pub fn skew_residuals(&self) -> ConditionSet {
        let adj = self.adjoint();
        let mut sum = self.local.clone();
        for (k, v) in &adj.local {
            let e = sum.entry(*k).or_default();
            *e += v;
        }
        let mut out = ConditionSet::new();
        for ((i, j, s), v) in sum {
            out.push(format!("skew[{i},{j},{s}]"), v);
        }
        out
    }

    /// `P psi^arg`, with tails rendered as `e w^i ~psi^arg_(offset + a)`.
    pub fn apply(&self, arg: u8, offset: u16) -> Vec<DiffPoly> {
        let mut out = vec![DiffPoly::zero(); self.n as usize];
        for (&(i, j, s), b) in &self.local {
            out[i as usize - 1] += b * &DiffPoly::psi(arg, j, s);
        }
        for (a, t) in self.tails.iter().enumerate() {
            let tl = DiffPoly::tilde(arg, offset + a as u16).scale(&t.e);
            for (i, wi) in t.w.iter().enumerate() {
                out[i] += wi * &tl;
            }
        }
        out
    }

    /// `P chi` for a vector of expressions, paired with `psi^c`.
    ///
    /// Tails contribute `-e ~psi^c_a (w_a . chi)` after moving `D^{-1}` across.
    pub fn apply_paired(&self, chi: &[DiffPoly], c: u8, offset: u16, tt: &TildeTable) -> DiffPoly {
        let ctx = DerivCtx::with_tildes(self.n, tt);
        let mut out = DiffPoly::zero();
        let top = self.order();
        let mut jets: Vec<Vec<DiffPoly>> = chi.iter().map(|x| vec![x.clone()]).collect();
        for row in jets.iter_mut() {
            for s in 1..=top {
                let d = ctx.d(&row[s as usize - 1]);
                row.push(d);
            }
        }
        for (&(i, j, s), b) in &self.local {
            out += &(b * &jets[j as usize - 1][s as usize]) * &DiffPoly::psi(c, i, 0);
        }
        for (a, t) in self.tails.iter().enumerate() {
            let wchi = DiffPoly::sum(t.w.iter().zip(chi).map(|(w, x)| w * x));
            out -= (&DiffPoly::tilde(c, offset + a as u16) * &wchi).scale(&t.e);
        }
        out
    }

    /// `l_{P, psi^arg}(phi)`: the derivative of `P psi^arg` along `u -> u + eps phi`.
    pub fn linearize(&self, arg: u8, phi: &[DiffPoly], offset: u16, tt: &TildeTable) -> Linearization {
        let ctx = DerivCtx::with_tildes(self.n, tt);
        let n = self.n;
        let mut top = 0;
        for b in self.local.values() {
            top = top.max(b.max_jet_order(Point::X).unwrap_or(0));
        }
        for t in &self.tails {
            for w in &t.w {
                top = top.max(w.max_jet_order(Point::X).unwrap_or(0));
            }
        }
        // phi_jets[k][tau] = D^tau phi^k
        let mut phi_jets: Vec<Vec<DiffPoly>> = phi.iter().map(|x| vec![x.clone()]).collect();
        for row in phi_jets.iter_mut() {
            for t in 1..=top {
                let d = ctx.d(&row[t as usize - 1]);
                row.push(d);
            }
        }
        // Directional derivative of a coefficient along phi.
        let along = |c: &DiffPoly| -> DiffPoly {
            let mut acc = DiffPoly::zero();
            for k in 1..=n {
                for t in 0..=top {
                    let dc = partial_jet(c, JetVar::new(k, t));
                    if !dc.is_zero() {
                        acc += &dc * &phi_jets[k as usize - 1][t as usize];
                    }
                }
            }
            acc
        };
        let mut local = vec![DiffPoly::zero(); n as usize];
        for (&(i, j, s), b) in &self.local {
            let db = along(b);
            if !db.is_zero() {
                local[i as usize - 1] += &db * &DiffPoly::psi(arg, j, s);
            }
        }
        let mut nonlocal = Vec::new();
        for (a, t) in self.tails.iter().enumerate() {
            let ga = offset + a as u16;
            let tl = DiffPoly::tilde(arg, ga).scale(&t.e);
            let mut x = DiffPoly::zero();
            for (j, wj) in t.w.iter().enumerate() {
                let dw = along(wj);
                if !dw.is_zero() {
                    local[j] += &dw * &tl;
                    x += &dw * &DiffPoly::psi(arg, j as u8 + 1, 0);
                }
            }
            if !x.is_zero() {
                nonlocal.push((ga, t.e.clone(), x));
            }
        }
        Linearization { local, nonlocal }
    }

    /// `l*_{P, psi^lin}(psi^on)`, the formal adjoint of `phi -> l_{P, psi^lin}(phi)`
    /// applied to `psi^on`. Tails move `D^{-1}` onto `psi^on` as `-~psi^on`.
    pub fn linearization_adjoint(&self, lin: u8, on: u8, offset: u16, tt: &TildeTable) -> Vec<DiffPoly> {
        let ctx = DerivCtx::with_tildes(self.n, tt);
        let n = self.n;
        let mut top = 0;
        for b in self.local.values() {
            top = top.max(b.max_jet_order(Point::X).unwrap_or(0));
        }
        for t in &self.tails {
            for w in &t.w {
                top = top.max(w.max_jet_order(Point::X).unwrap_or(0));
            }
        }
        let mut out = Vec::with_capacity(n as usize);
        for k in 1..=n {
            // parts[tau] multiplies D^tau phi^k before integration by parts.
            let mut parts = vec![DiffPoly::zero(); top as usize + 1];
            for t in 0..=top {
                let v = JetVar::new(k, t);
                for (&(i, j, s), b) in &self.local {
                    let db = partial_jet(b, v);
                    if !db.is_zero() {
                        parts[t as usize] +=
                            &(&db * &DiffPoly::psi(lin, j, s)) * &DiffPoly::psi(on, i, 0);
                    }
                }
                for (a, tl) in self.tails.iter().enumerate() {
                    let ga = offset + a as u16;
                    for (i, wi) in tl.w.iter().enumerate() {
                        let dw = partial_jet(wi, v);
                        if dw.is_zero() {
                            continue;
                        }
                        let i = i as u8 + 1;
                        let x = &(&DiffPoly::tilde(lin, ga) * &DiffPoly::psi(on, i, 0))
                            - &(&DiffPoly::tilde(on, ga) * &DiffPoly::psi(lin, i, 0));
                        parts[t as usize] += (&dw * &x).scale(&tl.e);
                    }
                }
            }
            let mut acc = DiffPoly::zero();
            for p in parts.into_iter().rev() {
                acc = p - ctx.d(&acc);
            }
            out.push(acc);
        }
        out
    }

    /// Hydrodynamic-type operator `g^{ij} D + Gamma^{ij}_k u^k_x + w^i_k u^k_x D^{-1} w^j_h u^h_x`
    /// with opaque `g`, `Gamma`, `w`.
    pub fn hydrodynamic_symbolic(n: u8, with_tail: bool) -> WnlOperator {
        let mut p = WnlOperator::zero(n);
        for i in 1..=n {
            for j in 1..=n {
                p.add_local(i, j, 1, DiffPoly::sym(CoeffSym::new("g", &[i, j], &[]))).unwrap();
                let g0 = DiffPoly::sum((1..=n).map(|k| {
                    &DiffPoly::sym(CoeffSym::new("Gamma", &[i, j], &[k])) * &DiffPoly::jet(k, 1)
                }));
                p.add_local(i, j, 0, g0).unwrap();
            }
        }
        if with_tail {
            let w = (1..=n)
                .map(|i| {
                    DiffPoly::sum((1..=n).map(|k| {
                        &DiffPoly::sym(CoeffSym::new("w", &[i], &[k])) * &DiffPoly::jet(k, 1)
                    }))
                })
                .collect();
            p.add_tail(q(1), w).unwrap();
        }
        p
    }
}

/// Number of `psi` and `~psi` factors in `m`.
pub fn psi_degree(m: &Monomial) -> u32 {
    m.factors().iter().filter(|(a, _)| a.is_psi_like()).map(|(_, e)| e).sum()
}
