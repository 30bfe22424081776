//! JSON operator documents.
//!
//! ```json
//! { "n": 1, "mode": "explicit",
//!   "symbols": { "f": { "upper": 0, "lower": 0 } },
//!   "local": [ { "i": 1, "j": 1, "sigma": 1, "coeff": "2*u1" } ],
//!   "tails": [ { "e": "1", "w": ["u1_x"] } ] }
//! ```
//!
//! A hydrodynamic-type operator may instead be given by its `pbht` block,
//! whose `g`, `Gamma` and `w` are either symbol names (opaque entries
//! `g[i,j]`, `Gamma[i,j,k]`, `w[i,k]`) or nested arrays of expressions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use wnl_core::geometry::{PbhtData, PbhtTail};
use wnl_core::kernel::KernelError;
use wnl_core::{Atom, DiffPoly, FieldSpec, WnlOperator, Q};

use crate::expr::{parse_expr, ExprError, ExprErrorKind};
use crate::CliError;

/// `symbolic` assumes skew-adjointness and predeclares `g`, `Gamma`, `w`;
/// `explicit` verifies skew-adjointness and knows only declared symbols.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Symbolic,
    #[default]
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arity {
    #[serde(default)]
    pub upper: u8,
    #[serde(default)]
    pub lower: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalEntry {
    pub i: u32,
    pub j: u32,
    pub sigma: i64,
    pub coeff: String,
}

/// A rational written as a JSON integer or a string such as `"-3/2"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailEntry {
    pub e: Scalar,
    pub w: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matrix {
    Name(String),
    Rows(Vec<Vec<String>>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cube {
    Name(String),
    Rows(Vec<Vec<Vec<String>>>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbhtDoc {
    pub g: Matrix,
    #[serde(rename = "Gamma")]
    pub gamma: Cube,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Matrix>,
    /// Tail constant, `1` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDoc {
    pub n: u8,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub symbols: BTreeMap<String, Arity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub local: Vec<LocalEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tails: Vec<TailEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbht: Option<PbhtDoc>,
}

/// A validated document.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub mode: Mode,
    pub spec: FieldSpec,
    pub op: WnlOperator,
    /// Hydrodynamic data, from the `pbht` block or read off the operator.
    pub pbht: Option<PbhtData>,
}

pub fn load_str(text: &str) -> Result<Loaded, CliError> {
    let doc: OperatorDoc = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
        CliError::parse(format!("line {}, column {}", e.line(), e.column()), msg)
    })?;
    doc.load()
}

fn expr_error(field: &str, e: ExprError) -> CliError {
    match e.kind {
        ExprErrorKind::Kernel(KernelError::IndexOutOfRange { index, n }) => {
            CliError::IndexOutOfRange { field: format!("{field}, column {}", e.column), index, n }
        }
        ExprErrorKind::Kernel(KernelError::UnknownSymbol(name)) => {
            CliError::UnknownSymbol { field: format!("{field}, column {}", e.column), name }
        }
        ExprErrorKind::Kernel(k) => CliError::parse(format!("{field}, column {}", e.column), k.to_string()),
        ExprErrorKind::Syntax(m) => CliError::parse(format!("{field}, column {}", e.column), m),
    }
}

fn index(field: String, k: u32, n: u8) -> Result<u8, CliError> {
    match u8::try_from(k) {
        Ok(k) if (1..=n).contains(&k) => Ok(k),
        _ => Err(CliError::IndexOutOfRange { field, index: u8::try_from(k).unwrap_or(u8::MAX), n }),
    }
}

fn scalar(field: &str, s: &Scalar, spec: &FieldSpec) -> Result<Q, CliError> {
    match s {
        Scalar::Int(k) => Ok(Q::from_integer((*k).into())),
        Scalar::Text(t) => parse_expr(t, spec)
            .map_err(|e| expr_error(field, e))?
            .as_constant()
            .ok_or_else(|| CliError::parse(field, "expected a rational number")),
    }
}

fn declare(spec: FieldSpec, name: &str, upper: u8, lower: u8) -> Result<FieldSpec, CliError> {
    match spec.arity(name) {
        Some(a) if a != (upper, lower) => Err(CliError::parse(
            "pbht",
            format!("symbol `{name}` is declared with {} upper and {} lower indices", a.0, a.1),
        )),
        _ => Ok(spec.with_symbol(name, upper, lower)),
    }
}

impl OperatorDoc {
    fn spec(&self) -> Result<FieldSpec, CliError> {
        if self.n == 0 {
            return Err(CliError::parse("n", "at least one field is required"));
        }
        let mut spec = match self.mode {
            Mode::Symbolic => FieldSpec::hydrodynamic(self.n),
            Mode::Explicit => FieldSpec::new(self.n),
        };
        for (name, a) in &self.symbols {
            let ok = name.starts_with(|c: char| c.is_ascii_alphabetic())
                && name.chars().all(|c| c.is_ascii_alphanumeric())
                && !name.strip_prefix('u').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
            if !ok {
                return Err(CliError::parse(format!("symbols.{name}"), "names are alphanumeric, start with a letter and are not u<k>"));
            }
            spec = spec.with_symbol(name, a.upper, a.lower);
        }
        if let Some(p) = &self.pbht {
            if let Matrix::Name(g) = &p.g {
                spec = declare(spec, g, 2, 0)?;
            }
            if let Cube::Name(gamma) = &p.gamma {
                spec = declare(spec, gamma, 2, 1)?;
            }
            if let Some(Matrix::Name(w)) = &p.w {
                spec = declare(spec, w, 1, 1)?;
            }
        }
        Ok(spec)
    }

    pub fn load(&self) -> Result<Loaded, CliError> {
        let spec = self.spec()?;
        let n = self.n;
        let expr = |field: &str, s: &str| parse_expr(s, &spec).map_err(|e| expr_error(field, e));
        if let Some(p) = &self.pbht {
            if !self.local.is_empty() || !self.tails.is_empty() {
                return Err(CliError::parse("pbht", "a pbht block cannot be combined with local or tails"));
            }
            let data = self.pbht_data(p, &spec)?;
            return Ok(Loaded { mode: self.mode, op: data.to_operator(), pbht: Some(data), spec });
        }
        let mut op = WnlOperator::zero(n);
        for (k, l) in self.local.iter().enumerate() {
            let at = |f: &str| format!("local[{k}].{f}");
            let i = index(at("i"), l.i, n)?;
            let j = index(at("j"), l.j, n)?;
            let sigma = u32::try_from(l.sigma).map_err(|_| {
                CliError::parse(at("sigma"), format!("order {} is negative; nonlocal terms go in tails", l.sigma))
            })?;
            op.add_local(i, j, sigma, expr(&at("coeff"), &l.coeff)?)
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
        for (k, t) in self.tails.iter().enumerate() {
            let at = |f: &str| format!("tails[{k}].{f}");
            let e = scalar(&at("e"), &t.e, &spec)?;
            if t.w.len() != n as usize {
                return Err(CliError::parse(at("w"), format!("expected {n} entries, got {}", t.w.len())));
            }
            let w = t.w.iter().enumerate().map(|(i, s)| expr(&at(&format!("w[{i}]")), s)).collect::<Result<_, _>>()?;
            op.add_tail(e, w).map_err(|e| CliError::Internal(e.to_string()))?;
        }
        let pbht = PbhtData::from_operator(&op);
        Ok(Loaded { mode: self.mode, spec, op, pbht })
    }

    fn pbht_data(&self, p: &PbhtDoc, spec: &FieldSpec) -> Result<PbhtData, CliError> {
        let n = self.n;
        let expr = |field: String, s: &str| parse_expr(s, spec).map_err(|e| expr_error(&field, e));
        let sym = |name: &str, upper: &[u8], lower: &[u8]| DiffPoly::sym(spec.sym(name, upper, lower).unwrap());
        let dims = |field: &str, len: usize| {
            if len == n as usize {
                Ok(())
            } else {
                Err(CliError::parse(field, format!("expected {n} entries, got {len}")))
            }
        };
        let matrix = |field: &str, m: &Matrix, opaque: &dyn Fn(&str, u8, u8) -> DiffPoly| -> Result<Vec<Vec<DiffPoly>>, CliError> {
            match m {
                Matrix::Name(name) => Ok((1..=n).map(|i| (1..=n).map(|j| opaque(name, i, j)).collect()).collect()),
                Matrix::Rows(rows) => {
                    dims(field, rows.len())?;
                    rows.iter()
                        .enumerate()
                        .map(|(i, r)| {
                            dims(&format!("{field}[{i}]"), r.len())?;
                            r.iter().enumerate().map(|(j, s)| expr(format!("{field}[{i}][{j}]"), s)).collect()
                        })
                        .collect()
                }
            }
        };
        let g = matrix("pbht.g", &p.g, &|name, i, j| sym(name, &[i, j], &[]))?;
        let gamma = match &p.gamma {
            Cube::Name(name) => (1..=n)
                .map(|i| (1..=n).map(|j| (1..=n).map(|k| sym(name, &[i, j], &[k])).collect()).collect())
                .collect(),
            Cube::Rows(cube) => {
                dims("pbht.Gamma", cube.len())?;
                cube.iter()
                    .enumerate()
                    .map(|(i, m)| matrix(&format!("pbht.Gamma[{i}]"), &Matrix::Rows(m.clone()), &|_, _, _| DiffPoly::zero()))
                    .collect::<Result<_, _>>()?
            }
        };
        let mut tails = Vec::new();
        if let Some(w) = &p.w {
            let c = match &p.c {
                Some(c) => scalar("pbht.c", c, spec)?,
                None => Q::from_integer(1.into()),
            };
            tails.push(PbhtTail { c, w: matrix("pbht.w", w, &|name, i, k| sym(name, &[i], &[k]))? });
        } else if p.c.is_some() {
            return Err(CliError::parse("pbht.c", "a tail constant needs a w matrix"));
        }
        PbhtData::new(g, gamma, tails).map_err(|e| CliError::parse("pbht", e.to_string()))
    }
}

/// Symbols occurring in `p` with their arities.
fn collect_symbols(p: &DiffPoly, out: &mut BTreeMap<String, Arity>) -> Result<(), CliError> {
    for a in p.atoms() {
        if let Atom::Coeff(c) = a {
            let arity = Arity { upper: c.upper.len() as u8, lower: c.lower.len() as u8 };
            if let Some(prev) = out.insert(c.name.to_string(), arity) {
                if prev != arity {
                    return Err(CliError::Internal(format!("symbol `{}` occurs with two arities", c.name)));
                }
            }
        }
    }
    Ok(())
}

/// Document listing the local and tail parts of `p` term by term.
pub fn to_doc(p: &WnlOperator, mode: Mode) -> Result<OperatorDoc, CliError> {
    let mut symbols = BTreeMap::new();
    let mut local = Vec::new();
    for ((i, j, s), c) in p.local() {
        collect_symbols(c, &mut symbols)?;
        local.push(LocalEntry { i: i.into(), j: j.into(), sigma: s.into(), coeff: c.to_string() });
    }
    let mut tails = Vec::new();
    for t in p.tails() {
        for w in &t.w {
            collect_symbols(w, &mut symbols)?;
        }
        tails.push(TailEntry { e: Scalar::Text(t.e.to_string()), w: t.w.iter().map(|w| w.to_string()).collect() });
    }
    Ok(OperatorDoc { n: p.n, mode, symbols, local, tails, pbht: None })
}
