//! Commands and their reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use wnl_core::geometry::{compare_backends, reduce_modulo_with, CompareOptions, ReduceOptions};
use wnl_core::schouten::SkewCheck;
use wnl_core::{dist, pva, schouten, ConditionSet};

use crate::doc::{to_doc, Loaded, Mode, OperatorDoc};
use crate::CliError;

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Dist,
    /// The Schouten bracket of the operator with itself.
    Op,
    Pva,
    All,
}

impl Backend {
    fn selected(self) -> Vec<Backend> {
        match self {
            Backend::All => vec![Backend::Dist, Backend::Op, Backend::Pva],
            b => vec![b],
        }
    }

    /// Value of the `--backend` flag.
    pub fn name(self) -> &'static str {
        match self {
            Backend::Dist => "dist",
            Backend::Op => "op",
            Backend::Pva => "pva",
            Backend::All => "all",
        }
    }

    /// Tag of residuals and timings, shared with `compare`.
    pub fn tag(self) -> &'static str {
        match self {
            Backend::Op => "schouten",
            b => b.name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Skew,
    Jacobi { backend: Backend },
    /// `verify`: check that every backend residual reduces modulo the conditions.
    Conditions { verify: bool },
    Compare { pairwise: bool },
    Adjoint,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Skew => "skew",
            Command::Jacobi { .. } => "jacobi",
            Command::Conditions { .. } => "conditions",
            Command::Compare { .. } => "compare",
            Command::Adjoint => "adjoint",
        }
    }
}

/// `INCONSISTENT` marks disagreeing backends or an unexplained residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconsistent,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconsistent => 3,
        }
    }

    fn of(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResidualOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    pub pattern: String,
    pub expr: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub version: u32,
    pub command: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    pub residuals: Vec<ResidualOut>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorDoc>,
}

impl Report {
    fn new(command: &Command) -> Self {
        Report {
            version: REPORT_VERSION,
            command: command.name().into(),
            verdict: Verdict::Pass,
            backend: None,
            residuals: Vec::new(),
            timings: BTreeMap::new(),
            notes: Vec::new(),
            operator: None,
        }
    }

    fn add(&mut self, backend: Option<&str>, set: &ConditionSet) {
        self.residuals.extend(set.iter().map(|r| ResidualOut {
            backend: backend.map(str::to_string),
            pattern: r.label.clone(),
            expr: r.expr.to_string(),
        }));
    }

    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code()
    }

    /// Deterministic human-readable form (no timings).
    pub fn text(&self) -> String {
        if let Some(op) = &self.operator {
            return serde_json::to_string_pretty(op).expect("documents serialize") + "\n";
        }
        let mut s = String::new();
        let head = match &self.backend {
            Some(b) => format!("{} [{b}]", self.command),
            None => self.command.clone(),
        };
        let verdict = serde_json::to_value(self.verdict).expect("verdicts serialize");
        writeln!(s, "{head}: {}", verdict.as_str().unwrap_or_default()).unwrap();
        for n in &self.notes {
            writeln!(s, "  {n}").unwrap();
        }
        for r in &self.residuals {
            match &r.backend {
                Some(b) => writeln!(s, "  [{b}] {}: {}", r.pattern, r.expr).unwrap(),
                None => writeln!(s, "  {}: {}", r.pattern, r.expr).unwrap(),
            }
        }
        s
    }

    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, key: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    timings.insert(key.to_string(), t.elapsed().as_secs_f64());
    out
}

fn backend_residuals(b: Backend, l: &Loaded, check: SkewCheck) -> Result<ConditionSet, CliError> {
    let internal = |e: String| CliError::Internal(format!("{} backend: {e}", b.tag()));
    match b {
        Backend::Dist => Ok(dist::dist_residuals(&dist::jacobi_reduced(&l.op))),
        Backend::Op => schouten::jacobi_residuals(&l.op, check).map_err(|e| internal(e.to_string())),
        Backend::Pva => pva::jacobi_residuals(&l.op, check).map_err(|e| internal(e.to_string())),
        Backend::All => unreachable!("expanded by the caller"),
    }
}

/// Skew conditions, and whether the Jacobi check may proceed (and how).
fn skew_gate(l: &Loaded, report: &mut Report) -> Option<SkewCheck> {
    let skew = l.op.skew_residuals();
    if skew.is_empty() {
        return Some(SkewCheck::Enforce);
    }
    match l.mode {
        Mode::Symbolic => {
            report.notes.push(format!("skew-adjointness assumed ({} conditions)", skew.len()));
            Some(SkewCheck::Assume)
        }
        Mode::Explicit => {
            report.notes.push("operator is not skew-adjoint; the Jacobi identity was not checked".into());
            report.add(Some("skew"), &skew);
            report.verdict = Verdict::Fail;
            None
        }
    }
}

pub fn run(cmd: &Command, l: &Loaded) -> Result<Report, CliError> {
    let mut report = Report::new(cmd);
    let start = Instant::now();
    match cmd {
        Command::Skew => {
            let skew = timed(&mut report.timings, "skew", || l.op.skew_residuals());
            report.verdict = Verdict::of(skew.is_empty());
            report.add(None, &skew);
        }
        Command::Jacobi { backend } => {
            report.backend = Some(backend.name().into());
            if let Some(check) = skew_gate(l, &mut report) {
                let mut verdicts = Vec::new();
                for b in backend.selected() {
                    let res = timed(&mut report.timings, b.tag(), || backend_residuals(b, l, check))?;
                    verdicts.push(res.is_empty());
                    if *backend == Backend::All {
                        report.notes.push(format!("{}: {} residuals", b.tag(), res.len()));
                    }
                    report.add(Some(b.tag()), &res);
                }
                report.verdict = if verdicts.windows(2).any(|w| w[0] != w[1]) {
                    report.notes.push("backends disagree".into());
                    Verdict::Inconsistent
                } else {
                    Verdict::of(verdicts[0])
                };
            }
        }
        Command::Conditions { verify } => conditions(l, *verify, &mut report)?,
        Command::Compare { pairwise } => compare(l, *pairwise, &mut report)?,
        Command::Adjoint => {
            let adj = timed(&mut report.timings, "adjoint", || l.op.adjoint());
            report.operator = Some(to_doc(&adj, l.mode)?);
        }
    }
    report.timings.insert("total".into(), start.elapsed().as_secs_f64());
    Ok(report)
}

fn conditions(l: &Loaded, verify: bool, report: &mut Report) -> Result<(), CliError> {
    let data = l
        .pbht
        .as_ref()
        .ok_or_else(|| CliError::Usage("conditions: the operator is not of hydrodynamic type".into()))?;
    let cond = timed(&mut report.timings, "geometry", || data.raised_conditions());
    report.verdict = Verdict::of(cond.is_empty());
    report.add(None, &cond);
    if !verify {
        return Ok(());
    }
    let skew = l.op.skew_residuals();
    let check = match l.mode {
        Mode::Symbolic => SkewCheck::Assume,
        Mode::Explicit if skew.is_empty() => SkewCheck::Enforce,
        Mode::Explicit => {
            report.notes.push("operator is not skew-adjoint; backend residuals were not checked".into());
            return Ok(());
        }
    };
    let det = data.metric_det();
    let opts = ReduceOptions { multipliers: vec![det.pow(0), det.clone(), det.pow(2)], ..ReduceOptions::default() };
    for b in Backend::All.selected() {
        let res = timed(&mut report.timings, b.tag(), || backend_residuals(b, l, check))?;
        let left = timed(&mut report.timings, &format!("{}-reduce", b.tag()), || reduce_modulo_with(&res, &cond, &opts))
            .map_err(|e| CliError::Internal(e.to_string()))?;
        report.notes.push(format!("{}: {} residuals, {} not implied by the conditions", b.tag(), res.len(), left.len()));
        if !left.is_empty() {
            report.verdict = Verdict::Inconsistent;
            report.add(Some(b.tag()), &left);
        }
    }
    Ok(())
}

fn compare(l: &Loaded, pairwise: bool, report: &mut Report) -> Result<(), CliError> {
    let opts = CompareOptions { pairwise, ..CompareOptions::default() };
    let r = timed(&mut report.timings, "compare", || compare_backends(&l.op, &opts))
        .map_err(|e| CliError::Internal(e.to_string()))?;
    if !r.skew.is_empty() {
        let how = if r.assumed_skew { "assumed" } else { "violated" };
        report.notes.push(format!("skew-adjointness {how} ({} conditions)", r.skew.len()));
        if !r.assumed_skew {
            report.add(Some("skew"), &r.skew);
        }
    }
    if let Some(g) = &r.geometry {
        report.notes.push(format!("geometry: {} conditions", g.len()));
        report.add(Some("geometry"), g);
    }
    for b in &r.backends {
        let extra = match &b.unexplained {
            Some(u) => format!(", {} not implied by the geometry", u.len()),
            None => String::new(),
        };
        report.notes.push(format!("{}: {} residuals{extra}", b.name, b.residuals.len()));
        report.add(Some(b.name), &b.residuals);
    }
    for (a, b, k) in &r.pairwise {
        report.notes.push(format!("{a} modulo {b}: {k} left"));
    }
    report.verdict = if !r.skew.is_empty() && !r.assumed_skew {
        Verdict::Fail
    } else if !r.verdicts_agree() || !r.geometry_explains() {
        Verdict::Inconsistent
    } else {
        Verdict::of(r.verdict())
    };
    Ok(())
}
