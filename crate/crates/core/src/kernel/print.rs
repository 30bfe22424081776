use super::{Atom, CoeffSym, DiffPoly, JetVar, Monomial, Point};
use num_traits::{One, Signed};
use std::fmt;

fn point_suffix(f: &mut fmt::Formatter<'_>, p: Point) -> fmt::Result {
    match p {
        Point::X => Ok(()),
        other => write!(f, "{{{}}}", other.name()),
    }
}

fn order_suffix(f: &mut fmt::Formatter<'_>, order: u32) -> fmt::Result {
    match order {
        0 => Ok(()),
        1 => write!(f, "_x"),
        2 => write!(f, "_xx"),
        k => write!(f, "@{k}"),
    }
}

impl fmt::Display for CoeffSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.upper.is_empty() || !self.lower.is_empty() {
            let idx: Vec<String> =
                self.upper.iter().chain(&self.lower).map(|i| i.to_string()).collect();
            write!(f, "[{}]", idx.join(","))?;
        }
        for d in &self.deriv {
            write!(f, ",{d}")?;
        }
        point_suffix(f, self.point)
    }
}

impl fmt::Display for JetVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.field)?;
        order_suffix(f, self.order)?;
        point_suffix(f, self.point)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Coeff(c) => c.fmt(f),
            Atom::Jet(j) => j.fmt(f),
            Atom::Psi { arg, idx, order } => {
                write!(f, "psi{arg}[{idx}]")?;
                order_suffix(f, *order)
            }
            Atom::Tilde { arg, tail } => write!(f, "~psi{arg}[{tail}]"),
        }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return write!(f, "1");
        }
        for (k, (a, e)) in self.factors().iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            if *e == 1 {
                write!(f, "{a}")?;
            } else {
                write!(f, "{a}^{e}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for DiffPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms().enumerate() {
            let mag = c.abs();
            if k == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
        }
        Ok(())
    }
}
