//! CPLEX-style LP text export.

use std::fmt::Write as _;
use std::path::Path;

use super::model::{MilpModel, Sense, VarKind};
use super::MilpError;

/// Terms per output line; keeps lines well under the 255-character limit
/// some readers enforce.
const TERMS_PER_LINE: usize = 6;

fn num(v: f64) -> String {
    // Debug formatting round-trips and switches to exponent form for very
    // large or small magnitudes, which LP readers accept.
    format!("{v:?}")
}

fn write_terms(out: &mut String, terms: &[(String, f64)]) {
    for (k, (name, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if *c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {name}", num(c.abs()));
    }
}

/// Renders the model as LP text. Binary variables whose bounds were
/// tightened away from `[0, 1]` are written as general integers with
/// explicit bounds.
pub fn to_lp_string(model: &MilpModel) -> String {
    let vars = model.vars();
    let name = |id: super::model::VarId| vars[id.0].name.clone();
    // A linear expression needs at least one variable.
    let placeholder = vars.first().map(|v| v.name.clone());
    let mut out = String::from("\\ aerocourier planning model\nMinimize\n obj:");
    let obj: Vec<(String, f64)> = model.objective().iter().map(|(v, c)| (name(*v), *c)).collect();
    if obj.is_empty() {
        if let Some(p) = &placeholder {
            let _ = write!(out, " 0 {p}");
        }
    } else {
        write_terms(&mut out, &obj);
    }
    out.push_str("\nSubject To\n");
    for r in model.constraints() {
        let _ = write!(out, " {}:", r.name);
        let terms: Vec<(String, f64)> = r.terms.iter().map(|(v, c)| (name(*v), *c)).collect();
        if terms.is_empty() {
            let _ = write!(out, " 0 {}", placeholder.as_deref().unwrap_or("x"));
        } else {
            write_terms(&mut out, &terms);
        }
        let op = match r.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", num(r.rhs));
    }
    out.push_str("Bounds\n");
    for v in vars {
        let (lo, hi) = (v.lower, v.upper);
        let _ = match (lo.is_finite(), hi.is_finite()) {
            (false, false) => writeln!(out, " {} free", v.name),
            (true, false) => writeln!(out, " {} >= {}", v.name, num(lo)),
            (false, true) => writeln!(out, " -inf <= {} <= {}", v.name, num(hi)),
            (true, true) => writeln!(out, " {} <= {} <= {}", num(lo), v.name, num(hi)),
        };
    }
    let is_std_binary = |v: &super::model::Variable| v.lower == 0.0 && v.upper == 1.0;
    let binaries: Vec<&str> = vars
        .iter()
        .filter(|v| v.kind == VarKind::Binary && is_std_binary(v))
        .map(|v| v.name.as_str())
        .collect();
    let generals: Vec<&str> = vars
        .iter()
        .filter(|v| v.kind == VarKind::Binary && !is_std_binary(v))
        .map(|v| v.name.as_str())
        .collect();
    for (header, list) in [("Binaries", binaries), ("Generals", generals)] {
        if !list.is_empty() {
            let _ = writeln!(out, "{header}");
            for chunk in list.chunks(TERMS_PER_LINE) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
    }
    out.push_str("End\n");
    out
}

pub fn export_model(model: &MilpModel, path: &Path) -> Result<(), MilpError> {
    std::fs::write(path, to_lp_string(model)).map_err(|e| MilpError::Io(format!("{}: {e}", path.display())))
}
