//! Line-oriented text format for [`ConicProgram`]s.
//!
//! ```text
//! sdp 1
//! var sym 2 P1
//! var scalar gamma
//! objective minimize 0.0
//! oterm 1 0 1.0
//! constraint matrix psd 2 P1 > 0
//! const -1e-6 0.0 0.0 -1e-6
//! term 0 0 1.0 0.0 0.0 0.0
//! end
//! ```
//!
//! Numbers are written in Rust's shortest round-trip form, so `parse(dump(p)) == p`
//! holds exactly. Matrices are row-major.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    ConicProgram, Constraint, MatExpr, MatSense, Objective, ScalarExpr, ScalarSense, SdpError,
    VarShape,
};
use crate::matops::Matrix;

const HEADER: &str = "sdp 1";

pub fn dump(program: &ConicProgram) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for decl in program.vars() {
        match decl.shape {
            VarShape::Scalar => writeln!(out, "var scalar {}", decl.name),
            VarShape::Symmetric(d) => writeln!(out, "var sym {d} {}", decl.name),
        }
        .unwrap();
    }
    let sense = match program.sense() {
        Objective::Minimize => "minimize",
        Objective::Maximize => "maximize",
    };
    writeln!(out, "objective {sense} {:?}", program.objective().constant_part()).unwrap();
    for ((var, coord), a) in program.objective().terms() {
        writeln!(out, "oterm {var} {coord} {a:?}").unwrap();
    }
    for c in program.constraints() {
        match c {
            Constraint::Matrix { label, expr, sense } => {
                let s = match sense {
                    MatSense::Psd => "psd",
                    MatSense::Nsd => "nsd",
                };
                writeln!(out, "constraint matrix {s} {} {label}", expr.dim()).unwrap();
                out.push_str("const");
                push_matrix(&mut out, expr.constant_part());
                out.push('\n');
                for ((var, coord), m) in expr.terms() {
                    write!(out, "term {var} {coord}").unwrap();
                    push_matrix(&mut out, m);
                    out.push('\n');
                }
            }
            Constraint::Scalar { label, expr, sense } => {
                let s = match sense {
                    ScalarSense::Geq => "geq",
                    ScalarSense::Leq => "leq",
                };
                writeln!(out, "constraint scalar {s} 1 {label}").unwrap();
                writeln!(out, "const {:?}", expr.constant_part()).unwrap();
                for ((var, coord), a) in expr.terms() {
                    writeln!(out, "term {var} {coord} {a:?}").unwrap();
                }
            }
        }
    }
    out.push_str("end\n");
    out
}

fn push_matrix(out: &mut String, m: &Matrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            write!(out, " {:?}", m[(i, j)]).unwrap();
        }
    }
}

enum Pending {
    Matrix {
        label: String,
        sense: MatSense,
        dim: usize,
        constant: Option<Matrix>,
        coeffs: BTreeMap<(usize, usize), Matrix>,
    },
    Scalar {
        label: String,
        sense: ScalarSense,
        constant: Option<f64>,
        coeffs: BTreeMap<(usize, usize), f64>,
    },
}

impl Pending {
    fn finish(self, line: usize) -> Result<Constraint, SdpError> {
        let missing = || SdpError::Parse {
            line,
            msg: "constraint has no `const` line".into(),
        };
        Ok(match self {
            Pending::Matrix {
                label,
                sense,
                dim,
                constant,
                coeffs,
            } => Constraint::Matrix {
                label,
                sense,
                expr: MatExpr::from_parts(dim, constant.ok_or_else(missing)?, coeffs),
            },
            Pending::Scalar {
                label,
                sense,
                constant,
                coeffs,
            } => Constraint::Scalar {
                label,
                sense,
                expr: ScalarExpr::from_parts(constant.ok_or_else(missing)?, coeffs),
            },
        })
    }
}

type ObjectiveLine = (Objective, f64, BTreeMap<(usize, usize), f64>);

pub fn parse(text: &str) -> Result<ConicProgram, SdpError> {
    let err = |line: usize, msg: String| SdpError::Parse { line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        _ => return Err(err(1, format!("expected header `{HEADER}`"))),
    }

    let mut program = ConicProgram::new();
    let mut objective: Option<ObjectiveLine> = None;
    let mut pending: Option<Pending> = None;
    let mut ended = false;

    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(err(no, "content after `end`".into()));
        }
        let (kw, rest) = line.split_once(' ').unwrap_or((line, ""));
        match kw {
            "var" => {
                let mut parts = rest.splitn(2, ' ');
                match parts.next() {
                    Some("scalar") => {
                        program.scalar_var(parts.next().unwrap_or(""));
                    }
                    Some("sym") => {
                        let rest = parts.next().unwrap_or("");
                        let (d, name) = rest.split_once(' ').unwrap_or((rest, ""));
                        let d: usize = parse_num(d, no)?;
                        if d == 0 {
                            return Err(err(no, "zero-dimensional variable".into()));
                        }
                        program.sym_var(name, d);
                    }
                    other => return Err(err(no, format!("unknown variable kind {other:?}"))),
                }
            }
            "objective" => {
                let (s, c) = rest.split_once(' ').ok_or_else(|| err(no, "truncated objective".into()))?;
                let sense = match s {
                    "minimize" => Objective::Minimize,
                    "maximize" => Objective::Maximize,
                    _ => return Err(err(no, format!("unknown objective sense `{s}`"))),
                };
                objective = Some((sense, parse_num(c, no)?, BTreeMap::new()));
            }
            "oterm" => {
                let obj = objective
                    .as_mut()
                    .ok_or_else(|| err(no, "`oterm` before `objective`".into()))?;
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(err(no, "`oterm` needs var, coord, value".into()));
                }
                obj.2.insert(
                    (parse_num(f[0], no)?, parse_num(f[1], no)?),
                    parse_num(f[2], no)?,
                );
            }
            "constraint" => {
                if let Some(p) = pending.take() {
                    program.add(p.finish(no)?);
                }
                let mut parts = rest.splitn(4, ' ');
                let kind = parts.next().unwrap_or("");
                let sense = parts.next().unwrap_or("");
                let dim: usize = parse_num(parts.next().unwrap_or(""), no)?;
                let label = parts.next().unwrap_or("").to_string();
                pending = Some(match (kind, sense) {
                    ("matrix", s @ ("psd" | "nsd")) => Pending::Matrix {
                        label,
                        sense: if s == "psd" { MatSense::Psd } else { MatSense::Nsd },
                        dim,
                        constant: None,
                        coeffs: BTreeMap::new(),
                    },
                    ("scalar", s @ ("geq" | "leq")) => Pending::Scalar {
                        label,
                        sense: if s == "geq" { ScalarSense::Geq } else { ScalarSense::Leq },
                        constant: None,
                        coeffs: BTreeMap::new(),
                    },
                    _ => return Err(err(no, format!("unknown constraint kind `{kind} {sense}`"))),
                });
            }
            "const" | "term" => {
                let p = pending
                    .as_mut()
                    .ok_or_else(|| err(no, format!("`{kw}` outside a constraint")))?;
                let f: Vec<&str> = rest.split_whitespace().collect();
                let (key, vals) = if kw == "term" {
                    if f.len() < 2 {
                        return Err(err(no, "`term` needs var and coord".into()));
                    }
                    (Some((parse_num(f[0], no)?, parse_num(f[1], no)?)), &f[2..])
                } else {
                    (None, &f[..])
                };
                let vals: Vec<f64> = vals.iter().map(|v| parse_num(v, no)).collect::<Result<_, _>>()?;
                match p {
                    Pending::Matrix {
                        dim,
                        constant,
                        coeffs,
                        ..
                    } => {
                        if vals.len() != *dim * *dim {
                            return Err(err(
                                no,
                                format!("expected {} entries, found {}", *dim * *dim, vals.len()),
                            ));
                        }
                        let m = Matrix::from_row_slice(*dim, *dim, &vals);
                        match key {
                            Some(k) => {
                                coeffs.insert(k, m);
                            }
                            None => *constant = Some(m),
                        }
                    }
                    Pending::Scalar {
                        constant, coeffs, ..
                    } => {
                        if vals.len() != 1 {
                            return Err(err(no, "scalar constraints take one value".into()));
                        }
                        match key {
                            Some(k) => {
                                coeffs.insert(k, vals[0]);
                            }
                            None => *constant = Some(vals[0]),
                        }
                    }
                }
            }
            "end" => {
                if let Some(p) = pending.take() {
                    program.add(p.finish(no)?);
                }
                ended = true;
            }
            _ => return Err(err(no, format!("unknown keyword `{kw}`"))),
        }
    }
    if !ended {
        return Err(err(text.lines().count(), "missing `end`".into()));
    }
    let (sense, constant, coeffs) =
        objective.ok_or_else(|| err(0, "missing `objective` line".into()))?;
    let obj = ScalarExpr::from_parts(constant, coeffs);
    match sense {
        Objective::Minimize => program.minimize(obj),
        Objective::Maximize => program.maximize(obj),
    }
    program.validate()?;
    Ok(program)
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, SdpError> {
    s.parse().map_err(|_| SdpError::Parse {
        line,
        msg: format!("cannot parse `{s}`"),
    })
}
