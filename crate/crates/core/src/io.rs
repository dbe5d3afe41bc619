//! File formats: program definition files, trajectory CSV, event logs,
//! saddle-set and constants reports.
//!
//! Floats are written with Rust's shortest-roundtrip formatting and parsed
//! with correctly-rounded `f64::from_str`, so write→parse round-trips are
//! bit-exact and identical inputs produce byte-identical outputs.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::lyapunov::{IssGains, LyapConstants};
use crate::problem::BuiltinObjective;
use crate::problem::{AffineIneq, ConstrainedProgram, Curvature, ObjectiveSpec};
use crate::saddle::SaddleSet;
use crate::selftrig::TriggerRun;

// ---------------------------------------------------------------------------
// program definition files
// ---------------------------------------------------------------------------

// Line-oriented key/value format with matrix blocks:
//   n = 2
//   objective = quadratic | builtin:<name>
//   Q:            (block: one row of numbers per line)
//   2 0
//   0 2
//   c = 0 -4
//   d = 4
//   g_rows:       (per row: n coefficients then the offset)
//   -1 0 -1
//   A:
//   1 -1
//   b = 0
//   m_lb = 2      (optional, with M_ub and L_hess)
// Comments start with '#'. Keys may appear in any order.

#[derive(Default)]
struct RawProgram {
    n: Option<usize>,
    p: Option<usize>,
    m: Option<usize>,
    objective: Option<String>,
    q: Option<Vec<Vec<f64>>>,
    c: Option<Vec<f64>>,
    d: Option<f64>,
    g_rows: Option<Vec<Vec<f64>>>,
    a: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
    m_lb: Option<f64>,
    m_ub: Option<f64>,
    l_hess: Option<f64>,
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    f64::from_str(tok).map_err(|_| Error::Parse {
        line,
        msg: format!("`{tok}` is not a number"),
    })
}

fn parse_row(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|tok| parse_f64(tok, line))
        .collect()
}

/// Parse a program definition from text.
pub fn parse_program(text: &str) -> Result<ConstrainedProgram> {
    let mut raw = RawProgram::default();
    let mut block: Option<(&'static str, Vec<Vec<f64>>)> = None;

    let flush_block = |raw: &mut RawProgram, blk: Option<(&'static str, Vec<Vec<f64>>)>| {
        if let Some((key, rows)) = blk {
            match key {
                "Q" => raw.q = Some(rows),
                "g_rows" => raw.g_rows = Some(rows),
                "A" => raw.a = Some(rows),
                _ => unreachable!(),
            }
        }
    };

    for (idx, line_raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match line_raw.find('#') {
            Some(pos) => &line_raw[..pos],
            None => line_raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(key) = trimmed.strip_suffix(':') {
            let key = match key.trim() {
                "Q" => "Q",
                "g_rows" => "g_rows",
                "A" => "A",
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("unknown matrix block `{other}`"),
                    })
                }
            };
            flush_block(&mut raw, block.take());
            block = Some((key, Vec::new()));
            continue;
        }
        if let Some((key, value)) = trimmed.split_once('=') {
            flush_block(&mut raw, block.take());
            let key = key.trim();
            let value = value.trim();
            match key {
                "n" => {
                    raw.n = Some(value.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("`{value}` is not a dimension"),
                    })?)
                }
                "p" => {
                    raw.p = Some(value.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("`{value}` is not a dimension"),
                    })?)
                }
                "m" => {
                    raw.m = Some(value.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("`{value}` is not a dimension"),
                    })?)
                }
                "objective" => raw.objective = Some(value.to_string()),
                "c" => raw.c = Some(parse_row(value, lineno)?),
                "d" => raw.d = Some(parse_f64(value, lineno)?),
                "b" => raw.b = Some(parse_row(value, lineno)?),
                "m_lb" => raw.m_lb = Some(parse_f64(value, lineno)?),
                "M_ub" => raw.m_ub = Some(parse_f64(value, lineno)?),
                "L_hess" => raw.l_hess = Some(parse_f64(value, lineno)?),
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
            continue;
        }
        if let Some((_, rows)) = block.as_mut() {
            rows.push(parse_row(trimmed, lineno)?);
            continue;
        }
        return Err(Error::Parse {
            line: lineno,
            msg: format!("cannot interpret `{trimmed}`"),
        });
    }
    flush_block(&mut raw, block.take());

    build_program(raw)
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse {
            line: 0,
            msg: format!("{what} block has ragged rows"),
        });
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn build_program(raw: RawProgram) -> Result<ConstrainedProgram> {
    let n = raw.n.ok_or(Error::Parse {
        line: 0,
        msg: "missing `n`".into(),
    })?;
    let objective = match raw.objective.as_deref() {
        None | Some("quadratic") => {
            let q = rows_to_matrix(raw.q.as_deref().unwrap_or(&[]), "Q")?;
            let q = if q.nrows() == 0 {
                DMatrix::zeros(n, n)
            } else {
                q
            };
            let c = raw
                .c
                .map(|v| DVector::from_column_slice(&v))
                .unwrap_or_else(|| DVector::zeros(n));
            ObjectiveSpec::quadratic(q, c, raw.d.unwrap_or(0.0))?
        }
        Some(spec) => {
            let name = spec.strip_prefix("builtin:").ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("objective must be `quadratic` or `builtin:<name>`, got `{spec}`"),
            })?;
            let builtin = BuiltinObjective::from_name(name).ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unknown builtin objective `{name}`"),
            })?;
            ObjectiveSpec::Builtin(builtin)
        }
    };
    let g_rows = raw.g_rows.unwrap_or_default();
    let ineq: Vec<AffineIneq> = g_rows
        .iter()
        .map(|row| {
            if row.len() != n + 1 {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("g_rows entries need {n} coefficients plus an offset"),
                });
            }
            Ok(AffineIneq {
                w: DVector::from_column_slice(&row[..n]),
                offset: row[n],
            })
        })
        .collect::<Result<_>>()?;
    if let Some(p) = raw.p {
        if p != ineq.len() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("declared p = {p} but g_rows has {} rows", ineq.len()),
            });
        }
    }
    let a = rows_to_matrix(raw.a.as_deref().unwrap_or(&[]), "A")?;
    let a = if a.nrows() == 0 {
        DMatrix::zeros(0, n)
    } else {
        a
    };
    if let Some(m) = raw.m {
        if m != a.nrows() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("declared m = {m} but A has {} rows", a.nrows()),
            });
        }
    }
    let b = raw
        .b
        .map(|v| DVector::from_column_slice(&v))
        .unwrap_or_else(|| DVector::zeros(a.nrows()));
    let curvature = match (raw.m_lb, raw.m_ub) {
        (Some(m_lb), Some(m_ub)) => Some(Curvature::new(m_lb, m_ub, raw.l_hess.unwrap_or(0.0))?),
        (None, None) => None,
        _ => {
            return Err(Error::Parse {
                line: 0,
                msg: "m_lb and M_ub must be declared together".into(),
            })
        }
    };
    ConstrainedProgram::new(n, objective, ineq, a, b, curvature)
}

fn push_vector(out: &mut String, key: &str, v: &DVector<f64>) {
    let _ = write!(out, "{key} =");
    for x in v.iter() {
        let _ = write!(out, " {x}");
    }
    out.push('\n');
}

fn push_matrix(out: &mut String, key: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{key}:");
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Serialize a program to the definition format; `parse_program` of the
/// output reconstructs an equal structure.
pub fn write_program(prog: &ConstrainedProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n = {}", prog.n());
    let _ = writeln!(out, "p = {}", prog.p());
    let _ = writeln!(out, "m = {}", prog.m());
    match prog.objective() {
        ObjectiveSpec::Quadratic { q, c, d } => {
            let _ = writeln!(out, "objective = quadratic");
            push_matrix(&mut out, "Q", q);
            push_vector(&mut out, "c", c);
            let _ = writeln!(out, "d = {d}");
        }
        ObjectiveSpec::Builtin(b) => {
            let _ = writeln!(out, "objective = builtin:{}", b.name());
        }
    }
    if prog.p() > 0 {
        let _ = writeln!(out, "g_rows:");
        for row in prog.ineq() {
            let mut parts: Vec<String> = row.w.iter().map(|x| format!("{x}")).collect();
            parts.push(format!("{}", row.offset));
            let _ = writeln!(out, "{}", parts.join(" "));
        }
    }
    if prog.m() > 0 {
        push_matrix(&mut out, "A", prog.a());
        push_vector(&mut out, "b", prog.b());
    }
    if let Some(cur) = prog.curvature() {
        let _ = writeln!(out, "m_lb = {}", cur.m_lb);
        let _ = writeln!(out, "M_ub = {}", cur.m_ub);
        let _ = writeln!(out, "L_hess = {}", cur.l_hess);
    }
    out
}

// ---------------------------------------------------------------------------
// trajectory and event exports
// ---------------------------------------------------------------------------

/// CSV with header `t,x_1..x_n,y_1..y_p,z_1..z_m,<trace names>`.
pub fn trajectory_csv(prog: &ConstrainedProgram, traj: &Trajectory) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=prog.n()).map(|i| format!("x_{i}")));
    header.extend((1..=prog.p()).map(|i| format!("y_{i}")));
    header.extend((1..=prog.m()).map(|i| format!("z_{i}")));
    header.extend(traj.traces.iter().map(|tr| tr.kind.name().to_string()));
    out.push_str(&header.join(","));
    out.push('\n');
    for (k, t) in traj.times.iter().enumerate() {
        let s = &traj.states[k];
        let mut cells: Vec<String> = vec![format!("{t}")];
        cells.extend(s.x().iter().map(|v| format!("{v}")));
        cells.extend(s.y().iter().map(|v| format!("{v}")));
        cells.extend(s.z().iter().map(|v| format!("{v}")));
        cells.extend(traj.traces.iter().map(|tr| format!("{}", tr.values[k])));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Active-set events as JSON lines `{"t":…,"old":[…],"new":[…]}`.
pub fn events_jsonl(traj: &Trajectory) -> String {
    let mut out = String::new();
    for e in &traj.events {
        let v = json!({ "t": e.t, "old": e.old, "new": e.new });
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// saddle set and constants reports
// ---------------------------------------------------------------------------

fn vec_json(v: &DVector<f64>) -> serde_json::Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn mat_rows_json(m: &DMatrix<f64>) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    json!(rows)
}

/// Saddle set as JSON: `{repr, x_star, y_star?, z0, kernel_basis?, tol}`.
pub fn saddle_set_json(sdl: &SaddleSet, tol: f64) -> serde_json::Value {
    match sdl {
        SaddleSet::Singleton(s) => json!({
            "repr": "singleton",
            "x_star": s.x().iter().copied().collect::<Vec<f64>>(),
            "y_star": s.y().iter().copied().collect::<Vec<f64>>(),
            "z0": s.z().iter().copied().collect::<Vec<f64>>(),
            "tol": tol,
        }),
        SaddleSet::AffineXStar {
            x_star,
            z0,
            kernel_basis,
        } => json!({
            "repr": "affine_x_star",
            "x_star": vec_json(x_star),
            "z0": vec_json(z0),
            "kernel_basis": mat_rows_json(kernel_basis),
            "tol": tol,
        }),
        SaddleSet::Numeric {
            points,
            tol: sample_tol,
        } => json!({
            "repr": "numeric",
            "points": points.iter().map(|s| json!({
                "x": s.x().iter().copied().collect::<Vec<f64>>(),
                "y": s.y().iter().copied().collect::<Vec<f64>>(),
                "z": s.z().iter().copied().collect::<Vec<f64>>(),
            })).collect::<Vec<_>>(),
            "tol": sample_tol,
        }),
    }
}

/// Constants report: every [`LyapConstants`] field plus the gain
/// coefficients and the restricted coercivity constant of AAᵀ.
pub fn constants_json(
    consts: &LyapConstants,
    gains: &IssGains,
    lambda_s_aat: f64,
    norm_a: f64,
) -> serde_json::Value {
    json!({
        "beta1": consts.beta1,
        "beta2": consts.beta2,
        "lambda_m": consts.lambda_m,
        "lambda_m_tilde": consts.lambda_m_tilde,
        "xi2": consts.xi2,
        "alpha1": consts.alpha1,
        "alpha2": consts.alpha2,
        "c_tilde_x": gains.c_tilde_x,
        "c_tilde_z": gains.c_tilde_z,
        "lambda_s_aat": lambda_s_aat,
        "norm_a": norm_a,
    })
}

// ---------------------------------------------------------------------------
// trigger run exports
// ---------------------------------------------------------------------------

/// CSV with header `k,t_k,dt_k,x_1..x_n,z_1..z_m,V3`; the final row carries
/// an empty dt cell.
pub fn trigger_run_csv(prog: &ConstrainedProgram, run: &TriggerRun) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = vec!["k".into(), "t_k".into(), "dt_k".into()];
    header.extend((1..=prog.n()).map(|i| format!("x_{i}")));
    header.extend((1..=prog.m()).map(|i| format!("z_{i}")));
    header.push("V3".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for (k, t) in run.times.iter().enumerate() {
        let s = &run.states[k];
        let dt = run.dts.get(k).map(|d| format!("{d}")).unwrap_or_default();
        let mut cells: Vec<String> = vec![format!("{k}"), format!("{t}"), dt];
        cells.extend(s.x().iter().map(|v| format!("{v}")));
        cells.extend(s.z().iter().map(|v| format!("{v}")));
        cells.push(format!("{}", run.v3_trace[k]));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn trigger_run_summary(run: &TriggerRun) -> serde_json::Value {
    json!({
        "rule": run.rule.name(),
        "steps": run.steps(),
        "converged": run.converged,
        "final_distance": run.final_distance,
        "dwell_min_observed": if run.dwell_min_observed.is_finite() { Some(run.dwell_min_observed) } else { None },
        "dwell_bound_certified": run.dwell_bound_certified,
        "horizon_reached": run.times.last().copied().unwrap_or(0.0),
    })
}
