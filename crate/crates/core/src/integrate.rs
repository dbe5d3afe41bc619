//! Fixed-step trajectory generation with projection, Lyapunov traces, and
//! active-set event logging.
//!
//! The stepper is classical RK4 with the multiplier block clamped to the
//! nonnegative orthant at every stage and after every accepted step:
//! Caratheodory solutions keep y ≥ 0 exactly, discrete steps need the clamp
//! to restore the invariant.

use nalgebra::DVector;

use crate::dynamics::{
    disturbed_field, psp_field, sp_field, Disturbance, DisturbanceKind, DisturbanceSpec, FieldSel,
};
use crate::error::{Error, Result};
use crate::lyapunov;
use crate::problem::{grad_blocks, ConstrainedProgram, SaddleState};
use crate::saddle::{distance_to_saddle_set, project_to_saddle_set, SaddleSet};

/// Default tolerance for active-set membership: clamped multipliers are
/// exactly zero in floating point, so the tolerance only guards arithmetic
/// noise.
pub const DEFAULT_TOL_ACTIVE: f64 = 1e-9;

/// State norm beyond which integration aborts. Unbounded trajectories are a
/// legitimate outcome under constant disturbances on an unbounded saddle set.
pub const BLOWUP_NORM: f64 = 1e12;

/// Sorted set of active inequality indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
}

impl ActiveSet {
    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Indices j with `y_j ≤ tol_active` and `(∇_yF)_j < −tol_active`: the
/// constraints currently pinned by the projection with a strictly inward
/// gradient.
pub fn active_set(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    tol_active: f64,
) -> Result<ActiveSet> {
    if tol_active < 0.0 {
        return Err(Error::Config(format!(
            "tol_active must be ≥ 0 (got {tol_active})"
        )));
    }
    let g = grad_blocks(prog, s)?;
    let indices = (0..prog.p())
        .filter(|&j| s.y()[j] <= tol_active && g.gy[j] < -tol_active)
        .collect();
    Ok(ActiveSet { indices })
}

/// Named scalar traces evaluated along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Half squared distance to a fixed saddle anchor (the projection of the
    /// initial state onto the saddle set).
    V1,
    /// Discontinuous Lyapunov function of the projected dynamics.
    V2,
    /// ISS-Lyapunov function (requires p = 0, β₁, and curvature bounds).
    V3,
    /// 2-norm distance to the saddle set.
    DistToSaddle,
    /// Norm of the driving vector field at the state.
    FieldNorm,
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::V1 => "V1",
            TraceKind::V2 => "V2",
            TraceKind::V3 => "V3",
            TraceKind::DistToSaddle => "dist_sdl",
            TraceKind::FieldNorm => "field_norm",
        }
    }
}

/// An active-set change between consecutive accepted steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSetEvent {
    pub t: f64,
    pub old: Vec<usize>,
    pub new: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub kind: TraceKind,
    pub values: Vec<f64>,
}

/// Time-stamped trajectory with requested traces and active-set events.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SaddleState>,
    pub traces: Vec<Trace>,
    pub events: Vec<ActiveSetEvent>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &SaddleState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn trace(&self, kind: TraceKind) -> Option<&[f64]> {
        self.traces
            .iter()
            .find(|t| t.kind == kind)
            .map(|t| t.values.as_slice())
    }
}

/// Options for [`simulate`].
#[derive(Debug, Clone, Default)]
pub struct SimOptions<'a> {
    pub traces: Vec<TraceKind>,
    /// Saddle set, required by the V1/V2/V3/distance traces.
    pub sdl: Option<&'a SaddleSet>,
    /// β₁ for the V3 trace.
    pub beta1: Option<f64>,
    /// Active-set tolerance; `None` means [`DEFAULT_TOL_ACTIVE`].
    pub tol_active: Option<f64>,
}

/// Build a deterministic disturbance signal for the program, validating the
/// spec dimensions (the raw z-part has length n when structured, m
/// otherwise).
pub fn make_disturbance(spec: &DisturbanceSpec, prog: &ConstrainedProgram) -> Result<Disturbance> {
    let n = prog.n();
    let m = prog.m();
    let expected = n + if spec.structured { n } else { m };
    let check_len = |what: &str, v: &DVector<f64>| -> Result<()> {
        if v.len() != expected {
            return Err(Error::Config(format!(
                "disturbance {what} must have length {expected} (x-part {n}, raw z-part {}), got {}",
                expected - n,
                v.len()
            )));
        }
        Ok(())
    };
    match &spec.kind {
        DisturbanceKind::Zero => {}
        DisturbanceKind::ExpDecay { amplitude, rate } => {
            check_len("amplitude", amplitude)?;
            if *rate <= 0.0 {
                return Err(Error::Config(format!(
                    "decay rate must be > 0 (got {rate})"
                )));
            }
        }
        DisturbanceKind::ConstPlusSin {
            offset,
            amplitude,
            freq,
        } => {
            check_len("offset", offset)?;
            check_len("amplitude", amplitude)?;
            if !freq.is_finite() {
                return Err(Error::Config("sinusoid frequency must be finite".into()));
            }
        }
    }
    let structure = if spec.structured {
        Some(prog.a().clone())
    } else {
        None
    };
    Ok(Disturbance::new(spec.kind.clone(), structure, n, m))
}

struct TraceCtx<'a> {
    sdl: Option<&'a SaddleSet>,
    v1_anchor: Option<SaddleState>,
    beta1: Option<f64>,
    tol_active: f64,
}

fn eval_trace(
    prog: &ConstrainedProgram,
    kind: TraceKind,
    s: &SaddleState,
    rate_norm: f64,
    ctx: &TraceCtx,
) -> Result<f64> {
    match kind {
        TraceKind::V1 => Ok(lyapunov::v1(
            s,
            ctx.v1_anchor.as_ref().ok_or(Error::MissingSaddleSet)?,
        )),
        TraceKind::V2 => lyapunov::v2(
            prog,
            s,
            ctx.sdl.ok_or(Error::MissingSaddleSet)?,
            ctx.tol_active,
        ),
        TraceKind::V3 => {
            let beta1 = ctx
                .beta1
                .ok_or_else(|| Error::Config("V3 trace requires beta1".into()))?;
            lyapunov::v3(prog, s, ctx.sdl.ok_or(Error::MissingSaddleSet)?, beta1)
        }
        TraceKind::DistToSaddle => Ok(distance_to_saddle_set(
            s,
            ctx.sdl.ok_or(Error::MissingSaddleSet)?,
        )),
        TraceKind::FieldNorm => Ok(rate_norm),
    }
}

/// Integrate the selected field from `s0` over `[0, horizon]` with fixed
/// step `dt`, recording states, requested traces, and active-set events.
///
/// Disturbances apply to the smooth field only. Aborts with the last valid
/// time when the state norm exceeds [`BLOWUP_NORM`] or turns non-finite.
pub fn simulate(
    prog: &ConstrainedProgram,
    field: FieldSel,
    s0: &SaddleState,
    horizon: f64,
    dt: f64,
    disturbance: Option<&Disturbance>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Config(format!("dt must be > 0 (got {dt})")));
    }
    if horizon < dt {
        return Err(Error::Config(format!(
            "horizon {horizon} must be ≥ dt {dt}"
        )));
    }
    prog.check_state_dims(s0)?;
    if disturbance.is_some() && field == FieldSel::Projected {
        return Err(Error::Misuse(
            "disturbances are supported for the smooth field only".into(),
        ));
    }
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let tol_active = opts.tol_active.unwrap_or(DEFAULT_TOL_ACTIVE);
    let ctx = TraceCtx {
        sdl: opts.sdl,
        v1_anchor: match (opts.traces.contains(&TraceKind::V1), opts.sdl) {
            (true, Some(sdl)) => Some(project_to_saddle_set(s0, sdl).0),
            (true, None) => return Err(Error::MissingSaddleSet),
            _ => None,
        },
        beta1: opts.beta1,
        tol_active,
    };

    let rate_of = |s: &SaddleState, t: f64| -> Result<DVector<f64>> {
        let r = match (field, disturbance) {
            (FieldSel::Projected, _) => psp_field(prog, s)?,
            (FieldSel::Smooth, None) => sp_field(prog, s)?,
            (FieldSel::Smooth, Some(d)) => disturbed_field(prog, s, d, t)?,
        };
        Ok(r.to_vector())
    };

    let steps = (horizon / dt).round().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut trace_values: Vec<Vec<f64>> = opts
        .traces
        .iter()
        .map(|_| Vec::with_capacity(steps + 1))
        .collect();
    let mut events = Vec::new();

    let mut s = s0.clone();
    let mut t = 0.0;
    let mut current_active = active_set(prog, &s, tol_active)?;

    let record = |s: &SaddleState, t: f64, trace_values: &mut Vec<Vec<f64>>| -> Result<()> {
        if !opts.traces.is_empty() {
            let rn = rate_of(s, t)?.norm();
            for (k, kind) in opts.traces.iter().enumerate() {
                trace_values[k].push(eval_trace(prog, *kind, s, rn, &ctx)?);
            }
        }
        Ok(())
    };

    record(&s, t, &mut trace_values)?;
    times.push(t);
    states.push(s.clone());

    for _ in 0..steps {
        let sv = s.to_vector();
        let k1 = rate_of(&s, t)?;
        let s2 = SaddleState::from_vector_clamped(n, p, m, &(&sv + &k1 * (dt / 2.0)));
        let k2 = rate_of(&s2, t + dt / 2.0)?;
        let s3 = SaddleState::from_vector_clamped(n, p, m, &(&sv + &k2 * (dt / 2.0)));
        let k3 = rate_of(&s3, t + dt / 2.0)?;
        let s4 = SaddleState::from_vector_clamped(n, p, m, &(&sv + &k3 * dt));
        let k4 = rate_of(&s4, t + dt)?;
        let next = &sv + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let next = SaddleState::from_vector_clamped(n, p, m, &next);
        if !next.is_finite() || next.norm() > BLOWUP_NORM {
            return Err(Error::Blowup {
                t: t + dt,
                last_valid: t,
            });
        }
        s = next;
        t += dt;

        let new_active = active_set(prog, &s, tol_active)?;
        if new_active != current_active {
            events.push(ActiveSetEvent {
                t,
                old: current_active.indices.clone(),
                new: new_active.indices.clone(),
            });
            current_active = new_active;
        }

        record(&s, t, &mut trace_values)?;
        times.push(t);
        states.push(s.clone());
    }

    let traces = opts
        .traces
        .iter()
        .zip(trace_values)
        .map(|(&kind, values)| Trace { kind, values })
        .collect();
    Ok(Trajectory {
        times,
        states,
        traces,
        events,
    })
}
