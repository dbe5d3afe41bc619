//! Self-triggered discrete-time execution of the smooth saddle-point
//! dynamics: the step to the next triggering time is computed from the
//! current state so that the ISS-Lyapunov function provably decreases, and
//! the gap between triggers carries a certified positive lower bound.

use nalgebra::DVector;

use crate::dynamics::sp_field;
use crate::error::{Error, Result};
use crate::lyapunov::{self, LyapConstants};
use crate::problem::{ConstrainedProgram, SaddleState};
use crate::saddle::{distance_to_saddle_set, solve_saddle, SaddleSet};

/// Triggering rule selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerRule {
    /// Step length −L V₃ / (ξ‖X_sp‖²): the largest step the decrease
    /// argument certifies. Requires the saddle set (the Lie derivative
    /// carries the distance term).
    Exact,
    /// Step length λ̃_m / (3(M² + ‖A‖²)ξ): needs no saddle knowledge and is
    /// never longer than the exact step.
    ConstantFree,
}

impl TriggerRule {
    pub fn name(self) -> &'static str {
        match self {
            TriggerRule::Exact => "exact",
            TriggerRule::ConstantFree => "constant-free",
        }
    }
}

/// Outcome of a single triggered step.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    /// The state is (numerically) a saddle: the dynamics is at rest and no
    /// further trigger is generated.
    Terminal,
    Step {
        dt: f64,
        next: SaddleState,
    },
}

fn forward(s: &SaddleState, rate: &DVector<f64>, dt: f64, n: usize, m: usize) -> SaddleState {
    let v = s.to_vector() + rate * dt;
    SaddleState::from_vector_clamped(n, 0, m, &v)
}

/// One step of the exact rule. The Lie derivative of V₃ at the current state
/// divides the certified Lipschitz modulus ξ and the squared field norm; the
/// sampled field is then held for exactly that long.
pub fn step_exact(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    consts: &LyapConstants,
    sdl: &SaddleSet,
) -> Result<StepOutcome> {
    step_exact_with_norm(prog, s, consts, sdl, prog.norm_a())
}

fn step_exact_with_norm(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    consts: &LyapConstants,
    sdl: &SaddleSet,
    norm_a: f64,
) -> Result<StepOutcome> {
    let rate = sp_field(prog, s)?.to_vector();
    let speed2 = rate.norm_squared();
    if speed2 == 0.0 {
        return Ok(StepOutcome::Terminal);
    }
    let (gx, gz) = lyapunov::grad_v3(prog, s, sdl, consts.beta1)?;
    let n = prog.n();
    let mut lie = 0.0;
    for i in 0..n {
        lie += gx[i] * rate[i];
    }
    for k in 0..prog.m() {
        lie += gz[k] * rate[n + k];
    }
    if lie >= 0.0 {
        return Err(Error::Hypothesis(format!(
            "V3 fails to decrease at the sampled state (L V3 = {lie:.3e}); \
             declared curvature constants are likely violated"
        )));
    }
    let xi = lyapunov::xi_with_norm_a(prog, s, consts, norm_a)?;
    let dt = -lie / (xi * speed2);
    Ok(StepOutcome::Step {
        dt,
        next: forward(s, &rate, dt, n, prog.m()),
    })
}

/// One step of the constant-free rule; ξ depends only on the current state.
pub fn step_constant_free(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    consts: &LyapConstants,
) -> Result<StepOutcome> {
    step_constant_free_with_norm(prog, s, consts, prog.norm_a())
}

fn step_constant_free_with_norm(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    consts: &LyapConstants,
    norm_a: f64,
) -> Result<StepOutcome> {
    let rate = sp_field(prog, s)?.to_vector();
    if rate.norm_squared() == 0.0 {
        return Ok(StepOutcome::Terminal);
    }
    let cur = prog
        .curvature()
        .ok_or_else(|| Error::Config("curvature constants required".into()))?;
    let xi = lyapunov::xi_with_norm_a(prog, s, consts, norm_a)?;
    let dt = consts.lambda_m_tilde / (3.0 * (cur.m_ub * cur.m_ub + norm_a * norm_a) * xi);
    Ok(StepOutcome::Step {
        dt,
        next: forward(s, &rate, dt, prog.n(), prog.m()),
    })
}

/// Record of a self-triggered execution.
#[derive(Debug, Clone)]
pub struct TriggerRun {
    pub rule: TriggerRule,
    /// Triggering times t₀ = 0 < t₁ < …
    pub times: Vec<f64>,
    /// States at the triggering times.
    pub states: Vec<SaddleState>,
    /// V₃ at the triggering times.
    pub v3_trace: Vec<f64>,
    /// Step lengths t_{k+1} − t_k.
    pub dts: Vec<f64>,
    pub dwell_min_observed: f64,
    pub dwell_bound_certified: f64,
    /// Distance to the saddle set at the final state.
    pub final_distance: f64,
    pub converged: bool,
}

impl TriggerRun {
    pub fn steps(&self) -> usize {
        self.dts.len()
    }
}

/// Certified lower bound on the inter-trigger times of a run started at
/// `s0`, valid while the iterates stay in the initial V₃ sublevel set.
///
/// The field-norm maximum over the sublevel set is bounded through the
/// sandwich inequality, G ≤ (M + ‖A‖)·√(V₃(s₀)/α₁); then T₁ = M·ξ₂ + L·G,
/// T₂ is ξ with ξ₁ replaced by T₁, and the bound is
/// λ̃_m / (3(M² + ‖A‖²)·T₂). With L = 0 the bound is independent of s₀ and
/// coincides with the constant-free step length.
pub fn dwell_bound(
    prog: &ConstrainedProgram,
    s0: &SaddleState,
    consts: &LyapConstants,
    sdl: &SaddleSet,
) -> Result<f64> {
    let cur = prog
        .curvature()
        .ok_or_else(|| Error::Config("curvature constants required".into()))?;
    let norm_a = prog.norm_a();
    let v3_0 = lyapunov::v3(prog, s0, sdl, consts.beta1)?;
    let d_max = (v3_0 / consts.alpha1).sqrt();
    let g_max = (cur.m_ub + norm_a) * d_max;
    let t1 = cur.m_ub * consts.xi2 + cur.l_hess * g_max;
    let t2 = lyapunov::xi_from_parts(consts, norm_a, t1);
    Ok(consts.lambda_m_tilde / (3.0 * (cur.m_ub * cur.m_ub + norm_a * norm_a) * t2))
}

/// Run the self-triggered dynamics from `s0` until the distance to the
/// saddle set falls below `stop_tol` or `max_steps` triggers fire.
///
/// Requires p = 0 and full row rank A (singleton saddle set). Aborts with a
/// hypothesis diagnostic if V₃ ever fails to decrease across a step, and
/// asserts sublevel containment of every iterate.
pub fn run(
    prog: &ConstrainedProgram,
    s0: &SaddleState,
    rule: TriggerRule,
    beta1: f64,
    max_steps: usize,
    stop_tol: f64,
) -> Result<TriggerRun> {
    if prog.p() != 0 {
        return Err(Error::Misuse(format!(
            "self-triggered execution requires p = 0 (got p = {})",
            prog.p()
        )));
    }
    let consts = lyapunov::constants(prog, beta1)?;
    let sdl = solve_saddle(prog, 1e-11)?;
    if !sdl.is_singleton() {
        return Err(Error::Hypothesis(
            "self-triggered execution needs a full-row-rank A (singleton saddle set)".into(),
        ));
    }
    let norm_a = prog.norm_a();
    let bound = dwell_bound(prog, s0, &consts, &sdl)?;

    let mut times = vec![0.0];
    let mut states = vec![s0.clone()];
    let mut v3_trace = vec![lyapunov::v3(prog, s0, &sdl, beta1)?];
    let mut dts: Vec<f64> = Vec::new();
    let v3_0 = v3_trace[0];

    let mut s = s0.clone();
    let mut t = 0.0;
    let mut converged = distance_to_saddle_set(&s, &sdl) < stop_tol;

    while !converged && dts.len() < max_steps {
        let outcome = match rule {
            TriggerRule::Exact => step_exact_with_norm(prog, &s, &consts, &sdl, norm_a)?,
            TriggerRule::ConstantFree => step_constant_free_with_norm(prog, &s, &consts, norm_a)?,
        };
        let (dt, next) = match outcome {
            StepOutcome::Terminal => break,
            StepOutcome::Step { dt, next } => (dt, next),
        };
        let v3_next = lyapunov::v3(prog, &next, &sdl, beta1)?;
        let v3_prev = *v3_trace.last().expect("non-empty");
        if v3_next >= v3_prev {
            return Err(Error::Hypothesis(format!(
                "V3 increased across a triggered step ({v3_prev:.6e} → {v3_next:.6e} at t = {t:.4}); \
                 declared curvature constants violate the decrease certificate"
            )));
        }
        if v3_next > v3_0 * (1.0 + 1e-12) {
            return Err(Error::Hypothesis(
                "iterate escaped the initial V3 sublevel set".into(),
            ));
        }
        t += dt;
        s = next;
        times.push(t);
        states.push(s.clone());
        v3_trace.push(v3_next);
        dts.push(dt);
        converged = distance_to_saddle_set(&s, &sdl) < stop_tol;
    }

    let dwell_min_observed = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let final_distance = distance_to_saddle_set(&s, &sdl);
    Ok(TriggerRun {
        rule,
        times,
        states,
        v3_trace,
        dts,
        dwell_min_observed,
        dwell_bound_certified: bound,
        final_distance,
        converged,
    })
}

/// First-order Euler baselines used for qualitative comparison with the
/// self-triggered rule.
#[derive(Debug, Clone, Copy)]
pub enum EulerStep {
    Fixed(f64),
    /// dt_k = 1/k at the k-th iteration (k starting at 1).
    Decaying,
}

/// Iterations a discrete execution needs to reach `target_dist`; `None`
/// when `cap` iterations do not suffice.
pub fn iterations_to_distance(
    prog: &ConstrainedProgram,
    s0: &SaddleState,
    method: Method,
    sdl: &SaddleSet,
    target_dist: f64,
    cap: usize,
) -> Result<Option<usize>> {
    let consts;
    let norm_a = prog.norm_a();
    let mut s = s0.clone();
    match method {
        Method::SelfTriggered { rule, beta1 } => {
            consts = Some(lyapunov::constants(prog, beta1)?);
            for k in 0..cap {
                if distance_to_saddle_set(&s, sdl) <= target_dist {
                    return Ok(Some(k));
                }
                let outcome = match rule {
                    TriggerRule::Exact => {
                        step_exact_with_norm(prog, &s, consts.as_ref().unwrap(), sdl, norm_a)?
                    }
                    TriggerRule::ConstantFree => {
                        step_constant_free_with_norm(prog, &s, consts.as_ref().unwrap(), norm_a)?
                    }
                };
                match outcome {
                    StepOutcome::Terminal => return Ok(Some(k)),
                    StepOutcome::Step { next, .. } => s = next,
                }
            }
        }
        Method::Euler(step) => {
            for k in 0..cap {
                if distance_to_saddle_set(&s, sdl) <= target_dist {
                    return Ok(Some(k));
                }
                let rate = sp_field(prog, &s)?.to_vector();
                let dt = match step {
                    EulerStep::Fixed(dt) => dt,
                    EulerStep::Decaying => 1.0 / (k + 1) as f64,
                };
                s = forward(&s, &rate, dt, prog.n(), prog.m());
                if !s.is_finite() || s.norm() > crate::integrate::BLOWUP_NORM {
                    return Ok(None);
                }
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy)]
pub enum Method {
    SelfTriggered { rule: TriggerRule, beta1: f64 },
    Euler(EulerStep),
}

/// Iterations-to-target for the self-triggered rule against fixed-step and
/// decaying-step Euler on the same problem and initial state.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub target_dist: f64,
    pub selftrig_iters: Option<usize>,
    pub euler_fixed_iters: Option<usize>,
    pub euler_decaying_iters: Option<usize>,
    pub euler_fixed_dt: f64,
}

pub fn compare_methods(
    prog: &ConstrainedProgram,
    s0: &SaddleState,
    beta1: f64,
    target_dist: f64,
    euler_dt: f64,
    cap: usize,
) -> Result<CompareReport> {
    let sdl = solve_saddle(prog, 1e-11)?;
    let st = iterations_to_distance(
        prog,
        s0,
        Method::SelfTriggered {
            rule: TriggerRule::Exact,
            beta1,
        },
        &sdl,
        target_dist,
        cap,
    )?;
    let ef = iterations_to_distance(
        prog,
        s0,
        Method::Euler(EulerStep::Fixed(euler_dt)),
        &sdl,
        target_dist,
        cap,
    )?;
    let ed = iterations_to_distance(
        prog,
        s0,
        Method::Euler(EulerStep::Decaying),
        &sdl,
        target_dist,
        cap,
    )?;
    Ok(CompareReport {
        target_dist,
        selftrig_iters: st,
        euler_fixed_iters: ef,
        euler_decaying_iters: ed,
        euler_fixed_dt: euler_dt,
    })
}
