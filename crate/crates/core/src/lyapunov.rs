//! Lyapunov and ISS-Lyapunov functions for the saddle-point dynamics, the
//! constants that parameterize them, and Lie-derivative evaluation along the
//! fields.
//!
//! Conventions: distances are 2-norm distances to the saddle set, matrix
//! norms are induced 2-norms throughout.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{psp_field, sp_field, FieldSel};
use crate::error::{Error, Result};
use crate::integrate::{active_set, ActiveSet};
use crate::linalg;
use crate::problem::{grad_blocks, hessian_blocks, ConstrainedProgram, SaddleState};
use crate::saddle::{check_saddle, project_to_saddle_set, SaddleSet};

/// Constants attached to the quadratic ISS-Lyapunov machinery for a program
/// with declared curvature bounds m ≤ M and a choice of β₁ > 0:
///
/// ```text
/// β₂  = 4β₁M⁴/m²             λ_m = min{β₁m/2, β₁m³}
/// λ̃_m = λ_m·min{1, λ_s(AAᵀ)}  ξ₂  = max{M, ‖A‖}
/// α₁  = β₂/2                  α₂  = (3β₁/2)(M² + ‖A‖²) + β₂/2
/// ```
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LyapConstants {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_m: f64,
    pub lambda_m_tilde: f64,
    pub xi2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Compute [`LyapConstants`] for the program. Requires declared curvature
/// bounds with m_lb > 0.
pub fn constants(prog: &ConstrainedProgram, beta1: f64) -> Result<LyapConstants> {
    if beta1 <= 0.0 {
        return Err(Error::Config(format!("beta1 must be > 0 (got {beta1})")));
    }
    let cur = prog.curvature().ok_or_else(|| {
        Error::Config("program declares no curvature constants (m_lb > 0 required)".into())
    })?;
    let (m, big_m) = (cur.m_lb, cur.m_ub);
    let norm_a = prog.norm_a();
    let lambda_s = lambda_s_aat(prog);
    let beta2 = 4.0 * beta1 * big_m.powi(4) / (m * m);
    let lambda_m = (0.5 * beta1 * m).min(beta1 * m.powi(3));
    Ok(LyapConstants {
        beta1,
        beta2,
        lambda_m,
        lambda_m_tilde: lambda_m * 1.0_f64.min(lambda_s),
        xi2: big_m.max(norm_a),
        alpha1: beta2 / 2.0,
        alpha2: 1.5 * beta1 * (big_m * big_m + norm_a * norm_a) + beta2 / 2.0,
    })
}

/// Smallest nonzero eigenvalue of AAᵀ (1 when A is absent or zero, so that
/// `min{1, λ_s}` degenerates gracefully).
pub fn lambda_s_aat(prog: &ConstrainedProgram) -> f64 {
    if prog.m() == 0 {
        return 1.0;
    }
    let aat = prog.a() * prog.a().transpose();
    linalg::smallest_nonzero_eigenvalue(&aat).unwrap_or(1.0)
}

/// Disturbance-gain coefficients from the ISS decrease estimate:
/// C̃ₓ = β₁M² + β₁M‖A‖ + β₂ + β₁‖A‖², C̃_z = β₁M‖A‖ + β₁‖A‖² + β₂.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IssGains {
    pub c_tilde_x: f64,
    pub c_tilde_z: f64,
}

impl IssGains {
    /// ISS gain (C̃ₓ + C̃_z)/(θ·λ̃_m) for a margin θ ∈ (0, 1): the decrease
    /// inequality holds whenever the distance exceeds gain·‖u‖.
    pub fn gain(&self, consts: &LyapConstants, theta: f64) -> f64 {
        (self.c_tilde_x + self.c_tilde_z) / (theta * consts.lambda_m_tilde)
    }
}

pub fn iss_gains(prog: &ConstrainedProgram, consts: &LyapConstants) -> Result<IssGains> {
    let cur = prog
        .curvature()
        .ok_or_else(|| Error::Config("program declares no curvature constants".into()))?;
    let big_m = cur.m_ub;
    let na = prog.norm_a();
    let b1 = consts.beta1;
    let b2 = consts.beta2;
    Ok(IssGains {
        c_tilde_x: b1 * big_m * big_m + b1 * big_m * na + b2 + b1 * na * na,
        c_tilde_z: b1 * big_m * na + b1 * na * na + b2,
    })
}

/// Half squared distance to a fixed saddle point.
pub fn v1(s: &SaddleState, anchor: &SaddleState) -> f64 {
    0.5 * s.distance_to(anchor).powi(2)
}

/// Discontinuous Lyapunov function for the projected dynamics: half the
/// squared field magnitude with the active y-components dropped, plus half
/// the squared distance to the saddle set. Zero exactly on the saddle set.
pub fn v2(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    sdl: &SaddleSet,
    tol_active: f64,
) -> Result<f64> {
    let j = active_set(prog, s, tol_active)?;
    v2_partition(prog, s, &j, sdl)
}

/// The continuously differentiable piece of [`v2`] for a fixed index set.
pub fn v2_partition(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    index_set: &ActiveSet,
    sdl: &SaddleSet,
) -> Result<f64> {
    if let Some(&j) = index_set.indices.iter().find(|&&j| j >= prog.p()) {
        return Err(Error::Config(format!(
            "active-set index {j} out of range for p = {}",
            prog.p()
        )));
    }
    let g = grad_blocks(prog, s)?;
    let mut acc = g.gx.norm_squared() + g.gz.norm_squared();
    for jj in 0..prog.p() {
        if !index_set.contains(jj) {
            acc += g.gy[jj] * g.gy[jj];
        }
    }
    let d = crate::saddle::distance_to_saddle_set(s, sdl);
    Ok(0.5 * acc + 0.5 * d * d)
}

fn beta2_of(prog: &ConstrainedProgram, beta1: f64) -> Result<f64> {
    let cur = prog
        .curvature()
        .ok_or_else(|| Error::Config("program declares no curvature constants".into()))?;
    Ok(4.0 * beta1 * cur.m_ub.powi(4) / (cur.m_lb * cur.m_lb))
}

fn require_smooth_class(prog: &ConstrainedProgram, what: &str) -> Result<()> {
    if prog.p() != 0 {
        return Err(Error::Misuse(format!(
            "{what} requires an equality-constrained program (p = {})",
            prog.p()
        )));
    }
    Ok(())
}

/// ISS-Lyapunov function (β₁/2)‖X_sp‖² + (β₂/2)·dist², with β₂ derived from
/// β₁ and the declared curvature bounds. Requires p = 0.
pub fn v3(prog: &ConstrainedProgram, s: &SaddleState, sdl: &SaddleSet, beta1: f64) -> Result<f64> {
    require_smooth_class(prog, "v3")?;
    let beta2 = beta2_of(prog, beta1)?;
    let rate = sp_field(prog, s)?;
    let d = crate::saddle::distance_to_saddle_set(s, sdl);
    Ok(0.5 * beta1 * rate.norm().powi(2) + 0.5 * beta2 * d * d)
}

/// Point-anchored variant of [`v3`]: the distance term is taken to a fixed
/// saddle point rather than to the set. Agrees with `v3` when the saddle set
/// is the singleton `{anchor}`. The anchor is verified against the
/// first-order conditions.
pub fn v3_anchored(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    anchor: &SaddleState,
    beta1: f64,
) -> Result<f64> {
    require_smooth_class(prog, "v3_anchored")?;
    let (ok, res) = check_saddle(prog, anchor, 1e-6)?;
    if !ok {
        return Err(Error::Hypothesis(format!(
            "anchor is not a saddle point (max residual {:.3e})",
            res.max()
        )));
    }
    let beta2 = beta2_of(prog, beta1)?;
    let rate = sp_field(prog, s)?;
    Ok(0.5 * beta1 * rate.norm().powi(2) + 0.5 * beta2 * s.distance_to(anchor).powi(2))
}

/// Quadratic ISS-Lyapunov candidate: half squared set distance plus the
/// ε-weighted cross term (x − x_p)ᵀAᵀ(z − z_p) at the set projection.
pub fn v4(prog: &ConstrainedProgram, s: &SaddleState, sdl: &SaddleSet, eps: f64) -> Result<f64> {
    require_smooth_class(prog, "v4")?;
    if eps < 0.0 {
        return Err(Error::Config(format!("eps must be ≥ 0 (got {eps})")));
    }
    let (p, d) = project_to_saddle_set(s, sdl);
    let cross = (prog.a() * (s.x() - p.x())).dot(&(s.z() - p.z()));
    Ok(0.5 * d * d + eps * cross)
}

/// Lyapunov function selector for [`lie_derivative`]. Each variant carries
/// the context its function needs.
#[derive(Debug, Clone, Copy)]
pub enum LyapFn<'a> {
    V1 { anchor: &'a SaddleState },
    V2 { sdl: &'a SaddleSet, tol_active: f64 },
    V3 { sdl: &'a SaddleSet, beta1: f64 },
    V3Anchored { anchor: &'a SaddleState, beta1: f64 },
    V4 { sdl: &'a SaddleSet, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    Analytic,
    Numeric,
}

fn field_rate(prog: &ConstrainedProgram, field: FieldSel, s: &SaddleState) -> Result<DVector<f64>> {
    match field {
        FieldSel::Projected => Ok(psp_field(prog, s)?.to_vector()),
        FieldSel::Smooth => Ok(sp_field(prog, s)?.to_vector()),
    }
}

fn eval_lyap(prog: &ConstrainedProgram, v: &LyapFn, s: &SaddleState) -> Result<f64> {
    match v {
        LyapFn::V1 { anchor } => Ok(v1(s, anchor)),
        LyapFn::V2 { sdl, tol_active } => v2(prog, s, sdl, *tol_active),
        LyapFn::V3 { sdl, beta1 } => v3(prog, s, sdl, *beta1),
        LyapFn::V3Anchored { anchor, beta1 } => {
            // skip anchor re-verification in the evaluation hot path
            let beta2 = beta2_of(prog, *beta1)?;
            let rate = sp_field(prog, s)?;
            Ok(0.5 * beta1 * rate.norm().powi(2) + 0.5 * beta2 * s.distance_to(anchor).powi(2))
        }
        LyapFn::V4 { sdl, eps } => v4(prog, s, sdl, *eps),
    }
}

/// Gradient of [`v3`] split into x- and z-blocks, using the Danskin identity
/// for the set-distance term.
pub fn grad_v3(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    sdl: &SaddleSet,
    beta1: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    require_smooth_class(prog, "grad_v3")?;
    let beta2 = beta2_of(prog, beta1)?;
    let (p, _) = project_to_saddle_set(s, sdl);
    grad_v3_at_anchor(prog, s, &p, beta1, beta2)
}

fn grad_v3_at_anchor(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    anchor: &SaddleState,
    beta1: f64,
    beta2: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let g = grad_blocks(prog, s)?;
    let h = hessian_blocks(prog, s)?;
    let gx_v3 =
        (h.fxx * &g.gx + prog.a().transpose() * &g.gz) * beta1 + (s.x() - anchor.x()) * beta2;
    let gz_v3 = (prog.a() * &g.gx) * beta1 + (s.z() - anchor.z()) * beta2;
    Ok((gx_v3, gz_v3))
}

fn analytic_lie(
    prog: &ConstrainedProgram,
    v: &LyapFn,
    field: FieldSel,
    s: &SaddleState,
) -> Result<f64> {
    let rate = field_rate(prog, field, s)?;
    match v {
        LyapFn::V1 { anchor } => {
            let grad = s.to_vector() - anchor.to_vector();
            Ok(grad.dot(&rate))
        }
        LyapFn::V2 { sdl, tol_active } => {
            if on_partition_boundary(prog, s, *tol_active)? {
                return Err(Error::PartitionBoundary);
            }
            let j = active_set(prog, s, *tol_active)?;
            let g = grad_blocks(prog, s)?;
            let h = hessian_blocks(prog, s)?;
            let (xs, _) = project_to_saddle_set(s, sdl);
            // gradient of ½(‖∇ₓF‖² + ‖∇_zF‖² + Σ_{j∉J}(∇_yF)_j²) + ½dist²
            let mut gx = &h.fxx * &g.gx + prog.a().transpose() * &g.gz + (s.x() - xs.x());
            for jj in 0..prog.p() {
                if !j.contains(jj) {
                    gx += prog.ineq()[jj].w.clone() * g.gy[jj];
                }
            }
            let gy = h.fxy.transpose() * &g.gx + (s.y() - xs.y());
            let gz = prog.a() * &g.gx + (s.z() - xs.z());
            let mut grad = DVector::zeros(rate.len());
            grad.rows_mut(0, prog.n()).copy_from(&gx);
            grad.rows_mut(prog.n(), prog.p()).copy_from(&gy);
            grad.rows_mut(prog.n() + prog.p(), prog.m()).copy_from(&gz);
            Ok(grad.dot(&rate))
        }
        LyapFn::V3 { sdl, beta1 } => {
            let (gx, gz) = grad_v3(prog, s, sdl, *beta1)?;
            Ok(stack_dot(&gx, &gz, &rate, prog.n()))
        }
        LyapFn::V3Anchored { anchor, beta1 } => {
            let beta2 = beta2_of(prog, *beta1)?;
            let (gx, gz) = grad_v3_at_anchor(prog, s, anchor, *beta1, beta2)?;
            Ok(stack_dot(&gx, &gz, &rate, prog.n()))
        }
        LyapFn::V4 { sdl, eps } => {
            require_smooth_class(prog, "v4")?;
            let (p, _) = project_to_saddle_set(s, sdl);
            let dx = s.x() - p.x();
            let dz = s.z() - p.z();
            let gx = &dx + prog.a().transpose() * &dz * *eps;
            let gz = &dz + prog.a() * &dx * *eps;
            Ok(stack_dot(&gx, &gz, &rate, prog.n()))
        }
    }
}

fn stack_dot(gx: &DVector<f64>, gz: &DVector<f64>, rate: &DVector<f64>, n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        acc += gx[i] * rate[i];
    }
    for k in 0..gz.len() {
        acc += gz[k] * rate[n + k];
    }
    acc
}

/// A state sits on a V₂ partition boundary when some multiplier is at zero
/// with a vanishing ascent component, so the active set is about to change.
pub fn on_partition_boundary(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    tol_active: f64,
) -> Result<bool> {
    let g = grad_blocks(prog, s)?;
    Ok((0..prog.p()).any(|j| s.y()[j] <= tol_active && g.gy[j].abs() <= tol_active))
}

/// Lie derivative of the selected Lyapunov function along the selected
/// field, either from the analytic gradient (Danskin for distance terms) or
/// by central differences of the function along the flow direction.
pub fn lie_derivative(
    prog: &ConstrainedProgram,
    v: &LyapFn,
    field: FieldSel,
    s: &SaddleState,
    mode: DiffMode,
) -> Result<f64> {
    match mode {
        DiffMode::Analytic => analytic_lie(prog, v, field, s),
        DiffMode::Numeric => {
            if let LyapFn::V2 { tol_active, .. } = v {
                if on_partition_boundary(prog, s, *tol_active)? {
                    return Err(Error::PartitionBoundary);
                }
            }
            let rate = field_rate(prog, field, s)?;
            let h = 1e-6 / (1.0 + rate.norm());
            let (n, p, m) = (prog.n(), prog.p(), prog.m());
            let sv = s.to_vector();
            // y stays nonnegative only to first order; V formulas extend
            // smoothly to slightly negative y so no clamping here
            let splus = SaddleState::from_vector_unclamped(n, p, m, &(&sv + &rate * h));
            let sminus = SaddleState::from_vector_unclamped(n, p, m, &(&sv - &rate * h));
            let vp = eval_lyap(prog, v, &splus)?;
            let vm = eval_lyap(prog, v, &sminus)?;
            Ok((vp - vm) / (2.0 * h))
        }
    }
}

/// State-dependent Lipschitz modulus of ∇V₃:
/// ξ = √3·(β₁²(ξ₁² + ‖A‖⁴ + ‖A‖²ξ₂²) + β₂²)^½ with
/// ξ₁ = M·ξ₂ + L·‖∇ₓF(s)‖.
pub fn xi(prog: &ConstrainedProgram, s: &SaddleState, consts: &LyapConstants) -> Result<f64> {
    xi_with_norm_a(prog, s, consts, prog.norm_a())
}

/// [`xi`] with the constraint-matrix norm precomputed by the caller.
pub fn xi_with_norm_a(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    consts: &LyapConstants,
    norm_a: f64,
) -> Result<f64> {
    require_smooth_class(prog, "xi")?;
    let cur = prog
        .curvature()
        .ok_or_else(|| Error::Config("program declares no curvature constants".into()))?;
    let g = grad_blocks(prog, s)?;
    let xi1 = cur.m_ub * consts.xi2 + cur.l_hess * g.gx.norm();
    Ok(xi_from_parts(consts, norm_a, xi1))
}

/// Shared closed form for ξ (and for the sublevel-set bound T₂, obtained by
/// substituting the bound T₁ for ξ₁).
pub fn xi_from_parts(consts: &LyapConstants, norm_a: f64, xi1: f64) -> f64 {
    let b1 = consts.beta1;
    let b2 = consts.beta2;
    let xi2 = consts.xi2;
    (3.0_f64).sqrt()
        * (b1 * b1 * (xi1 * xi1 + norm_a.powi(4) + norm_a * norm_a * xi2 * xi2) + b2 * b2).sqrt()
}

/// Assemble the 2n×2n block matrix
/// `W = [β₁B₁B₂B₁ + β₂B₁, β₁B₁B₂; β₁B₂B₁, β₁B₂]` for symmetric B₁, B₂ with
/// spectra in [m, M], and return it with the certified lower bound
/// `λ_m = min{β₁m/2, β₁m³}` on its spectrum.
pub fn block_matrix_lower_bound(
    b1_mat: &DMatrix<f64>,
    b2_mat: &DMatrix<f64>,
    beta1: f64,
    m: f64,
    big_m: f64,
) -> Result<(DMatrix<f64>, f64)> {
    if beta1 <= 0.0 || m <= 0.0 || big_m < m {
        return Err(Error::Config(format!(
            "need beta1 > 0 and 0 < m ≤ M (got beta1 = {beta1}, m = {m}, M = {big_m})"
        )));
    }
    let n = b1_mat.nrows();
    for (name, mat) in [("B1", b1_mat), ("B2", b2_mat)] {
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Config(format!(
                "{name} must be {n}×{n}, got {}×{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if (mat - mat.transpose()).amax() > 1e-10 * mat.amax().max(1.0) {
            return Err(Error::Hypothesis(format!("{name} is not symmetric")));
        }
        let tol = 1e-8 * big_m.max(1.0);
        let lo = linalg::lambda_min_sym(mat);
        let hi = linalg::lambda_max_sym(mat);
        if lo < m - tol || hi > big_m + tol {
            return Err(Error::Hypothesis(format!(
                "{name} spectrum [{lo:.6}, {hi:.6}] violates the declared bounds [{m}, {big_m}]"
            )));
        }
    }
    let beta2 = 4.0 * beta1 * big_m.powi(4) / (m * m);
    let b1b2 = b1_mat * b2_mat;
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    w.view_mut((0, 0), (n, n))
        .copy_from(&(&b1b2 * b1_mat * beta1 + b1_mat * beta2));
    w.view_mut((0, n), (n, n)).copy_from(&(&b1b2 * beta1));
    w.view_mut((n, 0), (n, n))
        .copy_from(&((b2_mat * b1_mat) * beta1));
    w.view_mut((n, n), (n, n)).copy_from(&(b2_mat * beta1));
    let lambda_m = (0.5 * beta1 * m).min(beta1 * m.powi(3));
    Ok((w, lambda_m))
}

/// Both sides of the local Lipschitz estimate for ∇V₃:
/// `‖∇V₃(s₂) − ∇V₃(s₁)‖ ≤ ξ(s₁)·‖s₂ − s₁‖`. Returns `(lhs, rhs)`.
pub fn grad_v3_lipschitz_check(
    prog: &ConstrainedProgram,
    s1: &SaddleState,
    s2: &SaddleState,
    sdl: &SaddleSet,
    consts: &LyapConstants,
) -> Result<(f64, f64)> {
    let (gx1, gz1) = grad_v3(prog, s1, sdl, consts.beta1)?;
    let (gx2, gz2) = grad_v3(prog, s2, sdl, consts.beta1)?;
    let lhs = ((gx2 - gx1).norm_squared() + (gz2 - gz1).norm_squared()).sqrt();
    let rhs = xi(prog, s1, consts)? * s1.distance_to(s2);
    Ok((lhs, rhs))
}

/// Result of the empirical ε sweep for the quadratic candidate [`v4`].
#[derive(Debug, Clone)]
pub struct EpsProbe {
    /// Largest grid value for which the decrease held at every trial state,
    /// `None` when no grid point passed.
    pub eps_max: Option<f64>,
    /// (eps, passed) for every grid point, in ascending eps order.
    pub frontier: Vec<(f64, bool)>,
}

/// Sweep an ε grid and report the largest value for which the Lie derivative
/// of [`v4`] along the undisturbed smooth field is strictly negative at every
/// trial state off the saddle set. Empirical evidence only — no certificate.
pub fn probe_eps_max(
    prog: &ConstrainedProgram,
    trial_states: &[SaddleState],
    eps_grid: &[f64],
    sdl: &SaddleSet,
) -> Result<EpsProbe> {
    require_smooth_class(prog, "probe_eps_max")?;
    if eps_grid.is_empty() {
        return Err(Error::Config("eps grid must be non-empty".into()));
    }
    let mut grid: Vec<f64> = eps_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut frontier = Vec::with_capacity(grid.len());
    for &eps in &grid {
        if eps < 0.0 {
            return Err(Error::Config(format!("eps must be ≥ 0 (got {eps})")));
        }
        let mut pass = true;
        for s in trial_states {
            if crate::saddle::distance_to_saddle_set(s, sdl) <= 1e-9 {
                continue;
            }
            let lie = analytic_lie(prog, &LyapFn::V4 { sdl, eps }, FieldSel::Smooth, s)?;
            if lie >= 0.0 {
                pass = false;
                break;
            }
        }
        frontier.push((eps, pass));
    }
    let eps_max = frontier
        .iter()
        .filter(|(_, p)| *p)
        .map(|(e, _)| *e)
        .fold(None, |acc: Option<f64>, e| {
            Some(acc.map_or(e, |a| a.max(e)))
        });
    Ok(EpsProbe { eps_max, frontier })
}
