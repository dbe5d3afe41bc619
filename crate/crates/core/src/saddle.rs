//! Ground-truth saddle computation and saddle-set geometry: Newton solvers
//! for the first-order conditions, exact projection onto singleton/affine
//! saddle sets, and the averaged-Hessian diagnostics used to certify
//! convergence hypotheses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{grad_blocks, hessian_blocks, ConstrainedProgram, SaddleState};

/// Exact representation of the saddle set.
///
/// For equality-constrained programs with strongly convex objective the set
/// is `{x*} × (z₀ + ker Aᵀ)`: a singleton when A has full row rank, an affine
/// continuum otherwise. The numeric variant stores sampled points with a
/// tolerance and only supports nearest-sample projection.
#[derive(Debug, Clone)]
pub enum SaddleSet {
    Singleton(SaddleState),
    AffineXStar {
        x_star: DVector<f64>,
        z0: DVector<f64>,
        /// Orthonormal columns spanning ker(Aᵀ).
        kernel_basis: DMatrix<f64>,
    },
    Numeric {
        points: Vec<SaddleState>,
        tol: f64,
    },
}

impl SaddleSet {
    /// A representative point of the set.
    pub fn representative(&self) -> SaddleState {
        match self {
            SaddleSet::Singleton(s) => s.clone(),
            SaddleSet::AffineXStar { x_star, z0, .. } => {
                SaddleState::xz(x_star.clone(), z0.clone())
            }
            SaddleSet::Numeric { points, .. } => points[0].clone(),
        }
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self, SaddleSet::Singleton(_))
    }

    /// Anchor points used when a property must hold "for every saddle":
    /// the representative plus unit displacements along the kernel basis.
    pub fn anchor_sample(&self) -> Vec<SaddleState> {
        match self {
            SaddleSet::Singleton(s) => vec![s.clone()],
            SaddleSet::AffineXStar {
                x_star,
                z0,
                kernel_basis,
            } => {
                let mut anchors = vec![SaddleState::xz(x_star.clone(), z0.clone())];
                for j in 0..kernel_basis.ncols() {
                    let dir = DVector::from(kernel_basis.column(j));
                    anchors.push(SaddleState::xz(x_star.clone(), z0 + &dir));
                    anchors.push(SaddleState::xz(x_star.clone(), z0 - &dir));
                }
                anchors
            }
            SaddleSet::Numeric { points, .. } => points.clone(),
        }
    }
}

/// Projection of `s` onto the saddle set and the 2-norm distance.
///
/// For the affine representation the x-part maps to x*, the z-part to
/// `z₀ + BBᵀ(z − z₀)`; by construction `z − z*` is orthogonal to ker(Aᵀ).
/// For the numeric representation this is nearest-sample projection and the
/// distance is accurate only up to the stored sampling tolerance.
pub fn project_to_saddle_set(s: &SaddleState, sdl: &SaddleSet) -> (SaddleState, f64) {
    match sdl {
        SaddleSet::Singleton(p) => {
            let d = s.distance_to(p);
            (p.clone(), d)
        }
        SaddleSet::AffineXStar {
            x_star,
            z0,
            kernel_basis,
        } => {
            let dz = s.z() - z0;
            let z_proj = if kernel_basis.ncols() > 0 {
                z0 + kernel_basis * (kernel_basis.transpose() * &dz)
            } else {
                z0.clone()
            };
            let p = SaddleState::xz(x_star.clone(), z_proj);
            let d = s.distance_to(&p);
            (p, d)
        }
        SaddleSet::Numeric { points, .. } => {
            let (best, d) = points
                .iter()
                .map(|p| (p, s.distance_to(p)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .expect("numeric saddle set must be non-empty");
            (best.clone(), d)
        }
    }
}

/// Distance of `s` to the saddle set in the 2-norm.
pub fn distance_to_saddle_set(s: &SaddleState, sdl: &SaddleSet) -> f64 {
    project_to_saddle_set(s, sdl).1
}

/// Residuals of the first-order saddle conditions at a point.
#[derive(Debug, Clone)]
pub struct SaddleResiduals {
    /// ‖∇ₓF‖
    pub grad_x: f64,
    /// ‖∇_zF‖
    pub grad_z: f64,
    /// max_j max(0, (∇_yF)_j) — violation of ∇_yF ≤ 0
    pub ineq_violation: f64,
    /// |yᵀ∇_yF| — complementary slackness defect
    pub complementarity: f64,
    /// max_j max(0, −y_j) — violation of y ≥ 0
    pub y_negativity: f64,
}

impl SaddleResiduals {
    pub fn max(&self) -> f64 {
        self.grad_x
            .max(self.grad_z)
            .max(self.ineq_violation)
            .max(self.complementarity)
            .max(self.y_negativity)
    }
}

/// Check the four first-order conditions within `tol`; returns the verdict
/// together with the residual breakdown.
pub fn check_saddle(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    tol: f64,
) -> Result<(bool, SaddleResiduals)> {
    let g = grad_blocks(prog, s)?;
    let ineq_violation = g.gy.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    let res = SaddleResiduals {
        grad_x: g.gx.norm(),
        grad_z: g.gz.norm(),
        ineq_violation: ineq_violation.max(0.0),
        complementarity: s.y().dot(&g.gy).abs(),
        y_negativity: s.y().iter().fold(0.0_f64, |acc, &v| acc.max(-v)),
    };
    Ok((res.max() <= tol, res))
}

const NEWTON_MAX_ITERS: usize = 300;

/// Solve the first-order saddle conditions.
///
/// With p = 0 this is damped Newton on the KKT system
/// `∇f(x) + Aᵀz = 0, Ax = b`; the result is a singleton when A has full row
/// rank and otherwise the affine set `{x*} × (z₀ + ker Aᵀ)` with
/// `z₀ = −(Aᵀ)†∇f(x*)`. With p > 0 a damped semismooth Newton method is run
/// on the complementarity reformulation `min(y, −∇_yF) = 0`.
pub fn solve_saddle(prog: &ConstrainedProgram, tol: f64) -> Result<SaddleSet> {
    if prog.p() == 0 {
        solve_equality_constrained(prog, tol)
    } else {
        solve_with_inequalities(prog, tol)
    }
}

fn kkt_residual(prog: &ConstrainedProgram, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    let (n, m) = (prog.n(), prog.m());
    let mut r = DVector::zeros(n + m);
    let mut gx = prog.objective().gradient(x);
    if m > 0 {
        gx += prog.a().transpose() * z;
        r.rows_mut(n, m).copy_from(&(prog.a() * x - prog.b()));
    }
    r.rows_mut(0, n).copy_from(&gx);
    r
}

fn solve_equality_constrained(prog: &ConstrainedProgram, tol: f64) -> Result<SaddleSet> {
    let (n, m) = (prog.n(), prog.m());
    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut residual = kkt_residual(prog, &x, &z);
    let mut converged = residual.norm() <= tol;

    for _ in 0..NEWTON_MAX_ITERS {
        if converged {
            break;
        }
        let hxx = prog
            .objective()
            .hessian(&x)
            .or_else(|_| nudge_off_locus(prog, &x))?;
        let mut jac = DMatrix::zeros(n + m, n + m);
        jac.view_mut((0, 0), (n, n)).copy_from(&hxx);
        if m > 0 {
            jac.view_mut((0, n), (n, m))
                .copy_from(&prog.a().transpose());
            jac.view_mut((n, 0), (m, n)).copy_from(prog.a());
        }
        // minimum-norm step handles rank-deficient A
        let step = linalg::svd_solve(&jac, &(-&residual));
        let mut alpha = 1.0;
        let base_norm = residual.norm();
        let mut accepted = false;
        for _ in 0..40 {
            let xt = &x + step.rows(0, n) * alpha;
            let zt = &z + step.rows(n, m) * alpha;
            let rt = kkt_residual(prog, &xt, &zt);
            if rt.norm() < base_norm * (1.0 - 1e-4 * alpha) || rt.norm() <= tol {
                x = xt;
                z = zt;
                residual = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        converged = residual.norm() <= tol;
    }
    if !converged {
        return Err(Error::NewtonNoConvergence {
            residual: residual.norm(),
            iters: NEWTON_MAX_ITERS,
        });
    }

    if m == 0 || linalg::rank(prog.a()) == m {
        Ok(SaddleSet::Singleton(SaddleState::xz(x, z)))
    } else {
        let grad_fx = prog.objective().gradient(&x);
        let z0 = -(linalg::pinv(&prog.a().transpose()) * grad_fx);
        let kernel_basis = linalg::kernel_basis_of_transpose(prog.a());
        Ok(SaddleSet::AffineXStar {
            x_star: x,
            z0,
            kernel_basis,
        })
    }
}

// Hessian evaluation directly on a non-smooth locus during iteration: move
// the query point off the locus rather than failing the whole solve.
fn nudge_off_locus(prog: &ConstrainedProgram, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mut xs = x.clone();
    xs[0] += 1e-9 * (1.0 + x.norm());
    prog.objective().hessian(&xs)
}

fn semismooth_residual(prog: &ConstrainedProgram, s: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let x = DVector::from(s.rows(0, n));
    let y = DVector::from(s.rows(n, p));
    let z = DVector::from(s.rows(n + p, m));
    // gradients are defined for arbitrary y sign; build them directly
    let mut gx = prog.objective().gradient(&x);
    for (j, row) in prog.ineq().iter().enumerate() {
        gx += &row.w * y[j];
    }
    if m > 0 {
        gx += prog.a().transpose() * &z;
    }
    let mut r = DVector::zeros(n + p + m);
    r.rows_mut(0, n).copy_from(&gx);
    for (j, row) in prog.ineq().iter().enumerate() {
        // min(y_j, -g_j(x)) = 0 encodes y ≥ 0, g ≤ 0, complementarity
        r[n + j] = y[j].min(-row.value(&x));
    }
    if m > 0 {
        r.rows_mut(n + p, m).copy_from(&(prog.a() * &x - prog.b()));
    }
    Ok(r)
}

fn solve_with_inequalities(prog: &ConstrainedProgram, tol: f64) -> Result<SaddleSet> {
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let dim = n + p + m;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5add1e);
    let mut best: Option<(DVector<f64>, f64)> = None;

    for attempt in 0..4 {
        let mut s: DVector<f64> = if attempt == 0 {
            DVector::zeros(dim)
        } else {
            DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))
        };
        let mut residual = semismooth_residual(prog, &s)?;
        for _ in 0..NEWTON_MAX_ITERS {
            if residual.norm() <= tol {
                break;
            }
            let x = DVector::from(s.rows(0, n));
            let y = DVector::from(s.rows(n, p));
            let hxx = prog
                .objective()
                .hessian(&x)
                .or_else(|_| nudge_off_locus(prog, &x))?;
            let mut jac = DMatrix::zeros(dim, dim);
            jac.view_mut((0, 0), (n, n)).copy_from(&hxx);
            for (j, row) in prog.ineq().iter().enumerate() {
                // d gx / d y_j
                jac.view_mut((0, n + j), (n, 1)).copy_from(&row.w);
                // generalized derivative of min(y_j, -g_j)
                if y[j] <= -row.value(&x) {
                    jac[(n + j, n + j)] = 1.0;
                } else {
                    jac.view_mut((n + j, 0), (1, n))
                        .copy_from(&(-row.w.transpose()));
                }
            }
            if m > 0 {
                jac.view_mut((0, n + p), (n, m))
                    .copy_from(&prog.a().transpose());
                jac.view_mut((n + p, 0), (m, n)).copy_from(prog.a());
            }
            let step = linalg::svd_solve(&jac, &(-&residual));
            let base_norm = residual.norm();
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let st = &s + &step * alpha;
                let rt = semismooth_residual(prog, &st)?;
                if rt.norm() < base_norm * (1.0 - 1e-4 * alpha) || rt.norm() <= tol {
                    s = st;
                    residual = rt;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let rn = residual.norm();
        if best.as_ref().is_none_or(|(_, b)| rn < *b) {
            best = Some((s.clone(), rn));
        }
        if rn <= tol {
            break;
        }
    }

    let (mut s, rn) = best.expect("at least one attempt ran");
    if rn > tol {
        return Err(Error::NewtonNoConvergence {
            residual: rn,
            iters: NEWTON_MAX_ITERS,
        });
    }
    // rows that converged on the multiplier branch of min(y, −g) assert
    // y_j = 0 exactly; snap the stray ±ε so complementarity holds in floats
    {
        let x = DVector::from(s.rows(0, n));
        for (j, row) in prog.ineq().iter().enumerate() {
            if s[n + j] <= -row.value(&x) {
                s[n + j] = 0.0;
            }
        }
    }
    let point = SaddleState::from_vector_clamped(n, p, m, &s);
    Ok(SaddleSet::Singleton(point))
}

/// Averaged curvature matrix along the segment from `anchor` to `s`:
/// Gauss–Legendre quadrature of the block matrix with x-block −∇ₓₓF and the
/// (y,z)-block of second derivatives in (y,z).
#[derive(Debug, Clone)]
pub struct Hbar {
    pub matrix: DMatrix<f64>,
    /// Quadrature nodes that had to be shifted off a non-smooth locus.
    pub shifted_nodes: usize,
}

impl Hbar {
    /// x-block of the quadrature with the sign flipped back, i.e. the
    /// averaged ∇ₓₓF along the segment.
    pub fn avg_fxx(&self, n: usize) -> DMatrix<f64> {
        -DMatrix::from(self.matrix.view((0, 0), (n, n)))
    }

    /// Lower-right (y,z) curvature block of the quadrature.
    pub fn yz_block(&self, n: usize) -> DMatrix<f64> {
        let k = self.matrix.nrows() - n;
        DMatrix::from(self.matrix.view((n, n), (k, k)))
    }
}

fn h_matrix_at(prog: &ConstrainedProgram, s: &SaddleState) -> Result<DMatrix<f64>> {
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let blocks = hessian_blocks(prog, s)?;
    let dim = n + p + m;
    let mut h = DMatrix::zeros(dim, dim);
    h.view_mut((0, 0), (n, n)).copy_from(&(-&blocks.fxx));
    if p > 0 {
        h.view_mut((n, n), (p, p)).copy_from(&blocks.fyy);
    }
    if p > 0 && m > 0 {
        h.view_mut((n, n + p), (p, m)).copy_from(&blocks.fyz);
        h.view_mut((n + p, n), (m, p))
            .copy_from(&blocks.fyz.transpose());
    }
    if m > 0 {
        h.view_mut((n + p, n + p), (m, m)).copy_from(&blocks.fzz);
    }
    Ok(h)
}

/// Composite Gauss–Legendre quadrature of the curvature block matrix along
/// the straight segment from `anchor` to `s`.
///
/// A node that lands on a flagged non-smooth locus is shifted slightly along
/// the segment; the count of shifted nodes is reported. Exact for the
/// polynomial Hessians of quadratic objectives at any order ≥ 1.
pub fn hbar(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    anchor: &SaddleState,
    quad_n: usize,
) -> Result<Hbar> {
    if quad_n == 0 {
        return Err(Error::Config("quadrature order must be ≥ 1".into()));
    }
    prog.check_state_dims(s)?;
    prog.check_state_dims(anchor)?;
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let dim = n + p + m;
    let sv = s.to_vector();
    let av = anchor.to_vector();
    let delta = &sv - &av;
    let mut acc = DMatrix::zeros(dim, dim);
    let mut shifted = 0usize;
    for (t, w) in linalg::gauss_legendre_01(quad_n) {
        let mut tt = t;
        let mut point = SaddleState::from_vector_clamped(n, p, m, &(&av + &delta * tt));
        if prog.objective().is_nonsmooth_at(point.x()) {
            shifted += 1;
            let mut ok = false;
            for step in [1e-9, -2e-9, 1e-7, -2e-7] {
                tt += step;
                point = SaddleState::from_vector_clamped(n, p, m, &(&av + &delta * tt));
                if !prog.objective().is_nonsmooth_at(point.x()) {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::NonSmooth(
                    "quadrature node could not be shifted off the non-smooth locus".into(),
                ));
            }
        }
        acc += h_matrix_at(prog, &point)? * w;
    }
    Ok(Hbar {
        matrix: acc,
        shifted_nodes: shifted,
    })
}

/// Test whether the displacement from every anchor of the saddle set lies in
/// the kernel of the averaged curvature matrix, within `tol` relative to the
/// displacement norm.
pub fn omega_limit_test(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    sdl: &SaddleSet,
    quad_n: usize,
    tol: f64,
) -> Result<bool> {
    for anchor in sdl.anchor_sample() {
        let d = s.to_vector() - anchor.to_vector();
        let dn = d.norm();
        if dn <= 1e-14 {
            continue;
        }
        let hb = hbar(prog, s, &anchor, quad_n)?;
        if (&hb.matrix * &d).norm() > tol * dn {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Eigenvalue threshold below which a quadrature block is not considered
/// sign-definite.
const DEFINITENESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CurvatureConditions {
    /// The averaged ∇ₓₓF was positive definite at every sample.
    pub holds_i: bool,
    /// The averaged (y,z) curvature block was negative definite at every
    /// sample (vacuously false when the block is identically zero).
    pub holds_ii: bool,
    pub samples_used: usize,
    pub skipped_nonsmooth: usize,
}

impl CurvatureConditions {
    pub fn neither(&self) -> bool {
        !self.holds_i && !self.holds_ii
    }
}

/// Sample `sample_k` points in the ball of given radius around `anchor`
/// (intersected with the domain) and test the sign-definiteness of the two
/// averaged curvature blocks along segments from the anchor.
pub fn check_curvature_conditions(
    prog: &ConstrainedProgram,
    anchor: &SaddleState,
    radius: f64,
    sample_k: usize,
    quad_n: usize,
    seed: u64,
) -> Result<CurvatureConditions> {
    if radius <= 0.0 {
        return Err(Error::Config(format!("radius must be > 0 (got {radius})")));
    }
    prog.check_state_dims(anchor)?;
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let dim = n + p + m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut holds_i = true;
    let mut holds_ii = p + m > 0;
    let mut skipped = 0usize;
    let mut used = 0usize;
    let av = anchor.to_vector();
    for _ in 0..sample_k {
        // uniform direction, radius scaled for uniformity in the ball;
        // clamping y afterwards keeps the point in both ball and domain
        let mut dir = DVector::from_fn(dim, |_, _| {
            let u: f64 = rng.gen::<f64>() * 2.0 - 1.0;
            u
        });
        let dn = dir.norm();
        if dn < 1e-12 {
            continue;
        }
        dir /= dn;
        let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
        let sample = SaddleState::from_vector_clamped(n, p, m, &(&av + dir * r));
        match hbar(prog, &sample, anchor, quad_n) {
            Ok(hb) => {
                used += 1;
                if linalg::lambda_min_sym(&hb.avg_fxx(n)) <= DEFINITENESS_TOL {
                    holds_i = false;
                }
                if p + m > 0 && linalg::lambda_max_sym(&hb.yz_block(n)) >= -DEFINITENESS_TOL {
                    holds_ii = false;
                }
            }
            Err(Error::NonSmooth(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
        if !holds_i && !holds_ii {
            break;
        }
    }
    Ok(CurvatureConditions {
        holds_i,
        holds_ii,
        samples_used: used,
        skipped_nonsmooth: skipped,
    })
}
