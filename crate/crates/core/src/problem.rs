//! Saddle-function model: convex objectives with analytic derivatives, affine
//! constraint data, and the Lagrangian
//!
//! ```text
//! F(x, y, z) = f(x) + yᵀ g(x) + zᵀ (A x − b)
//! ```
//!
//! on the domain Rⁿ × R^p_{≥0} × Rᵐ. All operations are pure functions of
//! their inputs and safe to call concurrently.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// Half-width of the band around a declared non-smooth locus inside which
/// Hessian evaluation is refused.
pub const NONSMOOTH_EPS: f64 = 1e-12;

/// Built-in non-quadratic objectives. The registry is deliberately small:
/// a general expression language is out of scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinObjective {
    /// `f(x) = ‖x‖⁴` for `‖x‖ ≤ 1/2` and `1/16 + (‖x‖ − 1/2)/2` beyond.
    ///
    /// C¹ everywhere with matched gradient at the seam `‖x‖ = 1/2`; the
    /// Hessian is discontinuous exactly on that sphere, which is the only
    /// flagged non-smooth locus.
    PiecewiseQuarticLinear,
}

impl BuiltinObjective {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinObjective::PiecewiseQuarticLinear => "piecewise_quartic_linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "piecewise_quartic_linear" => Some(BuiltinObjective::PiecewiseQuarticLinear),
            _ => None,
        }
    }

    pub fn value(self, x: &DVector<f64>) -> f64 {
        match self {
            BuiltinObjective::PiecewiseQuarticLinear => {
                let r = x.norm();
                if r <= 0.5 {
                    r.powi(4)
                } else {
                    1.0 / 16.0 + 0.5 * (r - 0.5)
                }
            }
        }
    }

    pub fn gradient(self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            BuiltinObjective::PiecewiseQuarticLinear => {
                let r = x.norm();
                if r <= 0.5 {
                    x * (4.0 * r * r)
                } else {
                    x * (0.5 / r)
                }
            }
        }
    }

    /// Analytic Hessian; errors on the flagged non-smooth locus.
    pub fn hessian(self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            BuiltinObjective::PiecewiseQuarticLinear => {
                let n = x.len();
                let r = x.norm();
                if self.is_nonsmooth_at(x) {
                    return Err(Error::NonSmooth(format!(
                        "{} Hessian is undefined at ‖x‖ = 1/2 (got ‖x‖ = {r})",
                        self.name()
                    )));
                }
                if r < 0.5 {
                    // ∇²(r⁴) = 4r²I + 8xxᵀ
                    let mut h = DMatrix::identity(n, n) * (4.0 * r * r);
                    h += 8.0 * x * x.transpose();
                    Ok(h)
                } else {
                    // ∇²(r/2) = (I − x̂x̂ᵀ) / (2r)
                    let xh = x / r;
                    let h = (DMatrix::identity(n, n) - &xh * xh.transpose()) / (2.0 * r);
                    Ok(h)
                }
            }
        }
    }

    pub fn is_nonsmooth_at(self, x: &DVector<f64>) -> bool {
        match self {
            BuiltinObjective::PiecewiseQuarticLinear => (x.norm() - 0.5).abs() <= NONSMOOTH_EPS,
        }
    }
}

/// Objective specification: dense quadratic `½xᵀQx + cᵀx + d` or a named
/// builtin.
#[derive(Debug, Clone)]
pub enum ObjectiveSpec {
    Quadratic {
        q: DMatrix<f64>,
        c: DVector<f64>,
        d: f64,
    },
    Builtin(BuiltinObjective),
}

impl ObjectiveSpec {
    pub fn quadratic(q: DMatrix<f64>, c: DVector<f64>, d: f64) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::DimensionMismatch {
                block: "Q",
                expected: q.nrows(),
                got: q.ncols(),
            });
        }
        if c.len() != q.nrows() {
            return Err(Error::DimensionMismatch {
                block: "c",
                expected: q.nrows(),
                got: c.len(),
            });
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * q.amax().max(1.0) {
            return Err(Error::Domain(format!(
                "quadratic objective matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        Ok(ObjectiveSpec::Quadratic { q, c, d })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            ObjectiveSpec::Quadratic { q, c, d } => 0.5 * (x.transpose() * q * x)[0] + c.dot(x) + d,
            ObjectiveSpec::Builtin(b) => b.value(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ObjectiveSpec::Quadratic { q, c, .. } => q * x + c,
            ObjectiveSpec::Builtin(b) => b.gradient(x),
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            ObjectiveSpec::Quadratic { q, .. } => Ok(q.clone()),
            ObjectiveSpec::Builtin(b) => b.hessian(x),
        }
    }

    pub fn is_nonsmooth_at(&self, x: &DVector<f64>) -> bool {
        match self {
            ObjectiveSpec::Quadratic { .. } => false,
            ObjectiveSpec::Builtin(b) => b.is_nonsmooth_at(x),
        }
    }
}

/// One affine inequality row `g_j(x) = wᵀx + offset ≤ 0`.
#[derive(Debug, Clone)]
pub struct AffineIneq {
    pub w: DVector<f64>,
    pub offset: f64,
}

impl AffineIneq {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.w.dot(x) + self.offset
    }
}

/// Declared curvature bounds on the objective: `m_lb·I ⪯ ∇²f(x) ⪯ M_ub·I`
/// everywhere and `x ↦ ∇²f(x)` Lipschitz with constant `l_hess`.
///
/// The bounds are user-declared hypotheses, spot-verifiable via
/// [`spot_check_curvature`], not derived symbolically.
#[derive(Debug, Clone, Copy)]
pub struct Curvature {
    pub m_lb: f64,
    pub m_ub: f64,
    pub l_hess: f64,
}

impl Curvature {
    pub fn new(m_lb: f64, m_ub: f64, l_hess: f64) -> Result<Self> {
        if !m_lb.is_finite() || m_lb <= 0.0 {
            return Err(Error::Config(format!("m_lb must be > 0 (got {m_lb})")));
        }
        if m_ub < m_lb {
            return Err(Error::Config(format!(
                "curvature bounds must satisfy m_lb ≤ M_ub (got {m_lb} > {m_ub})"
            )));
        }
        if l_hess < 0.0 {
            return Err(Error::Config(format!("L_hess must be ≥ 0 (got {l_hess})")));
        }
        Ok(Curvature { m_lb, m_ub, l_hess })
    }
}

/// A constrained program `min f(x) s.t. g(x) ≤ 0, Ax = b` together with the
/// data defining its Lagrangian saddle function.
#[derive(Debug, Clone)]
pub struct ConstrainedProgram {
    objective: ObjectiveSpec,
    ineq: Vec<AffineIneq>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    curvature: Option<Curvature>,
    n: usize,
}

impl ConstrainedProgram {
    pub fn new(
        n: usize,
        objective: ObjectiveSpec,
        ineq: Vec<AffineIneq>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        curvature: Option<Curvature>,
    ) -> Result<Self> {
        if let ObjectiveSpec::Quadratic { q, .. } = &objective {
            if q.nrows() != n {
                return Err(Error::DimensionMismatch {
                    block: "Q",
                    expected: n,
                    got: q.nrows(),
                });
            }
        }
        for (j, row) in ineq.iter().enumerate() {
            if row.w.len() != n {
                let _ = j;
                return Err(Error::DimensionMismatch {
                    block: "g_rows",
                    expected: n,
                    got: row.w.len(),
                });
            }
        }
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                block: "b",
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if a.nrows() > 0 && a.ncols() != n {
            return Err(Error::DimensionMismatch {
                block: "A",
                expected: n,
                got: a.ncols(),
            });
        }
        let a = if a.nrows() == 0 {
            DMatrix::zeros(0, n)
        } else {
            a
        };
        Ok(ConstrainedProgram {
            objective,
            ineq,
            a,
            b,
            curvature,
            n,
        })
    }

    /// Equality-constrained program (no inequality block).
    pub fn equality_constrained(
        n: usize,
        objective: ObjectiveSpec,
        a: DMatrix<f64>,
        b: DVector<f64>,
        curvature: Option<Curvature>,
    ) -> Result<Self> {
        Self::new(n, objective, Vec::new(), a, b, curvature)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.ineq.len()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn objective(&self) -> &ObjectiveSpec {
        &self.objective
    }

    pub fn ineq(&self) -> &[AffineIneq] {
        &self.ineq
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn curvature(&self) -> Option<Curvature> {
        self.curvature
    }

    /// Induced 2-norm of the equality constraint matrix.
    pub fn norm_a(&self) -> f64 {
        linalg::norm2(&self.a)
    }

    pub(crate) fn check_state_dims(&self, s: &SaddleState) -> Result<()> {
        if s.x().len() != self.n {
            return Err(Error::DimensionMismatch {
                block: "x",
                expected: self.n,
                got: s.x().len(),
            });
        }
        if s.y().len() != self.p() {
            return Err(Error::DimensionMismatch {
                block: "y",
                expected: self.p(),
                got: s.y().len(),
            });
        }
        if s.z().len() != self.m() {
            return Err(Error::DimensionMismatch {
                block: "z",
                expected: self.m(),
                got: s.z().len(),
            });
        }
        Ok(())
    }
}

/// A point (x, y, z) ∈ Rⁿ × R^p_{≥0} × Rᵐ. The nonnegativity of `y` is a
/// construction invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleState {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
}

impl SaddleState {
    pub fn new(x: DVector<f64>, y: DVector<f64>, z: DVector<f64>) -> Result<Self> {
        if let Some(j) = (0..y.len()).find(|&j| y[j] < 0.0) {
            return Err(Error::Domain(format!(
                "multiplier y[{j}] = {} is negative",
                y[j]
            )));
        }
        Ok(SaddleState { x, y, z })
    }

    /// State with empty inequality block, for programs with p = 0.
    pub fn xz(x: DVector<f64>, z: DVector<f64>) -> Self {
        SaddleState {
            x,
            y: DVector::zeros(0),
            z,
        }
    }

    pub fn from_slices(x: &[f64], y: &[f64], z: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(x),
            DVector::from_column_slice(y),
            DVector::from_column_slice(z),
        )
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x.len(), self.y.len(), self.z.len())
    }

    /// Concatenation (x; y; z).
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.x.len() + self.y.len() + self.z.len());
        v.rows_mut(0, self.x.len()).copy_from(&self.x);
        v.rows_mut(self.x.len(), self.y.len()).copy_from(&self.y);
        v.rows_mut(self.x.len() + self.y.len(), self.z.len())
            .copy_from(&self.z);
        v
    }

    /// Rebuild a state from a concatenated vector, clamping y to the domain.
    pub fn from_vector_clamped(n: usize, p: usize, m: usize, v: &DVector<f64>) -> Self {
        debug_assert_eq!(v.len(), n + p + m);
        let x = DVector::from_iterator(n, v.rows(0, n).iter().copied());
        let y = DVector::from_iterator(p, v.rows(n, p).iter().map(|&t| t.max(0.0)));
        let z = DVector::from_iterator(m, v.rows(n + p, m).iter().copied());
        SaddleState { x, y, z }
    }

    // Internal constructor that bypasses the y ≥ 0 invariant; used by
    // finite-difference probes that evaluate the algebraic formulas just
    // outside the domain.
    pub(crate) fn from_vector_unclamped(n: usize, p: usize, m: usize, v: &DVector<f64>) -> Self {
        debug_assert_eq!(v.len(), n + p + m);
        SaddleState {
            x: DVector::from_iterator(n, v.rows(0, n).iter().copied()),
            y: DVector::from_iterator(p, v.rows(n, p).iter().copied()),
            z: DVector::from_iterator(m, v.rows(n + p, m).iter().copied()),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared() + self.z.norm_squared()).sqrt()
    }

    pub fn distance_to(&self, other: &SaddleState) -> f64 {
        ((&self.x - &other.x).norm_squared()
            + (&self.y - &other.y).norm_squared()
            + (&self.z - &other.z).norm_squared())
        .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite())
            && self.z.iter().all(|v| v.is_finite())
    }
}

/// Gradient blocks of the Lagrangian at a state.
#[derive(Debug, Clone)]
pub struct GradBlocks {
    /// ∇ₓF = ∇f(x) + Dg(x)ᵀ y + Aᵀ z
    pub gx: DVector<f64>,
    /// ∇_y F = g(x)
    pub gy: DVector<f64>,
    /// ∇_z F = A x − b
    pub gz: DVector<f64>,
}

/// Second-derivative blocks of the Lagrangian at a state. The blocks not
/// listed are transposes of these.
#[derive(Debug, Clone)]
pub struct BlockHessian {
    /// ∇ₓₓF = ∇²f(x) + Σ_j y_j ∇²g_j(x) (the sum vanishes for affine g)
    pub fxx: DMatrix<f64>,
    /// ∇ₓᵧF = Dg(x)ᵀ, n×p
    pub fxy: DMatrix<f64>,
    /// ∇ₓ_zF = Aᵀ, n×m
    pub fxz: DMatrix<f64>,
    /// p×p, zero for the Lagrangian form
    pub fyy: DMatrix<f64>,
    /// p×m, zero for the Lagrangian form
    pub fyz: DMatrix<f64>,
    /// m×m, zero for the Lagrangian form
    pub fzz: DMatrix<f64>,
}

/// Lagrangian value F(x, y, z) = f(x) + yᵀg(x) + zᵀ(Ax − b).
///
/// With p = 0 this reduces to the equality-constrained saddle function
/// f(x) + zᵀ(Ax − b).
pub fn lagrangian_value(prog: &ConstrainedProgram, s: &SaddleState) -> Result<f64> {
    prog.check_state_dims(s)?;
    let mut val = prog.objective.value(s.x());
    for (j, row) in prog.ineq.iter().enumerate() {
        val += s.y()[j] * row.value(s.x());
    }
    if prog.m() > 0 {
        val += s.z().dot(&(&prog.a * s.x() - &prog.b));
    }
    Ok(val)
}

/// Analytic gradient blocks (∇ₓF, ∇_yF, ∇_zF).
pub fn grad_blocks(prog: &ConstrainedProgram, s: &SaddleState) -> Result<GradBlocks> {
    prog.check_state_dims(s)?;
    let mut gx = prog.objective.gradient(s.x());
    for (j, row) in prog.ineq.iter().enumerate() {
        gx += &row.w * s.y()[j];
    }
    if prog.m() > 0 {
        gx += prog.a.transpose() * s.z();
    }
    let gy = DVector::from_iterator(prog.p(), prog.ineq.iter().map(|row| row.value(s.x())));
    let gz = if prog.m() > 0 {
        &prog.a * s.x() - &prog.b
    } else {
        DVector::zeros(0)
    };
    Ok(GradBlocks { gx, gy, gz })
}

/// Analytic second-derivative blocks. Errors on a flagged non-smooth locus
/// of the objective.
pub fn hessian_blocks(prog: &ConstrainedProgram, s: &SaddleState) -> Result<BlockHessian> {
    prog.check_state_dims(s)?;
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let fxx = prog.objective.hessian(s.x())?;
    let mut fxy = DMatrix::zeros(n, p);
    for (j, row) in prog.ineq.iter().enumerate() {
        fxy.set_column(j, &row.w);
    }
    let fxz = prog.a.transpose();
    Ok(BlockHessian {
        fxx,
        fxy,
        fxz,
        fyy: DMatrix::zeros(p, p),
        fyz: DMatrix::zeros(p, m),
        fzz: DMatrix::zeros(m, m),
    })
}

/// Verify the declared curvature bounds against the analytic Hessian at
/// `samples` random points with coordinates in [-radius, radius].
pub fn spot_check_curvature(
    prog: &ConstrainedProgram,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<()> {
    let cur = prog
        .curvature()
        .ok_or_else(|| Error::Config("program declares no curvature constants".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-9 * cur.m_ub.max(1.0);
    for _ in 0..samples {
        let x = DVector::from_fn(prog.n(), |_, _| rng.gen_range(-radius..radius));
        if prog.objective.is_nonsmooth_at(&x) {
            continue;
        }
        let h = prog.objective.hessian(&x)?;
        let lo = linalg::lambda_min_sym(&h);
        let hi = linalg::lambda_max_sym(&h);
        if lo < cur.m_lb - tol || hi > cur.m_ub + tol {
            return Err(Error::Hypothesis(format!(
                "declared curvature [{}, {}] violated at a sample: spectrum [{lo:.6}, {hi:.6}]",
                cur.m_lb, cur.m_ub
            )));
        }
    }
    Ok(())
}
