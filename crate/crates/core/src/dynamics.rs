//! Saddle-point vector fields: the projected dynamics on
//! Rⁿ × R^p_{≥0} × Rᵐ, the smooth equality-constrained specialization, and
//! additively disturbed variants.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{grad_blocks, ConstrainedProgram, SaddleState};

/// Two-case projection `[a]_b⁺`: `a` when `b > 0`, `max{0, a}` when `b = 0`.
pub fn project_rate(a: f64, b: f64) -> Result<f64> {
    if b < 0.0 {
        return Err(Error::Domain(format!(
            "projection base b = {b} is negative"
        )));
    }
    Ok(project_rate_unchecked(a, b))
}

#[inline]
pub(crate) fn project_rate_unchecked(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a
    } else {
        a.max(0.0)
    }
}

/// Componentwise `[a]_b⁺`.
pub fn project_rate_vec(a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            block: "projection",
            expected: a.len(),
            got: b.len(),
        });
    }
    if let Some(j) = (0..b.len()).find(|&j| b[j] < 0.0) {
        return Err(Error::Domain(format!(
            "projection base b[{j}] = {} is negative",
            b[j]
        )));
    }
    Ok(DVector::from_fn(a.len(), |j, _| {
        project_rate_unchecked(a[j], b[j])
    }))
}

/// Which vector field drives an evaluation or a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSel {
    /// Projected dynamics on Rⁿ × R^p_{≥0} × Rᵐ.
    Projected,
    /// Smooth equality-constrained dynamics (requires p = 0).
    Smooth,
}

/// State derivative (ẋ, ẏ, ż).
#[derive(Debug, Clone)]
pub struct RateVector {
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
    pub dz: DVector<f64>,
}

impl RateVector {
    pub fn norm(&self) -> f64 {
        (self.dx.norm_squared() + self.dy.norm_squared() + self.dz.norm_squared()).sqrt()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dx.len() + self.dy.len() + self.dz.len());
        v.rows_mut(0, self.dx.len()).copy_from(&self.dx);
        v.rows_mut(self.dx.len(), self.dy.len()).copy_from(&self.dy);
        v.rows_mut(self.dx.len() + self.dy.len(), self.dz.len())
            .copy_from(&self.dz);
        v
    }
}

/// Projected saddle-point field: gradient descent in x, projected gradient
/// ascent in y over the nonnegative orthant, gradient ascent in z.
///
/// The rate satisfies the admissibility invariant: whenever `y_j = 0` the
/// component `dy_j` is nonnegative, so the domain is invariant.
pub fn psp_field(prog: &ConstrainedProgram, s: &SaddleState) -> Result<RateVector> {
    // SaddleState enforces y ≥ 0 at construction; re-check cheaply to give a
    // domain error rather than a silent wrong projection.
    if let Some(j) = (0..s.y().len()).find(|&j| s.y()[j] < 0.0) {
        return Err(Error::Domain(format!(
            "state outside domain: y[{j}] = {}",
            s.y()[j]
        )));
    }
    let g = grad_blocks(prog, s)?;
    let dy = DVector::from_fn(g.gy.len(), |j, _| project_rate_unchecked(g.gy[j], s.y()[j]));
    Ok(RateVector {
        dx: -g.gx,
        dy,
        dz: g.gz,
    })
}

/// Smooth saddle-point field for equality-constrained programs:
/// ẋ = −∇f(x) − Aᵀz, ż = Ax − b. Requires p = 0.
pub fn sp_field(prog: &ConstrainedProgram, s: &SaddleState) -> Result<RateVector> {
    if prog.p() != 0 {
        return Err(Error::Misuse(format!(
            "sp_field requires a program without inequality constraints (p = {})",
            prog.p()
        )));
    }
    let g = grad_blocks(prog, s)?;
    Ok(RateVector {
        dx: -g.gx,
        dy: DVector::zeros(0),
        dz: g.gz,
    })
}

/// Disturbance signal shapes. All signals are deterministic functions of
/// time so experiments replay exactly.
#[derive(Debug, Clone)]
pub enum DisturbanceKind {
    Zero,
    /// `u(t) = amplitude · e^(−rate·t)`, componentwise.
    ExpDecay {
        amplitude: DVector<f64>,
        rate: f64,
    },
    /// `u(t) = offset + amplitude · sin(freq·t)`, componentwise.
    ConstPlusSin {
        offset: DVector<f64>,
        amplitude: DVector<f64>,
        freq: f64,
    },
}

/// Additive disturbance acting on the x- and z-channels of the smooth
/// dynamics (the y-channel is never disturbed).
///
/// When `structured` is set, the raw z-part of the signal is interpreted as
/// ũ_z ∈ Rⁿ and the z-channel receives `A·ũ_z` — never raw ũ_z.
#[derive(Debug, Clone)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub structured: bool,
}

impl DisturbanceSpec {
    pub fn zero() -> Self {
        DisturbanceSpec {
            kind: DisturbanceKind::Zero,
            structured: false,
        }
    }
}

/// A disturbance compiled against a specific program (dimensions checked,
/// structure matrix captured).
#[derive(Debug, Clone)]
pub struct Disturbance {
    kind: DisturbanceKind,
    /// `Some(A)` when the z-channel input is A·ũ_z.
    structure: Option<DMatrix<f64>>,
    n: usize,
    m: usize,
}

impl Disturbance {
    pub(crate) fn new(
        kind: DisturbanceKind,
        structure: Option<DMatrix<f64>>,
        n: usize,
        m: usize,
    ) -> Self {
        Disturbance {
            kind,
            structure,
            n,
            m,
        }
    }

    fn raw(&self, t: f64) -> DVector<f64> {
        let len = self.n
            + if self.structure.is_some() {
                self.n
            } else {
                self.m
            };
        match &self.kind {
            DisturbanceKind::Zero => DVector::zeros(len),
            DisturbanceKind::ExpDecay { amplitude, rate } => amplitude * (-rate * t).exp(),
            DisturbanceKind::ConstPlusSin {
                offset,
                amplitude,
                freq,
            } => offset + amplitude * (freq * t).sin(),
        }
    }

    /// Sample the disturbance at time `t`, returning `(u_x, u_z)` with the
    /// structure map already applied.
    pub fn sample(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let raw = self.raw(t);
        let ux = DVector::from_iterator(self.n, raw.rows(0, self.n).iter().copied());
        let uz = match &self.structure {
            None => DVector::from_iterator(self.m, raw.rows(self.n, self.m).iter().copied()),
            Some(a) => {
                let utz = DVector::from_iterator(self.n, raw.rows(self.n, self.n).iter().copied());
                a * utz
            }
        };
        (ux, uz)
    }

    /// Upper bound on `sup_t ‖(u_x(t), u_z(t))‖`: zero for the zero signal,
    /// ‖amplitude‖ for exponential decay, ‖offset‖ + ‖amplitude‖ for
    /// constant-plus-sinusoid, with the structured z-part scaled by ‖A‖.
    pub fn sup_norm_bound(&self) -> f64 {
        let channel_bounds = |v: &DVector<f64>| -> (f64, f64) {
            let bx = v.rows(0, self.n).norm();
            let rest = v.len() - self.n;
            let bz_raw = v.rows(self.n, rest).norm();
            let bz = match &self.structure {
                None => bz_raw,
                Some(a) => crate::linalg::norm2(a) * bz_raw,
            };
            (bx, bz)
        };
        match &self.kind {
            DisturbanceKind::Zero => 0.0,
            DisturbanceKind::ExpDecay { amplitude, .. } => {
                let (bx, bz) = channel_bounds(amplitude);
                (bx * bx + bz * bz).sqrt()
            }
            DisturbanceKind::ConstPlusSin {
                offset, amplitude, ..
            } => {
                let (ox, oz) = channel_bounds(offset);
                let (ax, az) = channel_bounds(amplitude);
                (ox * ox + oz * oz).sqrt() + (ax * ax + az * az).sqrt()
            }
        }
    }

    pub fn is_structured(&self) -> bool {
        self.structure.is_some()
    }
}

/// Smooth field plus the disturbance sampled at time `t`. Requires p = 0.
pub fn disturbed_field(
    prog: &ConstrainedProgram,
    s: &SaddleState,
    dist: &Disturbance,
    t: f64,
) -> Result<RateVector> {
    let mut rate = sp_field(prog, s)?;
    let (ux, uz) = dist.sample(t);
    if ux.len() != prog.n() || uz.len() != prog.m() {
        return Err(Error::DimensionMismatch {
            block: "disturbance",
            expected: prog.n() + prog.m(),
            got: ux.len() + uz.len(),
        });
    }
    rate.dx += ux;
    rate.dz += uz;
    Ok(rate)
}
