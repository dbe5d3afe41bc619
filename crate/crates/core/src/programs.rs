//! Built-in demonstration programs used by the CLI scenarios and the test
//! suites.

use nalgebra::{DMatrix, DVector};

use crate::problem::{AffineIneq, BuiltinObjective, ConstrainedProgram, Curvature, ObjectiveSpec};

/// Piecewise quartic/linear objective on R² with one inequality
/// `−x₁ − 1 ≤ 0` and one equality `x₁ − x₂ = 0`.
///
/// The unique saddle point of the Lagrangian is the origin. The objective is
/// convex and C¹ but not strongly convex (its Hessian vanishes at 0), so no
/// curvature constants are declared.
pub fn example44() -> ConstrainedProgram {
    ConstrainedProgram::new(
        2,
        ObjectiveSpec::Builtin(BuiltinObjective::PiecewiseQuarticLinear),
        vec![AffineIneq {
            w: DVector::from_column_slice(&[-1.0, 0.0]),
            offset: -1.0,
        }],
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        DVector::from_column_slice(&[0.0]),
        None,
    )
    .expect("valid builtin program")
}

/// Equality-constrained program with `f(x) = x₁² + (x₂ − 2)²` and a rank-one
/// constraint matrix, so the saddle set is the affine continuum
/// `{(1,1)} × ((0,2) + span{(1,1)})`.
///
/// `∇²f = 2I`, so m = M = 2 and the Hessian is constant (L = 0).
pub fn iss_example() -> ConstrainedProgram {
    let q = DMatrix::identity(2, 2) * 2.0;
    let c = DVector::from_column_slice(&[0.0, -4.0]);
    ConstrainedProgram::equality_constrained(
        2,
        ObjectiveSpec::quadratic(q, c, 4.0).expect("symmetric"),
        DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
        DVector::from_column_slice(&[0.0, 0.0]),
        Some(Curvature::new(2.0, 2.0, 0.0).expect("valid bounds")),
    )
    .expect("valid builtin program")
}

/// Equality-constrained program with `f(x) = ‖x‖²` on R³ and the full-row-rank
/// constraint `x₁ + x₂ + x₃ = 1`; its saddle set is the singleton
/// `((1/3, 1/3, 1/3), −2/3)`.
pub fn selftrig_example() -> ConstrainedProgram {
    let q = DMatrix::identity(3, 3) * 2.0;
    ConstrainedProgram::equality_constrained(
        3,
        ObjectiveSpec::quadratic(q, DVector::zeros(3), 0.0).expect("symmetric"),
        DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
        DVector::from_column_slice(&[1.0]),
        Some(Curvature::new(2.0, 2.0, 0.0).expect("valid bounds")),
    )
    .expect("valid builtin program")
}

/// Look up a builtin program by its scenario identifier.
pub fn by_name(name: &str) -> Option<ConstrainedProgram> {
    match name {
        "example44" => Some(example44()),
        "iss_example" => Some(iss_example()),
        "selftrig_example" => Some(selftrig_example()),
        _ => None,
    }
}

/// Names accepted by [`by_name`].
pub const BUILTIN_NAMES: [&str; 3] = ["example44", "iss_example", "selftrig_example"];
