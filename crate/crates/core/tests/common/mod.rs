//! Shared generators and oracles for the integration test suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use saddle_dynamics::problem::{
    grad_blocks, lagrangian_value, AffineIneq, ConstrainedProgram, Curvature, ObjectiveSpec,
    SaddleState,
};
use saddle_dynamics::saddle::SaddleSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random orthogonal matrix from the QR factorization of a Gaussian draw.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
        let qr = g.qr();
        let q = qr.q();
        if q.determinant().abs() > 0.5 {
            return q;
        }
    }
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Symmetric matrix with eigenvalues drawn uniformly from [lo, hi].
pub fn random_sym_with_spectrum(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let v = random_orthogonal(n, rng);
    let lam = DVector::from_fn(n, |_, _| rng.gen_range(lo..=hi));
    let mut d = DMatrix::zeros(n, n);
    d.set_diagonal(&lam);
    let m = &v * d * v.transpose();
    // symmetrize away roundoff
    (&m + m.transpose()) * 0.5
}

/// Random strongly convex equality-constrained QP with full-row-rank A.
/// Curvature constants are the exact spectral bounds of Q (L = 0).
pub fn random_eq_qp(n: usize, m: usize, rng: &mut ChaCha8Rng) -> ConstrainedProgram {
    assert!(m <= n);
    let q = random_sym_with_spectrum(n, 0.5, 3.0, rng);
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let a = loop {
        let a = DMatrix::from_fn(m, n, |_, _| gaussian(rng));
        let smin = a.clone().svd(false, false).singular_values.min();
        if smin > 0.4 {
            break a;
        }
    };
    let b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let ev = saddle_dynamics::linalg::sym_eigenvalues(&q);
    let cur = Curvature::new(ev[0], ev[n - 1], 0.0).unwrap();
    ConstrainedProgram::equality_constrained(
        n,
        ObjectiveSpec::quadratic(q, c, 0.0).unwrap(),
        a,
        b,
        Some(cur),
    )
    .unwrap()
}

/// Random strongly convex QP with affine inequalities (and optionally an
/// equality block), feasible by construction.
pub fn random_ineq_qp(n: usize, p: usize, m: usize, rng: &mut ChaCha8Rng) -> ConstrainedProgram {
    assert!(m <= n);
    let q = random_sym_with_spectrum(n, 0.5, 3.0, rng);
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let x_feas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let ineq = (0..p)
        .map(|_| {
            let w = DVector::from_fn(n, |_, _| gaussian(rng));
            // strictly feasible at x_feas, sometimes nearly active
            let slack = rng.gen_range(0.05..1.0);
            let offset = -w.dot(&x_feas) - slack;
            AffineIneq { w, offset }
        })
        .collect();
    let (a, b) = if m > 0 {
        let a = loop {
            let a = DMatrix::from_fn(m, n, |_, _| gaussian(rng));
            let smin = a.clone().svd(false, false).singular_values.min();
            if smin > 0.4 {
                break a;
            }
        };
        let b = &a * &x_feas;
        (a, b)
    } else {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    };
    let ev = saddle_dynamics::linalg::sym_eigenvalues(&q);
    let cur = Curvature::new(ev[0], ev[n - 1], 0.0).unwrap();
    ConstrainedProgram::new(
        n,
        ObjectiveSpec::quadratic(q, c, 0.0).unwrap(),
        ineq,
        a,
        b,
        Some(cur),
    )
    .unwrap()
}

pub fn random_state(prog: &ConstrainedProgram, scale: f64, rng: &mut ChaCha8Rng) -> SaddleState {
    SaddleState::new(
        DVector::from_fn(prog.n(), |_, _| rng.gen_range(-scale..scale)),
        DVector::from_fn(prog.p(), |_, _| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..scale)
            }
        }),
        DVector::from_fn(prog.m(), |_, _| rng.gen_range(-scale..scale)),
    )
    .unwrap()
}

/// Central-difference gradient of the Lagrangian, as one concatenated
/// vector over (x, y, z). Independent of the analytic gradient path.
pub fn fd_gradient(prog: &ConstrainedProgram, s: &SaddleState, h: f64) -> DVector<f64> {
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let dim = n + p + m;
    let base = s.to_vector();
    let eval = |v: &DVector<f64>| -> f64 {
        let st = state_from_unclamped(n, p, m, v);
        lagrangian_value(prog, &st).unwrap()
    };
    DVector::from_fn(dim, |i, _| {
        let mut vp = base.clone();
        let mut vm = base.clone();
        vp[i] += h;
        vm[i] -= h;
        (eval(&vp) - eval(&vm)) / (2.0 * h)
    })
}

/// Central differences of the analytic gradient: column `i` approximates
/// the `i`-th column of the full Hessian of F.
pub fn fd_hessian(prog: &ConstrainedProgram, s: &SaddleState, h: f64) -> DMatrix<f64> {
    let (n, p, m) = (prog.n(), prog.p(), prog.m());
    let dim = n + p + m;
    let base = s.to_vector();
    let grad = |v: &DVector<f64>| -> DVector<f64> {
        let st = state_from_unclamped(n, p, m, v);
        let g = grad_blocks(prog, &st).unwrap();
        let mut out = DVector::zeros(dim);
        out.rows_mut(0, n).copy_from(&g.gx);
        out.rows_mut(n, p).copy_from(&g.gy);
        out.rows_mut(n + p, m).copy_from(&g.gz);
        out
    };
    let mut hmat = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let mut vp = base.clone();
        let mut vm = base.clone();
        vp[i] += h;
        vm[i] -= h;
        let col = (grad(&vp) - grad(&vm)) / (2.0 * h);
        hmat.set_column(i, &col);
    }
    hmat
}

// FD probes must stay inside the domain: callers guarantee y ≥ margin > h.
fn state_from_unclamped(n: usize, p: usize, m: usize, v: &DVector<f64>) -> SaddleState {
    let x = DVector::from_iterator(n, v.rows(0, n).iter().copied());
    let y = DVector::from_iterator(p, v.rows(n, p).iter().copied());
    let z = DVector::from_iterator(m, v.rows(n + p, m).iter().copied());
    SaddleState::new(x, y, z).expect("FD probe crossed the y ≥ 0 boundary; keep y margins above h")
}

/// Keep a state clear of FD-probe hazards: y components at least `margin`
/// away from 0, and x off the non-smooth seam of the piecewise objective.
pub fn fd_safe_state(
    prog: &ConstrainedProgram,
    scale: f64,
    margin: f64,
    rng: &mut ChaCha8Rng,
) -> SaddleState {
    loop {
        let s = SaddleState::new(
            DVector::from_fn(prog.n(), |_, _| rng.gen_range(-scale..scale)),
            DVector::from_fn(prog.p(), |_, _| rng.gen_range(margin..scale)),
            DVector::from_fn(prog.m(), |_, _| rng.gen_range(-scale..scale)),
        )
        .unwrap();
        let r = s.x().norm();
        if (r - 0.5).abs() > 1e-3 {
            return s;
        }
    }
}

/// Integrate the smooth dynamics in chunks until the state settles within
/// `stop_dist` of `reference`, or `max_t` elapses. Returns the final state.
pub fn settle(
    prog: &ConstrainedProgram,
    s0: &SaddleState,
    reference: &SaddleSet,
    dt: f64,
    chunk: f64,
    max_t: f64,
    stop_dist: f64,
) -> SaddleState {
    use saddle_dynamics::dynamics::FieldSel;
    use saddle_dynamics::integrate::{simulate, SimOptions};
    let mut s = s0.clone();
    let mut t = 0.0;
    while t < max_t {
        let traj = simulate(
            prog,
            FieldSel::Smooth,
            &s,
            chunk,
            dt,
            None,
            &SimOptions::default(),
        )
        .expect("integration");
        s = traj.final_state().clone();
        t += chunk;
        if saddle_dynamics::saddle::distance_to_saddle_set(&s, reference) <= stop_dist {
            break;
        }
    }
    s
}
