//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Tolerances and thresholds are pinned in code; nothing is deferred to
//! later calibration.

mod common;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use saddle_dynamics::dynamics::{DisturbanceKind, DisturbanceSpec, FieldSel};
use saddle_dynamics::integrate::{make_disturbance, simulate, SimOptions, TraceKind};
use saddle_dynamics::lyapunov::{
    self, constants, grad_v3, grad_v3_lipschitz_check, iss_gains, block_matrix_lower_bound, v3, v3_anchored,
};
use saddle_dynamics::problem::{grad_blocks, hessian_blocks, SaddleState};
use saddle_dynamics::programs;
use saddle_dynamics::saddle::{
    check_saddle, distance_to_saddle_set, project_to_saddle_set, solve_saddle, SaddleSet,
};
use saddle_dynamics::selftrig::{self, TriggerRule};
use saddle_dynamics::{linalg, ConstrainedProgram};

struct Criterion {
    id: usize,
    name: &'static str,
}

impl Criterion {
    fn new(id: usize, name: &'static str) -> Self {
        Criterion { id, name }
    }

    fn pass(&self, detail: String) {
        println!(
            "acceptance criterion {} ({}): PASS — {}",
            self.id, self.name, detail
        );
    }

    fn fail(&self, detail: String) -> ! {
        println!(
            "acceptance criterion {} ({}): FAIL — {}",
            self.id, self.name, detail
        );
        panic!("criterion {} failed: {}", self.id, detail);
    }
}

fn check(c: &Criterion, ok: bool, detail: String) {
    if ok {
        c.pass(detail);
    } else {
        c.fail(detail);
    }
}

// -------------------------------------------------------------------------
// 1. projected-dynamics reproduction on the piecewise program
// -------------------------------------------------------------------------
#[test]
fn criterion_01_projected_dynamics_reproduction() {
    let c = Criterion::new(1, "projected dynamics reproduction");
    let started = Instant::now();
    let prog = programs::example44();
    let sdl = solve_saddle(&prog, 1e-10).expect("saddle");
    let s0 = SaddleState::from_slices(&[1.7256, 0.1793], &[2.4696], &[0.3532]).unwrap();
    let opts = SimOptions {
        traces: vec![TraceKind::V1],
        sdl: Some(&sdl),
        ..Default::default()
    };
    let traj =
        simulate(&prog, FieldSel::Projected, &s0, 200.0, 1e-3, None, &opts).expect("simulate");

    let v1 = traj.trace(TraceKind::V1).unwrap();
    let mut v1_violations = 0usize;
    let mut max_jump: f64 = 0.0;
    for w in v1.windows(2) {
        if w[1] > w[0] + 1e-8 {
            v1_violations += 1;
            max_jump = max_jump.max(w[1] - w[0]);
        }
    }
    let min_norm = traj
        .states
        .iter()
        .map(|s| s.norm())
        .fold(f64::INFINITY, f64::min);
    let elapsed = started.elapsed().as_secs_f64();

    let ok = min_norm <= 1e-3 && v1_violations == 0 && elapsed <= 10.0;
    check(
        &c,
        ok,
        format!(
            "min ‖(x,y,z)(t)‖ over t ≤ 200 is {min_norm:.3e} (threshold 1e-3); \
             V1 monotone violations > 1e-8: {v1_violations} (max jump {max_jump:.2e}); \
             runtime {elapsed:.2}s (limit 10s)"
        ),
    );
}

// -------------------------------------------------------------------------
// 2. ISS three-way disturbance experiment
// -------------------------------------------------------------------------
#[test]
fn criterion_02_iss_three_way_experiment() {
    let c = Criterion::new(2, "ISS three-way experiment");
    let started = Instant::now();
    let prog = programs::iss_example();
    let sdl = solve_saddle(&prog, 1e-11).expect("saddle");
    let beta1 = 0.1;
    let consts = constants(&prog, beta1).unwrap();
    let gains = iss_gains(&prog, &consts).unwrap();
    let theta = 0.5;
    let gain = gains.gain(&consts, theta);
    let s0 = SaddleState::xz(
        DVector::from_column_slice(&[-0.3254, -2.4925]),
        DVector::from_column_slice(&[-0.6435, -2.4234]),
    );
    let dt = 1e-3;

    // (a) exponentially decaying disturbance: distance vanishes at horizon
    let spec_a = DisturbanceSpec {
        kind: DisturbanceKind::ExpDecay {
            amplitude: DVector::from_column_slice(&[0.5, 0.5, 0.5, 0.5]),
            rate: 0.5,
        },
        structured: false,
    };
    let dist_a = make_disturbance(&spec_a, &prog).unwrap();
    let traj_a = simulate(
        &prog,
        FieldSel::Smooth,
        &s0,
        40.0,
        dt,
        Some(&dist_a),
        &SimOptions::default(),
    )
    .expect("arm a");
    let d_final_a = distance_to_saddle_set(traj_a.final_state(), &sdl);
    let ok_a = d_final_a <= 1e-3;

    // (b) constant + sinusoid: distance obeys the ISS gain bound while the
    // kernel component of z grows ≥ 10×
    let spec_b = DisturbanceSpec {
        kind: DisturbanceKind::ConstPlusSin {
            offset: DVector::from_column_slice(&[0.2, 0.2, -0.3, -0.3]),
            amplitude: DVector::from_column_slice(&[0.2, 0.2, 0.2, 0.2]),
            freq: 2.0,
        },
        structured: false,
    };
    let dist_b = make_disturbance(&spec_b, &prog).unwrap();
    let u_inf_b = dist_b.sup_norm_bound();
    let traj_b = simulate(
        &prog,
        FieldSel::Smooth,
        &s0,
        60.0,
        dt,
        Some(&dist_b),
        &SimOptions::default(),
    )
    .expect("arm b");
    let sup_d_b = traj_b
        .states
        .iter()
        .map(|s| distance_to_saddle_set(s, &sdl))
        .fold(0.0_f64, f64::max);
    let kernel_basis = match &sdl {
        SaddleSet::AffineXStar { kernel_basis, .. } => kernel_basis.clone(),
        _ => panic!("affine saddle set expected"),
    };
    let kc = |z: &DVector<f64>| (kernel_basis.transpose() * z).norm();
    let kc0 = kc(s0.z());
    let kc_final = kc(traj_b.final_state().z());
    let gain_bound = gain * u_inf_b;
    let ok_b = sup_d_b <= gain_bound && kc_final >= 10.0 * kc0;

    // (c) structured disturbance u_z = Aũ_z: the whole trajectory stays in a
    // ball whose radius comes from the anchored function's sandwich bounds
    let spec_c = DisturbanceSpec {
        kind: DisturbanceKind::ConstPlusSin {
            offset: DVector::from_column_slice(&[0.2, 0.2, 0.3, 0.3]),
            amplitude: DVector::from_column_slice(&[0.2, 0.2, 0.2, 0.2]),
            freq: 2.0,
        },
        structured: true,
    };
    let dist_c = make_disturbance(&spec_c, &prog).unwrap();
    let u_inf_c = dist_c.sup_norm_bound();
    let traj_c = simulate(
        &prog,
        FieldSel::Smooth,
        &s0,
        60.0,
        dt,
        Some(&dist_c),
        &SimOptions::default(),
    )
    .expect("arm c");
    let anchor = project_to_saddle_set(&s0, &sdl).0;
    let v3_tilde_0 = v3_anchored(&prog, &s0, &anchor, beta1).unwrap();
    let sup_v3 = v3_tilde_0.max(consts.alpha2 * (gain * u_inf_c).powi(2));
    let ball = anchor.norm() + (sup_v3 / consts.alpha1).sqrt();
    let sup_norm_c = traj_c
        .states
        .iter()
        .map(|s| s.norm())
        .fold(0.0_f64, f64::max);
    let ok_c = sup_norm_c <= ball;

    let elapsed = started.elapsed().as_secs_f64();
    let ok = ok_a && ok_b && ok_c && elapsed <= 30.0;
    check(
        &c,
        ok,
        format!(
            "(a) final distance {d_final_a:.3e} ≤ 1e-3: {ok_a}; \
             (b) sup distance {sup_d_b:.3} ≤ gain·‖u‖∞ = {gain_bound:.3} and kernel z growth \
             {kc0:.3} → {kc_final:.3} (≥10×): {ok_b}; \
             (c) sup ‖(x,z)‖ {sup_norm_c:.3} ≤ sandwich ball {ball:.3}: {ok_c}; \
             runtime {elapsed:.2}s (limit 30s)"
        ),
    );
}

// -------------------------------------------------------------------------
// 3. self-triggered run with certified dwell time
// -------------------------------------------------------------------------
#[test]
fn criterion_03_self_triggered_run() {
    let c = Criterion::new(3, "self-triggered run");
    let started = Instant::now();
    let prog = programs::selftrig_example();
    let beta1 = 0.1;
    let consts = constants(&prog, beta1).unwrap();
    assert!(
        (consts.beta2 - 1.6).abs() < 1e-15,
        "β₂ must be 1.6 for β₁ = 0.1"
    );
    let s0 = SaddleState::xz(
        DVector::from_column_slice(&[0.6210, 3.9201, -4.0817]),
        DVector::from_column_slice(&[2.0675]),
    );
    let run = selftrig::run(&prog, &s0, TriggerRule::Exact, beta1, 5000, 1e-4).expect("run");
    let strictly_decreasing = run.v3_trace.windows(2).all(|w| w[1] < w[0]);
    let target = SaddleState::xz(
        DVector::from_column_slice(&[1.0 / 3.0; 3]),
        DVector::from_column_slice(&[-2.0 / 3.0]),
    );
    let final_gap = run.states.last().unwrap().distance_to(&target);
    let elapsed = started.elapsed().as_secs_f64();
    let ok = run.converged
        && final_gap <= 1e-4
        && strictly_decreasing
        && run.dwell_bound_certified > 0.0
        && run.dwell_min_observed >= run.dwell_bound_certified
        && elapsed <= 10.0;
    check(
        &c,
        ok,
        format!(
            "distance to ((1/3,1/3,1/3),−2/3) = {final_gap:.3e} ≤ 1e-4 in {} steps; \
             V3 strictly decreasing: {strictly_decreasing}; \
             min dwell {:.6e} ≥ certified bound {:.6e} > 0; runtime {elapsed:.2}s (limit 10s)",
            run.steps(),
            run.dwell_min_observed,
            run.dwell_bound_certified
        ),
    );
}

// -------------------------------------------------------------------------
// 4. qualitative comparison against Euler discretizations
// -------------------------------------------------------------------------
#[test]
fn criterion_04_comparison_with_euler() {
    let c = Criterion::new(4, "comparison with Euler discretizations");
    let prog = programs::selftrig_example();
    let s0 = SaddleState::xz(
        DVector::from_column_slice(&[0.6210, 3.9201, -4.0817]),
        DVector::from_column_slice(&[2.0675]),
    );
    let report = selftrig::compare_methods(&prog, &s0, 0.1, 1e-3, 0.1, 400_000).expect("compare");
    let st = report.selftrig_iters;
    let ef = report.euler_fixed_iters;
    let ed = report.euler_decaying_iters;
    let ok = matches!((st, ef, ed), (Some(a), Some(b), Some(d)) if a < b && a < d);
    check(
        &c,
        ok,
        format!(
            "iterations to distance 1e-3 — self-triggered: {st:?}, fixed-step Euler (dt=0.1): {ef:?}, \
             decaying-step Euler (dt=1/k): {ed:?}; strict ordering required"
        ),
    );
}

// -------------------------------------------------------------------------
// 5. block-matrix lower-bound property suite
// -------------------------------------------------------------------------
#[test]
fn criterion_05_block_matrix_lower_bound_suite() {
    let c = Criterion::new(5, "block-matrix lower bound suite");
    let mut rng = common::rng(0xa1);
    let mut trials = 0usize;
    let mut worst_margin = f64::INFINITY;
    for &(m, big_m) in &[(0.5, 2.0), (1.0, 1.0), (2.0, 10.0)] {
        for _ in 0..1000 {
            let n = rng.gen_range(1..=5);
            let beta1 = 10.0_f64.powf(rng.gen_range(-1.5..0.5));
            let b1 = common::random_sym_with_spectrum(n, m, big_m, &mut rng);
            let b2 = common::random_sym_with_spectrum(n, m, big_m, &mut rng);
            let (w, lambda_m) = block_matrix_lower_bound(&b1, &b2, beta1, m, big_m).expect("valid draw");
            let min_eig = linalg::lambda_min_sym(&w);
            if min_eig <= lambda_m - 1e-10 {
                c.fail(format!(
                    "λ_min(W) = {min_eig:.12e} ≤ λ_m = {lambda_m:.12e} at (m, M) = ({m}, {big_m})"
                ));
            }
            worst_margin = worst_margin.min(min_eig - lambda_m);
            trials += 1;
        }
    }
    check(
        &c,
        trials == 3000,
        format!("{trials}/3000 trials satisfy λ_min(W) > λ_m (worst margin {worst_margin:.3e})"),
    );
}

// -------------------------------------------------------------------------
// 6. gradient-Lipschitz property suite
// -------------------------------------------------------------------------
#[test]
fn criterion_06_gradient_lipschitz_suite() {
    let c = Criterion::new(6, "gradient Lipschitz suite");
    let mut rng = common::rng(0xa2);
    let mut trials = 0usize;
    let mut max_ratio: f64 = 0.0;

    let mut run_pairs =
        |prog: &ConstrainedProgram, pairs: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let sdl = solve_saddle(prog, 1e-11).expect("saddle");
            let consts = constants(prog, 0.1).unwrap();
            for _ in 0..pairs {
                let s1 = common::random_state(prog, 4.0, rng);
                let s2 = common::random_state(prog, 4.0, rng);
                let (lhs, rhs) = grad_v3_lipschitz_check(prog, &s1, &s2, &sdl, &consts).unwrap();
                if lhs > rhs * (1.0 + 1e-12) + 1e-12 {
                    c.fail(format!("‖Δ∇V₃‖ = {lhs:.6e} exceeds ξ(s₁)·‖Δs‖ = {rhs:.6e}"));
                }
                if rhs > 0.0 {
                    max_ratio = max_ratio.max(lhs / rhs);
                }
                trials += 1;
            }
        };

    run_pairs(&programs::iss_example(), 1000, &mut rng);
    for _ in 0..10 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=n.min(3));
        let prog = common::random_eq_qp(n, m, &mut rng);
        run_pairs(&prog, 100, &mut rng);
    }
    check(
        &c,
        trials == 2000,
        format!("{trials}/2000 pairs satisfy the bound (max lhs/rhs ratio {max_ratio:.3})"),
    );
}

// -------------------------------------------------------------------------
// 7. kernel-orthogonality property suite
// -------------------------------------------------------------------------
#[test]
fn criterion_07_kernel_orthogonality_suite() {
    let c = Criterion::new(7, "kernel orthogonality suite");
    let prog = programs::iss_example();
    let sdl = solve_saddle(&prog, 1e-11).expect("saddle");
    let kernel_basis = match &sdl {
        SaddleSet::AffineXStar { kernel_basis, .. } => kernel_basis.clone(),
        _ => panic!("affine saddle set expected"),
    };
    let lambda_s = lyapunov::lambda_s_aat(&prog);
    if (lambda_s - 4.0).abs() > 1e-10 {
        c.fail(format!("λ_s(AAᵀ) = {lambda_s}, expected 4"));
    }
    let mut rng = common::rng(0xa3);
    let mut max_orth: f64 = 0.0;
    for _ in 0..500 {
        let s = common::random_state(&prog, 6.0, &mut rng);
        let (p, _) = project_to_saddle_set(&s, &sdl);
        let dz = s.z() - p.z();
        let orth = (kernel_basis.transpose() * &dz).norm();
        max_orth = max_orth.max(orth);
        if orth > 1e-12 {
            c.fail(format!("kernel component of z − z* is {orth:.3e} > 1e-12"));
        }
        let lhs = (prog.a().transpose() * &dz).norm_squared();
        let rhs = lambda_s * dz.norm_squared();
        // the inequality is tight for this A; allow only fp noise
        if lhs < rhs * (1.0 - 1e-12) {
            c.fail(format!("‖Aᵀ(z−z*)‖² = {lhs:.6e} < λ_s‖z−z*‖² = {rhs:.6e}"));
        }
    }
    check(
        &c,
        true,
        format!(
            "500/500 projections orthogonal to ker(Aᵀ) (max residual {max_orth:.2e}) with λ_s = 4"
        ),
    );
}

// -------------------------------------------------------------------------
// 8. saddle oracle vs long-horizon dynamics
// -------------------------------------------------------------------------
#[test]
fn criterion_08_oracle_equivalence() {
    let c = Criterion::new(8, "oracle vs dynamics equivalence");
    let mut rng = common::rng(0xa4);
    let mut max_gap: f64 = 0.0;
    for trial in 0..50 {
        let n = rng.gen_range(2..=8);
        let m = rng.gen_range(1..=n.min(4));
        let prog = common::random_eq_qp(n, m, &mut rng);
        let sdl = solve_saddle(&prog, 1e-11).expect("newton");
        let (ok, res) = check_saddle(&prog, &sdl.representative(), 1e-8).unwrap();
        if !ok {
            c.fail(format!(
                "trial {trial}: oracle output fails check_saddle (max residual {:.2e})",
                res.max()
            ));
        }
        let s0 = common::random_state(&prog, 2.0, &mut rng);
        let settled = common::settle(&prog, &s0, &sdl, 2e-3, 20.0, 400.0, 1e-6);
        let gap = distance_to_saddle_set(&settled, &sdl);
        max_gap = max_gap.max(gap);
        if gap > 1e-5 {
            c.fail(format!(
                "trial {trial}: dynamics limit differs from oracle by {gap:.3e} > 1e-5"
            ));
        }
    }
    check(
        &c,
        true,
        format!("50/50 programs agree to 1e-5 (max gap {max_gap:.2e})"),
    );
}

// -------------------------------------------------------------------------
// 9. finite-difference consistency of gradients and Hessians
// -------------------------------------------------------------------------
#[test]
fn criterion_09_finite_difference_suites() {
    let c = Criterion::new(9, "finite-difference consistency");
    let mut rng = common::rng(0xa5);
    let h = 1e-5;
    let mut max_grad_err: f64 = 0.0;
    let mut max_hess_err: f64 = 0.0;

    for trial in 0..100 {
        // mix builtins and random programs, with and without inequalities
        let prog = match trial % 4 {
            0 => programs::example44(),
            1 => programs::iss_example(),
            2 => {
                let n = rng.gen_range(2..=6);
                let m = rng.gen_range(1..=n.min(3));
                common::random_eq_qp(n, m, &mut rng)
            }
            _ => {
                let n = rng.gen_range(2..=5);
                let p = rng.gen_range(1..=3);
                let m = rng.gen_range(0..=n.min(2));
                common::random_ineq_qp(n, p, m, &mut rng)
            }
        };
        let s = common::fd_safe_state(&prog, 2.0, 1e-3, &mut rng);

        let g = grad_blocks(&prog, &s).unwrap();
        let mut analytic = DVector::zeros(prog.n() + prog.p() + prog.m());
        analytic.rows_mut(0, prog.n()).copy_from(&g.gx);
        analytic.rows_mut(prog.n(), prog.p()).copy_from(&g.gy);
        analytic
            .rows_mut(prog.n() + prog.p(), prog.m())
            .copy_from(&g.gz);
        let fd = common::fd_gradient(&prog, &s, h);
        let gerr = (&analytic - &fd).norm() / analytic.norm().max(1.0);
        max_grad_err = max_grad_err.max(gerr);
        if gerr > 1e-6 {
            c.fail(format!(
                "trial {trial}: gradient FD relative error {gerr:.3e} > 1e-6"
            ));
        }

        let hb = hessian_blocks(&prog, &s).unwrap();
        let (n, p, m) = (prog.n(), prog.p(), prog.m());
        let dim = n + p + m;
        let mut full = DMatrix::zeros(dim, dim);
        full.view_mut((0, 0), (n, n)).copy_from(&hb.fxx);
        full.view_mut((0, n), (n, p)).copy_from(&hb.fxy);
        full.view_mut((n, 0), (p, n)).copy_from(&hb.fxy.transpose());
        full.view_mut((0, n + p), (n, m)).copy_from(&hb.fxz);
        full.view_mut((n + p, 0), (m, n))
            .copy_from(&hb.fxz.transpose());
        full.view_mut((n, n), (p, p)).copy_from(&hb.fyy);
        full.view_mut((n, n + p), (p, m)).copy_from(&hb.fyz);
        full.view_mut((n + p, n), (m, p))
            .copy_from(&hb.fyz.transpose());
        full.view_mut((n + p, n + p), (m, m)).copy_from(&hb.fzz);
        let fdh = common::fd_hessian(&prog, &s, h);
        let herr = (&full - &fdh).norm() / full.norm().max(1.0);
        max_hess_err = max_hess_err.max(herr);
        if herr > 1e-5 {
            c.fail(format!(
                "trial {trial}: Hessian FD relative error {herr:.3e} > 1e-5"
            ));
        }
    }
    check(
        &c,
        true,
        format!("100 draws: max gradient error {max_grad_err:.2e} (≤1e-6), max Hessian error {max_hess_err:.2e} (≤1e-5)"),
    );
}

// -------------------------------------------------------------------------
// 10. sandwich and ISS-decrease inequalities
// -------------------------------------------------------------------------
#[test]
fn criterion_10_sandwich_and_iss_decrease() {
    let c = Criterion::new(10, "sandwich and ISS decrease");
    let prog = programs::iss_example();
    let sdl = solve_saddle(&prog, 1e-11).expect("saddle");
    let beta1 = 0.1;
    let consts = constants(&prog, beta1).unwrap();
    let gains = iss_gains(&prog, &consts).unwrap();
    let theta = 0.5;
    let mut rng = common::rng(0xa6);
    let mut gated = 0usize;

    for trial in 0..1000 {
        let s = common::random_state(&prog, 5.0, &mut rng);
        let d = distance_to_saddle_set(&s, &sdl);
        let val = v3(&prog, &s, &sdl, beta1).unwrap();
        if val < consts.alpha1 * d * d * (1.0 - 1e-9) || val > consts.alpha2 * d * d * (1.0 + 1e-9)
        {
            c.fail(format!(
                "trial {trial}: sandwich violated: α₁d² = {:.6e}, V₃ = {val:.6e}, α₂d² = {:.6e}",
                consts.alpha1 * d * d,
                consts.alpha2 * d * d
            ));
        }
        if d < 1e-9 {
            continue;
        }
        // disturbance scaled to respect the ISS gate ‖u‖ ≤ θλ̃_m d / (C̃x+C̃z)
        let dim = prog.n() + prog.m();
        let mut dir = DVector::from_fn(dim, |_, _| common::gaussian(&mut rng));
        if dir.norm() < 1e-12 {
            continue;
        }
        dir /= dir.norm();
        let u_mag = rng.gen_range(0.0..=1.0) * theta * consts.lambda_m_tilde * d
            / (gains.c_tilde_x + gains.c_tilde_z);
        let u = dir * u_mag;
        let (gx, gz) = grad_v3(&prog, &s, &sdl, beta1).unwrap();
        let rate = saddle_dynamics::dynamics::sp_field(&prog, &s).unwrap();
        let mut lie = 0.0;
        for i in 0..prog.n() {
            lie += gx[i] * (rate.dx[i] + u[i]);
        }
        for k in 0..prog.m() {
            lie += gz[k] * (rate.dz[k] + u[prog.n() + k]);
        }
        let budget = -(1.0 - theta) * consts.lambda_m_tilde * d * d;
        if lie > budget + 1e-9 * (1.0 + budget.abs()) {
            c.fail(format!(
                "trial {trial}: ISS decrease violated: ∇V₃ᵀf = {lie:.6e} > −(1−θ)λ̃_m d² = {budget:.6e}"
            ));
        }
        gated += 1;
    }
    check(
        &c,
        gated > 900,
        format!("1000 states satisfy the sandwich; {gated} gated disturbances satisfy the decrease bound"),
    );
}
