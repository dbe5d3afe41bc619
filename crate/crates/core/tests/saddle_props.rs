//! Saddle-set geometry properties: x-uniqueness under strong convexity,
//! projection idempotence, omega-limit membership along late trajectories,
//! and quadrature order-independence.

mod common;

use nalgebra::DVector;
use rand::Rng;

use saddle_dynamics::dynamics::FieldSel;
use saddle_dynamics::integrate::{simulate, SimOptions};
use saddle_dynamics::problem::SaddleState;
use saddle_dynamics::programs;
use saddle_dynamics::saddle::{
    hbar, omega_limit_test, project_to_saddle_set, solve_saddle, SaddleSet,
};

// under strong convexity the x-part of the saddle set is a single point:
// independent solves from different starting data must agree
#[test]
fn x_part_unique_under_strong_convexity() {
    let mut rng = common::rng(0x51);
    for _ in 0..20 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=n.min(3));
        let prog = common::random_eq_qp(n, m, &mut rng);
        let a = solve_saddle(&prog, 1e-11).unwrap();
        // second, independent route: long-horizon integration from a random
        // state, then read off the x-part
        let s0 = common::random_state(&prog, 2.0, &mut rng);
        let settled = common::settle(&prog, &s0, &a, 2e-3, 20.0, 400.0, 1e-7);
        let xa = a.representative().x().clone();
        assert!(
            (settled.x() - &xa).norm() < 1e-6,
            "x-parts differ by {}",
            (settled.x() - &xa).norm()
        );
    }
}

// solving a program and solving its serialized round-trip must produce the
// same x-part to solver precision
#[test]
fn x_part_agrees_through_program_round_trip() {
    let mut rng = common::rng(0x54);
    for _ in 0..10 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=n.min(3));
        let prog = common::random_eq_qp(n, m, &mut rng);
        let text = saddle_dynamics::io::write_program(&prog);
        let back = saddle_dynamics::io::parse_program(&text).unwrap();
        let x1 = solve_saddle(&prog, 1e-12)
            .unwrap()
            .representative()
            .x()
            .clone();
        let x2 = solve_saddle(&back, 1e-12)
            .unwrap()
            .representative()
            .x()
            .clone();
        assert!((x1 - x2).norm() < 1e-8);
    }
}

#[test]
fn projection_is_idempotent_on_all_representations() {
    let mut rng = common::rng(0x52);
    let singleton =
        SaddleSet::Singleton(SaddleState::from_slices(&[0.3, -0.2], &[0.1], &[0.7]).unwrap());
    let prog = programs::iss_example();
    let affine = solve_saddle(&prog, 1e-11).unwrap();
    let numeric = SaddleSet::Numeric {
        points: vec![
            SaddleState::xz(
                DVector::from_column_slice(&[1.0, 1.0]),
                DVector::from_column_slice(&[0.0, 2.0]),
            ),
            SaddleState::xz(
                DVector::from_column_slice(&[1.0, 1.0]),
                DVector::from_column_slice(&[1.0, 3.0]),
            ),
        ],
        tol: 1e-6,
    };
    for _ in 0..50 {
        let s_full = SaddleState::new(
            DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0)),
            DVector::from_fn(1, |_, _| rng.gen_range(0.0..3.0)),
            DVector::from_fn(1, |_, _| rng.gen_range(-3.0..3.0)),
        )
        .unwrap();
        let (p1, _) = project_to_saddle_set(&s_full, &singleton);
        let (p2, d2) = project_to_saddle_set(&p1, &singleton);
        assert!(d2 < 1e-14 && p1.distance_to(&p2) < 1e-14);

        let s_xz = SaddleState::xz(
            DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0)),
            DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0)),
        );
        for sdl in [&affine, &numeric] {
            let (p1, _) = project_to_saddle_set(&s_xz, sdl);
            let (p2, d2) = project_to_saddle_set(&p1, sdl);
            assert!(d2 < 1e-12, "re-projection moved by {d2}");
            assert!(p1.distance_to(&p2) < 1e-12);
        }
    }
}

// late states of a converging projected trajectory enter the omega-limit
// candidate set; an early state far from the saddle does not
#[test]
fn omega_limit_membership_along_trajectory() {
    let prog = programs::example44();
    let sdl = solve_saddle(&prog, 1e-11).unwrap();
    let s0 = SaddleState::from_slices(&[1.7256, 0.1793], &[2.4696], &[0.3532]).unwrap();
    let traj = simulate(
        &prog,
        FieldSel::Projected,
        &s0,
        60.0,
        1e-3,
        None,
        &SimOptions::default(),
    )
    .expect("simulate");
    // displacement-relative kernel residual shrinks along the run
    let residual = |s: &SaddleState| {
        let anchor = sdl.representative();
        let d = s.to_vector() - anchor.to_vector();
        let hb = hbar(&prog, s, &anchor, 16).unwrap();
        (&hb.matrix * &d).norm() / d.norm().max(1e-12)
    };
    let early = &traj.states[(1.0 / 1e-3) as usize];
    let late = traj.final_state();
    assert!(residual(early) > 10.0 * residual(late));
    assert!(!omega_limit_test(&prog, early, &sdl, 16, 1e-3).unwrap());
    // the saddle itself is trivially a member
    assert!(omega_limit_test(&prog, &sdl.representative(), &sdl, 16, 1e-8).unwrap());
}

// Gauss–Legendre order does not matter for polynomial Hessians (exactness),
// and higher order converges for the piecewise objective off the seam
#[test]
fn quadrature_order_stability() {
    let mut rng = common::rng(0x53);
    let prog = common::random_eq_qp(4, 2, &mut rng);
    let anchor = solve_saddle(&prog, 1e-11).unwrap().representative();
    let s = common::random_state(&prog, 3.0, &mut rng);
    let h1 = hbar(&prog, &s, &anchor, 1).unwrap().matrix;
    let h16 = hbar(&prog, &s, &anchor, 16).unwrap().matrix;
    assert!((&h1 - &h16).norm() < 1e-12);

    let prog = programs::example44();
    let anchor = SaddleState::from_slices(&[0.0, 0.0], &[0.0], &[0.0]).unwrap();
    let s = SaddleState::from_slices(&[0.3, 0.1], &[0.2], &[0.4]).unwrap();
    let h8 = hbar(&prog, &s, &anchor, 8).unwrap().matrix;
    let h24 = hbar(&prog, &s, &anchor, 24).unwrap().matrix;
    assert!((&h8 - &h24).norm() < 1e-10);
}
