//! Mode execution: drives the library, writes plot-ready artifacts, and
//! produces the summary verdicts behind the exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use saddle_dynamics::dynamics::FieldSel;
use saddle_dynamics::error::Error;
use saddle_dynamics::integrate::{make_disturbance, simulate, SimOptions, TraceKind, Trajectory};
use saddle_dynamics::io;
use saddle_dynamics::lyapunov::{
    self, constants, grad_v3_lipschitz_check, iss_gains, block_matrix_lower_bound, v3_anchored,
};
use saddle_dynamics::problem::SaddleState;
use saddle_dynamics::saddle::{
    check_curvature_conditions, distance_to_saddle_set, project_to_saddle_set, solve_saddle,
    SaddleSet,
};
use saddle_dynamics::selftrig;
use saddle_dynamics::{linalg, ConstrainedProgram, Result};

use crate::scenario::{iss_arm_fields, ArmKind, Mode, Scenario};

pub struct Outcome {
    /// Converged / certified — drives the exit code.
    pub ok: bool,
    pub summary_path: PathBuf,
}

pub fn execute(sc: &Scenario) -> Result<Outcome> {
    let out_dir = sc
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
    fs::create_dir_all(&out_dir)?;
    match sc.mode {
        Mode::Simulate => run_simulate(sc, &out_dir),
        Mode::Iss => run_iss(sc, &out_dir),
        Mode::SelfTrig => run_selftrig(sc, &out_dir),
        Mode::Compare => run_compare(sc, &out_dir),
        Mode::Certify => {
            let prog = sc.load_program()?;
            let report = certify_report(&prog, sc.beta1, sc.seed, 0.45, 200)?;
            let ok = report["certified"].as_bool().unwrap_or(false);
            let path = write_json(&out_dir, "certify.json", &report)?;
            Ok(Outcome {
                ok,
                summary_path: path,
            })
        }
    }
}

fn write_text(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable json");
    text.push('\n');
    write_text(dir, name, &text)
}

fn base_summary(sc: &Scenario) -> serde_json::Value {
    json!({
        "name": sc.name,
        "program": sc.program_ref,
        "mode": sc.mode.name(),
        "seed": sc.seed,
        "dt": sc.dt,
        "horizon": sc.horizon,
        "beta1": sc.beta1,
    })
}

fn auto_traces(prog: &ConstrainedProgram, has_sdl: bool) -> Vec<TraceKind> {
    let mut traces = Vec::new();
    if has_sdl {
        traces.push(TraceKind::V1);
        if prog.p() > 0 {
            traces.push(TraceKind::V2);
        }
        if prog.p() == 0 && prog.curvature().is_some() {
            traces.push(TraceKind::V3);
        }
        traces.push(TraceKind::DistToSaddle);
    }
    traces.push(TraceKind::FieldNorm);
    traces
}

fn run_simulate(sc: &Scenario, out_dir: &Path) -> Result<Outcome> {
    let prog = sc.load_program()?;
    let s0 = sc.initial_state(&prog)?;
    let sdl = solve_saddle(&prog, 1e-10).ok();
    let field = if prog.p() > 0 {
        FieldSel::Projected
    } else {
        FieldSel::Smooth
    };

    let dist_fields = match (&sc.arm_filter, &sc.disturbance) {
        (Some(arm), _) => Some(iss_arm_fields(*arm, prog.n(), prog.m())),
        (None, Some(fields)) => Some(fields.clone()),
        (None, None) => None,
    };
    let disturbance = match &dist_fields {
        Some(fields) => Some(make_disturbance(&fields.to_spec()?, &prog)?),
        None => None,
    };
    let disturbed = disturbance
        .as_ref()
        .map(|d| d.sup_norm_bound() > 0.0)
        .unwrap_or(false);
    if disturbance.is_some() && prog.p() > 0 {
        return Err(Error::Misuse(
            "disturbances require an equality-constrained program".into(),
        ));
    }

    let opts = SimOptions {
        traces: auto_traces(&prog, sdl.is_some()),
        sdl: sdl.as_ref(),
        beta1: Some(sc.beta1),
        ..Default::default()
    };
    let traj = simulate(
        &prog,
        field,
        &s0,
        sc.horizon,
        sc.dt,
        disturbance.as_ref(),
        &opts,
    )?;

    let mut files = Vec::new();
    files.push(write_text(
        out_dir,
        "trajectory.csv",
        &io::trajectory_csv(&prog, &traj),
    )?);
    if prog.p() > 0 {
        files.push(write_text(
            out_dir,
            "events.jsonl",
            &io::events_jsonl(&traj),
        )?);
    }
    if let Some(sdl) = &sdl {
        files.push(write_json(
            out_dir,
            "saddle.json",
            &io::saddle_set_json(sdl, 1e-10),
        )?);
    }
    if prog.p() == 0 && prog.curvature().is_some() {
        let consts = constants(&prog, sc.beta1)?;
        let gains = iss_gains(&prog, &consts)?;
        files.push(write_json(
            out_dir,
            "constants.json",
            &io::constants_json(
                &consts,
                &gains,
                lyapunov::lambda_s_aat(&prog),
                prog.norm_a(),
            ),
        )?);
    }

    let final_dist = sdl
        .as_ref()
        .map(|s| distance_to_saddle_set(traj.final_state(), s));
    let v1_monotone = traj
        .trace(TraceKind::V1)
        .map(|v1| v1.windows(2).all(|w| w[1] <= w[0] + 1e-8));
    // under a persistent disturbance completion is the success condition;
    // otherwise ask for convergence to the saddle set
    let ok = if disturbed {
        true
    } else {
        final_dist.is_none_or(|d| d <= sc.conv_tol)
    };

    let mut summary = base_summary(sc);
    merge(
        &mut summary,
        json!({
            "steps": traj.len() - 1,
            "final_distance": final_dist,
            "conv_tol": sc.conv_tol,
            "v1_monotone": v1_monotone,
            "events": traj.events.len(),
            "disturbance": dist_fields.as_ref().map(|f| f.kind.clone()),
            "converged": ok,
            "files": paths(&files),
        }),
    );
    let path = write_json(out_dir, "summary.json", &summary)?;
    Ok(Outcome {
        ok,
        summary_path: path,
    })
}

fn sup_distance(traj: &Trajectory, sdl: &SaddleSet) -> f64 {
    traj.states
        .iter()
        .map(|s| distance_to_saddle_set(s, sdl))
        .fold(0.0, f64::max)
}

fn run_iss(sc: &Scenario, out_dir: &Path) -> Result<Outcome> {
    let prog = sc.load_program()?;
    if prog.p() != 0 {
        return Err(Error::Misuse(
            "iss mode requires an equality-constrained program".into(),
        ));
    }
    let s0 = sc.initial_state(&prog)?;
    let sdl = solve_saddle(&prog, 1e-11)?;
    let consts = constants(&prog, sc.beta1)?;
    let gains = iss_gains(&prog, &consts)?;
    let theta = 0.5;
    let gain = gains.gain(&consts, theta);

    let mut files = Vec::new();
    files.push(write_json(
        out_dir,
        "constants.json",
        &io::constants_json(
            &consts,
            &gains,
            lyapunov::lambda_s_aat(&prog),
            prog.norm_a(),
        ),
    )?);

    let arms = [
        ArmKind::ExpDecay,
        ArmKind::ConstPlusSin,
        ArmKind::Structured,
    ];
    let mut arm_reports = Vec::new();
    let mut all_ok = true;

    for arm in arms {
        if let Some(filter) = sc.arm_filter {
            if filter != arm {
                continue;
            }
        }
        let (arm_name, horizon) = match arm {
            ArmKind::ExpDecay => ("exp_decay", sc.horizon),
            ArmKind::ConstPlusSin => ("const_plus_sin", 1.5 * sc.horizon),
            ArmKind::Structured => ("structured", 1.5 * sc.horizon),
            ArmKind::Zero => ("zero", sc.horizon),
        };
        let fields = iss_arm_fields(arm, prog.n(), prog.m());
        let dist = make_disturbance(&fields.to_spec()?, &prog)?;
        let u_inf = dist.sup_norm_bound();
        let opts = SimOptions {
            traces: vec![TraceKind::DistToSaddle, TraceKind::V3],
            sdl: Some(&sdl),
            beta1: Some(sc.beta1),
            ..Default::default()
        };
        let traj = simulate(
            &prog,
            FieldSel::Smooth,
            &s0,
            horizon,
            sc.dt,
            Some(&dist),
            &opts,
        )?;
        files.push(write_text(
            out_dir,
            &format!("iss_{arm_name}.csv"),
            &io::trajectory_csv(&prog, &traj),
        )?);

        let report = match arm {
            ArmKind::ExpDecay | ArmKind::Zero => {
                let final_dist = distance_to_saddle_set(traj.final_state(), &sdl);
                let ok = final_dist <= 1e-3;
                all_ok &= ok;
                json!({
                    "arm": arm_name, "horizon": horizon, "u_sup": u_inf,
                    "final_distance": final_dist, "threshold": 1e-3, "ok": ok,
                })
            }
            ArmKind::ConstPlusSin => {
                let sup_d = sup_distance(&traj, &sdl);
                let bound = gain * u_inf;
                let kernel_basis = match &sdl {
                    SaddleSet::AffineXStar { kernel_basis, .. } => kernel_basis.clone(),
                    _ => DMatrix::zeros(prog.m(), 0),
                };
                let kc = |z: &DVector<f64>| (kernel_basis.transpose() * z).norm();
                let growth = if kernel_basis.ncols() > 0 && kc(s0.z()) > 0.0 {
                    kc(traj.final_state().z()) / kc(s0.z())
                } else {
                    f64::NAN
                };
                let ok = sup_d <= bound && (!growth.is_finite() || growth >= 10.0);
                all_ok &= ok;
                json!({
                    "arm": arm_name, "horizon": horizon, "u_sup": u_inf,
                    "sup_distance": sup_d, "iss_gain_bound": bound, "theta": theta,
                    "kernel_growth": growth, "ok": ok,
                })
            }
            ArmKind::Structured => {
                let anchor = project_to_saddle_set(&s0, &sdl).0;
                let v3_tilde_0 = v3_anchored(&prog, &s0, &anchor, sc.beta1)?;
                let sup_v3 = v3_tilde_0.max(consts.alpha2 * (gain * u_inf).powi(2));
                let ball = anchor.norm() + (sup_v3 / consts.alpha1).sqrt();
                let sup_norm = traj.states.iter().map(|s| s.norm()).fold(0.0_f64, f64::max);
                let ok = sup_norm <= ball;
                all_ok &= ok;
                json!({
                    "arm": arm_name, "horizon": horizon, "u_sup": u_inf,
                    "sup_state_norm": sup_norm, "sandwich_ball": ball, "ok": ok,
                })
            }
        };
        arm_reports.push(report);
    }

    let mut summary = base_summary(sc);
    merge(
        &mut summary,
        json!({
            "theta": theta,
            "iss_gain": gain,
            "arms": arm_reports,
            "certified": all_ok,
            "files": paths(&files),
        }),
    );
    let path = write_json(out_dir, "iss_summary.json", &summary)?;
    Ok(Outcome {
        ok: all_ok,
        summary_path: path,
    })
}

fn run_selftrig(sc: &Scenario, out_dir: &Path) -> Result<Outcome> {
    let prog = sc.load_program()?;
    let s0 = sc.initial_state(&prog)?;
    let run = selftrig::run(&prog, &s0, sc.rule, sc.beta1, sc.max_steps, sc.stop_tol)?;

    let mut files = Vec::new();
    files.push(write_text(
        out_dir,
        "trigger_run.csv",
        &io::trigger_run_csv(&prog, &run),
    )?);
    let consts = constants(&prog, sc.beta1)?;
    let gains = iss_gains(&prog, &consts)?;
    files.push(write_json(
        out_dir,
        "constants.json",
        &io::constants_json(
            &consts,
            &gains,
            lyapunov::lambda_s_aat(&prog),
            prog.norm_a(),
        ),
    )?);

    let ok = run.converged && run.dwell_min_observed >= run.dwell_bound_certified;
    let mut summary = base_summary(sc);
    merge(
        &mut summary,
        json!({
            "rule": run.rule.name(),
            "stop_tol": sc.stop_tol,
            "max_steps": sc.max_steps,
        }),
    );
    merge(&mut summary, io::trigger_run_summary(&run));
    merge(
        &mut summary,
        json!({ "certified": ok, "files": paths(&files) }),
    );
    let path = write_json(out_dir, "trigger_summary.json", &summary)?;
    Ok(Outcome {
        ok,
        summary_path: path,
    })
}

fn run_compare(sc: &Scenario, out_dir: &Path) -> Result<Outcome> {
    let prog = sc.load_program()?;
    let s0 = sc.initial_state(&prog)?;
    let report =
        selftrig::compare_methods(&prog, &s0, sc.beta1, sc.target_dist, sc.euler_dt, 400_000)?;
    let ok = matches!(
        (report.selftrig_iters, report.euler_fixed_iters, report.euler_decaying_iters),
        (Some(a), Some(b), Some(d)) if a < b && a < d
    );
    let mut summary = base_summary(sc);
    merge(
        &mut summary,
        json!({
            "target_dist": report.target_dist,
            "selftrig_iters": report.selftrig_iters,
            "euler_fixed_dt": report.euler_fixed_dt,
            "euler_fixed_iters": report.euler_fixed_iters,
            "euler_decaying_iters": report.euler_decaying_iters,
            "selftrig_fastest": ok,
            "certified": ok,
        }),
    );
    let path = write_json(out_dir, "compare.json", &summary)?;
    Ok(Outcome {
        ok,
        summary_path: path,
    })
}

// ---------------------------------------------------------------------------
// certification report
// ---------------------------------------------------------------------------

struct Sampler {
    rng: rand_chacha::ChaCha8Rng,
}

impl Sampler {
    fn new(seed: u64) -> Self {
        use rand::SeedableRng;
        Sampler {
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        use rand::Rng;
        self.rng.gen_range(lo..=hi)
    }

    fn gaussian(&mut self) -> f64 {
        use rand::Rng;
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen();
        (-2.0_f64 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn orthogonal(&mut self, n: usize) -> DMatrix<f64> {
        loop {
            let g = DMatrix::from_fn(n, n, |_, _| self.gaussian());
            let q = g.qr().q();
            if q.determinant().abs() > 0.5 {
                return q;
            }
        }
    }

    fn sym_with_spectrum(&mut self, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
        let v = self.orthogonal(n);
        let lam = DVector::from_fn(n, |_, _| self.uniform(lo, hi));
        let m = &v * DMatrix::from_diagonal(&lam) * v.transpose();
        (&m + m.transpose()) * 0.5
    }

    fn state_xz(&mut self, prog: &ConstrainedProgram, scale: f64) -> SaddleState {
        SaddleState::xz(
            DVector::from_fn(prog.n(), |_, _| self.uniform(-scale, scale)),
            DVector::from_fn(prog.m(), |_, _| self.uniform(-scale, scale)),
        )
    }
}

/// Assemble the certification report: averaged-curvature conditions around
/// the saddle, the Lyapunov constants, and pass counts of the three matrix
/// property suites.
pub fn certify_report(
    prog: &ConstrainedProgram,
    beta1: f64,
    seed: u64,
    radius: f64,
    samples: usize,
) -> Result<serde_json::Value> {
    let sdl = solve_saddle(prog, 1e-10)?;
    let anchor = sdl.representative();
    let conditions = check_curvature_conditions(prog, &anchor, radius, samples, 8, seed)?;
    let mut certified = conditions.holds_i || conditions.holds_ii;

    let mut report = json!({
        "program": {
            "n": prog.n(), "p": prog.p(), "m": prog.m(),
            "has_curvature": prog.curvature().is_some(),
        },
        "saddle": io::saddle_set_json(&sdl, 1e-10),
        "curvature_conditions": {
            "holds_i": conditions.holds_i,
            "holds_ii": conditions.holds_ii,
            "neither": conditions.neither(),
            "samples_used": conditions.samples_used,
            "skipped_nonsmooth": conditions.skipped_nonsmooth,
            "radius": radius,
        },
    });

    // constants require curvature bounds; omit the block otherwise
    if prog.curvature().is_some() && prog.p() == 0 {
        let consts = constants(prog, beta1)?;
        let gains = iss_gains(prog, &consts)?;
        merge(
            &mut report,
            json!({
                "constants": io::constants_json(&consts, &gains, lyapunov::lambda_s_aat(prog), prog.norm_a()),
            }),
        );
    }

    let mut sampler = Sampler::new(seed ^ 0x5eed);

    // block-matrix lower-bound suite at the program's declared bounds
    let (m_lo, m_hi) = prog
        .curvature()
        .map(|c| (c.m_lb, c.m_ub))
        .unwrap_or((1.0, 2.0));
    let mut a1_pass = 0usize;
    let a1_trials = 1000usize;
    for _ in 0..a1_trials {
        let n = sampler.uniform(1.0, 5.0).floor() as usize;
        let b1 = sampler.sym_with_spectrum(n, m_lo, m_hi);
        let b2 = sampler.sym_with_spectrum(n, m_lo, m_hi);
        let (w, lambda_m) = block_matrix_lower_bound(&b1, &b2, beta1.max(1e-3), m_lo, m_hi)?;
        if linalg::lambda_min_sym(&w) > lambda_m - 1e-10 {
            a1_pass += 1;
        }
    }
    certified &= a1_pass == a1_trials;
    merge(
        &mut report,
        json!({
            "block_matrix_suite": { "trials": a1_trials, "passes": a1_pass, "m": m_lo, "M": m_hi },
        }),
    );

    // kernel-orthogonality suite on the program's own saddle set
    if prog.p() == 0 && prog.m() > 0 {
        let lambda_s = lyapunov::lambda_s_aat(prog);
        let a2_trials = 500usize;
        let mut a2_pass = 0usize;
        for _ in 0..a2_trials {
            let s = sampler.state_xz(prog, 5.0);
            let (p, _) = project_to_saddle_set(&s, &sdl);
            let dz = s.z() - p.z();
            let orth_ok = match &sdl {
                SaddleSet::AffineXStar { kernel_basis, .. } => {
                    (kernel_basis.transpose() * &dz).norm() <= 1e-12
                }
                _ => true,
            };
            let coercive_ok = (prog.a().transpose() * &dz).norm_squared()
                >= lambda_s * dz.norm_squared() * (1.0 - 1e-12);
            if orth_ok && coercive_ok {
                a2_pass += 1;
            }
        }
        certified &= a2_pass == a2_trials;
        merge(
            &mut report,
            json!({
                "kernel_suite": { "trials": a2_trials, "passes": a2_pass, "lambda_s_aat": lambda_s },
            }),
        );
    }

    // gradient-Lipschitz suite for the smooth Lyapunov function
    if prog.p() == 0 && prog.curvature().is_some() {
        let consts = constants(prog, beta1)?;
        let a3_trials = 500usize;
        let mut a3_pass = 0usize;
        for _ in 0..a3_trials {
            let s1 = sampler.state_xz(prog, 4.0);
            let s2 = sampler.state_xz(prog, 4.0);
            let (lhs, rhs) = grad_v3_lipschitz_check(prog, &s1, &s2, &sdl, &consts)?;
            if lhs <= rhs * (1.0 + 1e-12) + 1e-12 {
                a3_pass += 1;
            }
        }
        certified &= a3_pass == a3_trials;
        merge(
            &mut report,
            json!({
                "gradient_lipschitz_suite": { "trials": a3_trials, "passes": a3_pass },
            }),
        );
    }

    merge(&mut report, json!({ "certified": certified }));
    Ok(report)
}

fn merge(target: &mut serde_json::Value, extra: serde_json::Value) {
    if let (Some(t), Some(e)) = (target.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            t.insert(k.clone(), v.clone());
        }
    }
}

fn paths(files: &[PathBuf]) -> Vec<String> {
    files
        .iter()
        .map(|p| p.to_string_lossy().into_owned())
        .collect()
}
