//! Acceptance suite. Each test evaluates one criterion end to end at its
//! stated tolerance and prints a single pass/fail line; run with
//! `cargo test -p gridpass-core --test acceptance -- --nocapture`.

mod common;

use common::*;
use gridpass_core::cases;
use gridpass_core::dynamics::{self, Inputs};
use gridpass_core::energy;
use gridpass_core::equilibrium::{self, FixedAngles, SolverOpts, SweepCell, SweepGrid};
use gridpass_core::integrator::OdeOpts;
use gridpass_core::linalg;
use gridpass_core::linear::{self, FreqGrid};
use gridpass_core::model::{MachineParams, MachineRole, PowerSystemModel, SystemState};
use gridpass_core::network;
use gridpass_core::MachineKind;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::time::Instant;

fn report(criterion: usize, name: &str, ok: bool, elapsed_s: f64, budget_s: f64, detail: &str) {
    println!(
        "criterion {criterion:2} ({name}): {} — {detail} [{elapsed_s:.2}s / {budget_s:.0}s]",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
    assert!(
        elapsed_s < budget_s,
        "criterion {criterion} exceeded its runtime budget: {elapsed_s:.2}s"
    );
}

#[test]
fn criterion_01_kron_reduction_definiteness() {
    let t = Instant::now();
    let model = cases::ieee9_model(false, MachineKind::Classical).unwrap();
    let ev_g = linalg::sym_eigenvalues(&model.reduced.gred);
    let ev_b = linalg::sym_eigenvalues(&model.reduced.bred);
    let gmin = ev_g[0];
    let bmax = ev_b[ev_b.len() - 1];
    let ok = gmin >= -1e-9 && bmax <= -1e-6;
    report(
        1,
        "reduced-matrix definiteness",
        ok,
        t.elapsed().as_secs_f64(),
        1.0,
        &format!("lambda_min(G_red) = {gmin:.3e}, lambda_max(B_red) = {bmax:.3e}"),
    );
}

#[test]
fn criterion_02_losslessness_equivalence() {
    let t = Instant::now();
    let lossless = cases::ieee9_model(true, MachineKind::Classical).unwrap();
    let zero_ok = lossless.reduced.gred_max() <= 1e-10;

    let mut r = rng(202);
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let n = r.gen_range(2..8);
        let ids: Vec<u32> = (1..=n as u32).collect();
        let lines = random_lines(&mut r, n, false, true);
        let y = network::build_admittance(&ids, &lines, cases::OMEGA0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..0.4)).collect();
        let red = network::kron_reduce(&y, &x).unwrap();
        worst = worst.min(red.gred_max());
    }
    let lossy_ok = worst > 1e-8;
    report(
        2,
        "losslessness equivalence",
        zero_ok && lossy_ok,
        t.elapsed().as_secs_f64(),
        5.0,
        &format!(
            "lossless max |G_red| = {:.3e}; min over 50 lossy specs = {worst:.3e}",
            lossless.reduced.gred_max()
        ),
    );
}

#[test]
fn criterion_03_gradient_and_hessian_oracles() {
    let t = Instant::now();
    let model = cases::ieee9_model(true, MachineKind::Classical).unwrap();
    let mut r = rng(203);
    let mut worst_grad = 0.0_f64;
    let mut worst_block = 0.0_f64;
    let mut worst_fd = 0.0_f64;
    for _ in 0..20 {
        let state = random_state(&mut r, &model, 0.9);
        let x0 = energy_coords(&model, &state);
        let u_of = |v: &DVector<f64>| {
            let s = state_from_energy_coords(&model, &state, v);
            energy::strain_energy(&model, &s).unwrap()
        };

        // angle gradient of U equals the active power
        let fd_grad = fd_gradient(u_of, &x0, 1e-6);
        let p = dynamics::active_power(&model, &state);
        let scale = p.amax().max(1.0);
        for i in 0..model.n() {
            worst_grad = worst_grad.max((fd_grad[i] - p[i]).abs() / scale);
        }

        // analytic Hessian vs linearization block assembly
        let report_h = energy::hessian_u(&model, &state).unwrap();
        let lm = linear::linearize(&model, &state).unwrap();
        let n = model.n();
        let m2 = 2 * model.layout.n_flux;
        let mut block = DMatrix::zeros(n + m2, n + m2);
        block.view_mut((0, 0), (n, n)).copy_from(&lm.l);
        block
            .view_mut((0, n), (n, m2))
            .copy_from(&(-lm.b_hat.transpose()));
        block.view_mut((n, 0), (m2, n)).copy_from(&(-&lm.b_hat));
        block.view_mut((n, n), (m2, m2)).copy_from(&(-&lm.a_hat));
        worst_block = worst_block.max((&block - &report_h.hess).amax());

        // analytic Hessian vs second-order finite differences
        let fd_h = fd_hessian(u_of, &x0, 2e-4);
        worst_fd = worst_fd.max(matrix_rel_gap(&fd_h, &report_h.hess));
    }
    let ok = worst_grad <= 1e-6 && worst_block <= 1e-8 && worst_fd <= 1e-4;
    report(
        3,
        "gradient/Hessian oracles",
        ok,
        t.elapsed().as_secs_f64(),
        10.0,
        &format!(
            "grad rel {worst_grad:.3e} (<=1e-6), block gap {worst_block:.3e} (<=1e-8), fd rel {worst_fd:.3e} (<=1e-4)"
        ),
    );
}

#[test]
fn criterion_04_negative_imaginary_iff_lossless() {
    let t = Instant::now();
    let grid = FreqGrid::default();

    let lossless = cases::ieee9_model(true, MachineKind::Classical).unwrap();
    let mut n_pass = 0;
    let mut worst_pass = f64::INFINITY;
    for (_, _, eq) in sample_equilibria(&lossless, &[0.1, 0.25, 0.4], 6) {
        let cl = equilibrium::closed_loop_jacobian(&lossless, &eq.state).unwrap();
        if cl.abscissa >= -1e-6 {
            continue;
        }
        let lm = linear::linearize(&lossless, &eq.state).unwrap();
        let cert = linear::certify_negative_imaginary(&lm, &grid).unwrap();
        worst_pass = worst_pass.min(cert.worst_lambda);
        if cert.verdict && cert.worst_lambda >= -1e-8 {
            n_pass += 1;
        }
    }

    let lossy = cases::ieee9_model(false, MachineKind::Classical).unwrap();
    let mut n_fail = 0;
    let mut strongest_witness = 0.0_f64;
    let mut witness_omega = f64::NAN;
    for (_, _, eq) in sample_equilibria(&lossy, &[0.1, 0.25, 0.4], 6) {
        let lm = linear::linearize(&lossy, &eq.state).unwrap();
        let cert = linear::certify_negative_imaginary(&lm, &grid).unwrap();
        if !cert.flux_stable {
            continue;
        }
        if !cert.verdict && cert.worst_lambda < -1e-8 && cert.worst_omega.is_finite() {
            n_fail += 1;
            if cert.worst_lambda < strongest_witness {
                strongest_witness = cert.worst_lambda;
                witness_omega = cert.worst_omega;
            }
        }
    }
    let ok = n_pass >= 10 && n_fail >= 10;
    report(
        4,
        "negative-imaginary dichotomy",
        ok,
        t.elapsed().as_secs_f64(),
        30.0,
        &format!(
            "{n_pass} lossless certified (worst lambda {worst_pass:.2e}), {n_fail} lossy refuted \
             (witness lambda {strongest_witness:.2e} at omega {witness_omega:.2e})"
        ),
    );
}

#[test]
fn criterion_05_torque_matrix_identity_and_verdict_equivalence() {
    let t = Instant::now();
    let model = cases::ieee9_model(true, MachineKind::Classical).unwrap();
    let btil = model.reduced.btilred().unwrap();
    let v_fd = model.v_fd();

    let mut worst_identity = 0.0_f64;
    let mut checked = 0;
    let mut agree = 0;
    let mut disagree = 0;
    for (_, _, eq) in sample_equilibria(&model, &[0.15, 0.55, 0.95, 1.35, 1.75, 2.15], 10) {
        let lm = linear::linearize(&model, &eq.state).unwrap();
        let Ok(torque) = linear::torque_coefficient_matrix(&lm) else {
            continue;
        };
        let (_, _, util_hess) = energy::classical_strain_energy(btil, &v_fd, &eq.state.delta);
        worst_identity = worst_identity.max((&torque.l0 - &util_hess).amax());
        checked += 1;

        // three membership verdicts
        let eps = linalg::INTERIOR_EPS;
        let band = 1e-6;
        let hess_report = energy::hessian_u(&model, &eq.state).unwrap();
        let v_hess = hess_report.lambda_min > eps;

        let ahat_max = *linalg::sym_eigenvalues(&lm.a_hat).last().unwrap();
        let l0_defl_min =
            linalg::sym_eigenvalues(&linalg::deflate_angle_shift(&torque.l0, model.n()))[0];
        let v_l0 = ahat_max < -eps && l0_defl_min > eps;

        let util_defl_min =
            linalg::sym_eigenvalues(&linalg::deflate_angle_shift(&util_hess, model.n()))[0];
        let v_util = ahat_max < -eps && util_defl_min > eps;

        let margin = hess_report
            .lambda_min
            .abs()
            .min(ahat_max.abs())
            .min(l0_defl_min.abs())
            .min(util_defl_min.abs());
        if margin < band {
            continue;
        }
        if v_hess == v_l0 && v_l0 == v_util {
            agree += 1;
        } else {
            disagree += 1;
        }
    }
    let ok = checked >= 30 && worst_identity <= 1e-8 && disagree == 0 && agree >= 30;
    report(
        5,
        "torque-matrix identity + equivalence",
        ok,
        t.elapsed().as_secs_f64(),
        10.0,
        &format!(
            "max |L0 - hess(U_cl)| = {worst_identity:.3e} over {checked} equilibria; \
             verdict agreement {agree}/{}",
            agree + disagree
        ),
    );
}

// ---------------------------------------------------------------------------
// sweep reproductions
// ---------------------------------------------------------------------------

fn run_sweep(lossless: bool, kind: MachineKind) -> Vec<SweepCell> {
    let model = cases::ieee9_model(lossless, kind).unwrap();
    equilibrium::sweep(&model, &SweepGrid::default(), true, &SolverOpts::default()).unwrap()
}

fn set_agreement(cells: &[SweepCell]) -> (usize, usize, usize) {
    // (feasible non-boundary cells, agreements, mismatches)
    let mut total = 0;
    let mut agree = 0;
    let mut mism = 0;
    for c in cells {
        if !c.feasible || c.boundary {
            continue;
        }
        total += 1;
        if c.in_set == c.stable {
            agree += 1;
        } else {
            mism += 1;
        }
    }
    (total, agree, mism)
}

#[test]
fn criterion_06_lossless_sweep_set_identity() {
    let t = Instant::now();
    let a = run_sweep(true, MachineKind::Classical);
    let b = run_sweep(true, MachineKind::Droop);

    let (total_a, _, mism_a) = set_agreement(&a);
    let (total_b, _, mism_b) = set_agreement(&b);

    // identical status matrices outside the boundary band of either sweep
    let mut status_diff = 0;
    let mut compared = 0;
    for (ca, cb) in a.iter().zip(&b) {
        if ca.boundary || cb.boundary {
            continue;
        }
        compared += 1;
        if ca.status != cb.status {
            status_diff += 1;
        }
    }
    let feas = a.iter().filter(|c| c.feasible).count();
    let in_e = a.iter().filter(|c| c.in_set).count();
    let ok = mism_a == 0 && mism_b == 0 && status_diff == 0 && total_a > 1000 && total_b > 1000;
    report(
        6,
        "lossless sweep set identity",
        ok,
        t.elapsed().as_secs_f64(),
        120.0,
        &format!(
            "61x61: feasible {feas}, in-set {in_e}; mismatches classical {mism_a}/{total_a}, \
             droop {mism_b}/{total_b}; status diffs {status_diff}/{compared}"
        ),
    );
}

#[test]
fn criterion_07_lossy_sweep_near_identity() {
    let t = Instant::now();
    let res = SweepGrid::default().resolution;
    let mut detail = String::new();
    let mut ok = true;
    for kind in [MachineKind::Classical, MachineKind::Droop] {
        let cells = run_sweep(false, kind);
        let (total, agree, mism) = set_agreement(&cells);
        let ratio = agree as f64 / total.max(1) as f64;

        // every mismatch must touch the membership-set boundary
        let idx = |r: usize, c: usize| r * res + c;
        let mut stray = 0;
        for r in 0..res {
            for c in 0..res {
                let cell = &cells[idx(r, c)];
                if !cell.feasible || cell.boundary || cell.in_set == cell.stable {
                    continue;
                }
                let mut near_boundary = false;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if rr < 0 || cc < 0 || rr >= res as i64 || cc >= res as i64 {
                            continue;
                        }
                        let nb = &cells[idx(rr as usize, cc as usize)];
                        let nb_in = nb.feasible && nb.in_set;
                        let self_in = cell.in_set;
                        if nb_in != self_in {
                            near_boundary = true;
                        }
                    }
                }
                if !near_boundary {
                    stray += 1;
                }
            }
        }
        ok &= ratio >= 0.99 && stray == 0;
        detail.push_str(&format!(
            "{}: agree {agree}/{total} ({:.2}%), mismatches {mism}, stray {stray}; ",
            kind.as_str(),
            100.0 * ratio
        ));
    }
    report(
        7,
        "lossy sweep near identity",
        ok,
        t.elapsed().as_secs_f64(),
        120.0,
        detail.trim_end_matches("; "),
    );
}

#[test]
fn criterion_08_dissipation_inequality_along_trajectories() {
    let t = Instant::now();
    let model = cases::ieee9_model(true, MachineKind::Classical).unwrap();
    let eq = equilibrium::solve_equilibrium(
        &model,
        &FixedAngles::new(0.0, 0.0),
        None,
        None,
        &SolverOpts::default(),
    )
    .unwrap();
    let mem = energy::membership_e(&model, &eq.state).unwrap();
    assert!(mem.in_e && mem.lambda_min_hess > 0.1, "not deep interior");
    let inputs = eq.inputs(&model);

    let mut r = rng(208);
    let mut worst_violation = f64::NEG_INFINITY;
    let mut samples = 0;
    for _ in 0..20 {
        let mut x0 = eq.state.clone();
        for i in 0..model.n() {
            x0.delta[i] += r.gen_range(-0.05..0.05);
        }
        for w in 0..model.layout.n_omega {
            x0.omega[w] += r.gen_range(-0.002..0.002);
        }
        for f in 0..model.layout.n_flux {
            x0.e_q[f] += r.gen_range(-0.02..0.02);
            x0.e_d[f] += r.gen_range(-0.02..0.02);
        }
        let tr = dynamics::integrate(&model, &x0, &inputs, 2.0, 0.01, &OdeOpts::default()).unwrap();
        for s in &tr.states {
            let ev = energy::bregman_storage(&model, s, &eq.state, &inputs).unwrap();
            worst_violation = worst_violation.max(ev.dwdt - ev.supply);
            samples += 1;
        }
    }
    let ok = worst_violation <= 1e-6 && samples >= 20 * 200;
    report(
        8,
        "dissipation inequality",
        ok,
        t.elapsed().as_secs_f64(),
        30.0,
        &format!("max(dW/dt - supply) = {worst_violation:.3e} over {samples} samples"),
    );
}

#[test]
fn criterion_09_small_gap_convexity_suite() {
    let t = Instant::now();
    let model = cases::ieee9_model(true, MachineKind::Classical).unwrap();
    let btil = model.reduced.btilred().unwrap();
    let v_fd = model.v_fd();
    let mut r = rng(209);
    let mut worst = f64::INFINITY;
    for _ in 0..500 {
        let base: f64 = r.gen_range(-3.0..3.0);
        let delta = DVector::from_fn(model.n(), |_, _| {
            base + r.gen_range(0.0..std::f64::consts::FRAC_PI_2)
        });
        let (_, _, hess) = energy::classical_strain_energy(btil, &v_fd, &delta);
        let defl = linalg::deflate_angle_shift(&hess, model.n());
        worst = worst.min(linalg::sym_eigenvalues(&defl)[0]);
    }
    // constructed counterexample with a gap beyond pi/2
    let mut delta = DVector::zeros(model.n());
    delta[0] = 2.9;
    delta[1] = 2.9;
    delta[2] = 2.9;
    let (_, _, hess) = energy::classical_strain_energy(btil, &v_fd, &delta);
    let counter = linalg::sym_eigenvalues(&linalg::deflate_angle_shift(&hess, model.n()))[0];
    let ok = worst >= -1e-10 && counter < 0.0;
    report(
        9,
        "small-gap convexity suite",
        ok,
        t.elapsed().as_secs_f64(),
        5.0,
        &format!(
            "min lambda over 500 samples = {worst:.3e}; counterexample lambda = {counter:.3e}"
        ),
    );
}

#[test]
fn criterion_10_flux_singular_perturbation_link() {
    let t = Instant::now();
    let base = cases::ieee9_model(true, MachineKind::Classical).unwrap();
    let mut two_axis = base.clone();
    for i in two_axis.generator_indices() {
        two_axis.machines[i].tau_d = 1e-5;
        two_axis.machines[i].tau_q = 1e-5;
    }
    // classical limit: generators couple through the synchronous reactance
    let classical = {
        let mut spec = cases::ieee9(true, MachineKind::Classical);
        for mach in spec.machines.iter_mut() {
            if mach.params.kind == MachineKind::TwoAxis {
                mach.params =
                    MachineParams::classical(mach.params.m, mach.params.d, mach.params.x, 1.0, 0.0)
                        .with_role(MachineRole::Generator);
            }
        }
        let (mut m, _) = PowerSystemModel::from_spec(&spec).unwrap();
        for i in 0..m.n() {
            m.machines[i].v_fd = base.machines[i].v_fd;
        }
        m
    };

    let eq_cl = equilibrium::solve_equilibrium(
        &classical,
        &FixedAngles::new(0.1, 0.05),
        None,
        None,
        &SolverOpts::default(),
    )
    .unwrap();
    assert!(eq_cl.converged);

    let mut x_cl = eq_cl.state.clone();
    x_cl.delta[1] += 0.005;
    x_cl.omega[0] += 5e-5;
    let mut x_2ax = SystemState::zeros(&two_axis.layout);
    x_2ax.delta = x_cl.delta.clone();
    x_2ax.omega = x_cl.omega.clone();
    let (e_q, e_d) = equilibrium::solve_flux_linear(&two_axis, &x_2ax.delta).unwrap();
    x_2ax.e_q = e_q;
    x_2ax.e_d = e_d;

    let inputs_cl = Inputs {
        p_m: eq_cl.p_m_star.clone(),
        v_fd: classical.v_fd(),
    };
    let inputs_2ax = Inputs {
        p_m: eq_cl.p_m_star.clone(),
        v_fd: two_axis.v_fd(),
    };
    let opts = OdeOpts::default();
    let tr_cl = dynamics::integrate(&classical, &x_cl, &inputs_cl, 5.0, 0.01, &opts).unwrap();
    let tr_ax = dynamics::integrate(&two_axis, &x_2ax, &inputs_2ax, 5.0, 0.01, &opts).unwrap();
    let mut sup = 0.0_f64;
    for (a, b) in tr_cl.states.iter().zip(&tr_ax.states) {
        sup = sup.max((&a.delta - &b.delta).amax());
        sup = sup.max((&a.omega - &b.omega).amax());
    }
    let ok = sup <= 1e-3;
    report(
        10,
        "flux singular-perturbation link",
        ok,
        t.elapsed().as_secs_f64(),
        10.0,
        &format!("sup |(delta, omega)_2ax - (delta, omega)_cl| = {sup:.3e} over 5 s"),
    );
}
