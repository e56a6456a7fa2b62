//! Command implementations. Summaries go to stderr; CSV artifacts go to the
//! `--out` file or stdout. All floats are serialized with 17 significant
//! digits so identical inputs produce byte-identical artifacts.

use crate::config::ConfigSpec;
use anyhow::{Context, Result};
use gridpass_core::dynamics::{self};
use gridpass_core::energy;
use gridpass_core::equilibrium::{self, FixedAngles, SweepCell};
use gridpass_core::linalg;
use gridpass_core::linear::{self, FreqGrid};
use gridpass_core::model::PowerSystemModel;
use gridpass_core::ReducedNetwork;
use nalgebra::DMatrix;
use std::io::Write;
use std::path::PathBuf;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn note(model_note: &gridpass_core::model::ReductionNote) {
    if !model_note.eliminated.is_empty() {
        eprintln!(
            "note: eliminated zero-injection buses {:?} (derived equivalent network)",
            model_note.eliminated
        );
    }
}

fn print_vfd(model: &PowerSystemModel, calibrated: &[f64]) {
    let pairs: Vec<String> = model
        .bus_ids
        .iter()
        .zip(calibrated)
        .map(|(b, v)| format!("bus {b}: {v:.12}"))
        .collect();
    eprintln!("field voltages: {}", pairs.join(", "));
}

pub fn run_reduce(cfg: &ConfigSpec, out: &Option<PathBuf>) -> Result<i32> {
    let (model, model_note, _) = cfg.prepare_model()?;
    note(&model_note);
    let red: &ReducedNetwork = &model.reduced;
    let ev_g = linalg::sym_eigenvalues(&red.gred);
    let ev_b = linalg::sym_eigenvalues(&red.bred);
    eprintln!(
        "reduced network over buses {:?}: lossless = {}",
        model.bus_ids, red.lossless
    );
    eprintln!(
        "lambda_min(G_red) = {:.6e}, lambda_max(G_red) = {:.6e}",
        ev_g[0],
        ev_g[ev_g.len() - 1]
    );
    eprintln!(
        "lambda_min(B_red) = {:.6e}, lambda_max(B_red) = {:.6e}",
        ev_b[0],
        ev_b[ev_b.len() - 1]
    );

    let mut csv = String::from("i,j,gred,bred,btilred\n");
    let nan_btil = DMatrix::from_element(model.n(), model.n(), f64::NAN);
    let btil = red.btilred.as_ref().unwrap_or(&nan_btil);
    for i in 0..model.n() {
        for j in 0..model.n() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                model.bus_ids[i],
                model.bus_ids[j],
                fmt_f64(red.gred[(i, j)]),
                fmt_f64(red.bred[(i, j)]),
                fmt_f64(btil[(i, j)]),
            ));
        }
    }
    emit(out, &csv)?;
    Ok(0)
}

fn solve_at(
    cfg: &ConfigSpec,
    delta1: f64,
    delta21: f64,
    delta31: f64,
) -> Result<(PowerSystemModel, equilibrium::Equilibrium)> {
    let (model, model_note, calibrated) = cfg.prepare_model()?;
    note(&model_note);
    print_vfd(&model, &calibrated);
    let fixed = FixedAngles {
        delta1,
        delta21,
        delta31,
    };
    let eq = equilibrium::solve_equilibrium(&model, &fixed, None, None, &cfg.solver_opts())?;
    eprintln!(
        "equilibrium at (d21, d31) = ({delta21}, {delta31}): converged = {}, residual = {:.3e}, {} iterations",
        eq.converged, eq.residual, eq.iterations
    );
    Ok((model, eq))
}

pub fn run_equilibrium(
    cfg: &ConfigSpec,
    delta1: f64,
    delta21: f64,
    delta31: f64,
    out: &Option<PathBuf>,
) -> Result<i32> {
    let (model, eq) = solve_at(cfg, delta1, delta21, delta31)?;
    if !eq.converged {
        eprintln!("no feasible equilibrium at this operating point");
        return Ok(2);
    }
    let p = dynamics::active_power(&model, &eq.state);
    let mut csv = String::from("machine,bus,delta,omega,e_q,e_d,p,p_m\n");
    for i in 0..model.n() {
        let (e_q, e_d) = match model.layout.flux_of[i] {
            Some(s) => (eq.state.e_q[s], eq.state.e_d[s]),
            None => (model.machines[i].v_fd, 0.0),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            i,
            model.bus_ids[i],
            fmt_f64(eq.state.delta[i]),
            fmt_f64(0.0),
            fmt_f64(e_q),
            fmt_f64(e_d),
            fmt_f64(p[i]),
            fmt_f64(eq.p_m_star[i]),
        ));
    }
    emit(out, &csv)?;
    Ok(0)
}

pub fn run_linearize(
    cfg: &ConfigSpec,
    delta1: f64,
    delta21: f64,
    delta31: f64,
    out: &Option<PathBuf>,
) -> Result<i32> {
    let (model, eq) = solve_at(cfg, delta1, delta21, delta31)?;
    if !eq.converged {
        eprintln!("no feasible equilibrium at this operating point");
        return Ok(2);
    }
    let lm = linear::linearize(&model, &eq.state)?;
    match linear::torque_coefficient_matrix(&lm) {
        Ok(t) => {
            let eigs: Vec<String> = t
                .deflated_eigs
                .iter()
                .map(|e| format!("{:.6e}", e.re))
                .collect();
            eprintln!(
                "torque matrix: symmetry gap {:.3e}, deflated eigenvalues [{}], positive product {:.6e}",
                t.sym_gap,
                eigs.join(", "),
                t.positive_eig_product
            );
        }
        Err(e) => eprintln!("torque matrix unavailable: {e}"),
    }

    let mut csv = String::from("matrix,i,j,value\n");
    let mut dump = |name: &str, m: &DMatrix<f64>| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                csv.push_str(&format!("{name},{i},{j},{}\n", fmt_f64(m[(i, j)])));
            }
        }
    };
    dump("L", &lm.l);
    dump("C", &lm.c);
    dump("A", &lm.a);
    dump("B", &lm.b);
    dump("Ahat", &lm.a_hat);
    dump("Bhat", &lm.b_hat);
    let tau = DMatrix::from_diagonal(&lm.tau);
    dump("tau", &tau);
    if let Some(ref l0) = lm.l0 {
        dump("L0", l0);
    }
    emit(out, &csv)?;
    Ok(0)
}

pub fn run_certify(
    cfg: &ConfigSpec,
    delta1: f64,
    delta21: f64,
    delta31: f64,
    property: &str,
    grid: FreqGrid,
    out: &Option<PathBuf>,
) -> Result<i32> {
    let (model, eq) = solve_at(cfg, delta1, delta21, delta31)?;
    if !eq.converged {
        eprintln!("no feasible equilibrium at this operating point");
        return Ok(2);
    }
    let lm = linear::linearize(&model, &eq.state)?;
    let mut certs = Vec::new();
    if property == "ni" || property == "both" {
        certs.push(linear::certify_negative_imaginary(&lm, &grid)?);
    }
    if property == "pr" || property == "both" {
        certs.push(linear::certify_positive_real(&lm, &grid)?);
    }

    let mut csv = String::from("property,omega,lambda_min\n");
    let mut all_ok = true;
    for cert in &certs {
        all_ok &= cert.verdict;
        let name = cert.property.as_str();
        eprintln!(
            "{name}: verdict = {}, worst lambda = {:.6e} at omega = {:.6e} rad/s, residue_ok = {}, flux_stable = {}",
            cert.verdict, cert.worst_lambda, cert.worst_omega, cert.residue_ok, cert.flux_stable
        );
        if !cert.verdict && cert.worst_lambda < 0.0 && cert.worst_omega.is_finite() {
            eprintln!("  witness frequency: {:.6e} rad/s", cert.worst_omega);
        }
        for &(w, l) in &cert.curve {
            csv.push_str(&format!("{name},{},{}\n", fmt_f64(w), fmt_f64(l)));
        }
    }
    emit(out, &csv)?;
    Ok(if all_ok { 0 } else { 1 })
}

#[allow(clippy::too_many_arguments)]
pub fn run_simulate(
    cfg: &ConfigSpec,
    delta1: f64,
    delta21: f64,
    delta31: f64,
    t_end: f64,
    dt: f64,
    perturb_machine: usize,
    perturb_delta: f64,
    out: &Option<PathBuf>,
) -> Result<i32> {
    let (model, eq) = solve_at(cfg, delta1, delta21, delta31)?;
    if !eq.converged {
        eprintln!("no feasible equilibrium at this operating point");
        return Ok(2);
    }
    if perturb_machine >= model.n() {
        anyhow::bail!(
            "--perturb-machine {perturb_machine} out of range ({} machines)",
            model.n()
        );
    }
    let inputs = eq.inputs(&model);
    let mut x0 = eq.state.clone();
    x0.delta[perturb_machine] += perturb_delta;
    let traj = dynamics::integrate(&model, &x0, &inputs, t_end, dt, &cfg.ode_opts())?;
    eprintln!(
        "integrated {} samples over {t_end} s ({} accepted steps, {} rhs evaluations)",
        traj.t.len(),
        traj.stats.steps_accepted,
        traj.stats.rhs_evals
    );

    let n = model.n();
    let mut csv = String::from("t");
    for i in 0..n {
        csv.push_str(&format!(",delta_{}", model.bus_ids[i]));
    }
    for &i in &model.layout.omega_machine {
        csv.push_str(&format!(",omega_{}", model.bus_ids[i]));
    }
    for &i in &model.layout.flux_machine {
        csv.push_str(&format!(",e_q_{}", model.bus_ids[i]));
    }
    for &i in &model.layout.flux_machine {
        csv.push_str(&format!(",e_d_{}", model.bus_ids[i]));
    }
    for i in 0..n {
        csv.push_str(&format!(",p_{}", model.bus_ids[i]));
    }
    csv.push_str(",w\n");
    for (t, s) in traj.t.iter().zip(&traj.states) {
        csv.push_str(&fmt_f64(*t));
        for v in s
            .delta
            .iter()
            .chain(s.omega.iter())
            .chain(s.e_q.iter())
            .chain(s.e_d.iter())
        {
            csv.push(',');
            csv.push_str(&fmt_f64(*v));
        }
        let p = dynamics::active_power(&model, s);
        for v in p.iter() {
            csv.push(',');
            csv.push_str(&fmt_f64(*v));
        }
        let w = if model.reduced.lossless {
            energy::bregman_storage(&model, s, &eq.state, &inputs)?.w
        } else {
            f64::NAN
        };
        csv.push(',');
        csv.push_str(&fmt_f64(w));
        csv.push('\n');
    }
    emit(out, &csv)?;
    Ok(0)
}

pub fn run_sweep(cfg: &ConfigSpec, continuation: bool, out: &Option<PathBuf>) -> Result<i32> {
    let (model, model_note, calibrated) = cfg.prepare_model()?;
    note(&model_note);
    print_vfd(&model, &calibrated);
    let grid = cfg.sweep_grid();
    let cells = equilibrium::sweep(&model, &grid, continuation, &cfg.solver_opts())?;

    let feasible = cells.iter().filter(|c| c.feasible).count();
    let stable = cells.iter().filter(|c| c.stable).count();
    let in_set = cells.iter().filter(|c| c.in_set).count();
    let boundary = cells.iter().filter(|c| c.boundary).count();
    let mismatch = cells
        .iter()
        .filter(|c| c.feasible && !c.boundary && c.in_set != c.stable)
        .count();
    eprintln!(
        "sweep {res}x{res} over [{:.6}, {:.6}): {} cells, feasible {feasible}, stable {stable}, \
         in-set {in_set}, boundary {boundary}, set/stability mismatches outside band {mismatch}",
        grid.lo,
        grid.hi,
        cells.len(),
        res = grid.resolution,
    );

    let mut csv = String::from("delta21,delta31,status,torque_metric,max_re_eig,residual\n");
    for c in &cells {
        csv.push_str(&sweep_row(c));
    }
    emit(out, &csv)?;
    Ok(0)
}

fn sweep_row(c: &SweepCell) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        fmt_f64(c.delta21),
        fmt_f64(c.delta31),
        c.status.as_str(),
        fmt_f64(c.torque_metric),
        fmt_f64(c.max_re_eig),
        fmt_f64(c.residual),
    )
}
