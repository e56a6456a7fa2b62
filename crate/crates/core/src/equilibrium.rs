//! Equilibrium computation, small-signal stability and grid classification.
//!
//! An operating point fixes the generator rotor angles `(d1, d1 + d21,
//! d1 + d31)` and the load power references. Newton iteration resolves the
//! load angles and the two-axis flux states from the load power balance and
//! the flux steady-state equations; generator mechanical inputs are then read
//! off as the free equilibrium inputs `P_m = P(z*)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics::{self, Inputs};
use crate::error::{Error, Result};
use crate::linalg::{self, INTERIOR_EPS};
use crate::linear::{self, LinearModel};
use crate::model::{MachineKind, PowerSystemModel, SystemState};

/// Stability verdict threshold on the deflated spectral abscissa.
pub const STABILITY_EPS: f64 = 1e-8;

/// Margin band inside which a cell is tagged as boundary and excluded from
/// set-agreement statistics.
pub const BOUNDARY_BAND: f64 = 1e-6;

/// Fixed generator rotor angles of an operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedAngles {
    /// Gauge angle of the first generator.
    pub delta1: f64,
    /// Angle of the second generator relative to the first.
    pub delta21: f64,
    /// Angle of the third generator relative to the first.
    pub delta31: f64,
}

impl FixedAngles {
    pub fn new(delta21: f64, delta31: f64) -> Self {
        Self {
            delta1: 0.0,
            delta21,
            delta31,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOpts {
    /// Residual norm below which the solve counts as converged.
    pub tol: f64,
    /// Residual norm targeted by continued polishing iterations.
    pub polish_tol: f64,
    pub max_iter: usize,
    /// Step-halving attempts per iteration.
    pub max_damping: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            polish_tol: 5e-15,
            max_iter: 50,
            max_damping: 8,
        }
    }
}

/// A solved (or failed) equilibrium.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub state: SystemState,
    /// Implied constant inputs: references for loads, `P(z*)` for generators.
    pub p_m_star: DVector<f64>,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl Equilibrium {
    pub fn inputs(&self, model: &PowerSystemModel) -> Inputs {
        Inputs {
            p_m: self.p_m_star.clone(),
            v_fd: model.v_fd(),
        }
    }
}

fn generator_triplet(model: &PowerSystemModel) -> Result<[usize; 3]> {
    let gens = model.generator_indices();
    if gens.len() != 3 {
        return Err(Error::Invalid(format!(
            "operating points fix three generator angles; model has {} generator machines",
            gens.len()
        )));
    }
    Ok([gens[0], gens[1], gens[2]])
}

fn assemble_delta(
    model: &PowerSystemModel,
    fixed: &FixedAngles,
    load_delta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let gens = generator_triplet(model)?;
    let loads = model.load_indices();
    let mut delta = DVector::zeros(model.n());
    delta[gens[0]] = fixed.delta1;
    delta[gens[1]] = fixed.delta1 + fixed.delta21;
    delta[gens[2]] = fixed.delta1 + fixed.delta31;
    for (k, &i) in loads.iter().enumerate() {
        delta[i] = load_delta[k];
    }
    Ok(delta)
}

/// Solve the flux steady state at fixed rotor angles. The equations are
/// linear in the two-axis EMFs, so this is a single linear solve; it doubles
/// as the Newton initial guess and as an independent oracle for the solved
/// fixed point.
pub fn solve_flux_linear(
    model: &PowerSystemModel,
    delta: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = model.layout.n_flux;
    if m == 0 {
        return Ok((DVector::zeros(0), DVector::zeros(0)));
    }
    let mut state = SystemState::zeros(&model.layout);
    state.delta.copy_from(delta);
    let lm = linear::linearize(model, &state)?;
    // flux residual at E = 0: gap * g(z)|_{E=0} + V_fd on the q rows
    let (emf_q, emf_d) = dynamics::internal_emf(model, &state);
    let (_, gq, gd) = dynamics::power_and_g(&model.reduced, delta, &emf_q, &emf_d);
    let mut r0 = DVector::zeros(2 * m);
    for (s, &i) in model.layout.flux_machine.iter().enumerate() {
        let gap = model.flux_gap(i)?;
        r0[s] = gap * gq[i] + model.machines[i].v_fd;
        r0[m + s] = gap * gd[i];
    }
    let e =
        lm.a.clone()
            .lu()
            .solve(&(-r0))
            .ok_or_else(|| Error::Singular {
                what: "flux steady-state matrix".into(),
            })?;
    Ok((e.rows(0, m).into_owned(), e.rows(m, m).into_owned()))
}

struct EqProblem<'a> {
    model: &'a PowerSystemModel,
    fixed: FixedAngles,
    loads: Vec<usize>,
    refs: DVector<f64>,
}

impl<'a> EqProblem<'a> {
    fn n_unknowns(&self) -> usize {
        self.loads.len() + 2 * self.model.layout.n_flux
    }

    fn state_of(&self, u: &DVector<f64>) -> Result<SystemState> {
        let nl = self.loads.len();
        let m = self.model.layout.n_flux;
        let load_delta = u.rows(0, nl).into_owned();
        let mut state = SystemState::zeros(&self.model.layout);
        state.delta = assemble_delta(self.model, &self.fixed, &load_delta)?;
        state.e_q = u.rows(nl, m).into_owned();
        state.e_d = u.rows(nl + m, m).into_owned();
        Ok(state)
    }

    fn residual(&self, state: &SystemState) -> Result<DVector<f64>> {
        let model = self.model;
        let m = model.layout.n_flux;
        let nl = self.loads.len();
        let (eq_full, ed_full) = dynamics::internal_emf(model, state);
        let (p, gq, gd) = dynamics::power_and_g(&model.reduced, &state.delta, &eq_full, &ed_full);
        let mut r = DVector::zeros(nl + 2 * m);
        for (k, &i) in self.loads.iter().enumerate() {
            r[k] = p[i] - self.refs[i];
        }
        for (s, &i) in model.layout.flux_machine.iter().enumerate() {
            let mp = &model.machines[i];
            let gap = model.flux_gap(i)?;
            r[nl + s] = -mp.x / mp.x_prime * state.e_q[s] + gap * gq[i] + mp.v_fd;
            r[nl + m + s] = -mp.x / mp.x_prime * state.e_d[s] + gap * gd[i];
        }
        Ok(r)
    }

    fn jacobian(&self, state: &SystemState) -> Result<DMatrix<f64>> {
        let model = self.model;
        let m = model.layout.n_flux;
        let nl = self.loads.len();
        let lm = linear::linearize(model, state)?;
        let mut jac = DMatrix::zeros(nl + 2 * m, nl + 2 * m);
        for (k, &i) in self.loads.iter().enumerate() {
            for (k2, &j) in self.loads.iter().enumerate() {
                jac[(k, k2)] = lm.l[(i, j)];
            }
            for col in 0..2 * m {
                jac[(k, nl + col)] = lm.c[(i, col)];
            }
        }
        for row in 0..2 * m {
            for (k2, &j) in self.loads.iter().enumerate() {
                jac[(nl + row, k2)] = lm.b[(row, j)];
            }
            for col in 0..2 * m {
                jac[(nl + row, nl + col)] = lm.a[(row, col)];
            }
        }
        Ok(jac)
    }
}

fn default_guess(model: &PowerSystemModel, fixed: &FixedAngles) -> Result<DVector<f64>> {
    let loads = model.load_indices();
    let m = model.layout.n_flux;
    let mean_gen = fixed.delta1 + (fixed.delta21 + fixed.delta31) / 3.0;
    let load_delta = DVector::from_element(loads.len(), mean_gen);
    let delta = assemble_delta(model, fixed, &load_delta)?;
    let mut u = DVector::zeros(loads.len() + 2 * m);
    u.rows_mut(0, loads.len()).copy_from(&load_delta);
    match solve_flux_linear(model, &delta) {
        Ok((eq, ed)) => {
            u.rows_mut(loads.len(), m).copy_from(&eq);
            u.rows_mut(loads.len() + m, m).copy_from(&ed);
        }
        Err(_) => {
            for s in 0..m {
                u[loads.len() + s] = 1.0;
            }
        }
    }
    Ok(u)
}

fn guess_from_state(model: &PowerSystemModel, state: &SystemState) -> DVector<f64> {
    let loads = model.load_indices();
    let m = model.layout.n_flux;
    let mut u = DVector::zeros(loads.len() + 2 * m);
    for (k, &i) in loads.iter().enumerate() {
        u[k] = state.delta[i];
    }
    u.rows_mut(loads.len(), m).copy_from(&state.e_q);
    u.rows_mut(loads.len() + m, m).copy_from(&state.e_d);
    u
}

fn newton(
    problem: &EqProblem,
    u0: DVector<f64>,
    opts: &SolverOpts,
) -> Result<(DVector<f64>, f64, usize, bool)> {
    let mut u = u0;
    let mut state = problem.state_of(&u)?;
    let mut r = problem.residual(&state)?;
    let mut rn = r.amax();
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        if rn <= opts.polish_tol || !rn.is_finite() {
            break;
        }
        let jac = problem.jacobian(&state)?;
        let Some(du) = jac.lu().solve(&(-&r)) else {
            return Ok((u, rn, iterations, false));
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_damping {
            let u_try = &u + &du * alpha;
            let state_try = problem.state_of(&u_try)?;
            let r_try = problem.residual(&state_try)?;
            let rn_try = r_try.amax();
            if rn_try.is_finite() && (rn_try < rn || rn_try <= opts.polish_tol) {
                u = u_try;
                state = state_try;
                r = r_try;
                rn = rn_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    Ok((u, rn, iterations, rn <= opts.tol))
}

/// Solve for a feasible equilibrium at fixed generator angles.
///
/// `refs` overrides the load power references (full-length vector, generator
/// entries ignored); `guess` seeds the Newton iteration, e.g. with a
/// neighboring solution during a sweep. Non-convergence is reported through
/// the `converged` flag, not as an error.
pub fn solve_equilibrium(
    model: &PowerSystemModel,
    fixed: &FixedAngles,
    refs: Option<&DVector<f64>>,
    guess: Option<&Equilibrium>,
    opts: &SolverOpts,
) -> Result<Equilibrium> {
    let problem = EqProblem {
        model,
        fixed: *fixed,
        loads: model.load_indices(),
        refs: refs.cloned().unwrap_or_else(|| model.p_m()),
    };
    let u0 = match guess {
        Some(eq) => guess_from_state(model, &eq.state),
        None => default_guess(model, fixed)?,
    };
    debug_assert_eq!(u0.len(), problem.n_unknowns());
    let (u, rn, iterations, converged) = newton(&problem, u0, opts)?;

    let state = problem.state_of(&u)?;
    let p = dynamics::active_power(model, &state);
    let mut p_m_star = problem.refs.clone();
    for &i in &model.generator_indices() {
        p_m_star[i] = p[i];
    }
    Ok(Equilibrium {
        state,
        p_m_star,
        residual: rn,
        converged,
        iterations,
    })
}

/// Calibrate generator field voltages so that the flux steady state at the
/// reference operating point `d21 = d31 = 0` has unit EMF magnitude
/// `sqrt(E_q^2 + E_d^2) = 1` on every selected machine. Returns the
/// calibrated field voltage vector over all machines.
pub fn calibrate_field_voltages(
    model: &mut PowerSystemModel,
    which: &[usize],
    opts: &SolverOpts,
) -> Result<DVector<f64>> {
    for &i in which {
        if !model.machines[i].has_flux_state() {
            return Err(Error::Invalid(format!(
                "machine {i} is not two-axis; only flux machines are calibrated"
            )));
        }
    }
    let fixed = FixedAngles::new(0.0, 0.0);
    let loads = model.load_indices();
    let m = model.layout.n_flux;
    let nl = loads.len();
    let nc = which.len();
    let slot_of: Vec<usize> = which
        .iter()
        .map(|&i| model.layout.flux_of[i].unwrap())
        .collect();

    // unknowns: [load angles; E_q; E_d; V_fd of selected machines]
    let mut u = default_guess(model, &fixed)?.insert_rows(nl + 2 * m, nc, 1.0);
    let refs = model.p_m();

    let mut rn = f64::INFINITY;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let mut work = model.clone();
        for (k, &i) in which.iter().enumerate() {
            work.machines[i].v_fd = u[nl + 2 * m + k];
        }
        let problem = EqProblem {
            model: &work,
            fixed,
            loads: loads.clone(),
            refs: refs.clone(),
        };
        let ueq = u.rows(0, nl + 2 * m).into_owned();
        let state = problem.state_of(&ueq)?;
        let r_eq = problem.residual(&state)?;
        let mut r = DVector::zeros(nl + 2 * m + nc);
        r.rows_mut(0, nl + 2 * m).copy_from(&r_eq);
        for (k, &s) in slot_of.iter().enumerate() {
            r[nl + 2 * m + k] = state.e_q[s] * state.e_q[s] + state.e_d[s] * state.e_d[s] - 1.0;
        }
        rn = r.amax();
        if rn <= opts.polish_tol {
            converged = true;
            break;
        }

        let j_eq = problem.jacobian(&state)?;
        let mut jac = DMatrix::zeros(nl + 2 * m + nc, nl + 2 * m + nc);
        jac.view_mut((0, 0), (nl + 2 * m, nl + 2 * m))
            .copy_from(&j_eq);
        for (k, &s) in slot_of.iter().enumerate() {
            // d(flux_q residual)/d v_fd = 1 on the machine's own row
            jac[(nl + s, nl + 2 * m + k)] = 1.0;
            // norm rows
            jac[(nl + 2 * m + k, nl + s)] = 2.0 * state.e_q[s];
            jac[(nl + 2 * m + k, nl + m + s)] = 2.0 * state.e_d[s];
        }
        let Some(du) = jac.lu().solve(&(-&r)) else {
            return Err(Error::Singular {
                what: "field-voltage calibration Jacobian".into(),
            });
        };
        u += du;
        if rn <= opts.tol {
            converged = true;
        }
    }
    if !converged && rn > opts.tol {
        return Err(Error::Invalid(format!(
            "field-voltage calibration did not converge (residual {rn:.3e})"
        )));
    }
    for (k, &i) in which.iter().enumerate() {
        let v = u[nl + 2 * m + k];
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Invalid(format!(
                "calibration produced non-positive field voltage {v} at machine {i}"
            )));
        }
        model.machines[i].v_fd = v;
    }
    Ok(model.v_fd())
}

/// Jacobian of the full closed loop at an equilibrium, with the structural
/// zero mode along the uniform angle shift removed before the verdict.
#[derive(Debug, Clone)]
pub struct ClosedLoopJacobian {
    pub jacobian: DMatrix<f64>,
    pub deflated_eigs: Vec<Complex64>,
    /// Largest real part over the deflated spectrum.
    pub abscissa: f64,
}

pub fn closed_loop_jacobian(
    model: &PowerSystemModel,
    z_star: &SystemState,
) -> Result<ClosedLoopJacobian> {
    let layout = &model.layout;
    let n = model.n();
    let (nw, m) = (layout.n_omega, layout.n_flux);
    let dim = layout.dim();
    let (l, c) = dynamics::jacobian_p(model, z_star);
    let lm = linear::linearize(model, z_star)?;

    let mut j = DMatrix::zeros(dim, dim);
    let (o_off, q_off, d_off) = (n, n + nw, n + nw + m);
    for (i, mp) in model.machines.iter().enumerate() {
        match mp.kind {
            MachineKind::TwoAxis | MachineKind::Classical => {
                let w = layout.omega_of[i].unwrap();
                j[(i, o_off + w)] = model.omega0;
                for col in 0..n {
                    j[(o_off + w, col)] = -l[(i, col)] / mp.m;
                }
                for col in 0..2 * m {
                    let target = if col < m {
                        q_off + col
                    } else {
                        d_off + col - m
                    };
                    j[(o_off + w, target)] = -c[(i, col)] / mp.m;
                }
                j[(o_off + w, o_off + w)] = -mp.d / mp.m;
            }
            MachineKind::Droop => {
                let scale = -model.omega0 / mp.d;
                for col in 0..n {
                    j[(i, col)] = scale * l[(i, col)];
                }
                for col in 0..2 * m {
                    let target = if col < m {
                        q_off + col
                    } else {
                        d_off + col - m
                    };
                    j[(i, target)] = scale * c[(i, col)];
                }
            }
        }
        if let Some(s) = layout.flux_of[i] {
            for col in 0..n {
                j[(q_off + s, col)] = lm.b[(s, col)] / mp.tau_d;
                j[(d_off + s, col)] = lm.b[(m + s, col)] / mp.tau_q;
            }
            for col in 0..2 * m {
                let target = if col < m {
                    q_off + col
                } else {
                    d_off + col - m
                };
                j[(q_off + s, target)] = lm.a[(s, col)] / mp.tau_d;
                j[(d_off + s, target)] = lm.a[(m + s, col)] / mp.tau_q;
            }
        }
    }

    let deflated = linalg::deflate_angle_shift(&j, n);
    let mut deflated_eigs = linalg::eigenvalues(&deflated);
    deflated_eigs.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
    let abscissa = deflated_eigs
        .first()
        .map(|e| e.re)
        .unwrap_or(f64::NEG_INFINITY);
    Ok(ClosedLoopJacobian {
        jacobian: j,
        deflated_eigs,
        abscissa,
    })
}

/// Classification of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Infeasible,
    UnstableFeasible,
    StableOutside,
    InE,
    InEplus,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Infeasible => "Infeasible",
            CellStatus::UnstableFeasible => "UnstableFeasible",
            CellStatus::StableOutside => "StableOutside",
            CellStatus::InE => "InE",
            CellStatus::InEplus => "InEplus",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub delta21: f64,
    pub delta31: f64,
    pub status: CellStatus,
    /// Product of positive deflated eigenvalues of the torque matrix.
    pub torque_metric: f64,
    /// Deflated spectral abscissa of the closed-loop Jacobian.
    pub max_re_eig: f64,
    pub residual: f64,
    pub feasible: bool,
    pub stable: bool,
    pub in_set: bool,
    /// Any decisive eigenvalue within the boundary band.
    pub boundary: bool,
}

/// Classify a solved operating point into its sweep cell.
pub fn classify(
    model: &PowerSystemModel,
    delta21: f64,
    delta31: f64,
    eq: &Equilibrium,
) -> Result<SweepCell> {
    if !eq.converged {
        return Ok(SweepCell {
            delta21,
            delta31,
            status: CellStatus::Infeasible,
            torque_metric: f64::NAN,
            max_re_eig: f64::NAN,
            residual: eq.residual,
            feasible: false,
            stable: false,
            in_set: false,
            boundary: false,
        });
    }
    let cl = closed_loop_jacobian(model, &eq.state)?;
    let stable = cl.abscissa < -STABILITY_EPS;
    let lm = linear::linearize(model, &eq.state)?;

    let torque_metric = match linear::torque_coefficient_matrix(&lm) {
        Ok(rep) => rep.positive_eig_product,
        Err(_) => f64::NAN,
    };

    let (in_set, membership_margin, status_in) = if model.reduced.lossless {
        let mem = crate::energy::membership_e(model, &eq.state)?;
        let margin = mem
            .lambda_min_hess
            .abs()
            .min(mem.lambda_max_ahat.abs())
            .min(mem.lambda_min_util.abs());
        (mem.in_e, margin, CellStatus::InE)
    } else {
        let (in_plus, margin) = membership_eplus(&lm);
        (in_plus, margin, CellStatus::InEplus)
    };

    let boundary = cl.abscissa.abs() < BOUNDARY_BAND || membership_margin < BOUNDARY_BAND;
    let status = if in_set {
        status_in
    } else if stable {
        CellStatus::StableOutside
    } else {
        CellStatus::UnstableFeasible
    };
    Ok(SweepCell {
        delta21,
        delta31,
        status,
        torque_metric,
        max_re_eig: cl.abscissa,
        residual: eq.residual,
        feasible: true,
        stable,
        in_set,
        boundary,
    })
}

/// Lossy-case membership: flux Jacobian `A` stable and deflated torque matrix
/// eigenvalues in the open right half-plane. Returns the verdict and its
/// margin for boundary detection.
pub fn membership_eplus(lm: &LinearModel) -> (bool, f64) {
    let a_absc = if lm.tau.is_empty() {
        f64::NEG_INFINITY
    } else {
        linalg::spectral_abscissa(&lm.a)
    };
    match lm.l0 {
        Some(ref l0) => {
            let defl = linalg::deflate_angle_shift(l0, lm.n());
            let min_re = linalg::eigenvalues(&defl)
                .iter()
                .map(|e| e.re)
                .fold(f64::INFINITY, f64::min);
            let in_plus = a_absc < -INTERIOR_EPS && min_re > INTERIOR_EPS;
            (in_plus, a_absc.abs().min(min_re.abs()))
        }
        None => (false, 0.0),
    }
}

/// Rectangular angle grid, endpoint-exclusive (a torus scan when the range
/// is a full period).
#[derive(Debug, Clone, Copy)]
pub struct SweepGrid {
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lo: -std::f64::consts::PI,
            hi: std::f64::consts::PI,
            resolution: 61,
        }
    }
}

impl SweepGrid {
    pub fn values(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / self.resolution as f64;
        (0..self.resolution)
            .map(|k| self.lo + k as f64 * step)
            .collect()
    }
}

/// Classify every grid cell. Cells are laid out row-major with `d21` as the
/// row coordinate. With `continuation` on, each Newton solve is seeded from
/// the neighboring converged solution (left, then below), falling back to
/// the nominal guess.
pub fn sweep(
    model: &PowerSystemModel,
    grid: &SweepGrid,
    continuation: bool,
    opts: &SolverOpts,
) -> Result<Vec<SweepCell>> {
    let values = grid.values();
    let r = values.len();
    let mut cells = Vec::with_capacity(r * r);
    let mut solved: Vec<Option<Equilibrium>> = vec![None; r * r];

    for (row, &d21) in values.iter().enumerate() {
        for (col, &d31) in values.iter().enumerate() {
            let fixed = FixedAngles::new(d21, d31);
            let mut guesses: Vec<Option<&Equilibrium>> = Vec::new();
            if continuation {
                if col > 0 {
                    if let Some(g) = solved[row * r + col - 1].as_ref().filter(|g| g.converged) {
                        guesses.push(Some(g));
                    }
                }
                if row > 0 {
                    if let Some(g) = solved[(row - 1) * r + col].as_ref().filter(|g| g.converged) {
                        guesses.push(Some(g));
                    }
                }
            }
            guesses.push(None);

            let mut result: Option<Equilibrium> = None;
            for guess in guesses {
                let attempt = solve_equilibrium(model, &fixed, None, guess, opts)?;
                let converged = attempt.converged;
                if converged || result.is_none() {
                    result = Some(attempt);
                }
                if converged {
                    break;
                }
            }
            let eq = result.expect("at least one solve attempted");
            cells.push(classify(model, d21, d31, &eq)?);
            solved[row * r + col] = Some(eq);
        }
    }
    Ok(cells)
}
