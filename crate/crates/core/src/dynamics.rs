//! Reduced ODE of the mixed machine network.
//!
//! All coupling goes through the trigonometric matrices
//! `k_ij = -B_red_ij cos d_ij - G_red_ij sin d_ij` and
//! `h_ij = -B_red_ij sin d_ij + G_red_ij cos d_ij`, which are the real and
//! imaginary parts of `gamma_ij^{-1} e^{j d_ij}`. Active power and the bus
//! voltage terms are bilinear in the internal EMFs through `k` and `h`;
//! classical and droop machines enter with the constant EMF `(V_fd, 0)`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::integrator::{self, OdeOpts, OdeStats};
use crate::model::{MachineKind, PowerSystemModel, SystemState};
use crate::network::ReducedNetwork;

/// Trigonometric coupling matrices evaluated at a rotor-angle vector.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub k: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

pub fn coupling_kh(red: &ReducedNetwork, delta: &DVector<f64>) -> Coupling {
    let n = red.n();
    assert_eq!(delta.len(), n);
    let cos_d: Vec<f64> = delta.iter().map(|d| d.cos()).collect();
    let sin_d: Vec<f64> = delta.iter().map(|d| d.sin()).collect();
    let mut k = DMatrix::zeros(n, n);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let c = cos_d[i] * cos_d[j] + sin_d[i] * sin_d[j];
            let s = sin_d[i] * cos_d[j] - cos_d[i] * sin_d[j];
            k[(i, j)] = -red.bred[(i, j)] * c - red.gred[(i, j)] * s;
            h[(i, j)] = -red.bred[(i, j)] * s + red.gred[(i, j)] * c;
        }
    }
    Coupling { k, h }
}

/// Full-length internal EMF vectors `(E_q, E_d)`: flux states for two-axis
/// machines, `(V_fd, 0)` for classical and droop machines.
pub fn internal_emf(model: &PowerSystemModel, state: &SystemState) -> (DVector<f64>, DVector<f64>) {
    let n = model.n();
    let mut eq = DVector::zeros(n);
    let mut ed = DVector::zeros(n);
    for i in 0..n {
        match model.layout.flux_of[i] {
            Some(s) => {
                eq[i] = state.e_q[s];
                ed[i] = state.e_d[s];
            }
            None => {
                eq[i] = model.machines[i].v_fd;
                ed[i] = 0.0;
            }
        }
    }
    (eq, ed)
}

/// Active power, `g_q` and `g_d` in one fused pass.
pub(crate) fn power_and_g(
    red: &ReducedNetwork,
    delta: &DVector<f64>,
    eq: &DVector<f64>,
    ed: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = red.n();
    let cos_d: Vec<f64> = delta.iter().map(|d| d.cos()).collect();
    let sin_d: Vec<f64> = delta.iter().map(|d| d.sin()).collect();
    let mut p = DVector::zeros(n);
    let mut gq = DVector::zeros(n);
    let mut gd = DVector::zeros(n);
    for i in 0..n {
        let (ci, si, eqi, edi) = (cos_d[i], sin_d[i], eq[i], ed[i]);
        let (mut pi, mut gqi, mut gdi) = (0.0, 0.0, 0.0);
        for j in 0..n {
            let c = ci * cos_d[j] + si * sin_d[j];
            let s = si * cos_d[j] - ci * sin_d[j];
            let kij = -red.bred[(i, j)] * c - red.gred[(i, j)] * s;
            let hij = -red.bred[(i, j)] * s + red.gred[(i, j)] * c;
            pi += (eqi * hij - edi * kij) * eq[j] + (eqi * kij + edi * hij) * ed[j];
            gqi += kij * eq[j] - hij * ed[j];
            gdi += hij * eq[j] + kij * ed[j];
        }
        p[i] = pi;
        gq[i] = gqi;
        gd[i] = gdi;
    }
    (p, gq, gd)
}

/// Active power output of every machine.
pub fn active_power(model: &PowerSystemModel, state: &SystemState) -> DVector<f64> {
    let (eq, ed) = internal_emf(model, state);
    power_and_g(&model.reduced, &state.delta, &eq, &ed).0
}

/// Bus voltage phasor terms `(g_q, g_d)`; the machine-frame bus voltage is
/// `V_q = x_i g_q_i`, `V_d = x_i g_d_i` with the coupling reactance `x_i`.
pub fn voltage_terms(
    model: &PowerSystemModel,
    state: &SystemState,
) -> (DVector<f64>, DVector<f64>) {
    let (eq, ed) = internal_emf(model, state);
    let (_, gq, gd) = power_and_g(&model.reduced, &state.delta, &eq, &ed);
    (gq, gd)
}

/// Reactive power diagnostic from the EMF / bus-voltage form.
pub fn reactive_power(model: &PowerSystemModel, state: &SystemState) -> DVector<f64> {
    let (eq, ed) = internal_emf(model, state);
    let (_, gq, gd) = power_and_g(&model.reduced, &state.delta, &eq, &ed);
    DVector::from_fn(model.n(), |i, _| {
        let x = model.machines[i].coupling_reactance();
        eq[i] * gq[i] + ed[i] * gd[i] - x * (gq[i] * gq[i] + gd[i] * gd[i])
    })
}

/// Reactive power recomputed through the bus voltage and current phasor
/// components; algebraically identical to [`reactive_power`].
pub fn reactive_power_phasor(model: &PowerSystemModel, state: &SystemState) -> DVector<f64> {
    let (eq, ed) = internal_emf(model, state);
    let (_, gq, gd) = power_and_g(&model.reduced, &state.delta, &eq, &ed);
    DVector::from_fn(model.n(), |i, _| {
        let x = model.machines[i].coupling_reactance();
        let (vq, vd) = (x * gq[i], x * gd[i]);
        let i_d = (eq[i] - vq) / x;
        let i_q = (vd - ed[i]) / x;
        vq * i_d - vd * i_q
    })
}

/// Constant inputs of the closed loop.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub p_m: DVector<f64>,
    pub v_fd: DVector<f64>,
}

impl Inputs {
    pub fn from_model(model: &PowerSystemModel) -> Self {
        Self {
            p_m: model.p_m(),
            v_fd: model.v_fd(),
        }
    }
}

/// Right-hand side of the closed-loop ODE.
pub fn rhs(model: &PowerSystemModel, state: &SystemState, inputs: &Inputs) -> SystemState {
    let (eq, ed) = internal_emf(model, state);
    let (p, gq, gd) = power_and_g(&model.reduced, &state.delta, &eq, &ed);
    let layout = &model.layout;
    let mut out = SystemState::zeros(layout);
    for (i, mp) in model.machines.iter().enumerate() {
        match mp.kind {
            MachineKind::TwoAxis | MachineKind::Classical => {
                let w = layout.omega_of[i].unwrap();
                out.delta[i] = model.omega0 * state.omega[w];
                out.omega[w] = (-mp.d * state.omega[w] - p[i] + inputs.p_m[i]) / mp.m;
            }
            MachineKind::Droop => {
                out.delta[i] = model.omega0 * (inputs.p_m[i] - p[i]) / mp.d;
            }
        }
        if let Some(s) = layout.flux_of[i] {
            let ratio = mp.x / mp.x_prime;
            let gap = mp.x - mp.x_prime;
            out.e_q[s] = (-ratio * state.e_q[s] + gap * gq[i] + inputs.v_fd[i]) / mp.tau_d;
            out.e_d[s] = (-ratio * state.e_d[s] + gap * gd[i]) / mp.tau_q;
        }
    }
    out
}

/// Flat-vector right-hand side used by the integrator.
pub fn rhs_flat(
    model: &PowerSystemModel,
    x: &DVector<f64>,
    inputs: &Inputs,
    out: &mut DVector<f64>,
) {
    let mut ws = RhsWorkspace::new(model);
    rhs_flat_ws(model, x, inputs, out, &mut ws);
}

/// Scratch buffers for allocation-free right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct RhsWorkspace {
    cos_d: Vec<f64>,
    sin_d: Vec<f64>,
    eq: Vec<f64>,
    ed: Vec<f64>,
}

impl RhsWorkspace {
    pub fn new(model: &PowerSystemModel) -> Self {
        let n = model.n();
        Self {
            cos_d: vec![0.0; n],
            sin_d: vec![0.0; n],
            eq: vec![0.0; n],
            ed: vec![0.0; n],
        }
    }
}

/// Allocation-free right-hand side over the flat state layout.
pub fn rhs_flat_ws(
    model: &PowerSystemModel,
    x: &DVector<f64>,
    inputs: &Inputs,
    out: &mut DVector<f64>,
    ws: &mut RhsWorkspace,
) {
    let layout = &model.layout;
    let n = layout.n_machines;
    let (o_off, q_off) = (n, n + layout.n_omega);
    let d_off = q_off + layout.n_flux;
    let red = &model.reduced;

    for i in 0..n {
        let (s, c) = x[i].sin_cos();
        ws.cos_d[i] = c;
        ws.sin_d[i] = s;
        match layout.flux_of[i] {
            Some(slot) => {
                ws.eq[i] = x[q_off + slot];
                ws.ed[i] = x[d_off + slot];
            }
            None => {
                ws.eq[i] = model.machines[i].v_fd;
                ws.ed[i] = 0.0;
            }
        }
    }

    for (i, mp) in model.machines.iter().enumerate() {
        let (ci, si, eqi, edi) = (ws.cos_d[i], ws.sin_d[i], ws.eq[i], ws.ed[i]);
        let (mut p_i, mut gq_i, mut gd_i) = (0.0, 0.0, 0.0);
        for j in 0..n {
            let c = ci * ws.cos_d[j] + si * ws.sin_d[j];
            let s = si * ws.cos_d[j] - ci * ws.sin_d[j];
            let kij = -red.bred[(i, j)] * c - red.gred[(i, j)] * s;
            let hij = -red.bred[(i, j)] * s + red.gred[(i, j)] * c;
            p_i += (eqi * hij - edi * kij) * ws.eq[j] + (eqi * kij + edi * hij) * ws.ed[j];
            gq_i += kij * ws.eq[j] - hij * ws.ed[j];
            gd_i += hij * ws.eq[j] + kij * ws.ed[j];
        }
        match mp.kind {
            MachineKind::TwoAxis | MachineKind::Classical => {
                let w = layout.omega_of[i].unwrap();
                out[i] = model.omega0 * x[o_off + w];
                out[o_off + w] = (-mp.d * x[o_off + w] - p_i + inputs.p_m[i]) / mp.m;
            }
            MachineKind::Droop => {
                out[i] = model.omega0 * (inputs.p_m[i] - p_i) / mp.d;
            }
        }
        if let Some(slot) = layout.flux_of[i] {
            let ratio = mp.x / mp.x_prime;
            let gap = mp.x - mp.x_prime;
            out[q_off + slot] = (-ratio * x[q_off + slot] + gap * gq_i + inputs.v_fd[i]) / mp.tau_d;
            out[d_off + slot] = (-ratio * x[d_off + slot] + gap * gd_i) / mp.tau_q;
        }
    }
}

/// Sampled trajectory of the closed loop.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<SystemState>,
    pub stats: OdeStats,
}

/// Integrate the closed loop from `x0` over `[0, t_end]`, sampling every
/// `dt_sample` seconds through the dense interpolant.
pub fn integrate(
    model: &PowerSystemModel,
    x0: &SystemState,
    inputs: &Inputs,
    t_end: f64,
    dt_sample: f64,
    opts: &OdeOpts,
) -> Result<Trajectory> {
    let flat0 = x0.to_flat(&model.layout);
    let mut ws = RhsWorkspace::new(model);
    let f = |_t: f64, x: &DVector<f64>, dx: &mut DVector<f64>| {
        rhs_flat_ws(model, x, inputs, dx, &mut ws)
    };
    let (t, xs, stats) = integrator::integrate_sampled(f, 0.0, t_end, &flat0, dt_sample, opts)?;
    let states = xs
        .iter()
        .map(|x| SystemState::from_flat(&model.layout, x))
        .collect();
    Ok(Trajectory { t, states, stats })
}

// ---------------------------------------------------------------------------
// Analytic Jacobian kernels shared by linearization, equilibrium solving and
// the closed-loop Jacobian. Flux coordinates are ordered [E_q slots, E_d
// slots] over the two-axis machines.
// ---------------------------------------------------------------------------

/// `(dP/d delta, dP/dE)`; the first is N x N with zero row sums, the second
/// N x 2m over the flux coordinates.
pub fn jacobian_p(model: &PowerSystemModel, state: &SystemState) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = model.n();
    let m = model.layout.n_flux;
    let (eq, ed) = internal_emf(model, state);
    let Coupling { k, h } = coupling_kh(&model.reduced, &state.delta);

    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = -(eq[i] * k[(i, j)] + ed[i] * h[(i, j)]) * eq[j]
                + (eq[i] * h[(i, j)] - ed[i] * k[(i, j)]) * ed[j];
            l[(i, j)] = v;
            diag -= v;
        }
        l[(i, i)] = diag;
    }

    let mut c = DMatrix::zeros(n, 2 * m);
    for i in 0..n {
        for (s, &jm) in model.layout.flux_machine.iter().enumerate() {
            if jm == i {
                let mut dq = eq[i] * h[(i, i)] - ed[i] * k[(i, i)];
                let mut dd = eq[i] * k[(i, i)] + ed[i] * h[(i, i)];
                for j in 0..n {
                    dq += h[(i, j)] * eq[j] + k[(i, j)] * ed[j];
                    dd += -k[(i, j)] * eq[j] + h[(i, j)] * ed[j];
                }
                c[(i, s)] = dq;
                c[(i, m + s)] = dd;
            } else {
                c[(i, s)] = eq[i] * h[(i, jm)] - ed[i] * k[(i, jm)];
                c[(i, m + s)] = eq[i] * k[(i, jm)] + ed[i] * h[(i, jm)];
            }
        }
    }
    (l, c)
}

/// `(dg/d delta, dg/dE)` restricted to the flux rows: 2m x N and 2m x 2m.
pub fn jacobian_g(model: &PowerSystemModel, state: &SystemState) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = model.n();
    let m = model.layout.n_flux;
    let (eq, ed) = internal_emf(model, state);
    let Coupling { k, h } = coupling_kh(&model.reduced, &state.delta);

    let mut b_hat = DMatrix::zeros(2 * m, n);
    let mut g_e = DMatrix::zeros(2 * m, 2 * m);
    for (s, &i) in model.layout.flux_machine.iter().enumerate() {
        let mut dq_diag = 0.0;
        let mut dd_diag = 0.0;
        for j in 0..n {
            if j != i {
                let dq = h[(i, j)] * eq[j] + k[(i, j)] * ed[j];
                let dd = h[(i, j)] * ed[j] - k[(i, j)] * eq[j];
                b_hat[(s, j)] = dq;
                b_hat[(m + s, j)] = dd;
                dq_diag -= dq;
                dd_diag -= dd;
            }
        }
        b_hat[(s, i)] = dq_diag;
        b_hat[(m + s, i)] = dd_diag;

        for (t, &j) in model.layout.flux_machine.iter().enumerate() {
            g_e[(s, t)] = k[(i, j)];
            g_e[(s, m + t)] = -h[(i, j)];
            g_e[(m + s, t)] = h[(i, j)];
            g_e[(m + s, m + t)] = k[(i, j)];
        }
    }
    (b_hat, g_e)
}
