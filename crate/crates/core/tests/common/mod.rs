//! Shared helpers for the integration suites: finite-difference oracles, the
//! real 2N x 2N embedding used to cross-check complex linear algebra, random
//! spec generators and equilibrium samplers.
#![allow(dead_code)]

use gridpass_core::equilibrium::{self, Equilibrium, FixedAngles, SolverOpts};
use gridpass_core::model::{Machine, MachineParams, NetworkSpec, PowerSystemModel, SystemState};
use gridpass_core::network::LineParams;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

pub fn fd_gradient<F: FnMut(&DVector<f64>) -> f64>(
    mut f: F,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

pub fn fd_jacobian<F: FnMut(&DVector<f64>) -> DVector<f64>>(
    mut f: F,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let m = f0.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let d = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.column_mut(j).copy_from(&d);
    }
    jac
}

/// Second-order central stencil for the Hessian of a scalar function.
pub fn fd_hessian<F: FnMut(&DVector<f64>) -> f64>(
    mut f: F,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let f0 = f(x);
    for i in 0..n {
        for j in 0..=i {
            let v = if i == j {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                (f(&xp) - 2.0 * f0 + f(&xm)) / (h * h)
            } else {
                let mut xpp = x.clone();
                let mut xpm = x.clone();
                let mut xmp = x.clone();
                let mut xmm = x.clone();
                xpp[i] += h;
                xpp[j] += h;
                xpm[i] += h;
                xpm[j] -= h;
                xmp[i] -= h;
                xmp[j] += h;
                xmm[i] -= h;
                xmm[j] -= h;
                (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h * h)
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

// ---------------------------------------------------------------------------
// real embedding of complex linear algebra (independent inversion oracle)
// ---------------------------------------------------------------------------

/// Embed M + jN as [[M, -N], [N, M]].
pub fn embed(m: &CMatrix) -> DMatrix<f64> {
    let n = m.nrows();
    let mut e = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            e[(r, c)] = m[(r, c)].re;
            e[(r, c + n)] = -m[(r, c)].im;
            e[(r + n, c)] = m[(r, c)].im;
            e[(r + n, c + n)] = m[(r, c)].re;
        }
    }
    e
}

/// Invert a complex matrix through its real embedding.
pub fn inverse_via_embedding(m: &CMatrix) -> Option<CMatrix> {
    let n = m.nrows();
    let inv = embed(m).try_inverse()?;
    Some(CMatrix::from_fn(n, n, |r, c| {
        Complex64::new(inv[(r, c)], inv[(r + n, c)])
    }))
}

/// Solve `A x = b` for complex data through the real embedding.
pub fn solve_via_embedding(a: &CMatrix, b: &CVector) -> Option<CVector> {
    let n = a.nrows();
    let mut rhs = DVector::zeros(2 * n);
    for i in 0..n {
        rhs[i] = b[i].re;
        rhs[i + n] = b[i].im;
    }
    let x = embed(a).lu().solve(&rhs)?;
    Some(CVector::from_fn(n, |i, _| Complex64::new(x[i], x[i + n])))
}

pub fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.norm()))
}

// ---------------------------------------------------------------------------
// random fixtures
// ---------------------------------------------------------------------------

/// Random connected line set over `n` buses: a random spanning tree plus a
/// few extra edges.
pub fn random_lines(
    r: &mut ChaCha8Rng,
    n: usize,
    lossless: bool,
    with_shunts: bool,
) -> Vec<LineParams> {
    let mut lines = Vec::new();
    let mut add = |r: &mut ChaCha8Rng, from: usize, to: usize| {
        lines.push(LineParams {
            from,
            to,
            g: if lossless { 0.0 } else { r.gen_range(0.3..2.0) },
            b: -r.gen_range(2.0..12.0),
            c: if with_shunts {
                r.gen_range(1e-4..1e-3)
            } else {
                0.0
            },
        });
    };
    for k in 1..n {
        let parent = r.gen_range(0..k);
        add(r, parent, k);
    }
    for _ in 0..n / 2 {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        if a != b {
            add(r, a, b);
        }
    }
    lines
}

/// Random machine-complete spec: every bus carries a machine, a mix of
/// two-axis generators and classical loads.
pub fn random_spec(r: &mut ChaCha8Rng, n: usize, lossless: bool) -> NetworkSpec {
    let lines = random_lines(r, n, lossless, false);
    let machines = (0..n)
        .map(|bus| {
            let params = if bus < n.div_ceil(2) {
                let x_prime = r.gen_range(0.05..0.3);
                let x = x_prime + r.gen_range(0.1..0.8);
                MachineParams::two_axis(
                    r.gen_range(0.01..0.15),
                    r.gen_range(0.005..0.02),
                    x,
                    x_prime,
                    r.gen_range(4.0..9.0),
                    r.gen_range(0.3..0.7),
                    1.0,
                )
            } else {
                MachineParams::classical(
                    r.gen_range(0.003..0.01),
                    r.gen_range(2e-4..1e-3),
                    r.gen_range(0.2..0.5),
                    r.gen_range(0.9..1.1),
                    -r.gen_range(0.1..0.6),
                )
            };
            Machine { bus, params }
        })
        .collect();
    NetworkSpec {
        omega0: 120.0 * std::f64::consts::PI,
        bus_ids: (1..=n as u32).collect(),
        lines,
        machines,
    }
}

/// Random dynamic state with bounded angle spread and EMFs near 1 pu.
pub fn random_state(r: &mut ChaCha8Rng, model: &PowerSystemModel, spread: f64) -> SystemState {
    let mut s = SystemState::zeros(&model.layout);
    for i in 0..model.n() {
        s.delta[i] = r.gen_range(-spread..spread);
    }
    for w in 0..model.layout.n_omega {
        s.omega[w] = r.gen_range(-0.01..0.01);
    }
    for f in 0..model.layout.n_flux {
        s.e_q[f] = r.gen_range(0.8..1.2);
        s.e_d[f] = r.gen_range(-0.4..0.4);
    }
    s
}

/// Sample equilibria on circles around the origin of the `(d21, d31)` plane,
/// keeping converged ones.
pub fn sample_equilibria(
    model: &PowerSystemModel,
    radii: &[f64],
    per_circle: usize,
) -> Vec<(f64, f64, Equilibrium)> {
    let opts = SolverOpts::default();
    let mut out = Vec::new();
    for &rad in radii {
        for k in 0..per_circle {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / per_circle as f64 + 0.1;
            let (d21, d31) = (rad * phi.cos(), rad * phi.sin());
            if let Ok(eq) = equilibrium::solve_equilibrium(
                model,
                &FixedAngles::new(d21, d31),
                None,
                None,
                &opts,
            ) {
                if eq.converged {
                    out.push((d21, d31, eq));
                }
            }
        }
    }
    out
}

/// Energy coordinates `(delta, e_q, e_d)` flattened, and back.
pub fn energy_coords(model: &PowerSystemModel, s: &SystemState) -> DVector<f64> {
    let n = model.n();
    let m = model.layout.n_flux;
    let mut v = DVector::zeros(n + 2 * m);
    v.rows_mut(0, n).copy_from(&s.delta);
    v.rows_mut(n, m).copy_from(&s.e_q);
    v.rows_mut(n + m, m).copy_from(&s.e_d);
    v
}

pub fn state_from_energy_coords(
    model: &PowerSystemModel,
    base: &SystemState,
    v: &DVector<f64>,
) -> SystemState {
    let n = model.n();
    let m = model.layout.n_flux;
    let mut s = base.clone();
    s.delta = v.rows(0, n).into_owned();
    s.e_q = v.rows(n, m).into_owned();
    s.e_d = v.rows(n + m, m).into_owned();
    s
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Max entrywise relative gap between two matrices, scaled by the larger
/// matrix magnitude.
pub fn matrix_rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    (a - b).iter().fold(0.0_f64, |acc, v| acc.max(v.abs())) / scale
}
