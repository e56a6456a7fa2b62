//! Strain energy functions, Bregman storage and the convexity-based
//! equilibrium set.
//!
//! The strain energy is defined on the lossless network only; its angle
//! gradient equals the active power output and its flux gradient encodes the
//! flux dynamics, which is what makes the Bregman divergence a storage
//! function. Energy coordinates are `(delta_0..N, E_q slots, E_d slots)`,
//! classical and droop machines contributing constant-EMF terms.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{self, Inputs};
use crate::error::{Error, Result};
use crate::linalg::{self, INTERIOR_EPS};
use crate::linear;
use crate::model::{PowerSystemModel, SystemState};

fn require_lossless(model: &PowerSystemModel) -> Result<()> {
    if !model.reduced.lossless {
        return Err(Error::LossyNetwork {
            gred_max: model.reduced.gred_max(),
        });
    }
    Ok(())
}

/// Strain energy U at a state.
pub fn strain_energy(model: &PowerSystemModel, state: &SystemState) -> Result<f64> {
    require_lossless(model)?;
    let n = model.n();
    let (eq, ed) = dynamics::internal_emf(model, state);
    let b = &model.reduced.bred;

    let mut u = 0.0;
    for (s, &i) in model.layout.flux_machine.iter().enumerate() {
        let p = &model.machines[i];
        let gap = model.flux_gap(i)?;
        u += p.x * (state.e_q[s] * state.e_q[s] + state.e_d[s] * state.e_d[s])
            / (2.0 * p.x_prime * gap);
    }
    for i in 0..n {
        for j in 0..n {
            let dij = state.delta[i] - state.delta[j];
            let (sin_d, cos_d) = dij.sin_cos();
            u += 0.5
                * b[(i, j)]
                * (eq[i] * (eq[j] * cos_d - ed[j] * sin_d)
                    + ed[i] * (ed[j] * cos_d + eq[j] * sin_d));
        }
    }
    Ok(u)
}

/// Analytic gradient of U over the energy coordinates.
pub fn strain_energy_gradient(
    model: &PowerSystemModel,
    state: &SystemState,
) -> Result<DVector<f64>> {
    require_lossless(model)?;
    let n = model.n();
    let m = model.layout.n_flux;
    let p = dynamics::active_power(model, state);
    let (gq, gd) = dynamics::voltage_terms(model, state);
    let mut grad = DVector::zeros(n + 2 * m);
    grad.rows_mut(0, n).copy_from(&p);
    for (s, &i) in model.layout.flux_machine.iter().enumerate() {
        let mp = &model.machines[i];
        let gap = model.flux_gap(i)?;
        grad[n + s] = mp.x * state.e_q[s] / (mp.x_prime * gap) - gq[i];
        grad[n + m + s] = mp.x * state.e_d[s] / (mp.x_prime * gap) - gd[i];
    }
    Ok(grad)
}

/// Analytic Hessian of U together with its deflated definiteness verdict.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub u: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    /// PSD verdict after removing the uniform angle-shift direction.
    pub hess_psd: bool,
    /// Smallest deflated eigenvalue.
    pub lambda_min: f64,
}

/// Assemble U, its gradient and Hessian at a state.
pub fn hessian_u(model: &PowerSystemModel, state: &SystemState) -> Result<EnergyReport> {
    require_lossless(model)?;
    let n = model.n();
    let m = model.layout.n_flux;
    let b = &model.reduced.bred;
    let dim = n + 2 * m;

    let (l, c) = dynamics::jacobian_p(model, state);
    let mut hess = DMatrix::zeros(dim, dim);
    hess.view_mut((0, 0), (n, n)).copy_from(&l);
    hess.view_mut((0, n), (n, 2 * m)).copy_from(&c);
    hess.view_mut((n, 0), (2 * m, n)).copy_from(&c.transpose());

    // flux block: second derivatives of the quadratic and coupling terms
    for (s, &i) in model.layout.flux_machine.iter().enumerate() {
        let mp = &model.machines[i];
        let gap = model.flux_gap(i)?;
        let diag = mp.x / (mp.x_prime * gap);
        for (t, &j) in model.layout.flux_machine.iter().enumerate() {
            let dij = state.delta[i] - state.delta[j];
            let (sin_d, cos_d) = dij.sin_cos();
            let cos_term = b[(i, j)] * cos_d;
            let sin_term = b[(i, j)] * sin_d;
            hess[(n + s, n + t)] = cos_term;
            hess[(n + m + s, n + m + t)] = cos_term;
            hess[(n + s, n + m + t)] = -sin_term;
            hess[(n + m + s, n + t)] = sin_term;
        }
        hess[(n + s, n + s)] += diag;
        hess[(n + m + s, n + m + s)] += diag;
    }

    let deflated = linalg::deflate_angle_shift(&hess, n);
    let (hess_psd, lambda_min, _) = linalg::psd_verdict(&deflated);
    Ok(EnergyReport {
        u: strain_energy(model, state)?,
        grad: strain_energy_gradient(model, state)?,
        hess,
        hess_psd,
        lambda_min,
    })
}

/// Bregman divergence of U evaluated at `(z, z_star)` together with its time
/// derivative along the closed loop and the passivity supply rate.
#[derive(Debug, Clone, Copy)]
pub struct StorageEvaluation {
    pub w: f64,
    pub dwdt: f64,
    pub supply: f64,
}

/// Evaluate the storage `W = U(z) - U(z*) - grad U(z*) (z - z*)`, its
/// derivative `dW/dt = (grad U(z) - grad U(z*)) zdot` and the supply
/// `(u - u*)^T (y - y*)` with `u = delta_dot`, `y = P(z)` and `u* = 0`.
pub fn bregman_storage(
    model: &PowerSystemModel,
    state: &SystemState,
    z_star: &SystemState,
    inputs: &Inputs,
) -> Result<StorageEvaluation> {
    let n = model.n();
    let m = model.layout.n_flux;
    let u = strain_energy(model, state)?;
    let u_star = strain_energy(model, z_star)?;
    let grad = strain_energy_gradient(model, state)?;
    let grad_star = strain_energy_gradient(model, z_star)?;

    let dz = {
        let mut v = DVector::zeros(n + 2 * m);
        v.rows_mut(0, n).copy_from(&(&state.delta - &z_star.delta));
        v.rows_mut(n, m).copy_from(&(&state.e_q - &z_star.e_q));
        v.rows_mut(n + m, m).copy_from(&(&state.e_d - &z_star.e_d));
        v
    };
    let w = u - u_star - grad_star.dot(&dz);

    let deriv = dynamics::rhs(model, state, inputs);
    let zdot = {
        let mut v = DVector::zeros(n + 2 * m);
        v.rows_mut(0, n).copy_from(&deriv.delta);
        v.rows_mut(n, m).copy_from(&deriv.e_q);
        v.rows_mut(n + m, m).copy_from(&deriv.e_d);
        v
    };
    let dwdt = (&grad - &grad_star).dot(&zdot);

    let p = dynamics::active_power(model, state);
    let p_star = dynamics::active_power(model, z_star);
    let supply = (0..n).map(|i| deriv.delta[i] * (p[i] - p_star[i])).sum();

    Ok(StorageEvaluation { w, dwdt, supply })
}

/// Strain energy of the constant-EMF (classical) network built on the
/// synchronous-reactance reduced susceptance: value, gradient and Hessian.
/// The Hessian is a weighted graph Laplacian with edge weights
/// `-V_fdi V_fdj Btil_ij cos d_ij`.
pub fn classical_strain_energy(
    btilred: &DMatrix<f64>,
    v_fd: &DVector<f64>,
    delta: &DVector<f64>,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = delta.len();
    assert_eq!(btilred.nrows(), n);
    assert_eq!(v_fd.len(), n);
    let mut u = 0.0;
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            let w = v_fd[i] * v_fd[j] * btilred[(i, j)];
            let dij = delta[i] - delta[j];
            let (sin_d, cos_d) = dij.sin_cos();
            u += 0.5 * w * cos_d;
            grad[i] -= w * sin_d;
            if i != j {
                hess[(i, j)] = w * cos_d;
                diag -= w * cos_d;
            }
        }
        hess[(i, i)] = diag;
    }
    (u, grad, hess)
}

/// Membership verdict for the convexity-based equilibrium set, evaluated both
/// through the Hessian of U and through the equivalent pair
/// (flux Jacobian negative definite, classical-network Hessian PSD).
#[derive(Debug, Clone, Copy)]
pub struct Membership {
    pub in_e: bool,
    /// Smallest deflated eigenvalue of the Hessian of U.
    pub lambda_min_hess: f64,
    /// Largest eigenvalue of the symmetric flux Jacobian factor.
    pub lambda_max_ahat: f64,
    /// Smallest deflated eigenvalue of the classical-network Hessian.
    pub lambda_min_util: f64,
    /// True when any of the margins sits inside the boundary band.
    pub boundary: bool,
}

/// Band inside which the two membership routes may disagree without raising
/// an internal-consistency error.
pub const MEMBERSHIP_BAND: f64 = 1e-6;

pub fn membership_e(model: &PowerSystemModel, z_star: &SystemState) -> Result<Membership> {
    require_lossless(model)?;
    let report = hessian_u(model, z_star)?;
    let in_e = report.lambda_min > INTERIOR_EPS;

    let lm = linear::linearize(model, z_star)?;
    let ahat_eigs = linalg::sym_eigenvalues(&lm.a_hat);
    let lambda_max_ahat = ahat_eigs.last().copied().unwrap_or(f64::NEG_INFINITY);

    let btil = model.reduced.btilred()?;
    let (_, _, util_hess) = classical_strain_energy(btil, &model.v_fd(), &z_star.delta);
    let util_defl = linalg::deflate_angle_shift(&util_hess, model.n());
    let util_eigs = linalg::sym_eigenvalues(&util_defl);
    let lambda_min_util = util_eigs.first().copied().unwrap_or(f64::INFINITY);

    let in_e_pair = lambda_max_ahat < -INTERIOR_EPS && lambda_min_util > INTERIOR_EPS;
    let margin = report
        .lambda_min
        .abs()
        .min(lambda_max_ahat.abs())
        .min(lambda_min_util.abs());
    let boundary = margin < MEMBERSHIP_BAND;
    if in_e != in_e_pair && !boundary {
        return Err(Error::VerdictMismatch {
            detail: format!(
                "hessian route {} (lambda_min {:.3e}) vs flux/classical route {} \
                 (lambda_max_ahat {:.3e}, lambda_min_util {:.3e})",
                in_e, report.lambda_min, in_e_pair, lambda_max_ahat, lambda_min_util
            ),
        });
    }

    Ok(Membership {
        in_e,
        lambda_min_hess: report.lambda_min,
        lambda_max_ahat,
        lambda_min_util,
        boundary,
    })
}
