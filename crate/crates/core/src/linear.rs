//! Linearized electromagnetic subsystem and its frequency-domain
//! certificates.
//!
//! At a state `z*` the flux/angle subsystem linearizes to
//! `tau Edot = A E + B d`, `y = C E + L d` with `A = diag2(X - X') Ahat`,
//! `B = diag2(X - X') Bhat`, `Ahat = dg/dE - I2 (x) diag(X / (X'(X - X')))`,
//! `Bhat = dg/d delta`, `C = dP/dE`, `L = dP/d delta`. The synchronizing
//! torque coefficient matrix is the slow-manifold sensitivity
//! `L0 = L - C A^{-1} B`, a weighted graph Laplacian in the lossless case.
//!
//! Certificates evaluate `Hhat(s) = -C (s tau - A)^{-1} B - L` and
//! `H(s) = -Hhat(s) / s` on a log frequency grid and check the
//! negative-imaginary inequality on `Hhat` or the positive-real inequality
//! plus origin-residue condition on `H`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, PSD_EPS};
use crate::model::{PowerSystemModel, SystemState};

/// Linearization of the electromagnetic subsystem at a state.
#[derive(Debug, Clone)]
pub struct LinearModel {
    /// Diagonal of the flux time-constant matrix, `[tau_d.., tau_q..]`.
    pub tau: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    /// `L - C A^{-1} B`; absent when `A` is singular (non-simple origin pole).
    pub l0: Option<DMatrix<f64>>,
    /// The state the model was linearized at.
    pub at: SystemState,
}

impl LinearModel {
    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn n_flux(&self) -> usize {
        self.tau.len() / 2
    }

    pub fn l0(&self) -> Result<&DMatrix<f64>> {
        self.l0.as_ref().ok_or_else(|| Error::Singular {
            what: "flux Jacobian A (origin pole of H is not simple)".into(),
        })
    }

    /// Spectral abscissa of `tau^{-1} A`, the pole locations of `Hhat`.
    pub fn flux_abscissa(&self) -> f64 {
        let m2 = self.tau.len();
        if m2 == 0 {
            return f64::NEG_INFINITY;
        }
        let mut scaled = self.a.clone();
        for r in 0..m2 {
            for c in 0..m2 {
                scaled[(r, c)] /= self.tau[r];
            }
        }
        linalg::spectral_abscissa(&scaled)
    }
}

/// Build the linearized electromagnetic subsystem at `z_star`.
pub fn linearize(model: &PowerSystemModel, z_star: &SystemState) -> Result<LinearModel> {
    let m = model.layout.n_flux;
    let (l, c) = dynamics::jacobian_p(model, z_star);
    let (b_hat, g_e) = dynamics::jacobian_g(model, z_star);

    let mut a_hat = g_e;
    let mut gaps = DVector::zeros(2 * m);
    let mut tau = DVector::zeros(2 * m);
    for (s, &i) in model.layout.flux_machine.iter().enumerate() {
        let mp = &model.machines[i];
        let gap = model.flux_gap(i)?;
        a_hat[(s, s)] -= mp.x / (mp.x_prime * gap);
        a_hat[(m + s, m + s)] -= mp.x / (mp.x_prime * gap);
        gaps[s] = gap;
        gaps[m + s] = gap;
        tau[s] = mp.tau_d;
        tau[m + s] = mp.tau_q;
    }

    let mut a = a_hat.clone();
    let mut b = b_hat.clone();
    for r in 0..2 * m {
        for cc in 0..2 * m {
            a[(r, cc)] *= gaps[r];
        }
        for cc in 0..model.n() {
            b[(r, cc)] *= gaps[r];
        }
    }

    let l0 = a.clone().try_inverse().map(|a_inv| &l - &c * a_inv * &b);

    Ok(LinearModel {
        tau,
        a,
        b,
        c,
        l,
        a_hat,
        b_hat,
        l0,
        at: z_star.clone(),
    })
}

/// Evaluate `(Hhat(s), H(s))` at a complex frequency.
pub fn transfer_eval(lm: &LinearModel, s: Complex64) -> Result<(CMatrix, CMatrix)> {
    if s.norm() == 0.0 {
        return Err(Error::PoleEvaluation { s });
    }
    let m2 = lm.tau.len();
    let mut resolvent_arg = CMatrix::zeros(m2, m2);
    for r in 0..m2 {
        for c in 0..m2 {
            resolvent_arg[(r, c)] = -Complex64::new(lm.a[(r, c)], 0.0);
        }
        resolvent_arg[(r, r)] += s * lm.tau[r];
    }
    let c_cpx = lm.c.map(|v| Complex64::new(v, 0.0));
    let b_cpx = lm.b.map(|v| Complex64::new(v, 0.0));
    let l_cpx = lm.l.map(|v| Complex64::new(v, 0.0));

    let h_hat = if m2 == 0 {
        -l_cpx
    } else {
        let inv = resolvent_arg
            .try_inverse()
            .ok_or(Error::PoleEvaluation { s })?;
        -(c_cpx * inv * b_cpx) - l_cpx
    };
    let h = h_hat.map(|v| -v / s);
    Ok((h_hat, h))
}

/// Logarithmic frequency grid \[rad/s\].
#[derive(Debug, Clone, Copy)]
pub struct FreqGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for FreqGrid {
    fn default() -> Self {
        Self {
            min: 1e-3,
            max: 1e4,
            points: 400,
        }
    }
}

impl FreqGrid {
    pub fn omegas(&self) -> Vec<f64> {
        assert!(self.points >= 2 && self.min > 0.0 && self.max > self.min);
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (0..self.points)
            .map(|k| (lo + (hi - lo) * k as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertProperty {
    PositiveReal,
    NegativeImaginary,
}

impl CertProperty {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertProperty::PositiveReal => "positive_real",
            CertProperty::NegativeImaginary => "negative_imaginary",
        }
    }
}

/// Grid-based frequency-domain certificate.
#[derive(Debug, Clone)]
pub struct FreqCertificate {
    pub property: CertProperty,
    pub verdict: bool,
    /// Frequency of the smallest eigenvalue seen on the grid.
    pub worst_omega: f64,
    /// That smallest eigenvalue.
    pub worst_lambda: f64,
    /// Origin-residue condition (positive-real) or pole stability
    /// (negative-imaginary).
    pub residue_ok: bool,
    /// Whether the flux dynamics is stable (certificate hypothesis).
    pub flux_stable: bool,
    /// Per-frequency minimal eigenvalues, for serialization.
    pub curve: Vec<(f64, f64)>,
}

fn sweep_lambda_min<F>(omegas: &[f64], mut eval: F) -> (Vec<(f64, f64)>, f64, f64, bool)
where
    F: FnMut(f64) -> (f64, f64),
{
    let mut curve = Vec::with_capacity(omegas.len());
    let mut worst = (f64::INFINITY, 0.0);
    let mut all_ok = true;
    for &w in omegas {
        let (lmin, labs_max) = eval(w);
        curve.push((w, lmin));
        if lmin < worst.0 {
            worst = (lmin, w);
        }
        if lmin < -PSD_EPS * labs_max.max(1.0) {
            all_ok = false;
        }
    }
    (curve, worst.0, worst.1, all_ok)
}

/// Negative-imaginary certificate of `Hhat`: checks
/// `j (Hhat(jw) - Hhat(jw)^H) >= 0` over the grid.
pub fn certify_negative_imaginary(lm: &LinearModel, grid: &FreqGrid) -> Result<FreqCertificate> {
    let flux_stable = lm.n_flux() == 0 || lm.flux_abscissa() < 0.0;
    let j = Complex64::new(0.0, 1.0);
    let (curve, worst_lambda, worst_omega, grid_ok) = if flux_stable {
        let omegas = grid.omegas();
        let mut err = None;
        let res = sweep_lambda_min(&omegas, |w| {
            match transfer_eval(lm, Complex64::new(0.0, w)) {
                Ok((h_hat, _)) => {
                    let m = (&h_hat - h_hat.adjoint()) * j;
                    let ev = linalg::hermitian_eigenvalues(&m);
                    let lo = ev.first().copied().unwrap_or(0.0);
                    let hi = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                    (lo, hi)
                }
                Err(e) => {
                    err = Some(e);
                    (f64::NEG_INFINITY, 0.0)
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        res
    } else {
        (Vec::new(), f64::NEG_INFINITY, f64::NAN, false)
    };
    Ok(FreqCertificate {
        property: CertProperty::NegativeImaginary,
        verdict: flux_stable && grid_ok,
        worst_omega,
        worst_lambda,
        residue_ok: flux_stable,
        flux_stable,
        curve,
    })
}

/// Positive-real certificate of `H`: checks `H(jw) + H(jw)^H >= 0` over the
/// grid plus the origin-residue condition (`L0` symmetric and deflated PSD).
pub fn certify_positive_real(lm: &LinearModel, grid: &FreqGrid) -> Result<FreqCertificate> {
    let flux_stable = lm.n_flux() == 0 || lm.flux_abscissa() < 0.0;

    let residue_ok = match lm.l0 {
        Some(ref l0) => {
            let scale = linalg::max_abs(l0).max(1.0);
            let sym_ok = linalg::symmetry_gap(l0) <= PSD_EPS * scale;
            let defl = linalg::deflate_angle_shift(l0, lm.n());
            let (psd, _, _) = linalg::psd_verdict(&defl);
            sym_ok && psd
        }
        None => false,
    };

    let (curve, worst_lambda, worst_omega, grid_ok) = if flux_stable {
        let omegas = grid.omegas();
        let mut err = None;
        let res = sweep_lambda_min(&omegas, |w| {
            match transfer_eval(lm, Complex64::new(0.0, w)) {
                Ok((_, h)) => {
                    let m = &h + h.adjoint();
                    let ev = linalg::hermitian_eigenvalues(&m);
                    let lo = ev.first().copied().unwrap_or(0.0);
                    let hi = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                    (lo, hi)
                }
                Err(e) => {
                    err = Some(e);
                    (f64::NEG_INFINITY, 0.0)
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        res
    } else {
        (Vec::new(), f64::NEG_INFINITY, f64::NAN, false)
    };

    Ok(FreqCertificate {
        property: CertProperty::PositiveReal,
        verdict: flux_stable && grid_ok && residue_ok,
        worst_omega,
        worst_lambda,
        residue_ok,
        flux_stable,
        curve,
    })
}

/// Synchronizing torque coefficient matrix report.
#[derive(Debug, Clone)]
pub struct TorqueReport {
    pub l0: DMatrix<f64>,
    /// Max |L0 - L0^T| entry.
    pub sym_gap: f64,
    /// Spectrum after removing the uniform angle-shift direction.
    pub deflated_eigs: Vec<Complex64>,
    /// Product of eigenvalue real parts above the interior margin.
    pub positive_eig_product: f64,
}

pub fn torque_coefficient_matrix(lm: &LinearModel) -> Result<TorqueReport> {
    let l0 = lm.l0()?.clone();
    let sym_gap = linalg::symmetry_gap(&l0);
    let defl = linalg::deflate_angle_shift(&l0, lm.n());
    let mut deflated_eigs = linalg::eigenvalues(&defl);
    deflated_eigs.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    let positive_eig_product = deflated_eigs
        .iter()
        .filter(|l| l.re > linalg::INTERIOR_EPS)
        .map(|l| l.re)
        .product();
    Ok(TorqueReport {
        l0,
        sym_gap,
        deflated_eigs,
        positive_eig_product,
    })
}
