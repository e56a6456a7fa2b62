//! Transmission network assembly and Kron reduction.
//!
//! The network is described by pi-model lines `(g, b, c)`. Assembly produces
//! the bus admittance matrix `Y = G + jB` where `G` is a weighted graph
//! Laplacian and `B` decomposes as `B0 + diag(beta)` with `B0` the sign
//! inversion of a weighted graph Laplacian and `beta_i` the total shunt
//! susceptance at bus i. Eliminating the algebraic bus phasors against the
//! machine reactances yields the reduced coupling matrices
//! `Y_red = G_red + j B_red = -j Gamma^{-1}`, and the companion matrix
//! `Btil_red` built with the synchronous reactances.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Reciprocal condition estimate below which `Gamma` is treated as singular.
pub const GAMMA_RCOND_MIN: f64 = 1e-12;

/// Max |G_red| entry below which a reduced network is flagged lossless.
pub const LOSSLESS_TOL: f64 = 1e-10;

/// Pi-model transmission line between two buses.
///
/// `g >= 0` is the line conductance, `b <= 0` the line susceptance and
/// `c >= 0` the total ground capacitance, all in per unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
    pub c: f64,
}

/// Bus admittance matrix with its shunt decomposition.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    /// Complex bus admittance matrix, N x N, symmetric.
    pub y: CMatrix,
    /// Shunt constants `beta_i = sum_j omega0 * c_ij / 2` (for assembled
    /// networks) or the imaginary row sums (for derived, bus-eliminated ones).
    pub beta: DVector<f64>,
    /// External bus labels, one per row of `y`.
    pub bus_ids: Vec<u32>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    /// Conductance matrix G = Re(Y).
    pub fn g(&self) -> DMatrix<f64> {
        self.y.map(|c| c.re)
    }

    /// Susceptance matrix B = Im(Y).
    pub fn b(&self) -> DMatrix<f64> {
        self.y.map(|c| c.im)
    }

    /// Shunt-free part B0 = B - diag(beta).
    pub fn b0(&self) -> DMatrix<f64> {
        let mut b0 = self.b();
        for i in 0..self.n() {
            b0[(i, i)] -= self.beta[i];
        }
        b0
    }
}

/// Kron-reduced coupling data of a machine-complete network.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    /// Gamma = diag(x) - j diag(x) conj(Y) diag(x).
    pub gamma: CMatrix,
    /// Y_red = -j Gamma^{-1}.
    pub yred: CMatrix,
    /// Re(Y_red), positive semidefinite.
    pub gred: DMatrix<f64>,
    /// Im(Y_red), negative definite.
    pub bred: DMatrix<f64>,
    /// Shunt constants carried over from the admittance matrix.
    pub beta: DVector<f64>,
    /// Machine coupling reactances used to build Gamma.
    pub coupling_x: Vec<f64>,
    /// Reduced susceptance built with the synchronous reactances, when the
    /// shunt condition admits it.
    pub btilred: Option<DMatrix<f64>>,
    /// True when max |G_red| <= LOSSLESS_TOL.
    pub lossless: bool,
}

impl ReducedNetwork {
    pub fn n(&self) -> usize {
        self.gred.nrows()
    }

    pub fn btilred(&self) -> Result<&DMatrix<f64>> {
        self.btilred.as_ref().ok_or_else(|| {
            Error::Invalid("reduced susceptance with synchronous reactances unavailable".into())
        })
    }

    pub fn gred_max(&self) -> f64 {
        linalg::max_abs(&self.gred)
    }
}

/// Outcome of the shunt-reactance condition `beta_i * x_i <= 1` with strict
/// inequality at one bus or more, which guarantees that `Gamma` (or the
/// synchronous-reactance analogue) is non-singular.
#[derive(Debug, Clone)]
pub struct GammaCertificate {
    pub condition_holds: bool,
    /// Buses where the inequality is strict.
    pub strict_at: Vec<usize>,
    /// The per-bus products beta_i * x_i.
    pub products: Vec<f64>,
}

fn validate_lines(n: usize, lines: &[LineParams]) -> Result<()> {
    for (idx, l) in lines.iter().enumerate() {
        let fail = |reason: String| Err(Error::InvalidLine { index: idx, reason });
        if l.from >= n || l.to >= n {
            return fail(format!("bus index out of range (n = {n})"));
        }
        if l.from == l.to {
            return fail("from and to bus coincide".into());
        }
        if !(l.g.is_finite() && l.g >= 0.0) {
            return fail(format!("conductance g = {} must be >= 0", l.g));
        }
        if !(l.b.is_finite() && l.b <= 0.0) {
            return fail(format!("susceptance b = {} must be <= 0", l.b));
        }
        if !(l.c.is_finite() && l.c >= 0.0) {
            return fail(format!("ground capacitance c = {} must be >= 0", l.c));
        }
    }
    Ok(())
}

fn check_connected(n: usize, lines: &[LineParams]) -> Result<()> {
    if n == 0 {
        return Err(Error::Invalid("network has no buses".into()));
    }
    let mut adj = vec![Vec::new(); n];
    for l in lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0_usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    let reached = seen.iter().filter(|&&s| s).count();
    if reached != n {
        // count components for the diagnostic
        let mut comp = 0;
        let mut seen = vec![false; n];
        for s in 0..n {
            if !seen[s] {
                comp += 1;
                let mut stack = vec![s];
                seen[s] = true;
                while let Some(i) = stack.pop() {
                    for &j in &adj[i] {
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        return Err(Error::Disconnected { components: comp });
    }
    Ok(())
}

/// Assemble the bus admittance matrix from line data.
///
/// `Y_ii = sum_j (y_ij + j omega0 c_ij / 2)` over incident lines and
/// `Y_ij = -y_ij` off the diagonal, with `y_ij = g_ij + j b_ij`.
pub fn build_admittance(
    bus_ids: &[u32],
    lines: &[LineParams],
    omega0: f64,
) -> Result<AdmittanceMatrix> {
    let n = bus_ids.len();
    validate_lines(n, lines)?;
    check_connected(n, lines)?;

    let mut y = CMatrix::zeros(n, n);
    let mut beta = DVector::zeros(n);
    for l in lines {
        let yl = Complex64::new(l.g, l.b);
        let shunt = omega0 * l.c / 2.0;
        y[(l.from, l.to)] -= yl;
        y[(l.to, l.from)] -= yl;
        y[(l.from, l.from)] += yl + Complex64::new(0.0, shunt);
        y[(l.to, l.to)] += yl + Complex64::new(0.0, shunt);
        beta[l.from] += shunt;
        beta[l.to] += shunt;
    }
    Ok(AdmittanceMatrix {
        y,
        beta,
        bus_ids: bus_ids.to_vec(),
    })
}

/// Eliminate zero-injection buses by the Schur complement
/// `Y_rr - Y_re Y_ee^{-1} Y_er`. The retained matrix is a derived equivalent:
/// its shunt constants are recovered from the imaginary row sums, and its
/// real part is only approximately a Laplacian when the eliminated buses
/// carry both shunts and losses.
pub fn eliminate_buses(y: &AdmittanceMatrix, retain: &[usize]) -> Result<AdmittanceMatrix> {
    let n = y.n();
    let mut is_kept = vec![false; n];
    for &r in retain {
        if r >= n {
            return Err(Error::Dimension {
                what: format!("retained bus index {r} out of range (n = {n})"),
            });
        }
        is_kept[r] = true;
    }
    let drop: Vec<usize> = (0..n).filter(|i| !is_kept[*i]).collect();
    if drop.is_empty() {
        return Ok(y.clone());
    }

    let pick = |rows: &[usize], cols: &[usize]| -> CMatrix {
        CMatrix::from_fn(rows.len(), cols.len(), |i, j| y.y[(rows[i], cols[j])])
    };
    let y_rr = pick(retain, retain);
    let y_re = pick(retain, &drop);
    let y_er = pick(&drop, retain);
    let y_ee = pick(&drop, &drop);
    let y_ee_inv = y_ee.try_inverse().ok_or_else(|| Error::Singular {
        what: "admittance block of eliminated buses".into(),
    })?;
    let y_eff = y_rr - y_re * y_ee_inv * y_er;

    let m = retain.len();
    let beta = DVector::from_fn(m, |i, _| (0..m).map(|j| y_eff[(i, j)].im).sum::<f64>());
    Ok(AdmittanceMatrix {
        y: y_eff,
        beta,
        bus_ids: retain.iter().map(|&r| y.bus_ids[r]).collect(),
    })
}

/// Check the shunt-reactance product condition `beta_i * x_i <= 1` with
/// strictness at one bus or more.
pub fn check_gamma_nonsingular(y: &AdmittanceMatrix, reactances: &[f64]) -> GammaCertificate {
    assert_eq!(y.n(), reactances.len(), "one reactance per bus");
    let products: Vec<f64> = (0..y.n()).map(|i| y.beta[i] * reactances[i]).collect();
    let all_ok = products.iter().all(|&p| p <= 1.0);
    let strict_at: Vec<usize> = products
        .iter()
        .enumerate()
        .filter(|(_, &p)| p < 1.0)
        .map(|(i, _)| i)
        .collect();
    GammaCertificate {
        condition_holds: all_ok && !strict_at.is_empty(),
        strict_at,
        products,
    }
}

/// Kron reduction against the machine coupling reactances:
/// `Gamma = diag(x) - j diag(x) conj(Y) diag(x)` and `Y_red = -j Gamma^{-1}`.
pub fn kron_reduce(y: &AdmittanceMatrix, reactances: &[f64]) -> Result<ReducedNetwork> {
    let n = y.n();
    if reactances.len() != n {
        return Err(Error::Dimension {
            what: format!("{} reactances for {} buses", reactances.len(), n),
        });
    }
    let j = Complex64::new(0.0, 1.0);
    let x = DVector::from_column_slice(reactances);
    let mut gamma = CMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            gamma[(r, c)] = -j * x[r] * y.y[(r, c)].conj() * x[c];
        }
        gamma[(r, r)] += Complex64::new(x[r], 0.0);
    }

    let gamma_inv = gamma.clone().try_inverse().ok_or(Error::GammaSingular {
        rcond: 0.0,
        threshold: GAMMA_RCOND_MIN,
    })?;
    let norm1 = |m: &CMatrix| -> f64 {
        (0..m.ncols())
            .map(|c| (0..m.nrows()).map(|r| m[(r, c)].norm()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    };
    let rcond = 1.0 / (norm1(&gamma) * norm1(&gamma_inv)).max(f64::MIN_POSITIVE);
    if rcond < GAMMA_RCOND_MIN {
        return Err(Error::GammaSingular {
            rcond,
            threshold: GAMMA_RCOND_MIN,
        });
    }

    let yred = gamma_inv * (-j);
    let (gred, bred) = linalg::re_im(&yred);
    let lossless = linalg::max_abs(&gred) <= LOSSLESS_TOL;
    Ok(ReducedNetwork {
        gamma,
        yred,
        gred,
        bred,
        beta: y.beta.clone(),
        coupling_x: reactances.to_vec(),
        btilred: None,
        lossless,
    })
}

/// Reduced susceptance matrix built with the synchronous reactances:
/// `Btil_red = -K^{-1}` with `K = diag(X) - diag(X) B diag(X)`. Under the
/// shunt condition `beta_i X_i <= 1` (strict somewhere), `K` is a
/// non-singular M-matrix and every entry of the result is non-positive.
pub fn build_btilred(y: &AdmittanceMatrix, sync_reactances: &[f64]) -> Result<DMatrix<f64>> {
    let n = y.n();
    if sync_reactances.len() != n {
        return Err(Error::Dimension {
            what: format!("{} reactances for {} buses", sync_reactances.len(), n),
        });
    }
    let cert = check_gamma_nonsingular(y, sync_reactances);
    if !cert.condition_holds {
        let (bus, &value) = cert
            .products
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("non-empty");
        return Err(Error::ShuntCondition { bus, value });
    }

    let b = y.b();
    let mut k = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            k[(r, c)] = -sync_reactances[r] * b[(r, c)] * sync_reactances[c];
        }
        k[(r, r)] += sync_reactances[r];
    }
    let k_inv = k.try_inverse().ok_or_else(|| Error::Singular {
        what: "synchronous-reactance coupling matrix K".into(),
    })?;
    Ok(-k_inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_bus(g: f64, b: f64, c: f64) -> AdmittanceMatrix {
        build_admittance(
            &[1, 2],
            &[LineParams {
                from: 0,
                to: 1,
                g,
                b,
                c,
            }],
            120.0 * std::f64::consts::PI,
        )
        .unwrap()
    }

    #[test]
    fn lossless_two_bus_matches_hand_matrix() {
        let y = two_bus(0.0, -1.0, 0.0);
        assert!(linalg::max_abs(&y.g()) == 0.0);
        let b = y.b();
        assert_eq!(b[(0, 0)], -1.0);
        assert_eq!(b[(0, 1)], 1.0);
        assert_eq!(b[(1, 0)], 1.0);
        assert_eq!(b[(1, 1)], -1.0);
    }

    #[test]
    fn sign_violations_are_rejected() {
        let line = |g: f64, b: f64, c: f64| LineParams {
            from: 0,
            to: 1,
            g,
            b,
            c,
        };
        for bad in [
            line(-0.1, -1.0, 0.0),
            line(0.0, 0.5, 0.0),
            line(0.0, -1.0, -1e-4),
        ] {
            let err = build_admittance(&[1, 2], &[bad], 377.0).unwrap_err();
            assert!(matches!(err, Error::InvalidLine { .. }), "{err}");
        }
        let self_loop = LineParams {
            from: 1,
            to: 1,
            g: 0.0,
            b: -1.0,
            c: 0.0,
        };
        assert!(build_admittance(&[1, 2], &[self_loop], 377.0).is_err());
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let lines = [LineParams {
            from: 0,
            to: 1,
            g: 0.0,
            b: -2.0,
            c: 0.0,
        }];
        let err = build_admittance(&[1, 2, 3], &lines, 377.0).unwrap_err();
        assert!(matches!(err, Error::Disconnected { components: 2 }));
    }

    #[test]
    fn kron_two_bus_lossless_hand_value() {
        // X' = (0.1, 0.2), b = -5: Gamma = [[0.15, -0.1], [-0.1, 0.4]] (real),
        // Gamma^{-1} = [[8, 2], [2, 3]], so B_red = [[-8, -2], [-2, -3]].
        let y = two_bus(0.0, -5.0, 0.0);
        let red = kron_reduce(&y, &[0.1, 0.2]).unwrap();
        assert!(red.lossless);
        let want = [[-8.0, -2.0], [-2.0, -3.0]];
        for (r, row) in want.iter().enumerate() {
            for (c, expect) in row.iter().enumerate() {
                assert_relative_eq!(red.bred[(r, c)], *expect, epsilon = 1e-12);
                assert!(red.gred[(r, c)].abs() < 1e-14);
            }
        }
        let (psd, lo, _) = linalg::psd_verdict(&(-red.bred.clone()));
        assert!(psd && lo > 0.0, "B_red must be negative definite");
    }

    #[test]
    fn gamma_condition_certificate() {
        let y = two_bus(0.0, -5.0, 1e-3);
        let cert = check_gamma_nonsingular(&y, &[0.1, 0.2]);
        assert!(cert.condition_holds);
        assert_eq!(cert.strict_at, vec![0, 1]);

        // no shunts: beta = 0 and the inequality is strict everywhere
        let cert = check_gamma_nonsingular(&two_bus(0.0, -5.0, 0.0), &[0.1, 0.2]);
        assert!(cert.condition_holds);
        assert_eq!(cert.products, vec![0.0, 0.0]);

        // inflate the shunt so beta_0 * x_0 = 1.5
        let mut inflated = y.clone();
        inflated.beta[0] = 15.0;
        let cert = check_gamma_nonsingular(&inflated, &[0.1, 0.2]);
        assert!(!cert.condition_holds);
        assert!(cert.products[0] > 1.0);
    }

    #[test]
    fn btilred_degenerate_single_bus() {
        let y = AdmittanceMatrix {
            y: CMatrix::zeros(1, 1),
            beta: DVector::zeros(1),
            bus_ids: vec![1],
        };
        let bt = build_btilred(&y, &[0.5]).unwrap();
        assert_relative_eq!(bt[(0, 0)], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn btilred_two_bus_hand_value() {
        // X = (0.3, 0.3), b = -4: K = [[0.66, -0.36], [-0.36, 0.66]],
        // det K = 0.306, Btil = -K^{-1} = -[[0.66, 0.36], [0.36, 0.66]] / 0.306.
        let y = two_bus(0.0, -4.0, 0.0);
        let bt = build_btilred(&y, &[0.3, 0.3]).unwrap();
        assert_relative_eq!(bt[(0, 0)], -0.66 / 0.306, epsilon = 1e-12);
        assert_relative_eq!(bt[(0, 1)], -0.36 / 0.306, epsilon = 1e-12);
        assert_relative_eq!(bt[(1, 0)], -0.36 / 0.306, epsilon = 1e-12);
        assert_relative_eq!(bt[(1, 1)], -0.66 / 0.306, epsilon = 1e-12);
    }

    #[test]
    fn gamma_singular_at_unit_shunt_product_is_detected() {
        // a pure-shunt bus with beta * x = 1 makes Gamma exactly singular
        let omega0 = 120.0 * std::f64::consts::PI;
        let c = 2.0 / omega0; // beta = omega0 c / 2 = 1
        let y = build_admittance(
            &[1, 2],
            &[LineParams {
                from: 0,
                to: 1,
                g: 0.0,
                b: 0.0,
                c,
            }],
            omega0,
        )
        .unwrap();
        let cert = check_gamma_nonsingular(&y, &[1.0, 1.0]);
        assert!(!cert.condition_holds, "no strict bus remains");
        let err = kron_reduce(&y, &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::GammaSingular { .. }), "{err}");
    }

    #[test]
    fn btilred_requires_shunt_condition() {
        let mut y = two_bus(0.0, -4.0, 0.0);
        y.beta[0] = 10.0;
        y.beta[1] = 10.0;
        let err = build_btilred(&y, &[0.3, 0.3]).unwrap_err();
        assert!(matches!(err, Error::ShuntCondition { .. }));
    }
}
