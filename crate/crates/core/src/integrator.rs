//! Adaptive Dormand-Prince 5(4) integrator with dense output.
//!
//! Explicit 7-stage embedded pair with the FSAL property and the standard
//! 4th-order continuous extension. Step size is controlled by the scaled RMS
//! error norm. The driver emits samples at a fixed interval through the dense
//! interpolant, so trajectory resolution is independent of step selection.

use nalgebra::DVector;

use crate::error::{Error, Result};

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
/// 5th-order weights minus 4th-order weights (error estimator).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Dense-output coefficients of the 4th-order continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; estimated from the right-hand side when absent.
    pub h0: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOpts {
    fn default() -> Self {
        Self {
            rtol: 1e-7,
            atol: 1e-9,
            h0: None,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
}

/// Dense interpolant over one accepted step.
struct DenseSegment {
    t0: f64,
    h: f64,
    cont: [DVector<f64>; 5],
}

impl DenseSegment {
    fn eval(&self, t: f64) -> DVector<f64> {
        let theta = (t - self.t0) / self.h;
        let th1 = 1.0 - theta;
        let inner = &self.cont[3] + &self.cont[4] * th1;
        let mid = &self.cont[2] + inner * theta;
        &self.cont[0] + (&self.cont[1] + mid * th1) * theta
    }
}

/// Integrate `dx/dt = f(t, x)` from `t0` to `tf > t0`, returning states
/// sampled every `dt_sample` (plus the exact endpoint).
pub fn integrate_sampled<F>(
    mut f: F,
    t0: f64,
    tf: f64,
    x0: &DVector<f64>,
    dt_sample: f64,
    opts: &OdeOpts,
) -> Result<(Vec<f64>, Vec<DVector<f64>>, OdeStats)>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
{
    if !(tf.is_finite() && t0.is_finite() && tf > t0) {
        return Err(Error::Invalid(format!(
            "integration span must be forward: t0 = {t0}, tf = {tf}"
        )));
    }
    if !(dt_sample.is_finite() && dt_sample > 0.0) {
        return Err(Error::Invalid("sample interval must be > 0".into()));
    }
    let span = tf - t0;
    let dim = x0.len();
    let mut stats = OdeStats::default();

    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(dim)).collect();
    let mut y = x0.clone();
    let mut t = t0;
    f(t, &y, &mut k[0]);
    stats.rhs_evals += 1;

    let scale = |y0: &DVector<f64>, y1: &DVector<f64>, i: usize| -> f64 {
        opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs())
    };

    let mut h = opts.h0.unwrap_or_else(|| {
        // crude starting step from the initial slope
        let d0 = y.amax().max(1e-6);
        let d1 = k[0].amax().max(1e-10);
        (0.01 * d0 / d1).min(span / 10.0).max(span * 1e-12)
    });

    let mut times = vec![t0];
    let mut states = vec![y.clone()];
    let mut next_sample = t0 + dt_sample;

    let mut ysti = DVector::zeros(dim);
    let h_floor = span * 1e-14;

    while t < tf {
        if stats.steps_accepted + stats.steps_rejected >= opts.max_steps {
            return Err(Error::StepBudget {
                steps: opts.max_steps,
                t,
            });
        }
        if h < h_floor {
            return Err(Error::StepUnderflow { t, h });
        }
        if t + h > tf {
            h = tf - t;
        }

        // stages 2..7 (k[0] is FSAL from the previous step)
        for s in 0..6 {
            ysti.copy_from(&y);
            for (j, kj) in k.iter().enumerate().take(s + 1) {
                if A[s][j] != 0.0 {
                    ysti.axpy(h * A[s][j], kj, 1.0);
                }
            }
            let (head, tail) = k.split_at_mut(s + 1);
            let _ = head;
            f(t + C[s] * h, &ysti, &mut tail[0]);
            stats.rhs_evals += 1;
        }
        // stage 7 used y1 = ysti (the b row equals a[5]); k[6] = f(t+h, y1)

        // scaled RMS error
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = scale(&y, &ysti, i);
            let r = h * e / sc;
            err_sq += r * r;
        }
        let err = (err_sq / dim as f64).sqrt();

        if err <= 1.0 {
            let t_new = t + h;
            if next_sample <= t_new + 1e-12 * span && next_sample < tf {
                // build the dense interpolant only when a sample lands here
                let ydiff = &ysti - &y;
                let bspl = &k[0] * h - &ydiff;
                let mut c4 = DVector::zeros(dim);
                for (j, kj) in k.iter().enumerate() {
                    if D[j] != 0.0 {
                        c4.axpy(D[j], kj, 1.0);
                    }
                }
                let seg = DenseSegment {
                    t0: t,
                    h,
                    cont: [
                        y.clone(),
                        ydiff.clone(),
                        bspl.clone(),
                        &k[6] * (-h) + &ydiff - &bspl,
                        c4 * h,
                    ],
                };
                while next_sample <= t_new + 1e-12 * span && next_sample < tf {
                    times.push(next_sample);
                    states.push(seg.eval(next_sample));
                    next_sample += dt_sample;
                }
            }

            t = t_new;
            std::mem::swap(&mut y, &mut ysti); // y <- y1 (ysti holds y1)
            let (first, rest) = k.split_at_mut(1);
            std::mem::swap(&mut first[0], &mut rest[5]); // FSAL: k1 <- k7
            stats.steps_accepted += 1;

            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= fac;
            if t >= tf {
                times.push(tf);
                states.push(y.clone());
                break;
            }
        } else {
            stats.steps_rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0).min(0.9);
        }
    }

    Ok((times, states, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let f = |_t: f64, x: &DVector<f64>, dx: &mut DVector<f64>| dx[0] = -2.0 * x[0];
        let x0 = DVector::from_vec(vec![1.5]);
        let opts = OdeOpts {
            rtol: 1e-9,
            atol: 1e-12,
            ..Default::default()
        };
        let (_ts, xs, stats) = integrate_sampled(f, 0.0, 3.0, &x0, 0.1, &opts).unwrap();
        let last = xs.last().unwrap();
        assert_relative_eq!(last[0], 1.5 * (-6.0_f64).exp(), max_relative = 1e-8);
        assert!(stats.steps_rejected < stats.steps_accepted);
    }

    #[test]
    fn harmonic_oscillator_dense_samples_stay_on_circle() {
        let f = |_t: f64, x: &DVector<f64>, dx: &mut DVector<f64>| {
            dx[0] = x[1];
            dx[1] = -x[0];
        };
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let opts = OdeOpts {
            rtol: 1e-9,
            atol: 1e-11,
            ..Default::default()
        };
        let (ts, xs, _) = integrate_sampled(f, 0.0, 10.0, &x0, 0.05, &opts).unwrap();
        assert_eq!(ts.len(), xs.len());
        // samples are uniformly spaced plus the endpoint
        assert!((ts[1] - ts[0] - 0.05).abs() < 1e-12);
        assert_relative_eq!(*ts.last().unwrap(), 10.0);
        for (t, x) in ts.iter().zip(&xs) {
            assert_relative_eq!(x[0], t.cos(), epsilon = 1e-7);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert_relative_eq!(r, 1.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn step_budget_guard_fires() {
        let f = |_t: f64, x: &DVector<f64>, dx: &mut DVector<f64>| dx[0] = -1e9 * x[0];
        let x0 = DVector::from_vec(vec![1.0]);
        let opts = OdeOpts {
            max_steps: 50,
            ..Default::default()
        };
        let err = integrate_sampled(f, 0.0, 1.0, &x0, 0.1, &opts).unwrap_err();
        assert!(matches!(err, Error::StepBudget { .. }));
    }
}
