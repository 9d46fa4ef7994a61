//! Unconditional (outcome-averaged) Lindblad evolution of the correlation
//! matrix, solved exactly through the eigendecomposition of `Z`.

use faer::Mat;

use crate::error::{Error, Result};
use crate::gaussian::CorrelationMatrix;
use crate::linalg::{self, I, ONE, ZERO};
use crate::model::JumpChannels;
use crate::{CMat, C64};

/// Below this `|lambda_l - conj(lambda_l')|` the kernel uses its series form.
pub const DEGENERATE_GUARD: f64 = 1e-10;

/// `dD/dt = -i (Z D - D Z^dag) + 2 M_+`.
pub fn lindblad_derivative(d: &CMat, channels: &JumpChannels) -> CMat {
    let zd = &channels.z * d;
    let n = d.nrows();
    Mat::from_fn(n, n, |i, j| -I * (zd[(i, j)] - zd[(j, i)].conj()) + channels.m_plus[(i, j)] * 2.0)
}

/// Classic fourth-order Runge-Kutta integration of the correlation-matrix equation.
pub fn rk4_correlation(d0: &CMat, channels: &JumpChannels, t: f64, steps: usize) -> CMat {
    let h = t / steps.max(1) as f64;
    let mut d = d0.clone();
    let n = d.nrows();
    let add = |a: &CMat, k: &CMat, s: f64| Mat::from_fn(n, n, |i, j| a[(i, j)] + k[(i, j)] * s);
    for _ in 0..steps.max(1) {
        let k1 = lindblad_derivative(&d, channels);
        let k2 = lindblad_derivative(&add(&d, &k1, h / 2.0), channels);
        let k3 = lindblad_derivative(&add(&d, &k2, h / 2.0), channels);
        let k4 = lindblad_derivative(&add(&d, &k3, h), channels);
        d = Mat::from_fn(n, n, |i, j| {
            d[(i, j)] + (k1[(i, j)] + k2[(i, j)] * 2.0 + k3[(i, j)] * 2.0 + k4[(i, j)]) * (h / 6.0)
        });
    }
    d
}

#[derive(Clone, Debug)]
enum Mode {
    Spectral { v: CMat, lambda: Vec<C64>, v_inv: CMat, s: CMat },
    Rk4,
}

/// Exact propagator built from `Z = V diag(lambda) V^{-1}`; falls back to RK4 for defective `Z`.
#[derive(Clone, Debug)]
pub struct LindbladPropagator {
    channels: JumpChannels,
    mode: Mode,
}

impl LindbladPropagator {
    pub fn new(channels: &JumpChannels) -> Self {
        let mode = Self::spectral(channels).unwrap_or_else(|e| {
            eprintln!("warning: {e}; using RK4 for unconditional evolution");
            Mode::Rk4
        });
        Self { channels: channels.clone(), mode }
    }

    fn spectral(channels: &JumpChannels) -> Result<Mode> {
        let n = channels.size();
        let (lambda, v) = linalg::eigen(channels.z.as_ref())?;
        let v_inv = linalg::inverse(v.as_ref())?;
        let vl = Mat::from_fn(n, n, |i, k| v[(i, k)] * lambda[k]);
        let recon = &vl * &v_inv;
        let scale = linalg::max_abs(channels.z.as_ref()).max(1.0);
        let err = linalg::max_abs_diff(recon.as_ref(), channels.z.as_ref());
        if !(err < 1e-9 * scale) {
            return Err(Error::Numerical(format!("Z is numerically defective (reconstruction error {err:e})")));
        }
        let s = &(&v_inv * &channels.m_plus) * v_inv.adjoint();
        Ok(Mode::Spectral { v, lambda, v_inv, s })
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.mode, Mode::Spectral { .. })
    }

    pub fn eigenvalues(&self) -> Option<&[C64]> {
        match &self.mode {
            Mode::Spectral { lambda, .. } => Some(lambda),
            Mode::Rk4 => None,
        }
    }

    /// `(Q(t), R(t))` with `D(t) = Q D0 Q^dag + R`.
    pub fn affine_map(&self, t: f64) -> (CMat, CMat) {
        match &self.mode {
            Mode::Spectral { v, lambda, v_inv, s } => {
                let n = lambda.len();
                let vq = Mat::from_fn(n, n, |i, k| v[(i, k)] * (-I * lambda[k] * t).exp());
                let q = &vq * v_inv;
                let sk = Mat::from_fn(n, n, |i, j| s[(i, j)] * kernel(lambda[i] - lambda[j].conj(), t));
                let r = &(v * &sk) * v.adjoint();
                let r = linalg::scale(r.as_ref(), -I * 2.0);
                (q, r)
            }
            Mode::Rk4 => {
                let n = self.channels.size();
                let steps = rk4_steps(&self.channels, t);
                let zero = CMat::zeros(n, n);
                let r = rk4_correlation(&zero, &self.channels, t, steps);
                // Q from the homogeneous part: propagate basis matrices through exp(-i Z t).
                let gen = linalg::scale(self.channels.z.as_ref(), -I * t);
                (linalg::expm(gen.as_ref()), r)
            }
        }
    }

    /// Fixed-duration form for repeated application.
    pub fn with_duration(&self, t: f64) -> FixedLindblad {
        let (q, r) = self.affine_map(t);
        FixedLindblad { q, r, t }
    }
}

fn rk4_steps(channels: &JumpChannels, t: f64) -> usize {
    let rate = linalg::max_abs(channels.z.as_ref()).max(1e-3) * channels.size() as f64;
    ((t * rate / 0.05).ceil() as usize).max(1)
}

/// `(1 - exp(-i theta t)) / theta` with its series near `theta = 0`.
pub fn kernel(theta: C64, t: f64) -> C64 {
    if theta.norm() < DEGENERATE_GUARD {
        let x = I * theta * t;
        I * t * (ONE - x / 2.0 + x * x / 6.0)
    } else {
        (ONE - (-I * theta * t).exp()) / theta
    }
}

/// Precomputed `(Q, R)` for a fixed duration.
#[derive(Clone, Debug)]
pub struct FixedLindblad {
    pub q: CMat,
    pub r: CMat,
    pub t: f64,
}

impl FixedLindblad {
    pub fn apply(&self, d: &CorrelationMatrix) -> CorrelationMatrix {
        if self.t == 0.0 {
            return d.clone();
        }
        let qd = &self.q * d.d();
        let mut out = &qd * self.q.adjoint();
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] += self.r[(i, j)];
            }
        }
        CorrelationMatrix::new(out)
    }
}

/// `D(t) = Q D0 Q^dag + R(t)`.
pub fn exact_propagate(d0: &CorrelationMatrix, prop: &LindbladPropagator, t: f64) -> Result<CorrelationMatrix> {
    if t < 0.0 {
        return Err(Error::Domain(format!("propagation time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(d0.clone());
    }
    Ok(prop.with_duration(t).apply(d0).hermitized())
}

/// Fixed point of the correlation-matrix equation: `Z D - D Z^dag = -2 i M_+`.
pub fn steady_state(channels: &JumpChannels) -> Result<CorrelationMatrix> {
    let n = channels.size();
    if let Some((gp, gm)) = channels.local_rates() {
        let n_ss = if gp + gm > 0.0 { gp / (gp + gm) } else { 0.0 };
        return Ok(CorrelationMatrix::uniform(n, n_ss));
    }
    let prop = LindbladPropagator::new(channels);
    let Mode::Spectral { v, lambda, s, .. } = &prop.mode else {
        return Err(Error::Numerical("steady state needs a diagonalizable Z".into()));
    };
    let mut x = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let den = lambda[i] - lambda[j].conj();
            if den.norm() < DEGENERATE_GUARD {
                if s[(i, j)].norm() > DEGENERATE_GUARD {
                    return Err(Error::Numerical("no unique steady state".into()));
                }
                x[(i, j)] = ZERO;
            } else {
                x[(i, j)] = -I * 2.0 * s[(i, j)] / den;
            }
        }
    }
    Ok(CorrelationMatrix::new(&(v * &x) * v.adjoint()).hermitized())
}
