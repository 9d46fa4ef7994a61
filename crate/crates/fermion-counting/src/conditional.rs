//! Measurement-conditioned substep: per-site jump sampling, rank-1 jump
//! updates and the closed-form no-jump propagation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CorrelationMatrix, SPECTRUM_TOL};
use crate::linalg::{self, I, ONE, ZERO};
use crate::model::{JumpChannels, LatticeHamiltonian};
use crate::{CMat, C64};

/// Denominators below this reject the jump.
pub const DIVISION_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpKind {
    Gain,
    Loss,
}

impl JumpKind {
    pub fn label(self) -> &'static str {
        match self {
            JumpKind::Gain => "gain",
            JumpKind::Loss => "loss",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub site: usize,
    pub kind: JumpKind,
    /// False when the division guard rejected the update.
    pub applied: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteProbabilities {
    pub plus: f64,
    pub minus: f64,
    pub jump: f64,
}

fn checked_occupation(dll: f64) -> Result<f64> {
    if !(-SPECTRUM_TOL..=1.0 + SPECTRUM_TOL).contains(&dll) {
        return Err(Error::State(format!("occupation {dll} outside [0, 1]")));
    }
    Ok(dll.clamp(0.0, 1.0))
}

/// Local-channel probabilities from the occupation `D[l, l]`.
pub fn local_probabilities(dll: f64, gamma_plus: f64, gamma_minus: f64, eta: f64, dt: f64) -> Result<SiteProbabilities> {
    let n = checked_occupation(dll)?;
    let plus = eta * gamma_plus * dt * (1.0 - n);
    let minus = eta * gamma_minus * dt * n;
    Ok(SiteProbabilities { plus, minus, jump: plus + minus })
}

/// Gain/loss probabilities at site `l` for the current state.
pub fn site_jump_probabilities(
    d: &CorrelationMatrix,
    l: usize,
    channels: &JumpChannels,
    eta: f64,
    dt: f64,
) -> Result<SiteProbabilities> {
    if let Some((gp, gm)) = channels.local_rates() {
        return local_probabilities(d.d()[(l, l)].re, gp, gm, eta, dt);
    }
    let b = channels.gain_vector(l);
    let a = channels.loss_vector(l);
    let n = d.size();
    let mut db = vec![ZERO; n];
    let mut da = vec![ZERO; n];
    linalg::matvec(d.d().as_ref(), &b, &mut db);
    linalg::matvec(d.d().as_ref(), &a, &mut da);
    let bb = linalg::dotc(&b, &b).re;
    let hole = bb - linalg::dotc(&b, &db).re;
    let part = linalg::dotc(&a, &da).re;
    let aa = linalg::dotc(&a, &a).re;
    let tol = SPECTRUM_TOL * (1.0 + bb + aa);
    if hole < -tol || part < -tol {
        return Err(Error::State(format!("negative jump weight ({hole:e}, {part:e})")));
    }
    let plus = 2.0 * eta * dt * hole.max(0.0);
    let minus = 2.0 * eta * dt * part.max(0.0);
    Ok(SiteProbabilities { plus, minus, jump: plus + minus })
}

/// Local gain at `l`: `D += (1-D)[:, l] (1-D)[l, :] / (1 - D[l, l])`. Returns false if guarded.
pub fn apply_gain(d: &mut CorrelationMatrix, l: usize) -> bool {
    let m = d.d_mut();
    let n = m.nrows();
    let hole = 1.0 - m[(l, l)].re;
    if hole <= DIVISION_GUARD {
        return false;
    }
    let w: Vec<C64> = (0..n).map(|i| if i == l { C64::new(hole, 0.0) } else { -m[(i, l)] }).collect();
    linalg::rank1_update(m, C64::new(1.0 / hole, 0.0), &w, &w);
    for i in 0..n {
        m[(i, l)] = ZERO;
        m[(l, i)] = ZERO;
    }
    m[(l, l)] = ONE;
    true
}

/// Local loss at `l`: `D -= D[:, l] D[l, :] / D[l, l]`. Returns false if guarded.
pub fn apply_loss(d: &mut CorrelationMatrix, l: usize) -> bool {
    let m = d.d_mut();
    let n = m.nrows();
    let part = m[(l, l)].re;
    if part <= DIVISION_GUARD {
        return false;
    }
    let v: Vec<C64> = (0..n).map(|i| m[(i, l)]).collect();
    linalg::rank1_update(m, C64::new(-1.0 / part, 0.0), &v, &v);
    for i in 0..n {
        m[(i, l)] = ZERO;
        m[(l, i)] = ZERO;
    }
    true
}

/// General gain with `M_{+,l} = b b^dag`: `w = (1-D) b`, `D += w w^dag / (b^dag w)`.
pub fn apply_gain_general(d: &mut CorrelationMatrix, b: &[C64]) -> bool {
    let n = d.size();
    let mut db = vec![ZERO; n];
    linalg::matvec(d.d().as_ref(), b, &mut db);
    let w: Vec<C64> = b.iter().zip(&db).map(|(x, y)| x - y).collect();
    let norm = linalg::dotc(b, &w).re;
    if norm <= DIVISION_GUARD * (1.0 + linalg::dotc(b, b).re) {
        return false;
    }
    linalg::rank1_update(d.d_mut(), C64::new(1.0 / norm, 0.0), &w, &w);
    true
}

/// General loss with `M_{-,l} = a a^dag`: `v = D a`, `D -= v v^dag / (a^dag v)`.
pub fn apply_loss_general(d: &mut CorrelationMatrix, a: &[C64]) -> bool {
    let n = d.size();
    let mut v = vec![ZERO; n];
    linalg::matvec(d.d().as_ref(), a, &mut v);
    let norm = linalg::dotc(a, &v).re;
    if norm <= DIVISION_GUARD * (1.0 + linalg::dotc(a, a).re) {
        return false;
    }
    linalg::rank1_update(d.d_mut(), C64::new(-1.0 / norm, 0.0), &v, &v);
    true
}

/// A state that can be swept for jumps.
pub trait JumpTarget {
    fn sites(&self) -> usize;
    /// Upper bound on the jump probability of any site, used to skip
    /// probability evaluation when the first draw already exceeds it.
    fn jump_bound(&self) -> Option<f64>;
    fn probabilities(&mut self, l: usize) -> Result<SiteProbabilities>;
    fn jump(&mut self, l: usize, kind: JumpKind) -> Result<bool>;
    /// Whether `r1 < P_jump(l)`. Backends may decide from cheap bounds.
    fn jump_occurs(&mut self, l: usize, r1: f64) -> Result<bool> {
        Ok(r1 < self.probabilities(l)?.jump)
    }
}

/// Dense correlation matrix bundled with its channels for a sweep.
pub struct DenseTarget<'a> {
    pub state: &'a mut CorrelationMatrix,
    pub channels: &'a JumpChannels,
    pub eta: f64,
    pub dt: f64,
}

impl JumpTarget for DenseTarget<'_> {
    fn sites(&self) -> usize {
        self.state.size()
    }

    fn jump_bound(&self) -> Option<f64> {
        self.channels
            .local_rates()
            .map(|(gp, gm)| self.eta * self.dt * gp.max(gm) * (1.0 + 1e-7))
    }

    fn probabilities(&mut self, l: usize) -> Result<SiteProbabilities> {
        site_jump_probabilities(self.state, l, self.channels, self.eta, self.dt)
    }

    fn jump(&mut self, l: usize, kind: JumpKind) -> Result<bool> {
        let local = self.channels.local_rates().is_some();
        Ok(match (kind, local) {
            (JumpKind::Gain, true) => apply_gain(self.state, l),
            (JumpKind::Loss, true) => apply_loss(self.state, l),
            (JumpKind::Gain, false) => apply_gain_general(self.state, &self.channels.gain_vector(l)),
            (JumpKind::Loss, false) => apply_loss_general(self.state, &self.channels.loss_vector(l)),
        })
    }
}

/// One sweep in a fresh random site order. Events are appended to `log`.
pub fn sweep<T: JumpTarget, R: Rng + ?Sized>(target: &mut T, rng: &mut R, log: &mut Vec<JumpEvent>) -> Result<()> {
    let mut order: Vec<usize> = (0..target.sites()).collect();
    order.shuffle(rng);
    let bound = target.jump_bound();
    for l in order {
        let r1: f64 = rng.random();
        if let Some(b) = bound {
            if r1 >= b {
                continue;
            }
        }
        if target.jump_occurs(l, r1)? {
            let p = target.probabilities(l)?;
            if let Some(b) = bound {
                debug_assert!(p.jump <= b, "jump bound violated: {} > {b}", p.jump);
            }
            let r2: f64 = rng.random();
            let kind = if r2 < p.minus / p.jump { JumpKind::Loss } else { JumpKind::Gain };
            let applied = target.jump(l, kind)?;
            log.push(JumpEvent { site: l, kind, applied });
        }
    }
    Ok(())
}

/// Sweep a dense state; returns the ordered event list.
pub fn sweep_jumps<R: Rng + ?Sized>(
    d: &mut CorrelationMatrix,
    channels: &JumpChannels,
    eta: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<JumpEvent>> {
    let mut log = Vec::new();
    if eta > 0.0 {
        sweep(&mut DenseTarget { state: d, channels, eta, dt }, rng, &mut log)?;
    }
    Ok(log)
}

/// Precomputed no-jump evolution over `tau = eta * dt`.
#[derive(Clone, Debug)]
pub enum NoJumpPropagator {
    /// Local channels: `D <- U (D + e (1 - D))^{-1} D U^dag`, `e = exp(-Delta_gamma tau)`.
    Local { u: CMat, e: f64 },
    /// General channels: `D <- P D [Q (1 - D) + D]^{-1} P^{-1}` with
    /// `P = exp(-i (H + i (M_+ - M_-)) tau)` and `Q = (P^dag P)^{-1}`.
    General { p: CMat, p_inv: CMat, q: CMat },
}

impl NoJumpPropagator {
    pub fn new(h: &LatticeHamiltonian, channels: &JumpChannels, tau: f64) -> Result<Self> {
        if let Some((gp, gm)) = channels.local_rates() {
            return Ok(Self::Local { u: h.unitary(tau), e: (-(gp - gm) * tau).exp() });
        }
        let dm = channels.delta_m();
        let gen = linalg::lin_comb(-I * tau, h.h.as_ref(), C64::new(tau, 0.0), dm.as_ref());
        let p = linalg::expm(gen.as_ref());
        let p_inv = linalg::expm(linalg::scale(gen.as_ref(), -ONE).as_ref());
        let q = linalg::inverse((p.adjoint() * &p).as_ref())?;
        Ok(Self::General { p, p_inv, q })
    }
}

/// Apply the no-jump propagation. The result is not re-hermitized.
pub fn no_jump_propagate(d: &CorrelationMatrix, prop: &NoJumpPropagator) -> Result<CorrelationMatrix> {
    let n = d.size();
    let dm = d.d();
    match prop {
        NoJumpPropagator::Local { u, e } => {
            let x = if *e == 1.0 {
                dm.clone()
            } else {
                let w = faer::Mat::from_fn(n, n, |i, j| {
                    let id = if i == j { *e } else { 0.0 };
                    dm[(i, j)] * (1.0 - e) + C64::new(id, 0.0)
                });
                linalg::solve(w.as_ref(), dm.as_ref()).map_err(|_| no_jump_failure(&w))?
            };
            Ok(CorrelationMatrix::new(&(u * &x) * u.adjoint()))
        }
        NoJumpPropagator::General { p, p_inv, q } => {
            let one_minus = faer::Mat::from_fn(n, n, |i, j| if i == j { ONE - dm[(i, j)] } else { -dm[(i, j)] });
            let qd = q * &one_minus;
            let w = faer::Mat::from_fn(n, n, |i, j| qd[(i, j)] + dm[(i, j)]);
            // D W^{-1} = (W^{-dag} D)^dag
            let wa = w.adjoint().to_owned();
            let y = linalg::solve(wa.as_ref(), dm.as_ref()).map_err(|_| no_jump_failure(&w))?;
            let x = y.adjoint().to_owned();
            Ok(CorrelationMatrix::new(&(p * &x) * p_inv))
        }
    }
}

fn no_jump_failure(w: &CMat) -> Error {
    let cond = linalg::herm_eigenvalues(w.as_ref())
        .ok()
        .map(|ev| ev[ev.len() - 1].abs() / ev[0].abs().max(f64::MIN_POSITIVE));
    Error::Numerical(format!("no-jump solve failed, condition estimate {cond:?}"))
}

/// Sweep, then no-jump propagation over `eta * dt`, then hermitize.
pub fn conditional_substep<R: Rng + ?Sized>(
    d: &mut CorrelationMatrix,
    channels: &JumpChannels,
    no_jump: &NoJumpPropagator,
    eta: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<JumpEvent>> {
    if eta == 0.0 {
        return Ok(Vec::new());
    }
    let log = sweep_jumps(d, channels, eta, dt, rng)?;
    *d = no_jump_propagate(d, no_jump)?.hermitized();
    Ok(log)
}
