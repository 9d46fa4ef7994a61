//! Dense Fock-space reference implementation for small lattices.
//!
//! States are many-body density matrices of dimension `2^L` in the
//! occupation basis with Jordan-Wigner ordering (bit `l` of a basis index is
//! the occupation of site `l`). Jump operators are
//! `c_{+,l} = sqrt(2) sum_m B_+[l, m] psi_m^dag` and
//! `c_{-,l} = sqrt(2) sum_m B_-[l, m] psi_m`.

use faer::Mat;
use rand::Rng;

use crate::conditional::{self, JumpEvent, JumpKind, JumpTarget, SiteProbabilities};
use crate::error::{domain, Result};
use crate::gaussian::CorrelationMatrix;
use crate::linalg::{self, I, ONE, ZERO};
use crate::model::{JumpChannels, LatticeHamiltonian};
use crate::{CMat, C64};

/// Largest lattice the oracle accepts.
pub const MAX_SITES: usize = 8;

fn sign_below(s: usize, l: usize) -> f64 {
    if (s & ((1usize << l) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Dense many-body operators for a given single-particle model.
#[derive(Clone, Debug)]
pub struct FockOperators {
    pub sites: usize,
    pub dim: usize,
    /// Annihilation operators `c_l`.
    pub c: Vec<CMat>,
    pub h: CMat,
    pub h_eff: CMat,
    pub n_op: CMat,
    b_plus: CMat,
    b_minus: CMat,
}

/// Many-body operators for `H` and the given channels.
pub fn build_fock_operators(h: &LatticeHamiltonian, channels: &JumpChannels) -> Result<FockOperators> {
    let l = h.size();
    if l == 0 || l > MAX_SITES {
        return domain(format!("oracle supports 1..={MAX_SITES} sites, got {l}"));
    }
    let dim = 1usize << l;
    let c: Vec<CMat> = (0..l)
        .map(|site| {
            let mut m = CMat::zeros(dim, dim);
            for s in 0..dim {
                if s & (1 << site) != 0 {
                    m[(s ^ (1 << site), s)] = C64::new(sign_below(s, site), 0.0);
                }
            }
            m
        })
        .collect();
    let cd: Vec<CMat> = c.iter().map(|m| m.adjoint().to_owned()).collect();
    let mut hh = CMat::zeros(dim, dim);
    let mut n_op = CMat::zeros(dim, dim);
    for a in 0..l {
        n_op = &n_op + &cd[a] * &c[a];
        for b in 0..l {
            let coef = h.h[(a, b)];
            if coef != ZERO {
                let term = &cd[a] * &c[b];
                hh = linalg::lin_comb(ONE, hh.as_ref(), coef, term.as_ref());
            }
        }
    }
    let mut ops = FockOperators {
        sites: l,
        dim,
        c,
        h: hh.clone(),
        h_eff: hh,
        n_op,
        b_plus: channels.b_plus.clone(),
        b_minus: channels.b_minus.clone(),
    };
    let mut decay = CMat::zeros(dim, dim);
    for site in 0..l {
        for kind in [JumpKind::Gain, JumpKind::Loss] {
            let j = ops.jump_operator(kind, site);
            decay = &decay + j.adjoint() * &j;
        }
    }
    ops.h_eff = linalg::lin_comb(ONE, ops.h.as_ref(), C64::new(0.0, -0.5), decay.as_ref());
    Ok(ops)
}

impl FockOperators {
    /// Dense jump operator `c_{kind, l}`.
    pub fn jump_operator(&self, kind: JumpKind, l: usize) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        let s2 = std::f64::consts::SQRT_2;
        for m in 0..self.sites {
            let (coef, op) = match kind {
                JumpKind::Gain => (self.b_plus[(l, m)] * s2, self.c[m].adjoint().to_owned()),
                JumpKind::Loss => (self.b_minus[(l, m)] * s2, self.c[m].clone()),
            };
            if coef != ZERO {
                out = linalg::lin_comb(ONE, out.as_ref(), coef, op.as_ref());
            }
        }
        out
    }

    /// Pure product state with the given occupied sites.
    pub fn product_state(&self, occupied: &[bool]) -> CMat {
        let idx = occupied.iter().enumerate().filter(|(_, &o)| o).map(|(k, _)| 1usize << k).sum::<usize>();
        let mut rho = CMat::zeros(self.dim, self.dim);
        rho[(idx, idx)] = ONE;
        rho
    }

    /// Density matrix of the Gaussian state with correlation matrix `d`.
    pub fn gaussian_density(&self, d: &CorrelationMatrix) -> Result<CMat> {
        let (occ, w) = linalg::herm_eigen(d.d().as_ref())?;
        let mut rho = linalg::identity(self.dim);
        for k in 0..self.sites {
            let mut a = CMat::zeros(self.dim, self.dim);
            for l in 0..self.sites {
                a = linalg::lin_comb(ONE, a.as_ref(), w[(l, k)].conj(), self.c[l].as_ref());
            }
            let ad = a.adjoint().to_owned();
            let nk = occ[k].clamp(0.0, 1.0);
            let f = linalg::lin_comb(
                C64::new(nk, 0.0),
                (&ad * &a).as_ref(),
                C64::new(1.0 - nk, 0.0),
                (&a * &ad).as_ref(),
            );
            rho = &rho * &f;
        }
        Ok(rho)
    }

    /// `D[l, l'] = tr(rho psi_l'^dag psi_l)`.
    pub fn state_to_correlation(&self, rho: &CMat) -> CorrelationMatrix {
        let l = self.sites;
        let mut d = CMat::zeros(l, l);
        for a in 0..l {
            for b in 0..l {
                // tr(rho c_b^dag c_a)
                let op = self.c[b].adjoint() * &self.c[a];
                d[(a, b)] = trace_product(rho, &op);
            }
        }
        CorrelationMatrix::new(d)
    }

    pub fn jump_weight(&self, rho: &CMat, kind: JumpKind, l: usize) -> f64 {
        let j = self.jump_operator(kind, l);
        trace_product(rho, &(j.adjoint() * &j)).re
    }

    /// `c rho c^dag / tr(...)`, or `None` when the weight vanishes.
    pub fn apply_jump(&self, rho: &CMat, kind: JumpKind, l: usize) -> Option<CMat> {
        let j = self.jump_operator(kind, l);
        let out = &(&j * rho) * j.adjoint();
        let tr = linalg::trace(out.as_ref()).re;
        (tr > conditional::DIVISION_GUARD).then(|| linalg::scale(out.as_ref(), C64::new(1.0 / tr, 0.0)))
    }

    /// `exp(-i H_eff tau)`.
    pub fn no_jump_operator(&self, tau: f64) -> CMat {
        linalg::expm(linalg::scale(self.h_eff.as_ref(), -I * tau).as_ref())
    }

    /// `K rho K^dag / tr(K rho K^dag)`.
    pub fn apply_no_jump(&self, rho: &CMat, k: &CMat) -> CMat {
        let out = &(k * rho) * k.adjoint();
        let tr = linalg::trace(out.as_ref()).re;
        linalg::scale(out.as_ref(), C64::new(1.0 / tr, 0.0))
    }

    /// Lindblad generator applied to `rho`.
    pub fn liouvillian(&self, rho: &CMat) -> CMat {
        let hr = &self.h_eff * rho;
        let mut out = Mat::from_fn(self.dim, self.dim, |i, j| -I * (hr[(i, j)] - hr[(j, i)].conj()));
        let s2 = 2.0;
        let l = self.sites;
        for m in 0..l {
            for mp in 0..l {
                // gain: 2 sum_l B+[l,m] conj(B+[l,m']) psi_m^dag rho psi_m'
                let g: C64 = (0..l).map(|s| self.b_plus[(s, m)] * self.b_plus[(s, mp)].conj()).sum::<C64>() * s2;
                if g != ZERO {
                    self.sandwich(rho, m, mp, true, g, &mut out);
                }
                // loss: 2 sum_l B-[l,m] conj(B-[l,m']) psi_m rho psi_m'^dag
                let q: C64 = (0..l).map(|s| self.b_minus[(s, m)] * self.b_minus[(s, mp)].conj()).sum::<C64>() * s2;
                if q != ZERO {
                    self.sandwich(rho, m, mp, false, q, &mut out);
                }
            }
        }
        out
    }

    /// `out += coef * A rho B` with `(A, B) = (psi_m^dag, psi_m')` for gain or `(psi_m, psi_m'^dag)` for loss.
    fn sandwich(&self, rho: &CMat, m: usize, mp: usize, gain: bool, coef: C64, out: &mut CMat) {
        let (bm, bmp) = (1usize << m, 1usize << mp);
        for j in 0..self.dim {
            // gain: B = psi_m' needs bit m' set in j; loss: B = psi_m'^dag needs it clear
            if ((j & bmp) != 0) != gain {
                continue;
            }
            let sj = sign_below(j, mp);
            for i in 0..self.dim {
                if ((i & bm) != 0) != gain {
                    continue;
                }
                let si = sign_below(i, m);
                out[(i, j)] += coef * (si * sj) * rho[(i ^ bm, j ^ bmp)];
            }
        }
    }

    /// Fourth-order Runge-Kutta integration of the master equation.
    pub fn lindblad_rk4(&self, rho: &CMat, t: f64, steps: usize) -> CMat {
        let steps = steps.max(1);
        let h = t / steps as f64;
        let n = self.dim;
        let add = |a: &CMat, k: &CMat, s: f64| Mat::from_fn(n, n, |i, j| a[(i, j)] + k[(i, j)] * s);
        let mut r = rho.clone();
        for _ in 0..steps {
            let k1 = self.liouvillian(&r);
            let k2 = self.liouvillian(&add(&r, &k1, h / 2.0));
            let k3 = self.liouvillian(&add(&r, &k2, h / 2.0));
            let k4 = self.liouvillian(&add(&r, &k3, h));
            r = Mat::from_fn(n, n, |i, j| r[(i, j)] + (k1[(i, j)] + k2[(i, j)] * 2.0 + k3[(i, j)] * 2.0 + k4[(i, j)]) * (h / 6.0));
        }
        r
    }

    /// RK4 step count keeping `h * ||L||` near 0.02.
    pub fn rk4_steps(&self, t: f64) -> usize {
        let norm = (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self.h_eff[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        ((t * 2.0 * norm.max(1e-3) / 0.02).ceil() as usize).max(1)
    }

    pub fn lindblad(&self, rho: &CMat, t: f64) -> CMat {
        if t == 0.0 {
            return rho.clone();
        }
        let mut r = self.lindblad_rk4(rho, t, self.rk4_steps(t));
        linalg::hermitize_in_place(&mut r);
        r
    }

    /// Unnormalized Kraus branch of one full step for outcome `outcome`,
    /// returning the branch probability and the normalized state.
    pub fn kraus_step_exact(&self, rho: &CMat, outcome: Option<(JumpKind, usize)>, eta: f64, dt: f64) -> (f64, Option<CMat>) {
        let branch = match outcome {
            None => {
                let k = self.no_jump_operator(eta * dt);
                &(&k * rho) * k.adjoint()
            }
            Some((kind, l)) => {
                let j = self.jump_operator(kind, l);
                linalg::scale((&(&j * rho) * j.adjoint()).as_ref(), C64::new(eta * dt, 0.0))
            }
        };
        let p = linalg::trace(branch.as_ref()).re;
        if p <= conditional::DIVISION_GUARD {
            return (p.max(0.0), None);
        }
        let normalized = linalg::scale(branch.as_ref(), C64::new(1.0 / p, 0.0));
        (p, Some(self.lindblad(&normalized, (1.0 - eta) * dt)))
    }

    /// One trajectory step with the same sampling scheme as the Gaussian engine.
    pub fn trajectory_step<R: Rng + ?Sized>(
        &self,
        rho: &mut CMat,
        no_jump: &CMat,
        eta: f64,
        dt: f64,
        rng: &mut R,
    ) -> Result<Vec<JumpEvent>> {
        let mut log = Vec::new();
        if eta > 0.0 {
            let mut target = FockTarget { ops: self, rho, eta, dt };
            conditional::sweep(&mut target, rng, &mut log)?;
            *rho = self.apply_no_jump(rho, no_jump);
        }
        *rho = self.lindblad(rho, (1.0 - eta) * dt);
        Ok(log)
    }
}

fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Many-body density matrix swept by [`conditional::sweep`].
pub struct FockTarget<'a> {
    pub ops: &'a FockOperators,
    pub rho: &'a mut CMat,
    pub eta: f64,
    pub dt: f64,
}

impl JumpTarget for FockTarget<'_> {
    fn sites(&self) -> usize {
        self.ops.sites
    }

    fn jump_bound(&self) -> Option<f64> {
        None
    }

    fn probabilities(&mut self, l: usize) -> Result<SiteProbabilities> {
        let plus = self.eta * self.dt * self.ops.jump_weight(self.rho, JumpKind::Gain, l).max(0.0);
        let minus = self.eta * self.dt * self.ops.jump_weight(self.rho, JumpKind::Loss, l).max(0.0);
        Ok(SiteProbabilities { plus, minus, jump: plus + minus })
    }

    fn jump(&mut self, l: usize, kind: JumpKind) -> Result<bool> {
        match self.ops.apply_jump(self.rho, kind, l) {
            Some(r) => {
                *self.rho = r;
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

/// Correlation-matrix ODE integrated by RK4 (re-exported for oracle comparisons).
pub use crate::unconditional::rk4_correlation;

/// Settings of one randomized Gaussian-versus-Fock comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceSpec {
    pub sites: usize,
    pub eta: f64,
    /// Random non-local `B` matrices instead of local channels.
    pub general_channels: bool,
    pub steps: usize,
    pub dt: f64,
}

/// Largest deviations seen along a sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SequenceReport {
    /// Max-norm distance of the two running correlation matrices.
    pub max_deviation: f64,
    /// Largest single-operation error of deterministic operations applied
    /// to the same input state.
    pub max_deterministic_deviation: f64,
    pub sampled_jumps: usize,
    pub forced_jumps: usize,
    /// Whether every sampled jump record agreed.
    pub logs_agree: bool,
}

/// Runs `spec.steps` randomly interleaved operations (full trajectory steps,
/// no-jump evolution, Lindblad evolution, forced jumps) on a random instance
/// through both the Gaussian modules and the Fock-space oracle.
pub fn interleaved_sequence_check<R: Rng + ?Sized>(spec: SequenceSpec, rng: &mut R) -> Result<SequenceReport> {
    use crate::conditional::{no_jump_propagate, DenseTarget, NoJumpPropagator};
    use crate::model::{build_jump_channels, ModelParams};
    use crate::trajectory::{step, Backend, Model, Stepper};
    use crate::unconditional::{exact_propagate, LindbladPropagator};

    let l = spec.sites;
    let gp = 0.1 + 0.4 * rng.random::<f64>();
    let gm = 0.1 + 0.4 * rng.random::<f64>();
    let params = ModelParams::from_rates(l, 1.0, gp, gm, spec.eta)?;
    let h = LatticeHamiltonian::from_matrix(linalg::scale(linalg::random_hermitian(l, rng).as_ref(), C64::new(0.5, 0.0)))?;
    let (bp, bm) = if spec.general_channels {
        let s = C64::new(0.4, 0.0);
        (
            Some(linalg::scale(linalg::random_complex(l, l, rng).as_ref(), s)),
            Some(linalg::scale(linalg::random_complex(l, l, rng).as_ref(), s)),
        )
    } else {
        (None, None)
    };
    let channels = build_jump_channels(&params, &h, bp, bm)?;
    let ops = build_fock_operators(&h, &channels)?;
    let stepper = Stepper::new(Model::new(params, h.clone(), channels.clone())?, spec.dt, Backend::Dense)?;
    let lindblad = LindbladPropagator::new(&channels);
    let no_jump_tau = if spec.eta > 0.0 { spec.eta * spec.dt } else { spec.dt };
    let no_jump = NoJumpPropagator::new(&h, &channels, no_jump_tau)?;
    let k_no_jump = ops.no_jump_operator(no_jump_tau);
    let k_step = ops.no_jump_operator(spec.eta * spec.dt);

    let d0 = if spec.eta == 1.0 {
        linalg::random_projector(l, l / 2, rng)
    } else {
        linalg::random_mixed(l, rng)
    };
    let mut d = CorrelationMatrix::new(d0);
    let mut rho = ops.gaussian_density(&d)?;
    let mut report = SequenceReport { logs_agree: true, ..SequenceReport::default() };
    for _ in 0..spec.steps {
        let reference = ops.state_to_correlation(&rho);
        match rng.random_range(0..4) {
            0 => {
                let mut r_gauss = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(rng.random());
                let mut r_fock = r_gauss.clone();
                let a = step(&mut d, &stepper, &mut r_gauss)?;
                let b = ops.trajectory_step(&mut rho, &k_step, spec.eta, spec.dt, &mut r_fock)?;
                report.logs_agree &= a == b;
                report.sampled_jumps += a.len();
            }
            1 => {
                let g = no_jump_propagate(&reference, &no_jump)?;
                d = no_jump_propagate(&d, &no_jump)?.hermitized();
                rho = ops.apply_no_jump(&rho, &k_no_jump);
                let dev = linalg::max_abs_diff(g.d().as_ref(), ops.state_to_correlation(&rho).d().as_ref());
                report.max_deterministic_deviation = report.max_deterministic_deviation.max(dev);
            }
            2 => {
                let t = rng.random::<f64>();
                let g = exact_propagate(&reference, &lindblad, t)?;
                d = exact_propagate(&d, &lindblad, t)?.hermitized();
                rho = ops.lindblad(&rho, t);
                let dev = linalg::max_abs_diff(g.d().as_ref(), ops.state_to_correlation(&rho).d().as_ref());
                report.max_deterministic_deviation = report.max_deterministic_deviation.max(dev);
            }
            _ => {
                let site = rng.random_range(0..l);
                let kind = if rng.random::<bool>() { JumpKind::Gain } else { JumpKind::Loss };
                // only jumps with a non-negligible weight are meaningful
                if ops.jump_weight(&rho, kind, site) > 1e-6 {
                    if let Some(r) = ops.apply_jump(&rho, kind, site) {
                        let mut target = DenseTarget { state: &mut d, channels: &channels, eta: spec.eta, dt: spec.dt };
                        target.jump(site, kind)?;
                        d.hermitize();
                        rho = r;
                        report.forced_jumps += 1;
                    }
                }
            }
        }
        let dev = linalg::max_abs_diff(d.d().as_ref(), ops.state_to_correlation(&rho).d().as_ref());
        report.max_deviation = report.max_deviation.max(dev);
    }
    Ok(report)
}
