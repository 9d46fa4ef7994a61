//! Fast trajectory backend for translation-invariant hopping with local,
//! uniform gain and loss.
//!
//! The state is stored in the rotating momentum frame,
//! `D = V Y V^dag` with `V = F^dag P(t)`, `F[k, l] = exp(-2 pi i k l / L) / sqrt(L)`
//! and `P(t) = diag(exp(-i eps_k t))`. Both the no-jump map and the
//! unconditional substep act on `Y` as scalar Moebius maps
//! `Y = (a X + b)(c X + d)^-1`, so they are folded into a 2x2 matrix and
//! never touch the `L x L` data. Jumps become rank-one updates of `X`.
//! `X` is re-materialized ("rebased") whenever the Moebius factor could make
//! the updates ill-conditioned.
//!
//! For pure states at perfect detection the no-jump map is the identity and
//! is skipped.

use faer::Mat;
use rand::Rng;

use crate::conditional::{self, JumpEvent, JumpKind, JumpTarget, SiteProbabilities, DIVISION_GUARD};
use crate::error::{Error, Result};
use crate::gaussian::CorrelationMatrix;
use crate::linalg::{self, ONE, ZERO};
use crate::model::{JumpChannels, LatticeHamiltonian};
use crate::{CMat, C64};

/// Rebase when `|c| * ||X||` exceeds this bound.
const NEUMANN_BOUND: f64 = 0.05;
/// Rebase when the determinant of the normalized factor leaves `[1/2, 2]`.
const CONTRACTION_BOUND: f64 = 0.5;
/// Purity defect below which a state counts as pure.
pub const PURE_TOL: f64 = 1e-10;

/// Moebius factor `[[a, b], [c, d]]` stored row-major.
type Mobius = [f64; 4];

const IDENTITY: Mobius = [1.0, 0.0, 0.0, 1.0];

fn compose(outer: Mobius, inner: Mobius) -> Mobius {
    let [a, b, c, d] = outer;
    let [e, f, g, h] = inner;
    [a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h]
}

/// Normalized so that `d = 1`; `None` if `d <= 0`.
fn normalize(m: Mobius) -> Option<Mobius> {
    (m[3] > 0.0).then(|| [m[0] / m[3], m[1] / m[3], m[2] / m[3], 1.0])
}

/// Whether `X` may keep being updated under the normalized factor `m`.
fn well_conditioned(m: Mobius) -> bool {
    let [a, b, c, _] = m;
    let det = a - b * c;
    if !(CONTRACTION_BOUND..=1.0 / CONTRACTION_BOUND).contains(&det) {
        return false;
    }
    // inverse map y -> (y - b) / (a - c y) must have no pole on [0, 1]
    if c != 0.0 {
        let pole = a / c;
        if (-1e-3..=1.0 + 1e-3).contains(&pole) {
            return false;
        }
    }
    c.abs() * x_bound(m) <= NEUMANN_BOUND
}

/// Bound on `||X||` given that `Y` has its spectrum in `[0, 1]`.
fn x_bound(m: Mobius) -> f64 {
    let [a, b, c, _] = m;
    (b / a).abs().max(((1.0 - b) / (a - c)).abs())
}

/// Trajectory state and static data of the fast backend.
#[derive(Clone, Debug)]
pub struct FastTrajectory {
    sites: usize,
    eps: Vec<f64>,
    /// `exp(-2 pi i m / L) / sqrt(L)` for `m = 0..L`.
    roots: Vec<C64>,
    gamma_plus: f64,
    gamma_minus: f64,
    eta: f64,
    dt: f64,
    no_jump: Option<Mobius>,
    affine: Option<Mobius>,
    x: CMat,
    m: Mobius,
    steps: u64,
    pure: bool,
    rebases: u64,
    phase_cache: Option<(u64, Vec<C64>)>,
    site_cache: Option<SiteCache>,
}

#[derive(Clone, Debug)]
struct SiteCache {
    site: usize,
    steps: u64,
    g: Vec<C64>,
    xg: Vec<C64>,
    yg: Vec<C64>,
    dll: f64,
}

impl FastTrajectory {
    /// Requires a circulant `H` and local uniform channels.
    pub fn new(h: &LatticeHamiltonian, channels: &JumpChannels, eta: f64, dt: f64, d0: &CorrelationMatrix) -> Result<Self> {
        let eps = h
            .circulant_dispersion()
            .ok_or_else(|| Error::Domain("fast backend needs a translation-invariant Hamiltonian".into()))?;
        let (gp, gm) = channels
            .local_rates()
            .ok_or_else(|| Error::Domain("fast backend needs local uniform channels".into()))?;
        let l = h.size();
        if d0.size() != l {
            return Err(Error::Dimension("initial state size differs from H".into()));
        }
        let norm = 1.0 / (l as f64).sqrt();
        let roots: Vec<C64> = (0..l)
            .map(|m| C64::from_polar(norm, -2.0 * std::f64::consts::PI * m as f64 / l as f64))
            .collect();
        let f = Mat::from_fn(l, l, |k, s| roots[(k * s) % l]);
        let x = &(&f * d0.d()) * f.adjoint();
        let pure = eta == 1.0 && d0.purity_defect() < PURE_TOL;
        let no_jump = (eta > 0.0 && !pure && gp != gm).then(|| {
            let e = (-(gp - gm) * eta * dt).exp();
            [1.0, 0.0, 1.0 - e, e]
        });
        let affine = (eta < 1.0).then(|| {
            let gamma = 0.5 * (gp + gm);
            let a = (-2.0 * gamma * (1.0 - eta) * dt).exp();
            let n = if gamma > 0.0 { gp / (2.0 * gamma) } else { 0.0 };
            [a, n * (1.0 - a), 0.0, 1.0]
        });
        let mut out = Self {
            sites: l,
            eps,
            roots,
            gamma_plus: gp,
            gamma_minus: gm,
            eta,
            dt,
            no_jump,
            affine,
            x,
            m: IDENTITY,
            steps: 0,
            pure,
            rebases: 0,
            phase_cache: None,
            site_cache: None,
        };
        linalg::hermitize_in_place(&mut out.x);
        Ok(out)
    }

    pub fn size(&self) -> usize {
        self.sites
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_pure_mode(&self) -> bool {
        self.pure
    }

    pub fn rebases(&self) -> u64 {
        self.rebases
    }

    /// One full step: jump sweep, no-jump map, unconditional substep.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<JumpEvent>> {
        let mut log = Vec::new();
        if self.eta > 0.0 {
            conditional::sweep(&mut FastTarget { traj: self }, rng, &mut log)?;
        }
        if let Some(f) = self.no_jump {
            self.push_factor(f)?;
        }
        if let Some(f) = self.affine {
            self.push_factor(f)?;
        }
        self.steps += 1;
        self.site_cache = None;
        Ok(log)
    }

    fn push_factor(&mut self, f: Mobius) -> Result<()> {
        if let Some(m) = normalize(compose(f, self.m)).filter(|&m| well_conditioned(m)) {
            self.m = m;
            return Ok(());
        }
        self.rebase()?;
        self.m = normalize(f).ok_or_else(|| Error::Numerical("degenerate Moebius factor".into()))?;
        Ok(())
    }

    /// `Y = (a X + b)(c X + 1)^-1` in the rotating momentum frame.
    fn materialize(&self) -> Result<CMat> {
        let l = self.sites;
        let [a, b, c, _] = self.m;
        if self.m == IDENTITY {
            return Ok(self.x.clone());
        }
        let num = Mat::from_fn(l, l, |i, j| self.x[(i, j)] * a + if i == j { C64::new(b, 0.0) } else { ZERO });
        if c == 0.0 {
            return Ok(num);
        }
        let k = Mat::from_fn(l, l, |i, j| self.x[(i, j)] * c + if i == j { ONE } else { ZERO });
        let mut y = linalg::solve(k.as_ref(), num.as_ref())?;
        linalg::hermitize_in_place(&mut y);
        Ok(y)
    }

    /// Replace `X` by the current `Y` and reset the factor.
    pub fn rebase(&mut self) -> Result<()> {
        if self.m != IDENTITY {
            self.x = self.materialize()?;
            self.m = IDENTITY;
            self.rebases += 1;
        }
        self.site_cache = None;
        Ok(())
    }

    /// Real-space correlation matrix at the current time.
    pub fn correlation(&self) -> Result<CorrelationMatrix> {
        let l = self.sites;
        let y = self.materialize()?;
        let t = self.time();
        let v = Mat::from_fn(l, l, |s, k| self.roots[(k * s) % l].conj() * C64::from_polar(1.0, -self.eps[k] * t));
        let mut d = &(&v * &y) * v.adjoint();
        linalg::hermitize_in_place(&mut d);
        Ok(CorrelationMatrix::new(d))
    }

    fn phases(&mut self) -> &[C64] {
        let steps = self.steps;
        if self.phase_cache.as_ref().map_or(true, |(s, _)| *s != steps) {
            let t = self.time();
            self.phase_cache = Some((steps, self.eps.iter().map(|e| C64::from_polar(1.0, e * t)).collect()));
        }
        &self.phase_cache.as_ref().expect("filled").1
    }

    /// `g_k = exp(i eps_k t) F[k, site]`, so that `D[l, l] = g^dag Y g`.
    fn site_vector(&mut self, site: usize) -> Vec<C64> {
        let l = self.sites;
        let roots: Vec<C64> = (0..l).map(|k| self.roots[(k * site) % l]).collect();
        self.phases().iter().zip(&roots).map(|(p, r)| p * r).collect()
    }

    /// `(c X + 1)^-1 g` by a Neumann series.
    fn k_inv(&self, g: &[C64]) -> Result<Vec<C64>> {
        let c = self.m[2];
        let mut sum = g.to_vec();
        if c == 0.0 {
            return Ok(sum);
        }
        let mut term = g.to_vec();
        let mut tmp = vec![ZERO; g.len()];
        for _ in 0..80 {
            linalg::matvec(self.x.as_ref(), &term, &mut tmp);
            let mut tn = 0.0;
            let mut sn = 0.0;
            for i in 0..g.len() {
                term[i] = tmp[i] * (-c);
                sum[i] += term[i];
                tn += term[i].norm_sqr();
                sn += sum[i].norm_sqr();
            }
            if tn <= 1e-34 * sn {
                return Ok(sum);
            }
        }
        Err(Error::Numerical("Neumann series did not converge".into()))
    }

    fn site_data(&mut self, site: usize) -> Result<&SiteCache> {
        let steps = self.steps;
        if self.site_cache.as_ref().is_some_and(|s| s.site == site && s.steps == steps) {
            return Ok(self.site_cache.as_ref().expect("checked"));
        }
        let l = self.sites;
        let g = self.site_vector(site);
        let mut xg = vec![ZERO; l];
        linalg::matvec(self.x.as_ref(), &g, &mut xg);
        let [a, b, c, _] = self.m;
        let yg = if self.m == IDENTITY {
            xg.clone()
        } else if c == 0.0 {
            xg.iter().zip(&g).map(|(x, gg)| x * a + gg * b).collect()
        } else {
            let w = self.k_inv(&g)?;
            let mut xw = vec![ZERO; l];
            linalg::matvec(self.x.as_ref(), &w, &mut xw);
            xw.iter().zip(&w).map(|(x, ww)| x * a + ww * b).collect()
        };
        let dll = linalg::dotc(&g, &yg).re;
        self.site_cache = Some(SiteCache { site, steps, g, xg, yg, dll });
        Ok(self.site_cache.as_ref().expect("filled"))
    }

    /// Interval containing `D[l, l]` from a single product `X g`.
    ///
    /// With `d = 1`, `f(x) = b + det x - det c x^2 / (1 + c x)`, and the last
    /// term is bracketed using `1 - u <= 1 + c X <= 1 + u`, `u = |c| ||X||`.
    fn occupation_bounds(&mut self, site: usize) -> Result<(f64, f64)> {
        let [a, b, c, _] = self.m;
        if c == 0.0 {
            let d = self.occupation(site)?;
            return Ok((d, d));
        }
        let l = self.sites;
        let g = self.site_vector(site);
        let mut xg = vec![ZERO; l];
        linalg::matvec(self.x.as_ref(), &g, &mut xg);
        let det = a - b * c;
        let gxg = linalg::dotc(&g, &xg).re;
        let t: f64 = xg.iter().map(|v| v.norm_sqr()).sum();
        let u = (c.abs() * x_bound(self.m)) * (1.0 + 1e-6) + 1e-12;
        if u >= 0.5 {
            let d = self.occupation(site)?;
            return Ok((d, d));
        }
        let (r_lo, r_hi) = (t / (1.0 + u), t / (1.0 - u));
        let (e1, e2) = (-det * c * r_lo, -det * c * r_hi);
        let base = b + det * gxg;
        let slack = 1e-12 * (1.0 + base.abs());
        Ok((base + e1.min(e2) - slack, base + e1.max(e2) + slack))
    }

    fn jump_decision(&mut self, site: usize, r1: f64) -> Result<bool> {
        let (lo, hi) = self.occupation_bounds(site)?;
        let (gp, gm, eta, dt) = (self.gamma_plus, self.gamma_minus, self.eta, self.dt);
        let p_at = |d: f64| eta * dt * (gp * (1.0 - d) + gm * d);
        let (p1, p2) = (p_at(lo.clamp(0.0, 1.0)), p_at(hi.clamp(0.0, 1.0)));
        if r1 < p1.min(p2) {
            return Ok(true);
        }
        if r1 >= p1.max(p2) {
            return Ok(false);
        }
        Ok(r1 < conditional::local_probabilities(self.occupation(site)?, gp, gm, eta, dt)?.jump)
    }

    /// `D[l, l]` at the current time.
    pub fn occupation(&mut self, site: usize) -> Result<f64> {
        Ok(self.site_data(site)?.dll)
    }

    fn apply_jump(&mut self, site: usize, kind: JumpKind) -> Result<bool> {
        let [a, b, c, _] = self.m;
        let det = a - b * c;
        let s = self.site_data(site)?.clone();
        let (w, kw, sy): (Vec<C64>, Vec<C64>, f64) = match kind {
            JumpKind::Loss => {
                if s.dll <= DIVISION_GUARD {
                    return Ok(false);
                }
                let kw = s.xg.iter().zip(&s.g).map(|(x, g)| x * a + g * b).collect();
                (s.yg.clone(), kw, -1.0 / s.dll)
            }
            JumpKind::Gain => {
                let hole = 1.0 - s.dll;
                if hole <= DIVISION_GUARD {
                    return Ok(false);
                }
                let w = s.g.iter().zip(&s.yg).map(|(g, y)| g - y).collect();
                let kw = s.xg.iter().zip(&s.g).map(|(x, g)| x * (c - a) + g * (1.0 - b)).collect();
                (w, kw, 1.0 / hole)
            }
        };
        let wkw = linalg::dotc(&w, &kw).re;
        let denom = 1.0 - c * sy / det * wkw;
        let coef = sy / det / denom;
        if !coef.is_finite() {
            return Err(Error::Numerical("singular rank-one update in the fast backend".into()));
        }
        linalg::rank1_update(&mut self.x, C64::new(coef, 0.0), &kw, &kw);
        self.site_cache = None;
        Ok(true)
    }
}

struct FastTarget<'a> {
    traj: &'a mut FastTrajectory,
}

impl JumpTarget for FastTarget<'_> {
    fn sites(&self) -> usize {
        self.traj.sites
    }

    fn jump_bound(&self) -> Option<f64> {
        let t = &self.traj;
        Some(t.eta * t.dt * t.gamma_plus.max(t.gamma_minus) * (1.0 + 1e-7))
    }

    fn probabilities(&mut self, l: usize) -> Result<SiteProbabilities> {
        let dll = self.traj.occupation(l)?;
        let t = &self.traj;
        conditional::local_probabilities(dll, t.gamma_plus, t.gamma_minus, t.eta, t.dt)
    }

    fn jump(&mut self, l: usize, kind: JumpKind) -> Result<bool> {
        self.traj.apply_jump(l, kind)
    }

    fn jump_occurs(&mut self, l: usize, r1: f64) -> Result<bool> {
        self.traj.jump_decision(l, r1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditional::{conditional_substep, NoJumpPropagator};
    use crate::linalg::random_mixed;
    use crate::model::{build_hopping_hamiltonian, build_jump_channels, initial_cdw_state, ModelParams};
    use crate::unconditional::LindbladPropagator;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Dense {
        d: CorrelationMatrix,
        channels: JumpChannels,
        no_jump: NoJumpPropagator,
        lindblad: crate::unconditional::FixedLindblad,
        eta: f64,
        dt: f64,
    }

    impl Dense {
        fn step<R: rand::Rng>(&mut self, rng: &mut R) -> Vec<JumpEvent> {
            let log = conditional_substep(&mut self.d, &self.channels, &self.no_jump, self.eta, self.dt, rng).unwrap();
            self.d = self.lindblad.apply(&self.d).hermitized();
            log
        }
    }

    fn pair(l: usize, gamma: f64, n: f64, eta: f64, dt: f64, d0: CorrelationMatrix) -> (Dense, FastTrajectory) {
        let p = ModelParams::from_density(l, 1.0, gamma, n, eta).unwrap();
        let h = build_hopping_hamiltonian(l, 1.0).unwrap();
        let channels = build_jump_channels(&p, &h, None, None).unwrap();
        let no_jump = NoJumpPropagator::new(&h, &channels, eta * dt).unwrap();
        let lindblad = LindbladPropagator::new(&channels).with_duration((1.0 - eta) * dt);
        let fast = FastTrajectory::new(&h, &channels, eta, dt, &d0).unwrap();
        (Dense { d: d0, channels, no_jump, lindblad, eta, dt }, fast)
    }

    fn compare(l: usize, gamma: f64, n: f64, eta: f64, dt: f64, d0: CorrelationMatrix, steps: usize, seed: u64) -> (f64, usize, u64) {
        let (mut dense, mut fast) = pair(l, gamma, n, eta, dt, d0);
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        let mut jumps = 0;
        for _ in 0..steps {
            let a = dense.step(&mut r1);
            let b = fast.step(&mut r2).unwrap();
            assert_eq!(a, b);
            jumps += a.len();
        }
        let diff = linalg::max_abs_diff(dense.d.d().as_ref(), fast.correlation().unwrap().d().as_ref());
        (diff, jumps, fast.rebases())
    }

    #[test]
    fn pure_mode_matches_dense() {
        let (diff, jumps, _) = compare(12, 0.1, 0.4, 1.0, 0.2, initial_cdw_state(12).unwrap(), 400, 1);
        assert!(jumps > 50, "{jumps}");
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn mixed_states_match_dense() {
        for (eta, n, seed) in [(0.7, 0.4, 2), (0.3, 0.5, 3), (1.0, 0.35, 4), (0.9, 0.6, 5)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let d0 = CorrelationMatrix::new(random_mixed(10, &mut rng));
            let (diff, jumps, rebases) = compare(10, 0.15, n, eta, 0.2, d0, 300, seed);
            assert!(jumps > 20, "{jumps}");
            assert!(diff < 1e-9, "eta={eta} n={n}: {diff}");
            if n != 0.5 {
                assert!(rebases > 0);
            }
        }
    }

    #[test]
    fn occupation_bounds_bracket_exact_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d0 = CorrelationMatrix::new(random_mixed(10, &mut rng));
        let (_, mut fast) = pair(10, 0.3, 0.3, 0.8, 0.2, d0);
        let mut checked = 0;
        for _ in 0..200 {
            fast.step(&mut rng).unwrap();
            for site in [0, 3, 7] {
                let (lo, hi) = fast.occupation_bounds(site).unwrap();
                let exact = fast.occupation(site).unwrap();
                assert!(lo <= exact && exact <= hi, "{lo} {exact} {hi}");
                assert!(hi - lo < 0.05);
                checked += usize::from(hi > lo);
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn deterministic_limit() {
        let (diff, jumps, _) = compare(8, 0.2, 0.3, 0.0, 0.5, initial_cdw_state(8).unwrap(), 100, 6);
        assert_eq!(jumps, 0);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn rejects_unsupported_models() {
        let l = 6;
        let p = ModelParams::from_density(l, 1.0, 0.1, 0.4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = LatticeHamiltonian::from_matrix(linalg::random_hermitian(l, &mut rng)).unwrap();
        let c = build_jump_channels(&p, &h, None, None).unwrap();
        assert!(FastTrajectory::new(&h, &c, 1.0, 0.1, &initial_cdw_state(l).unwrap()).is_err());
        let h = build_hopping_hamiltonian(l, 1.0).unwrap();
        let b = linalg::random_complex(l, l, &mut rng);
        let c = build_jump_channels(&p, &h, Some(b.clone()), Some(b)).unwrap();
        assert!(FastTrajectory::new(&h, &c, 1.0, 0.1, &initial_cdw_state(l).unwrap()).is_err());
    }

    #[test]
    fn moebius_algebra() {
        let f = [1.0, 0.0, 0.3, 0.7];
        let g = [0.9, 0.04, 0.0, 1.0];
        let y = 0.37;
        let mob = |m: Mobius, x: f64| (m[0] * x + m[1]) / (m[2] * x + m[3]);
        let fg = compose(f, g);
        assert!((mob(fg, y) - mob(f, mob(g, y))).abs() < 1e-15);
        let n = normalize(fg).unwrap();
        assert!((mob(n, y) - mob(fg, y)).abs() < 1e-15);
        assert!(well_conditioned(IDENTITY));
        assert!(!well_conditioned([1.0, 0.0, 0.5, 1.0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn fast_and_dense_agree(seed in 0u64..10_000, eta in 0.0f64..=1.0, n in 0.2f64..0.8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d0 = CorrelationMatrix::new(random_mixed(8, &mut rng));
            let (diff, _, _) = compare(8, 0.2, n, eta, 0.15, d0, 150, seed);
            prop_assert!(diff < 1e-9, "{}", diff);
        }
    }
}
