//! Static model objects: parameters, lattice Hamiltonian, jump channels and
//! the initial charge-density-wave state.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian::CorrelationMatrix;
use crate::linalg::{self, I};
use crate::{CMat, C64};

/// Physical parameters. Rates are in units of the hopping `j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub l: usize,
    pub j: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub eta: f64,
}

/// Gain and loss rates `(gamma_plus, gamma_minus)` for mean rate `gamma` and density `n`.
pub fn rates_from_density(gamma: f64, n: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return domain(format!("mean rate must be positive, got {gamma}"));
    }
    if !(n > 0.0 && n < 1.0) {
        return domain(format!("density must lie in (0, 1), got {n}"));
    }
    Ok((2.0 * gamma * n, 2.0 * gamma * (1.0 - n)))
}

impl ModelParams {
    pub fn from_rates(l: usize, j: f64, gamma_plus: f64, gamma_minus: f64, eta: f64) -> Result<Self> {
        if !(gamma_plus >= 0.0 && gamma_minus >= 0.0) {
            return domain("rates must be non-negative");
        }
        if !(0.0..=1.0).contains(&eta) {
            return domain(format!("efficiency must lie in [0, 1], got {eta}"));
        }
        if l < 2 {
            return domain("lattice needs at least two sites");
        }
        Ok(Self { l, j, gamma_plus, gamma_minus, eta })
    }

    pub fn from_density(l: usize, j: f64, gamma: f64, n: f64, eta: f64) -> Result<Self> {
        let (gp, gm) = rates_from_density(gamma, n)?;
        Self::from_rates(l, j, gp, gm, eta)
    }

    pub fn gamma(&self) -> f64 {
        0.5 * (self.gamma_plus + self.gamma_minus)
    }

    pub fn delta_gamma(&self) -> f64 {
        self.gamma_plus - self.gamma_minus
    }

    /// Steady-state density; NaN without dissipation.
    pub fn n(&self) -> f64 {
        self.gamma_plus / (self.gamma_plus + self.gamma_minus)
    }

    pub fn delta_eta(&self) -> f64 {
        1.0 - self.eta
    }
}

/// Hermitian single-particle Hamiltonian with its spectral decomposition.
#[derive(Clone, Debug)]
pub struct LatticeHamiltonian {
    pub h: CMat,
    energies: Vec<f64>,
    modes: CMat,
}

impl LatticeHamiltonian {
    pub fn from_matrix(h: CMat) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::Dimension("Hamiltonian must be square".into()));
        }
        let scale = linalg::max_abs(h.as_ref()).max(1.0);
        if linalg::hermiticity_defect(h.as_ref()) > 1e-12 * scale {
            return domain("Hamiltonian is not Hermitian");
        }
        let (energies, modes) = linalg::herm_eigen(h.as_ref())?;
        Ok(Self { h, energies, modes })
    }

    pub fn size(&self) -> usize {
        self.h.nrows()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `U(tau) = exp(-i H tau)`.
    pub fn unitary(&self, tau: f64) -> CMat {
        linalg::herm_function(&self.energies, self.modes.as_ref(), |e| (-I * (e * tau)).exp())
    }

    /// Dispersion `eps_k = sum_d H[0, d] exp(2 pi i k d / L)` if `H` is circulant.
    pub fn circulant_dispersion(&self) -> Option<Vec<f64>> {
        let l = self.size();
        let tol = 1e-14 * linalg::max_abs(self.h.as_ref()).max(1.0);
        for i in 0..l {
            for j in 0..l {
                if (self.h[(i, j)] - self.h[(0, (j + l - i) % l)]).norm() > tol {
                    return None;
                }
            }
        }
        let eps = (0..l)
            .map(|k| {
                (0..l)
                    .map(|d| {
                        let ph = 2.0 * std::f64::consts::PI * ((k * d) % l) as f64 / l as f64;
                        self.h[(0, d)] * C64::new(ph.cos(), ph.sin())
                    })
                    .sum::<C64>()
                    .re
            })
            .collect();
        Some(eps)
    }
}

/// Nearest-neighbour hopping `-J` on a periodic ring.
pub fn build_hopping_hamiltonian(l: usize, j: f64) -> Result<LatticeHamiltonian> {
    if l < 2 {
        return domain("lattice needs at least two sites");
    }
    let mut h = CMat::zeros(l, l);
    for s in 0..l {
        let t = (s + 1) % l;
        h[(s, t)] -= C64::new(j, 0.0);
        h[(t, s)] -= C64::new(j, 0.0);
    }
    LatticeHamiltonian::from_matrix(h)
}

/// Gain and loss bath matrices and the non-Hermitian generator `Z = H - i M`.
#[derive(Clone, Debug)]
pub struct JumpChannels {
    pub b_plus: CMat,
    pub b_minus: CMat,
    pub m_plus: CMat,
    pub m_minus: CMat,
    pub m: CMat,
    pub z: CMat,
    local: Option<(f64, f64)>,
}

impl JumpChannels {
    /// `(gamma_plus, gamma_minus)` when the channels are local and uniform.
    pub fn local_rates(&self) -> Option<(f64, f64)> {
        self.local
    }

    pub fn size(&self) -> usize {
        self.m.nrows()
    }

    /// `b` with `M_{+,l} = b b^dag`, `b_m = B_+[l, m]`.
    pub fn gain_vector(&self, l: usize) -> Vec<C64> {
        (0..self.size()).map(|m| self.b_plus[(l, m)]).collect()
    }

    /// `a` with `M_{-,l} = a a^dag`, `a_m = conj(B_-[l, m])`.
    pub fn loss_vector(&self, l: usize) -> Vec<C64> {
        (0..self.size()).map(|m| self.b_minus[(l, m)].conj()).collect()
    }

    /// `M_{+,l} = b b^dag`.
    pub fn m_plus_site(&self, l: usize) -> CMat {
        let b = self.gain_vector(l);
        Mat::from_fn(b.len(), b.len(), |i, k| b[i] * b[k].conj())
    }

    /// `M_{-,l} = a a^dag`.
    pub fn m_minus_site(&self, l: usize) -> CMat {
        let a = self.loss_vector(l);
        Mat::from_fn(a.len(), a.len(), |i, k| a[i] * a[k].conj())
    }

    /// `M_+ - M_-`, the anti-Hermitian part of the no-jump generator.
    pub fn delta_m(&self) -> CMat {
        linalg::lin_comb(linalg::ONE, self.m_plus.as_ref(), -linalg::ONE, self.m_minus.as_ref())
    }
}

/// Build channels from explicit `B_plus`/`B_minus` or, when omitted, local uniform ones.
pub fn build_jump_channels(
    params: &ModelParams,
    h: &LatticeHamiltonian,
    b_plus: Option<CMat>,
    b_minus: Option<CMat>,
) -> Result<JumpChannels> {
    let l = h.size();
    if params.l != l {
        return Err(Error::Dimension(format!("params.l = {} but H is {l}x{l}", params.l)));
    }
    let local = b_plus.is_none() && b_minus.is_none();
    let diag = |rate: f64| linalg::from_real_diag(&vec![(rate / 2.0).sqrt(); l]);
    let b_plus = b_plus.unwrap_or_else(|| diag(params.gamma_plus));
    let b_minus = b_minus.unwrap_or_else(|| diag(params.gamma_minus));
    for (name, b) in [("B_plus", &b_plus), ("B_minus", &b_minus)] {
        if b.nrows() != l || b.ncols() != l {
            return Err(Error::Dimension(format!("{name} must be {l}x{l}")));
        }
    }
    let m_plus = b_plus.transpose() * b_plus.conjugate();
    let m_minus = b_minus.adjoint() * &b_minus;
    let mut m_plus = m_plus;
    let mut m_minus = m_minus;
    linalg::hermitize_in_place(&mut m_plus);
    linalg::hermitize_in_place(&mut m_minus);
    let m = linalg::lin_comb(linalg::ONE, m_plus.as_ref(), linalg::ONE, m_minus.as_ref());
    let z = linalg::lin_comb(linalg::ONE, h.h.as_ref(), -I, m.as_ref());
    Ok(JumpChannels {
        b_plus,
        b_minus,
        m_plus,
        m_minus,
        m,
        z,
        local: local.then_some((params.gamma_plus, params.gamma_minus)),
    })
}

/// Charge-density wave `diag(1, 0, 1, 0, ...)`.
pub fn initial_cdw_state(l: usize) -> Result<CorrelationMatrix> {
    if l == 0 || l % 2 != 0 {
        return domain(format!("charge-density wave needs an even size, got {l}"));
    }
    let d: Vec<f64> = (0..l).map(|s| if s % 2 == 0 { 1.0 } else { 0.0 }).collect();
    Ok(CorrelationMatrix::new(linalg::from_real_diag(&d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rates_from_density_examples() {
        assert_eq!(rates_from_density(0.1, 0.5).unwrap(), (0.1, 0.1));
        let (gp, gm) = rates_from_density(0.1, 0.4).unwrap();
        assert!((gp - 0.08).abs() < 1e-16 && (gm - 0.12).abs() < 1e-16);
        let (gp, gm) = rates_from_density(0.2, 0.9).unwrap();
        assert!((gp - 0.36).abs() < 1e-15 && (gm - 0.04).abs() < 1e-15);
        assert!(rates_from_density(0.1, 1.0).is_err());
        assert!(rates_from_density(0.1, 0.0).is_err());
        assert!(rates_from_density(0.0, 0.5).is_err());
        assert!(rates_from_density(-1.0, 0.5).is_err());
    }

    #[test]
    fn params_identities() {
        let p = ModelParams::from_density(8, 1.0, 0.1, 0.4, 0.7).unwrap();
        assert!((p.gamma() - 0.1).abs() < 1e-16);
        assert!((p.n() - 0.4).abs() < 1e-15);
        assert!((p.delta_gamma() + 0.04).abs() < 1e-16);
        assert!((p.delta_eta() - 0.3).abs() < 1e-15);
        assert!(ModelParams::from_rates(8, 1.0, 0.1, 0.1, 1.5).is_err());
        assert!(ModelParams::from_rates(8, 1.0, -0.1, 0.1, 0.5).is_err());
    }

    #[test]
    fn hopping_hamiltonian_l4() {
        let h = build_hopping_hamiltonian(4, 1.0).unwrap();
        let expect_nonzero = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (0, 3), (3, 0)];
        for i in 0..4 {
            for j in 0..4 {
                let v = if expect_nonzero.contains(&(i, j)) { -1.0 } else { 0.0 };
                assert_eq!(h.h[(i, j)], C64::new(v, 0.0));
            }
        }
    }

    #[test]
    fn hopping_hamiltonian_l2_spectrum() {
        let h = build_hopping_hamiltonian(2, 1.0).unwrap();
        let e = h.energies();
        assert!((e[0] + 2.0).abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14);
        assert!(build_hopping_hamiltonian(1, 1.0).is_err());
    }

    #[test]
    fn hopping_spectrum_is_cosine_band() {
        for l in [3usize, 6, 11] {
            let h = build_hopping_hamiltonian(l, 0.7).unwrap();
            let mut band: Vec<f64> = (0..l)
                .map(|k| -2.0 * 0.7 * (2.0 * std::f64::consts::PI * k as f64 / l as f64).cos())
                .collect();
            band.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in band.iter().zip(h.energies()) {
                assert!((a - b).abs() < 1e-12);
            }
            let mut disp = h.circulant_dispersion().unwrap();
            disp.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in band.iter().zip(&disp) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = LatticeHamiltonian::from_matrix(linalg::random_hermitian(7, &mut rng)).unwrap();
        let u = h.unitary(1.3);
        let uu = &u * u.adjoint();
        assert!(linalg::max_abs_diff(uu.as_ref(), linalg::identity(7).as_ref()) < 1e-12);
        assert!(h.circulant_dispersion().is_none());
    }

    #[test]
    fn local_channels() {
        let p = ModelParams::from_rates(3, 1.0, 0.08, 0.12, 1.0).unwrap();
        let h = build_hopping_hamiltonian(3, 1.0).unwrap();
        let c = build_jump_channels(&p, &h, None, None).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((c.m_plus[(i, j)] - C64::new(0.04 * d, 0.0)).norm() < 1e-16);
                assert!((c.m_minus[(i, j)] - C64::new(0.06 * d, 0.0)).norm() < 1e-16);
                assert!((c.m[(i, j)] - C64::new(0.1 * d, 0.0)).norm() < 1e-16);
                assert!((c.z[(i, j)] - (h.h[(i, j)] - I * 0.1 * d)).norm() < 1e-16);
            }
        }
        assert_eq!(c.local_rates(), Some((0.08, 0.12)));
    }

    #[test]
    fn local_z_eigenvalues_are_shifted_band() {
        let p = ModelParams::from_density(6, 1.0, 0.1, 0.4, 1.0).unwrap();
        let h = build_hopping_hamiltonian(6, 1.0).unwrap();
        let c = build_jump_channels(&p, &h, None, None).unwrap();
        let (mut vals, _) = linalg::eigen(c.z.as_ref()).unwrap();
        vals.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        for (z, e) in vals.iter().zip(h.energies()) {
            assert!((z - C64::new(*e, -0.1)).norm() < 1e-10);
        }
    }

    #[test]
    fn pure_loss_channels() {
        let p = ModelParams::from_rates(4, 1.0, 0.0, 0.2, 1.0).unwrap();
        let h = build_hopping_hamiltonian(4, 1.0).unwrap();
        let c = build_jump_channels(&p, &h, Some(CMat::zeros(4, 4)), None).unwrap();
        assert_eq!(linalg::max_abs(c.m_plus.as_ref()), 0.0);
        let zm = linalg::lin_comb(linalg::ONE, h.h.as_ref(), -I, c.m_minus.as_ref());
        assert!(linalg::max_abs_diff(zm.as_ref(), c.z.as_ref()) < 1e-16);
        assert_eq!(c.local_rates(), None);
    }

    #[test]
    fn random_channels_are_hermitian_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ModelParams::from_rates(5, 1.0, 0.1, 0.1, 1.0).unwrap();
        let h = build_hopping_hamiltonian(5, 1.0).unwrap();
        let bp = linalg::random_complex(5, 5, &mut rng);
        let bm = linalg::random_complex(5, 5, &mut rng);
        let c = build_jump_channels(&p, &h, Some(bp.clone()), Some(bm)).unwrap();
        for m in [&c.m_plus, &c.m_minus, &c.m] {
            assert!(linalg::hermiticity_defect(m.as_ref()) < 1e-12);
            let ev = linalg::herm_eigenvalues(m.as_ref()).unwrap();
            assert!(ev.iter().all(|&x| x > -1e-12));
        }
        let mut sum = CMat::zeros(5, 5);
        for l in 0..5 {
            sum = &sum + c.m_plus_site(l);
        }
        assert!(linalg::max_abs_diff(sum.as_ref(), c.m_plus.as_ref()) < 1e-12);
        assert!(build_jump_channels(&p, &h, Some(CMat::zeros(4, 5)), None).is_err());
    }

    #[test]
    fn cdw_state() {
        let d = initial_cdw_state(4).unwrap();
        for s in 0..4 {
            let v = if s % 2 == 0 { 1.0 } else { 0.0 };
            assert_eq!(d.d()[(s, s)], C64::new(v, 0.0));
        }
        assert_eq!(initial_cdw_state(2).unwrap().trace(), 1.0);
        assert!((initial_cdw_state(50).unwrap().trace() - 25.0).abs() < 1e-15);
        assert!(initial_cdw_state(5).is_err());
    }
}
