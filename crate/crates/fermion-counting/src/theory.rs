//! Closed-form Gaussian and renormalized predictions for density correlations,
//! entanglement entropy and the derived length scales.
//!
//! Everything here is generic over the float type. Lattice curves use the
//! rescaled momentum `q~ = 2 sin(q/2)` and are tabulated on Gauss-Legendre
//! panels over `[0, pi]` by [`SpectrumTable`].

use num_complex::Complex;
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature;

fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("constant representable")
}

fn pi<T: Float>() -> T {
    c(std::f64::consts::PI)
}

/// Physical inputs and derived scales of the field theory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams<T> {
    pub n: T,
    pub gamma: T,
    pub j: T,
    pub delta_eta: T,
    /// Symmetry-class index, `1/2` for real hopping.
    pub beta: T,
}

impl<T: Float> TheoryParams<T> {
    pub fn new(n: T, gamma: T, j: T, delta_eta: T) -> Result<Self> {
        if !(n > T::zero() && n < T::one()) {
            return domain("density must lie in (0, 1)");
        }
        if !(gamma > T::zero()) || !(j > T::zero()) {
            return domain("rate and hopping must be positive");
        }
        if !(delta_eta >= T::zero() && delta_eta <= T::one()) {
            return domain("inefficiency must lie in [0, 1]");
        }
        Ok(Self { n, gamma, j, delta_eta, beta: c(0.5) })
    }

    pub fn with_beta(mut self, beta: T) -> Result<Self> {
        if beta != c(0.5) && beta != T::one() {
            return domain("beta must be 1/2 or 1");
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) {
            return domain("rate must be positive");
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_delta_eta(self, delta_eta: T) -> Result<Self> {
        Self::new(self.n, self.gamma, self.j, delta_eta)?.with_beta(self.beta)
    }

    fn stiffness(&self) -> T {
        T::one() - c::<T>(2.0) * self.n * (T::one() - self.n)
    }

    /// `l0 = J / (sqrt(2) gamma)`.
    pub fn l0(&self) -> T {
        self.j / (c::<T>(2.0).sqrt() * self.gamma)
    }

    /// `g0 = sqrt(2) n (1 - n) l0 / sqrt(1 - 2 n (1 - n))`.
    pub fn g0(&self) -> T {
        c::<T>(2.0).sqrt() * self.n * (T::one() - self.n) * self.l0() / self.stiffness().sqrt()
    }

    /// `v = 2 J sqrt(1 - 2 n (1 - n))`.
    pub fn velocity(&self) -> T {
        c::<T>(2.0) * self.j * self.stiffness().sqrt()
    }

    /// `xi = l0 / sqrt(delta_eta)`, infinite at perfect efficiency.
    pub fn xi(&self) -> T {
        if self.delta_eta == T::zero() {
            T::infinity()
        } else {
            self.l0() / self.delta_eta.sqrt()
        }
    }

    /// `l* = l0 exp(4 pi beta g0)`.
    pub fn l_star(&self) -> T {
        self.l0() * (c::<T>(4.0) * pi::<T>() * self.beta * self.g0()).exp()
    }

    /// Coefficient `4 sqrt((1 - 2n(1-n)) / 2)` of the linear Gaussian correction.
    pub fn linear_coefficient(&self) -> T {
        c::<T>(4.0) * (self.stiffness() / c(2.0)).sqrt()
    }

    /// Analytic maximum of the renormalized `C_q / (g0 q)`.
    pub fn q_c(&self) -> T {
        T::one() / (c::<T>(4.0) * pi::<T>() * self.beta * self.g0() * self.linear_coefficient() * self.l0())
    }
}

/// `b(u, v) = [(1 - i v)^2 + 2 u^2]^(-1/2)` on the principal branch.
pub fn b_kernel<T: Float>(u: T, v: T) -> Complex<T> {
    let one_minus_iv = Complex::new(T::one(), -v);
    let z = one_minus_iv * one_minus_iv + Complex::new(c::<T>(2.0) * u * u, T::zero());
    Complex::new(T::one(), T::zero()) / z.sqrt()
}

fn tolerance<T: Float>() -> T {
    c::<T>(quadrature::DEFAULT_TOL).max(T::epsilon() * c(1e3))
}

/// Bulk scaling function of the Gaussian momentum correlation.
pub fn c_tilde<T: Float>(u: T, n: T, delta_eta: T) -> Result<T> {
    if !(u >= T::zero()) || !u.is_finite() {
        return domain("c_tilde needs finite u >= 0");
    }
    if !(delta_eta >= T::zero() && delta_eta <= T::one()) {
        return domain("inefficiency must lie in [0, 1]");
    }
    if !(n > T::zero() && n < T::one()) {
        return domain("density must lie in (0, 1)");
    }
    let e = T::one() - c::<T>(4.0) * delta_eta;
    let nn = c::<T>(4.0) * n * (T::one() - n);
    let two_u = c::<T>(2.0) * u;
    let integrand = |v: T| {
        let bb = b_kernel(two_u, v);
        let abs2 = bb.norm_sqr();
        let num = bb.re - e * abs2;
        let den = T::one() - e * e * abs2 - e * nn * num;
        if den == T::zero() {
            T::zero()
        } else {
            num / den
        }
    };
    let val = quadrature::integrate_to_infinity(integrand, T::zero(), tolerance())
        .map_err(|e| Error::Numerical(format!("c_tilde quadrature: {e}")))?;
    Ok(c::<T>(2.0) / pi::<T>() * val)
}

/// Gaussian momentum correlation `n (1 - n) c~(|q| l0)`.
pub fn gaussian_cq<T: Float>(q: T, p: &TheoryParams<T>) -> Result<T> {
    Ok(p.n * (T::one() - p.n) * c_tilde(q.abs() * p.l0(), p.n, p.delta_eta)?)
}

/// Small-momentum form: `g0 q - 4 n (1-n) (q l0)^2` at `delta_eta = 0`,
/// `(g0 / l0) sqrt((q l0)^2 + delta_eta)` otherwise.
pub fn asymptotic_cq<T: Float>(q: T, p: &TheoryParams<T>) -> T {
    let q = q.abs();
    let ql = q * p.l0();
    if p.delta_eta == T::zero() {
        p.g0() * q - c::<T>(4.0) * p.n * (T::one() - p.n) * ql * ql
    } else {
        p.g0() / p.l0() * (ql * ql + p.delta_eta).sqrt()
    }
}

/// Real-space asymptotics: `-g0 / (pi l^2)` at `delta_eta = 0`,
/// `-(g0 / sqrt(pi l0)) delta_eta^(1/4) l^(-3/2) exp(-l / xi)` otherwise.
pub fn asymptotic_cl<T: Float>(l: T, p: &TheoryParams<T>) -> T {
    if p.delta_eta == T::zero() {
        -p.g0() / (pi::<T>() * l * l)
    } else {
        -(p.g0() / (pi::<T>() * p.l0()).sqrt()) * p.delta_eta.sqrt().sqrt() * l.powf(c(-1.5)) * (-l / p.xi()).exp()
    }
}

/// Gaussian real-space correlation on the infinite lattice at integer distance `l`.
pub fn gaussian_cl<T: Float + Send + Sync>(l: usize, p: &TheoryParams<T>) -> Result<T> {
    let table = SpectrumTable::build(p, CurveKind::Gaussian, l.max(8))?;
    Ok(table.cosine_coefficient(l))
}

/// Linearized flow `g(l) = g0 - ln(l / l0) / (4 pi beta)`.
pub fn rg_flow_g<T: Float>(l: T, p: &TheoryParams<T>) -> T {
    p.g0() - (l / p.l0()).ln() / (c::<T>(4.0) * pi::<T>() * p.beta)
}

/// Length at which the linearized flow reaches zero.
pub fn l_star<T: Float>(p: &TheoryParams<T>) -> T {
    p.l_star()
}

/// Renormalized value together with its validity flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RgValue<T> {
    pub value: T,
    /// True inside the window `[1/l*, 1/l0]`.
    pub valid: bool,
}

/// Renormalized ratio `C_q / (g0 q) ~ 1 - a q l0 + ln(q l0) / (4 pi beta g0)`.
///
/// For `delta_eta > 0` the logarithm is evaluated at `sqrt(q^2 + 1/xi^2)`,
/// freezing the flow at the correlation length.
pub fn rg_corrected_ratio<T: Float>(q: T, p: &TheoryParams<T>) -> RgValue<T> {
    let q = q.abs();
    let xi = p.xi();
    let q_ir = if xi.is_finite() { (q * q + T::one() / (xi * xi)).sqrt() } else { q };
    let value = T::one() - p.linear_coefficient() * q * p.l0()
        + (q_ir * p.l0()).ln() / (c::<T>(4.0) * pi::<T>() * p.beta * p.g0());
    let valid = q_ir >= T::one() / p.l_star() && q <= T::one() / p.l0();
    RgValue { value, valid }
}

/// Renormalized momentum correlation: the small-momentum Gaussian form times the ratio of [`rg_corrected_ratio`].
pub fn rg_corrected_cq<T: Float>(q: T, p: &TheoryParams<T>) -> RgValue<T> {
    let r = rg_corrected_ratio(q, p);
    let ql = q.abs() * p.l0();
    let base = p.g0() / p.l0() * (ql * ql + p.delta_eta).sqrt();
    RgValue { value: base * r.value, valid: r.valid }
}

/// Additive renormalization of the Gaussian curve on the lattice,
/// `C^G(q) + dg(q) q~` with `dg = -ln(1 + l_IR / l0) / (4 pi beta)` and
/// `l_IR = (q~^2 + xi^-2)^(-1/2)`.
///
/// For `q~ -> 0` this reproduces the logarithmic term of
/// [`rg_corrected_ratio`] while staying finite at short distances.
pub fn rg_smooth_cq<T: Float>(q: T, p: &TheoryParams<T>) -> Result<T> {
    let qt = q_tilde(q);
    let base = gaussian_cq(qt, p)?;
    Ok(base + rg_shift(qt, p) * qt)
}

fn rg_shift<T: Float>(qt: T, p: &TheoryParams<T>) -> T {
    let xi = p.xi();
    let inv_xi2 = if xi.is_finite() { T::one() / (xi * xi) } else { T::zero() };
    let k2 = qt * qt + inv_xi2;
    if k2 == T::zero() {
        return T::zero();
    }
    let l_ir = T::one() / k2.sqrt();
    -(T::one() + l_ir / p.l0()).ln() / (c::<T>(4.0) * pi::<T>() * p.beta)
}

/// `q~ = 2 sin(q / 2)`.
pub fn q_tilde<T: Float>(q: T) -> T {
    c::<T>(2.0) * (q / c(2.0)).sin()
}

/// Which momentum curve a [`SpectrumTable`] samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    /// `n(1-n) c~(q~ l0)`.
    Gaussian,
    /// [`rg_smooth_cq`].
    Renormalized,
}

const GL6_X: [f64; 6] = [
    -0.932_469_514_203_152,
    -0.661_209_386_466_264_5,
    -0.238_619_186_083_196_9,
    0.238_619_186_083_196_9,
    0.661_209_386_466_264_5,
    0.932_469_514_203_152,
];
const GL6_W: [f64; 6] = [
    0.171_324_492_379_170_3,
    0.360_761_573_048_138_6,
    0.467_913_934_572_691,
    0.467_913_934_572_691,
    0.360_761_573_048_138_6,
    0.171_324_492_379_170_3,
];

/// Momentum curve sampled on quadrature nodes over `[0, pi]`.
///
/// Panels have width `pi / (4 l_res)` so that cosines up to distance
/// `l_res` are integrated accurately; the first panel is refined
/// geometrically towards `q = 0`.
#[derive(Clone, Debug)]
pub struct SpectrumTable<T> {
    pub q: Vec<T>,
    pub w: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Float + Send + Sync> SpectrumTable<T> {
    pub fn build(p: &TheoryParams<T>, kind: CurveKind, l_res: usize) -> Result<Self> {
        let panels = 4 * l_res.max(2);
        let width = pi::<T>() / T::from(panels).expect("panel count");
        let mut edges = vec![T::zero()];
        let lo = c::<T>(1e-8).min(width * c(1e-3));
        for k in 0..=40 {
            edges.push(lo * (width / lo).powf(T::from(k).unwrap() / c(40.0)));
        }
        for k in 2..=panels {
            edges.push(width * T::from(k).expect("edge"));
        }
        let mut q = Vec::with_capacity(edges.len() * 6);
        let mut w = Vec::with_capacity(edges.len() * 6);
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = (b - a) * c(0.5);
            let mid = (a + b) * c(0.5);
            for (x, wt) in GL6_X.iter().zip(GL6_W.iter()) {
                q.push(mid + half * c(*x));
                w.push(half * c(*wt));
            }
        }
        let values: Result<Vec<T>> = q
            .par_iter()
            .map(|&qq| match kind {
                CurveKind::Gaussian => gaussian_cq(q_tilde(qq), p),
                CurveKind::Renormalized => rg_smooth_cq(qq, p),
            })
            .collect();
        Ok(Self { q, w, c: values? })
    }

    /// Real-space correlation `C_d = (1/pi) int_0^pi C(q) cos(q d) dq`.
    pub fn cosine_coefficient(&self, d: usize) -> T {
        let dd = T::from(d).expect("distance");
        let s = self
            .q
            .iter()
            .zip(&self.w)
            .zip(&self.c)
            .fold(T::zero(), |acc, ((&q, &w), &cq)| acc + w * cq * (q * dd).cos());
        s / pi::<T>()
    }

    /// `C_d` for `d = 0..=d_max`.
    pub fn cosine_coefficients(&self, d_max: usize) -> Vec<T> {
        (0..=d_max).into_par_iter().map(|d| self.cosine_coefficient(d)).collect()
    }

    /// Entropy `(2 pi / 3) int_0^pi dq C(q) (1 - cos(q l)) / q~^2` with the lattice kernel.
    pub fn entropy(&self, ell: T) -> T {
        let s = self.q.iter().zip(&self.w).zip(&self.c).fold(T::zero(), |acc, ((&q, &w), &cq)| {
            let qt = q_tilde(q);
            // (1 - cos(q l)) / q~^2 = sin^2(q l / 2) / (2 sin^2(q / 2))
            let s2 = (q * ell * c(0.5)).sin();
            acc + w * cq * s2 * s2 * c(2.0) / (qt * qt)
        });
        c::<T>(2.0) * pi::<T>() / c(3.0) * s
    }

    /// Entropy with the continuum kernel `1 / q^2`.
    pub fn entropy_continuum(&self, ell: T) -> T {
        let s = self.q.iter().zip(&self.w).zip(&self.c).fold(T::zero(), |acc, ((&q, &w), &cq)| {
            let s2 = (q * ell * c(0.5)).sin();
            acc + w * cq * s2 * s2 * c(2.0) / (q * q)
        });
        c::<T>(2.0) * pi::<T>() / c(3.0) * s
    }

    /// Effective central charge `c_l = 3 l (S_{l+1} - S_{l-1}) / 2` for `l = 2..=l_max`,
    /// computed from the exact lattice identity
    /// `S_{l+1} - S_l = (pi^2 / 3) [C_0 + 2 sum_{d=1}^{l} C_d]`.
    pub fn central_charge(&self, l_max: usize) -> Vec<(usize, T)> {
        let cd = self.cosine_coefficients(l_max + 1);
        let mut ds = Vec::with_capacity(l_max + 1);
        let mut acc = cd[0];
        ds.push(acc);
        for d in 1..=l_max {
            acc = acc + c::<T>(2.0) * cd[d];
            ds.push(acc);
        }
        let k = pi::<T>() * pi::<T>() / c(3.0);
        (2..=l_max)
            .map(|l| {
                let lf = T::from(l).expect("length");
                (l, c::<T>(1.5) * lf * k * (ds[l] + ds[l - 1]))
            })
            .collect()
    }
}

/// Gaussian entanglement entropy of an interval of length `ell` on the infinite lattice.
pub fn entropy_prediction<T: Float + Send + Sync>(ell: T, p: &TheoryParams<T>) -> Result<T> {
    if !(ell >= T::zero()) {
        return domain("interval length must be non-negative");
    }
    if ell == T::zero() {
        return Ok(T::zero());
    }
    let res = ell.ceil().to_usize().unwrap_or(usize::MAX).clamp(8, 1 << 20);
    Ok(SpectrumTable::build(p, CurveKind::Gaussian, res)?.entropy(ell))
}

/// Theory curve of the effective central charge for `l = 2..=l_max`.
pub fn central_charge_curve<T: Float + Send + Sync>(
    p: &TheoryParams<T>,
    kind: CurveKind,
    l_max: usize,
) -> Result<Vec<(usize, T)>> {
    Ok(SpectrumTable::build(p, kind, l_max)?.central_charge(l_max))
}
