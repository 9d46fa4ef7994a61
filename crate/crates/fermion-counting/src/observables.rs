//! State-derived observables: density correlations in real and momentum
//! space, subsystem entropy, effective central charge and the fermionic
//! logarithmic negativity.

use std::f64::consts::PI;

use faer::Mat;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::gaussian::CorrelationMatrix;
use crate::linalg::{self, I, ONE};
use crate::{CMat, C64};

/// Eigenvalue clamp used in entropies.
pub const EIGEN_CLAMP: f64 = 1e-12;

/// Chord length `(L / pi) sin(pi l / L)`.
pub fn chord_length(l: f64, system: usize) -> f64 {
    let lf = system as f64;
    lf / PI * (PI * l / lf).sin()
}

/// Rescaled momentum `2 sin(q / 2)`.
pub fn q_tilde(q: f64) -> f64 {
    2.0 * (q / 2.0).sin()
}

/// Real-space connected density correlation on the ring.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationProfile {
    /// `C_l` for `l = 0..L`.
    pub c_l: Vec<f64>,
    /// Chord lengths for `l = 0..L`.
    pub l_chord: Vec<f64>,
}

impl CorrelationProfile {
    pub fn new(c_l: Vec<f64>) -> Self {
        let system = c_l.len();
        let l_chord = (0..system).map(|l| chord_length(l as f64, system)).collect();
        Self { c_l, l_chord }
    }

    pub fn size(&self) -> usize {
        self.c_l.len()
    }
}

/// Per-state connected correlation `delta_{r0} D_ll - |D_{l,l+r}|^2`, averaged over `l`.
pub fn state_correlation(d: &CorrelationMatrix) -> Vec<f64> {
    let l = d.size();
    let m = d.d();
    let mut out = vec![0.0; l];
    for s in 0..l {
        for (r, o) in out.iter_mut().enumerate() {
            *o -= m[(s, (s + r) % l)].norm_sqr();
        }
        out[0] += m[(s, s)].re;
    }
    out.iter_mut().for_each(|v| *v /= l as f64);
    out
}

/// Translation-averaged products `D_ll D_{l+r,l+r}`.
pub fn density_products(d: &CorrelationMatrix) -> Vec<f64> {
    let l = d.size();
    let n: Vec<f64> = (0..l).map(|s| d.d()[(s, s)].re).collect();
    (0..l).map(|r| (0..l).map(|s| n[s] * n[(s + r) % l]).sum::<f64>() / l as f64).collect()
}

fn check_snapshots(snapshots: &[CorrelationMatrix]) -> Result<usize> {
    let first = snapshots.first().ok_or_else(|| Error::Domain("no snapshots".into()))?;
    let l = first.size();
    if snapshots.iter().any(|s| s.size() != l) {
        return domain("snapshots differ in size");
    }
    Ok(l)
}

/// Ensemble average of the per-state connected correlation.
pub fn connected_density_correlation(snapshots: &[CorrelationMatrix]) -> Result<CorrelationProfile> {
    let l = check_snapshots(snapshots)?;
    let mut acc = vec![0.0; l];
    for s in snapshots {
        for (a, v) in acc.iter_mut().zip(state_correlation(s)) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|v| *v /= snapshots.len() as f64);
    Ok(CorrelationProfile::new(acc))
}

/// `mean <n_l n_l'> - mean <n_l> mean <n_l'>`, including the covariance of
/// densities across snapshots.
pub fn connected_density_correlation_with_trajectory_covariance(snapshots: &[CorrelationMatrix]) -> Result<CorrelationProfile> {
    let l = check_snapshots(snapshots)?;
    let base = connected_density_correlation(snapshots)?;
    let k = snapshots.len() as f64;
    let mut products = vec![0.0; l];
    let mut mean_n = vec![0.0; l];
    for s in snapshots {
        for (a, v) in products.iter_mut().zip(density_products(s)) {
            *a += v / k;
        }
        for (site, m) in mean_n.iter_mut().enumerate() {
            *m += s.d()[(site, site)].re / k;
        }
    }
    let c_l = (0..l)
        .map(|r| {
            let outer = (0..l).map(|s| mean_n[s] * mean_n[(s + r) % l]).sum::<f64>() / l as f64;
            base.c_l[r] + products[r] - outer
        })
        .collect();
    Ok(CorrelationProfile::new(c_l))
}

/// One momentum-space sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentumPoint {
    pub k: usize,
    pub q: f64,
    pub q_tilde: f64,
    pub c_q: f64,
}

/// `C_q = sum_l C_l exp(-i q l)` for `q = 2 pi k / L`.
pub fn momentum_correlation(c_l: &[f64]) -> Result<Vec<MomentumPoint>> {
    let l = c_l.len();
    let mut out = Vec::with_capacity(l);
    for k in 0..l {
        let q = 2.0 * PI * k as f64 / l as f64;
        let mut s = C64::new(0.0, 0.0);
        for (r, &c) in c_l.iter().enumerate() {
            let phase = -2.0 * PI * ((k * r) % l) as f64 / l as f64;
            s += C64::new(phase.cos(), phase.sin()) * c;
        }
        let scale = c_l.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        if s.im.abs() > 1e-10 * scale {
            return Err(Error::Numerical(format!("C_q has imaginary part {:e} at k={k}", s.im)));
        }
        out.push(MomentumPoint { k, q, q_tilde: q_tilde(q), c_q: s.re });
    }
    Ok(out)
}

fn binary_entropy(lambda: f64) -> f64 {
    let x = lambda.clamp(EIGEN_CLAMP, 1.0 - EIGEN_CLAMP);
    -(x * x.ln() + (1.0 - x) * (1.0 - x).ln())
}

/// Von Neumann entropy of a block given its correlation matrix.
pub fn block_entropy(block: &CMat) -> Result<f64> {
    Ok(linalg::herm_eigenvalues(block.as_ref())?.into_iter().map(binary_entropy).sum())
}

/// Entropy of `ell` contiguous sites averaged over window offsets.
pub fn subsystem_entropy(d: &CorrelationMatrix, ell: usize, offsets: &[usize]) -> Result<f64> {
    if ell == 0 {
        return Ok(0.0);
    }
    if offsets.is_empty() {
        return domain("at least one window offset is required");
    }
    let mut s = 0.0;
    for &o in offsets {
        s += block_entropy(&d.reduce(o, ell)?)?;
    }
    Ok(s / offsets.len() as f64)
}

/// Offsets used for window averaging: every site for `ell <= 64`, otherwise 64 evenly spaced sites.
pub fn default_offsets(system: usize, ell: usize) -> Vec<usize> {
    spaced_offsets(system, if ell <= 64 { system } else { 64 })
}

/// `count` evenly spaced offsets on a ring of `system` sites.
pub fn spaced_offsets(system: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, system.max(1));
    (0..count).map(|k| k * system / count).collect()
}

/// `(pi^2 / 3) sum_{l,l'=1}^{ell} C_{l-l'}` from a ring profile.
pub fn second_cumulant_entropy(c_l: &[f64], ell: usize) -> f64 {
    if ell == 0 {
        return 0.0;
    }
    let l = c_l.len();
    let mut s = ell as f64 * c_l[0];
    for d in 1..ell {
        s += 2.0 * (ell - d) as f64 * c_l[d % l];
    }
    PI * PI / 3.0 * s
}

/// `c = 3 dS / d ln(length)` by central differences, one-sided at the ends.
pub fn effective_central_charge(lengths: &[f64], s: &[f64]) -> Result<Vec<f64>> {
    let n = lengths.len();
    if n != s.len() || n < 2 {
        return domain("central charge needs at least two matching points");
    }
    if lengths.iter().any(|&x| !(x > 0.0)) {
        return domain("lengths must be positive");
    }
    let x: Vec<f64> = lengths.iter().map(|v| v.ln()).collect();
    Ok((0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            3.0 * (s[b] - s[a]) / (x[b] - x[a])
        })
        .collect())
}

fn negativity_blocks(d: &CorrelationMatrix, ell: usize) -> Result<(CMat, CMat)> {
    let l = d.size();
    if ell == 0 || ell >= l {
        return domain("negativity cut must satisfy 0 < ell < L");
    }
    let g = Mat::from_fn(l, l, |i, j| 2.0 * d.d()[(i, j)] - if i == j { ONE } else { C64::new(0.0, 0.0) });
    let in_a = |i: usize| i < ell;
    let gp = Mat::from_fn(l, l, |i, j| match (in_a(i), in_a(j)) {
        (true, true) => g[(i, j)],
        (false, false) => -g[(i, j)],
        _ => I * g[(i, j)],
    });
    let gm = Mat::from_fn(l, l, |i, j| match (in_a(i), in_a(j)) {
        (true, true) => g[(i, j)],
        (false, false) => -g[(i, j)],
        _ => -I * g[(i, j)],
    });
    Ok((gp, gm))
}

/// Eigenvalues of `G^T` within this distance of 0 or 1 are snapped, since
/// `sqrt(mu)` turns rounding noise of order `1e-16` into `1e-8` errors.
pub const NEGATIVITY_SNAP: f64 = 64.0 * f64::EPSILON;

fn sqrt_pair_log(m: f64) -> f64 {
    let m = if m < NEGATIVITY_SNAP {
        0.0
    } else if m > 1.0 - NEGATIVITY_SNAP {
        1.0
    } else {
        m
    };
    (m.sqrt() + (1.0 - m).sqrt()).ln()
}

fn negativity_sum(mu: impl Iterator<Item = f64>, lambda: &[f64]) -> f64 {
    let a: f64 = mu.map(sqrt_pair_log).sum();
    let b: f64 = lambda.iter().map(|&x| 0.5 * (x * x + (1.0 - x) * (1.0 - x)).ln()).sum();
    a + b
}

/// Spectrum of `G^T` for the cut `[0, ell)`.
///
/// `G_- = G_+^dag`, so `1 + G_+ G_-` is positive definite and `G^T` is
/// similar to the Hermitian matrix `(1 - A^-1/2 (G_+ + G_-) A^-1/2) / 2`.
pub fn partial_transpose_spectrum(d: &CorrelationMatrix, ell: usize) -> Result<Vec<f64>> {
    let (gp, gm) = negativity_blocks(d, ell)?;
    let l = d.size();
    let mut a = &linalg::identity(l) + &gp * &gm;
    linalg::hermitize_in_place(&mut a);
    let (va, ua) = linalg::herm_eigen(a.as_ref())?;
    let inv_sqrt = linalg::herm_function(&va, ua.as_ref(), |x| C64::new(1.0 / x.max(1e-300).sqrt(), 0.0));
    let mut b = &(&inv_sqrt * (&gp + &gm)) * &inv_sqrt;
    linalg::hermitize_in_place(&mut b);
    Ok(linalg::herm_eigenvalues(b.as_ref())?.into_iter().map(|x| 0.5 * (1.0 - x)).collect())
}

/// Fermionic logarithmic negativity between `[0, ell)` and its complement.
pub fn fermionic_negativity(d: &CorrelationMatrix, ell: usize) -> Result<f64> {
    fermionic_negativity_with_spectrum(d, ell, &d.spectrum()?)
}

/// [`fermionic_negativity`] with the spectrum of `D` supplied, so that
/// several cuts of one state share a single decomposition.
pub fn fermionic_negativity_with_spectrum(d: &CorrelationMatrix, ell: usize, lambda: &[f64]) -> Result<f64> {
    let mu = partial_transpose_spectrum(d, ell)?;
    Ok(negativity_sum(mu.into_iter(), lambda))
}

/// Negativity through a general eigen-decomposition of `G^T`, as printed.
///
/// Used to cross-check [`fermionic_negativity`]; rejects spectra with
/// imaginary parts above `1e-8`.
pub fn fermionic_negativity_direct(d: &CorrelationMatrix, ell: usize) -> Result<f64> {
    let (gp, gm) = negativity_blocks(d, ell)?;
    let l = d.size();
    let a = &linalg::identity(l) + &gp * &gm;
    let x = linalg::solve(a.as_ref(), (&gp + &gm).as_ref())?;
    let gt = Mat::from_fn(l, l, |i, j| 0.5 * (if i == j { ONE } else { C64::new(0.0, 0.0) } - x[(i, j)]));
    let (mu, _) = linalg::eigen(gt.as_ref())?;
    if let Some(bad) = mu.iter().find(|m| m.im.abs() > 1e-8) {
        return Err(Error::State(format!("partial transpose eigenvalue {bad} is not real")));
    }
    let lambda = d.spectrum()?;
    Ok(negativity_sum(mu.iter().map(|m| m.re), &lambda))
}

/// Renyi-1/2 entropy `sum 2 ln(sqrt(l) + sqrt(1 - l))` of the block `[0, ell)`.
pub fn renyi_half_entropy(d: &CorrelationMatrix, ell: usize) -> Result<f64> {
    let vals = linalg::herm_eigenvalues(d.reduce(0, ell)?.as_ref())?;
    Ok(vals.into_iter().map(|v| 2.0 * sqrt_pair_log(v)).sum())
}
