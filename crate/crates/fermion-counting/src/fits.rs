//! Nonlinear least squares and the extraction recipes for correlation,
//! entropy and scaling data. Generic over the float type.

use num_traits::Float;
use serde::Serialize;

use crate::error::{domain, Result};

fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("constant representable")
}

/// Outcome of a least-squares fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult<T> {
    pub names: Vec<String>,
    pub params: Vec<T>,
    pub stderr: Vec<T>,
    /// Weighted residual sum of squares.
    pub rss: T,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: T,
    pub covariance: Vec<Vec<T>>,
    pub message: String,
}

impl<T: Float> FitResult<T> {
    pub fn param(&self, name: &str) -> Option<T> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }
}

/// Built-in model families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FitModel {
    /// `p0 + p1 x`.
    Linear,
    /// `p1 sqrt(x^2 + p2)`.
    MassiveCq,
    /// `p exp(-x / xi)`.
    Exponential,
    /// `a x^k`.
    PowerLaw,
}

impl FitModel {
    pub fn names(self) -> Vec<String> {
        let v: &[&str] = match self {
            FitModel::Linear => &["intercept", "slope"],
            FitModel::MassiveCq => &["p1", "p2"],
            FitModel::Exponential => &["p", "xi"],
            FitModel::PowerLaw => &["amplitude", "exponent"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    pub fn eval<T: Float>(self, x: T, p: &[T]) -> T {
        match self {
            FitModel::Linear => p[0] + p[1] * x,
            FitModel::MassiveCq => p[0] * (x * x + p[1]).sqrt(),
            FitModel::Exponential => p[0] * (-x / p[1]).exp(),
            FitModel::PowerLaw => p[0] * x.powf(p[1]),
        }
    }
}

/// Solve the small dense system `a x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve_small<T: Float>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if !(a[piv][col].abs() > T::min_positive_value()) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] = a[r][k] - f * a[col][k];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s = s - a[r][k] * x[k];
        }
        x[r] = s / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn invert_small<T: Float>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e: Vec<T> = (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect();
        cols.push(solve_small(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

fn norm<T: Float>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

/// Levenberg-Marquardt with a central finite-difference Jacobian.
///
/// Weights are normalized to unit mean internally; the reported `rss` uses
/// the caller's weights. The covariance is `s^2 (J^T W J)^-1` with
/// `s^2 = rss / (N - p)` and is therefore invariant under weight rescaling.
pub fn least_squares<T: Float, F: Fn(T, &[T]) -> T>(
    model: F,
    x: &[T],
    y: &[T],
    w: Option<&[T]>,
    p0: &[T],
    names: Vec<String>,
) -> Result<FitResult<T>> {
    let m = x.len();
    let np = p0.len();
    if y.len() != m || w.is_some_and(|w| w.len() != m) {
        return domain("fit arrays must have equal length");
    }
    if m < np || np == 0 {
        return domain("underdetermined fit");
    }
    let raw_w: Vec<T> = w.map(|w| w.to_vec()).unwrap_or_else(|| vec![T::one(); m]);
    if raw_w.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
        return domain("weights must be finite and non-negative");
    }
    let mean_w = raw_w.iter().fold(T::zero(), |s, &v| s + v) / T::from(m).unwrap();
    if !(mean_w > T::zero()) {
        return domain("all weights vanish");
    }
    let wn: Vec<T> = raw_w.iter().map(|&v| v / mean_w).collect();
    let residuals = |p: &[T]| -> Vec<T> { x.iter().zip(y).map(|(&xi, &yi)| model(xi, p) - yi).collect() };
    let cost = |r: &[T]| -> T { r.iter().zip(&wn).fold(T::zero(), |s, (&ri, &wi)| s + wi * ri * ri) };
    let h_rel = c::<T>(1e-6);
    let jacobian = |p: &[T]| -> Vec<Vec<T>> {
        let mut jac = vec![vec![T::zero(); np]; m];
        for k in 0..np {
            let h = h_rel * p[k].abs().max(T::one());
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[k] = p[k] + h;
            pm[k] = p[k] - h;
            for (i, &xi) in x.iter().enumerate() {
                jac[i][k] = (model(xi, &pp) - model(xi, &pm)) / (h + h);
            }
        }
        jac
    };

    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let mut rss = cost(&r);
    if !rss.is_finite() {
        return Ok(failed(names, p, "non-finite residuals at the initial guess"));
    }
    let mut lambda = c::<T>(1e-3);
    let mut converged = false;
    let mut iterations = 0;
    let mut gnorm = T::infinity();
    let mut message = String::from("iteration limit reached");
    let mut normal = vec![vec![T::zero(); np]; np];
    for it in 0..200 {
        iterations = it;
        let jac = jacobian(&p);
        let mut g = vec![T::zero(); np];
        for a in 0..np {
            for b in 0..np {
                normal[a][b] = (0..m).fold(T::zero(), |s, i| s + wn[i] * jac[i][a] * jac[i][b]);
            }
            g[a] = (0..m).fold(T::zero(), |s, i| s + wn[i] * jac[i][a] * r[i]);
        }
        gnorm = norm(&g);
        if gnorm < c::<T>(1e-8) * (T::one() + norm(&p)) {
            converged = true;
            message = "gradient tolerance met".into();
            break;
        }
        let mut accepted = false;
        while lambda < c(1e16) {
            let mut a = normal.clone();
            for k in 0..np {
                let d = if a[k][k] > T::zero() { a[k][k] } else { T::one() };
                a[k][k] = a[k][k] + lambda * d;
            }
            let rhs: Vec<T> = g.iter().map(|&v| -v).collect();
            if let Some(step) = solve_small(a, rhs) {
                let trial: Vec<T> = p.iter().zip(&step).map(|(&a, &b)| a + b).collect();
                let rt = residuals(&trial);
                let ct = cost(&rt);
                if ct.is_finite() && ct <= rss {
                    let small = norm(&step) <= T::epsilon() * (norm(&p) + T::epsilon());
                    p = trial;
                    r = rt;
                    rss = ct;
                    lambda = (lambda / c(10.0)).max(c(1e-12));
                    accepted = !small;
                    break;
                }
            }
            lambda = lambda * c(10.0);
        }
        if !accepted {
            // stalled: report the final gradient honestly
            let jac = jacobian(&p);
            let g: Vec<T> = (0..np).map(|a| (0..m).fold(T::zero(), |s, i| s + wn[i] * jac[i][a] * r[i])).collect();
            gnorm = norm(&g);
            converged = gnorm < c::<T>(1e-8) * (T::one() + norm(&p));
            message = if converged { "gradient tolerance met".into() } else { "step rejected at maximal damping".into() };
            break;
        }
    }
    let jac = jacobian(&p);
    for a in 0..np {
        for b in 0..np {
            normal[a][b] = (0..m).fold(T::zero(), |s, i| s + wn[i] * jac[i][a] * jac[i][b]);
        }
    }
    let dof = T::from(m.saturating_sub(np).max(1)).unwrap();
    let s2 = rss / dof;
    let covariance = match invert_small(&normal) {
        Some(inv) => inv.iter().map(|row| row.iter().map(|&v| v * s2).collect()).collect(),
        None => {
            message.push_str("; singular normal equations");
            vec![vec![T::nan(); np]; np]
        }
    };
    let stderr = (0..np).map(|k| covariance[k][k].abs().sqrt()).collect();
    let rss_user = r.iter().zip(&raw_w).fold(T::zero(), |s, (&ri, &wi)| s + wi * ri * ri);
    Ok(FitResult { names, params: p, stderr, rss: rss_user, iterations, converged, gradient_norm: gnorm, covariance, message })
}

fn failed<T: Float>(names: Vec<String>, p: Vec<T>, msg: &str) -> FitResult<T> {
    let np = p.len();
    FitResult {
        names,
        stderr: vec![T::nan(); np],
        params: p,
        rss: T::nan(),
        iterations: 0,
        converged: false,
        gradient_norm: T::nan(),
        covariance: vec![vec![T::nan(); np]; np],
        message: msg.into(),
    }
}

/// Least-squares fit of a built-in model.
pub fn least_squares_fit<T: Float>(model: FitModel, x: &[T], y: &[T], w: Option<&[T]>, p0: &[T]) -> Result<FitResult<T>> {
    least_squares(|xx, p| model.eval(xx, p), x, y, w, p0, model.names())
}

/// Ordinary linear regression `y = a + b x`, returning `(slope, slope stderr, intercept)`.
pub fn linear_regression<T: Float>(x: &[T], y: &[T]) -> Result<(T, T, T)> {
    weighted_linear_regression(x, y, None)
}

/// Weighted linear regression returning `(slope, slope stderr, intercept)`.
pub fn weighted_linear_regression<T: Float>(x: &[T], y: &[T], w: Option<&[T]>) -> Result<(T, T, T)> {
    let n = x.len();
    if n != y.len() || w.is_some_and(|w| w.len() != n) {
        return domain("regression arrays must have equal length");
    }
    if n < 2 {
        return domain("regression needs at least two points");
    }
    let wt = |i: usize| w.map_or(T::one(), |w| w[i]);
    let sw = (0..n).fold(T::zero(), |s, i| s + wt(i));
    let mx = (0..n).fold(T::zero(), |s, i| s + wt(i) * x[i]) / sw;
    let my = (0..n).fold(T::zero(), |s, i| s + wt(i) * y[i]) / sw;
    let sxx = (0..n).fold(T::zero(), |s, i| s + wt(i) * (x[i] - mx) * (x[i] - mx));
    let sxy = (0..n).fold(T::zero(), |s, i| s + wt(i) * (x[i] - mx) * (y[i] - my));
    if !(sxx > T::zero()) {
        return domain("regression abscissae are degenerate");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss = (0..n).fold(T::zero(), |s, i| {
            let r = y[i] - intercept - slope * x[i];
            s + wt(i) * r * r
        });
        // effective sample size keeps the estimate invariant under weight rescaling
        let scale = T::from(n).unwrap() / sw;
        (rss * scale / T::from(n - 2).unwrap() / (sxx * scale)).sqrt()
    } else {
        T::zero()
    };
    Ok((slope, stderr, intercept))
}

/// Log-log regression `y ~ x^k`, returning `(k, stderr)`.
pub fn power_law_exponent<T: Float>(x: &[T], y: &[T]) -> Result<(T, T)> {
    if x.iter().chain(y).any(|&v| !(v > T::zero())) {
        return domain("power-law regression needs positive data");
    }
    let lx: Vec<T> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let (k, se, _) = linear_regression(&lx, &ly)?;
    Ok((k, se))
}

/// Fit of `C_q / (g0 / l0) = p1 sqrt((q~ l0)^2 + p2)` against `x = q~ l0`.
pub fn fit_cq_mass<T: Float>(x: &[T], y: &[T], w: Option<&[T]>) -> Result<FitResult<T>> {
    if x.len() < 2 {
        return domain("mass fit needs at least two points");
    }
    let (imax, _) = x.iter().enumerate().fold((0, T::neg_infinity()), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let (imin, _) = x.iter().enumerate().fold((0, T::infinity()), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let p1 = if x[imax] > T::zero() { y[imax] / x[imax] } else { T::one() };
    let p1 = if p1.abs() > T::zero() { p1 } else { T::one() };
    let p2 = ((y[imin] / p1) * (y[imin] / p1) - x[imin] * x[imin]).max(c(1e-6));
    least_squares_fit(FitModel::MassiveCq, x, y, w, &[p1, p2])
}

/// Window and noise settings for [`fit_cl_exponential`].
#[derive(Clone, Copy, Debug)]
pub struct ClFitWindow<T> {
    pub l_min: T,
    pub l_max: T,
    /// Bins with `|C_l| < noise_factor * stderr` are dropped.
    pub noise_factor: T,
}

impl<T: Float> ClFitWindow<T> {
    /// Default window `[2 l0, l_max]` with the 3-sigma exclusion.
    pub fn standard(l0: T, l_max: T) -> Self {
        Self { l_min: c::<T>(2.0) * l0, l_max, noise_factor: c(3.0) }
    }
}

/// Log-space fit of `l0 l^(3/2) |C_l| = p exp(-l / xi)`.
///
/// Returns parameters `[p, xi]`; the covariance follows from the linear
/// regression by the delta method.
pub fn fit_cl_exponential<T: Float>(
    l: &[T],
    cl: &[T],
    stderr: Option<&[T]>,
    l0: T,
    window: ClFitWindow<T>,
) -> Result<FitResult<T>> {
    if l.len() != cl.len() || stderr.is_some_and(|s| s.len() != l.len()) {
        return domain("fit arrays must have equal length");
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for i in 0..l.len() {
        let a = cl[i].abs();
        if l[i] < window.l_min || l[i] > window.l_max || !(a > T::zero()) {
            continue;
        }
        let weight = match stderr {
            Some(s) => {
                if a < window.noise_factor * s[i] {
                    continue;
                }
                if s[i] > T::zero() {
                    (a / s[i]) * (a / s[i])
                } else {
                    T::one()
                }
            }
            None => T::one(),
        };
        xs.push(l[i]);
        ys.push((l0 * l[i].powf(c(1.5)) * a).ln());
        ws.push(weight);
    }
    if xs.len() < 2 {
        return domain("fewer than two usable bins in the fit window");
    }
    let w = stderr.map(|_| ws.as_slice());
    let (slope, se_slope, intercept) = weighted_linear_regression(&xs, &ys, w)?;
    let p = intercept.exp();
    let xi = -T::one() / slope;
    let se_xi = se_slope / (slope * slope);
    let rss = xs.iter().zip(&ys).fold(T::zero(), |s, (&x, &y)| {
        let r = y - intercept - slope * x;
        s + r * r
    });
    Ok(FitResult {
        names: vec!["p".into(), "xi".into()],
        params: vec![p, xi],
        stderr: vec![T::nan(), se_xi],
        rss,
        iterations: 1,
        converged: slope < T::zero(),
        gradient_norm: T::zero(),
        covariance: vec![vec![T::nan(), T::nan()], vec![T::nan(), se_xi * se_xi]],
        message: if slope < T::zero() { "closed-form regression".into() } else { "non-decaying data".into() },
    })
}

/// Location of a discrete maximum refined by a parabola through its neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak<T> {
    pub x: T,
    pub y: T,
    /// False when the maximum sits on the boundary of the series.
    pub interior: bool,
}

/// Parabolic interpolation through the discrete maximum of `y(x)`.
pub fn parabolic_peak<T: Float>(x: &[T], y: &[T]) -> Result<Peak<T>> {
    if x.len() != y.len() || x.is_empty() {
        return domain("peak search needs equal, non-empty arrays");
    }
    let mut i = 0;
    for k in 1..y.len() {
        if y[k] > y[i] {
            i = k;
        }
    }
    if i == 0 || i + 1 == y.len() {
        return Ok(Peak { x: x[i], y: y[i], interior: false });
    }
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    // vertex of the interpolating parabola through three (possibly uneven) points
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a < T::zero()) {
        return Ok(Peak { x: x1, y: y1, interior: true });
    }
    let b = d01 - a * (x0 + x1);
    let xv = -b / (c::<T>(2.0) * a);
    let yv = y1 + (xv - x1) * (d01 + a * (xv - x0));
    Ok(Peak { x: xv, y: yv, interior: true })
}

/// Peak position of `C_q / (g0 q~)`.
pub fn extract_qc<T: Float>(q: &[T], ratio: &[T]) -> Result<Peak<T>> {
    parabolic_peak(q, ratio)
}

/// Peak position of the effective central charge.
pub fn extract_lm<T: Float>(l: &[T], c_l: &[T]) -> Result<Peak<T>> {
    parabolic_peak(l, c_l)
}

/// Crossover length where `|C_l|` departs by more than 10% from a tangent
/// `A l~^-2`.
///
/// The tangent is anchored at the bin (with `l~ >= l0`) whose local
/// log-log slope is closest to `-2`. The crossing is linearly interpolated.
/// Returns infinity when the data never deviate.
pub fn extract_lc<T: Float>(l: &[T], cl: &[T], l0: T) -> Result<T> {
    extract_lc_with(l, cl, l0, c(0.1))
}

/// [`extract_lc`] with a configurable relative threshold.
pub fn extract_lc_with<T: Float>(l: &[T], cl: &[T], l0: T, threshold: T) -> Result<T> {
    let n = l.len();
    if n != cl.len() || n < 3 {
        return domain("crossover search needs at least three points");
    }
    let a: Vec<T> = cl.iter().map(|v| v.abs()).collect();
    let mut best: Option<(usize, T)> = None;
    for i in 1..n - 1 {
        if l[i] < l0 || !(a[i - 1] > T::zero() && a[i + 1] > T::zero()) {
            continue;
        }
        let s = (a[i + 1] / a[i - 1]).ln() / (l[i + 1] / l[i - 1]).ln();
        let dev = (s + c(2.0)).abs();
        if best.is_none_or(|(_, d)| dev < d) {
            best = Some((i, dev));
        }
    }
    let Some((anchor, _)) = best else {
        return domain("no usable anchor for the tangent");
    };
    let amp = a[anchor] * l[anchor] * l[anchor];
    let dev = |k: usize| (a[k] - amp / (l[k] * l[k])).abs() / (amp / (l[k] * l[k]));
    for k in anchor + 1..n {
        let d = dev(k);
        if d > threshold {
            let dp = dev(k - 1);
            let t = (threshold - dp) / (d - dp);
            return Ok(l[k - 1] + t * (l[k] - l[k - 1]));
        }
    }
    Ok(T::infinity())
}
