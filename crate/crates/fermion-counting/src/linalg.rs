//! Dense complex linear algebra helpers on top of `faer`.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use rand::Rng;

use crate::error::{Error, Result};
use crate::{CMat, C64};

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn from_real_diag(d: &[f64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO })
}

/// Replace `a` by its Hermitian part `(a + a^dag) / 2`.
pub fn hermitize_in_place(a: &mut CMat) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let m = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = m;
            a[(j, i)] = m.conj();
        }
        a[(j, j)] = C64::new(a[(j, j)].re, 0.0);
    }
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(a.ncols(), b.ncols());
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn hermiticity_defect(a: MatRef<'_, C64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows().saturating_sub(1)) {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn scale(a: MatRef<'_, C64>, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// `alpha * a + beta * b`.
pub fn lin_comb(alpha: C64, a: MatRef<'_, C64>, beta: C64, b: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| alpha * a[(i, j)] + beta * b[(i, j)])
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

fn one_norm(a: MatRef<'_, C64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solve `a x = b` by partially pivoted LU.
pub fn solve(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Result<CMat> {
    let x = a.partial_piv_lu().solve(b);
    if x.col_iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite())) {
        Ok(x)
    } else {
        Err(Error::Numerical("linear solve produced non-finite values".into()))
    }
}

pub fn inverse(a: MatRef<'_, C64>) -> Result<CMat> {
    solve(a, identity(a.nrows()).as_ref())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn herm_eigen(a: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigendecomposition: {e:?}")))?;
    let vals = e.S().column_vector().iter().map(|z| z.re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn herm_eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigenvalues: {e:?}")))
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
pub fn eigen(a: MatRef<'_, C64>) -> Result<(Vec<C64>, CMat)> {
    let e = a
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigendecomposition: {e:?}")))?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

/// `W diag(f(lambda)) W^dag` for Hermitian `a = W diag(lambda) W^dag`.
pub fn herm_function(vals: &[f64], vecs: MatRef<'_, C64>, f: impl Fn(f64) -> C64) -> CMat {
    let n = vals.len();
    let fw: Vec<C64> = vals.iter().map(|&v| f(v)).collect();
    let left = Mat::from_fn(n, n, |i, k| vecs[(i, k)] * fw[k]);
    &left * vecs.adjoint()
}

/// Matrix exponential by scaling and squaring with a degree-13 Pade approximant.
pub fn expm(a: MatRef<'_, C64>) -> CMat {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = scale(a, C64::new(0.5f64.powi(s), 0.0));
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let comb = |c6: f64, c4: f64, c2: f64, c0: f64| {
        Mat::from_fn(n, n, |i, j| {
            a6[(i, j)] * c6 + a4[(i, j)] * c4 + a2[(i, j)] * c2 + id[(i, j)] * c0
        })
    };
    let inner_u = &a6 * comb(B[13], B[11], B[9], 0.0);
    let u_poly = Mat::from_fn(n, n, |i, j| {
        inner_u[(i, j)] + a6[(i, j)] * B[7] + a4[(i, j)] * B[5] + a2[(i, j)] * B[3] + id[(i, j)] * B[1]
    });
    let u = &a * &u_poly;
    let inner_v = &a6 * comb(B[12], B[10], B[8], 0.0);
    let v = Mat::from_fn(n, n, |i, j| {
        inner_v[(i, j)] + a6[(i, j)] * B[6] + a4[(i, j)] * B[4] + a2[(i, j)] * B[2] + id[(i, j)] * B[0]
    });
    let p = lin_comb(ONE, v.as_ref(), ONE, u.as_ref());
    let q = lin_comb(ONE, v.as_ref(), -ONE, u.as_ref());
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `y = a x`.
pub fn matvec(a: MatRef<'_, C64>, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(y.len(), a.nrows());
    faer::linalg::matmul::matmul(
        faer::ColMut::from_slice_mut(y).as_mat_mut(),
        faer::Accum::Replace,
        a,
        faer::ColRef::from_slice(x).as_mat(),
        ONE,
        faer::Par::Seq,
    );
}

pub fn dotc(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// `a += s * x y^dag`.
pub fn rank1_update(a: &mut CMat, s: C64, x: &[C64], y: &[C64]) {
    let n = a.nrows();
    for (j, yj) in y.iter().enumerate() {
        let f = s * yj.conj();
        let col = a.col_as_slice_mut(j);
        for (aij, xi) in col.iter_mut().zip(x) {
            *aij += xi * f;
        }
    }
    debug_assert_eq!(x.len(), n);
}

pub fn random_complex<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    Mat::from_fn(rows, cols, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let a = random_complex(n, n, rng);
    Mat::from_fn(n, n, |i, j| a[(i, j)] + a[(j, i)].conj())
}

/// Haar-like random unitary from the eigenvectors of a random Hermitian matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let h = random_hermitian(n, rng);
    herm_eigen(h.as_ref()).expect("hermitian eigendecomposition").1
}

/// Random pure Gaussian state with `particles` fermions: a rank-`particles` projector.
pub fn random_projector<R: Rng + ?Sized>(n: usize, particles: usize, rng: &mut R) -> CMat {
    let u = random_unitary(n, rng);
    let occ: Vec<C64> = (0..n).map(|k| if k < particles { ONE } else { ZERO }).collect();
    let left = Mat::from_fn(n, n, |i, k| u[(i, k)] * occ[k]);
    &left * u.adjoint()
}

/// Random mixed Gaussian state with spectrum drawn uniformly from [0, 1].
pub fn random_mixed<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let u = random_unitary(n, rng);
    let occ: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>(), 0.0)).collect();
    let left = Mat::from_fn(n, n, |i, k| u[(i, k)] * occ[k]);
    &left * u.adjoint()
}
