//! Adaptive Gauss-Kronrod quadrature, generic over the float type.

use num_traits::Float;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Default absolute tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;
const MAX_INTERVALS: usize = 4000;

fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("constant representable")
}

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15<T: Float, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = (b - a) * c(0.5);
    let mid = (a + b) * c(0.5);
    let fc = f(mid);
    let mut k = fc * c(WGK[7]);
    let mut g = fc * c(WG[3]);
    for j in 0..7 {
        let dx = half * c(XGK[j]);
        let s = f(mid - dx) + f(mid + dx);
        k = k + s * c(WGK[j]);
        if j % 2 == 1 {
            g = g + s * c(WG[j / 2]);
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<T: Float, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let (total, err) = pieces.iter().fold((T::zero(), T::zero()), |(s, r), p| (s + p.2, r + p.3));
        if !total.is_finite() {
            return Err(Error::Numerical("non-finite integrand".into()));
        }
        if err <= tol || pieces.len() >= MAX_INTERVALS {
            if err > tol * c(100.0) {
                return Err(Error::Numerical(format!(
                    "quadrature did not converge: error {:e}",
                    err.to_f64().unwrap_or(f64::NAN)
                )));
            }
            return Ok(total);
        }
        let worst = (0..pieces.len())
            .max_by(|&i, &j| pieces[i].3.partial_cmp(&pieces[j].3).unwrap_or(std::cmp::Ordering::Equal))
            .expect("nonempty");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let m = (lo + hi) * c(0.5);
        let (v1, e1) = gk15(&mut f, lo, m);
        let (v2, e2) = gk15(&mut f, m, hi);
        pieces.push((lo, m, v1, e1));
        pieces.push((m, hi, v2, e2));
    }
}

/// Integral over `[a, inf)` via the tan map `x = a + tan(theta)`.
pub fn integrate_to_infinity<T: Float, F: FnMut(T) -> T>(mut f: F, a: T, tol: T) -> Result<T> {
    let half_pi = c::<T>(std::f64::consts::FRAC_PI_2);
    integrate(
        |th: T| {
            if th >= half_pi {
                return T::zero();
            }
            let cs = th.cos();
            let v = f(a + th.tan()) / (cs * cs);
            if v.is_finite() {
                v
            } else {
                T::zero()
            }
        },
        T::zero(),
        half_pi,
        tol,
    )
}
