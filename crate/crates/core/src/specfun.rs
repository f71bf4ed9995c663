//! Special functions for the multipole expansions of the Helmholtz kernel.
//!
//! Spherical harmonics use the associated Legendre functions *without* the
//! Condon–Shortley phase and the normalization `sqrt((n-|m|)!/(n+|m|)!)`, so
//! that `Y_n^{-m} = conj(Y_n^m)` and `sum_m Y_n^m(u) conj(Y_n^m(v)) = P_n(u.v)`.
//! Solid harmonics are k-scaled: `I_n^m(x) = j_n(k|x|) Y_n^m(x/|x|)` and
//! `O_n^m(x) = h_n^(1)(k|x|) Y_n^m(x/|x|)`.

use std::sync::OnceLock;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};

type Vec3 = Vector3<f64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Degree/order pair of a spherical harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    pub n: usize,
    pub m: i64,
}

impl HarmonicIndex {
    pub fn new(n: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > n {
            return Err(Error::Domain(format!("|m| = {} exceeds degree n = {n}", m.abs())));
        }
        Ok(Self { n, m })
    }

    /// Dense index `n^2 + n + m`.
    #[inline]
    pub fn flatten(self) -> usize {
        flat_index(self.n, self.m)
    }

    pub fn unflatten(index: usize) -> Self {
        let n = (index as f64).sqrt() as usize;
        // guard against rounding in the square root
        let n = if (n + 1) * (n + 1) <= index { n + 1 } else if n * n > index { n - 1 } else { n };
        let m = index as i64 - (n * n + n) as i64;
        Self { n, m }
    }
}

/// Number of coefficients of an expansion truncated at degree `nt`.
#[inline]
pub fn harmonic_count(nt: usize) -> usize {
    (nt + 1) * (nt + 1)
}

#[inline]
pub(crate) fn flat_index(n: usize, m: i64) -> usize {
    ((n * n + n) as i64 + m) as usize
}

/// Iterator over all `(n, m)` with `n <= nt` in flattened order.
pub fn harmonic_indices(nt: usize) -> impl Iterator<Item = HarmonicIndex> {
    (0..=nt).flat_map(|n| (-(n as i64)..=n as i64).map(move |m| HarmonicIndex { n, m }))
}

/// Spherical Bessel function of the first kind, `j_n(x)`, for `x >= 0`.
pub fn sph_bessel_j(n: usize, x: f64) -> f64 {
    sph_bessel_j_all(n, x)[n]
}

/// `j_0(x) ..= j_nmax(x)`.
///
/// Upward recurrence is used where it is stable (`x > nmax`), otherwise
/// Miller's downward recurrence normalized against `j_0` or `j_1`.
pub fn sph_bessel_j_all(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    let x = x.abs();
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < 1e-3 {
        // leading two series terms: x^n/(2n+1)!! * (1 - x^2/(2(2n+3)))
        let mut lead = 1.0;
        for (n, o) in out.iter_mut().enumerate() {
            if n > 0 {
                lead *= x / (2 * n + 1) as f64;
            }
            *o = lead * (1.0 - x * x / (2.0 * (2 * n + 3) as f64));
        }
        return out;
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    if x > nmax as f64 {
        out[0] = j0;
        if nmax >= 1 {
            out[1] = j1;
        }
        for n in 1..nmax {
            out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
        }
        return out;
    }
    let start = nmax + 20 + (x as usize) + ((40.0 * (nmax as f64 + 1.0)).sqrt() as usize);
    let mut next = 0.0_f64;
    let mut cur = 1e-300_f64;
    let mut scratch = vec![0.0; nmax + 1];
    // j_{n-1} = (2n+1)/x j_n - j_{n+1}
    for n in (1..=start).rev() {
        let prev = (2 * n + 1) as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            for v in scratch.iter_mut() {
                *v *= 1e-250;
            }
        }
        if n - 1 <= nmax {
            scratch[n - 1] = cur;
        }
    }
    let scale = if j0.abs() >= j1.abs() || nmax == 0 {
        j0 / scratch[0]
    } else {
        j1 / scratch[1]
    };
    for (o, s) in out.iter_mut().zip(scratch) {
        *o = s * scale;
    }
    out
}

/// Spherical Bessel function of the second kind `y_0 ..= y_nmax` by upward recurrence.
pub fn sph_bessel_y_all(nmax: usize, x: f64) -> Result<Vec<f64>> {
    if x <= 0.0 {
        return Err(Error::Domain(format!("y_n is singular at x = {x}")));
    }
    let (s, c) = x.sin_cos();
    let mut out = vec![0.0; nmax + 1];
    out[0] = -c / x;
    if nmax >= 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for n in 1..nmax {
        out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
    }
    Ok(out)
}

/// Spherical Hankel function of the first kind, `h_n^(1)(x) = j_n(x) + i y_n(x)`.
pub fn sph_hankel1(n: usize, x: f64) -> Result<Complex64> {
    Ok(sph_hankel1_all(n, x)?[n])
}

pub fn sph_hankel1_all(nmax: usize, x: f64) -> Result<Vec<Complex64>> {
    let y = sph_bessel_y_all(nmax, x)?;
    let j = sph_bessel_j_all(nmax, x);
    Ok(j.into_iter().zip(y).map(|(j, y)| Complex64::new(j, y)).collect())
}

/// Derivatives `f_n'(x)` from values `f_0..=f_{nmax+1}` of any spherical Bessel family.
fn derivative_from_values<T>(values: &[T], x: f64, nmax: usize) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Neg<Output = T>,
{
    (0..=nmax)
        .map(|n| {
            if n == 0 {
                -values[1]
            } else {
                values[n - 1] - values[n] * ((n + 1) as f64 / x)
            }
        })
        .collect()
}

/// `j_n'(x)` for `n = 0..=nmax`.
pub fn sph_bessel_j_derivative_all(nmax: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut d = vec![0.0; nmax + 1];
        if nmax >= 1 {
            d[1] = 1.0 / 3.0;
        }
        return d;
    }
    let j = sph_bessel_j_all(nmax + 1, x);
    derivative_from_values(&j, x, nmax)
}

/// `h_n^(1)'(x)` for `n = 0..=nmax`.
pub fn sph_hankel1_derivative_all(nmax: usize, x: f64) -> Result<Vec<Complex64>> {
    let h = sph_hankel1_all(nmax + 1, x)?;
    Ok(derivative_from_values(&h, x, nmax))
}

/// Table of `d^m P_n / dt^m (t)` for `0 <= m <= n+1`, `n <= nmax`.
///
/// `P_n^m(t) = (1 - t^2)^{m/2} * table[n][m]` (no Condon–Shortley phase).
pub(crate) struct LegendreDerivatives {
    nmax: usize,
    values: Vec<f64>,
}

impl LegendreDerivatives {
    pub(crate) fn new(nmax: usize, t: f64) -> Self {
        let stride = nmax + 2;
        let mut values = vec![0.0; (nmax + 1) * stride];
        // Q_m^m = (2m-1)!!, Q_{m+1}^m = t (2m+1) Q_m^m,
        // (n-m) Q_n^m = (2n-1) t Q_{n-1}^m - (n+m-1) Q_{n-2}^m
        let mut dfact = 1.0;
        for m in 0..=nmax {
            if m > 0 {
                dfact *= (2 * m - 1) as f64;
            }
            values[m * stride + m] = dfact;
            if m < nmax {
                values[(m + 1) * stride + m] = t * (2 * m + 1) as f64 * dfact;
            }
            for n in (m + 2)..=nmax {
                let a = (2 * n - 1) as f64 * t * values[(n - 1) * stride + m];
                let b = (n + m - 1) as f64 * values[(n - 2) * stride + m];
                values[n * stride + m] = (a - b) / (n - m) as f64;
            }
        }
        Self { nmax, values }
    }

    #[inline]
    pub(crate) fn get(&self, n: usize, m: usize) -> f64 {
        if m > n {
            return 0.0;
        }
        self.values[n * (self.nmax + 2) + m]
    }
}

/// `sqrt((n-m)!/(n+m)!)` for `m >= 0`.
pub(crate) fn harmonic_norm(n: usize, m: usize) -> f64 {
    let mut v = 1.0;
    for q in (n - m + 1)..=(n + m) {
        v /= q as f64;
    }
    v.sqrt()
}

/// Associated Legendre function `P_n^m(t)` without the Condon–Shortley phase.
pub fn assoc_legendre(n: usize, m: usize, t: f64) -> f64 {
    if m > n {
        return 0.0;
    }
    let q = LegendreDerivatives::new(n, t);
    (1.0 - t * t).max(0.0).powf(m as f64 / 2.0) * q.get(n, m)
}

/// Spherical harmonic `Y_n^m(theta, phi)` under the convention of this module.
pub fn sph_harmonic(n: usize, m: i64, theta: f64, phi: f64) -> Result<Complex64> {
    let am = m.unsigned_abs() as usize;
    if am > n {
        return Err(Error::Domain(format!("|m| = {am} exceeds degree n = {n}")));
    }
    let p = assoc_legendre(n, am, theta.cos());
    Ok(Complex64::from_polar(harmonic_norm(n, am) * p, m as f64 * phi))
}

/// Spherical harmonics `Y_n^m` of all degrees `<= nmax` at unit direction
/// `(u, t)` with `u = (x + i y)/r`, `t = z/r`, plus (optionally) their
/// Cartesian gradients with respect to the unnormalized position.
struct HarmonicsAtDirection {
    y: Vec<Complex64>,
    /// gradient of Y wrt position, multiplied by r
    grad_r: Option<Vec<[Complex64; 3]>>,
}

fn harmonics_at(nmax: usize, unit: &Vec3, with_gradient: bool) -> HarmonicsAtDirection {
    let t = unit.z;
    let u = Complex64::new(unit.x, unit.y);
    let q = LegendreDerivatives::new(nmax, t);
    let count = harmonic_count(nmax);
    let mut y = vec![Complex64::new(0.0, 0.0); count];
    let mut grad = if with_gradient { Some(vec![[Complex64::new(0.0, 0.0); 3]; count]) } else { None };

    // r * grad(u) and r * grad(t) as functions of the unit vector
    let du = [
        Complex64::new(1.0, 0.0) - u * unit.x,
        Complex64::new(0.0, 1.0) - u * unit.y,
        -u * unit.z,
    ];
    let dt = [-t * unit.x, -t * unit.y, 1.0 - t * t];

    let mut u_pow = vec![Complex64::new(1.0, 0.0); nmax + 2];
    for m in 1..=nmax + 1 {
        u_pow[m] = u_pow[m - 1] * u;
    }
    for n in 0..=nmax {
        for m in 0..=n {
            let norm = harmonic_norm(n, m);
            let qv = q.get(n, m);
            let val = u_pow[m] * (norm * qv);
            y[flat_index(n, m as i64)] = val;
            if m > 0 {
                y[flat_index(n, -(m as i64))] = val.conj();
            }
            if let Some(g) = grad.as_mut() {
                let q_next = q.get(n, m + 1);
                let mut gv = [Complex64::new(0.0, 0.0); 3];
                for c in 0..3 {
                    let mut term = u_pow[m] * (q_next * dt[c]);
                    if m > 0 {
                        term += u_pow[m - 1] * du[c] * (m as f64 * qv);
                    }
                    gv[c] = term * norm;
                }
                g[flat_index(n, m as i64)] = gv;
                if m > 0 {
                    g[flat_index(n, -(m as i64))] = [gv[0].conj(), gv[1].conj(), gv[2].conj()];
                }
            }
        }
    }
    HarmonicsAtDirection { y, grad_r: grad }
}

/// Regular solid harmonics `I_n^m(v)` for all `n <= nmax`.
pub fn regular_solid_all(nmax: usize, v: &Vec3, k: f64) -> Vec<Complex64> {
    let r = v.norm();
    let count = harmonic_count(nmax);
    if r == 0.0 {
        let mut out = vec![Complex64::new(0.0, 0.0); count];
        out[0] = Complex64::new(1.0, 0.0);
        return out;
    }
    let j = sph_bessel_j_all(nmax, k * r);
    let h = harmonics_at(nmax, &(v / r), false);
    let mut out = h.y;
    for n in 0..=nmax {
        for m in -(n as i64)..=n as i64 {
            out[flat_index(n, m)] *= j[n];
        }
    }
    out
}

/// Regular solid harmonics and their Cartesian gradients with respect to `v`.
pub fn regular_solid_with_gradient(nmax: usize, v: &Vec3, k: f64) -> (Vec<Complex64>, Vec<[Complex64; 3]>) {
    let r = v.norm();
    let count = harmonic_count(nmax);
    let zero = Complex64::new(0.0, 0.0);
    if r == 0.0 {
        let mut vals = vec![zero; count];
        vals[0] = Complex64::new(1.0, 0.0);
        let mut grads = vec![[zero; 3]; count];
        if nmax >= 1 {
            // I_1^0 ~ k z / 3, I_1^{+-1} ~ k (x +- i y) / (3 sqrt 2)
            let a = k / 3.0;
            let b = k / (3.0 * 2f64.sqrt());
            grads[flat_index(1, 0)] = [zero, zero, Complex64::new(a, 0.0)];
            grads[flat_index(1, 1)] = [Complex64::new(b, 0.0), Complex64::new(0.0, b), zero];
            grads[flat_index(1, -1)] = [Complex64::new(b, 0.0), Complex64::new(0.0, -b), zero];
        }
        return (vals, grads);
    }
    let unit = v / r;
    let kr = k * r;
    let j = sph_bessel_j_all(nmax, kr);
    let dj = sph_bessel_j_derivative_all(nmax, kr);
    let h = harmonics_at(nmax, &unit, true);
    let grad_r = h.grad_r.expect("gradient requested");
    let mut vals = h.y;
    let mut grads = vec![[zero; 3]; count];
    for n in 0..=nmax {
        // j_n(kr)/r without cancellation issues for small r
        let j_over_r = j[n] / r;
        for m in -(n as i64)..=n as i64 {
            let idx = flat_index(n, m);
            let y = vals[idx];
            let g = grad_r[idx];
            for c in 0..3 {
                grads[idx][c] = y * (k * dj[n] * unit[c]) + g[c] * j_over_r;
            }
            vals[idx] = y * j[n];
        }
    }
    (vals, grads)
}

/// Singular solid harmonics `O_n^m(v)` for all `n <= nmax`.
pub fn singular_solid_all(nmax: usize, v: &Vec3, k: f64) -> Result<Vec<Complex64>> {
    let r = v.norm();
    if r == 0.0 {
        return Err(Error::Domain("singular solid harmonic evaluated at the origin".into()));
    }
    let h = sph_hankel1_all(nmax, k * r)?;
    let harm = harmonics_at(nmax, &(v / r), false);
    let mut out = harm.y;
    for n in 0..=nmax {
        for m in -(n as i64)..=n as i64 {
            out[flat_index(n, m)] *= h[n];
        }
    }
    Ok(out)
}

/// `I_n^m(v) = j_n(k|v|) Y_n^m(v/|v|)`.
pub fn solid_regular_i(n: usize, m: i64, v: &Vec3, k: f64) -> Result<Complex64> {
    HarmonicIndex::new(n, m)?;
    Ok(regular_solid_all(n, v, k)[flat_index(n, m)])
}

/// `O_n^m(v) = h_n^(1)(k|v|) Y_n^m(v/|v|)`.
pub fn solid_singular_o(n: usize, m: i64, v: &Vec3, k: f64) -> Result<Complex64> {
    HarmonicIndex::new(n, m)?;
    Ok(singular_solid_all(n, v, k)?[flat_index(n, m)])
}

fn factorial(n: i64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = vec![1.0; 171];
        for q in 1..171 {
            t[q] = t[q - 1] * q as f64;
        }
        t
    });
    table[n as usize]
}

/// Wigner 3j symbol by the Racah closed sum.
pub fn wigner3j(j1: i64, j2: i64, j3: i64, m1: i64, m2: i64, m3: i64) -> f64 {
    if j1 < 0 || j2 < 0 || j3 < 0 {
        return 0.0;
    }
    if m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return 0.0;
    }
    if m1 + m2 + m3 != 0 {
        return 0.0;
    }
    if j3 < (j1 - j2).abs() || j3 > j1 + j2 {
        return 0.0;
    }
    if m1 == 0 && m2 == 0 && m3 == 0 && (j1 + j2 + j3) % 2 == 1 {
        return 0.0;
    }
    let triangle = factorial(j1 + j2 - j3) * factorial(j1 - j2 + j3) * factorial(-j1 + j2 + j3)
        / factorial(j1 + j2 + j3 + 1);
    let pre = (triangle
        * factorial(j1 + m1)
        * factorial(j1 - m1)
        * factorial(j2 + m2)
        * factorial(j2 - m2)
        * factorial(j3 + m3)
        * factorial(j3 - m3))
    .sqrt();
    let t_min = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let t_max = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    for t in t_min..=t_max {
        let denom = factorial(t)
            * factorial(j3 - j2 + t + m1)
            * factorial(j3 - j1 + t - m2)
            * factorial(j1 + j2 - j3 - t)
            * factorial(j1 - t - m1)
            * factorial(j2 - t + m2);
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    let phase = if (j1 - j2 - m3).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * pre * sum
}

/// `i^p` for any integer power.
#[inline]
pub(crate) fn i_pow(p: i64) -> Complex64 {
    match p.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => I,
        2 => Complex64::new(-1.0, 0.0),
        _ => -I,
    }
}

/// Coupling factor `(2l+1) i^{n'-n+l} (n n' l; 0 0 0) (n n' l; m m' -m-m')`.
pub fn coupling_w(np: usize, n: usize, mp: i64, m: i64, l: usize) -> Complex64 {
    let (np_, n_, l_) = (np as i64, n as i64, l as i64);
    let a = wigner3j(n_, np_, l_, 0, 0, 0);
    if a == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let b = wigner3j(n_, np_, l_, m, mp, -m - mp);
    i_pow(np_ - n_ + l_) * ((2 * l + 1) as f64 * a * b)
}
