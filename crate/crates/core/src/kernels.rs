//! Helmholtz Green's functions, Burton–Miller kernels, element influence
//! integrals and incident fields.
//!
//! Time dependence is `exp(-i omega t)`, so `G = exp(ikr)/(4 pi r)` is
//! outgoing. Mesh normals point into the fluid; the integral equations are
//! written with the opposite normal `n = -nu`, and every function here that
//! takes element normals performs that flip internally.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Element, HalfSpace};
use crate::Vec3;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const FOUR_PI: f64 = 4.0 * PI;

/// Collocation points closer than this ratio of distance to element
/// diameter trigger subdivision of the source element.
pub const NEAR_RATIO: f64 = 3.0;
const MAX_SUBDIVISION: usize = 6;
const SELF_ORDER: usize = 8;

/// Frequency-dependent scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveContext {
    pub f: f64,
    pub c: f64,
    pub rho: f64,
    pub omega: f64,
    pub k: f64,
    /// Burton–Miller coupling parameter.
    pub alpha: Complex64,
}

impl WaveContext {
    /// Context with the default coupling `alpha = -i/k`.
    pub fn new(f: f64, c: f64, rho: f64) -> Result<Self> {
        if !(f > 0.0) || !(c > 0.0) || !(rho > 0.0) {
            return Err(Error::InvalidConfig(format!("need f, c, rho > 0 (got {f}, {c}, {rho})")));
        }
        let omega = 2.0 * PI * f;
        let k = omega / c;
        Ok(Self { f, c, rho, omega, k, alpha: Complex64::new(0.0, -1.0 / k) })
    }

    /// Context for a given wavenumber with `c = 343`, `rho = 1.2`.
    pub fn from_wavenumber(k: f64) -> Result<Self> {
        Self::new(k * 343.0 / (2.0 * PI), 343.0, 1.2)
    }

    pub fn with_alpha(mut self, alpha: Complex64) -> Result<Self> {
        if alpha.im == 0.0 {
            return Err(Error::InvalidConfig("Burton-Miller coupling must have a nonzero imaginary part".into()));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Copy with `alpha = 0`, i.e. the conventional integral equation only.
    pub(crate) fn without_coupling(mut self) -> Self {
        self.alpha = Complex64::new(0.0, 0.0);
        self
    }
}

/// Free-space Green's function `exp(ikr)/(4 pi r)`.
pub fn green_full(ctx: &WaveContext, x: &Vec3, y: &Vec3) -> Result<Complex64> {
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::Singularity("Green's function evaluated at coincident points".into()));
    }
    Ok(Complex64::from_polar(1.0 / (FOUR_PI * r), ctx.k * r))
}

/// Half-space Green's function `G(x, y) + R_p G(x, mirror(y))`.
pub fn green_half(ctx: &WaveContext, x: &Vec3, y: &Vec3, hs: &HalfSpace) -> Result<Complex64> {
    let direct = green_full(ctx, x, y)?;
    if hs.rp == Complex64::new(0.0, 0.0) {
        return Ok(direct);
    }
    Ok(direct + hs.rp * green_full(ctx, x, &hs.plane.mirror(y))?)
}

/// `G` and its normal derivatives at a point pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    pub g: Complex64,
    pub dg_dny: Complex64,
    pub dg_dnx: Complex64,
    pub d2g_dnx_dny: Complex64,
}

/// Closed-form kernel derivatives along the given unit vectors `n_x`, `n_y`.
pub fn kernel_derivatives(ctx: &WaveContext, x: &Vec3, y: &Vec3, n_x: &Vec3, n_y: &Vec3) -> Result<KernelValues> {
    let d = x - y;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::Singularity("kernel derivatives at coincident points".into()));
    }
    Ok(kernel_at(ctx.k, &d, r, n_x, n_y))
}

#[inline]
fn kernel_at(k: f64, d: &Vec3, r: f64, n_x: &Vec3, n_y: &Vec3) -> KernelValues {
    let inv_r = 1.0 / r;
    let g = Complex64::from_polar(inv_r / FOUR_PI, k * r);
    let f = Complex64::new(-inv_r, k);
    let cx = d.dot(n_x) * inv_r;
    let cy = d.dot(n_y) * inv_r;
    let radial = Complex64::new(k * k - 3.0 * inv_r * inv_r, 3.0 * k * inv_r);
    KernelValues {
        g,
        dg_dny: -f * g * cy,
        dg_dnx: f * g * cx,
        d2g_dnx_dny: g * (radial * (cx * cy) - f * (inv_r * n_x.dot(n_y))),
    }
}

/// Burton–Miller integrands `(dG/dn_y + alpha d2G, G + alpha dG/dn_x)`.
#[inline]
fn combined_kernel(k: f64, alpha: Complex64, x: &Vec3, n_x: &Vec3, y: &Vec3, n_y: &Vec3) -> (Complex64, Complex64) {
    let d = x - y;
    let r = d.norm();
    let kv = kernel_at(k, &d, r, n_x, n_y);
    (kv.dg_dny + alpha * kv.d2g_dnx_dny, kv.g + alpha * kv.dg_dnx)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn compute_gauss_rule(n: usize) -> GaussRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    GaussRule { nodes, weights }
}

const MAX_RULE: usize = 32;

/// Cached Gauss–Legendre rule with `n` points, `1 <= n <= 32`.
pub fn gauss_legendre(n: usize) -> &'static GaussRule {
    static RULES: OnceLock<Vec<GaussRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=MAX_RULE).map(compute_gauss_rule).collect());
    &rules[n.clamp(1, MAX_RULE) - 1]
}

/// Tensor-product quadrature points `(y, weight * jacobian)` on a flat quad.
pub(crate) fn element_quadrature(e: &Element, order: usize) -> Vec<(Vec3, f64)> {
    let rule = gauss_legendre(order);
    let c = &e.corners;
    let mut pts = Vec::with_capacity(order * order);
    for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
        for (&s, &ws) in rule.nodes.iter().zip(&rule.weights) {
            let y = (c[0] * ((1.0 - s) * (1.0 - t))
                + c[1] * ((1.0 + s) * (1.0 - t))
                + c[2] * ((1.0 + s) * (1.0 + t))
                + c[3] * ((1.0 - s) * (1.0 + t)))
                * 0.25;
            let ys = ((c[1] - c[0]) * (1.0 - t) + (c[2] - c[3]) * (1.0 + t)) * 0.25;
            let yt = ((c[3] - c[0]) * (1.0 - s) + (c[2] - c[1]) * (1.0 + s)) * 0.25;
            pts.push((y, ws * wt * ys.cross(&yt).norm()));
        }
    }
    pts
}

/// Shift applied to distance/diameter ratios so that lattice geometries
/// sitting exactly on a threshold classify the same under rounding noise.
const RATIO_SHIFT: f64 = 1e-7;

/// Regular quadrature order for a distance/diameter ratio.
pub(crate) fn regular_order(ratio: f64) -> usize {
    let ratio = ratio + RATIO_SHIFT;
    if ratio < NEAR_RATIO {
        8
    } else if ratio < 6.0 {
        5
    } else if ratio < 15.0 {
        4
    } else {
        3
    }
}

/// Integrates `f(y)` over an element, subdividing while the target point is
/// within [`NEAR_RATIO`] element diameters.
pub(crate) fn integrate_adaptive<T, F>(e: &Element, x: &Vec3, f: &mut F, depth: usize) -> T
where
    T: std::ops::Add<Output = T> + Default,
    F: FnMut(&Vec3, f64) -> T,
{
    let ratio = (x - e.centroid).norm() / e.diameter();
    if ratio + RATIO_SHIFT < NEAR_RATIO && depth < MAX_SUBDIVISION {
        let mut acc = T::default();
        for child in e.subdivide().iter() {
            acc = acc + integrate_adaptive(child, x, f, depth + 1);
        }
        return acc;
    }
    let mut acc = T::default();
    for (y, w) in element_quadrature(e, regular_order(ratio)) {
        acc = acc + f(&y, w);
    }
    acc
}

#[derive(Default, Clone, Copy)]
struct Pair(Complex64, Complex64);

impl std::ops::Add for Pair {
    type Output = Pair;
    fn add(self, o: Pair) -> Pair {
        Pair(self.0 + o.0, self.1 + o.1)
    }
}

/// True when `x` is the collocation point of `e`.
#[inline]
pub(crate) fn is_self(e: &Element, x: &Vec3) -> bool {
    (x - e.centroid).norm() <= 1e-9 * e.diameter()
}

/// Burton–Miller influence coefficients of `element` at collocation point `x`
/// whose fluid-facing normal is `normal_x`:
/// `h = int dG/dn_y + alpha d2G/dn_x dn_y`, `g = int G + alpha dG/dn_x`.
pub fn element_influence(ctx: &WaveContext, element: &Element, x: &Vec3, normal_x: &Vec3) -> (Complex64, Complex64) {
    if is_self(element, x) {
        return self_influence(ctx, element, x);
    }
    let n_x = -normal_x;
    let n_y = -element.normal;
    let (k, alpha) = (ctx.k, ctx.alpha);
    let Pair(h, g) = integrate_adaptive(
        element,
        x,
        &mut |y: &Vec3, w: f64| {
            let (h, g) = combined_kernel(k, alpha, x, &n_x, y, &n_y);
            Pair(h * w, g * w)
        },
        0,
    );
    (h, g)
}

/// Closed-form planar integrals over a convex polygon containing `x` in its
/// plane: `(int 1/r dA, finite part of int 1/r^3 dA)`.
pub(crate) fn planar_static_integrals(corners: &[Vec3; 4], x: &Vec3) -> (f64, f64) {
    let mut single = 0.0;
    let mut hyper = 0.0;
    for i in 0..4 {
        let va = corners[i];
        let vb = corners[(i + 1) % 4];
        let len = (vb - va).norm();
        if len == 0.0 {
            continue;
        }
        let e = (vb - va) / len;
        let ta = (va - x).dot(&e);
        let tb = (vb - x).dot(&e);
        let h = ((va - x) - e * ta).norm();
        if h == 0.0 {
            continue;
        }
        single += h * ((tb / h).asinh() - (ta / h).asinh());
        hyper -= (tb / (tb * tb + h * h).sqrt() - ta / (ta * ta + h * h).sqrt()) / h;
    }
    (single, hyper)
}

/// `(exp(ikr) - 1)/(4 pi r)`.
#[inline]
fn single_remainder(k: f64, r: f64) -> Complex64 {
    let z = k * r;
    let half = (0.5 * z).sin();
    Complex64::new(-2.0 * half * half, z.sin()) / (FOUR_PI * r)
}

/// `[exp(ikr)(1 - ikr) - 1 - (kr)^2/2] / (4 pi r^3)`.
#[inline]
fn hyper_remainder(k: f64, r: f64) -> Complex64 {
    let z = k * r;
    let num = if z < 0.5 {
        // sum_{j>=3} (iz)^j (1-j)/j!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for j in 1..=24 {
            term *= I * z / j as f64;
            if j >= 3 {
                sum += term * (1.0 - j as f64);
            }
        }
        sum
    } else {
        Complex64::from_polar(1.0, z) * Complex64::new(1.0, -z) - 1.0 - 0.5 * z * z
    };
    num / (FOUR_PI * r * r * r)
}

/// Singular self-influence of a flat element at its own collocation point.
fn self_influence(ctx: &WaveContext, e: &Element, x: &Vec3) -> (Complex64, Complex64) {
    let k = ctx.k;
    let (single, hyper) = planar_static_integrals(&e.corners, x);
    let rule = gauss_legendre(SELF_ORDER);
    let mut g_rem = Complex64::new(0.0, 0.0);
    let mut h_rem = Complex64::new(0.0, 0.0);
    for i in 0..4 {
        let va = e.corners[i];
        let vb = e.corners[(i + 1) % 4];
        let a = va - x;
        let b = vb - va;
        let jac = a.cross(&b).norm();
        if jac == 0.0 {
            continue;
        }
        for (&su, &wu) in rule.nodes.iter().zip(&rule.weights) {
            let u = 0.5 * (su + 1.0);
            for (&sw, &ww) in rule.nodes.iter().zip(&rule.weights) {
                let w = 0.5 * (sw + 1.0);
                let r = ((a + b * w) * u).norm();
                let weight = 0.25 * wu * ww * u * jac;
                g_rem += single_remainder(k, r) * weight;
                h_rem += hyper_remainder(k, r) * weight;
            }
        }
    }
    let g = single / FOUR_PI + g_rem;
    let h = ctx.alpha * (hyper / FOUR_PI + 0.5 * k * k * single / FOUR_PI + h_rem);
    (h, g)
}

/// Kind of incident field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// `p0 exp(ik d.x)` with unit direction `d`.
    PlaneWave { direction: Vec3, amplitude: Complex64 },
    /// `S exp(ikr)/r`, so `|p| = S` at 1 m.
    Monopole { position: Vec3, strength: Complex64 },
}

/// An incident field, optionally with its image in a reflecting plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentField {
    pub source: Source,
    pub half_space: Option<HalfSpace>,
}

impl IncidentField {
    pub fn plane_wave(direction: Vec3, amplitude: f64) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidConfig("plane-wave direction must be nonzero".into()));
        }
        Ok(Self {
            source: Source::PlaneWave { direction: direction / n, amplitude: Complex64::new(amplitude, 0.0) },
            half_space: None,
        })
    }

    pub fn monopole(position: Vec3, strength: f64) -> Self {
        Self { source: Source::Monopole { position, strength: Complex64::new(strength, 0.0) }, half_space: None }
    }

    pub fn with_half_space(mut self, hs: Option<HalfSpace>) -> Self {
        self.half_space = hs;
        self
    }

    /// Pressure and gradient of the direct field only.
    fn direct(&self, k: f64, x: &Vec3) -> Result<(Complex64, [Complex64; 3])> {
        match self.source {
            Source::PlaneWave { direction, amplitude } => {
                let p = amplitude * Complex64::from_polar(1.0, k * direction.dot(x));
                let f = I * k * p;
                Ok((p, [f * direction.x, f * direction.y, f * direction.z]))
            }
            Source::Monopole { position, strength } => {
                let d = x - position;
                let r = d.norm();
                if r == 0.0 {
                    return Err(Error::Singularity("incident field evaluated at the monopole position".into()));
                }
                let p = strength * Complex64::from_polar(1.0 / r, k * r);
                let f = p * Complex64::new(-1.0 / r, k) / r;
                Ok((p, [f * d.x, f * d.y, f * d.z]))
            }
        }
    }

    /// Pressure and gradient including the image contribution.
    pub fn pressure_and_gradient(&self, k: f64, x: &Vec3) -> Result<(Complex64, [Complex64; 3])> {
        let (mut p, mut grad) = self.direct(k, x)?;
        if let Some(hs) = self.half_space {
            if hs.rp != Complex64::new(0.0, 0.0) {
                let (pi, gi) = self.direct(k, &hs.plane.mirror(x))?;
                p += hs.rp * pi;
                for (a, g) in grad.iter_mut().enumerate() {
                    let s = if a == hs.plane.axis { -1.0 } else { 1.0 };
                    *g += hs.rp * gi[a] * s;
                }
            }
        }
        Ok((p, grad))
    }
}

/// `(p_inc(x), grad p_inc(x) . n_x)`.
pub fn incident_values(field: &IncidentField, ctx: &WaveContext, x: &Vec3, n_x: &Vec3) -> Result<(Complex64, Complex64)> {
    let (p, g) = field.pressure_and_gradient(ctx.k, x)?;
    Ok((p, g[0] * n_x.x + g[1] * n_x.y + g[2] * n_x.z))
}
