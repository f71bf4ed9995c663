//! Field evaluation away from the boundary, insertion loss, Bragg frequency
//! and the rigid-sphere partial-wave reference.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{HalfSpace, SurfaceMesh};
use crate::kernels::{element_influence, IncidentField, WaveContext};
use crate::specfun::{sph_bessel_j_all, sph_bessel_j_derivative_all, sph_hankel1_all, sph_hankel1_derivative_all};
use crate::Vec3;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const MAX_TERMS: usize = 200;

/// Default number of points of a barrier observation grid.
pub const DEFAULT_OBSERVATION_POINTS: usize = 3200;

/// Labelled set of observation points.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid {
    pub label: String,
    pub points: Vec<Vec3>,
}

impl ObservationGrid {
    pub fn new(label: impl Into<String>, points: Vec<Vec3>) -> Self {
        Self { label: label.into(), points }
    }

    /// Uniform grid of `counts` points per axis spanning `[min, max]`
    /// (a single point per axis sits at the midpoint).
    pub fn uniform(label: impl Into<String>, min: Vec3, max: Vec3, counts: [usize; 3]) -> Result<Self> {
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig("observation grid counts must be positive".into()));
        }
        let coord = |a: usize, i: usize| {
            if counts[a] == 1 {
                0.5 * (min[a] + max[a])
            } else {
                min[a] + (max[a] - min[a]) * i as f64 / (counts[a] - 1) as f64
            }
        };
        let mut points = Vec::with_capacity(counts.iter().product());
        for iz in 0..counts[2] {
            for iy in 0..counts[1] {
                for ix in 0..counts[0] {
                    points.push(Vec3::new(coord(0, ix), coord(1, iy), coord(2, iz)));
                }
            }
        }
        Ok(Self { label: label.into(), points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of points closer than one element diameter to some element.
    pub fn too_close(&self, mesh: &SurfaceMesh) -> Vec<usize> {
        self.points
            .par_iter()
            .enumerate()
            .filter(|(_, x)| mesh.elements.iter().any(|e| (*x - e.centroid).norm() < e.diameter()))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Total pressure at exterior points from a surface solution `p`:
/// `p(x) = p_inc(x) - sum_j int_j [dG/dn_y - ik beta_j G] p_j`, with the image
/// kernel added when `hs` is given. Points near the surface are integrated
/// by adaptive subdivision.
pub fn evaluate_field(
    mesh: &SurfaceMesh,
    p: &[Complex64],
    ctx: &WaveContext,
    fields: &[IncidentField],
    hs: Option<&HalfSpace>,
    points: &[Vec3],
) -> Result<Vec<Complex64>> {
    if p.len() != mesh.len() {
        return Err(Error::DimensionMismatch { expected: mesh.len(), got: p.len() });
    }
    let plain = ctx.without_coupling();
    let ik = I * ctx.k;
    let image = hs.filter(|h| h.rp != Complex64::new(0.0, 0.0)).map(|h| (h.rp, mesh.mirrored(&h.plane)));
    let grid = ObservationGrid::new("", points.to_vec());
    let close = grid.too_close(mesh);
    if !close.is_empty() {
        log::warn!("{} observation points lie within one element diameter of the surface", close.len());
    }
    let nx = Vec3::z();
    points
        .par_iter()
        .map(|x| {
            let mut total = Complex64::new(0.0, 0.0);
            for f in fields {
                total += f.pressure_and_gradient(ctx.k, x)?.0;
            }
            for (j, e) in mesh.elements.iter().enumerate() {
                let (h, g) = element_influence(&plain, e, x, &nx);
                let mut kernel = h - ik * e.beta * g;
                if let Some((rp, m)) = &image {
                    let (h, g) = element_influence(&plain, &m.elements[j], x, &nx);
                    kernel += rp * (h - ik * e.beta * g);
                }
                total -= kernel * p[j];
            }
            Ok(total)
        })
        .collect()
}

/// `20 log10(sum |p_inc| / sum |p|)` in dB.
pub fn insertion_loss(p_inc: &[Complex64], p: &[Complex64]) -> Result<f64> {
    if p_inc.len() != p.len() {
        return Err(Error::DimensionMismatch { expected: p_inc.len(), got: p.len() });
    }
    if p.is_empty() {
        return Err(Error::InvalidConfig("insertion loss needs at least one point".into()));
    }
    let num: f64 = p_inc.iter().map(|z| z.norm()).sum();
    let den: f64 = p.iter().map(|z| z.norm()).sum();
    if den == 0.0 {
        return Err(Error::Numerical("total pressure vanishes; insertion loss is infinite".into()));
    }
    Ok(20.0 * (num / den).log10())
}

/// Bragg frequency `n c / (2 d sin theta)`.
pub fn bragg_frequency(c: f64, d: f64, theta: f64, n: u32) -> Result<f64> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::Domain(format!("incidence angle must lie in (0, pi/2], got {theta}")));
    }
    if !(d > 0.0) || n == 0 {
        return Err(Error::Domain("spacing and order must be positive".into()));
    }
    Ok(n as f64 * c / (2.0 * d * theta.sin()))
}

/// Where to evaluate the rigid-sphere series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SphereEval {
    /// On the surface at polar angle `theta` from the propagation direction.
    Surface { theta: f64 },
    /// At an exterior point relative to the sphere centre.
    Point(Vec3),
}

/// Total pressure for a plane wave `p0 exp(ikz)` scattered by a rigid sphere
/// of `radius` centred at the origin.
pub fn rigid_sphere_reference(ctx: &WaveContext, radius: f64, p0: f64, eval: SphereEval) -> Result<Complex64> {
    let k = ctx.k;
    let ka = k * radius;
    if !(radius > 0.0) || ka > 20.0 {
        return Err(Error::Domain(format!("series requires radius > 0 and ka <= 20, got ka = {ka}")));
    }
    let (r, cos_t) = match eval {
        SphereEval::Surface { theta } => (radius, theta.cos()),
        SphereEval::Point(x) => {
            let r = x.norm();
            if r < radius * (1.0 - 1e-12) {
                return Err(Error::Domain("evaluation point lies inside the sphere".into()));
            }
            (r, x.z / r)
        }
    };
    let kr = k * r;
    let nmax = MAX_TERMS.min(kr.ceil() as usize + 40);
    let jd = sph_bessel_j_derivative_all(nmax, ka);
    let hd = sph_hankel1_derivative_all(nmax, ka)?;
    let j = sph_bessel_j_all(nmax, kr);
    let h = sph_hankel1_all(nmax, kr)?;
    let mut sum = Complex64::new(0.0, 0.0);
    let (mut p_prev, mut p_cur) = (1.0, cos_t);
    let mut ipow = Complex64::new(1.0, 0.0);
    for n in 0..=nmax {
        let pn = if n == 0 { 1.0 } else { p_cur };
        let radial = j[n] - h[n] * (jd[n] / hd[n]);
        let term = ipow * (2 * n + 1) as f64 * radial * pn;
        if !term.re.is_finite() || !term.im.is_finite() {
            break;
        }
        sum += term;
        if n as f64 > kr && term.norm() < 1e-12 * sum.norm().max(1e-300) {
            return Ok(sum * p0);
        }
        if n >= 1 {
            let next = ((2 * n + 1) as f64 * cos_t * p_cur - n as f64 * p_prev) / (n + 1) as f64;
            p_prev = p_cur;
            p_cur = next;
        }
        ipow *= I;
    }
    Err(Error::Numerical(format!("rigid-sphere series did not converge within {nmax} terms")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Element, MirrorPlane};
    use std::f64::consts::PI;

    fn ctx(k: f64) -> WaveContext {
        WaveContext::from_wavenumber(k).unwrap()
    }

    #[test]
    fn insertion_loss_examples() {
        let p: Vec<Complex64> = (1..5).map(|i| Complex64::new(i as f64, -1.0)).collect();
        assert_eq!(insertion_loss(&p, &p).unwrap(), 0.0);
        let tenth: Vec<Complex64> = p.iter().map(|z| z / 10.0).collect();
        assert!((insertion_loss(&p, &tenth).unwrap() - 20.0).abs() < 1e-12);
        let scaled_a: Vec<Complex64> = p.iter().map(|z| z * 3.0).collect();
        let scaled_b: Vec<Complex64> = tenth.iter().map(|z| z * 3.0).collect();
        assert!((insertion_loss(&scaled_a, &scaled_b).unwrap() - 20.0).abs() < 1e-12);
        assert!(insertion_loss(&p, &[Complex64::new(0.0, 0.0); 4]).is_err());
        assert!(insertion_loss(&p, &p[..2]).is_err());
    }

    #[test]
    fn bragg_examples() {
        assert_eq!(bragg_frequency(343.0, 0.4, PI / 2.0, 1).unwrap(), 428.75);
        assert!((bragg_frequency(343.0, 0.4, PI / 2.0, 2).unwrap() - 857.5).abs() < 1e-12);
        assert!((bragg_frequency(343.0, 0.4, PI / 6.0, 1).unwrap() - 857.5).abs() < 1e-9);
        assert!(bragg_frequency(343.0, 0.4, 0.0, 1).is_err());
    }

    #[test]
    fn sphere_series_small_ka_is_incident() {
        let c = ctx(2.0);
        let x = Vec3::new(0.3, 0.1, 0.5);
        let p = rigid_sphere_reference(&c, 1e-4, 1.0, SphereEval::Point(x)).unwrap();
        let inc = Complex64::from_polar(1.0, c.k * x.z);
        assert!((p - inc).norm() < 1e-6, "{p} vs {inc}");
    }

    #[test]
    fn sphere_series_far_point_approaches_incident_plus_small_scatter() {
        let c = ctx(10.0);
        let x = Vec3::new(0.0, 0.0, -0.5);
        let p = rigid_sphere_reference(&c, 0.1, 2.0, SphereEval::Point(x)).unwrap();
        let inc = Complex64::from_polar(2.0, c.k * x.z);
        assert!((p - inc).norm() < 0.5 && (p - inc).norm() > 1e-3);
    }

    #[test]
    fn sphere_series_radial_velocity_vanishes() {
        let c = ctx(10.0);
        let a = 0.1;
        let d = 1e-5;
        for theta in [0.0, 1.0, 2.5] {
            let at = |r: f64| rigid_sphere_reference(&c, a, 1.0, SphereEval::Point(Vec3::new(r * f64::sin(theta), 0.0, r * f64::cos(theta)))).unwrap();
            let dp = (-3.0 * at(a) + 4.0 * at(a + d) - at(a + 2.0 * d)) / (2.0 * d);
            assert!(dp.norm() < 1e-6 * c.k, "theta {theta}: {dp}");
        }
        let s = rigid_sphere_reference(&c, a, 1.0, SphereEval::Surface { theta: 1.0 }).unwrap();
        let p = rigid_sphere_reference(&c, a, 1.0, SphereEval::Point(Vec3::new(a * 1f64.sin(), 0.0, a * 1f64.cos()))).unwrap();
        assert!((s - p).norm() < 1e-12);
    }

    #[test]
    fn sphere_series_rejects_bad_input() {
        assert!(rigid_sphere_reference(&ctx(300.0), 0.1, 1.0, SphereEval::Surface { theta: 0.0 }).is_err());
        assert!(rigid_sphere_reference(&ctx(3.0), 0.1, 1.0, SphereEval::Point(Vec3::zeros())).is_err());
    }

    fn tiny_panel(h: f64) -> SurfaceMesh {
        let c = [Vec3::new(-h, -h, 0.0), Vec3::new(h, -h, 0.0), Vec3::new(h, h, 0.0), Vec3::new(-h, h, 0.0)];
        SurfaceMesh::new(vec![Element::from_corners(c, Complex64::new(0.0, 0.0)).unwrap()])
    }

    #[test]
    fn vanishing_scatterer_leaves_incident_field() {
        let c = ctx(5.0);
        let field = IncidentField::plane_wave(Vec3::new(1.0, 0.0, 0.0), 1.0).unwrap();
        let pts = vec![Vec3::new(0.5, 0.2, 0.3), Vec3::new(-0.4, 0.0, 1.0)];
        let out = evaluate_field(&tiny_panel(1e-6), &[Complex64::new(1.0, 0.0)], &c, &[field], None, &pts).unwrap();
        for (x, v) in pts.iter().zip(out) {
            assert!((v - Complex64::from_polar(1.0, c.k * x.x)).norm() < 1e-9);
        }
    }

    #[test]
    fn field_is_affine_in_surface_solution() {
        let c = ctx(5.0);
        let mesh = tiny_panel(0.05).with_beta(Complex64::new(0.3, 0.1));
        let pts = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.0, 0.0, -0.4)];
        let a = evaluate_field(&mesh, &[Complex64::new(1.0, 0.0)], &c, &[], None, &pts).unwrap();
        let b = evaluate_field(&mesh, &[Complex64::new(-2.0, 3.0)], &c, &[], None, &pts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x * Complex64::new(-2.0, 3.0) - y).norm() < 1e-14);
        }
    }

    #[test]
    fn image_term_matches_mirrored_mesh() {
        let c = ctx(5.0);
        let mesh = tiny_panel(0.05).translated(&Vec3::new(0.0, 0.0, 0.3));
        let hs = HalfSpace { plane: MirrorPlane::new(2, 0.0).unwrap(), rp: Complex64::new(1.0, 0.0) };
        let pts = vec![Vec3::new(0.1, 0.2, 0.6)];
        let p = [Complex64::new(0.7, 0.2)];
        let with = evaluate_field(&mesh, &p, &c, &[], Some(&hs), &pts).unwrap();
        let mut both = mesh.clone();
        both.append(&mesh.mirrored(&hs.plane));
        let sum = evaluate_field(&both, &[p[0], p[0]], &c, &[], None, &pts).unwrap();
        assert!((with[0] - sum[0]).norm() < 1e-14);
    }

    #[test]
    fn uniform_grid_layout() {
        let g = ObservationGrid::uniform("box", Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 2.0, 1.0), [3, 5, 1]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.points[0], Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(g.points[14], Vec3::new(1.0, 2.0, 1.0));
        assert!(ObservationGrid::uniform("x", Vec3::zeros(), Vec3::zeros(), [0, 1, 1]).is_err());
        let near = ObservationGrid::new("n", vec![Vec3::new(0.0, 0.0, 0.01), Vec3::new(0.0, 0.0, 1.0)]);
        assert_eq!(near.too_close(&tiny_panel(0.05)), vec![0]);
    }
}
