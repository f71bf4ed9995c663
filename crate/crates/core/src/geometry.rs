//! Surface meshes of flat quadrilaterals, lattice replication, FMM box grids
//! and mirror planes.
//!
//! Element normals point away from the scatterer into the fluid. Meshes are
//! ordered cell-major with the x lattice index running fastest, then y, then z.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::Vec3;

/// A flat quadrilateral boundary element with constant density.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub corners: [Vec3; 4],
    /// Collocation point (vertex centroid).
    pub centroid: Vec3,
    /// Unit normal pointing into the fluid.
    pub normal: Vec3,
    pub area: f64,
    /// Normalized surface admittance; zero for a rigid surface.
    pub beta: Complex64,
}

impl Element {
    /// Builds an element from four corners given counter-clockwise when seen
    /// from the fluid side. Non-planar input is projected onto its mean plane.
    pub fn from_corners(corners: [Vec3; 4], beta: Complex64) -> Result<Self> {
        let d1 = corners[2] - corners[0];
        let d2 = corners[3] - corners[1];
        let cross = d1.cross(&d2);
        let twice_area = cross.norm();
        if !(twice_area > 0.0) || !twice_area.is_finite() {
            return Err(Error::InvalidConfig("degenerate quadrilateral element".into()));
        }
        let normal = cross / twice_area;
        let mean = (corners[0] + corners[1] + corners[2] + corners[3]) / 4.0;
        let flat = corners.map(|c| c - normal * (c - mean).dot(&normal));
        Ok(Self { corners: flat, centroid: mean, normal, area: 0.5 * twice_area, beta })
    }

    /// Largest corner-to-corner distance.
    pub fn diameter(&self) -> f64 {
        let c = &self.corners;
        let mut d = 0.0_f64;
        for a in 0..4 {
            for b in (a + 1)..4 {
                d = d.max((c[a] - c[b]).norm());
            }
        }
        d
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        Self {
            corners: self.corners.map(|c| c + offset),
            centroid: self.centroid + offset,
            normal: self.normal,
            area: self.area,
            beta: self.beta,
        }
    }

    /// Mirror image across `plane`; the corner order is reversed so that the
    /// normal is the mirror image of the original normal.
    pub fn mirrored(&self, plane: &MirrorPlane) -> Self {
        let c = self.corners.map(|p| plane.mirror(&p));
        Self {
            corners: [c[0], c[3], c[2], c[1]],
            centroid: plane.mirror(&self.centroid),
            normal: plane.mirror_direction(&self.normal),
            area: self.area,
            beta: self.beta,
        }
    }

    /// Four sub-elements from splitting at edge midpoints and the centroid.
    pub(crate) fn subdivide(&self) -> [Element; 4] {
        let c = &self.corners;
        let m01 = (c[0] + c[1]) / 2.0;
        let m12 = (c[1] + c[2]) / 2.0;
        let m23 = (c[2] + c[3]) / 2.0;
        let m30 = (c[3] + c[0]) / 2.0;
        let mid = (c[0] + c[1] + c[2] + c[3]) / 4.0;
        let make = |q: [Vec3; 4]| {
            let d1 = q[2] - q[0];
            let d2 = q[3] - q[1];
            Element {
                corners: q,
                centroid: (q[0] + q[1] + q[2] + q[3]) / 4.0,
                normal: self.normal,
                area: 0.5 * d1.cross(&d2).norm(),
                beta: self.beta,
            }
        };
        [
            make([c[0], m01, mid, m30]),
            make([m01, c[1], m12, mid]),
            make([mid, m12, c[2], m23]),
            make([m30, mid, m23, c[3]]),
        ]
    }
}

/// A boundary mesh of flat quadrilateral elements.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceMesh {
    pub elements: Vec<Element>,
}

impl SurfaceMesh {
    pub fn new(elements: Vec<Element>) -> Self {
        Self { elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        Self { elements: self.elements.iter().map(|e| e.translated(offset)).collect() }
    }

    pub fn mirrored(&self, plane: &MirrorPlane) -> Self {
        Self { elements: self.elements.iter().map(|e| e.mirrored(plane)).collect() }
    }

    pub fn with_beta(mut self, beta: Complex64) -> Self {
        for e in &mut self.elements {
            e.beta = beta;
        }
        self
    }

    pub fn append(&mut self, other: &SurfaceMesh) {
        self.elements.extend_from_slice(&other.elements);
    }

    /// Axis-aligned bounding box `(min, max)` of all corners.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for e in &self.elements {
            for c in &e.corners {
                lo = lo.inf(c);
                hi = hi.sup(c);
            }
        }
        (lo, hi)
    }

    pub fn max_diameter(&self) -> f64 {
        self.elements.iter().map(Element::diameter).fold(0.0, f64::max)
    }

    /// Parses the plain-text format: an element count, then one line of
    /// 12 corner coordinates plus `Re(beta) Im(beta)` per element.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty mesh file".into() })?;
        let count: usize = header
            .parse()
            .map_err(|_| Error::Parse { line: hline, message: format!("invalid element count '{header}'") })?;
        let mut elements = Vec::with_capacity(count);
        for (line, text) in lines {
            let values: Vec<f64> = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if values.len() != 14 {
                return Err(Error::Parse { line, message: format!("expected 14 numbers, found {}", values.len()) });
            }
            let c = |i: usize| Vec3::new(values[3 * i], values[3 * i + 1], values[3 * i + 2]);
            let element = Element::from_corners([c(0), c(1), c(2), c(3)], Complex64::new(values[12], values[13]))
                .map_err(|e| Error::Parse { line, message: e.to_string() })?;
            elements.push(element);
        }
        if elements.len() != count {
            return Err(Error::Parse {
                line: hline,
                message: format!("header announces {count} elements, found {}", elements.len()),
            });
        }
        Ok(Self { elements })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.len());
        for e in &self.elements {
            for c in &e.corners {
                let _ = write!(out, "{:.17e} {:.17e} {:.17e} ", c.x, c.y, c.z);
            }
            let _ = writeln!(out, "{:.17e} {:.17e}", e.beta.re, e.beta.im);
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Cube-sphere mesh with `6 * refinement^2` flat quadrilaterals centred at the origin.
pub fn generate_sphere_mesh(radius: f64, refinement: usize) -> Result<SurfaceMesh> {
    if !(radius > 0.0) || refinement == 0 {
        return Err(Error::InvalidConfig(format!(
            "sphere mesh needs radius > 0 and refinement >= 1 (got {radius}, {refinement})"
        )));
    }
    // (face normal, first tangent, second tangent) with t1 x t2 = normal
    let faces = [
        (Vec3::x(), Vec3::y(), Vec3::z()),
        (-Vec3::x(), Vec3::z(), Vec3::y()),
        (Vec3::y(), Vec3::z(), Vec3::x()),
        (-Vec3::y(), Vec3::x(), Vec3::z()),
        (Vec3::z(), Vec3::x(), Vec3::y()),
        (-Vec3::z(), Vec3::y(), Vec3::x()),
    ];
    let n = refinement;
    let angle = |i: usize| -std::f64::consts::FRAC_PI_4 + std::f64::consts::FRAC_PI_2 * i as f64 / n as f64;
    let mut elements = Vec::with_capacity(6 * n * n);
    for (normal, t1, t2) in faces {
        let point = |i: usize, j: usize| (normal + t1 * angle(i).tan() + t2 * angle(j).tan()).normalize() * radius;
        for j in 0..n {
            for i in 0..n {
                let mut q = [point(i, j), point(i + 1, j), point(i + 1, j + 1), point(i, j + 1)];
                let mean = (q[0] + q[1] + q[2] + q[3]) / 4.0;
                if (q[2] - q[0]).cross(&(q[3] - q[1])).dot(&mean) < 0.0 {
                    q.swap(1, 3);
                }
                elements.push(Element::from_corners(q, Complex64::new(0.0, 0.0))?);
            }
        }
    }
    Ok(SurfaceMesh { elements })
}

/// Axis-aligned rectangular lattice of unit cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    /// Cell counts `(M_x, M_y, M_z)`.
    pub counts: [usize; 3],
    /// Pitch along each axis in metres; ignored on axes with a single cell.
    pub pitches: [f64; 3],
}

impl Lattice {
    pub fn new(counts: [usize; 3], pitches: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if counts[a] == 0 {
                return Err(Error::InvalidConfig(format!("lattice count along axis {a} must be >= 1")));
            }
            if counts[a] > 1 && !(pitches[a] > 0.0) {
                return Err(Error::InvalidConfig(format!("lattice pitch along axis {a} must be > 0")));
            }
        }
        Ok(Self { counts, pitches })
    }

    pub fn single() -> Self {
        Self { counts: [1, 1, 1], pitches: [0.0; 3] }
    }

    pub fn n_cells(&self) -> usize {
        self.counts.iter().product()
    }

    /// Cell-major linear index, x fastest.
    pub fn cell_index(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.counts[0] * (idx[1] + self.counts[1] * idx[2])
    }

    pub fn cell_coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.counts[0];
        let rest = index / self.counts[0];
        [x, rest % self.counts[1], rest / self.counts[1]]
    }

    pub fn translation(&self, idx: [usize; 3]) -> Vec3 {
        let mut t = Vec3::zeros();
        for a in 0..3 {
            if self.counts[a] > 1 {
                t[a] = idx[a] as f64 * self.pitches[a];
            }
        }
        t
    }

    /// Translation for a signed lattice offset.
    pub fn offset_vector(&self, offset: [i64; 3]) -> Vec3 {
        let mut t = Vec3::zeros();
        for a in 0..3 {
            if self.counts[a] > 1 {
                t[a] = offset[a] as f64 * self.pitches[a];
            }
        }
        t
    }

    /// Checks that copies of `cell` do not overlap.
    pub fn validate_for(&self, cell: &SurfaceMesh) -> Result<()> {
        let (lo, hi) = cell.bounding_box();
        for a in 0..3 {
            let extent = hi[a] - lo[a];
            if self.counts[a] > 1 && self.pitches[a] < extent * (1.0 - 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "pitch {} along axis {a} is smaller than the cell extent {extent}",
                    self.pitches[a]
                )));
            }
        }
        Ok(())
    }
}

/// Replicates a unit cell over a lattice in cell-major order.
pub fn replicate_lattice(cell: &SurfaceMesh, lattice: &Lattice) -> Result<SurfaceMesh> {
    lattice.validate_for(cell)?;
    let mut elements = Vec::with_capacity(cell.len() * lattice.n_cells());
    for c in 0..lattice.n_cells() {
        let t = lattice.translation(lattice.cell_coords(c));
        elements.extend(cell.elements.iter().map(|e| e.translated(&t)));
    }
    Ok(SurfaceMesh { elements })
}

/// Axis-aligned mirror plane `x[axis] = offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorPlane {
    pub axis: usize,
    pub offset: f64,
}

impl MirrorPlane {
    pub fn new(axis: usize, offset: f64) -> Result<Self> {
        if axis > 2 {
            return Err(Error::InvalidConfig(format!("mirror axis {axis} is not 0, 1 or 2")));
        }
        Ok(Self { axis, offset })
    }

    pub fn mirror(&self, p: &Vec3) -> Vec3 {
        let mut q = *p;
        q[self.axis] = 2.0 * self.offset - p[self.axis];
        q
    }

    pub fn mirror_direction(&self, v: &Vec3) -> Vec3 {
        let mut q = *v;
        q[self.axis] = -v[self.axis];
        q
    }
}

/// Reflecting half-space bounded by a mirror plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub plane: MirrorPlane,
    /// Reflection coefficient of the image source.
    pub rp: Complex64,
}

/// Reflection of `p` across `plane`.
pub fn mirror_point(p: &Vec3, plane: &MirrorPlane) -> Vec3 {
    plane.mirror(p)
}

/// One FMM box per lattice cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    pub centers: Vec<Vec3>,
    /// Half of the box diagonal.
    pub r: f64,
    /// Box extent per axis.
    pub extent: Vec3,
}

impl BoxGrid {
    /// Box extent is the pitch on periodic axes and the cell bounding box
    /// elsewhere; the centre of cell 0 is its bounding-box centre.
    pub fn new(cell: &SurfaceMesh, lattice: &Lattice) -> Self {
        let (lo, hi) = cell.bounding_box();
        let mut extent = hi - lo;
        for a in 0..3 {
            if lattice.counts[a] > 1 {
                extent[a] = lattice.pitches[a];
            }
        }
        let base = (lo + hi) / 2.0;
        let centers =
            (0..lattice.n_cells()).map(|c| base + lattice.translation(lattice.cell_coords(c))).collect();
        Self { centers, r: 0.5 * extent.norm(), extent }
    }

    pub fn base_center(&self) -> Vec3 {
        self.centers[0]
    }
}

/// Admissibility criterion `|a - b| >= 2r`.
pub fn admissible(center_a: &Vec3, center_b: &Vec3, r: f64) -> bool {
    (center_a - center_b).norm() >= 2.0 * r
}

/// Every signed offset tuple of a lattice, x fastest.
pub fn lattice_offsets(counts: [usize; 3]) -> Vec<[i64; 3]> {
    let m = counts.map(|c| c as i64);
    let mut out = Vec::new();
    for z in (1 - m[2])..m[2] {
        for y in (1 - m[1])..m[1] {
            for x in (1 - m[0])..m[0] {
                out.push([x, y, z]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_counts_and_area() {
        assert_eq!(generate_sphere_mesh(1.0, 1).unwrap().len(), 6);
        let m = generate_sphere_mesh(0.1, 10).unwrap();
        assert_eq!(m.len(), 600);
        let exact = 4.0 * PI * 0.01;
        assert!(((m.total_area() - exact) / exact).abs() < 0.02);
        assert!(generate_sphere_mesh(0.0, 2).is_err());
    }

    #[test]
    fn sphere_normals_outward_and_unit() {
        let m = generate_sphere_mesh(0.3, 4).unwrap();
        for e in &m.elements {
            assert!(e.normal.dot(&e.centroid.normalize()) > 0.0);
            assert!((e.normal.norm() - 1.0).abs() < 1e-12);
            assert!(e.area > 0.0);
        }
    }

    #[test]
    fn elements_are_flat() {
        let m = generate_sphere_mesh(0.1, 5).unwrap();
        for e in &m.elements {
            for c in &e.corners {
                assert!((c - e.centroid).dot(&e.normal).abs() < 1e-12 * e.diameter().max(1.0));
            }
        }
    }

    #[test]
    fn replication() {
        let cell = generate_sphere_mesh(0.1, 10).unwrap();
        let lat = Lattice::new([5, 5, 1], [0.35, 0.35, 0.0]).unwrap();
        assert_eq!(replicate_lattice(&cell, &lat).unwrap().len(), 15000);
        assert_eq!(replicate_lattice(&cell, &Lattice::single()).unwrap(), cell);
        let lat2 = Lattice::new([2, 1, 1], [0.4, 0.0, 0.0]).unwrap();
        let rep = replicate_lattice(&cell, &lat2).unwrap();
        for i in 0..cell.len() {
            let d = rep.elements[i + cell.len()].centroid - rep.elements[i].centroid;
            assert!((d - Vec3::new(0.4, 0.0, 0.0)).norm() < 1e-14);
        }
        let bad = Lattice::new([2, 1, 1], [0.1, 0.0, 0.0]).unwrap();
        assert!(replicate_lattice(&cell, &bad).is_err());
    }

    #[test]
    fn cell_indexing_roundtrip() {
        let lat = Lattice::new([3, 4, 2], [1.0; 3]).unwrap();
        for c in 0..lat.n_cells() {
            assert_eq!(lat.cell_index(lat.cell_coords(c)), c);
        }
        assert_eq!(lat.cell_coords(1), [1, 0, 0]);
        assert_eq!(lat.cell_coords(3), [0, 1, 0]);
    }

    #[test]
    fn mirror_examples() {
        let plane = MirrorPlane::new(2, 0.0).unwrap();
        assert_eq!(mirror_point(&Vec3::new(1.0, 2.0, 3.0), &plane), Vec3::new(1.0, 2.0, -3.0));
        let on = Vec3::new(0.3, -1.0, 0.0);
        assert_eq!(mirror_point(&on, &plane), on);
        let p = Vec3::new(0.1, 0.2, 0.7);
        let shifted = MirrorPlane::new(0, 0.25).unwrap();
        assert!((shifted.mirror(&shifted.mirror(&p)) - p).norm() < 1e-15);
    }

    #[test]
    fn mirrored_element_normal() {
        let m = generate_sphere_mesh(0.1, 2).unwrap().translated(&Vec3::new(0.0, 0.0, 0.5));
        let plane = MirrorPlane::new(2, 0.0).unwrap();
        for e in &m.elements {
            let me = e.mirrored(&plane);
            let rebuilt = Element::from_corners(me.corners, me.beta).unwrap();
            assert!((rebuilt.normal - me.normal).norm() < 1e-12);
            assert!((rebuilt.centroid - me.centroid).norm() < 1e-14);
        }
    }

    #[test]
    fn sphere_array_has_nine_near_offsets() {
        let cell = generate_sphere_mesh(0.1, 4).unwrap();
        let lat = Lattice::new([5, 5, 1], [0.35, 0.35, 0.0]).unwrap();
        let grid = BoxGrid::new(&cell, &lat);
        let near = lattice_offsets(lat.counts)
            .into_iter()
            .filter(|o| !admissible(&lat.offset_vector(*o), &Vec3::zeros(), grid.r))
            .count();
        assert_eq!(near, 9);
        assert_eq!(lattice_offsets(lat.counts).len(), 81);
    }

    #[test]
    fn admissibility_inclusive() {
        assert!(admissible(&Vec3::new(2.0, 0.0, 0.0), &Vec3::zeros(), 1.0));
        assert!(!admissible(&Vec3::new(0.35, 0.0, 0.0), &Vec3::zeros(), 0.25));
    }

    #[test]
    fn text_roundtrip() {
        let m = generate_sphere_mesh(0.2, 2).unwrap().with_beta(Complex64::new(0.1, -0.2));
        let back = SurfaceMesh::parse(&m.to_text()).unwrap();
        assert_eq!(back.len(), m.len());
        for (a, b) in back.elements.iter().zip(&m.elements) {
            assert!((a.centroid - b.centroid).norm() < 1e-15);
            assert_eq!(a.beta, b.beta);
        }
        assert!(matches!(SurfaceMesh::parse("2\n0 0 0 1 0 0 1 1 0 0 1 0 0 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(SurfaceMesh::parse("1\n0 0 0 1 0\n"), Err(Error::Parse { line: 2, .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn near_offsets_symmetric(mx in 1usize..5, my in 1usize..5, px in 0.25f64..0.6, py in 0.25f64..0.6) {
                let cell = generate_sphere_mesh(0.1, 2).unwrap();
                let lat = Lattice::new([mx, my, 1], [px, py, 0.0]).unwrap();
                let grid = BoxGrid::new(&cell, &lat);
                let near: Vec<[i64; 3]> = lattice_offsets(lat.counts)
                    .into_iter()
                    .filter(|o| !admissible(&lat.offset_vector(*o), &Vec3::zeros(), grid.r))
                    .collect();
                for o in &near {
                    prop_assert!(near.contains(&[-o[0], -o[1], -o[2]]));
                }
            }

            #[test]
            fn replicated_blocks_are_translates(mx in 1usize..4, my in 1usize..4, mz in 1usize..3) {
                let cell = generate_sphere_mesh(0.1, 2).unwrap();
                let lat = Lattice::new([mx, my, mz], [0.3, 0.25, 0.4]).unwrap();
                let rep = replicate_lattice(&cell, &lat).unwrap();
                let n = cell.len();
                for c in 0..lat.n_cells() {
                    let t = lat.translation(lat.cell_coords(c));
                    for i in 0..n {
                        let d = rep.elements[c * n + i].centroid - rep.elements[i].centroid;
                        prop_assert!((d - t).norm() < 1e-14);
                    }
                }
            }
        }
    }
}
