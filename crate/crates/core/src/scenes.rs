//! Ready-made problem geometries: sphere arrays and the periodic wall barrier.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fmm::FmmConfig;
use crate::geometry::{generate_sphere_mesh, Element, HalfSpace, Lattice, MirrorPlane, SurfaceMesh};
use crate::kernels::IncidentField;
use crate::pipeline::Problem;
use crate::postproc::ObservationGrid;
use crate::Vec3;

/// Rigid spheres on a rectangular lattice under a unit plane wave along `direction`.
pub fn sphere_array(counts: [usize; 3], pitch: f64, radius: f64, refinement: usize, direction: Vec3) -> Result<Problem> {
    if 2.0 * radius >= pitch {
        return Err(Error::InvalidConfig(format!("spheres of radius {radius} overlap at pitch {pitch}")));
    }
    let cell = generate_sphere_mesh(radius, refinement)?;
    let lattice = Lattice::new(counts, [pitch; 3])?;
    Ok(Problem::new(cell, lattice, vec![IncidentField::plane_wave(direction, 1.0)?]))
}

/// Rectangular panel in the plane `x = x0` split into `div x div` elements,
/// with normals along `+x` if `facing_positive`.
fn yz_panel(x0: f64, y: [f64; 2], z: [f64; 2], div: usize, facing_positive: bool) -> Result<Vec<Element>> {
    let mut out = Vec::with_capacity(div * div);
    let dy = (y[1] - y[0]) / div as f64;
    let dz = (z[1] - z[0]) / div as f64;
    for j in 0..div {
        for i in 0..div {
            let (y0, y1) = (y[0] + i as f64 * dy, y[0] + (i + 1) as f64 * dy);
            let (z0, z1) = (z[0] + j as f64 * dz, z[0] + (j + 1) as f64 * dz);
            let mut c = [Vec3::new(x0, y0, z0), Vec3::new(x0, y1, z0), Vec3::new(x0, y1, z1), Vec3::new(x0, y0, z1)];
            if !facing_positive {
                c.swap(1, 3);
            }
            out.push(Element::from_corners(c, Complex64::new(0.0, 0.0))?);
        }
    }
    Ok(out)
}

/// Wall-barrier geometry and excitation.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierLayout {
    /// Position of the wall's source-facing layer.
    pub wall_x: f64,
    /// Wall thickness.
    pub thickness: f64,
    /// Cell edge length along `y` and `z`.
    pub cell_size: f64,
    /// Cells along the wall length and height.
    pub my: usize,
    pub mz: usize,
    /// Elements per cell edge on each layer.
    pub divisions: usize,
    /// Monopoles `(position, strength in Pa at 1 m)`.
    pub sources: Vec<(Vec3, f64)>,
    /// Observation box corners and point counts.
    pub observation_min: Vec3,
    pub observation_max: Vec3,
    pub observation_counts: [usize; 3],
    /// Multipole truncation degree for the fast backend.
    pub truncation: usize,
}

impl Default for BarrierLayout {
    fn default() -> Self {
        Self {
            wall_x: 4.0,
            thickness: 0.1,
            cell_size: 0.2,
            my: 50,
            mz: 10,
            divisions: 2,
            sources: vec![(Vec3::new(0.0, 6.5, 1.0), 2.0), (Vec3::new(0.0, 3.5, 1.0), 1.0)],
            observation_min: Vec3::new(4.6, 1.0, 1.0),
            observation_max: Vec3::new(7.6, 9.0, 1.0),
            observation_counts: [40, 80, 1],
            truncation: 6,
        }
    }
}

impl BarrierLayout {
    /// The same layout with a shorter and lower wall, keeping sources and
    /// observation region scaled to the wall length.
    pub fn reduced(my: usize, mz: usize) -> Self {
        let full = Self::default();
        let s = my as f64 / full.my as f64;
        let len = my as f64 * full.cell_size;
        Self {
            my,
            mz,
            sources: full.sources.iter().map(|(p, a)| (Vec3::new(p.x, p.y * s, p.z), *a)).collect(),
            observation_min: Vec3::new(full.observation_min.x, 0.1 * len, full.observation_min.z),
            observation_max: Vec3::new(full.observation_max.x, 0.9 * len, full.observation_max.z),
            observation_counts: [10, 20, 1],
            ..full
        }
    }

    /// Unit cell: source-facing and rear layers of one `cell_size` square.
    pub fn cell(&self) -> Result<SurfaceMesh> {
        let y = [0.0, self.cell_size];
        let z = [0.0, self.cell_size];
        let mut e = yz_panel(self.wall_x, y, z, self.divisions, false)?;
        e.extend(yz_panel(self.wall_x + self.thickness, y, z, self.divisions, true)?);
        Ok(SurfaceMesh::new(e))
    }

    pub fn ground() -> HalfSpace {
        HalfSpace { plane: MirrorPlane { axis: 2, offset: 0.0 }, rp: Complex64::new(1.0, 0.0) }
    }

    pub fn problem(&self) -> Result<Problem> {
        let lattice = Lattice::new([1, self.my, self.mz], [0.0, self.cell_size, self.cell_size])?;
        let fields = self.sources.iter().map(|(p, a)| IncidentField::monopole(*p, *a)).collect();
        let mut p = Problem::new(self.cell()?, lattice, fields).with_half_space(Some(Self::ground()));
        p.fmm = FmmConfig::new(self.truncation)?;
        Ok(p)
    }

    pub fn observation(&self) -> Result<ObservationGrid> {
        ObservationGrid::uniform("shadow zone", self.observation_min, self.observation_max, self.observation_counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{half_space_layout, HalfSpaceLayout};

    #[test]
    fn sphere_array_dimensions() {
        let p = sphere_array([5, 5, 1], 0.35, 0.1, 4, Vec3::x()).unwrap();
        assert_eq!(p.cell.len(), 96);
        assert_eq!(p.n_dof(), 2400);
        assert!(sphere_array([2, 1, 1], 0.15, 0.1, 2, Vec3::x()).is_err());
    }

    #[test]
    fn wall_cell_faces_outward() {
        let l = BarrierLayout::default();
        let cell = l.cell().unwrap();
        assert_eq!(cell.len(), 8);
        for e in &cell.elements[..4] {
            assert!((e.normal - (-Vec3::x())).norm() < 1e-14);
            assert!((e.area - 0.01).abs() < 1e-14);
        }
        for e in &cell.elements[4..] {
            assert!((e.normal - Vec3::x()).norm() < 1e-14);
        }
    }

    #[test]
    fn barrier_problem_layout() {
        let l = BarrierLayout::default();
        let p = l.problem().unwrap();
        assert_eq!(p.lattice.n_cells(), 500);
        assert_eq!(half_space_layout(&p.lattice, p.half_space.as_ref()), HalfSpaceLayout::Perpendicular);
        let g = l.observation().unwrap();
        assert_eq!(g.len(), 3200);
        assert!(g.too_close(&p.mesh().unwrap()).is_empty());
        let r = BarrierLayout::reduced(10, 4);
        assert_eq!(r.problem().unwrap().n_dof(), 320);
        assert!((r.sources[0].0.y - 1.3).abs() < 1e-12);
    }
}
