//! Dense and block-structured Burton–Miller collocation systems.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{HalfSpace, Lattice, SurfaceMesh};
use crate::kernels::{element_influence, incident_values, IncidentField, WaveContext};
pub use crate::structured::{Block, BlockHankelMatrix, BlockToeplitzMatrix};

/// Default cap on dense matrix storage (8 GiB).
pub const DEFAULT_MEMORY_CAP: u64 = 8 << 30;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Dense system `A p = rhs`.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub a: DMatrix<Complex64>,
    pub rhs: DVector<Complex64>,
}

/// Kernel contributions included in an interaction block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockParts<'a> {
    pub direct: bool,
    pub image: Option<&'a HalfSpace>,
}

impl BlockParts<'_> {
    pub(crate) const DIRECT: BlockParts<'static> = BlockParts { direct: true, image: None };
}

/// Burton–Miller collocation block: rows are the collocation points of
/// `targets`, columns the elements of `sources`. With `same_cell` the
/// diagonal jump terms `1/2 + alpha ik beta/2` are added.
pub(crate) fn interaction_block(
    ctx: &WaveContext,
    targets: &SurfaceMesh,
    sources: &SurfaceMesh,
    same_cell: bool,
    parts: BlockParts<'_>,
) -> Block {
    let ik = I * ctx.k;
    let mirrored = parts.image.filter(|hs| hs.rp != Complex64::new(0.0, 0.0)).map(|hs| (hs.rp, sources.mirrored(&hs.plane)));
    let rows: Vec<Vec<Complex64>> = targets
        .elements
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let x = t.centroid;
            sources
                .elements
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let mut v = Complex64::new(0.0, 0.0);
                    if parts.direct {
                        let (h, g) = element_influence(ctx, s, &x, &t.normal);
                        v += h - ik * s.beta * g;
                        if same_cell && i == j {
                            v += 0.5 + ctx.alpha * ik * s.beta * 0.5;
                        }
                    }
                    if let Some((rp, m)) = &mirrored {
                        let (h, g) = element_influence(ctx, &m.elements[j], &x, &t.normal);
                        v += rp * (h - ik * s.beta * g);
                    }
                    v
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(targets.len(), sources.len(), |i, j| rows[i][j])
}

/// Checks that no collocation point lies on the far side of the mirror plane.
pub fn validate_half_space(mesh: &SurfaceMesh, hs: &HalfSpace) -> Result<()> {
    let axis = hs.plane.axis;
    let side = |v: f64| v - hs.plane.offset;
    let Some(first) = mesh.elements.first() else { return Ok(()) };
    let sign = side(first.centroid[axis]).signum();
    for e in &mesh.elements {
        let s = side(e.centroid[axis]);
        if s == 0.0 || s.signum() != sign {
            return Err(Error::InvalidConfig("mesh crosses or touches the mirror plane".into()));
        }
        for c in &e.corners {
            if side(c[axis]) * sign < -1e-12 * e.diameter() {
                return Err(Error::InvalidConfig("mesh crosses the mirror plane".into()));
            }
        }
    }
    Ok(())
}

/// Right-hand side `p_inc + alpha dp_inc/dn` at every collocation point.
pub fn assemble_rhs(mesh: &SurfaceMesh, ctx: &WaveContext, fields: &[IncidentField]) -> Result<DVector<Complex64>> {
    let values = mesh
        .elements
        .par_iter()
        .map(|e| {
            let n = -e.normal;
            let mut acc = Complex64::new(0.0, 0.0);
            for f in fields {
                let (p, dp) = incident_values(f, ctx, &e.centroid, &n)?;
                acc += p + ctx.alpha * dp;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

/// Bytes needed for a dense `n x n` complex matrix.
pub fn dense_bytes(n: usize) -> u64 {
    (n as u64) * (n as u64) * std::mem::size_of::<Complex64>() as u64
}

/// Dense Burton–Miller system for a mesh, optionally above a reflecting plane.
pub fn assemble_dense(
    mesh: &SurfaceMesh,
    ctx: &WaveContext,
    fields: &[IncidentField],
    hs: Option<&HalfSpace>,
    memory_cap: u64,
) -> Result<DenseSystem> {
    let requested = dense_bytes(mesh.len());
    if requested > memory_cap {
        return Err(Error::MemoryCap { requested, cap: memory_cap });
    }
    if let Some(hs) = hs {
        validate_half_space(mesh, hs)?;
    }
    let a = interaction_block(ctx, mesh, mesh, true, BlockParts { direct: true, image: hs });
    let rhs = assemble_rhs(mesh, ctx, fields)?;
    Ok(DenseSystem { a, rhs })
}

/// How a reflecting plane relates to the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfSpaceLayout {
    /// No reflecting plane, or `R_p = 0`.
    FreeField,
    /// Plane parallel to every periodic direction: images fold into `T`.
    Parallel,
    /// A periodic direction is perpendicular to the plane: `T + T_hat`.
    Perpendicular,
}

pub fn half_space_layout(lattice: &Lattice, hs: Option<&HalfSpace>) -> HalfSpaceLayout {
    match hs {
        None => HalfSpaceLayout::FreeField,
        Some(hs) if lattice.counts[hs.plane.axis] == 1 => {
            if hs.rp == Complex64::new(0.0, 0.0) {
                HalfSpaceLayout::FreeField
            } else {
                HalfSpaceLayout::Parallel
            }
        }
        Some(_) => HalfSpaceLayout::Perpendicular,
    }
}

/// The unit cell translated to lattice position `idx`.
pub fn cell_at(cell: &SurfaceMesh, lattice: &Lattice, idx: [usize; 3]) -> SurfaceMesh {
    cell.translated(&lattice.translation(idx))
}

/// Representative `(field, source)` cell indices for a Toeplitz offset.
pub(crate) fn toeplitz_pair(o: [i64; 3]) -> ([usize; 3], [usize; 3]) {
    let a = o.map(|v| v.max(0));
    let b = [0, 1, 2].map(|i| a[i] - o[i]);
    (a.map(|v| v as usize), b.map(|v| v as usize))
}

/// Representative pair for a Hankel key: index sum on mirrored levels,
/// offset elsewhere.
pub(crate) fn hankel_pair(key: [i64; 3], counts: [usize; 3], mirrored: [bool; 3]) -> ([usize; 3], [usize; 3]) {
    let mut a = [0usize; 3];
    let mut b = [0usize; 3];
    for i in 0..3 {
        if mirrored[i] {
            let ai = key[i].min(counts[i] as i64 - 1);
            a[i] = ai as usize;
            b[i] = (key[i] - ai) as usize;
        } else {
            let ai = key[i].max(0);
            a[i] = ai as usize;
            b[i] = (ai - key[i]) as usize;
        }
    }
    (a, b)
}

/// Block-structured periodic system `T` or `T + T_hat`.
#[derive(Debug, Clone)]
pub struct PeriodicSystem {
    pub toeplitz: BlockToeplitzMatrix,
    pub hankel: Option<BlockHankelMatrix>,
}

impl PeriodicSystem {
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut d = self.toeplitz.to_dense();
        if let Some(h) = &self.hankel {
            d += h.to_dense();
        }
        d
    }
}

/// Unique blocks of the periodic Burton–Miller system.
pub fn assemble_periodic_toeplitz(
    cell: &SurfaceMesh,
    lattice: &Lattice,
    ctx: &WaveContext,
    hs: Option<&HalfSpace>,
) -> Result<PeriodicSystem> {
    lattice.validate_for(cell)?;
    if cell.is_empty() {
        return Err(Error::InvalidConfig("empty unit cell".into()));
    }
    let counts = lattice.counts;
    let b = cell.len();
    let layout = half_space_layout(lattice, hs);
    if let Some(hs) = hs {
        let mut far = cell.clone();
        let top = counts.map(|m| m - 1);
        far.append(&cell_at(cell, lattice, top));
        validate_half_space(&far, hs)?;
    }
    let direct_parts = match layout {
        HalfSpaceLayout::Parallel => BlockParts { direct: true, image: hs },
        _ => BlockParts::DIRECT,
    };
    let toeplitz = BlockToeplitzMatrix::from_fn(counts, b, |o| {
        let (a, s) = toeplitz_pair(o);
        let field = cell_at(cell, lattice, a);
        let source = cell_at(cell, lattice, s);
        Ok(interaction_block(ctx, &field, &source, a == s, direct_parts))
    })?;
    let hankel = if layout == HalfSpaceLayout::Perpendicular {
        let hs = hs.expect("perpendicular layout has a half-space");
        let mirrored = [0, 1, 2].map(|i| i == hs.plane.axis);
        Some(BlockHankelMatrix::from_fn(counts, mirrored, b, |key| {
            if hs.rp == Complex64::new(0.0, 0.0) {
                return Ok(Block::zeros(b, b));
            }
            let (a, s) = hankel_pair(key, counts, mirrored);
            let field = cell_at(cell, lattice, a);
            let source = cell_at(cell, lattice, s);
            Ok(interaction_block(ctx, &field, &source, false, BlockParts { direct: false, image: Some(hs) }))
        })?)
    } else {
        None
    };
    Ok(PeriodicSystem { toeplitz, hankel })
}
