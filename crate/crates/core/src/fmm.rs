//! Single-level periodic fast multipole operators.
//!
//! Multipole moments about a centre `c` are `M_n^m = sum q conj(I_n^m(y - c))`
//! and local coefficients about `x_c` satisfy
//! `G(x, y) ~ ik/(4 pi) sum (2n+1) conj(I_n^m(x - x_c)) L_n^m`.
//! The periodic operator is `S + U0 K V0`, with `S` the near-field blocks,
//! `V0`/`U0` the per-cell P2M/L2P matrices and `K` the block-Toeplitz bank
//! of M2L translations, applied through its circulant spectrum.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::assembly::{cell_at, half_space_layout, hankel_pair, interaction_block, toeplitz_pair, validate_half_space, BlockParts, HalfSpaceLayout};
use crate::error::{Error, Result};
use crate::geometry::{admissible, lattice_offsets, BoxGrid, HalfSpace, Lattice, MirrorPlane, SurfaceMesh};
use crate::kernels::{element_quadrature, WaveContext};
use crate::specfun::{coupling_w, flat_index, harmonic_count, regular_solid_all, regular_solid_with_gradient, singular_solid_all};
use crate::structured::{circulant_embed, spectrum, toeplitz_matvec, Block, BandedBlockToeplitz, BlockToeplitzMatrix, CirculantSpectrum, PermutationMap};
use crate::Vec3;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const P2M_ORDER: usize = 6;
const MAX_TRUNCATION: usize = 30;

/// Truncation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FmmConfig {
    /// Far-field truncation degree.
    pub nt: usize,
    /// Truncation for near-field recentering; unused by the single-level operator.
    pub nt_near: usize,
}

impl Default for FmmConfig {
    fn default() -> Self {
        Self { nt: 4, nt_near: 4 }
    }
}

impl FmmConfig {
    pub fn new(nt: usize) -> Result<Self> {
        let cfg = Self { nt, nt_near: nt };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nt > MAX_TRUNCATION || self.nt_near > MAX_TRUNCATION {
            return Err(Error::InvalidConfig(format!("truncation degree must be <= {MAX_TRUNCATION}")));
        }
        Ok(())
    }
}

/// `(-1)^{(|a| + |b| + |a+b|)/2}`.
#[inline]
fn s_sign(a: i64, b: i64) -> f64 {
    if ((a.abs() + b.abs() + (a + b).abs()) / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn neg_one_pow(p: i64) -> f64 {
    if p.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Expansion coefficients (multipole moments or local coefficients) about a centre.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipoleCoefficients {
    pub center: Vec3,
    pub nt: usize,
    pub k: f64,
    pub coeffs: Vec<Complex64>,
}

impl MultipoleCoefficients {
    pub fn zeros(center: Vec3, nt: usize, k: f64) -> Self {
        Self { center, nt, k, coeffs: vec![Complex64::new(0.0, 0.0); harmonic_count(nt)] }
    }

    /// Moments of point sources `(y, q)`.
    pub fn multipole_from_points(points: &[(Vec3, Complex64)], center: Vec3, nt: usize, k: f64) -> Self {
        let mut out = Self::zeros(center, nt, k);
        for (y, q) in points {
            for (c, i) in out.coeffs.iter_mut().zip(regular_solid_all(nt, &(y - center), k)) {
                *c += q * i.conj();
            }
        }
        out
    }

    /// Exact local coefficients of point sources `(y, q)`.
    pub fn local_from_points(points: &[(Vec3, Complex64)], center: Vec3, nt: usize, k: f64) -> Result<Self> {
        let mut out = Self::zeros(center, nt, k);
        for (y, q) in points {
            for (c, o) in out.coeffs.iter_mut().zip(singular_solid_all(nt, &(y - center), k)?) {
                *c += q * o;
            }
        }
        Ok(out)
    }

    /// Field of a multipole expansion at a point outside its sphere.
    pub fn evaluate_multipole(&self, x: &Vec3) -> Result<Complex64> {
        let o = singular_solid_all(self.nt, &(x - self.center), self.k)?;
        Ok(self.weighted_sum(&o, false))
    }

    /// Field of a local expansion.
    pub fn evaluate_local(&self, x: &Vec3) -> Complex64 {
        let i = regular_solid_all(self.nt, &(x - self.center), self.k);
        self.weighted_sum(&i, true)
    }

    fn weighted_sum(&self, basis: &[Complex64], conj: bool) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..=self.nt {
            let mut s = Complex64::new(0.0, 0.0);
            for m in -(n as i64)..=n as i64 {
                let idx = flat_index(n, m);
                let b = if conj { basis[idx].conj() } else { basis[idx] };
                s += b * self.coeffs[idx];
            }
            acc += s * (2 * n + 1) as f64;
        }
        acc * I * self.k / (4.0 * PI)
    }
}

/// Precomputed M2L coupling: `(row, col, index into O_l^mu, coefficient)`.
#[derive(Debug, Clone)]
pub(crate) struct M2lTable {
    nt: usize,
    entries: Vec<(usize, usize, usize, Complex64)>,
}

impl M2lTable {
    pub(crate) fn new(nt: usize) -> Self {
        let mut entries = Vec::new();
        for n in 0..=nt {
            for m in -(n as i64)..=n as i64 {
                let row = flat_index(n, m);
                for np in 0..=nt {
                    for mp in -(np as i64)..=np as i64 {
                        let col = flat_index(np, mp);
                        let mu = m + mp;
                        let pre = (2 * np + 1) as f64 * neg_one_pow((n + np) as i64) * s_sign(m, mp);
                        let lo = (mu.unsigned_abs() as usize).max(n.abs_diff(np));
                        for l in lo..=(n + np) {
                            if (n + np + l) % 2 == 1 {
                                continue;
                            }
                            let w = coupling_w(np, n, mp, m, l);
                            if w.norm() == 0.0 {
                                continue;
                            }
                            entries.push((row, col, flat_index(l, mu), w * pre));
                        }
                    }
                }
            }
        }
        Self { nt, entries }
    }

    pub(crate) fn block(&self, delta: &Vec3, k: f64) -> Result<Block> {
        let o = singular_solid_all(2 * self.nt, delta, k)?;
        let nh = harmonic_count(self.nt);
        let mut b = Block::zeros(nh, nh);
        for &(r, c, oi, coef) in &self.entries {
            b[(r, c)] += coef * o[oi];
        }
        Ok(b)
    }
}

/// M2L translation matrix from a source box to a field box at
/// `delta = field centre - source centre`.
pub fn m2l_block(delta: &Vec3, ctx: &WaveContext, nt: usize, r: f64) -> Result<Block> {
    if !admissible(delta, &Vec3::zeros(), r) {
        return Err(Error::Domain(format!("M2L offset |{}| is not admissible for r = {r}", delta.norm())));
    }
    M2lTable::new(nt).block(delta, ctx.k)
}

/// Shifts multipole moments to `new_center`.
pub fn m2m_translate(src: &MultipoleCoefficients, new_center: &Vec3) -> MultipoleCoefficients {
    let nt = src.nt;
    let basis = regular_solid_all(2 * nt, &(src.center - new_center), src.k);
    let mut out = MultipoleCoefficients::zeros(*new_center, nt, src.k);
    for n in 0..=nt {
        for m in -(n as i64)..=n as i64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for np in 0..=nt {
                for mp in -(np as i64)..=np as i64 {
                    let mu = mp - m;
                    let lo = (mu.unsigned_abs() as usize).max(n.abs_diff(np));
                    let mut s = Complex64::new(0.0, 0.0);
                    for l in (lo..=(n + np)).filter(|l| (n + np + l) % 2 == 0) {
                        s += coupling_w(np, n, -mp, m, l) * basis[flat_index(l, mu)];
                    }
                    acc += s * (s_sign(m, -mp) * (2 * np + 1) as f64) * src.coeffs[flat_index(np, mp)];
                }
            }
            out.coeffs[flat_index(n, m)] = acc;
        }
    }
    out
}

/// Shifts local coefficients to `new_center`.
pub fn l2l_translate(src: &MultipoleCoefficients, new_center: &Vec3) -> MultipoleCoefficients {
    let nt = src.nt;
    let basis = regular_solid_all(2 * nt, &(new_center - src.center), src.k);
    let mut out = MultipoleCoefficients::zeros(*new_center, nt, src.k);
    for n in 0..=nt {
        for m in -(n as i64)..=n as i64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for np in 0..=nt {
                for mp in -(np as i64)..=np as i64 {
                    let mu = m - mp;
                    let lo = (mu.unsigned_abs() as usize).max(n.abs_diff(np));
                    let mut s = Complex64::new(0.0, 0.0);
                    for l in (lo..=(n + np)).filter(|l| (n + np + l) % 2 == 0) {
                        s += coupling_w(n, np, -m, mp, l) * basis[flat_index(l, mu)];
                    }
                    acc += s * (s_sign(mp, -m) * (2 * np + 1) as f64) * src.coeffs[flat_index(np, mp)];
                }
            }
            out.coeffs[flat_index(n, m)] = acc;
        }
    }
    out
}

/// P2M matrix: column `j` holds `int_j [d conj(I)/dn_y - ik beta_j conj(I)]`
/// about `center`, with `n = -nu`.
pub fn p2m_matrix(cell: &SurfaceMesh, ctx: &WaveContext, nt: usize, center: &Vec3) -> DMatrix<Complex64> {
    let nh = harmonic_count(nt);
    let ik = I * ctx.k;
    let cols: Vec<Vec<Complex64>> = cell
        .elements
        .par_iter()
        .map(|e| {
            let n_y = -e.normal;
            let mut col = vec![Complex64::new(0.0, 0.0); nh];
            for (y, w) in element_quadrature(e, P2M_ORDER) {
                let (vals, grads) = regular_solid_with_gradient(nt, &(y - center), ctx.k);
                for ((c, v), g) in col.iter_mut().zip(&vals).zip(&grads) {
                    let dn = (g[0] * n_y.x + g[1] * n_y.y + g[2] * n_y.z).conj();
                    *c += (dn - ik * e.beta * v.conj()) * w;
                }
            }
            col
        })
        .collect();
    DMatrix::from_fn(nh, cell.len(), |r, c| cols[c][r])
}

/// L2P matrix: row `i` holds `(ik/4 pi)(2n+1)[conj(I) + alpha d conj(I)/dn_x]`
/// at collocation point `i`, with `n = -nu`.
pub fn l2p_matrix(cell: &SurfaceMesh, ctx: &WaveContext, nt: usize, center: &Vec3) -> DMatrix<Complex64> {
    let nh = harmonic_count(nt);
    let pre = I * ctx.k / (4.0 * PI);
    let rows: Vec<Vec<Complex64>> = cell
        .elements
        .par_iter()
        .map(|e| {
            let n_x = -e.normal;
            let (vals, grads) = regular_solid_with_gradient(nt, &(e.centroid - center), ctx.k);
            let mut row = vec![Complex64::new(0.0, 0.0); nh];
            for n in 0..=nt {
                for m in -(n as i64)..=n as i64 {
                    let idx = flat_index(n, m);
                    let g = grads[idx];
                    let dn = (g[0] * n_x.x + g[1] * n_x.y + g[2] * n_x.z).conj();
                    row[idx] = pre * (2 * n + 1) as f64 * (vals[idx].conj() + ctx.alpha * dn);
                }
            }
            row
        })
        .collect();
    DMatrix::from_fn(cell.len(), nh, |r, c| rows[r][c])
}

/// Action of a plane reflection on moments: `(D v)_i = sign_i v_{source_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicMirror {
    pub source: Vec<usize>,
    pub sign: Vec<f64>,
}

impl HarmonicMirror {
    pub fn new(axis: usize, nt: usize) -> Self {
        let mut source = Vec::with_capacity(harmonic_count(nt));
        let mut sign = Vec::with_capacity(harmonic_count(nt));
        for n in 0..=nt {
            for m in -(n as i64)..=n as i64 {
                let (s, f) = match axis {
                    0 => (flat_index(n, -m), neg_one_pow(m)),
                    1 => (flat_index(n, -m), 1.0),
                    _ => (flat_index(n, m), neg_one_pow(n as i64 + m)),
                };
                source.push(s);
                sign.push(f);
            }
        }
        Self { source, sign }
    }

    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.source.len();
        let mut d = DMatrix::zeros(n, n);
        for (i, (&s, &f)) in self.source.iter().zip(&self.sign).enumerate() {
            d[(i, s)] = Complex64::new(f, 0.0);
        }
        d
    }

    /// `B D` for a block `B`.
    fn right_apply(&self, b: &Block) -> Block {
        let mut out = Block::zeros(b.nrows(), b.ncols());
        for (i, (&s, &f)) in self.source.iter().zip(&self.sign).enumerate() {
            // (B D)[:, s] += f * B[:, i]
            let col = b.column(i) * Complex64::new(f, 0.0);
            let mut target = out.column_mut(s);
            target += col;
        }
        out
    }
}

/// Image-side operators of a perpendicular mirror plane, in permuted
/// (Toeplitz) cell order.
#[derive(Debug, Clone)]
pub struct HatOperators {
    pub near: BandedBlockToeplitz,
    pub far_offsets: Vec<[i64; 3]>,
    far_spectrum: Option<CirculantSpectrum>,
    pub perm: PermutationMap,
    pub mirror: HarmonicMirror,
}

/// Periodic single-level FMM operators.
#[derive(Debug, Clone)]
pub struct FmmOperators {
    pub config: FmmConfig,
    pub counts: [usize; 3],
    pub n_dof: usize,
    pub grid: BoxGrid,
    /// Near-field blocks `S`.
    pub near: BandedBlockToeplitz,
    /// Admissible offsets carrying M2L blocks.
    pub far_offsets: Vec<[i64; 3]>,
    far_spectrum: Option<CirculantSpectrum>,
    pub u0: DMatrix<Complex64>,
    pub v0: DMatrix<Complex64>,
    pub hat: Option<HatOperators>,
    pub layout: HalfSpaceLayout,
}

fn spectrum_of(counts: [usize; 3], nh: usize, blocks: &[([i64; 3], Block)]) -> Result<Option<CirculantSpectrum>> {
    if blocks.is_empty() {
        return Ok(None);
    }
    let t = BlockToeplitzMatrix::from_fn(counts, nh, |o| {
        Ok(blocks.iter().find(|(k, _)| *k == o).map(|(_, b)| b.clone()).unwrap_or_else(|| Block::zeros(nh, nh)))
    })?;
    Ok(Some(spectrum(&circulant_embed(&t))))
}

/// Assembles `S`, `U0`, `V0` and the M2L bank for a periodic array.
pub fn assemble_periodic_fmm(
    cell: &SurfaceMesh,
    lattice: &Lattice,
    ctx: &WaveContext,
    cfg: &FmmConfig,
    hs: Option<&HalfSpace>,
) -> Result<FmmOperators> {
    cfg.validate()?;
    lattice.validate_for(cell)?;
    if cell.is_empty() {
        return Err(Error::InvalidConfig("empty unit cell".into()));
    }
    let counts = lattice.counts;
    let layout = half_space_layout(lattice, hs);
    if let Some(hs) = hs {
        let mut both = cell.clone();
        both.append(&cell_at(cell, lattice, counts.map(|m| m - 1)));
        validate_half_space(&both, hs)?;
    }
    let nt = cfg.nt;
    let nh = harmonic_count(nt);
    let grid = BoxGrid::new(cell, lattice);
    let r = grid.r;
    let base = grid.base_center();
    let table = M2lTable::new(nt);
    let v0 = p2m_matrix(cell, ctx, nt, &base);
    let u0 = l2p_matrix(cell, ctx, nt, &base);
    let center_of = |idx: [usize; 3]| base + lattice.translation(idx);
    let image_hs = if layout == HalfSpaceLayout::Parallel { hs } else { None };
    let plane: Option<MirrorPlane> = hs.map(|h| h.plane);
    let mirror = plane.map(|p| HarmonicMirror::new(p.axis, nt));

    struct OffsetParts {
        near: Option<Block>,
        far: Option<Block>,
    }

    let offsets = lattice_offsets(counts);
    let parts = offsets
        .par_iter()
        .map(|&o| -> Result<OffsetParts> {
            let (a, b) = toeplitz_pair(o);
            let xc = center_of(a);
            let yc = center_of(b);
            let direct_far = admissible(&xc, &yc, r);
            let mut near: Option<Block> = None;
            let mut far: Option<Block> = None;
            let field = cell_at(cell, lattice, a);
            let source = cell_at(cell, lattice, b);
            if direct_far {
                far = Some(table.block(&(xc - yc), ctx.k)?);
            } else {
                near = Some(interaction_block(ctx, &field, &source, a == b, BlockParts::DIRECT));
            }
            if let Some(hs) = image_hs {
                let yc_img = hs.plane.mirror(&yc);
                if admissible(&xc, &yc_img, r) {
                    let k_img = mirror.as_ref().expect("mirror map").right_apply(&table.block(&(xc - yc_img), ctx.k)?);
                    let k_img = k_img * hs.rp;
                    far = Some(far.map_or(k_img.clone(), |f| f + k_img));
                } else {
                    let s_img = interaction_block(ctx, &field, &source, false, BlockParts { direct: false, image: Some(hs) });
                    near = Some(near.map_or(s_img.clone(), |n| n + s_img));
                }
            }
            Ok(OffsetParts { near, far })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut near = BandedBlockToeplitz::empty(counts, cell.len());
    let mut far_blocks = Vec::new();
    for (o, p) in offsets.iter().zip(parts) {
        if let Some(b) = p.near {
            near.offsets.push(*o);
            near.blocks.push(b);
        }
        if let Some(b) = p.far {
            far_blocks.push((*o, b));
        }
    }
    let far_offsets = far_blocks.iter().map(|(o, _)| *o).collect();
    let far_spectrum = spectrum_of(counts, nh, &far_blocks)?;

    let hat = if layout == HalfSpaceLayout::Perpendicular {
        let hs = hs.expect("perpendicular layout has a half-space");
        let mirror = mirror.expect("mirror map");
        let mirrored = [0, 1, 2].map(|i| i == hs.plane.axis);
        let perm = PermutationMap { counts, mirrored };
        let mut hnear = BandedBlockToeplitz::empty(counts, cell.len());
        let mut hfar = Vec::new();
        if hs.rp != Complex64::new(0.0, 0.0) {
            let blocks = offsets
                .par_iter()
                .map(|&o| -> Result<(Option<Block>, Option<Block>)> {
                    let key = [0, 1, 2].map(|i| if mirrored[i] { o[i] + counts[i] as i64 - 1 } else { o[i] });
                    let (a, b) = hankel_pair(key, counts, mirrored);
                    let xc = center_of(a);
                    let yc_img = hs.plane.mirror(&center_of(b));
                    if admissible(&xc, &yc_img, r) {
                        let blk = mirror.right_apply(&table.block(&(xc - yc_img), ctx.k)?) * hs.rp;
                        Ok((None, Some(blk)))
                    } else {
                        let field = cell_at(cell, lattice, a);
                        let source = cell_at(cell, lattice, b);
                        let blk = interaction_block(ctx, &field, &source, false, BlockParts { direct: false, image: Some(hs) });
                        Ok((Some(blk), None))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            for (o, (n, f)) in offsets.iter().zip(blocks) {
                if let Some(b) = n {
                    hnear.offsets.push(*o);
                    hnear.blocks.push(b);
                }
                if let Some(b) = f {
                    hfar.push((*o, b));
                }
            }
        }
        Some(HatOperators {
            near: hnear,
            far_offsets: hfar.iter().map(|(o, _)| *o).collect(),
            far_spectrum: spectrum_of(counts, nh, &hfar)?,
            perm,
            mirror,
        })
    } else {
        None
    };

    Ok(FmmOperators { config: *cfg, counts, n_dof: cell.len(), grid, near, far_offsets, far_spectrum, u0, v0, hat, layout })
}

impl FmmOperators {
    pub fn n_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn dim(&self) -> usize {
        self.n_cells() * self.n_dof
    }

    pub fn near_offsets(&self) -> &[[i64; 3]] {
        &self.near.offsets
    }

    pub fn storage_bytes(&self) -> usize {
        let c = std::mem::size_of::<Complex64>();
        let mut bytes = self.near.storage_bytes()
            + self.far_spectrum.as_ref().map_or(0, |s| s.storage_bytes())
            + (self.u0.len() + self.v0.len()) * c;
        if let Some(h) = &self.hat {
            bytes += h.near.storage_bytes() + h.far_spectrum.as_ref().map_or(0, |s| s.storage_bytes());
        }
        bytes
    }

    fn far_apply(&self, spec: &CirculantSpectrum, p: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n_cells();
        let pm = DMatrix::from_column_slice(self.n_dof, n, p);
        let moments = &self.v0 * pm;
        let locals = toeplitz_matvec(spec, moments.as_slice())?;
        let lm = DMatrix::from_column_slice(self.v0.nrows(), n, &locals);
        Ok((&self.u0 * lm).as_slice().to_vec())
    }

    /// `(S + U0 K V0) p`, plus the image path when present.
    pub fn matvec(&self, p: &[Complex64]) -> Result<Vec<Complex64>> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        let mut y = self.near.matvec(p)?;
        if let Some(spec) = &self.far_spectrum {
            for (a, b) in y.iter_mut().zip(self.far_apply(spec, p)?) {
                *a += b;
            }
        }
        if let Some(hat) = &self.hat {
            let pp = hat.perm.apply(p, self.n_dof)?;
            for (a, b) in y.iter_mut().zip(hat.near.matvec(&pp)?) {
                *a += b;
            }
            if let Some(spec) = &hat.far_spectrum {
                for (a, b) in y.iter_mut().zip(self.far_apply(spec, &pp)?) {
                    *a += b;
                }
            }
        }
        Ok(y)
    }
}

/// Functional form of [`FmmOperators::matvec`].
pub fn fmm_matvec(ops: &FmmOperators, p: &[Complex64]) -> Result<Vec<Complex64>> {
    ops.matvec(p)
}
