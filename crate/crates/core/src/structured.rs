//! Multilevel block Toeplitz and Hankel matrices over a 3-level lattice,
//! circulant embedding and FFT-based matrix-vector products.
//!
//! Cells are ordered x fastest, then y, then z. A block Toeplitz matrix
//! stores one dense block per lattice offset `field - source`, each level
//! ranging over `[1-M, M-1]`. Levels with `M = 1` carry no transform.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::lattice_offsets;

pub type Block = DMatrix<Complex64>;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn offset_slot(counts: [usize; 3], o: [i64; 3]) -> usize {
    let m = counts.map(|c| c as i64);
    let l = m.map(|c| 2 * c - 1);
    ((o[0] + m[0] - 1) + l[0] * ((o[1] + m[1] - 1) + l[1] * (o[2] + m[2] - 1))) as usize
}

fn cell_coords(counts: [usize; 3], c: usize) -> [usize; 3] {
    [c % counts[0], (c / counts[0]) % counts[1], c / (counts[0] * counts[1])]
}

/// Multilevel block Toeplitz matrix storing one block per lattice offset.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockToeplitzMatrix {
    counts: [usize; 3],
    block_size: usize,
    blocks: Vec<Block>,
}

impl BlockToeplitzMatrix {
    /// Builds every offset block in parallel.
    pub fn from_fn<F>(counts: [usize; 3], block_size: usize, f: F) -> Result<Self>
    where
        F: Fn([i64; 3]) -> Result<Block> + Sync,
    {
        let blocks = lattice_offsets(counts)
            .into_par_iter()
            .map(|o| {
                let b = f(o)?;
                if b.nrows() != block_size || b.ncols() != block_size {
                    return Err(Error::DimensionMismatch { expected: block_size, got: b.nrows() });
                }
                Ok(b)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { counts, block_size, blocks })
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn n_cells(&self) -> usize {
        self.counts.iter().product()
    }

    /// Number of stored blocks, `prod(2M - 1)`.
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, offset: [i64; 3]) -> &Block {
        &self.blocks[offset_slot(self.counts, offset)]
    }

    pub fn storage_bytes(&self) -> usize {
        self.blocks.len() * self.block_size * self.block_size * std::mem::size_of::<Complex64>()
    }

    /// Dense expansion with block `(a, b)` equal to the block at offset `a - b`.
    pub fn to_dense(&self) -> Block {
        let n = self.n_cells();
        let b = self.block_size;
        let mut out = Block::zeros(n * b, n * b);
        for a in 0..n {
            let ca = cell_coords(self.counts, a);
            for s in 0..n {
                let cs = cell_coords(self.counts, s);
                let o = [0, 1, 2].map(|i| ca[i] as i64 - cs[i] as i64);
                out.view_mut((a * b, s * b), (b, b)).copy_from(self.block(o));
            }
        }
        out
    }
}

/// Multilevel block matrix that is Hankel on mirrored levels (block depends
/// on the index sum) and Toeplitz on the others.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHankelMatrix {
    counts: [usize; 3],
    mirrored: [bool; 3],
    inner: BlockToeplitzMatrix,
}

impl BlockHankelMatrix {
    /// `f` receives, per level, the index sum `a + b` on mirrored levels and
    /// the offset `a - b` elsewhere.
    pub fn from_fn<F>(counts: [usize; 3], mirrored: [bool; 3], block_size: usize, f: F) -> Result<Self>
    where
        F: Fn([i64; 3]) -> Result<Block> + Sync,
    {
        let inner = BlockToeplitzMatrix::from_fn(counts, block_size, |o| {
            let key = [0, 1, 2].map(|i| if mirrored[i] { o[i] + counts[i] as i64 - 1 } else { o[i] });
            f(key)
        })?;
        Ok(Self { counts, mirrored, inner })
    }

    pub fn mirrored(&self) -> [bool; 3] {
        self.mirrored
    }

    /// Block coupling field cell `a` to source cell `b`.
    pub fn block_between(&self, a: [usize; 3], b: [usize; 3]) -> &Block {
        let o = [0, 1, 2].map(|i| {
            if self.mirrored[i] {
                (a[i] + b[i]) as i64 - (self.counts[i] as i64 - 1)
            } else {
                a[i] as i64 - b[i] as i64
            }
        });
        self.inner.block(o)
    }

    pub fn to_dense(&self) -> Block {
        let n = self.inner.n_cells();
        let bs = self.inner.block_size;
        let mut out = Block::zeros(n * bs, n * bs);
        for a in 0..n {
            for s in 0..n {
                let blk = self.block_between(cell_coords(self.counts, a), cell_coords(self.counts, s));
                out.view_mut((a * bs, s * bs), (bs, bs)).copy_from(blk);
            }
        }
        out
    }

    /// The Toeplitz matrix `T_hat P`, where `P` reverses the mirrored levels.
    pub fn permuted_toeplitz(&self) -> &BlockToeplitzMatrix {
        &self.inner
    }

    pub fn permutation(&self) -> PermutationMap {
        PermutationMap { counts: self.counts, mirrored: self.mirrored }
    }

    pub fn storage_bytes(&self) -> usize {
        self.inner.storage_bytes()
    }
}

/// Reversal of cell indices along mirrored levels; an involution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationMap {
    pub counts: [usize; 3],
    pub mirrored: [bool; 3],
}

impl PermutationMap {
    pub fn cell(&self, c: usize) -> usize {
        let mut x = cell_coords(self.counts, c);
        for i in 0..3 {
            if self.mirrored[i] {
                x[i] = self.counts[i] - 1 - x[i];
            }
        }
        x[0] + self.counts[0] * (x[1] + self.counts[1] * x[2])
    }

    /// Permutes a cell-major vector with `block_size` entries per cell.
    pub fn apply(&self, p: &[Complex64], block_size: usize) -> Result<Vec<Complex64>> {
        let n: usize = self.counts.iter().product();
        if p.len() != n * block_size {
            return Err(Error::DimensionMismatch { expected: n * block_size, got: p.len() });
        }
        let mut out = vec![zero(); p.len()];
        for c in 0..n {
            let d = self.cell(c);
            out[c * block_size..(c + 1) * block_size].copy_from_slice(&p[d * block_size..(d + 1) * block_size]);
        }
        Ok(out)
    }
}

/// First block column of the circulant embedding, stored entry-major:
/// `data[entry * n_freq + grid]` with `entry = row * b + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculantColumn {
    pub counts: [usize; 3],
    pub block_size: usize,
    pub data: Vec<Complex64>,
}

impl CirculantColumn {
    pub fn lens(&self) -> [usize; 3] {
        self.counts.map(|m| 2 * m - 1)
    }

    /// Block at circulant grid position `q` (per-level index in `[0, 2M-1)`).
    pub fn block_at(&self, q: [usize; 3]) -> Block {
        let l = self.lens();
        let nf = l.iter().product::<usize>();
        let g = q[0] + l[0] * (q[1] + l[1] * q[2]);
        let b = self.block_size;
        Block::from_fn(b, b, |r, c| self.data[(r * b + c) * nf + g])
    }
}

/// Arranges Toeplitz blocks into the first circulant block column: index
/// `q < M` holds offset `q`, index `q >= M` holds offset `q - (2M - 1)`.
pub fn circulant_embed(t: &BlockToeplitzMatrix) -> CirculantColumn {
    let counts = t.counts;
    let l = counts.map(|m| 2 * m - 1);
    let nf: usize = l.iter().product();
    let b = t.block_size;
    let mut data = vec![zero(); b * b * nf];
    for qz in 0..l[2] {
        for qy in 0..l[1] {
            for qx in 0..l[0] {
                let q = [qx, qy, qz];
                let o = [0, 1, 2].map(|i| if q[i] < counts[i] { q[i] as i64 } else { q[i] as i64 - l[i] as i64 });
                let g = qx + l[0] * (qy + l[1] * qz);
                let blk = t.block(o);
                for r in 0..b {
                    for c in 0..b {
                        data[(r * b + c) * nf + g] = blk[(r, c)];
                    }
                }
            }
        }
    }
    CirculantColumn { counts, block_size: b, data }
}

#[derive(Clone)]
struct FftPlans {
    lens: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for FftPlans {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FftPlans({:?})", self.lens)
    }
}

impl FftPlans {
    fn new(lens: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = lens.map(|l| planner.plan_fft_forward(l));
        let inverse = lens.map(|l| planner.plan_fft_inverse(l));
        Self { lens, forward, inverse }
    }

    /// In-place unnormalized 3-level DFT of one grid array.
    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        let l = self.lens;
        if l[0] > 1 {
            plans[0].process(buf);
        }
        let mut tmp = Vec::new();
        for axis in 1..3 {
            if l[axis] == 1 {
                continue;
            }
            let stride: usize = l[..axis].iter().product();
            let outer: usize = l[axis + 1..].iter().product();
            tmp.resize(l[axis], zero());
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * stride * l[axis] + s;
                    for (j, t) in tmp.iter_mut().enumerate() {
                        *t = buf[base + j * stride];
                    }
                    plans[axis].process(&mut tmp);
                    for (j, t) in tmp.iter().enumerate() {
                        buf[base + j * stride] = *t;
                    }
                }
            }
        }
    }
}

/// Block-diagonal DFT image of a circulant embedding: one `b x b` block
/// per multi-frequency index.
#[derive(Debug, Clone)]
pub struct CirculantSpectrum {
    counts: [usize; 3],
    block_size: usize,
    /// `blocks[f * b * b + r * b + c]`.
    blocks: Vec<Complex64>,
    plans: FftPlans,
}

impl CirculantSpectrum {
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn n_freq(&self) -> usize {
        self.plans.lens.iter().product()
    }

    pub fn block(&self, f: usize) -> Block {
        let b = self.block_size;
        Block::from_row_slice(b, b, &self.blocks[f * b * b..(f + 1) * b * b])
    }

    pub fn storage_bytes(&self) -> usize {
        self.blocks.len() * std::mem::size_of::<Complex64>()
    }

    /// Inverse DFT back to the circulant column.
    pub fn to_column(&self) -> CirculantColumn {
        let b = self.block_size;
        let nf = self.n_freq();
        let mut data = vec![zero(); b * b * nf];
        data.par_chunks_mut(nf).enumerate().for_each(|(e, chunk)| {
            for (f, v) in chunk.iter_mut().enumerate() {
                *v = self.blocks[f * b * b + e] / nf as f64;
            }
            self.plans.transform(chunk, true);
        });
        CirculantColumn { counts: self.counts, block_size: b, data }
    }
}

/// Blockwise multidimensional DFT of a circulant column.
pub fn spectrum(column: &CirculantColumn) -> CirculantSpectrum {
    let lens = column.lens();
    let plans = FftPlans::new(lens);
    let nf: usize = lens.iter().product();
    let b = column.block_size;
    let mut data = column.data.clone();
    data.par_chunks_mut(nf).for_each(|chunk| plans.transform(chunk, false));
    let mut blocks = vec![zero(); nf * b * b];
    blocks.par_chunks_mut(b * b).enumerate().for_each(|(f, blk)| {
        for (e, v) in blk.iter_mut().enumerate() {
            *v = data[e * nf + f];
        }
    });
    CirculantSpectrum { counts: column.counts, block_size: b, blocks, plans }
}

/// `T p` through the circulant spectrum: zero-pad, DFT, per-frequency block
/// product, inverse DFT, truncate.
pub fn toeplitz_matvec(spec: &CirculantSpectrum, p: &[Complex64]) -> Result<Vec<Complex64>> {
    let counts = spec.counts;
    let lens = spec.plans.lens;
    let b = spec.block_size;
    let n_cells: usize = counts.iter().product();
    if p.len() != n_cells * b {
        return Err(Error::DimensionMismatch { expected: n_cells * b, got: p.len() });
    }
    let nf: usize = lens.iter().product();
    let grid_of = |c: usize| {
        let x = cell_coords(counts, c);
        x[0] + lens[0] * (x[1] + lens[1] * x[2])
    };
    // component-major padded grids
    let mut comps = vec![zero(); b * nf];
    comps.par_chunks_mut(nf).enumerate().for_each(|(k, grid)| {
        for c in 0..n_cells {
            grid[grid_of(c)] = p[c * b + k];
        }
        spec.plans.transform(grid, false);
    });
    let mut out_f = vec![zero(); nf * b];
    out_f.par_chunks_mut(b).enumerate().for_each(|(f, out)| {
        let blk = &spec.blocks[f * b * b..(f + 1) * b * b];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &blk[r * b..(r + 1) * b];
            let mut acc = zero();
            for (c, a) in row.iter().enumerate() {
                acc += a * comps[c * nf + f];
            }
            *o = acc;
        }
    });
    let scale = 1.0 / nf as f64;
    comps.par_chunks_mut(nf).enumerate().for_each(|(k, grid)| {
        for (f, g) in grid.iter_mut().enumerate() {
            *g = out_f[f * b + k];
        }
        spec.plans.transform(grid, true);
    });
    let mut out = vec![zero(); n_cells * b];
    out.par_chunks_mut(b).enumerate().for_each(|(c, o)| {
        let g = grid_of(c);
        for (k, v) in o.iter_mut().enumerate() {
            *v = comps[k * nf + g] * scale;
        }
    });
    Ok(out)
}

/// `T_hat p` for a block Hankel matrix given the spectrum of `T_hat P`.
pub fn hankel_matvec(spec: &CirculantSpectrum, perm: &PermutationMap, p: &[Complex64]) -> Result<Vec<Complex64>> {
    let permuted = perm.apply(p, spec.block_size)?;
    toeplitz_matvec(spec, &permuted)
}

/// Block Toeplitz matrix with a sparse set of nonzero offsets, applied directly.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedBlockToeplitz {
    pub counts: [usize; 3],
    pub block_size: usize,
    pub offsets: Vec<[i64; 3]>,
    pub blocks: Vec<Block>,
}

impl BandedBlockToeplitz {
    pub fn empty(counts: [usize; 3], block_size: usize) -> Self {
        Self { counts, block_size, offsets: Vec::new(), blocks: Vec::new() }
    }

    pub fn storage_bytes(&self) -> usize {
        self.blocks.len() * self.block_size * self.block_size * std::mem::size_of::<Complex64>()
    }

    pub fn matvec(&self, p: &[Complex64]) -> Result<Vec<Complex64>> {
        let n: usize = self.counts.iter().product();
        let b = self.block_size;
        if p.len() != n * b {
            return Err(Error::DimensionMismatch { expected: n * b, got: p.len() });
        }
        let mut out = vec![zero(); n * b];
        out.par_chunks_mut(b).enumerate().for_each(|(a, o)| {
            let ca = cell_coords(self.counts, a);
            for (off, blk) in self.offsets.iter().zip(&self.blocks) {
                let mut src = [0usize; 3];
                let mut valid = true;
                for i in 0..3 {
                    let s = ca[i] as i64 - off[i];
                    if s < 0 || s >= self.counts[i] as i64 {
                        valid = false;
                        break;
                    }
                    src[i] = s as usize;
                }
                if !valid {
                    continue;
                }
                let s = src[0] + self.counts[0] * (src[1] + self.counts[1] * src[2]);
                let ps = &p[s * b..(s + 1) * b];
                for (r, v) in o.iter_mut().enumerate() {
                    let mut acc = zero();
                    for (c, x) in ps.iter().enumerate() {
                        acc += blk[(r, c)] * x;
                    }
                    *v += acc;
                }
            }
        });
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_block(rng: &mut rand::rngs::StdRng, b: usize) -> Block {
        Block::from_fn(b, b, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_toeplitz(counts: [usize; 3], b: usize, seed: u64) -> BlockToeplitzMatrix {
        let offsets = lattice_offsets(counts);
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let blocks: Vec<Block> = offsets.iter().map(|_| random_block(&mut rng, b)).collect();
        BlockToeplitzMatrix::from_fn(counts, b, |o| Ok(blocks[offset_slot(counts, o)].clone())).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    fn scalar_1d(values: &[(i64, f64)], m: usize) -> BlockToeplitzMatrix {
        BlockToeplitzMatrix::from_fn([m, 1, 1], 1, |o| {
            let v = values.iter().find(|(k, _)| *k == o[0]).map(|x| x.1).unwrap_or(0.0);
            Ok(Block::from_element(1, 1, c(v)))
        })
        .unwrap()
    }

    #[test]
    fn embedding_example() {
        let t = scalar_1d(&[(0, 2.0), (1, 3.0), (-1, 1.0)], 2);
        let col = circulant_embed(&t);
        assert_eq!(col.data, vec![c(2.0), c(3.0), c(1.0)]);
        let single = circulant_embed(&random_toeplitz([1, 1, 1], 2, 1));
        assert_eq!(single.lens(), [1, 1, 1]);
    }

    #[test]
    fn spectrum_examples() {
        let col = CirculantColumn { counts: [2, 1, 1], block_size: 1, data: vec![c(2.0), c(1.0), c(1.0)] };
        let s = spectrum(&col);
        let vals: Vec<Complex64> = (0..3).map(|f| s.block(f)[(0, 0)]).collect();
        for (v, e) in vals.iter().zip([4.0, 1.0, 1.0]) {
            assert!((v - c(e)).norm() < 1e-14);
        }
        let zero_col = CirculantColumn { counts: [2, 2, 1], block_size: 2, data: vec![zero(); 4 * 9] };
        assert!(spectrum(&zero_col).blocks.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn spectrum_roundtrip() {
        let t = random_toeplitz([3, 2, 2], 3, 4);
        let col = circulant_embed(&t);
        let back = spectrum(&col).to_column();
        for (a, b) in back.data.iter().zip(&col.data) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn embedding_top_left_reproduces_toeplitz() {
        let t = random_toeplitz([3, 2, 1], 2, 9);
        let col = circulant_embed(&t);
        let l = col.lens();
        for a in 0..6 {
            for s in 0..6 {
                let ca = cell_coords(t.counts, a);
                let cs = cell_coords(t.counts, s);
                let q = [0, 1, 2].map(|i| (ca[i] as i64 - cs[i] as i64).rem_euclid(l[i] as i64) as usize);
                let o = [0, 1, 2].map(|i| ca[i] as i64 - cs[i] as i64);
                assert_eq!(&col.block_at(q), t.block(o));
            }
        }
    }

    #[test]
    fn scalar_matvec_example() {
        let t = scalar_1d(&[(0, 2.0), (1, 3.0), (-1, 1.0)], 2);
        let y = toeplitz_matvec(&spectrum(&circulant_embed(&t)), &[c(1.0), c(1.0)]).unwrap();
        assert!((y[0] - c(3.0)).norm() < 1e-14 && (y[1] - c(5.0)).norm() < 1e-14);
        assert!(toeplitz_matvec(&spectrum(&circulant_embed(&t)), &[c(1.0)]).is_err());
    }

    #[test]
    fn identity_matvec() {
        let t = BlockToeplitzMatrix::from_fn([3, 2, 1], 2, |o| {
            Ok(if o == [0, 0, 0] { Block::identity(2, 2) } else { Block::zeros(2, 2) })
        })
        .unwrap();
        let p = random_vec(12, 3);
        let y = toeplitz_matvec(&spectrum(&circulant_embed(&t)), &p).unwrap();
        assert!(rel_err(&y, &p) < 1e-15);
    }

    #[test]
    fn random_two_level_matches_dense() {
        let t = random_toeplitz([3, 2, 1], 4, 11);
        let p = random_vec(24, 5);
        let y = toeplitz_matvec(&spectrum(&circulant_embed(&t)), &p).unwrap();
        let dense = t.to_dense() * DVector::from_vec(p);
        assert!(rel_err(&y, dense.as_slice()) < 1e-13);
    }

    #[test]
    fn scalar_hankel_example() {
        let (a, b, cc) = (c(1.5), c(-0.5), c(2.0));
        let h = BlockHankelMatrix::from_fn([2, 1, 1], [true, false, false], 1, |k| {
            Ok(Block::from_element(1, 1, [a, b, cc][k[0] as usize]))
        })
        .unwrap();
        let dense = h.to_dense();
        assert_eq!(dense[(0, 0)], a);
        assert_eq!(dense[(0, 1)], b);
        assert_eq!(dense[(1, 0)], b);
        assert_eq!(dense[(1, 1)], cc);
        let spec = spectrum(&circulant_embed(h.permuted_toeplitz()));
        let y = hankel_matvec(&spec, &h.permutation(), &[c(1.0), zero()]).unwrap();
        assert!((y[0] - a).norm() < 1e-15 && (y[1] - b).norm() < 1e-15);
    }

    #[test]
    fn permutation_is_involution() {
        let perm = PermutationMap { counts: [3, 4, 2], mirrored: [false, true, true] };
        let p = random_vec(24 * 2, 8);
        let twice = perm.apply(&perm.apply(&p, 2).unwrap(), 2).unwrap();
        assert_eq!(twice, p);
    }

    #[test]
    fn random_hankel_matches_dense() {
        let counts = [2, 3, 2];
        let mut rng = rand::rngs::StdRng::seed_from_u64(21);
        let keys = lattice_offsets(counts);
        let blocks: Vec<Block> = keys.iter().map(|_| random_block(&mut rng, 3)).collect();
        let mirrored = [false, true, false];
        let h = BlockHankelMatrix::from_fn(counts, mirrored, 3, |k| {
            let o = [k[0], k[1] - 2, k[2]];
            Ok(blocks[offset_slot(counts, o)].clone())
        })
        .unwrap();
        // the block depends on the index sum along y
        let b1 = h.block_between([0, 0, 1], [1, 2, 0]);
        let b2 = h.block_between([0, 1, 1], [1, 1, 0]);
        assert_eq!(b1, b2);
        let p = random_vec(12 * 3, 2);
        let spec = spectrum(&circulant_embed(h.permuted_toeplitz()));
        let y = hankel_matvec(&spec, &h.permutation(), &p).unwrap();
        let dense = h.to_dense() * DVector::from_vec(p);
        assert!(rel_err(&y, dense.as_slice()) < 1e-13);
    }

    #[test]
    fn banded_matches_dense() {
        let counts = [4, 3, 1];
        let full = random_toeplitz(counts, 2, 5);
        let offsets = vec![[0, 0, 0], [1, 0, 0], [-1, 1, 0], [3, -2, 0]];
        let banded = BandedBlockToeplitz {
            counts,
            block_size: 2,
            blocks: offsets.iter().map(|o| full.block(*o).clone()).collect(),
            offsets: offsets.clone(),
        };
        let masked = BlockToeplitzMatrix::from_fn(counts, 2, |o| {
            Ok(if offsets.contains(&o) { full.block(o).clone() } else { Block::zeros(2, 2) })
        })
        .unwrap();
        let p = random_vec(24, 1);
        let y = banded.matvec(&p).unwrap();
        let d = masked.to_dense() * DVector::from_vec(p);
        assert!(rel_err(&y, d.as_slice()) < 1e-14);
    }

    #[test]
    fn storage_counts() {
        let t = random_toeplitz([5, 5, 1], 1, 0);
        assert_eq!(t.n_blocks(), 81);
        assert_eq!(t.storage_bytes(), 81 * 16);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn structured_equals_dense(
            mx in prop::sample::select(vec![1usize, 2, 3, 5]),
            my in prop::sample::select(vec![1usize, 2, 3, 5]),
            mz in prop::sample::select(vec![1usize, 2, 3]),
            b in 1usize..4,
            seed in 0u64..1000,
        ) {
            let counts = [mx, my, mz];
            let t = random_toeplitz(counts, b, seed);
            let n = mx * my * mz * b;
            let p = random_vec(n, seed + 1);
            let y = toeplitz_matvec(&spectrum(&circulant_embed(&t)), &p).unwrap();
            let d = t.to_dense() * DVector::from_vec(p.clone());
            prop_assert!(rel_err(&y, d.as_slice()) < 1e-12);

            let q = random_vec(n, seed + 2);
            let alpha = Complex64::new(0.3, -1.2);
            let spec = spectrum(&circulant_embed(&t));
            let combo: Vec<Complex64> = p.iter().zip(&q).map(|(a, b)| alpha * a + b).collect();
            let lhs = toeplitz_matvec(&spec, &combo).unwrap();
            let yq = toeplitz_matvec(&spec, &q).unwrap();
            let rhs: Vec<Complex64> = y.iter().zip(&yq).map(|(a, b)| alpha * a + b).collect();
            prop_assert!(rel_err(&lhs, &rhs) < 1e-13);
        }
    }
}
