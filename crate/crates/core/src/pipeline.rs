//! Backend selection and the per-frequency assemble/solve step.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::assembly::{assemble_dense, assemble_periodic_toeplitz, assemble_rhs, dense_bytes, DEFAULT_MEMORY_CAP};
use crate::error::{Error, Result};
use crate::fmm::{assemble_periodic_fmm, FmmConfig, FmmOperators};
use crate::geometry::{replicate_lattice, HalfSpace, Lattice, SurfaceMesh};
use crate::kernels::{IncidentField, WaveContext};
use crate::solver::{gmres, GmresConfig, SolveReport};
use crate::structured::{circulant_embed, hankel_matvec, spectrum, toeplitz_matvec, CirculantSpectrum, PermutationMap};

/// Solution backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dense,
    Pbem,
    Fmpbem,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dense, Method::Pbem, Method::Fmpbem];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Pbem => "pbem",
            Method::Fmpbem => "fmpbem",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" | "bem" => Ok(Method::Dense),
            "pbem" => Ok(Method::Pbem),
            "fmpbem" | "fmm" => Ok(Method::Fmpbem),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}' (expected dense, pbem or fmpbem)"))),
        }
    }
}

/// A system matrix available through its action on vectors.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, p: &[Complex64]) -> Result<Vec<Complex64>>;
    /// Bytes held by the operator's stored coefficients.
    fn storage_bytes(&self) -> usize;
}

/// Fully assembled matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<Complex64>,
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, p: &[Complex64]) -> Result<Vec<Complex64>> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        Ok((&self.matrix * DVector::from_column_slice(p)).as_slice().to_vec())
    }

    fn storage_bytes(&self) -> usize {
        self.matrix.len() * std::mem::size_of::<Complex64>()
    }
}

/// Block-Toeplitz system `T` (plus the Hankel part `T_hat`) held as circulant spectra.
#[derive(Debug, Clone)]
pub struct PbemOperator {
    pub toeplitz: CirculantSpectrum,
    pub hankel: Option<(CirculantSpectrum, PermutationMap)>,
    n: usize,
}

impl PbemOperator {
    pub fn assemble(cell: &SurfaceMesh, lattice: &Lattice, ctx: &WaveContext, hs: Option<&HalfSpace>) -> Result<Self> {
        let sys = assemble_periodic_toeplitz(cell, lattice, ctx, hs)?;
        let toeplitz = spectrum(&circulant_embed(&sys.toeplitz));
        let hankel = sys.hankel.map(|h| (spectrum(&circulant_embed(h.permuted_toeplitz())), h.permutation()));
        Ok(Self { toeplitz, hankel, n: lattice.n_cells() * cell.len() })
    }
}

impl LinearOperator for PbemOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, p: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut y = toeplitz_matvec(&self.toeplitz, p)?;
        if let Some((spec, perm)) = &self.hankel {
            for (a, b) in y.iter_mut().zip(hankel_matvec(spec, perm, p)?) {
                *a += b;
            }
        }
        Ok(y)
    }

    fn storage_bytes(&self) -> usize {
        self.toeplitz.storage_bytes() + self.hankel.as_ref().map_or(0, |(s, _)| s.storage_bytes())
    }
}

impl LinearOperator for FmmOperators {
    fn dim(&self) -> usize {
        FmmOperators::dim(self)
    }

    fn apply(&self, p: &[Complex64]) -> Result<Vec<Complex64>> {
        self.matvec(p)
    }

    fn storage_bytes(&self) -> usize {
        FmmOperators::storage_bytes(self)
    }
}

/// A periodic scattering problem independent of frequency.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cell: SurfaceMesh,
    pub lattice: Lattice,
    pub half_space: Option<HalfSpace>,
    pub fields: Vec<IncidentField>,
    /// Speed of sound in m/s.
    pub c: f64,
    /// Density in kg/m^3.
    pub rho: f64,
    pub fmm: FmmConfig,
    pub solver: GmresConfig,
    pub memory_cap: u64,
}

impl Problem {
    pub fn new(cell: SurfaceMesh, lattice: Lattice, fields: Vec<IncidentField>) -> Self {
        Self {
            cell,
            lattice,
            half_space: None,
            fields,
            c: 343.0,
            rho: 1.2,
            fmm: FmmConfig::default(),
            solver: GmresConfig::default(),
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }

    pub fn with_half_space(mut self, hs: Option<HalfSpace>) -> Self {
        self.half_space = hs;
        self
    }

    pub fn context(&self, f: f64) -> Result<WaveContext> {
        WaveContext::new(f, self.c, self.rho)
    }

    /// Incident fields including their reflection in the half-space plane.
    pub fn incident_fields(&self) -> Vec<IncidentField> {
        self.fields.iter().map(|f| f.with_half_space(self.half_space)).collect()
    }

    /// The full array mesh.
    pub fn mesh(&self) -> Result<SurfaceMesh> {
        replicate_lattice(&self.cell, &self.lattice)
    }

    pub fn n_dof(&self) -> usize {
        self.cell.len() * self.lattice.n_cells()
    }

    /// Assembles the operator of `method` at wave context `ctx`.
    pub fn operator(&self, method: Method, ctx: &WaveContext) -> Result<Box<dyn LinearOperator>> {
        let hs = self.half_space.as_ref();
        match method {
            Method::Dense => {
                let mesh = self.mesh()?;
                let sys = assemble_dense(&mesh, ctx, &[], hs, self.memory_cap)?;
                Ok(Box::new(DenseOperator { matrix: sys.a }))
            }
            Method::Pbem => {
                let blocks: u64 = self.lattice.counts.iter().map(|&m| 2 * m as u64 - 1).product();
                let b = self.cell.len() as u64;
                let factor = if hs.is_some() { 2 } else { 1 };
                let requested = factor * blocks * b * b * 16 * 4;
                if requested > self.memory_cap {
                    return Err(Error::MemoryCap { requested, cap: self.memory_cap });
                }
                Ok(Box::new(PbemOperator::assemble(&self.cell, &self.lattice, ctx, hs)?))
            }
            Method::Fmpbem => Ok(Box::new(assemble_periodic_fmm(&self.cell, &self.lattice, ctx, &self.fmm, hs)?)),
        }
    }

    /// Right-hand side at `ctx`.
    pub fn rhs(&self, ctx: &WaveContext) -> Result<DVector<Complex64>> {
        assemble_rhs(&self.mesh()?, ctx, &self.incident_fields())
    }
}

/// Surface solution at one frequency with timings.
#[derive(Debug, Clone)]
pub struct FrequencySolution {
    pub frequency: f64,
    pub ctx: WaveContext,
    pub report: SolveReport,
    pub assembly_s: f64,
    pub solve_s: f64,
    pub storage_bytes: usize,
}

/// Assembles and solves the problem at frequency `f` with `method`.
pub fn solve_frequency(problem: &Problem, method: Method, f: f64) -> Result<FrequencySolution> {
    let ctx = problem.context(f)?;
    if method == Method::Dense {
        let requested = dense_bytes(problem.n_dof());
        if requested > problem.memory_cap {
            return Err(Error::MemoryCap { requested, cap: problem.memory_cap });
        }
    }
    let t0 = Instant::now();
    let op = problem.operator(method, &ctx)?;
    let rhs = problem.rhs(&ctx)?;
    let assembly_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let report = gmres(|v| op.apply(v), rhs.as_slice(), &problem.solver)?;
    let solve_s = t1.elapsed().as_secs_f64();
    if !report.converged {
        log::warn!("{method} at {f} Hz stopped at relative residual {:.3e} after {} iterations", report.final_residual(), report.iterations);
    }
    Ok(FrequencySolution { frequency: f, ctx, report, assembly_s, solve_s, storage_bytes: op.storage_bytes() })
}

/// Assembly time, one matrix-vector product time and stored bytes of a backend.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: Method,
    pub n_cells: usize,
    pub n_dof: usize,
    pub assembly_s: f64,
    /// Fastest of the repeated products.
    pub matvec_s: f64,
    pub memory_bytes: usize,
}

/// Times assembly once and the matrix-vector product `reps` times.
pub fn benchmark(problem: &Problem, method: Method, f: f64, reps: usize) -> Result<BenchmarkRow> {
    let ctx = problem.context(f)?;
    let t0 = Instant::now();
    let op = problem.operator(method, &ctx)?;
    let assembly_s = t0.elapsed().as_secs_f64();
    let x: Vec<Complex64> = (0..op.dim()).map(|i| Complex64::new((0.37 * i as f64).sin(), (0.11 * i as f64).cos())).collect();
    let mut matvec_s = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        let y = op.apply(&x)?;
        matvec_s = matvec_s.min(t.elapsed().as_secs_f64());
        std::hint::black_box(y);
    }
    Ok(BenchmarkRow {
        method,
        n_cells: problem.lattice.n_cells(),
        n_dof: op.dim(),
        assembly_s,
        matvec_s,
        memory_bytes: op.storage_bytes(),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidConfig("slope fit needs at least two paired samples".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("slope fit needs positive samples".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("slope fit needs distinct sizes".into()));
    }
    Ok(sxy / sxx)
}
