//! Scene file schema and its resolution into a solver problem.
//!
//! ```toml
//! method = "fmpbem"
//!
//! [medium]
//! c = 343.0
//! rho = 1.2
//!
//! [geometry]
//! kind = "sphere"          # sphere | wall | mesh
//! radius = 0.1
//! refinement = 4
//!
//! [lattice]
//! counts = [5, 5, 1]
//! pitch = [0.35, 0.35, 0.35]
//!
//! [[sources]]
//! kind = "plane_wave"
//! direction = [1.0, 0.0, 0.0]
//! amplitude = 1.0
//!
//! [sweep]
//! f_min = 500.0
//! f_max = 500.0
//! count = 1
//! ```

use std::path::{Path, PathBuf};

use fmpbem::fmm::FmmConfig;
use fmpbem::geometry::{generate_sphere_mesh, HalfSpace, Lattice, MirrorPlane, SurfaceMesh};
use fmpbem::kernels::IncidentField;
use fmpbem::pipeline::{Method, Problem};
use fmpbem::postproc::ObservationGrid;
use fmpbem::scenes::BarrierLayout;
use fmpbem::solver::GmresConfig;
use fmpbem::{Complex64, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default)]
    pub medium: Medium,
    pub geometry: Geometry,
    #[serde(default)]
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub half_space: Option<HalfSpaceSpec>,
    pub sources: Vec<SourceSpec>,
    pub sweep: Sweep,
    #[serde(default)]
    pub fmm: FmmSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub benchmark: BenchmarkSpec,
}

fn default_method() -> String {
    "fmpbem".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medium {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_c() -> f64 {
    343.0
}

fn default_rho() -> f64 {
    1.2
}

impl Default for Medium {
    fn default() -> Self {
        Self { c: default_c(), rho: default_rho() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Sphere {
        radius: f64,
        #[serde(default = "default_refinement")]
        refinement: usize,
        #[serde(default)]
        center: [f64; 3],
    },
    Wall {
        #[serde(default = "default_wall_x")]
        x: f64,
        #[serde(default = "default_thickness")]
        thickness: f64,
        #[serde(default = "default_cell_size")]
        cell_size: f64,
        #[serde(default = "default_divisions")]
        divisions: usize,
    },
    Mesh {
        path: PathBuf,
    },
}

fn default_refinement() -> usize {
    4
}

fn default_wall_x() -> f64 {
    BarrierLayout::default().wall_x
}

fn default_thickness() -> f64 {
    BarrierLayout::default().thickness
}

fn default_cell_size() -> f64 {
    BarrierLayout::default().cell_size
}

fn default_divisions() -> usize {
    BarrierLayout::default().divisions
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    #[serde(default = "default_counts")]
    pub counts: [usize; 3],
    #[serde(default)]
    pub pitch: [f64; 3],
}

fn default_counts() -> [usize; 3] {
    [1, 1, 1]
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self { counts: default_counts(), pitch: [0.0; 3] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceSpec {
    /// `x`, `y` or `z`.
    pub axis: String,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "default_rp")]
    pub rp: f64,
    #[serde(default)]
    pub rp_im: f64,
}

fn default_rp() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    PlaneWave {
        direction: [f64; 3],
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    Monopole {
        position: [f64; 3],
        #[serde(default = "default_amplitude")]
        strength: f64,
    },
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub f_min: f64,
    pub f_max: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Frequencies solved at the same time.
    #[serde(default = "default_parallel")]
    pub parallel: usize,
}

fn default_count() -> usize {
    1
}

fn default_parallel() -> usize {
    1
}

impl Sweep {
    pub fn frequencies(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.f_min];
        }
        (0..self.count).map(|i| self.f_min + (self.f_max - self.f_min) * i as f64 / (self.count - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FmmSpec {
    #[serde(default = "default_nt")]
    pub nt: usize,
}

fn default_nt() -> usize {
    FmmConfig::default().nt
}

impl Default for FmmSpec {
    fn default() -> Self {
        Self { nt: default_nt() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_restart")]
    pub restart: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Memory cap for stored matrices in bytes.
    #[serde(default = "default_memory_cap")]
    pub memory_cap: u64,
}

fn default_tol() -> f64 {
    GmresConfig::default().tol
}

fn default_restart() -> usize {
    GmresConfig::default().restart
}

fn default_max_iter() -> usize {
    GmresConfig::default().max_iter
}

fn default_memory_cap() -> u64 {
    fmpbem::assembly::DEFAULT_MEMORY_CAP
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tol: default_tol(), restart: default_restart(), max_iter: default_max_iter(), memory_cap: default_memory_cap() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub counts: [usize; 3],
}

impl GridSpec {
    pub fn grid(&self, label: &str) -> Result<ObservationGrid, CliError> {
        Ok(ObservationGrid::uniform(label, Vec3::from(self.min), Vec3::from(self.max), self.counts)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Observation region for the insertion loss.
    #[serde(default)]
    pub il_grid: Option<GridSpec>,
    /// Points written to `field_<f>.csv`.
    #[serde(default)]
    pub field_grid: Option<GridSpec>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("output")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { directory: default_directory(), il_grid: None, field_grid: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    /// Lattice axis whose count is varied: `x`, `y` or `z`.
    #[serde(default = "default_bench_axis")]
    pub axis: String,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_bench_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
}

fn default_bench_axis() -> String {
    "y".into()
}

fn default_sizes() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

fn default_bench_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.to_string()).collect()
}

fn default_reps() -> usize {
    10
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self { axis: default_bench_axis(), sizes: default_sizes(), methods: default_bench_methods(), repetitions: default_reps() }
    }
}

pub fn parse_axis(s: &str) -> Result<usize, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "x" | "0" => Ok(0),
        "y" | "1" => Ok(1),
        "z" | "2" => Ok(2),
        other => Err(CliError::Scene(format!("axis must be x, y or z, got '{other}'"))),
    }
}

impl Scene {
    /// Reads and validates a scene file; relative mesh paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Scene(format!("cannot read {}: {e}", path.display())))?;
        let mut scene = Self::parse(&text).map_err(|e| match e {
            CliError::Scene(m) => CliError::Scene(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Geometry::Mesh { path: mesh } = &mut scene.geometry {
            if mesh.is_relative() {
                if let Some(dir) = path.parent() {
                    *mesh = dir.join(&*mesh);
                }
            }
        }
        Ok(scene)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let scene: Scene = toml::from_str(text).map_err(|e| CliError::Scene(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.method()?;
        let s = &self.sweep;
        if !(s.f_min > 0.0) || s.f_max < s.f_min {
            return Err(CliError::Scene(format!("sweep: need 0 < f_min <= f_max, got {} and {}", s.f_min, s.f_max)));
        }
        if s.count == 0 || s.parallel == 0 {
            return Err(CliError::Scene("sweep: count and parallel must be at least 1".into()));
        }
        if self.sources.is_empty() {
            return Err(CliError::Scene("sources: at least one source is required".into()));
        }
        FmmConfig::new(self.fmm.nt).map_err(|e| CliError::Scene(format!("fmm.nt: {e}")))?;
        self.gmres().validate().map_err(|e| CliError::Scene(format!("solver: {e}")))?;
        if let Some(hs) = &self.half_space {
            parse_axis(&hs.axis)?;
        }
        parse_axis(&self.benchmark.axis)?;
        for m in &self.benchmark.methods {
            m.parse::<Method>().map_err(|e| CliError::Scene(format!("benchmark.methods: {e}")))?;
        }
        Ok(())
    }

    pub fn method(&self) -> Result<Method, CliError> {
        self.method.parse::<Method>().map_err(|e| CliError::Scene(format!("method: {e}")))
    }

    fn gmres(&self) -> GmresConfig {
        GmresConfig { tol: self.solver.tol, restart: self.solver.restart, max_iter: self.solver.max_iter }
    }

    pub fn cell(&self) -> Result<SurfaceMesh, CliError> {
        Ok(match &self.geometry {
            Geometry::Sphere { radius, refinement, center } => generate_sphere_mesh(*radius, *refinement)?.translated(&Vec3::from(*center)),
            Geometry::Wall { x, thickness, cell_size, divisions } => {
                BarrierLayout { wall_x: *x, thickness: *thickness, cell_size: *cell_size, divisions: *divisions, ..BarrierLayout::default() }
                    .cell()?
            }
            Geometry::Mesh { path } => SurfaceMesh::read(path).map_err(|e| CliError::Scene(format!("geometry.path {}: {e}", path.display())))?,
        })
    }

    pub fn half_space(&self) -> Result<Option<HalfSpace>, CliError> {
        self.half_space
            .as_ref()
            .map(|h| -> Result<HalfSpace, CliError> {
                Ok(HalfSpace { plane: MirrorPlane::new(parse_axis(&h.axis)?, h.offset)?, rp: Complex64::new(h.rp, h.rp_im) })
            })
            .transpose()
    }

    /// The solver problem with lattice counts replaced by `counts`.
    pub fn problem_with_counts(&self, counts: [usize; 3]) -> Result<Problem, CliError> {
        let lattice = Lattice::new(counts, self.lattice.pitch)?;
        let fields = self
            .sources
            .iter()
            .map(|s| match s {
                SourceSpec::PlaneWave { direction, amplitude } => IncidentField::plane_wave(Vec3::from(*direction), *amplitude),
                SourceSpec::Monopole { position, strength } => Ok(IncidentField::monopole(Vec3::from(*position), *strength)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut p = Problem::new(self.cell()?, lattice, fields).with_half_space(self.half_space()?);
        p.c = self.medium.c;
        p.rho = self.medium.rho;
        p.fmm = FmmConfig::new(self.fmm.nt)?;
        p.solver = self.gmres();
        p.memory_cap = self.solver.memory_cap;
        Ok(p)
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        self.problem_with_counts(self.lattice.counts)
    }
}
