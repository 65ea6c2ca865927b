//! Command-line surface. Every flag maps onto one [`RunConfig`] key; flags
//! override values loaded with `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "gaugekit", version, about = "Vector potentials, X-ray transforms and high-energy magnetic scattering")]
pub struct Cli {
    #[command(subcommand)]
    pub group: Group,
}

#[derive(Debug, Subcommand)]
pub enum Group {
    /// Catalog magnetic fields.
    #[command(subcommand)]
    Field(FieldCmd),
    /// Vector potentials and gauge functions.
    #[command(subcommand)]
    Gauge(GaugeCmd),
    /// X-ray transforms and their inversion.
    #[command(subcommand)]
    Xray(XrayCmd),
    /// Tomographic reconstruction of B and A0.
    #[command(subcommand)]
    Recon(ReconCmd),
    /// High-energy scattering phases and simulations.
    #[command(subcommand)]
    Scatter(ScatterCmd),
}

#[derive(Debug, Subcommand)]
pub enum FieldCmd {
    /// Sample a catalog field on a grid.
    Gen(FieldGen),
    /// Total flux of a grid file or a catalog field.
    Flux(FieldFlux),
}

#[derive(Debug, Subcommand)]
pub enum GaugeCmd {
    /// Sample a vector potential in the chosen gauge.
    Compute(GaugeCompute),
    /// Gauge function between two gauges and its radial limits.
    Lambda(GaugeLambda),
}

#[derive(Debug, Subcommand)]
pub enum XrayCmd {
    /// Sinogram of a grid file (scalar transform or potential line data).
    Forward(XrayForward),
    /// Filtered backprojection of a sinogram.
    Invert(Invert),
}

#[derive(Debug, Subcommand)]
pub enum ReconCmd {
    /// B from potential line data.
    B(Invert),
    /// A0 from synthetic high-energy limit data.
    A0(ReconA0),
}

#[derive(Debug, Subcommand)]
pub enum ScatterCmd {
    /// The phase a(ω, ·) on a transverse lattice.
    Phase(ScatterPhase),
    /// One boosted scattering run.
    Simulate(ScatterRun),
    /// Boosted scattering errors over a list of boosts.
    Study(ScatterRun),
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Tolerance of the command's check.
    #[arg(long)]
    pub tol: Option<f64>,
    /// `schrodinger` or `pauli`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Primary artifact; the report goes to `<out>.report.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run configuration to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct FieldSel {
    /// Catalog field name.
    #[arg(long)]
    pub field: Option<String>,
    /// Comma-separated field parameters.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FieldGen {
    /// Catalog field name.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    /// Grid shorthand `N:L` (N nodes per axis over extent L).
    #[arg(long)]
    pub grid: Option<String>,
    /// Also write `<out>.pgm` and `<out>.csv`.
    #[arg(long)]
    pub export: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct FieldFlux {
    /// Grid file holding a planar scalar field.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub field: FieldSel,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GaugeCompute {
    /// `transversal`, `griesinger`, `coulomb` or `adaptive:x,y`.
    #[arg(long)]
    pub gauge: Option<String>,
    #[command(flatten)]
    pub field: FieldSel,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub export: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GaugeLambda {
    /// Source gauge.
    #[arg(long)]
    pub gauge: Option<String>,
    /// Target gauge.
    #[arg(long)]
    pub gauge2: Option<String>,
    #[command(flatten)]
    pub field: FieldSel,
    /// Number of directions for the radial limits.
    #[arg(long)]
    pub directions: Option<usize>,
    /// Also sample λ on this grid and write it to `--out`.
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Default)]
pub struct Lattice {
    /// Number of projection angles over [0, π).
    #[arg(long)]
    pub angles: Option<usize>,
    /// Number of transverse offsets.
    #[arg(long)]
    pub offsets: Option<usize>,
    /// Offsets span [−half_width, half_width].
    #[arg(long)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Args)]
pub struct XrayForward {
    /// Grid file: one component for a scalar, two for a planar potential.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub lattice: Lattice,
    /// Standard deviation of added noise relative to the peak datum.
    #[arg(long)]
    pub noise: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Invert {
    /// Sinogram file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Reconstruction grid `N:L`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Catalog field to compare against.
    #[command(flatten)]
    pub field: FieldSel,
    #[arg(long)]
    pub export: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReconA0 {
    /// Magnetic field present in the limit data.
    #[command(flatten)]
    pub field: FieldSel,
    /// Reference gauge for a(ω, x).
    #[arg(long)]
    pub gauge: Option<String>,
    /// Gaussian A0 as `amplitude,width`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a0: Option<Vec<f64>>,
    /// Lab grid of the probe packet `N:L`.
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub lattice: Lattice,
    /// Probe width σ in exp(−|x|²/2σ²).
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub export: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ScatterPhase {
    #[command(flatten)]
    pub field: FieldSel,
    #[arg(long)]
    pub gauge: Option<String>,
    /// Second gauge; reports the constant phase shift between the two.
    #[arg(long)]
    pub gauge2: Option<String>,
    /// Direction angle in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub offsets: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ScatterRun {
    #[command(flatten)]
    pub field: FieldSel,
    #[arg(long)]
    pub gauge: Option<String>,
    /// Boost magnitudes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub u: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub mass: Option<f64>,
    /// Packet width σ.
    #[arg(long)]
    pub width: Option<f64>,
    /// Half-length of the interaction window.
    #[arg(long)]
    pub window: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

impl Common {
    fn apply(&self, c: &mut RunConfig) {
        c.tol = self.tol;
        c.mode.clone_from(&self.mode);
        c.out.clone_from(&self.out);
        c.seed = self.seed;
    }
}

impl FieldSel {
    fn apply(&self, c: &mut RunConfig) {
        c.field.clone_from(&self.field);
        c.params.clone_from(&self.params);
    }
}

impl Lattice {
    fn apply(&self, c: &mut RunConfig) {
        c.angles = self.angles;
        c.offsets = self.offsets;
        c.half_width = self.half_width;
    }
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl Group {
    /// The flags as a partial configuration, plus the `--config` path.
    pub fn to_config(&self) -> (RunConfig, Option<PathBuf>) {
        let (name, common): (&str, &Common) = match self {
            Group::Field(FieldCmd::Gen(a)) => ("field gen", &a.common),
            Group::Field(FieldCmd::Flux(a)) => ("field flux", &a.common),
            Group::Gauge(GaugeCmd::Compute(a)) => ("gauge compute", &a.common),
            Group::Gauge(GaugeCmd::Lambda(a)) => ("gauge lambda", &a.common),
            Group::Xray(XrayCmd::Forward(a)) => ("xray forward", &a.common),
            Group::Xray(XrayCmd::Invert(a)) => ("xray invert", &a.common),
            Group::Recon(ReconCmd::B(a)) => ("recon b", &a.common),
            Group::Recon(ReconCmd::A0(a)) => ("recon a0", &a.common),
            Group::Scatter(ScatterCmd::Phase(a)) => ("scatter phase", &a.common),
            Group::Scatter(ScatterCmd::Simulate(a)) => ("scatter simulate", &a.common),
            Group::Scatter(ScatterCmd::Study(a)) => ("scatter study", &a.common),
        };
        let mut c = RunConfig::new(name);
        common.apply(&mut c);
        match self {
            Group::Field(FieldCmd::Gen(a)) => {
                c.field.clone_from(&a.name);
                c.params.clone_from(&a.params);
                c.grid.clone_from(&a.grid);
                c.export = flag(a.export);
            }
            Group::Field(FieldCmd::Flux(a)) => {
                a.field.apply(&mut c);
                c.input.clone_from(&a.input);
            }
            Group::Gauge(GaugeCmd::Compute(a)) => {
                a.field.apply(&mut c);
                c.gauge.clone_from(&a.gauge);
                c.grid.clone_from(&a.grid);
                c.export = flag(a.export);
            }
            Group::Gauge(GaugeCmd::Lambda(a)) => {
                a.field.apply(&mut c);
                c.gauge.clone_from(&a.gauge);
                c.gauge2.clone_from(&a.gauge2);
                c.directions = a.directions;
                c.grid.clone_from(&a.grid);
            }
            Group::Xray(XrayCmd::Forward(a)) => {
                c.input.clone_from(&a.input);
                a.lattice.apply(&mut c);
                c.noise = a.noise;
            }
            Group::Xray(XrayCmd::Invert(a)) | Group::Recon(ReconCmd::B(a)) => {
                c.input.clone_from(&a.input);
                c.grid.clone_from(&a.grid);
                a.field.apply(&mut c);
                c.export = flag(a.export);
            }
            Group::Recon(ReconCmd::A0(a)) => {
                a.field.apply(&mut c);
                c.gauge.clone_from(&a.gauge);
                c.a0.clone_from(&a.a0);
                c.grid.clone_from(&a.grid);
                a.lattice.apply(&mut c);
                c.width = a.width;
                c.mass = a.mass;
                c.export = flag(a.export);
            }
            Group::Scatter(ScatterCmd::Phase(a)) => {
                a.field.apply(&mut c);
                c.gauge.clone_from(&a.gauge);
                c.gauge2.clone_from(&a.gauge2);
                c.theta = a.theta;
                c.offsets = a.offsets;
                c.half_width = a.half_width;
            }
            Group::Scatter(ScatterCmd::Simulate(a)) | Group::Scatter(ScatterCmd::Study(a)) => {
                a.field.apply(&mut c);
                c.gauge.clone_from(&a.gauge);
                c.u.clone_from(&a.u);
                c.theta = a.theta;
                c.grid.clone_from(&a.grid);
                c.mass = a.mass;
                c.width = a.width;
                c.window = a.window;
            }
        }
        (c, common.config.clone())
    }
}
