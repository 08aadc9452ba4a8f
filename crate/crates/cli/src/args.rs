use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use shapestat::asymptotics::Calibration;
use shapestat::frusta::{GrowthMode, Scenario};
use shapestat::perturbation::ErrorShape;
use shapestat::{Rho, ShapeDistance};

use crate::io::Format;

#[derive(Parser, Debug, Clone, Serialize, Deserialize)]
#[command(name = "shapestat", version, about = "Fréchet means and inference on Kendall shape spaces")]
pub struct Cli {
    /// Directory receiving the output files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Add wall-clock columns to table outputs (makes them non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
pub enum Command {
    /// Fréchet ρ-mean of a landmark dataset.
    Mean(MeanArgs),
    /// One-sample test of a hypothesized mean shape.
    Test(TestArgs),
    /// Compatibility of the isotropic perturbation model (Goodall templates).
    Table1(TableArgs),
    /// Compatibility of the diffusion tensor perturbation model.
    Table2(Table2Args),
    /// Sampling distribution of the mean under the geodesic perturbation model.
    Cltfig(CltArgs),
    /// Bootstrap band for the distance of frusta to the cylinder geodesic.
    Frusta(FrustaArgs),
    /// Growth curves of elliptical-like frusta and their distance to the cylinders.
    Growth(GrowthArgs),
    /// Mean of diffusion tensors through the size-and-shape embedding.
    Dtmean(DtmeanArgs),
    /// Kent example: population mean, integrals and Hopf scatter.
    Kent(KentArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mean(_) => "mean",
            Command::Test(_) => "test",
            Command::Table1(_) => "table1",
            Command::Table2(_) => "table2",
            Command::Cltfig(_) => "cltfig",
            Command::Frusta(_) => "frusta",
            Command::Growth(_) => "growth",
            Command::Dtmean(_) => "dtmean",
            Command::Kent(_) => "kent",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Mean(a) => Some(a.solver.seed),
            Command::Table1(a) => Some(a.seed),
            Command::Table2(a) => Some(a.seed),
            Command::Cltfig(a) => Some(a.seed),
            Command::Frusta(a) => Some(a.seed),
            Command::Kent(a) => Some(a.seed),
            Command::Dtmean(a) => Some(a.solver.seed),
            Command::Test(_) | Command::Growth(_) | Command::Replay(_) => None,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhoArg {
    Full,
    Partial,
    Ziezold,
}

impl From<RhoArg> for Rho {
    fn from(r: RhoArg) -> Rho {
        match r {
            RhoArg::Full => Rho::FullProcrustes,
            RhoArg::Partial => Rho::PartialProcrustes,
            RhoArg::Ziezold => Rho::Ziezold,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricArg {
    Intrinsic,
    Procrustes,
    Ziezold,
}

impl From<MetricArg> for ShapeDistance {
    fn from(m: MetricArg) -> ShapeDistance {
        match m {
            MetricArg::Intrinsic => ShapeDistance::Intrinsic,
            MetricArg::Procrustes => ShapeDistance::Procrustes,
            MetricArg::Ziezold => ShapeDistance::Ziezold,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationArg {
    Hotelling,
    ChiSquare,
}

impl From<CalibrationArg> for Calibration {
    fn from(c: CalibrationArg) -> Calibration {
        match c {
            CalibrationArg::Hotelling => Calibration::HotellingF,
            CalibrationArg::ChiSquare => Calibration::ChiSquare,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorArg {
    /// Noise in every entry.
    Isotropic,
    /// Noise on and above the diagonal only.
    Upper,
}

impl From<ErrorArg> for ErrorShape {
    fn from(e: ErrorArg) -> ErrorShape {
        match e {
            ErrorArg::Isotropic => ErrorShape::IsotropicAll,
            ErrorArg::Upper => ErrorShape::UpperTriangularOnly,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioArg {
    /// Trees approach the cylinder until the change age, then depart.
    Competition,
    /// Trees approach the cylinder throughout.
    Free,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthArg {
    Uniform,
    Constant,
}

impl From<GrowthArg> for GrowthMode {
    fn from(g: GrowthArg) -> GrowthMode {
        match g {
            GrowthArg::Uniform => GrowthMode::UniformIncrement,
            GrowthArg::Constant => GrowthMode::ConstantShapeRatios,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Stop when the objective decreases by less than this.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Extra runs from random data points.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the tangent-space update for the full Procrustes mean.
    #[arg(long)]
    pub tangent: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct InputArgs {
    /// Landmark dataset (CSV or JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MeanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "full")]
    pub rho: RhoArg,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Dataset whose first object is the hypothesized mean.
    #[arg(long)]
    pub hypothesis: PathBuf,
    #[arg(long, value_enum, default_value = "full")]
    pub rho: RhoArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "hotelling")]
    pub calibration: CalibrationArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TableArgs {
    /// Sample size per replicate.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Number of replicates.
    #[arg(long = "N", default_value_t = 10)]
    pub big_n: usize,
    /// Noise levels for every template; defaults to the per-template levels.
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "full")]
    pub rho: RhoArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Table2Args {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long = "N", default_value_t = 10)]
    pub big_n: usize,
    /// Noise levels for every template.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
    pub sigma: Vec<f64>,
    #[arg(long, value_enum, default_value = "partial")]
    pub rho: RhoArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "upper")]
    pub error: ErrorArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CltArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
    /// Standard deviation of the geodesic parameter.
    #[arg(long, default_value_t = 0.1)]
    pub s_sd: f64,
    /// Additional isotropic noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FrustaArgs {
    /// Frustum dataset (age, tree, kappa, 6·kappa coordinates); synthetic when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub ages: usize,
    #[arg(long, default_value_t = 5)]
    pub trees: usize,
    #[arg(long, value_enum, default_value = "competition")]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 25.0)]
    pub change_age: f64,
    /// Bootstrap resamples.
    #[arg(long = "B", default_value_t = 200)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value = "intrinsic")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FrustaArgs {
    pub fn scenario(&self) -> Scenario {
        match self.scenario {
            ScenarioArg::Competition => Scenario::CompetitionOnset {
                change_age: self.change_age,
            },
            ScenarioArg::Free => Scenario::FreeGrowth,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GrowthArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub mode: GrowthArg,
    #[arg(long, default_value_t = 36)]
    pub kappa: usize,
    /// Starting ellipticity of both rings.
    #[arg(long, default_value_t = 1.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    pub taper: f64,
    #[arg(long, default_value_t = 0.05)]
    pub radius: f64,
    #[arg(long, default_value_t = 40)]
    pub steps: usize,
    /// Size added per step.
    #[arg(long, default_value_t = 0.25)]
    pub increment: f64,
    #[arg(long, value_enum, default_value = "intrinsic")]
    pub metric: MetricArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DtmeanArgs {
    /// Tensor CSV file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "partial")]
    pub rho: RhoArg,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct KentArgs {
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Compare the new outputs byte by byte with the recorded ones.
    #[arg(long)]
    pub verify: bool,
}
