//! Perturbation models and Monte-Carlo compatibility experiments.
//!
//! A perturbation model adds noise to a template and asks whether the
//! Fréchet mean of the perturbed data recovers the template's shape. The
//! compatibility experiment compares the distance `d̂` of replicate means to
//! the template with their spread `σ̂`: `d̂ ≫ σ̂` flags a model whose mean
//! shape is not the template shape.
//!
//! The similarity nuisance parameters (scale, rotation, translation) of the
//! additive model are fixed to the identity in the samplers; every analysis
//! here quotients them out.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::difftensor::{tau_s, DiffusionTensor};
use crate::geometry::{align, normalized, sizeshape_distance_raw};
use crate::means::{frechet_mean, MeanConfig, MeanResult, Rho};
use crate::quadrature::adaptive_simpson;
use crate::rng::{stream_rng, StreamRng};
use crate::{Configuration, Landmarks, Mat, PreShape, Result, ShapeDistance, ShapeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationKind {
    /// `yᵢ = μ + εᵢ` on configurations.
    Goodall,
    /// `xᵢ = μ + sᵢν + εᵢ` along a direction `ν`.
    Geodesic,
    /// `aᵢ = (μ + εᵢ)ᵀ(μ + εᵢ)` on tensors.
    DiffTensor,
}

/// Which entries of the error matrix are random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ErrorShape {
    #[default]
    IsotropicAll,
    UpperTriangularOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Helmertized template, or the upper-triangular factor for tensors.
    pub mu: Mat,
    pub sigma: f64,
    pub error_shape: ErrorShape,
    /// Geodesic direction.
    pub nu: Option<Mat>,
    /// Standard deviation of the geodesic parameter `sᵢ`.
    pub s_sd: f64,
}

impl PerturbationSpec {
    pub fn goodall(mu: Mat, sigma: f64) -> Result<Self> {
        let spec = Self {
            kind: PerturbationKind::Goodall,
            mu,
            sigma,
            error_shape: ErrorShape::IsotropicAll,
            nu: None,
            s_sd: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn geodesic(mu: Mat, nu: Mat, s_sd: f64, sigma: f64) -> Result<Self> {
        let spec = Self {
            kind: PerturbationKind::Geodesic,
            mu,
            sigma,
            error_shape: ErrorShape::IsotropicAll,
            nu: Some(nu),
            s_sd,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn diff_tensor(mu: Mat, sigma: f64, error_shape: ErrorShape) -> Result<Self> {
        let spec = Self {
            kind: PerturbationKind::DiffTensor,
            mu,
            sigma,
            error_shape,
            nu: None,
            s_sd: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(ShapeError::InvalidSpec(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        match self.kind {
            PerturbationKind::Goodall => {
                Configuration::new(self.mu.clone())?;
            }
            PerturbationKind::Geodesic => {
                Configuration::new(self.mu.clone())?;
                let nu = self
                    .nu
                    .as_ref()
                    .ok_or_else(|| ShapeError::InvalidSpec("geodesic model needs nu".into()))?;
                if nu.shape() != self.mu.shape() {
                    return Err(ShapeError::DimensionMismatch {
                        expected: format!("{}x{}", self.mu.nrows(), self.mu.ncols()),
                        got: format!("{}x{}", nu.nrows(), nu.ncols()),
                    });
                }
                if !(self.s_sd >= 0.0) || !self.s_sd.is_finite() {
                    return Err(ShapeError::InvalidSpec("s_sd must be nonnegative".into()));
                }
                check_local_optimal_position(&self.mu, nu)?;
            }
            PerturbationKind::DiffTensor => {
                let m = self.mu.nrows();
                if m < 2 || self.mu.ncols() != m {
                    return Err(ShapeError::InvalidSpec(
                        "tensor template must be square with m >= 2".into(),
                    ));
                }
                DiffusionTensor::new(self.mu.transpose() * &self.mu)?;
            }
        }
        Ok(())
    }

    /// Template as a shape-space or tensor point for distance bookkeeping.
    fn reference(&self) -> Result<Mat> {
        match self.kind {
            PerturbationKind::DiffTensor => {
                let a = DiffusionTensor::new(self.mu.transpose() * &self.mu)?;
                Ok(tau_s(&a)?.rep().entries().clone())
            }
            _ => Ok(self.mu.clone()),
        }
    }
}

/// `μ + sν` must pass through `μ` in optimal position: the optimal rotation
/// between `γ(δ)` and `γ(−δ)` for a small `δ` is the identity.
fn check_local_optimal_position(mu: &Mat, nu: &Mat) -> Result<()> {
    let nn = nu.norm();
    if nn == 0.0 {
        return Err(ShapeError::InvalidSpec("nu must be nonzero".into()));
    }
    let delta = 1e-3 * mu.norm() / nn;
    let plus = mu + nu * delta;
    let minus = mu - nu * delta;
    let (g, _) = align(&minus, &plus);
    let defect = (g - Mat::identity(mu.nrows(), mu.nrows())).amax();
    if defect > 1e-8 {
        return Err(ShapeError::InvalidSpec(format!(
            "mu and nu are not in optimal position (rotation defect {defect:e})"
        )));
    }
    Ok(())
}

/// Draws from a perturbation model.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Shapes(Vec<PreShape>),
    Tensors(Vec<DiffusionTensor>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Shapes(v) => v.len(),
            Samples::Tensors(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Configurations seen by the mean solvers: pre-shapes, or `τ_s` of the
    /// tensors.
    pub fn configurations(&self) -> Result<Vec<Configuration>> {
        match self {
            Samples::Shapes(v) => Ok(v.iter().map(|p| p.as_configuration()).collect()),
            Samples::Tensors(v) => v
                .iter()
                .map(|t| Ok(tau_s(t)?.rep().clone()))
                .collect(),
        }
    }
}

fn noise(rng: &mut StreamRng, rows: usize, cols: usize, sigma: f64, shape: ErrorShape) -> Mat {
    Mat::from_fn(rows, cols, |i, j| {
        if shape == ErrorShape::UpperTriangularOnly && i > j {
            0.0
        } else {
            sigma * rng.sample::<f64, _>(StandardNormal)
        }
    })
}

/// Draw `n` observations from `spec`.
pub fn sample(spec: &PerturbationSpec, n: usize, rng: &mut StreamRng) -> Result<Samples> {
    spec.validate()?;
    if n == 0 {
        return Err(ShapeError::TooFewData { needed: 1, got: 0 });
    }
    let (rows, cols) = spec.mu.shape();
    match spec.kind {
        PerturbationKind::Goodall | PerturbationKind::Geodesic => {
            let s_dist = Normal::new(0.0, spec.s_sd).expect("validated");
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut x = spec.mu.clone();
                if let Some(nu) = &spec.nu {
                    x += nu * s_dist.sample(rng);
                }
                x += noise(rng, rows, cols, spec.sigma, spec.error_shape);
                out.push(PreShape::from_unit(normalized(&x)?)?);
            }
            Ok(Samples::Shapes(out))
        }
        PerturbationKind::DiffTensor => {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let x = &spec.mu + noise(rng, rows, cols, spec.sigma, spec.error_shape);
                out.push(DiffusionTensor::new(x.transpose() * &x)?);
            }
            Ok(Samples::Tensors(out))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// Root mean squared distance of the replicate means to the template.
    pub d_hat: f64,
    /// Root mean squared distance of the replicate means to their own mean.
    pub sigma_hat: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub rho: Rho,
    pub seed: u64,
    /// Mean solver iterations summed over all replicates.
    pub iterations: usize,
}

fn report_distance(rho: Rho, a: &Mat, b: &Mat) -> f64 {
    if rho.is_shape() {
        let c = align(a, b).1 / (a.norm() * b.norm());
        ShapeDistance::Procrustes.from_inner(c)
    } else {
        sizeshape_distance_raw(a, b)
    }
}

/// One replicate of the compatibility experiment: `n` draws and their mean.
pub fn replicate_mean(
    spec: &PerturbationSpec,
    n: usize,
    cfg: &MeanConfig,
    seed: u64,
    replicate: u64,
) -> Result<MeanResult> {
    let mut rng = stream_rng(seed, replicate);
    let data = sample(spec, n, &mut rng)?.configurations()?;
    let res = frechet_mean(&data, cfg).map_err(|e| ShapeError::SolverFailure {
        replicate: replicate as usize,
        reason: e.to_string(),
    })?;
    if !res.converged {
        return Err(ShapeError::SolverFailure {
            replicate: replicate as usize,
            reason: format!("no convergence after {} iterations", res.iterations),
        });
    }
    Ok(res)
}

/// Estimate `d̂⁽ⁿ'ᴺ⁾` and `σ̂⁽ⁿ'ᴺ⁾` from `N` replicate means of `n` draws.
///
/// Replicate `j` uses random stream `j` of `seed`. Shape losses report the
/// full Procrustes distance, the partial loss the size-and-shape distance;
/// for tensors the template is `τ_s(μᵀμ)`.
pub fn compatibility_experiment(
    spec: &PerturbationSpec,
    n: usize,
    big_n: usize,
    rho: Rho,
    seed: u64,
) -> Result<CompatibilityReport> {
    if n < 2 || big_n < 2 {
        return Err(ShapeError::InvalidArgument("need n >= 2 and N >= 2".into()));
    }
    spec.validate()?;
    let cfg = MeanConfig::new(rho);
    let means: Vec<MeanResult> = (0..big_n as u64)
        .into_par_iter()
        .map(|j| replicate_mean(spec, n, &cfg, seed, j))
        .collect::<Result<_>>()?;
    let reference = spec.reference()?;
    let reps: Vec<Configuration> = means.iter().map(|r| r.mean.clone()).collect();
    let grand = frechet_mean(&reps, &cfg).map_err(|e| ShapeError::SolverFailure {
        replicate: big_n,
        reason: e.to_string(),
    })?;
    if !grand.converged {
        return Err(ShapeError::SolverFailure {
            replicate: big_n,
            reason: "mean of replicate means did not converge".into(),
        });
    }
    let nn = big_n as f64;
    let d_hat = (reps
        .iter()
        .map(|r| report_distance(rho, r.entries(), &reference).powi(2))
        .sum::<f64>()
        / nn)
        .sqrt();
    let sigma_hat = (reps
        .iter()
        .map(|r| report_distance(rho, r.entries(), grand.mean.entries()).powi(2))
        .sum::<f64>()
        / nn)
        .sqrt();
    Ok(CompatibilityReport {
        d_hat,
        sigma_hat,
        n,
        big_n,
        rho,
        seed,
        iterations: means.iter().map(|r| r.iterations).sum(),
    })
}

/// Which of the two candidate shapes is the population Procrustes mean of
/// the planar Kent example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KentShape {
    /// The template shape.
    Top,
    /// The shape of the error direction.
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KentMean {
    pub shape: KentShape,
    /// `E(1/(1+η²t²))` and `η² E(t²/(1+η²t²))` for standard normal `t`.
    pub eigenvalues: (f64, f64),
}

const KENT_RANGE: f64 = 12.0;
const KENT_TOL: f64 = 1e-10;

fn normal_density(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// The two diagonal entries of the population complex second-moment matrix.
///
/// Integrated over `|t| ≤ 12`; both integrands are bounded by the normal
/// density, whose mass beyond 12 is below `1e-32`.
pub fn kent_integrals(eta: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(ShapeError::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let e2 = eta * eta;
    let first = 2.0 * adaptive_simpson(|t| normal_density(t) / (1.0 + e2 * t * t), 0.0, KENT_RANGE, KENT_TOL / 2.0);
    let second = 2.0
        * adaptive_simpson(
            |t| normal_density(t) * e2 * t * t / (1.0 + e2 * t * t),
            0.0,
            KENT_RANGE,
            KENT_TOL / 2.0,
        );
    Ok((first, second))
}

/// Population full Procrustes mean of the Kent example at error level `eta`.
pub fn kent_population_mean(eta: f64) -> Result<KentMean> {
    let (a, b) = kent_integrals(eta)?;
    let gap = (a - b).abs();
    if gap < 1e-12 {
        return Err(ShapeError::NonUniqueMean { gap });
    }
    Ok(KentMean {
        shape: if a > b { KentShape::Top } else { KentShape::Bottom },
        eigenvalues: (a, b),
    })
}

/// Error level where the population mean switches from top to bottom,
/// found by bisection on `[0.01, 100]` to width `1e-8`.
pub fn kent_critical_eta() -> Result<f64> {
    let f = |eta: f64| kent_integrals(eta).map(|(a, _)| a - 0.5);
    let (mut lo, mut hi) = (0.01, 100.0);
    if f(lo)? <= 0.0 || f(hi)? >= 0.0 {
        return Err(ShapeError::InvalidArgument("critical eta not bracketed".into()));
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Image of a planar triangle pre-shape on the sphere of radius 1/2.
///
/// With `α₁, α₂` the Helmertized landmarks read as complex numbers the map
/// is `(Re α₁ᾱ₂, Im α₁ᾱ₂, (|α₁|² − |α₂|²)/2)`.
pub fn hopf_coordinates(z: &PreShape) -> Result<[f64; 3]> {
    let x = z.matrix();
    if x.nrows() != 2 || x.ncols() != 2 {
        return Err(ShapeError::InvalidDimension(format!(
            "Hopf coordinates need m = 2, k = 3, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let (a1r, a1i, a2r, a2i) = (x[(0, 0)], x[(1, 0)], x[(0, 1)], x[(1, 1)]);
    // α₁ ᾱ₂ = (a1r + i a1i)(a2r − i a2i)
    let re = a1r * a2r + a1i * a2i;
    let im = a1i * a2r - a1r * a2i;
    let h = 0.5 * (a1r * a1r + a1i * a1i - a2r * a2r - a2i * a2i);
    Ok([re, im, h])
}

/// Kent example pre-shape for error value `eta · t`: Helmertized landmarks
/// `(1, η t)` normalized.
pub fn kent_preshape(eta_t: f64) -> PreShape {
    let x = Mat::from_row_slice(2, 2, &[1.0, eta_t, 0.0, 0.0]);
    PreShape::from_unit(normalized(&x).expect("first landmark is 1")).expect("normalized")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KentScatter {
    pub eta: f64,
    pub points: Vec<[f64; 3]>,
    /// Hopf image of the full Procrustes sample mean.
    pub mean_marker: [f64; 3],
}

/// Sample the Kent example and map data and sample mean to the sphere.
pub fn kent_shape_scatter(eta: f64, n: usize, seed: u64) -> Result<KentScatter> {
    if !(eta > 0.0) {
        return Err(ShapeError::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let mut rng = stream_rng(seed, 0);
    let data: Vec<PreShape> = (0..n)
        .map(|_| kent_preshape(eta * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let points = data.iter().map(hopf_coordinates).collect::<Result<_>>()?;
    let mean = crate::means::full_procrustes_mean(&data, &MeanConfig::default())?;
    let marker = hopf_coordinates(&mean.shape_point().rep().clone())?;
    Ok(KentScatter {
        eta,
        points,
        mean_marker: marker,
    })
}
