//! Elliptical-like frusta, the cylinder geodesic and bootstrap bands for the
//! distance of mean shapes to that geodesic.
//!
//! A frustum is two parallel elliptical-like rings of `κ` landmarks at unit
//! height separation. With ring directions `a, b ∈ ℝ^κ` the raw `3 × 2κ`
//! landmark matrix is
//!
//! ```text
//! [ r a    | r t a    ]
//! [ r α b  | r β t b  ]
//! [ 0      | 1        ]
//! ```
//!
//! Cylinders (`α = β = t = 1`) of all radii lie on one great circle of shape
//! space, the cylinder geodesic.

use rand::Rng;
use rand_distr::{LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{align, center, normalized, to_preshape};
use crate::means::{full_procrustes_mean, MeanConfig};
use crate::rng::{nested_stream, stream_rng};
use crate::stats::percentile_sorted;
use crate::{Landmarks, Mat, PreShape, Result, ShapeDistance, ShapeError, ShapePoint};

/// Tolerance on the orthogonality of `a`, `b` and the all-ones vector.
pub const BASIS_TOL: f64 = 1e-10;
const GRID_POINTS: usize = 128;
const GOLDEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrustumParams {
    pub kappa: usize,
    /// Ellipticality of the bottom ring.
    pub alpha: f64,
    /// Ellipticality of the top ring.
    pub beta: f64,
    /// Mean radius.
    pub r: f64,
    /// Tapering: top radius over bottom radius.
    pub t: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// `a_j = cos(2πj/κ)`, `b_j = sin(2πj/κ)` for `j = 1..=κ`.
pub fn default_ring_vectors(kappa: usize) -> (Vec<f64>, Vec<f64>) {
    let step = 2.0 * std::f64::consts::PI / kappa as f64;
    let a = (1..=kappa).map(|j| (step * j as f64).cos()).collect();
    let b = (1..=kappa).map(|j| (step * j as f64).sin()).collect();
    (a, b)
}

impl FrustumParams {
    /// Frustum with the default circular ring vectors.
    pub fn new(kappa: usize, alpha: f64, beta: f64, r: f64, t: f64) -> Result<Self> {
        if kappa < 3 {
            return Err(ShapeError::InvalidArgument(format!("kappa must be >= 3, got {kappa}")));
        }
        let (a, b) = default_ring_vectors(kappa);
        Self::with_vectors(alpha, beta, r, t, a, b)
    }

    pub fn with_vectors(alpha: f64, beta: f64, r: f64, t: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let p = Self {
            kappa: a.len(),
            alpha,
            beta,
            r,
            t,
            a,
            b,
        };
        p.validate()?;
        Ok(p)
    }

    /// Cylinder of radius `r`.
    pub fn cylinder(kappa: usize, r: f64) -> Result<Self> {
        Self::new(kappa, 1.0, 1.0, r, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa < 3 || self.a.len() != self.kappa || self.b.len() != self.kappa {
            return Err(ShapeError::InvalidArgument(
                "ring vectors must have kappa >= 3 entries".into(),
            ));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("r", self.r), ("t", self.t)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ShapeError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let ab = dot(&self.a, &self.b);
        let a1: f64 = self.a.iter().sum();
        let b1: f64 = self.b.iter().sum();
        if ab.abs() > BASIS_TOL || a1.abs() > BASIS_TOL || b1.abs() > BASIS_TOL {
            return Err(ShapeError::InvalidBasis(format!(
                "ring vectors not orthogonal: <a,b> = {ab:e}, <a,1> = {a1:e}, <b,1> = {b1:e}"
            )));
        }
        if dot(&self.a, &self.a) == 0.0 || dot(&self.b, &self.b) == 0.0 {
            return Err(ShapeError::InvalidBasis("ring vectors must be nonzero".into()));
        }
        Ok(())
    }

    fn norms(&self) -> (f64, f64) {
        (
            self.a.iter().map(|x| x * x).sum(),
            self.b.iter().map(|x| x * x).sum(),
        )
    }

    /// Squared size of the centered configuration:
    /// `r²(‖a‖²(1+t²) + ‖b‖²(α²+β²t²)) + κ/2`.
    pub fn size_squared(&self) -> f64 {
        let (aa, bb) = self.norms();
        let (r, t) = (self.r, self.t);
        r * r * (aa * (1.0 + t * t) + bb * (self.alpha.powi(2) + self.beta.powi(2) * t * t))
            + self.kappa as f64 / 2.0
    }
}

/// Raw `3 × 2κ` landmark matrix: bottom ring then top ring.
pub fn raw_frustum(p: &FrustumParams) -> Mat {
    let k = p.kappa;
    let mut x = Mat::zeros(3, 2 * k);
    for j in 0..k {
        x[(0, j)] = p.r * p.a[j];
        x[(1, j)] = p.r * p.alpha * p.b[j];
        x[(0, k + j)] = p.r * p.t * p.a[j];
        x[(1, k + j)] = p.r * p.beta * p.t * p.b[j];
        x[(2, k + j)] = 1.0;
    }
    x
}

/// Pre-shape of a frustum.
pub fn frustum_config(p: &FrustumParams) -> Result<PreShape> {
    p.validate()?;
    to_preshape(&center(&raw_frustum(p))?)
}

/// Great circle through two cylinder shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSegment {
    /// Start point on the pre-shape sphere.
    pub p0: Mat,
    /// End point, in optimal position to `p0`.
    pub p1: Mat,
    /// Unit tangent at `p0` pointing towards `p1`.
    pub normal: Mat,
    /// Intrinsic distance between the endpoints.
    pub angle: f64,
}

impl GeodesicSegment {
    /// Great circle through two pre-shapes; `p1` is rotated into optimal
    /// position to `p0` first.
    pub fn through(p0: &PreShape, p1: &PreShape) -> Result<Self> {
        if p0.matrix().shape() != p1.matrix().shape() {
            return Err(ShapeError::DimensionMismatch {
                expected: format!("{:?}", p0.matrix().shape()),
                got: format!("{:?}", p1.matrix().shape()),
            });
        }
        let (g, c) = align(p1.matrix(), p0.matrix());
        let q = g * p1.matrix();
        let angle = c.clamp(-1.0, 1.0).acos();
        let tangent = &q - p0.matrix() * c;
        if angle <= 1e-12 || tangent.norm() <= 1e-12 {
            return Err(ShapeError::ZeroLength);
        }
        Ok(Self {
            p0: p0.matrix().clone(),
            p1: q,
            normal: normalized(&tangent)?,
            angle,
        })
    }

    /// `γ(s) = cos(s) p₀ + sin(s) n`.
    pub fn point(&self, s: f64) -> Mat {
        &self.p0 * s.cos() + &self.normal * s.sin()
    }

    /// Aligned inner product of `x` (unit norm) with `γ(s)`.
    pub fn inner_at(&self, x: &Mat, s: f64) -> f64 {
        align(x, &self.point(s)).1
    }
}

/// Geodesic through the shapes of cylinders with radii `r0 < r1`.
pub fn cylinder_geodesic(kappa: usize, r0: f64, r1: f64) -> Result<GeodesicSegment> {
    if !(r0 > 0.0) || !(r1 > 0.0) {
        return Err(ShapeError::InvalidArgument("radii must be positive".into()));
    }
    if r0 == r1 {
        return Err(ShapeError::ZeroLength);
    }
    if r0 > r1 {
        return Err(ShapeError::InvalidArgument(format!("need r0 < r1, got {r0} > {r1}")));
    }
    let c0 = frustum_config(&FrustumParams::cylinder(kappa, r0)?)?;
    let c1 = frustum_config(&FrustumParams::cylinder(kappa, r1)?)?;
    GeodesicSegment::through(&c0, &c1)
}

/// Distance from a shape to the whole great circle of `g`, with the
/// parameter `s*` of the closest point.
///
/// The aligned inner product with `γ(s)` is maximized over a 128-point grid
/// on `[−π, π)` and refined by golden-section search to `1e-10` in `s`.
pub fn distance_to_geodesic(x: &ShapePoint, g: &GeodesicSegment, metric: ShapeDistance) -> Result<(f64, f64)> {
    let xm = x.matrix();
    if xm.shape() != g.p0.shape() {
        return Err(ShapeError::DimensionMismatch {
            expected: format!("{:?}", g.p0.shape()),
            got: format!("{:?}", xm.shape()),
        });
    }
    let pi = std::f64::consts::PI;
    let step = 2.0 * pi / GRID_POINTS as f64;
    let f = |s: f64| g.inner_at(xm, s);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..GRID_POINTS {
        let s = -pi + step * i as f64;
        let v = f(s);
        if v > best.0 {
            best = (v, s);
        }
    }
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > GOLDEN_TOL {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = f(d);
        }
    }
    let s = 0.5 * (lo + hi);
    let (value, s) = [(f(s), s), best].into_iter().fold((f64::NEG_INFINITY, s), |acc, v| {
        if v.0 > acc.0 {
            v
        } else {
            acc
        }
    });
    let s = if s >= pi { s - 2.0 * pi } else if s < -pi { s + 2.0 * pi } else { s };
    Ok((metric.from_inner(value), s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthMode {
    /// The same radial increment is added to all four semi-axes each step.
    UniformIncrement,
    /// `α`, `β` and `t` stay fixed; only `r` grows.
    ConstantShapeRatios,
}

fn check_schedule(start: &FrustumParams, schedule: &[f64], steps: usize) -> Result<()> {
    if schedule.len() != steps {
        return Err(ShapeError::InvalidSchedule(format!(
            "schedule has {} entries for {steps} steps",
            schedule.len()
        )));
    }
    let mut prev = start.size_squared().sqrt();
    for (i, &s) in schedule.iter().enumerate() {
        if !(s > prev) || !s.is_finite() {
            return Err(ShapeError::InvalidSchedule(format!(
                "size {s} at step {i} does not exceed the previous size {prev}"
            )));
        }
        prev = s;
    }
    Ok(())
}

/// Grow a frustum so that its configuration size follows `schedule`.
pub fn growth_curve(
    mode: GrowthMode,
    start: &FrustumParams,
    schedule: &[f64],
    steps: usize,
) -> Result<Vec<FrustumParams>> {
    start.validate()?;
    check_schedule(start, schedule, steps)?;
    let (aa, bb) = start.norms();
    let half_k = start.kappa as f64 / 2.0;
    let mut current = start.clone();
    let mut out = Vec::with_capacity(steps);
    for &target in schedule {
        let s2 = target * target - half_k;
        current = match mode {
            GrowthMode::ConstantShapeRatios => {
                let p = &current;
                let w = aa * (1.0 + p.t * p.t) + bb * (p.alpha.powi(2) + p.beta.powi(2) * p.t * p.t);
                FrustumParams {
                    r: (s2 / w).sqrt(),
                    ..current.clone()
                }
            }
            GrowthMode::UniformIncrement => {
                let p = &current;
                // semi-axes: bottom r, rα; top rt, rβt
                let axes = [
                    (aa, p.r),
                    (aa, p.r * p.t),
                    (bb, p.r * p.alpha),
                    (bb, p.r * p.beta * p.t),
                ];
                // Σ wᵢ (cᵢ + u)² = s2, a quadratic in u with a positive root
                let qa: f64 = axes.iter().map(|(w, _)| w).sum();
                let qb: f64 = axes.iter().map(|(w, c)| 2.0 * w * c).sum();
                let qc: f64 = axes.iter().map(|(w, c)| w * c * c).sum::<f64>() - s2;
                let u = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
                let r = p.r + u;
                let top = p.r * p.t + u;
                FrustumParams {
                    r,
                    t: top / r,
                    alpha: (p.r * p.alpha + u) / r,
                    beta: (p.r * p.beta * p.t + u) / top,
                    ..current.clone()
                }
            }
        };
        out.push(current.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    /// Distance of the sample's full Procrustes mean to the geodesic.
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Resamples whose mean failed to converge.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    pub rows: Vec<BandRow>,
    pub resamples: usize,
    pub level: f64,
    pub metric: ShapeDistance,
    pub seed: u64,
}

/// Largest tolerated fraction of failed resamples per time point.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Percentile bootstrap band for the distance of the full Procrustes mean
/// shape to `g`, one row per time point.
///
/// Resample `b` at time `i` uses random stream `nested_stream(i, b)`.
pub fn bootstrap_band(
    samples_per_time: &[Vec<PreShape>],
    resamples: usize,
    level: f64,
    g: &GeodesicSegment,
    metric: ShapeDistance,
    seed: u64,
) -> Result<BootstrapBand> {
    if resamples < 50 {
        return Err(ShapeError::InvalidArgument(format!("need at least 50 resamples, got {resamples}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(ShapeError::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let cfg = MeanConfig::default();
    let mut rows = Vec::with_capacity(samples_per_time.len());
    for (i, sample) in samples_per_time.iter().enumerate() {
        let n = sample.len();
        if n < 2 {
            return Err(ShapeError::TooFewData { needed: 2, got: n });
        }
        let mean = full_procrustes_mean(sample, &cfg)?;
        let (estimate, _) = distance_to_geodesic(&mean.shape_point(), g, metric)?;
        let draws: Vec<Option<f64>> = (0..resamples as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed, nested_stream(i as u64, b));
                let resample: Vec<PreShape> = (0..n).map(|_| sample[rng.random_range(0..n)].clone()).collect();
                let res = full_procrustes_mean(&resample, &cfg).ok().filter(|r| r.converged)?;
                distance_to_geodesic(&res.shape_point(), g, metric).ok().map(|d| d.0)
            })
            .collect();
        let failures = draws.iter().filter(|d| d.is_none()).count();
        if failures as f64 > MAX_FAILURE_FRACTION * resamples as f64 {
            return Err(ShapeError::SolverFailure {
                replicate: i,
                reason: format!("{failures} of {resamples} bootstrap means failed"),
            });
        }
        let mut dist: Vec<f64> = draws.into_iter().flatten().collect();
        dist.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        rows.push(BandRow {
            estimate,
            lower: percentile_sorted(&dist, tail),
            upper: percentile_sorted(&dist, 1.0 - tail),
            failures,
        });
    }
    Ok(BootstrapBand {
        rows,
        resamples,
        level,
        metric,
        seed,
    })
}

/// How the synthetic stand deviates from cylinders over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scenario {
    /// Young trees approach the cylinder until `change_age`, then depart.
    CompetitionOnset { change_age: f64 },
    /// Trees approach the cylinder throughout.
    FreeGrowth,
}

/// Range covering the central 95% of generated tapering values.
pub const TAPER_RANGE: (f64, f64) = (0.864, 0.986);
/// Range covering the central 95% of generated ellipticities.
pub const ELLIPTICITY_RANGE: (f64, f64) = (1.02, 1.13);

/// Synthetic frustum data: one ring pair per tree and age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stand {
    pub ages: Vec<u32>,
    /// `trees[i][j]` is tree `j` at age `ages[i]`.
    pub trees: Vec<Vec<FrustumParams>>,
    pub scenario: Scenario,
    pub kappa: usize,
    pub seed: u64,
    /// Weight of the scenario trend in the latent deviation.
    pub trend_weight: f64,
}

impl Stand {
    pub fn shapes(&self) -> Result<Vec<Vec<PreShape>>> {
        self.trees
            .iter()
            .map(|row| row.iter().map(frustum_config).collect())
            .collect()
    }
}

pub const STAND_FIRST_AGE: u32 = 8;
pub const STAND_KAPPA: usize = 36;
const TREND_WEIGHT: f64 = 0.8;

fn calibrate(values: &mut [f64], lo: f64, hi: f64, reversed: bool) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q_lo = percentile_sorted(&sorted, 0.025);
    let q_hi = percentile_sorted(&sorted, 0.975);
    for v in values.iter_mut() {
        let z = (*v - q_lo) / (q_hi - q_lo);
        *v = if reversed { hi - z * (hi - lo) } else { lo + z * (hi - lo) };
    }
}

/// Generate a synthetic stand standing in for tree-ring frustum data.
///
/// Each parameter (`t`, `α`, `β`) is driven by a latent deviation
/// `w·trend(age) + √(1−w²)·z` with standard normal `z`, calibrated affinely
/// so its pooled 2.5% and 97.5% quantiles hit [`TAPER_RANGE`] (larger
/// deviation, stronger taper) or [`ELLIPTICITY_RANGE`]. Radii grow linearly
/// with age with log-normal tree effects.
pub fn synthetic_stand(ages: usize, trees_per_age: usize, scenario: Scenario, seed: u64) -> Result<Stand> {
    if ages < 2 || trees_per_age < 2 {
        return Err(ShapeError::InvalidArgument("need at least two ages and two trees".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let age_list: Vec<u32> = (0..ages as u32).map(|i| STAND_FIRST_AGE + i).collect();
    let raw_trend: Vec<f64> = age_list
        .iter()
        .map(|&a| match scenario {
            Scenario::CompetitionOnset { change_age } => (a as f64 - change_age).abs(),
            Scenario::FreeGrowth => -(a as f64),
        })
        .collect();
    let tm = raw_trend.iter().sum::<f64>() / ages as f64;
    let tsd = (raw_trend.iter().map(|x| (x - tm).powi(2)).sum::<f64>() / ages as f64).sqrt();
    let trend: Vec<f64> = raw_trend.iter().map(|x| if tsd > 0.0 { (x - tm) / tsd } else { 0.0 }).collect();
    let w = TREND_WEIGHT;
    let noise_w = (1.0 - w * w).sqrt();
    let total = ages * trees_per_age;
    let latent = |rng: &mut crate::rng::StreamRng| -> Vec<f64> {
        (0..total)
            .map(|idx| w * trend[idx / trees_per_age] + noise_w * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let mut taper = latent(&mut rng);
    let mut alpha = latent(&mut rng);
    let mut beta = latent(&mut rng);
    calibrate(&mut taper, TAPER_RANGE.0, TAPER_RANGE.1, true);
    calibrate(&mut alpha, ELLIPTICITY_RANGE.0, ELLIPTICITY_RANGE.1, false);
    calibrate(&mut beta, ELLIPTICITY_RANGE.0, ELLIPTICITY_RANGE.1, false);
    let tree_effect = LogNormal::new(0.0, 0.1).expect("valid log-normal");
    let (a, b) = default_ring_vectors(STAND_KAPPA);
    let mut trees = Vec::with_capacity(ages);
    for (i, &age) in age_list.iter().enumerate() {
        let mut row = Vec::with_capacity(trees_per_age);
        for j in 0..trees_per_age {
            let idx = i * trees_per_age + j;
            let r = (0.05 + 0.0035 * (age - STAND_FIRST_AGE) as f64) * rng.sample(tree_effect);
            row.push(FrustumParams::with_vectors(alpha[idx], beta[idx], r, taper[idx], a.clone(), b.clone())?);
        }
        trees.push(row);
    }
    Ok(Stand {
        ages: age_list,
        trees,
        scenario,
        kappa: STAND_KAPPA,
        seed,
        trend_weight: w,
    })
}
