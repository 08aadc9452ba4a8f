//! Fréchet ρ-means on shape and size-and-shape space.
//!
//! All three solvers share one fixed-point loop: put every datum into
//! optimal position to the current estimate, combine, and stop once the
//! Fréchet objective decreases by less than `tol`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{align, normalized, sizeshape_distance_raw, ShapeDistance};
use crate::rng::stream_rng;
use crate::{Configuration, Landmarks, Mat, PreShape, Result, ShapeError, ShapePoint, SizeShapePoint};

/// Data counts at or above this use a parallel alignment step.
const PARALLEL_MIN: usize = 512;
/// Upper bound on the number of candidate and scoring data used to pick the
/// starting point.
const INIT_SUBSET: usize = 64;

/// Which Procrustes-type loss defines the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rho {
    /// `d⁽ᵖ⁾` on shape space.
    FullProcrustes,
    /// Intrinsic distance on size-and-shape space.
    PartialProcrustes,
    /// `d⁽ᶻ⁾` on shape space.
    Ziezold,
}

impl Rho {
    pub fn is_shape(self) -> bool {
        !matches!(self, Rho::PartialProcrustes)
    }

    pub fn name(self) -> &'static str {
        match self {
            Rho::FullProcrustes => "full",
            Rho::PartialProcrustes => "partial",
            Rho::Ziezold => "ziezold",
        }
    }

    /// `ρ²` between `gx` (already in optimal position) and `mu`.
    ///
    /// Evaluated through the residual `‖gx − μ‖²` rather than the inner
    /// product to avoid cancellation for nearby arguments. Shape losses
    /// assume unit-norm arguments.
    pub(crate) fn loss(self, gx: &Mat, mu: &Mat, inner: f64) -> f64 {
        let r2: f64 = gx.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        match self {
            Rho::FullProcrustes if inner <= 0.0 => 1.0,
            // 1 − c² with c = 1 − r²/2
            Rho::FullProcrustes => r2 - 0.25 * r2 * r2,
            Rho::Ziezold | Rho::PartialProcrustes => r2,
        }
    }

    /// `ρ²([x], [mu])` for raw representatives.
    pub fn squared(self, x: &Mat, mu: &Mat) -> f64 {
        let (g, inner) = align(x, mu);
        self.loss(&(g * x), mu, inner)
    }
}

impl std::str::FromStr for Rho {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Rho::FullProcrustes),
            "partial" => Ok(Rho::PartialProcrustes),
            "ziezold" => Ok(Rho::Ziezold),
            other => Err(ShapeError::InvalidArgument(format!(
                "unknown rho '{other}', expected full, partial or ziezold"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanConfig {
    pub rho: Rho,
    pub max_iter: usize,
    /// Stop when the objective decreases by less than this.
    pub tol: f64,
    /// Extra runs started from randomly chosen data.
    pub restarts: usize,
    /// Seed for choosing restart points.
    pub seed: u64,
    /// Full Procrustes only: take the explicit tangent-space step
    /// `μ + mean(λⱼ gⱼxⱼ − λⱼ² μ)` before renormalizing.
    pub tangent_projection: bool,
}

impl Default for MeanConfig {
    fn default() -> Self {
        Self {
            rho: Rho::FullProcrustes,
            max_iter: 1000,
            tol: 1e-10,
            restarts: 0,
            seed: 0,
            tangent_projection: false,
        }
    }
}

impl MeanConfig {
    pub fn new(rho: Rho) -> Self {
        Self {
            rho,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(ShapeError::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(ShapeError::InvalidArgument("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    /// Mean representative; unit norm for the shape losses.
    pub mean: Configuration,
    pub rho: Rho,
    /// Fréchet sum `Σⱼ ρ²([xⱼ], [μ])` at `mean`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Full Procrustes only: data with `⟨gⱼxⱼ, μ⟩ ≤ 0` left out of the last
    /// averaging step.
    pub dropped: usize,
    /// Largest distance between the reported mean and a restart's mean.
    pub restart_spread: f64,
    /// Objective after each accepted iterate, starting with the initial one.
    pub trace: Vec<f64>,
}

impl MeanResult {
    pub fn shape_point(&self) -> ShapePoint {
        let unit = normalized(self.mean.entries()).expect("means are nonzero");
        ShapePoint::new(PreShape::from_unit(unit).expect("normalized"))
    }

    pub fn size_shape_point(&self) -> SizeShapePoint {
        SizeShapePoint::new(self.mean.clone())
    }

    /// Restarts disagreeing beyond `1e-6` indicate a non-unique mean.
    pub fn restarts_agree(&self) -> bool {
        self.restart_spread <= 1e-6
    }
}

struct Sweep {
    objective: f64,
    next: Mat,
    dropped: usize,
}

fn sweep(data: &[&Mat], mu: &Mat, rho: Rho, tangent: bool) -> Result<Sweep> {
    let per_datum = |x: &&Mat| {
        let (g, inner) = align(x, mu);
        (g * *x, inner)
    };
    let aligned: Vec<(Mat, f64)> = if data.len() >= PARALLEL_MIN {
        data.par_iter().map(per_datum).collect()
    } else {
        data.iter().map(per_datum).collect()
    };
    let n = data.len() as f64;
    let mut acc = Mat::zeros(mu.nrows(), mu.ncols());
    let mut objective = 0.0;
    let mut dropped = 0;
    let mut lambda_sq = 0.0;
    for (gx, inner) in &aligned {
        objective += rho.loss(gx, mu, *inner);
        match rho {
            Rho::FullProcrustes => {
                if *inner > 0.0 {
                    acc.zip_apply(gx, |a, b| *a += inner * b);
                    lambda_sq += inner * inner;
                } else {
                    dropped += 1;
                }
            }
            Rho::Ziezold | Rho::PartialProcrustes => acc += gx,
        }
    }
    if rho == Rho::FullProcrustes && dropped == data.len() {
        return Err(ShapeError::ExcessiveExclusions {
            excluded: dropped,
            total: data.len(),
        });
    }
    let next = match rho {
        Rho::FullProcrustes if tangent => normalized(&(mu * (1.0 - lambda_sq / n) + acc / n))?,
        Rho::FullProcrustes | Rho::Ziezold => normalized(&acc)?,
        Rho::PartialProcrustes => acc / n,
    };
    Ok(Sweep {
        objective,
        next,
        dropped,
    })
}

struct Run {
    mean: Mat,
    objective: f64,
    iterations: usize,
    converged: bool,
    dropped: usize,
    trace: Vec<f64>,
}

fn run_from(data: &[&Mat], init: Mat, rho: Rho, cfg: &MeanConfig) -> Result<Run> {
    let mut mu = init;
    let mut current = sweep(data, &mu, rho, cfg.tangent_projection)?;
    let mut trace = vec![current.objective];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let candidate = current.next.clone();
        let next = sweep(data, &candidate, rho, cfg.tangent_projection)?;
        if next.objective > current.objective {
            // an increase can only come from rounding at the fixed point
            converged = true;
            break;
        }
        let decrease = current.objective - next.objective;
        mu = candidate;
        current = next;
        trace.push(current.objective);
        if decrease < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(Run {
        mean: mu,
        objective: current.objective,
        iterations,
        converged,
        dropped: current.dropped,
        trace,
    })
}

fn evenly_spaced(n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        (0..n).collect()
    } else {
        (0..count).map(|i| i * n / count).collect()
    }
}

/// Datum with the smallest objective, scored on an evenly spaced subset.
fn initial_index(data: &[&Mat], rho: Rho) -> usize {
    let scorers = evenly_spaced(data.len(), INIT_SUBSET);
    let mut best = (f64::INFINITY, 0);
    for c in evenly_spaced(data.len(), INIT_SUBSET) {
        let score: f64 = scorers.iter().map(|&j| rho.squared(data[j], data[c])).sum();
        if score < best.0 {
            best = (score, c);
        }
    }
    best.1
}

fn check_data(data: &[&Mat]) -> Result<()> {
    let first = data.first().ok_or(ShapeError::TooFewData { needed: 1, got: 0 })?;
    for x in data {
        if x.shape() != first.shape() {
            return Err(ShapeError::DimensionMismatch {
                expected: format!("{}x{}", first.nrows(), first.ncols()),
                got: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
    }
    Ok(())
}

fn solve(data: &[&Mat], rho: Rho, cfg: &MeanConfig) -> Result<MeanResult> {
    cfg.validate()?;
    check_data(data)?;
    let start = data[initial_index(data, rho)].clone();
    let mut best = run_from(data, start, rho, cfg)?;
    let mut others = Vec::with_capacity(cfg.restarts);
    let mut rng = stream_rng(cfg.seed, 0);
    for _ in 0..cfg.restarts {
        let idx = rng.random_range(0..data.len());
        let run = run_from(data, data[idx].clone(), rho, cfg)?;
        if run.objective < best.objective {
            others.push(std::mem::replace(&mut best, run).mean);
        } else {
            others.push(run.mean);
        }
    }
    let restart_spread = others
        .iter()
        .map(|m| match rho {
            Rho::PartialProcrustes => sizeshape_distance_raw(m, &best.mean),
            _ => ShapeDistance::Intrinsic.from_inner(align(m, &best.mean).1),
        })
        .fold(0.0, f64::max);
    Ok(MeanResult {
        mean: Configuration::from_matrix_unchecked(best.mean),
        rho,
        objective: best.objective,
        iterations: best.iterations,
        converged: best.converged,
        dropped: best.dropped,
        restart_spread,
        trace: best.trace,
    })
}

/// Full Procrustes mean by generalized Procrustes analysis.
pub fn full_procrustes_mean(data: &[PreShape], cfg: &MeanConfig) -> Result<MeanResult> {
    let refs: Vec<&Mat> = data.iter().map(|p| p.matrix()).collect();
    solve(&refs, Rho::FullProcrustes, cfg)
}

/// Partial Procrustes mean on size-and-shape space.
pub fn partial_procrustes_mean(data: &[Configuration], cfg: &MeanConfig) -> Result<MeanResult> {
    let refs: Vec<&Mat> = data.iter().map(|c| c.matrix()).collect();
    solve(&refs, Rho::PartialProcrustes, cfg)
}

/// Ziezold mean: the Fréchet mean for `d⁽ᶻ⁾`.
pub fn ziezold_mean(data: &[PreShape], cfg: &MeanConfig) -> Result<MeanResult> {
    let refs: Vec<&Mat> = data.iter().map(|p| p.matrix()).collect();
    solve(&refs, Rho::Ziezold, cfg)
}

/// Mean for `cfg.rho`; shape losses project the data to the pre-shape sphere.
pub fn frechet_mean(data: &[Configuration], cfg: &MeanConfig) -> Result<MeanResult> {
    if cfg.rho.is_shape() {
        let unit: Vec<Mat> = data
            .iter()
            .map(|c| normalized(c.entries()))
            .collect::<Result<_>>()?;
        let refs: Vec<&Mat> = unit.iter().collect();
        solve(&refs, cfg.rho, cfg)
    } else {
        let refs: Vec<&Mat> = data.iter().map(|c| c.matrix()).collect();
        solve(&refs, cfg.rho, cfg)
    }
}

/// `Σⱼ ρ²([xⱼ], [mu])`.
pub fn objective(data: &[&Mat], mu: &Mat, rho: Rho) -> f64 {
    data.iter().map(|x| rho.squared(x, mu)).sum()
}

/// Gap below which the leading eigenvalue counts as repeated.
pub const EIGEN_GAP_TOL: f64 = 1e-10;

/// Planar extrinsic mean: the leading eigenvector of `(1/n) Σ zⱼ zⱼ*`
/// where `zⱼ ∈ ℂ^{k-1}` reads the two rows of the pre-shape as real and
/// imaginary parts.
pub fn extrinsic_mean_2d(data: &[PreShape]) -> Result<ShapePoint> {
    let first = data.first().ok_or(ShapeError::TooFewData { needed: 1, got: 0 })?;
    if first.m() != 2 {
        return Err(ShapeError::InvalidDimension(format!(
            "extrinsic mean needs m = 2, got {}",
            first.m()
        )));
    }
    let refs: Vec<&Mat> = data.iter().map(|p| p.matrix()).collect();
    check_data(&refs)?;
    let kk = first.matrix().ncols();
    let mut s = DMatrix::<Complex64>::zeros(kk, kk);
    for x in &refs {
        let z: Vec<Complex64> = (0..kk).map(|l| Complex64::new(x[(0, l)], x[(1, l)])).collect();
        for a in 0..kk {
            for b in 0..kk {
                s[(a, b)] += z[a] * z[b].conj();
            }
        }
    }
    s /= Complex64::new(data.len() as f64, 0.0);
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..kk).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let gap = eig.eigenvalues[order[0]] - eig.eigenvalues[order[1]];
    if gap < EIGEN_GAP_TOL {
        return Err(ShapeError::NonUniqueMean { gap });
    }
    let v = eig.eigenvectors.column(order[0]);
    let w = Mat::from_fn(2, kk, |r, l| if r == 0 { v[l].re } else { v[l].im });
    Ok(ShapePoint::new(PreShape::from_unit(normalized(&w)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dist_shape_intrinsic, dist_shape_procrustes, to_preshape};
    use crate::rng::stream_rng;
    use rand_distr::StandardNormal;

    fn random_preshape(rng: &mut impl Rng, m: usize, c: usize) -> PreShape {
        let x = Mat::from_fn(m, c, |_, _| rng.sample(StandardNormal));
        to_preshape(&Configuration::new(x).unwrap()).unwrap()
    }

    fn cluster(rng: &mut impl Rng, center: &PreShape, n: usize, sigma: f64) -> Vec<PreShape> {
        (0..n)
            .map(|_| {
                let e = Mat::from_fn(center.m(), center.matrix().ncols(), |_, _| {
                    sigma * rng.sample::<f64, _>(StandardNormal)
                });
                to_preshape(&Configuration::new(center.matrix() + e).unwrap()).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_datum_is_its_own_mean() {
        let mut rng = stream_rng(10, 0);
        let x = random_preshape(&mut rng, 3, 4);
        let cfg = MeanConfig::default();
        for res in [
            full_procrustes_mean(std::slice::from_ref(&x), &cfg).unwrap(),
            ziezold_mean(std::slice::from_ref(&x), &cfg).unwrap(),
        ] {
            assert!(res.objective.abs() < 1e-14);
            assert!(dist_shape_intrinsic(&res.shape_point(), &x.shape()).unwrap() < 1e-7);
            assert!(res.converged);
        }
        let c = x.as_configuration().scaled(3.0).unwrap();
        let res = partial_procrustes_mean(std::slice::from_ref(&c), &cfg).unwrap();
        assert!((res.mean.entries() - c.entries()).amax() < 1e-14);
    }

    #[test]
    fn empty_data_is_rejected() {
        let cfg = MeanConfig::default();
        assert!(matches!(
            full_procrustes_mean(&[], &cfg),
            Err(ShapeError::TooFewData { .. })
        ));
        assert!(extrinsic_mean_2d(&[]).is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut rng = stream_rng(10, 1);
        let x = random_preshape(&mut rng, 3, 4);
        let cfg = MeanConfig {
            tol: 0.0,
            ..MeanConfig::default()
        };
        assert!(full_procrustes_mean(&[x.clone()], &cfg).is_err());
        let cfg = MeanConfig {
            max_iter: 0,
            ..MeanConfig::default()
        };
        assert!(full_procrustes_mean(&[x], &cfg).is_err());
    }

    #[test]
    fn equal_data_give_that_datum() {
        let mut rng = stream_rng(11, 0);
        let x = random_preshape(&mut rng, 3, 5).as_configuration().scaled(2.5).unwrap();
        let g = crate::geometry::random_rotation(&mut rng, 3);
        let data = vec![x.clone(), x.rotated(&g), x.clone()];
        let res = partial_procrustes_mean(&data, &MeanConfig::default()).unwrap();
        let d = crate::dist_sizeshape(&res.size_shape_point(), &SizeShapePoint::new(x)).unwrap();
        assert!(d < 1e-7);
    }

    #[test]
    fn extrinsic_two_point_hand_eigenproblem() {
        // z1 = (1, 0), z2 = (1, 1)/√2 give S = [[3/4, 1/4], [1/4, 1/4]] with
        // leading eigenvector ∝ (1, √2 − 1)
        let s = 0.5f64.sqrt();
        let z1 = PreShape::from_unit(Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let z2 = PreShape::from_unit(Mat::from_row_slice(2, 2, &[s, s, 0.0, 0.0])).unwrap();
        let mean = extrinsic_mean_2d(&[z1, z2]).unwrap();
        let v = nalgebra::DVector::from_vec(vec![1.0, 2f64.sqrt() - 1.0]).normalize();
        let expected = PreShape::from_unit(Mat::from_row_slice(2, 2, &[v[0], v[1], 0.0, 0.0])).unwrap();
        assert!(dist_shape_procrustes(&mean, &expected.shape()).unwrap() < 1e-12);
    }

    #[test]
    fn extrinsic_of_equal_data() {
        let mut rng = stream_rng(12, 0);
        let z = random_preshape(&mut rng, 2, 4);
        let mean = extrinsic_mean_2d(&[z.clone(), z.clone()]).unwrap();
        assert!(dist_shape_procrustes(&mean, &z.shape()).unwrap() < 1e-7);
    }

    #[test]
    fn extrinsic_detects_repeated_eigenvalue() {
        let a = PreShape::from_unit(Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let b = PreShape::from_unit(Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(matches!(
            extrinsic_mean_2d(&[a, b]),
            Err(ShapeError::NonUniqueMean { .. })
        ));
    }

    #[test]
    fn extrinsic_rejects_3d() {
        let mut rng = stream_rng(12, 1);
        assert!(matches!(
            extrinsic_mean_2d(&[random_preshape(&mut rng, 3, 4)]),
            Err(ShapeError::InvalidDimension(_))
        ));
    }

    #[test]
    fn gpa_matches_extrinsic_in_the_plane() {
        let mut rng = stream_rng(13, 0);
        for k in 3..=6 {
            let data: Vec<PreShape> = (0..20).map(|_| random_preshape(&mut rng, 2, k - 1)).collect();
            // the default objective tolerance leaves the iterate ~1e-5 away on
            // diffuse data; run to rounding level instead
            let cfg = MeanConfig {
                tol: 1e-15,
                ..MeanConfig::default()
            };
            let res = full_procrustes_mean(&data, &cfg).unwrap();
            let ext = extrinsic_mean_2d(&data).unwrap();
            let d = dist_shape_procrustes(&res.shape_point(), &ext).unwrap();
            assert!(d <= 1e-6, "k={k} d={d}");
        }
    }

    fn random_search_min(data: &[PreShape], rho: Rho, rng: &mut impl Rng) -> f64 {
        let refs: Vec<&Mat> = data.iter().map(|p| p.matrix()).collect();
        (0..10_000)
            .map(|_| objective(&refs, random_preshape(rng, 3, 3).matrix(), rho))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn beats_random_search_in_sigma_3_4() {
        let mut rng = stream_rng(14, 0);
        let data: Vec<PreShape> = (0..3).map(|_| random_preshape(&mut rng, 3, 3)).collect();
        let full = full_procrustes_mean(&data, &MeanConfig::default()).unwrap();
        assert!(full.objective <= random_search_min(&data, Rho::FullProcrustes, &mut rng));
        let zz = ziezold_mean(&data, &MeanConfig::default()).unwrap();
        assert!(zz.objective <= random_search_min(&data, Rho::Ziezold, &mut rng));
    }

    #[test]
    fn ziezold_and_full_agree_on_tight_cluster() {
        let mut rng = stream_rng(15, 0);
        let c = random_preshape(&mut rng, 3, 4);
        let data = cluster(&mut rng, &c, 30, 0.01);
        for x in &data {
            assert!(dist_shape_intrinsic(&x.shape(), &c.shape()).unwrap() <= 0.05);
        }
        let full = full_procrustes_mean(&data, &MeanConfig::default()).unwrap();
        let zz = ziezold_mean(&data, &MeanConfig::default()).unwrap();
        let d = dist_shape_intrinsic(&full.shape_point(), &zz.shape_point()).unwrap();
        assert!(d <= 5e-3);
    }

    #[test]
    fn tangent_projection_reaches_the_same_mean() {
        let mut rng = stream_rng(16, 0);
        let c = random_preshape(&mut rng, 3, 4);
        let data = cluster(&mut rng, &c, 25, 0.1);
        let plain = full_procrustes_mean(&data, &MeanConfig::default()).unwrap();
        let cfg = MeanConfig {
            tangent_projection: true,
            tol: 1e-14,
            ..MeanConfig::default()
        };
        let proj = full_procrustes_mean(&data, &cfg).unwrap();
        let d = dist_shape_intrinsic(&plain.shape_point(), &proj.shape_point()).unwrap();
        assert!(d < 1e-5, "{d}");
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = stream_rng(17, 0);
        let data: Vec<PreShape> = (0..15).map(|_| random_preshape(&mut rng, 3, 5)).collect();
        for rho in [Rho::FullProcrustes, Rho::Ziezold] {
            let res = solve(&data.iter().map(|p| p.matrix()).collect::<Vec<_>>(), rho, &MeanConfig::default()).unwrap();
            for w in res.trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!(res.converged);
            assert!(*res.trace.last().unwrap() == res.objective);
        }
    }

    #[test]
    fn rotation_equivariance() {
        let mut rng = stream_rng(18, 0);
        let c = random_preshape(&mut rng, 3, 4);
        let data = cluster(&mut rng, &c, 20, 0.2);
        let g = crate::geometry::random_rotation(&mut rng, 3);
        let rotated: Vec<PreShape> = data.iter().map(|p| p.rotated(&g)).collect();
        let cfg = MeanConfig::default();
        let a = full_procrustes_mean(&data, &cfg).unwrap();
        let b = full_procrustes_mean(&rotated, &cfg).unwrap();
        let ga = a.mean.rotated(&g);
        assert!((ga.entries() - b.mean.entries()).amax() < 1e-8);
    }

    #[test]
    fn permutation_changes_little() {
        let mut rng = stream_rng(19, 0);
        let c = random_preshape(&mut rng, 3, 4);
        let data = cluster(&mut rng, &c, 20, 0.2);
        let mut rev = data.clone();
        rev.reverse();
        let cfg = MeanConfig::default();
        let a = ziezold_mean(&data, &cfg).unwrap();
        let b = ziezold_mean(&rev, &cfg).unwrap();
        let d = dist_shape_intrinsic(&a.shape_point(), &b.shape_point()).unwrap();
        // at convergence the iterate moves like the square root of the
        // objective decrease
        assert!(d <= 10.0 * cfg.tol.sqrt(), "{d}");
    }

    #[test]
    fn restarts_report_spread() {
        let mut rng = stream_rng(20, 0);
        let c = random_preshape(&mut rng, 3, 4);
        let data = cluster(&mut rng, &c, 20, 0.05);
        let cfg = MeanConfig {
            restarts: 4,
            seed: 7,
            ..MeanConfig::default()
        };
        let res = full_procrustes_mean(&data, &cfg).unwrap();
        assert!(res.restarts_agree(), "{}", res.restart_spread);
    }

    #[test]
    fn lele_pair_partial_mean() {
        // z1 = μ + ε, z2 = μ − ε with μ = (i, 1, −i, −1), ε = (0, i, 0, −i)
        let z1 = Mat::from_row_slice(2, 4, &[0.0, 1.0, 0.0, -1.0, 1.0, 1.0, -1.0, -1.0]);
        let z2 = Mat::from_row_slice(2, 4, &[0.0, 1.0, 0.0, -1.0, 1.0, -1.0, -1.0, 1.0]);
        let mu = Mat::from_row_slice(2, 4, &[0.0, 1.0, 0.0, -1.0, 1.0, 0.0, -1.0, 0.0]);
        let (g, _) = crate::optimal_rotation(
            &Configuration::new(z1.clone()).unwrap(),
            &Configuration::new(z2.clone()).unwrap(),
        )
        .unwrap();
        // rotating z1 onto z2 multiplies by (1 − 2i)/√5; the inverse (z2 onto
        // z1) by (1 + 2i)/√5
        let s5 = 5f64.sqrt();
        let expected = Mat::from_row_slice(2, 2, &[1.0 / s5, 2.0 / s5, -2.0 / s5, 1.0 / s5]);
        assert!((g.entries() - expected).amax() < 1e-12);
        let data = vec![Configuration::new(z1).unwrap(), Configuration::new(z2).unwrap()];
        let res = partial_procrustes_mean(&data, &MeanConfig::default()).unwrap();
        let size_sq = res.mean.entries().norm_squared();
        assert!((size_sq - (3.0 + s5)).abs() < 1e-9);
        assert!((mu.norm_squared() - 4.0).abs() < 1e-15);
        let d = crate::geometry::sizeshape_distance_raw(res.mean.entries(), &mu);
        assert!(d > 0.1);
    }

    #[test]
    fn rho_parsing() {
        assert_eq!("full".parse::<Rho>().unwrap(), Rho::FullProcrustes);
        assert_eq!("partial".parse::<Rho>().unwrap(), Rho::PartialProcrustes);
        assert_eq!("ziezold".parse::<Rho>().unwrap(), Rho::Ziezold);
        assert!("median".parse::<Rho>().is_err());
    }
}
