//! Local charts at a mean, the CLT matrices `A` and `Σ`, and the one-sample
//! test built on them.
//!
//! Gradients and Hessians of `v ↦ ρ²([x], [φ⁻¹(v)])` are central finite
//! differences; every evaluation re-solves the optimal rotation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::geometry::{align, normalized, ShapeDistance};
use crate::means::{frechet_mean, MeanConfig, MeanResult, Rho};
use crate::perturbation::{sample, PerturbationKind, PerturbationSpec, Samples};
use crate::rng::stream_rng;
use crate::stats::{ks_standard_normal, mean, sample_sd};
use crate::{Configuration, Landmarks, Mat, Result, ShapeError, ShapePoint, SizeShapePoint};

/// Finite-difference step in chart coordinates.
pub const FD_STEP: f64 = 1e-5;
/// Data closer than this to the cut locus (in intrinsic distance below
/// `π/2`) are excluded.
pub const CUT_LOCUS_MARGIN: f64 = 0.05;
/// Largest tolerated fraction of excluded data.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.1;
/// Relative eigenvalue cutoff of the pseudo-inverse.
pub const PINV_TOL: f64 = 1e-10;
/// Objective tolerance for the sample mean inside the test.
pub const TEST_MEAN_TOL: f64 = 1e-300;
/// A covariance with largest eigenvalue below this is treated as zero.
pub const ZERO_COVARIANCE: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartKind {
    Shape,
    SizeShape,
}

/// Chart `φ` around a base point `μ = φ⁻¹(0)`.
///
/// The basis spans the horizontal space at `μ`: orthogonal to the rotation
/// orbit directions `Aμ` and, on shape space, to `μ` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    base: Mat,
    basis: Vec<Mat>,
    kind: ChartKind,
}

impl Chart {
    pub fn base(&self) -> &Mat {
        &self.base
    }

    pub fn basis(&self) -> &[Mat] {
        &self.basis
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `φ⁻¹(v)`: `normalize(μ + Σ vᵢeᵢ)` on shape space, `μ + Σ vᵢeᵢ` otherwise.
    pub fn inverse(&self, v: &DVector<f64>) -> Mat {
        let mut x = self.base.clone();
        for (vi, e) in v.iter().zip(&self.basis) {
            x += e * *vi;
        }
        match self.kind {
            ChartKind::Shape => {
                let n = x.norm();
                x / n
            }
            ChartKind::SizeShape => x,
        }
    }

    /// `φ(x)`: coordinates of the orbit of `x` after optimal alignment to
    /// the base.
    pub fn coordinates(&self, x: &Mat) -> Result<DVector<f64>> {
        if x.shape() != self.base.shape() {
            return Err(ShapeError::DimensionMismatch {
                expected: format!("{}x{}", self.base.nrows(), self.base.ncols()),
                got: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        let (g, inner) = align(x, &self.base);
        let y = g * x;
        let offset = match self.kind {
            ChartKind::Shape => {
                if inner <= 0.0 {
                    return Err(ShapeError::CutLocus {
                        distance: std::f64::consts::FRAC_PI_2,
                        limit: std::f64::consts::FRAC_PI_2,
                    });
                }
                y / inner - &self.base
            }
            ChartKind::SizeShape => y - &self.base,
        };
        Ok(DVector::from_iterator(
            self.basis.len(),
            self.basis.iter().map(|e| e.dot(&offset)),
        ))
    }
}

fn skew_basis(m: usize) -> Vec<Mat> {
    let mut out = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            let mut s = Mat::zeros(m, m);
            s[(a, b)] = 1.0;
            s[(b, a)] = -1.0;
            out.push(s);
        }
    }
    out
}

fn orthogonalize(v: &Mat, against: &[Mat]) -> Mat {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in against {
            let c = q.dot(&r);
            r -= q * c;
        }
    }
    r
}

fn build(base: Mat, kind: ChartKind, preferred: Option<&Mat>) -> Result<Chart> {
    let (m, cols) = base.shape();
    let tol = crate::geometry::RANK_TOL * base.norm();
    let rank = base
        .clone()
        .singular_values()
        .iter()
        .filter(|&&s| s > tol)
        .count();
    if rank + 1 < m {
        return Err(ShapeError::NotOnManifold {
            rank,
            required: m - 1,
        });
    }
    let mut vertical: Vec<Mat> = Vec::new();
    let mut spanning: Vec<Mat> = skew_basis(m).into_iter().map(|a| a * &base).collect();
    if kind == ChartKind::Shape {
        spanning.insert(0, base.clone());
    }
    for v in spanning {
        let r = orthogonalize(&v, &vertical);
        let n = r.norm();
        if n > 1e-8 * base.norm() {
            vertical.push(r / n);
        }
    }
    let expected_vertical = m * (m - 1) / 2 + usize::from(kind == ChartKind::Shape);
    if vertical.len() != expected_vertical {
        return Err(ShapeError::NotOnManifold {
            rank,
            required: m - 1,
        });
    }
    let total = m * cols;
    let dim = total - expected_vertical;
    let mut candidates: Vec<Mat> = Vec::with_capacity(total + 1);
    if let Some(p) = preferred {
        if p.shape() != base.shape() {
            return Err(ShapeError::DimensionMismatch {
                expected: format!("{m}x{cols}"),
                got: format!("{}x{}", p.nrows(), p.ncols()),
            });
        }
        candidates.push(p.clone());
    }
    for idx in 0..total {
        let mut e = Mat::zeros(m, cols);
        e[idx] = 1.0;
        candidates.push(e);
    }
    let mut all = vertical.clone();
    let mut basis = Vec::with_capacity(dim);
    for (i, c) in candidates.iter().enumerate() {
        if basis.len() == dim {
            break;
        }
        let r = orthogonalize(c, &all);
        let n = r.norm();
        let scale = c.norm();
        if n > 1e-6 * scale {
            let e = r / n;
            all.push(e.clone());
            basis.push(e);
        } else if i == 0 && preferred.is_some() {
            return Err(ShapeError::InvalidBasis(
                "preferred direction has no horizontal component".into(),
            ));
        }
    }
    debug_assert_eq!(basis.len(), dim);
    Ok(Chart { base, basis, kind })
}

/// Shape-space chart at `mu`.
pub fn build_chart(mu: &ShapePoint) -> Result<Chart> {
    build(mu.matrix().clone(), ChartKind::Shape, None)
}

/// Size-and-shape chart at `mu`.
pub fn build_size_shape_chart(mu: &SizeShapePoint) -> Result<Chart> {
    build(mu.matrix().clone(), ChartKind::SizeShape, None)
}

/// Chart whose first basis vector is the normalized horizontal part of
/// `direction`.
pub fn build_chart_with_direction(base: &Mat, kind: ChartKind, direction: &Mat) -> Result<Chart> {
    let base = match kind {
        ChartKind::Shape => normalized(base)?,
        ChartKind::SizeShape => base.clone(),
    };
    build(base, kind, Some(direction))
}

fn chart_for(rho: Rho, base: &Mat) -> Result<Chart> {
    if rho.is_shape() {
        build(normalized(base)?, ChartKind::Shape, None)
    } else {
        build(base.clone(), ChartKind::SizeShape, None)
    }
}

/// Gradient and Hessian of `v ↦ ρ²([x], [φ⁻¹(v)])` at `v = 0`.
///
/// `x` is normalized first for the shape losses. Data within
/// [`CUT_LOCUS_MARGIN`] of the cut locus of the base are refused.
pub fn rho_squared_grad_hess(x: &Mat, chart: &Chart, rho: Rho) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if rho.is_shape() != (chart.kind == ChartKind::Shape) {
        return Err(ShapeError::InvalidArgument(format!(
            "loss {} does not match a {:?} chart",
            rho.name(),
            chart.kind
        )));
    }
    if x.shape() != chart.base.shape() {
        return Err(ShapeError::DimensionMismatch {
            expected: format!("{}x{}", chart.base.nrows(), chart.base.ncols()),
            got: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    let c = align(x, &chart.base).1 / (x.norm() * chart.base.norm());
    let distance = ShapeDistance::Intrinsic.from_inner(c);
    let limit = std::f64::consts::FRAC_PI_2 - CUT_LOCUS_MARGIN;
    if distance >= limit {
        return Err(ShapeError::CutLocus { distance, limit });
    }
    let x = if rho.is_shape() { normalized(x)? } else { x.clone() };
    let d = chart.dim();
    let h = FD_STEP;
    let f = |v: &DVector<f64>| rho.squared(&x, &chart.inverse(v));
    let zero = DVector::zeros(d);
    let f0 = f(&zero);
    let shifted = |pairs: &[(usize, f64)]| {
        let mut v = DVector::zeros(d);
        for &(i, s) in pairs {
            v[i] += s;
        }
        f(&v)
    };
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = shifted(&[(i, h)]);
        let fm = shifted(&[(i, -h)]);
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (shifted(&[(i, h), (j, h)]) - shifted(&[(i, h), (j, -h)])
                - shifted(&[(i, -h), (j, h)])
                + shifted(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((grad, hess))
}

/// Estimated CLT matrices in a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltEstimate {
    /// Mean Hessian `A`.
    pub a: DMatrix<f64>,
    /// Gradient covariance `Σ`.
    pub sigma: DMatrix<f64>,
    /// Data used.
    pub n: usize,
    /// Data refused for being near the cut locus.
    pub excluded: usize,
    pub chart: Chart,
}

/// `A` and `Σ` from the data in a given chart.
pub fn estimate_in_chart(data: &[Configuration], chart: &Chart, rho: Rho) -> Result<CltEstimate> {
    let d = chart.dim();
    if data.len() < d + 1 {
        return Err(ShapeError::TooFewData {
            needed: d + 1,
            got: data.len(),
        });
    }
    let evals: Vec<Result<(DVector<f64>, DMatrix<f64>)>> = data
        .par_iter()
        .map(|x| rho_squared_grad_hess(x.entries(), chart, rho))
        .collect();
    let mut grads = Vec::with_capacity(data.len());
    let mut hess_sum = DMatrix::zeros(d, d);
    let mut excluded = 0;
    for e in evals {
        match e {
            Ok((g, h)) => {
                grads.push(g);
                hess_sum += h;
            }
            Err(ShapeError::CutLocus { .. }) => excluded += 1,
            Err(other) => return Err(other),
        }
    }
    if excluded as f64 > MAX_EXCLUDED_FRACTION * data.len() as f64 {
        return Err(ShapeError::ExcessiveExclusions {
            excluded,
            total: data.len(),
        });
    }
    let n = grads.len();
    if n < 2 {
        return Err(ShapeError::TooFewData { needed: 2, got: n });
    }
    let a = hess_sum / n as f64;
    let gbar = grads.iter().fold(DVector::zeros(d), |acc, g| acc + g) / n as f64;
    let mut sigma = DMatrix::zeros(d, d);
    for g in &grads {
        let c = g - &gbar;
        sigma += &c * c.transpose();
    }
    sigma /= (n - 1) as f64;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let a = (&a + a.transpose()) * 0.5;
    Ok(CltEstimate {
        a,
        sigma,
        n,
        excluded,
        chart: chart.clone(),
    })
}

/// `A` and `Σ` in the chart at the sample mean.
pub fn estimate_clt(data: &[Configuration], mean: &MeanResult, rho: Rho) -> Result<CltEstimate> {
    let chart = chart_for(rho, mean.mean.entries())?;
    estimate_in_chart(data, &chart, rho)
}

/// Reference distribution for the test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Calibration {
    /// Asymptotic `χ²_r` with `r` the rank of `Σ`.
    ChiSquare,
    /// Hotelling's finite-sample correction: `T (n−r) / (r (n−1)) ~ F(r, n−r)`.
    #[default]
    HotellingF,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub rejected: bool,
    pub alpha: f64,
    pub calibration: Calibration,
    pub n: usize,
    pub excluded: usize,
    /// Chart coordinates of the sample mean at the hypothesis.
    pub offset: Vec<f64>,
}

/// Test `H₀: the population ρ-mean is [hypothesis]` with the default
/// calibration.
pub fn one_sample_test(
    data: &[Configuration],
    hypothesis: &Configuration,
    rho: Rho,
    alpha: f64,
) -> Result<TestReport> {
    one_sample_test_with(data, hypothesis, rho, alpha, Calibration::default())
}

/// One-sample test with an explicit reference distribution.
///
/// With `v = φ(μ̂)` the chart coordinates of the sample mean at the
/// hypothesis and `A`, `Σ` estimated there, the statistic is
/// `T = n vᵀAᵀΣ⁺Av`.
pub fn one_sample_test_with(
    data: &[Configuration],
    hypothesis: &Configuration,
    rho: Rho,
    alpha: f64,
    calibration: Calibration,
) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ShapeError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let chart = chart_for(rho, hypothesis.entries())?;
    // the statistic scales with n‖v‖², so run the mean to rounding level
    let cfg = MeanConfig {
        tol: TEST_MEAN_TOL,
        ..MeanConfig::new(rho)
    };
    let mean = frechet_mean(data, &cfg)?;
    let v = chart.coordinates(mean.mean.entries())?;
    let est = estimate_in_chart(data, &chart, rho)?;
    let eig = est.sigma.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let offset: Vec<f64> = v.iter().copied().collect();
    if lmax <= ZERO_COVARIANCE {
        if v.norm() <= 1e-8 {
            return Ok(TestReport {
                statistic: 0.0,
                dof: 0,
                p_value: 1.0,
                rejected: false,
                alpha,
                calibration,
                n: est.n,
                excluded: est.excluded,
                offset,
            });
        }
        return Err(ShapeError::DegenerateTest(
            "gradient covariance vanishes but the sample mean is off the hypothesis".into(),
        ));
    }
    let d = chart.dim();
    let mut pinv = DMatrix::zeros(d, d);
    let mut rank = 0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > PINV_TOL * lmax {
            let q = eig.eigenvectors.column(i);
            pinv += (q * q.transpose()) / l;
            rank += 1;
        }
    }
    let av = &est.a * &v;
    let statistic = (est.n as f64 * av.dot(&(&pinv * &av))).max(0.0);
    let n = est.n as f64;
    let r = rank as f64;
    let p_value = match calibration {
        Calibration::ChiSquare => {
            let chi = ChiSquared::new(r).expect("rank >= 1");
            chi.sf(statistic)
        }
        Calibration::HotellingF => {
            if est.n <= rank {
                return Err(ShapeError::TooFewData {
                    needed: rank + 1,
                    got: est.n,
                });
            }
            let f = FisherSnedecor::new(r, n - r).expect("positive degrees of freedom");
            f.sf(statistic * (n - r) / (r * (n - 1.0)))
        }
    }
    .clamp(0.0, 1.0);
    Ok(TestReport {
        statistic,
        dof: rank,
        p_value,
        rejected: p_value < alpha,
        alpha,
        calibration,
        n: est.n,
        excluded: est.excluded,
        offset,
    })
}

/// Standard deviations below this are treated as zero when studentizing.
pub const STUDENTIZE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityRun {
    /// Replicate coordinates after subtracting their mean and dividing by
    /// their standard deviation.
    pub studentized: Vec<f64>,
    /// Raw chart coordinates of the replicate means.
    pub raw: Vec<f64>,
    /// Kolmogorov–Smirnov distance of `studentized` to the standard normal.
    pub ks: f64,
    /// Chart direction of the recorded coordinate.
    pub direction: Mat,
    pub n: usize,
    pub seed: u64,
}

/// Sampling distribution of the full Procrustes mean along the model's
/// geodesic direction.
///
/// Each replicate (random stream `r` of `seed`) draws `n` observations,
/// computes their full Procrustes mean and records its chart coordinate
/// along `ν` in the chart at `μ`.
pub fn clt_normality_experiment(
    spec: &PerturbationSpec,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<NormalityRun> {
    if spec.kind != PerturbationKind::Geodesic {
        return Err(ShapeError::InvalidSpec("normality experiment needs the geodesic model".into()));
    }
    if replicates < 2 {
        return Err(ShapeError::InvalidArgument(
            "studentizing needs at least two replicates".into(),
        ));
    }
    let nu = spec.nu.as_ref().expect("validated geodesic spec");
    let chart = build_chart_with_direction(&spec.mu, ChartKind::Shape, nu)?;
    let cfg = MeanConfig::new(Rho::FullProcrustes);
    let raw: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let Samples::Shapes(data) = sample(spec, n, &mut rng)? else {
                unreachable!("geodesic model yields shapes")
            };
            let res = crate::means::full_procrustes_mean(&data, &cfg).map_err(|e| {
                ShapeError::SolverFailure {
                    replicate: r as usize,
                    reason: e.to_string(),
                }
            })?;
            Ok(chart.coordinates(res.mean.entries())?[0])
        })
        .collect::<Result<_>>()?;
    let center = mean(&raw);
    let sd = sample_sd(&raw);
    let studentized: Vec<f64> = if sd > STUDENTIZE_FLOOR {
        raw.iter().map(|x| (x - center) / sd).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(NormalityRun {
        ks: ks_standard_normal(&studentized),
        studentized,
        raw,
        direction: chart.basis[0].clone(),
        n,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, to_preshape};
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn regular_base() -> Mat {
        normalized(&Mat::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.0, 0.7, -0.2, 0.3, 0.0, 0.4])).unwrap()
    }

    fn shape_chart() -> Chart {
        build(regular_base(), ChartKind::Shape, None).unwrap()
    }

    #[test]
    fn chart_dimensions() {
        assert_eq!(shape_chart().dim(), 5);
        let sized = build(regular_base() * 2.0, ChartKind::SizeShape, None).unwrap();
        assert_eq!(sized.dim(), 6);
    }

    #[test]
    fn chart_basis_is_horizontal_and_orthonormal() {
        let c = shape_chart();
        for (i, e) in c.basis.iter().enumerate() {
            for (j, f) in c.basis.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((e.dot(f) - expect).abs() < 1e-10);
            }
            assert!(e.dot(&c.base).abs() < 1e-10);
            for a in skew_basis(3) {
                assert!(e.dot(&(a * &c.base)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn chart_refuses_rank_deficient_base() {
        let base = Mat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            build(base, ChartKind::Shape, None),
            Err(ShapeError::NotOnManifold { rank: 1, required: 2 })
        ));
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = stream_rng(50, 0);
        for kind in [ChartKind::Shape, ChartKind::SizeShape] {
            let c = build(regular_base(), kind, None).unwrap();
            for _ in 0..20 {
                let mut v = DVector::from_fn(c.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
                v *= 0.1 / v.norm();
                let back = c.coordinates(&c.inverse(&v)).unwrap();
                assert!((back - &v).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_base() {
        let c = shape_chart();
        for rho in [Rho::FullProcrustes, Rho::Ziezold] {
            let (g, h) = rho_squared_grad_hess(&c.base, &c, rho).unwrap();
            assert!(g.amax() < 1e-6);
            assert!((&h - DMatrix::identity(5, 5) * 2.0).amax() < 1e-4);
        }
    }

    #[test]
    fn hessian_is_symmetric_and_gradient_matches_difference_quotients() {
        let c = shape_chart();
        let mut rng = stream_rng(51, 0);
        for _ in 0..10 {
            let mut v = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
            v *= 0.3 / v.norm();
            let x = c.inverse(&v);
            let (g, h) = rho_squared_grad_hess(&x, &c, Rho::Ziezold).unwrap();
            assert!((&h - h.transpose()).amax() < 1e-4);
            // an independent quotient with a larger step
            let step = 1e-4;
            for i in 0..5 {
                let mut p = DVector::zeros(5);
                p[i] = step;
                let q = (Rho::Ziezold.squared(&x, &c.inverse(&p)) - Rho::Ziezold.squared(&x, &c.inverse(&-&p)))
                    / (2.0 * step);
                assert!((q - g[i]).abs() <= 1e-3 * g.amax().max(1e-3));
            }
        }
    }

    #[test]
    fn circle_family_analytic_derivatives() {
        // x = cos t μ + sin t e₁ gives ρ²_z(s) = 2(1 − cos(t − atan s)),
        // so the gradient is −2 sin t and the Hessian 2 cos t
        let c = shape_chart();
        for t in [0.1, 0.4, -0.7] {
            let x = &c.base * f64::cos(t) + &c.basis[0] * f64::sin(t);
            let (g, h) = rho_squared_grad_hess(&x, &c, Rho::Ziezold).unwrap();
            assert!((g[0] + 2.0 * f64::sin(t)).abs() < 1e-6);
            assert!((h[(0, 0)] - 2.0 * f64::cos(t)).abs() < 1e-4);
        }
    }

    #[test]
    fn cut_locus_refused() {
        let c = build(
            normalized(&Mat::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.01]))).unwrap(),
            ChartKind::Shape,
            None,
        )
        .unwrap();
        // every rotation of e₃e₃ᵀ has inner product at most 0.01/‖μ‖ with μ
        let mut x = Mat::zeros(3, 3);
        x[(2, 2)] = 1.0;
        assert!(matches!(
            rho_squared_grad_hess(&x, &c, Rho::FullProcrustes),
            Err(ShapeError::CutLocus { .. })
        ));
    }

    #[test]
    fn loss_must_match_chart() {
        let c = shape_chart();
        assert!(rho_squared_grad_hess(&c.base, &c, Rho::PartialProcrustes).is_err());
    }

    fn cluster(rng: &mut impl Rng, center: &Mat, n: usize, sigma: f64) -> Vec<Configuration> {
        (0..n)
            .map(|_| {
                let e = Mat::from_fn(center.nrows(), center.ncols(), |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
                to_preshape(&Configuration::new(center + e).unwrap()).unwrap().as_configuration()
            })
            .collect()
    }

    #[test]
    fn point_mass_has_zero_covariance_and_zero_statistic() {
        let base = Configuration::new(regular_base()).unwrap();
        let data = vec![base.clone(); 10];
        let mean = frechet_mean(&data, &MeanConfig::default()).unwrap();
        let est = estimate_clt(&data, &mean, Rho::FullProcrustes).unwrap();
        assert!(est.sigma.amax() < 1e-18);
        let report = one_sample_test(&data, &base, Rho::FullProcrustes, 0.05).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert!(!report.rejected);
    }

    #[test]
    fn point_mass_away_from_hypothesis_is_degenerate() {
        let c = shape_chart();
        let mut v = DVector::zeros(5);
        v[0] = 0.2;
        let data = vec![Configuration::new(c.inverse(&v)).unwrap(); 10];
        let base = Configuration::new(regular_base()).unwrap();
        assert!(matches!(
            one_sample_test(&data, &base, Rho::FullProcrustes, 0.05),
            Err(ShapeError::DegenerateTest(_))
        ));
    }

    #[test]
    fn concentrated_data_give_positive_definite_a_and_isotropic_sigma() {
        let mut rng = stream_rng(52, 0);
        // tangent noise of equal size in every horizontal direction
        let c = shape_chart();
        let data: Vec<Configuration> = (0..2000)
            .map(|_| {
                let v = DVector::from_fn(5, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
                Configuration::new(c.inverse(&v)).unwrap()
            })
            .collect();
        let mean = frechet_mean(&data, &MeanConfig::default()).unwrap();
        let est = estimate_clt(&data, &mean, Rho::FullProcrustes).unwrap();
        assert!(est.a.clone().symmetric_eigenvalues().min() > 0.0);
        let diag_mean = est.sigma.diagonal().mean();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(est.sigma[(i, j)].abs() / diag_mean < 0.2);
                }
            }
        }
    }

    #[test]
    fn too_few_data() {
        let base = Configuration::new(regular_base()).unwrap();
        let data = vec![base.clone(); 3];
        let mean = frechet_mean(&data, &MeanConfig::default()).unwrap();
        assert!(matches!(
            estimate_clt(&data, &mean, Rho::FullProcrustes),
            Err(ShapeError::TooFewData { needed: 6, got: 3 })
        ));
    }

    #[test]
    fn statistic_is_rotation_invariant() {
        let mut rng = stream_rng(53, 0);
        let base = regular_base();
        let data = cluster(&mut rng, &base, 40, 0.05);
        let hyp = Configuration::new(base).unwrap();
        let g = random_rotation(&mut rng, 3);
        let rotated: Vec<Configuration> = data.iter().map(|x| x.rotated(&g)).collect();
        let a = one_sample_test(&data, &hyp, Rho::FullProcrustes, 0.05).unwrap();
        let b = one_sample_test(&rotated, &hyp.rotated(&g), Rho::FullProcrustes, 0.05).unwrap();
        assert!((a.statistic - b.statistic).abs() <= 1e-6 * a.statistic.max(1e-12), "{} vs {}", a.statistic, b.statistic);
    }

    #[test]
    fn normality_needs_two_replicates() {
        let mu = Mat::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 0.0])) / 2f64.sqrt();
        let nu = Mat::identity(3, 3) / 3f64.sqrt();
        let spec = PerturbationSpec::geodesic(mu, nu, 0.1, 0.0).unwrap();
        assert!(clt_normality_experiment(&spec, 10, 1, 0).is_err());
        let run = clt_normality_experiment(&spec, 10, 50, 0).unwrap();
        assert_eq!(run.studentized.len(), 50);
        // degenerate limit: no spread along the geodesic
        let flat = PerturbationSpec::geodesic(
            Mat::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 0.0])) / 2f64.sqrt(),
            Mat::identity(3, 3) / 3f64.sqrt(),
            0.0,
            0.0,
        )
        .unwrap();
        let run = clt_normality_experiment(&flat, 10, 5, 0).unwrap();
        assert!(run.studentized.iter().all(|&x| x == 0.0));
    }
}
