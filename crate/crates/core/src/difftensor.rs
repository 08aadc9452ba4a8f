//! Diffusion tensors as size-and-shapes.
//!
//! A positive semi-definite `a` is factored as `a = uᵀu` with `u` in a
//! canonical upper-triangular echelon form; `u` read as a Helmertized
//! configuration of `m + 1` landmarks gives the size-and-shape `τ_s(a)`, its
//! normalization the shape `τ(a)`. Means of size-and-shapes are pulled back
//! through the same factorization.

use nalgebra::{Cholesky, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::geometry::normalized;
use crate::means::{frechet_mean, MeanConfig, MeanResult, Rho};
use crate::rng::stream_rng;
use crate::{Configuration, Mat, PreShape, Result, ShapeError, ShapePoint, SizeShapePoint};

/// Absolute tolerance on symmetry and on negative eigenvalues.
pub const PSD_TOL: f64 = 1e-10;
/// Eigenvalues at or below this fraction of the largest are set to zero.
pub const EIGEN_SNAP: f64 = 1e-12;
/// Residual column norms (relative to `‖b‖`) at or below this count as zero
/// in the Gram–Schmidt pivot search.
pub const PIVOT_TOL: f64 = 1e-12;

/// A nonzero symmetric positive semi-definite `m × m` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTensor {
    entries: Mat,
}

impl DiffusionTensor {
    pub fn new(entries: Mat) -> Result<Self> {
        let m = entries.nrows();
        if m == 0 || entries.ncols() != m {
            return Err(ShapeError::InvalidDimension(format!(
                "tensor must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(ShapeError::InvalidArgument("non-finite tensor entry".into()));
        }
        let asym = (&entries - entries.transpose()).amax();
        if asym > PSD_TOL {
            return Err(ShapeError::InvalidArgument(format!(
                "tensor is not symmetric (defect {asym:e})"
            )));
        }
        if entries.amax() == 0.0 {
            return Err(ShapeError::DegenerateConfiguration("zero tensor".into()));
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        let smallest = sym.clone().symmetric_eigenvalues().min();
        if smallest < -PSD_TOL {
            return Err(ShapeError::NotPsd {
                eigenvalue: smallest,
            });
        }
        Ok(Self { entries: sym })
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Numerical rank with eigenvalues snapped as in the factorization.
    pub fn rank(&self) -> usize {
        let ev = self.entries.clone().symmetric_eigenvalues();
        let cut = EIGEN_SNAP * ev.max().max(0.0);
        ev.iter().filter(|&&l| l > cut).count()
    }
}

/// Upper-triangular matrix in the canonical echelon form: rows
/// `0..rank` have strictly increasing pivot columns with positive leading
/// entries (the last row may lead with a negative entry), later rows vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperTriangularCanonical {
    entries: Mat,
    pivots: Vec<usize>,
}

impl UpperTriangularCanonical {
    /// Validate the echelon pattern of `entries` and record its pivots.
    pub fn new(entries: Mat) -> Result<Self> {
        let pivots = echelon_pivots(&entries)?;
        Ok(Self { entries, pivots })
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Whether `u_mm ≥ 0`, the closed region that is the image of the
    /// factorization.
    pub fn is_nonnegative_corner(&self) -> bool {
        let m = self.entries.nrows();
        self.entries[(m - 1, m - 1)] >= 0.0
    }

    pub fn tensor(&self) -> Mat {
        self.entries.transpose() * &self.entries
    }
}

/// Pivot columns of an echelon-form square matrix; error if the pattern
/// is violated.
pub fn echelon_pivots(u: &Mat) -> Result<Vec<usize>> {
    let m = u.nrows();
    if u.ncols() != m {
        return Err(ShapeError::InvalidDimension("echelon matrix must be square".into()));
    }
    let mut pivots = Vec::new();
    let mut zero_seen = false;
    for i in 0..m {
        let lead = (0..m).find(|&j| u[(i, j)] != 0.0);
        match lead {
            None => zero_seen = true,
            Some(j) => {
                if zero_seen {
                    return Err(ShapeError::InvalidBasis(format!(
                        "nonzero row {i} below a zero row"
                    )));
                }
                if pivots.last().is_some_and(|&p| j <= p) {
                    return Err(ShapeError::InvalidBasis(format!(
                        "pivot of row {i} is not right of the previous pivot"
                    )));
                }
                if u[(i, j)] < 0.0 && i != m - 1 {
                    return Err(ShapeError::InvalidBasis(format!(
                        "negative leading entry in row {i}"
                    )));
                }
                pivots.push(j);
            }
        }
    }
    if pivots.is_empty() {
        return Err(ShapeError::DegenerateConfiguration("zero matrix".into()));
    }
    Ok(pivots)
}

/// Factor `b = g u` with `g ∈ SO(m)` and `u` upper-triangular echelon.
///
/// Columns of `b` are swept left to right; a column whose residual after
/// removing the directions found so far exceeds `PIVOT_TOL · ‖b‖` becomes
/// the next direction. Directions are completed to an orientation
/// preserving basis by flipping the last one if needed, which may leave a
/// negative `u_mm`.
pub fn gram_schmidt_so(b: &Mat) -> Result<(Mat, UpperTriangularCanonical)> {
    let m = b.nrows();
    let scale = b.norm();
    if scale == 0.0 {
        return Err(ShapeError::DegenerateConfiguration("zero matrix".into()));
    }
    let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut pivots = Vec::new();
    for j in 0..b.ncols() {
        if dirs.len() == m {
            break;
        }
        let mut r = b.column(j).clone_owned();
        for _ in 0..2 {
            for q in &dirs {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let n = r.norm();
        if n > PIVOT_TOL * scale {
            dirs.push(r / n);
            pivots.push(j);
        }
    }
    let rank = dirs.len();
    for e in 0..m {
        if dirs.len() == m {
            break;
        }
        let mut r = DVector::from_fn(m, |i, _| if i == e { 1.0 } else { 0.0 });
        for _ in 0..2 {
            for q in &dirs {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let n = r.norm();
        if n > 1e-6 {
            dirs.push(r / n);
        }
    }
    let mut g = Mat::from_columns(&dirs);
    if g.determinant() < 0.0 {
        let col = -g.column(m - 1);
        g.set_column(m - 1, &col);
    }
    let mut u = g.transpose() * b;
    for i in 0..m {
        let start = if i < rank { pivots[i] } else { m };
        for j in 0..start.min(m) {
            u[(i, j)] = 0.0;
        }
    }
    Ok((g, UpperTriangularCanonical { entries: u, pivots }))
}

/// Extended Cholesky factorization `a = uᵀu` with `u_mm ≥ 0`.
///
/// Tensors whose leading `m − 1` pivots are positive go through the
/// Cholesky recursion directly. Otherwise `a = V Λ Vᵀ` with `V ∈ SO(m)`,
/// `b = √Λ Vᵀ`, then `b = g u` by [`gram_schmidt_so`]. Agrees with the classical Cholesky factor on
/// positive definite input and extends it to the semi-definite boundary.
pub fn extended_cholesky(a: &DiffusionTensor) -> Result<UpperTriangularCanonical> {
    let eigenvalues = a.entries.symmetric_eigenvalues();
    let deficient = eigenvalues.min() <= EIGEN_SNAP * eigenvalues.max().max(0.0);
    if let Some(u) = direct_cholesky(&a.entries, deficient) {
        return Ok(u);
    }
    let m = a.dim();
    let eig = a.entries.clone().symmetric_eigen();
    let mut v = eig.eigenvectors;
    if v.determinant() < 0.0 {
        let col = -v.column(0);
        v.set_column(0, &col);
    }
    let lmax = eig.eigenvalues.max().max(0.0);
    let mut b = v.transpose();
    for i in 0..m {
        let l = eig.eigenvalues[i];
        if l < -PSD_TOL {
            return Err(ShapeError::NotPsd { eigenvalue: l });
        }
        let root = if l <= EIGEN_SNAP * lmax { 0.0 } else { l.sqrt() };
        let mut row = b.row_mut(i);
        row *= root;
    }
    let (_, mut u) = gram_schmidt_so(&b)?;
    let corner = u.entries[(m - 1, m - 1)];
    if corner < 0.0 {
        // flipping the last row keeps uᵀu and restores u_mm ≥ 0
        let row = -u.entries.row(m - 1);
        u.entries.set_row(m - 1, &row);
    }
    Ok(u)
}

/// Cholesky recursion for tensors whose first `m − 1` pivots are clearly
/// positive. For singular `a` the last row is left zero: the last pivot
/// vanishes exactly, and taking the root of its rounding error would cost
/// half the digits. `None` if an earlier pivot vanishes.
fn direct_cholesky(a: &Mat, singular: bool) -> Option<UpperTriangularCanonical> {
    let m = a.nrows();
    let scale = a.diagonal().max();
    let mut u = Mat::zeros(m, m);
    for i in 0..m {
        if singular && i + 1 == m {
            return Some(UpperTriangularCanonical {
                entries: u,
                pivots: (0..m - 1).collect(),
            });
        }
        let d = a[(i, i)] - (0..i).map(|k| u[(k, i)] * u[(k, i)]).sum::<f64>();
        if d <= EIGEN_SNAP * scale {
            return None;
        }
        let root = d.sqrt();
        u[(i, i)] = root;
        for j in i + 1..m {
            u[(i, j)] = (a[(i, j)] - (0..i).map(|k| u[(k, i)] * u[(k, j)]).sum::<f64>()) / root;
        }
    }
    Some(UpperTriangularCanonical {
        entries: u,
        pivots: (0..m).collect(),
    })
}

/// Size-and-shape `τ_s(a)`: the factor `u` as a Helmertized configuration
/// of `m + 1` landmarks. The rank flags of the result mark tensors of rank
/// below `m − 1`, where the map is not injective.
pub fn tau_s(a: &DiffusionTensor) -> Result<SizeShapePoint> {
    let u = extended_cholesky(a)?;
    Ok(SizeShapePoint::new(Configuration::new(u.entries)?))
}

/// Shape `τ(a)`: `τ_s(a)` scaled to unit size.
pub fn tau(a: &DiffusionTensor) -> Result<ShapePoint> {
    let u = extended_cholesky(a)?;
    Ok(ShapePoint::new(PreShape::from_unit(normalized(&u.entries)?)?))
}

/// Pull a size-and-shape representative back to a tensor: `uᵀu` for the
/// echelon factor of `x`, provided `u_mm` is not negative.
pub fn pull_back(x: &Mat) -> Result<DiffusionTensor> {
    let (_, u) = gram_schmidt_so(x)?;
    let m = x.nrows();
    let corner = u.entries[(m - 1, m - 1)];
    if corner < -PSD_TOL * u.entries.norm() {
        return Err(ShapeError::PullBackUndefined { value: corner });
    }
    DiffusionTensor::new(u.tensor())
}

/// Mean tensor together with the underlying Fréchet mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMean {
    pub tensor: DiffusionTensor,
    pub mean: MeanResult,
}

/// Fréchet mean of tensors computed on their size-and-shapes and pulled back.
///
/// With the partial Procrustes loss the size-and-shape mean is pulled back
/// directly. The shape losses only determine a mean shape; it is scaled by
/// the average size of the inputs before pulling back.
pub fn mean_tensor(tensors: &[DiffusionTensor], rho: Rho, cfg: &MeanConfig) -> Result<TensorMean> {
    if tensors.is_empty() {
        return Err(ShapeError::TooFewData { needed: 1, got: 0 });
    }
    let m = tensors[0].dim();
    let mut configs = Vec::with_capacity(tensors.len());
    for t in tensors {
        let rank = t.rank();
        if rank + 1 < m {
            return Err(ShapeError::NotOnManifold {
                rank,
                required: m - 1,
            });
        }
        configs.push(Configuration::new(extended_cholesky(t)?.entries)?);
    }
    let cfg = MeanConfig {
        rho,
        ..cfg.clone()
    };
    let mean = frechet_mean(&configs, &cfg)?;
    let rep = if rho.is_shape() {
        let size = configs.iter().map(|c| c.entries().norm()).sum::<f64>() / configs.len() as f64;
        mean.mean.entries() * size
    } else {
        mean.mean.entries().clone()
    };
    Ok(TensorMean {
        tensor: pull_back(&rep)?,
        mean,
    })
}

/// Result of the Monte-Carlo check that the Cholesky factor is biased.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyBias {
    pub m: usize,
    pub samples: usize,
    /// Monte-Carlo mean of the `(1,1)` Cholesky entry.
    pub empirical: f64,
    pub std_error: f64,
    /// `√2 Γ((m+1)/2) / Γ(m/2)`.
    pub lower_bound: f64,
    /// `false` for `m = 1`, where the bound drops below one and says nothing.
    pub applicable: bool,
}

/// `√2 Γ((m+1)/2) / Γ(m/2)`, the mean of a chi variable with `m` degrees of
/// freedom.
pub fn chi_mean(m: usize) -> f64 {
    let m = m as f64;
    2f64.sqrt() * gamma((m + 1.0) / 2.0) / gamma(m / 2.0)
}

const BIAS_CHUNKS: usize = 64;

/// Monte-Carlo mean of `chol((e + ε)ᵀ(e + ε))₁₁` for standard normal `ε`.
pub fn cholesky_bias_check(m: usize, samples: usize, seed: u64) -> Result<CholeskyBias> {
    if m == 0 || samples < 2 {
        return Err(ShapeError::InvalidArgument(
            "need m >= 1 and at least two samples".into(),
        ));
    }
    let sums: Vec<(f64, f64)> = (0..BIAS_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let count = samples / BIAS_CHUNKS + usize::from(chunk < samples % BIAS_CHUNKS);
            let mut rng = stream_rng(seed, chunk as u64);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let x = Mat::identity(m, m) + Mat::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
                let a = x.transpose() * &x;
                let v = match Cholesky::new(a.clone()) {
                    Some(c) => c.l()[(0, 0)],
                    None => a[(0, 0)].sqrt(),
                };
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    let n = samples as f64;
    let mean = s / n;
    let var = (s2 - n * mean * mean) / (n - 1.0);
    Ok(CholeskyBias {
        m,
        samples,
        empirical: mean,
        std_error: (var / n).sqrt(),
        lower_bound: chi_mean(m),
        applicable: m > 1,
    })
}
