//! Kendall-space geometry: Helmert centering, pre-shapes, optimal rotations
//! and the quotient distances on shape and size-and-shape space.

use nalgebra::{Matrix2, Matrix3, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Mat, Result, ShapeError};

/// Singular values at or below this (relative to the norm) count as zero
/// when deciding regularity.
pub const RANK_TOL: f64 = 1e-10;

/// Anything that is stored as a Helmertized `m × (k-1)` landmark matrix.
pub trait Landmarks {
    fn matrix(&self) -> &Mat;

    fn m(&self) -> usize {
        self.matrix().nrows()
    }

    /// Number of landmarks before Helmertizing.
    fn k(&self) -> usize {
        self.matrix().ncols() + 1
    }

    fn norm(&self) -> f64 {
        self.matrix().norm()
    }
}

/// Sub-Helmert matrix of size `k × (k-1)`.
///
/// Column `j` (1-based) holds `1/√(j(j+1))` in rows `1..=j`, `-j/√(j(j+1))`
/// in row `j+1` and zeros below.
pub fn helmert_matrix(k: usize) -> Result<Mat> {
    if k < 2 {
        return Err(ShapeError::InvalidDimension(format!(
            "Helmert matrix needs k >= 2, got {k}"
        )));
    }
    let mut h = Mat::zeros(k, k - 1);
    for j in 1..k {
        let jf = j as f64;
        let s = (jf * (jf + 1.0)).sqrt();
        for i in 0..j {
            h[(i, j - 1)] = 1.0 / s;
        }
        h[(j, j - 1)] = -jf / s;
    }
    Ok(h)
}

fn check_dims(m: usize, cols: usize) -> Result<()> {
    if m < 2 {
        return Err(ShapeError::InvalidDimension(format!(
            "spatial dimension must be >= 2, got {m}"
        )));
    }
    if cols < m {
        return Err(ShapeError::InvalidDimension(format!(
            "need k > m landmarks: m = {m}, k = {}",
            cols + 1
        )));
    }
    Ok(())
}

fn check_finite(x: &Mat) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ShapeError::DegenerateConfiguration(
            "non-finite entries".into(),
        ))
    }
}

/// A nonzero Helmertized configuration in `F_m^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    entries: Mat,
}

impl Configuration {
    pub fn new(entries: Mat) -> Result<Self> {
        check_dims(entries.nrows(), entries.ncols())?;
        check_finite(&entries)?;
        if entries.norm() == 0.0 {
            return Err(ShapeError::DegenerateConfiguration(
                "zero configuration".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_matrix_unchecked(entries: Mat) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn into_entries(self) -> Mat {
        self.entries
    }

    pub fn inner(&self, other: &impl Landmarks) -> f64 {
        self.entries.dot(other.matrix())
    }

    pub fn rotated(&self, g: &Rotation) -> Configuration {
        Configuration {
            entries: &g.entries * &self.entries,
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Configuration> {
        Configuration::new(&self.entries * factor)
    }

    /// Un-Helmertized landmark matrix `m × k` with zero mean landmark.
    pub fn landmarks(&self) -> Mat {
        let h = helmert_matrix(self.k()).expect("k >= 2 by construction");
        &self.entries * h.transpose()
    }
}

impl Landmarks for Configuration {
    fn matrix(&self) -> &Mat {
        &self.entries
    }
}

/// Remove translation by right-multiplying the raw `m × k` landmark matrix
/// with the sub-Helmert matrix.
pub fn center(raw: &Mat) -> Result<Configuration> {
    let k = raw.ncols();
    let h = helmert_matrix(k)?;
    check_finite(raw)?;
    let centered = raw * h;
    let scale = raw.amax().max(f64::MIN_POSITIVE);
    if centered.amax() <= 1e-13 * scale {
        return Err(ShapeError::DegenerateConfiguration(
            "all landmarks coincide".into(),
        ));
    }
    check_dims(centered.nrows(), centered.ncols())?;
    Ok(Configuration { entries: centered })
}

/// A point on the pre-shape sphere `S_m^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreShape {
    entries: Mat,
}

impl PreShape {
    /// Accepts a matrix that already has unit Frobenius norm (within `1e-12`).
    pub fn from_unit(entries: Mat) -> Result<Self> {
        check_dims(entries.nrows(), entries.ncols())?;
        let n = entries.norm();
        if (n - 1.0).abs() > 1e-12 {
            return Err(ShapeError::InvalidArgument(format!(
                "pre-shape must have unit norm, got {n}"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn as_configuration(&self) -> Configuration {
        Configuration {
            entries: self.entries.clone(),
        }
    }

    pub fn rotated(&self, g: &Rotation) -> PreShape {
        PreShape {
            entries: &g.entries * &self.entries,
        }
    }

    pub fn shape(&self) -> ShapePoint {
        ShapePoint::new(self.clone())
    }
}

impl Landmarks for PreShape {
    fn matrix(&self) -> &Mat {
        &self.entries
    }
}

impl From<PreShape> for Configuration {
    fn from(p: PreShape) -> Self {
        Configuration { entries: p.entries }
    }
}

/// Project a configuration onto the pre-shape sphere.
pub fn to_preshape(c: &Configuration) -> Result<PreShape> {
    let n = c.entries.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(ShapeError::DegenerateConfiguration(
            "zero norm configuration".into(),
        ));
    }
    Ok(PreShape {
        entries: &c.entries / n,
    })
}

pub(crate) fn normalized(x: &Mat) -> Result<Mat> {
    let n = x.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(ShapeError::DegenerateConfiguration(
            "cannot normalize a zero matrix".into(),
        ));
    }
    Ok(x / n)
}

/// An element of `SO(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    entries: Mat,
}

impl Rotation {
    pub fn new(entries: Mat) -> Result<Self> {
        let m = entries.nrows();
        if entries.ncols() != m {
            return Err(ShapeError::InvalidDimension("rotation must be square".into()));
        }
        let gram = entries.transpose() * &entries;
        let off = (gram - Mat::identity(m, m)).amax();
        let det = entries.determinant();
        if off > 1e-10 || (det - 1.0).abs() > 1e-10 {
            return Err(ShapeError::InvalidArgument(format!(
                "not a rotation: orthogonality defect {off:e}, det {det}"
            )));
        }
        Ok(Self { entries })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            entries: Mat::identity(m, m),
        }
    }

    pub(crate) fn from_matrix_unchecked(entries: Mat) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation {
            entries: &self.entries * &other.entries,
        }
    }

    pub fn transpose(&self) -> Rotation {
        Rotation {
            entries: self.entries.transpose(),
        }
    }
}

/// Rotation drawn from the QR factorization of a Gaussian matrix, with the
/// first column flipped if needed to land in `SO(m)`.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Rotation {
    let mut q = Mat::from_fn(m, m, |_, _| rng.sample(StandardNormal)).qr().q();
    if q.determinant() < 0.0 {
        let col = -q.column(0);
        q.set_column(0, &col);
    }
    Rotation { entries: q }
}

fn rank_flags(x: &Mat) -> (usize, bool, bool) {
    let m = x.nrows();
    let tol = RANK_TOL * x.norm().max(f64::MIN_POSITIVE);
    let rank = x
        .clone()
        .singular_values()
        .iter()
        .filter(|&&s| s > tol)
        .count();
    (rank, rank + 1 < m, rank == m)
}

/// The shape `[x]` of a pre-shape, stored through one representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapePoint {
    rep: PreShape,
    rank: usize,
    rank_deficient: bool,
    strictly_regular: bool,
}

impl ShapePoint {
    pub fn new(rep: PreShape) -> Self {
        let (rank, rank_deficient, strictly_regular) = rank_flags(&rep.entries);
        Self {
            rep,
            rank,
            rank_deficient,
            strictly_regular,
        }
    }

    pub fn rep(&self) -> &PreShape {
        &self.rep
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Rank below `m - 1`: outside the manifold part.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn strictly_regular(&self) -> bool {
        self.strictly_regular
    }
}

impl Landmarks for ShapePoint {
    fn matrix(&self) -> &Mat {
        &self.rep.entries
    }
}

/// The size-and-shape `[x]` of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeShapePoint {
    rep: Configuration,
    rank: usize,
    rank_deficient: bool,
    strictly_regular: bool,
}

impl SizeShapePoint {
    pub fn new(rep: Configuration) -> Self {
        let (rank, rank_deficient, strictly_regular) = rank_flags(&rep.entries);
        Self {
            rep,
            rank,
            rank_deficient,
            strictly_regular,
        }
    }

    pub fn rep(&self) -> &Configuration {
        &self.rep
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn strictly_regular(&self) -> bool {
        self.strictly_regular
    }

    pub fn size(&self) -> f64 {
        self.rep.entries.norm()
    }

    pub fn shape(&self) -> ShapePoint {
        ShapePoint::new(to_preshape(&self.rep).expect("configurations are nonzero"))
    }
}

impl Landmarks for SizeShapePoint {
    fn matrix(&self) -> &Mat {
        &self.rep.entries
    }
}

fn rotation_2d(cross: &Matrix2<f64>) -> Matrix2<f64> {
    // maximize c (M11 + M22) + s (M21 - M12) over the unit circle
    let a = cross[(0, 0)] + cross[(1, 1)];
    let b = cross[(1, 0)] - cross[(0, 1)];
    let r = a.hypot(b);
    if r == 0.0 {
        return Matrix2::identity();
    }
    let (c, s) = (a / r, b / r);
    Matrix2::new(c, -s, s, c)
}

fn rotation_3d(cross: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*cross, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        d[(smallest, smallest)] = -1.0;
    }
    u * d * v_t
}

fn rotation_general(cross: &Mat) -> Mat {
    let m = cross.nrows();
    let svd = cross.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut d = Mat::identity(m, m);
    if (&u * &v_t).determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        d[(smallest, smallest)] = -1.0;
    }
    u * d * v_t
}

/// Rotation `g` maximizing `⟨g x, y⟩` over `SO(m)` and the maximal value.
///
/// Works on raw matrices; callers guarantee matching dimensions.
pub(crate) fn align(x: &Mat, y: &Mat) -> (Mat, f64) {
    let m = x.nrows();
    let cross = y * x.transpose();
    let g = match m {
        2 => {
            let c = Matrix2::new(cross[(0, 0)], cross[(0, 1)], cross[(1, 0)], cross[(1, 1)]);
            let g = rotation_2d(&c);
            Mat::from_column_slice(2, 2, g.as_slice())
        }
        3 => {
            let c = Matrix3::from_column_slice(cross.as_slice());
            let g = rotation_3d(&c);
            Mat::from_column_slice(3, 3, g.as_slice())
        }
        _ => rotation_general(&cross),
    };
    let inner = g.dot(&cross);
    (g, inner)
}

/// Maximal inner product `max_g ⟨g x, y⟩` without materializing `g x`.
pub(crate) fn aligned_inner(x: &Mat, y: &Mat) -> f64 {
    align(x, y).1
}

fn check_match(x: &Mat, y: &Mat) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(ShapeError::DimensionMismatch {
            expected: format!("{}x{}", x.nrows(), x.ncols()),
            got: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    Ok(())
}

/// Optimal rotation putting `x` into optimal position to `y`.
///
/// Returns `g*` maximizing `⟨g x, y⟩` over `SO(m)` via the SVD of `y xᵀ`,
/// with the smallest singular direction flipped when needed to keep
/// `det g* = +1`, and the achieved inner product.
pub fn optimal_rotation(x: &impl Landmarks, y: &impl Landmarks) -> Result<(Rotation, f64)> {
    check_match(x.matrix(), y.matrix())?;
    let (g, inner) = align(x.matrix(), y.matrix());
    Ok((Rotation::from_matrix_unchecked(g), inner))
}

/// Which quotient distance to use on the shape space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ShapeDistance {
    /// Great-circle distance on the pre-shape sphere, minimized over `SO(m)`.
    #[default]
    Intrinsic,
    /// Full Procrustes distance `sin d_i`.
    Procrustes,
    /// Ziezold distance `2 sin(d_i / 2)`.
    Ziezold,
}

impl ShapeDistance {
    /// Distance as a function of the aligned inner product of unit
    /// representatives.
    pub fn from_inner(self, c: f64) -> f64 {
        match self {
            ShapeDistance::Intrinsic => c.clamp(-1.0, 1.0).acos(),
            // the constraint ⟨g x, y⟩ ≥ 0 binds at λ = 0 when c ≤ 0
            ShapeDistance::Procrustes => (1.0 - c.max(0.0).powi(2)).max(0.0).sqrt(),
            ShapeDistance::Ziezold => (2.0 * (1.0 - c)).max(0.0).sqrt(),
        }
    }

    pub fn between(self, a: &impl Landmarks, b: &impl Landmarks) -> Result<f64> {
        check_match(a.matrix(), b.matrix())?;
        let na = a.norm();
        let nb = b.norm();
        let c = aligned_inner(a.matrix(), b.matrix()) / (na * nb);
        Ok(self.from_inner(c))
    }
}

/// Intrinsic distance `d⁽ⁱ⁾` on `Σ_m^k`.
pub fn dist_shape_intrinsic(a: &ShapePoint, b: &ShapePoint) -> Result<f64> {
    ShapeDistance::Intrinsic.between(a, b)
}

/// Full Procrustes distance `d⁽ᵖ⁾`.
pub fn dist_shape_procrustes(a: &ShapePoint, b: &ShapePoint) -> Result<f64> {
    ShapeDistance::Procrustes.between(a, b)
}

/// Ziezold distance `d⁽ᶻ⁾`.
pub fn dist_shape_ziezold(a: &ShapePoint, b: &ShapePoint) -> Result<f64> {
    ShapeDistance::Ziezold.between(a, b)
}

/// Intrinsic distance on size-and-shape space.
pub fn dist_sizeshape(a: &SizeShapePoint, b: &SizeShapePoint) -> Result<f64> {
    check_match(a.matrix(), b.matrix())?;
    Ok(sizeshape_distance_raw(a.matrix(), b.matrix()))
}

pub(crate) fn sizeshape_distance_raw(a: &Mat, b: &Mat) -> f64 {
    let c = aligned_inner(a, b);
    (a.norm_squared() + b.norm_squared() - 2.0 * c)
        .max(0.0)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn random_mat(rng: &mut impl Rng, m: usize, c: usize) -> Mat {
        Mat::from_fn(m, c, |_, _| rng.sample(StandardNormal))
    }

    fn random_preshape(rng: &mut impl Rng, m: usize, c: usize) -> PreShape {
        to_preshape(&Configuration::new(random_mat(rng, m, c)).unwrap()).unwrap()
    }


    #[test]
    fn helmert_k3_matches_display() {
        let h = helmert_matrix(3).unwrap();
        let s2 = 2f64.sqrt();
        let s6 = 6f64.sqrt();
        let expected = Mat::from_row_slice(3, 2, &[1. / s2, 1. / s6, -1. / s2, 1. / s6, 0., -2. / s6]);
        assert!((h - expected).amax() < 1e-15);
    }

    #[test]
    fn helmert_k2() {
        let h = helmert_matrix(2).unwrap();
        let s2 = 2f64.sqrt();
        assert!((h[(0, 0)] - 1. / s2).abs() < 1e-15);
        assert!((h[(1, 0)] + 1. / s2).abs() < 1e-15);
    }

    #[test]
    fn helmert_rejects_small_k() {
        assert!(matches!(helmert_matrix(1), Err(ShapeError::InvalidDimension(_))));
        assert!(helmert_matrix(0).is_err());
    }

    #[test]
    fn helmert_orthonormal_zero_sum_up_to_100() {
        for k in 2..=100 {
            let h = helmert_matrix(k).unwrap();
            let gram = h.transpose() * &h;
            assert!((gram - Mat::identity(k - 1, k - 1)).amax() < 1e-13, "k={k}");
            for j in 0..k - 1 {
                assert!(h.column(j).sum().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn center_rejects_coinciding_landmarks() {
        let raw = Mat::from_row_slice(2, 3, &[1.5, 1.5, 1.5, -2.0, -2.0, -2.0]);
        assert!(matches!(center(&raw), Err(ShapeError::DegenerateConfiguration(_))));
    }

    #[test]
    fn center_matches_hand_product() {
        // raw = [[1,0,-1],[0,0,0]]; raw·H by hand:
        // col 1: (1 - 0)/√2 = 1/√2, col 2: (1 + 0 + 2)/√6 = 3/√6
        let raw = Mat::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
        let c = center(&raw).unwrap();
        assert!((c.entries()[(0, 0)] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((c.entries()[(0, 1)] - 3.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.entries()[(1, 0)], 0.0);
        // un-Helmerting reproduces raw minus its mean landmark
        let back = c.landmarks();
        let mean = raw.column_mean();
        for j in 0..3 {
            let expect = raw.column(j) - &mean;
            assert!((back.column(j) - expect).amax() < 1e-15);
        }
    }

    #[test]
    fn center_is_isometry_on_centered_input() {
        let raw = Mat::from_row_slice(
            3,
            4,
            &[1.0, -1.0, 0.5, -0.5, 0.0, 2.0, -1.0, -1.0, 0.3, 0.3, -0.3, -0.3],
        );
        let c = center(&raw).unwrap();
        assert!((c.norm() - raw.norm()).abs() < 1e-13);
    }

    #[test]
    fn preshape_projection() {
        let mut rng = stream_rng(1, 0);
        let c = Configuration::new(random_mat(&mut rng, 3, 5)).unwrap();
        let p = to_preshape(&c).unwrap();
        assert!((p.norm() - 1.0).abs() < 1e-12);
        let p2 = to_preshape(&c.scaled(2.0).unwrap()).unwrap();
        assert!((p.entries() - p2.entries()).amax() < 1e-15);
        let again = to_preshape(&p.as_configuration()).unwrap();
        assert!((again.entries() - p.entries()).amax() < 1e-15);
        assert!(Configuration::new(Mat::zeros(3, 5)).is_err());
    }

    #[test]
    fn optimal_rotation_recovers_known_rotation() {
        let mut rng = stream_rng(2, 0);
        for m in [2, 3, 4] {
            let x = Configuration::new(random_mat(&mut rng, m, m + 2)).unwrap();
            let g = random_rotation(&mut rng, m);
            let y = x.rotated(&g);
            let (found, inner) = optimal_rotation(&x, &y).unwrap();
            assert!((found.entries() - g.entries()).amax() < 1e-10, "m={m}");
            assert!((inner - x.inner(&x)).abs() < 1e-10);
        }
    }

    #[test]
    fn optimal_rotation_identity_for_equal_inputs() {
        let mut rng = stream_rng(3, 0);
        let x = Configuration::new(random_mat(&mut rng, 3, 4)).unwrap();
        let (g, inner) = optimal_rotation(&x, &x).unwrap();
        assert!((g.entries() - Mat::identity(3, 3)).amax() < 1e-12);
        assert!((inner - x.norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn optimal_rotation_dominates_random_rotations() {
        let mut rng = stream_rng(4, 0);
        let x = Configuration::new(random_mat(&mut rng, 3, 3)).unwrap();
        let y = Configuration::new(random_mat(&mut rng, 3, 3)).unwrap();
        let (g, inner) = optimal_rotation(&x, &y).unwrap();
        assert!(Rotation::new(g.entries().clone()).is_ok());
        for _ in 0..1000 {
            let h = random_rotation(&mut rng, 3);
            assert!(inner >= x.rotated(&h).inner(&y) - 1e-12);
        }
    }

    #[test]
    fn optimal_rotation_dimension_mismatch() {
        let a = Configuration::new(Mat::identity(3, 3)).unwrap();
        let b = Configuration::new(Mat::identity(3, 4)).unwrap();
        assert!(matches!(
            optimal_rotation(&a, &b),
            Err(ShapeError::DimensionMismatch { .. })
        ));
        assert!(dist_sizeshape(&SizeShapePoint::new(a), &SizeShapePoint::new(b)).is_err());
    }

    #[test]
    fn optimal_rotation_is_idempotent() {
        let mut rng = stream_rng(5, 0);
        let x = Configuration::new(random_mat(&mut rng, 3, 4)).unwrap();
        let y = Configuration::new(random_mat(&mut rng, 3, 4)).unwrap();
        let (g, _) = optimal_rotation(&x, &y).unwrap();
        let aligned = x.rotated(&g);
        let (again, _) = optimal_rotation(&aligned, &y).unwrap();
        assert!((again.entries() - Mat::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn distances_vanish_on_identical_shapes() {
        let mut rng = stream_rng(6, 0);
        let p = random_preshape(&mut rng, 3, 4).shape();
        assert!(dist_shape_intrinsic(&p, &p).unwrap() < 1e-7);
        assert!(dist_shape_procrustes(&p, &p).unwrap() < 1e-7);
        assert!(dist_shape_ziezold(&p, &p).unwrap() < 1e-7);
        let s = SizeShapePoint::new(p.rep().as_configuration());
        assert!(dist_sizeshape(&s, &s).unwrap() < 1e-7);
    }

    #[test]
    fn procrustes_and_ziezold_are_sines_of_intrinsic() {
        let mut rng = stream_rng(7, 0);
        for _ in 0..200 {
            let a = random_preshape(&mut rng, 3, 4).shape();
            let b = random_preshape(&mut rng, 3, 4).shape();
            let di = dist_shape_intrinsic(&a, &b).unwrap();
            let dz = dist_shape_ziezold(&a, &b).unwrap();
            assert!((dz - 2.0 * (di / 2.0).sin()).abs() < 1e-12);
            if di <= std::f64::consts::FRAC_PI_2 {
                let dp = dist_shape_procrustes(&a, &b).unwrap();
                assert!((dp - di.sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn procrustes_distance_is_one_beyond_right_angle() {
        // both diagonal with opposite signs on every entry: no rotation helps
        // because det(-I) = -1 in 3D; the best is flipping two signs.
        let a = PreShape::from_unit(Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0, 0.0, 0.0,
        ])))
        .unwrap();
        let b = PreShape::from_unit(Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            0.0, 1.0, 0.0,
        ])))
        .unwrap();
        // ranks are 1 here, max inner product is 0
        let d = dist_shape_procrustes(&a.shape(), &b.shape()).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert_eq!(ShapeDistance::Procrustes.from_inner(-0.3), 1.0);
    }

    #[test]
    fn ziezold_matches_brute_force_over_rotations() {
        let mut rng = stream_rng(8, 0);
        let x = random_preshape(&mut rng, 3, 3);
        let y = random_preshape(&mut rng, 3, 3);
        let dz = dist_shape_ziezold(&x.shape(), &y.shape()).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..100_000 {
            let g = random_rotation(&mut rng, 3);
            best = best.min((x.rotated(&g).entries() - y.entries()).norm());
        }
        assert!(best >= dz - 1e-12);
        // sampled rotations approach the optimum from above; the gap shrinks
        // like the square of the angular grid resolution
        assert!(best - dz < 1e-2, "brute {best} vs {dz}");
    }

    #[test]
    fn regularity_flags() {
        let full = PreShape::from_unit(Mat::identity(3, 3) / 3f64.sqrt()).unwrap().shape();
        assert!(full.strictly_regular() && !full.rank_deficient());
        let two = PreShape::from_unit(
            Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, 0.0])) / 2f64.sqrt(),
        )
        .unwrap()
        .shape();
        assert!(!two.strictly_regular() && !two.rank_deficient());
        assert_eq!(two.rank(), 2);
        let one = PreShape::from_unit(
            Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0])),
        )
        .unwrap()
        .shape();
        assert!(one.rank_deficient());
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::new(Mat::identity(3, 3)).is_ok());
        let reflect = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, -1.0]));
        assert!(Rotation::new(reflect).is_err());
        assert!(Rotation::new(Mat::identity(3, 3) * 2.0).is_err());
    }
}
