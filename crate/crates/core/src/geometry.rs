//! Rigid-body math: rotation representations, the closed-form triplet pose
//! solver, and the RRE/RTE error metrics.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};

/// Below this angle a rotation is treated as the identity.
pub const SMALL_ANGLE_EPS: f64 = 1e-8;

/// Within this distance of π the axis sign is canonicalized.
pub const HALF_TURN_EPS: f64 = 1e-6;

pub type Vec3 = Vector3<f64>;

/// Axis-angle encoding of a rotation: direction is the axis, norm the angle
/// in radians, kept in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle(pub Vec3);

impl AxisAngle {
    pub fn zero() -> Self {
        AxisAngle(Vec3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

/// Rotation plus translation; maps `p` to `rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vec3::zeros())
    }

    pub fn from_axis_angle(r: &AxisAngle, translation: Vec3) -> Self {
        Self::new(axis_angle_to_rotation(r), translation)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4×4 entries.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_homogeneous();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(v: &[f64; 16]) -> Self {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::new(rotation, Vec3::new(v[3], v[7], v[11]))
    }

    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let dr = (self.rotation - other.rotation).abs().max();
        let dt = (self.translation - other.translation).abs().max();
        dr.max(dt)
    }
}

/// True if `m` is orthonormal with determinant +1 within `tol`.
pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    let ortho = (m.transpose() * m - Matrix3::identity()).abs().max() <= tol;
    ortho && (m.determinant() - 1.0).abs() <= tol
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn clamped_acos(x: f64) -> f64 {
    x.clamp(-1.0, 1.0).acos()
}

/// Flip `a` so that its first component with magnitude above 1e-12 is positive.
fn canonical_sign(a: Vec3) -> Vec3 {
    for k in 0..3 {
        if a[k].abs() > 1e-12 {
            return if a[k] < 0.0 { -a } else { a };
        }
    }
    a
}

/// Matrix → axis-angle via the trace/skew-part formula.
///
/// The angle comes from `acos((tr(R) - 1) / 2)`. Away from 0 and π the axis is
/// the normalized skew part. Near π the skew part vanishes, so the axis is
/// read from the symmetric part `(R + Rᵀ)/2 = cos θ·I + (1 - cos θ)·a·aᵀ` and
/// its sign canonicalized.
pub fn rotation_to_axis_angle(r: &Matrix3<f64>) -> AxisAngle {
    let cos_theta = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let w = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    // Same angle as acos(cos θ), but keeps full precision near 0 and π where
    // acos loses about half the digits.
    let theta = (w.norm() / 2.0).atan2(cos_theta);
    if theta < SMALL_ANGLE_EPS {
        return AxisAngle::zero();
    }
    if theta <= PI - HALF_TURN_EPS {
        let n = w.norm();
        if n > 0.0 {
            return AxisAngle(w * (theta / n));
        }
    }

    let sym = (r + r.transpose()) * 0.5;
    let scale = 1.0 - cos_theta;
    let outer = (sym - Matrix3::identity() * cos_theta) / scale;
    // Largest diagonal entry gives the best-conditioned column of a·aᵀ.
    let mut k = 0;
    for i in 1..3 {
        if outer[(i, i)] > outer[(k, k)] {
            k = i;
        }
    }
    let mut axis = outer.column(k).into_owned() / outer[(k, k)].max(f64::MIN_POSITIVE).sqrt();
    axis.normalize_mut();
    if theta > PI - HALF_TURN_EPS {
        axis = canonical_sign(axis);
    } else if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    AxisAngle(axis * theta)
}

/// Rodrigues' formula: `I + sin θ·K + (1 - cos θ)·K²`.
pub fn axis_angle_to_rotation(r: &AxisAngle) -> Matrix3<f64> {
    let theta = r.0.norm();
    if theta < SMALL_ANGLE_EPS {
        return Matrix3::identity();
    }
    let k = skew(&(r.0 / theta));
    Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
}

/// Closed-form least-squares rigid alignment of `src` onto `dst`.
///
/// Both sets are centered, the cross-covariance `H = Σ p̃·q̃ᵀ = U Σ Vᵀ` is
/// decomposed, and `R = V·diag(1, 1, det(V Uᵀ))·Uᵀ`, `t = q̄ - R·p̄`.
pub fn solve_procrustes(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::DegenerateInput(format!(
            "point lists differ in length ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 point pairs, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let p_bar = src.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let q_bar = dst.iter().fold(Vec3::zeros(), |acc, q| acc + q) / n;

    let mut h = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        h += (p - p_bar) * (q - q_bar).transpose();
    }
    if !h.iter().all(|x| x.is_finite()) {
        return Err(Error::DegenerateInput("non-finite covariance".into()));
    }

    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateInput("SVD did not converge".into())),
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let rotation = v * correction * u.transpose();
    let translation = q_bar - rotation * p_bar;
    Ok(RigidTransform::new(rotation, translation))
}

pub fn apply_transform(t: &RigidTransform, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| t.apply(p)).collect()
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn inverse(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Sum of squared residuals `Σ ‖q - T(p)‖²`.
pub fn residual(t: &RigidTransform, src: &[Vec3], dst: &[Vec3]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(p, q)| (q - t.apply(p)).norm_squared())
        .sum()
}

/// Relative rotation error in radians: `acos((tr(Rpᵀ Rg) - 1) / 2)`.
///
/// Below 60 degrees the same angle is taken from the chord
/// `‖Rp - Rg‖_F = 2√2 sin(θ/2)`, which is exact at zero where `acos` is not.
pub fn rre(pred: &Matrix3<f64>, gt: &Matrix3<f64>) -> f64 {
    let c = ((pred.transpose() * gt).trace() - 1.0) / 2.0;
    if c < 0.5 {
        clamped_acos(c)
    } else {
        2.0 * ((pred - gt).norm() / (2.0 * std::f64::consts::SQRT_2)).min(1.0).asin()
    }
}

/// Relative translation error in meters (Euclidean norm, not squared).
pub fn rte(pred_t: &Vec3, gt_t: &Vec3) -> f64 {
    (pred_t - gt_t).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPair {
    /// radians
    pub rre: f64,
    /// meters
    pub rte: f64,
}

impl MetricPair {
    pub fn between(pred: &RigidTransform, gt: &RigidTransform) -> Self {
        Self {
            rre: rre(&pred.rotation, &gt.rotation),
            rte: rte(&pred.translation, &gt.translation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn identity_to_zero_vector() {
        let r = rotation_to_axis_angle(&Matrix3::identity());
        assert_eq!(r.0, Vec3::zeros());
    }

    #[test]
    fn quarter_turn_about_z() {
        let m = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let r = rotation_to_axis_angle(&m);
        assert_abs_diff_eq!(r.0, Vec3::new(0.0, 0.0, PI / 2.0), epsilon = 1e-12);
    }

    #[test]
    fn half_turn_about_x() {
        let m = axis_angle_to_rotation(&AxisAngle(Vec3::new(PI, 0.0, 0.0)));
        let expected = Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        assert_abs_diff_eq!(m, expected, epsilon = 1e-12);
        // and back, with a positive first component
        let r = rotation_to_axis_angle(&expected);
        assert_abs_diff_eq!(r.0, Vec3::new(PI, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn half_turn_sign_is_canonical() {
        let axis = Vec3::new(-1.0, 2.0, -0.5).normalize();
        let m = axis_angle_to_rotation(&AxisAngle(axis * PI));
        let r = rotation_to_axis_angle(&m);
        assert!(r.0.x > 0.0);
        assert_abs_diff_eq!(r.0.norm(), PI, epsilon = 1e-9);
        assert_abs_diff_eq!(axis_angle_to_rotation(&r), m, epsilon = 1e-9);
    }

    #[test]
    fn near_half_turn_round_trips_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let axis = random_unit(&mut rng);
            let theta = PI - rng.random_range(0.0..2e-6);
            let m = axis_angle_to_rotation(&AxisAngle(axis * theta));
            let back = axis_angle_to_rotation(&rotation_to_axis_angle(&m));
            assert!((back - m).abs().max() < 1e-5);
        }
    }

    #[test]
    fn tiny_angle_collapses_to_zero() {
        let m = axis_angle_to_rotation(&AxisAngle(Vec3::new(1e-10, 0.0, 0.0)));
        assert_eq!(m, Matrix3::identity());
        assert_eq!(rotation_to_axis_angle(&m).0, Vec3::zeros());
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let axis = random_unit(&mut rng);
            let theta = rng.random_range(1e-4..PI - 1e-3);
            let m = axis_angle_to_rotation(&AxisAngle(axis * theta));
            assert!(is_rotation(&m, 1e-9));
            let r = rotation_to_axis_angle(&m);
            assert!(r.angle() <= PI);
            let back = axis_angle_to_rotation(&r);
            assert!((back - m).abs().max() <= 1e-9);
        }
    }

    #[test]
    fn z_rotations_compose_additively() {
        for &(a, b) in &[(0.1, 0.2), (1.0, 1.5), (0.3, 2.7)] {
            let ra = axis_angle_to_rotation(&AxisAngle(Vec3::new(0.0, 0.0, a)));
            let rb = axis_angle_to_rotation(&AxisAngle(Vec3::new(0.0, 0.0, b)));
            let rab = axis_angle_to_rotation(&AxisAngle(Vec3::new(0.0, 0.0, a + b)));
            assert_abs_diff_eq!(rb * ra, rab, epsilon = 1e-12);
        }
    }

    #[test]
    fn procrustes_identity() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.5),
        ];
        let t = solve_procrustes(&pts, &pts).unwrap();
        assert!(t.max_abs_diff(&RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn procrustes_recovers_generating_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = AxisAngle(random_unit(&mut rng) * rng.random_range(0.0..PI - 1e-3));
            let gt = RigidTransform::from_axis_angle(
                &r,
                Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ),
            );
            let src: Vec<Vec3> = (0..3)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let dst = apply_transform(&gt, &src);
            let est = solve_procrustes(&src, &dst).unwrap();
            assert!(is_rotation(&est.rotation, 1e-9));
            assert!(est.max_abs_diff(&gt) < 1e-9, "{}", est.max_abs_diff(&gt));
        }
    }

    #[test]
    fn procrustes_mirror_keeps_proper_rotation() {
        let src = vec![
            Vec3::new(0.1, 0.2, 0.3),
            Vec3::new(1.0, -0.2, 0.4),
            Vec3::new(-0.3, 0.9, -0.1),
            Vec3::new(0.5, 0.5, 1.2),
        ];
        let dst: Vec<Vec3> = src.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let t = solve_procrustes(&src, &dst).unwrap();
        assert_abs_diff_eq!(t.rotation.determinant(), 1.0, epsilon = 1e-9);
        assert!(residual(&t, &src, &dst) > 1e-3);
    }

    #[test]
    fn procrustes_rejects_bad_input() {
        let a = vec![Vec3::zeros(); 2];
        assert!(matches!(
            solve_procrustes(&a, &a),
            Err(Error::DegenerateInput(_))
        ));
        let b = vec![Vec3::zeros(); 3];
        assert!(matches!(
            solve_procrustes(&a, &b),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn procrustes_beats_sampled_perturbations_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gt = RigidTransform::from_axis_angle(
            &AxisAngle(Vec3::new(0.3, -0.2, 0.5)),
            Vec3::new(0.1, 0.2, -0.3),
        );
        let src: Vec<Vec3> = (0..12)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let dst: Vec<Vec3> = src
            .iter()
            .map(|p| {
                gt.apply(p)
                    + Vec3::new(
                        rng.random_range(-0.02..0.02),
                        rng.random_range(-0.02..0.02),
                        rng.random_range(-0.02..0.02),
                    )
            })
            .collect();
        let est = solve_procrustes(&src, &dst).unwrap();
        let best = residual(&est, &src, &dst);
        assert!(best <= residual(&gt, &src, &dst) + 1e-9);
        for _ in 0..1000 {
            let dr = AxisAngle(random_unit(&mut rng) * rng.random_range(0.0..0.05));
            let perturbed = RigidTransform::new(
                axis_angle_to_rotation(&dr) * est.rotation,
                est.translation
                    + Vec3::new(
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                    ),
            );
            assert!(best <= residual(&perturbed, &src, &dst) + 1e-12);
        }
    }

    #[test]
    fn transform_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let id = RigidTransform::identity();
        assert_eq!(inverse(&id), id);
        for _ in 0..1000 {
            let t = RigidTransform::from_axis_angle(
                &AxisAngle(random_unit(&mut rng) * rng.random_range(0.0..PI)),
                Vec3::new(rng.random(), rng.random(), rng.random()) * 3.0,
            );
            assert_eq!(compose(&id, &t), t);
            assert!(compose(&t, &inverse(&t)).max_abs_diff(&id) <= 1e-9);
            assert!(inverse(&inverse(&t)).max_abs_diff(&t) <= 1e-9);
        }
    }

    #[test]
    fn apply_transform_cases() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.5, 0.0)];
        assert_eq!(apply_transform(&RigidTransform::identity(), &pts), pts);
        let shift = RigidTransform::new(Matrix3::identity(), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(
            apply_transform(&shift, &[Vec3::zeros()]),
            vec![Vec3::new(0.0, 0.0, 1.0)]
        );

        let t = RigidTransform::from_axis_angle(
            &AxisAngle(Vec3::new(0.4, 1.1, -0.7)),
            Vec3::new(3.0, -1.0, 2.0),
        );
        let moved = apply_transform(&t, &pts);
        let back = apply_transform(&t.inverse(), &moved);
        for (a, b) in pts.iter().zip(&back) {
            assert!((a - b).abs().max() <= 1e-9);
        }
        let d0 = (pts[0] - pts[1]).norm();
        let d1 = (moved[0] - moved[1]).norm();
        assert_abs_diff_eq!(d0, d1, epsilon = 1e-9);
    }

    #[test]
    fn rre_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gt = axis_angle_to_rotation(&AxisAngle(Vec3::new(0.2, -0.4, 1.0)));
        assert_eq!(rre(&gt, &gt), 0.0);
        for angle in [1e-7, 0.3, 1.0, 1.1, 2.5] {
            for _ in 0..100 {
                let axis = random_unit(&mut rng);
                let pred = gt * axis_angle_to_rotation(&AxisAngle(axis * angle));
                assert_abs_diff_eq!(rre(&pred, &gt), angle, epsilon = 1e-9);
                assert_eq!(rre(&pred, &gt), rre(&gt, &pred));
            }
        }
        let flipped = gt * Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        assert_abs_diff_eq!(rre(&flipped, &gt), PI, epsilon = 1e-7);
    }

    #[test]
    fn rte_cases() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(rte(&a, &a), 0.0);
        assert_eq!(rte(&Vec3::zeros(), &Vec3::new(0.0, 3.0, 4.0)), 5.0);
    }

    #[test]
    fn row_major_round_trip() {
        let t = RigidTransform::from_axis_angle(
            &AxisAngle(Vec3::new(0.1, 0.2, 0.3)),
            Vec3::new(4.0, 5.0, 6.0),
        );
        let rm = t.to_row_major();
        assert_eq!(&rm[12..], &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(RigidTransform::from_row_major(&rm), t);
    }
}
