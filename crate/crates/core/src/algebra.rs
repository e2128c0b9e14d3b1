//! Lie algebra data, group charts, and Killing-field consistency checks.
//!
//! Structure constants are stored as `c[[γ, α, β]] = c^γ_{αβ}` with the
//! convention that Killing fields of the group action satisfy
//! `[K_α, K_β] = c^γ_{αβ} K_γ`. Charts cover the identity component with
//! vector coordinates (angle for SO(2), rotation vector for SO(3)) and expose
//! composition, inversion, and the exponential generically over the scalar,
//! so group operations can be differentiated by dual numbers.

use crate::calculus::{evaluate_jet, SmoothMap};
use crate::error::CoreError;
use crate::linalg::{Mat, Tensor3};
use crate::scalar::Scalar;

/// Structure constants with the algebra dimension.
#[derive(Clone, Debug)]
pub struct LieData {
    pub dim: usize,
    /// `c[[γ, α, β]] = c^γ_{αβ}`.
    pub c: Tensor3<f64>,
}

impl LieData {
    /// All structure constants zero.
    pub fn abelian(dim: usize) -> Self {
        LieData {
            dim,
            c: Tensor3::zeros(dim, dim, dim),
        }
    }

    /// so(3) with `c^γ_{αβ} = −ε_{αβγ}`: the sign under which right-invariant
    /// Killing fields of a left action close as `[K_α,K_β] = c^γ_{αβ}K_γ`.
    pub fn so3_left() -> Self {
        LieData {
            dim: 3,
            c: Tensor3::from_fn(3, 3, 3, |g, a, b| -levi_civita(a, b, g)),
        }
    }

    /// `[a, b]^γ = c^γ_{αβ} a^α b^β`.
    pub fn bracket(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|g| {
                let mut acc = 0.0;
                for al in 0..n {
                    for be in 0..n {
                        acc += self.c[[g, al, be]] * a[al] * b[be];
                    }
                }
                acc
            })
            .collect()
    }
}

/// Totally antisymmetric symbol on three indices in {0,1,2}.
pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Max residuals of antisymmetry `c^γ_{αβ} + c^γ_{βα}` and of the Jacobi
/// identity `c^μ_{αβ}c^ν_{μγ} + c^μ_{βγ}c^ν_{μα} + c^μ_{γα}c^ν_{μβ}`.
pub fn lie_residuals(lie: &LieData) -> (f64, f64) {
    let n = lie.dim;
    let mut worst_anti = 0.0f64;
    for g in 0..n {
        for a in 0..n {
            for b in 0..n {
                worst_anti = worst_anti.max((lie.c[[g, a, b]] + lie.c[[g, b, a]]).abs());
            }
        }
    }
    let mut worst_jacobi = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for g in 0..n {
                for nu in 0..n {
                    let mut acc = 0.0;
                    for mu in 0..n {
                        acc += lie.c[[mu, a, b]] * lie.c[[nu, mu, g]]
                            + lie.c[[mu, b, g]] * lie.c[[nu, mu, a]]
                            + lie.c[[mu, g, a]] * lie.c[[nu, mu, b]];
                    }
                    worst_jacobi = worst_jacobi.max(acc.abs());
                }
            }
        }
    }
    (worst_anti, worst_jacobi)
}

/// Checks antisymmetry `c^γ_{αβ} = −c^γ_{βα}` and the Jacobi identity
/// against the given tolerance.
pub fn validate_lie_data(lie: &LieData, tol: f64) -> Result<(), CoreError> {
    let n = lie.dim;
    if lie.c.dims() != [n, n, n] {
        return Err(CoreError::shape(format!(
            "structure constants have dims {:?}, algebra dim {n}",
            lie.c.dims()
        )));
    }
    let (worst_anti, worst_jacobi) = lie_residuals(lie);
    if worst_anti > tol {
        return Err(CoreError::CheckFailed(format!(
            "structure constants not antisymmetric: defect {worst_anti:.3e}"
        )));
    }
    if worst_jacobi > tol {
        return Err(CoreError::CheckFailed(format!(
            "Jacobi identity violated: defect {worst_jacobi:.3e}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

/// Identity-centered chart of the group, with composition/inversion/exp in
/// chart coordinates.
#[derive(Clone, Debug)]
pub enum GroupChart {
    /// SO(2) by its angle in (−radius, radius), radius ≤ π.
    So2 { radius: f64 },
    /// SO(3) by the rotation vector with |q| < radius < π.
    So3 { radius: f64 },
}

impl GroupChart {
    pub fn dim(&self) -> usize {
        match self {
            GroupChart::So2 { .. } => 1,
            GroupChart::So3 { .. } => 3,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            GroupChart::So2 { radius } | GroupChart::So3 { radius } => *radius,
        }
    }

    pub fn identity(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        let norm2: f64 = a.iter().map(|x| x * x).sum();
        norm2.sqrt() < self.radius()
    }

    pub fn compose<S: Scalar>(&self, a: &[S], b: &[S]) -> Vec<S> {
        match self {
            GroupChart::So2 { .. } => vec![wrap_angle(a[0] + b[0])],
            GroupChart::So3 { .. } => {
                let qa = quat_from_rotvec(a);
                let qb = quat_from_rotvec(b);
                rotvec_from_quat(quat_mul(qa, qb))
            }
        }
    }

    pub fn inverse<S: Scalar>(&self, a: &[S]) -> Vec<S> {
        a.iter().map(|&x| -x).collect()
    }

    /// Chart coordinates of `exp(ξ)`; both charts are exponential charts.
    pub fn exp<S: Scalar>(&self, xi: &[S]) -> Vec<S> {
        match self {
            GroupChart::So2 { .. } => vec![wrap_angle(xi[0])],
            GroupChart::So3 { .. } => xi.to_vec(),
        }
    }
}

/// Wraps into (−π, π]; piecewise-constant shift, safe under duals away from
/// the cut.
fn wrap_angle<S: Scalar>(mut a: S) -> S {
    let two_pi = S::from_f64(std::f64::consts::TAU);
    while a.value() > std::f64::consts::PI {
        a -= two_pi;
    }
    while a.value() <= -std::f64::consts::PI {
        a += two_pi;
    }
    a
}

// ---------------------------------------------------------------------------
// SO(3) kinematics
// ---------------------------------------------------------------------------
//
// All coefficient functions are even in θ and taken as functions of u = θ²,
// with series branches below u = 1e-2 so values and (nested dual) derivatives
// stay finite through θ = 0.

/// sin θ / θ as a function of u = θ².
fn sinc_u<S: Scalar>(u: S) -> S {
    if u.value() < 1e-2 {
        let c = [1.0, -1.0 / 6.0, 1.0 / 120.0, -1.0 / 5040.0, 1.0 / 362_880.0];
        poly(u, &c)
    } else {
        let th = u.sqrt();
        th.sin() / th
    }
}

/// (1 − cos θ) / θ² as a function of u = θ².
fn c1_u<S: Scalar>(u: S) -> S {
    if u.value() < 1e-2 {
        let c = [
            0.5,
            -1.0 / 24.0,
            1.0 / 720.0,
            -1.0 / 40_320.0,
            1.0 / 3_628_800.0,
        ];
        poly(u, &c)
    } else {
        (S::one() - u.sqrt().cos()) / u
    }
}

/// (θ − sin θ) / θ³ as a function of u = θ².
fn c2_u<S: Scalar>(u: S) -> S {
    if u.value() < 1e-2 {
        let c = [
            1.0 / 6.0,
            -1.0 / 120.0,
            1.0 / 5040.0,
            -1.0 / 362_880.0,
            1.0 / 39_916_800.0,
        ];
        poly(u, &c)
    } else {
        let th = u.sqrt();
        (th - th.sin()) / (u * th)
    }
}

/// cos(θ/2) as a function of u = θ².
fn cos_half_u<S: Scalar>(u: S) -> S {
    if u.value() < 1e-2 {
        let c = [
            1.0,
            -1.0 / 8.0,
            1.0 / 384.0,
            -1.0 / 46_080.0,
            1.0 / 10_321_920.0,
        ];
        poly(u, &c)
    } else {
        (u.sqrt() * S::from_f64(0.5)).cos()
    }
}

/// sin(θ/2) / θ as a function of u = θ².
fn sinc_half_u<S: Scalar>(u: S) -> S {
    sinc_u(u * S::from_f64(0.25)) * S::from_f64(0.5)
}

/// 2·atan2(ρ, w)/ρ as a function of ρ² and w, for w > 0.
fn atan_ratio<S: Scalar>(rho2: S, w: S) -> S {
    if rho2.value() < 1e-4 {
        // 2/w · (1 − t²/3 + t⁴/5 − t⁶/7), t² = ρ²/w²
        let t2 = rho2 / (w * w);
        let series = poly(t2, &[1.0, -1.0 / 3.0, 1.0 / 5.0, -1.0 / 7.0]);
        S::from_f64(2.0) / w * series
    } else {
        let rho = rho2.sqrt();
        S::from_f64(2.0) * rho.atan2(w) / rho
    }
}

fn poly<S: Scalar>(x: S, coeffs: &[f64]) -> S {
    let mut acc = S::from_f64(coeffs[coeffs.len() - 1]);
    for &c in coeffs.iter().rev().skip(1) {
        acc = acc * x + S::from_f64(c);
    }
    acc
}

/// Cross-product (hat) matrix of a 3-vector.
pub fn hat<S: Scalar>(v: &[S]) -> Mat<S> {
    let z = S::zero();
    Mat::from_rows(&[&[z, -v[2], v[1]], &[v[2], z, -v[0]], &[-v[1], v[0], z]])
}

/// Unit quaternion (w, x, y, z) of the rotation vector `q`.
fn quat_from_rotvec<S: Scalar>(q: &[S]) -> [S; 4] {
    let u = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
    let s = sinc_half_u(u);
    [cos_half_u(u), q[0] * s, q[1] * s, q[2] * s]
}

/// Principal rotation vector of a quaternion (normalizes, then picks the
/// w ≥ 0 representative so |result| ≤ π).
fn rotvec_from_quat<S: Scalar>(qt: [S; 4]) -> Vec<S> {
    let norm = (qt[0] * qt[0] + qt[1] * qt[1] + qt[2] * qt[2] + qt[3] * qt[3]).sqrt();
    let mut q: Vec<S> = qt.iter().map(|&c| c / norm).collect();
    if q[0].value() < 0.0 {
        for c in q.iter_mut() {
            *c = -*c;
        }
    }
    let rho2 = q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    let f = atan_ratio(rho2, q[0]);
    vec![q[1] * f, q[2] * f, q[3] * f]
}

fn quat_mul<S: Scalar>(a: [S; 4], b: [S; 4]) -> [S; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Rotation matrix of the rotation vector `q` (Rodrigues).
pub fn rotation_matrix<S: Scalar>(q: &[S]) -> Mat<S> {
    let u = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
    let qh = hat(q);
    let qh2 = qh.matmul(&qh);
    Mat::identity(3)
        .add(&qh.scale(sinc_u(u)))
        .add(&qh2.scale(c1_u(u)))
}

/// Spatial-velocity map: `ω_spatial = t_right(q) · q̇` where
/// `hat(ω_spatial) = Ṙ Rᵀ`.
pub fn t_right<S: Scalar>(q: &[S]) -> Mat<S> {
    let u = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
    let qh = hat(q);
    let qh2 = qh.matmul(&qh);
    Mat::identity(3)
        .add(&qh.scale(c1_u(u)))
        .add(&qh2.scale(c2_u(u)))
}

// ---------------------------------------------------------------------------
// Killing-field consistency
// ---------------------------------------------------------------------------

/// Max residual of `[K_α, K_β]^A − c^γ_{αβ} K^A_γ` over the given points.
///
/// `killing` must produce the flattened field matrix, row-major:
/// output index `A·dim_g + α` holds `K^A_α` at the evaluation point. Brackets
/// are computed from first-order jets of that map.
pub fn killing_consistency<KM: SmoothMap>(
    lie: &LieData,
    killing: &KM,
    points: &[Vec<f64>],
) -> Result<f64, CoreError> {
    let ng = lie.dim;
    let n = killing.in_dim();
    if killing.out_dim() != n * ng {
        return Err(CoreError::shape(format!(
            "killing map yields {} components, expected {}·{}",
            killing.out_dim(),
            n,
            ng
        )));
    }
    let mut worst = 0.0f64;
    for pt in points {
        let jet = evaluate_jet(killing, pt, 1)?;
        let k = |a: usize, al: usize| jet.value[a * ng + al];
        let dk = |a: usize, al: usize, b: usize| jet.jacobian[(a * ng + al, b)];
        for al in 0..ng {
            for be in 0..ng {
                for a in 0..n {
                    // [K_α, K_β]^A = K^B_α ∂_B K^A_β − K^B_β ∂_B K^A_α
                    let mut bracket = 0.0;
                    for b in 0..n {
                        bracket += k(b, al) * dk(a, be, b) - k(b, be) * dk(a, al, b);
                    }
                    let mut target = 0.0;
                    for g in 0..ng {
                        target += lie.c[[g, al, be]] * k(a, g);
                    }
                    worst = worst.max((bracket - target).abs());
                }
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{seed_dir, Dual};
    use approx::assert_relative_eq;

    #[test]
    fn so3_structure_constants_validate() {
        validate_lie_data(&LieData::so3_left(), 1e-12).unwrap();
        validate_lie_data(&LieData::abelian(1), 1e-12).unwrap();
    }

    #[test]
    fn corrupted_constants_fail_validation() {
        let mut lie = LieData::so3_left();
        lie.c[[0, 1, 2]] += 1e-3; // breaks antisymmetry
        assert!(validate_lie_data(&lie, 1e-8).is_err());

        // Antisymmetric but non-Jacobi: [e1,e2]=e0, [e0,e1]=e1 gives
        // [e2,[e0,e1]] = −e0 with the other two cyclic terms vanishing.
        let mut lie2 = LieData::abelian(3);
        lie2.c[[0, 1, 2]] = 1.0;
        lie2.c[[0, 2, 1]] = -1.0;
        lie2.c[[1, 0, 1]] = 1.0;
        lie2.c[[1, 1, 0]] = -1.0;
        assert!(validate_lie_data(&lie2, 1e-8).is_err());
    }

    #[test]
    fn so2_chart_wraps_and_inverts() {
        let ch = GroupChart::So2 {
            radius: std::f64::consts::PI,
        };
        let a = [2.5f64];
        let b = [2.0f64];
        let ab = ch.compose(&a, &b);
        assert_relative_eq!(ab[0], 4.5 - std::f64::consts::TAU, max_relative = 1e-14);
        let back = ch.compose(&ab, &ch.inverse(&b));
        assert_relative_eq!(back[0], a[0], max_relative = 1e-13);
        assert_eq!(ch.exp(&[0.0f64]), vec![0.0]);
    }

    #[test]
    fn so3_compose_matches_rotation_matrices() {
        let ch = GroupChart::So3 {
            radius: std::f64::consts::PI - 0.1,
        };
        let a = [0.4, -0.3, 0.8];
        let b = [-0.2, 0.5, 0.1];
        let ab = ch.compose(&a, &b);
        let rab = rotation_matrix(&ab);
        let expect = rotation_matrix(&a).matmul(&rotation_matrix(&b));
        assert!(rab.max_abs_diff(&expect) < 1e-13);
        // inverse and identity
        let e = ch.compose(&a, &ch.inverse(&a));
        for c in e {
            assert!(c.abs() < 1e-14);
        }
    }

    #[test]
    fn so3_round_trip_near_zero_and_near_pi() {
        let ch = GroupChart::So3 { radius: 3.1 };
        for q in [[1e-9, -2e-9, 3e-9], [2.9, 0.4, 0.3], [0.0, 0.0, 0.0]] {
            let r = ch.compose(&q, &ch.identity());
            for (ri, qi) in r.iter().zip(q.iter()) {
                assert_relative_eq!(ri, qi, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn t_right_is_the_spatial_velocity_map() {
        // hat(T_R(q)·q̇) must equal Ṙ Rᵀ along q(t) = q + t·q̇.
        let q = [0.7, -0.2, 0.4];
        let qdot = [0.3, 0.5, -0.1];
        let qd: Vec<Dual<f64>> = seed_dir(&q, &qdot);
        let r = rotation_matrix(&qd);
        let rdot = Mat::from_fn(3, 3, |i, j| r[(i, j)].du);
        let rval = Mat::from_fn(3, 3, |i, j| r[(i, j)].re);
        let omega_hat = rdot.matmul(&rval.transpose());
        let omega = [omega_hat[(2, 1)], omega_hat[(0, 2)], omega_hat[(1, 0)]];
        let tr = t_right(&q);
        let expect = tr.matvec(&qdot);
        for i in 0..3 {
            assert_relative_eq!(omega[i], expect[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn series_branches_agree_at_the_switch() {
        for u in [9.9e-3, 1.01e-2] {
            let th = u.sqrt();
            assert_relative_eq!(sinc_u(u), th.sin() / th, max_relative = 1e-14);
            assert_relative_eq!(c1_u(u), (1.0 - th.cos()) / u, max_relative = 1e-13);
            assert_relative_eq!(c2_u(u), (th - th.sin()) / (u * th), max_relative = 1e-12);
            assert_relative_eq!(cos_half_u(u), (th / 2.0).cos(), max_relative = 1e-14);
        }
    }

    struct So3Killing;
    impl SmoothMap for So3Killing {
        fn in_dim(&self) -> usize {
            3
        }
        fn out_dim(&self) -> usize {
            9
        }
        fn eval<S: Scalar>(&self, q: &[S]) -> Vec<S> {
            let k = t_right(q).inverse().unwrap();
            let mut out = Vec::with_capacity(9);
            for a in 0..3 {
                for al in 0..3 {
                    out.push(k[(a, al)]);
                }
            }
            out
        }
    }

    #[test]
    fn so3_killing_fields_close_with_the_declared_sign() {
        let pts = vec![
            vec![0.3, -0.2, 0.5],
            vec![0.0, 0.0, 0.0],
            vec![1.2, 0.7, -0.4],
        ];
        let res = killing_consistency(&LieData::so3_left(), &So3Killing, &pts).unwrap();
        assert!(res < 1e-8, "bracket resid {res}");

        // The opposite sign convention must fail loudly.
        let mut flipped = LieData::so3_left();
        flipped.c = Tensor3::from_fn(3, 3, 3, |g, a, b| levi_civita(a, b, g));
        let res2 = killing_consistency(&flipped, &So3Killing, &pts).unwrap();
        assert!(res2 > 1e-1, "flipped sign should not close, resid {res2}");
    }
}
