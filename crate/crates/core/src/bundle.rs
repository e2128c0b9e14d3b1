//! Pointwise geometry of the gauge-fixed reduction: orbit metrics, horizontal
//! metrics, the base and block metrics, projectors, and the gauge-alignment
//! Newton solve that maps full configurations to invariant coordinates.
//!
//! Index conventions used throughout (matching the equations of motion in
//! [`crate::dynamics`]): capital `A,B,…` run over bundle coordinates `Q`
//! (`n_p` of them), lowercase `a,b,…` over linear coordinates `f` (`n_v`),
//! `i,j,…` over base/section parameters `x` (`n_x`), and `α,β,…` over the
//! algebra (`n_g`). A tilde block index `R̃` runs over `(Q, f)` jointly
//! (`n_w = n_p + n_v`) and `ũ` over `(x, f̃)` jointly (`n_z = n_x + n_v`).
//!
//! All builders come in two layers: generic functions over [`Scalar`] used
//! for dual-number differentiation by the field modules, and `f64` structs
//! ([`GeometryPoint`] and the per-operation entry points) that cache one
//! point's geometry for the dynamics.

use crate::calculus::{evaluate_jet, Jet2};
use crate::error::CoreError;
use crate::linalg::Mat;
use crate::model::{Model, SectionMap};
use crate::scalar::{Dual, Scalar};

// ---------------------------------------------------------------------------
// Generic building blocks
// ---------------------------------------------------------------------------

/// Section value and Jacobian `Q*^A_i` at `x`, by one dual lane per base
/// direction.
pub(crate) fn section_val_jac<S: Scalar, M: Model>(m: &M, x: &[S]) -> (Vec<S>, Mat<S>) {
    let val = m.section(x);
    let (n_p, n_x) = (val.len(), x.len());
    let mut jac = Mat::zeros(n_p, n_x);
    for j in 0..n_x {
        let seeded: Vec<Dual<S>> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i == j {
                    Dual::variable(v)
                } else {
                    Dual::constant(v)
                }
            })
            .collect();
        let out = m.section(&seeded);
        for r in 0..n_p {
            jac[(r, j)] = out[r].du;
        }
    }
    (val, jac)
}

/// Gauge Jacobian `χ^μ_{,B}` at `q`, one dual lane per bundle direction.
pub(crate) fn gauge_jac_at<S: Scalar, M: Model>(m: &M, q: &[S]) -> Mat<S> {
    let n_p = q.len();
    let n_g = m.dims().n_g;
    let mut jac = Mat::zeros(n_g, n_p);
    for b in 0..n_p {
        let seeded: Vec<Dual<S>> = q
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i == b {
                    Dual::variable(v)
                } else {
                    Dual::constant(v)
                }
            })
            .collect();
        let out = m.gauge(&seeded);
        for mu in 0..n_g {
            jac[(mu, b)] = out[mu].du;
        }
    }
    jac
}

/// Block-diagonal full metric `G_P ⊕ G_V` over `(Q, f)`.
pub(crate) fn metric_full_at<S: Scalar, M: Model>(m: &M, q: &[S], f: &[S]) -> Mat<S> {
    let g_p = m.metric_p(q);
    let g_v = m.metric_v(f);
    let (n_p, n_v) = (g_p.rows(), g_v.rows());
    let mut g = Mat::zeros(n_p + n_v, n_p + n_v);
    for i in 0..n_p {
        for j in 0..n_p {
            g[(i, j)] = g_p[(i, j)];
        }
    }
    for i in 0..n_v {
        for j in 0..n_v {
            g[(n_p + i, n_p + j)] = g_v[(i, j)];
        }
    }
    g
}

/// Stacked Killing block `K̃ = (K_P; K_V)`, `n_w × n_g`.
pub(crate) fn killing_full_at<S: Scalar, M: Model>(m: &M, q: &[S], f: &[S]) -> Mat<S> {
    let k_p = m.killing_p(q);
    let k_v = m.killing_v(f);
    let (n_p, n_v, n_g) = (k_p.rows(), k_v.rows(), k_p.cols());
    let mut k = Mat::zeros(n_p + n_v, n_g);
    for al in 0..n_g {
        for a in 0..n_p {
            k[(a, al)] = k_p[(a, al)];
        }
        for a in 0..n_v {
            k[(n_p + a, al)] = k_v[(a, al)];
        }
    }
    k
}

/// Orbit metric `d_{αβ} = K̃ᵀ G K̃` and its inverse.
pub(crate) fn d_matrices_at<S: Scalar, M: Model>(
    m: &M,
    q: &[S],
    f: &[S],
) -> Result<(Mat<S>, Mat<S>), CoreError> {
    let g = metric_full_at(m, q, f);
    let k = killing_full_at(m, q, f);
    let d_lower = k.transpose().matmul(&g).matmul(&k);
    let d_upper = d_lower.inverse().map_err(|_| {
        CoreError::degenerate("orbit metric d singular: the action degenerates at this point")
    })?;
    Ok((d_lower, d_upper))
}

/// Horizontal metric on the joint space,
/// `G̃^H = G − G K̃ d⁻¹ K̃ᵀ G` (degenerate along orbits, full rank across).
pub(crate) fn gh_full_at<S: Scalar, M: Model>(
    m: &M,
    q: &[S],
    f: &[S],
) -> Result<Mat<S>, CoreError> {
    let g = metric_full_at(m, q, f);
    let k = killing_full_at(m, q, f);
    let (_, d_upper) = d_matrices_at(m, q, f)?;
    let gk = g.matmul(&k);
    Ok(g.sub(&gk.matmul(&d_upper).matmul(&gk.transpose())))
}

/// Same construction on the bundle factor alone:
/// `G^H = G_P − G_P K_P γ⁻¹ K_Pᵀ G_P`.
pub(crate) fn gh_p_at<S: Scalar, M: Model>(m: &M, q: &[S]) -> Result<Mat<S>, CoreError> {
    let g_p = m.metric_p(q);
    let k_p = m.killing_p(q);
    let gamma = k_p.transpose().matmul(&g_p).matmul(&k_p);
    let gamma_inv = gamma.inverse().map_err(|_| {
        CoreError::degenerate("bundle orbit metric γ singular: action not free on P here")
    })?;
    let gk = g_p.matmul(&k_p);
    Ok(g_p.sub(&gk.matmul(&gamma_inv).matmul(&gk.transpose())))
}

/// Gauge-route projector blocks `(N_PP, N_VP, Φ)` at `(q, f)`:
/// `N^A_B = δ^A_B − K^A_α (Φ⁻¹)^α_μ χ^μ_{,B}`, `N^a_B = −K^a_α (Φ⁻¹)^α_μ χ^μ_{,B}`
/// with `Φ^μ_ν = χ^μ_{,A} K^A_ν`.
pub(crate) fn gauge_projector_at<S: Scalar, M: Model>(
    m: &M,
    q: &[S],
    f: &[S],
) -> Result<(Mat<S>, Mat<S>, Mat<S>), CoreError> {
    let chi_jac = gauge_jac_at(m, q);
    let k_p = m.killing_p(q);
    let k_v = m.killing_v(f);
    let (n_p, n_g) = (k_p.rows(), k_p.cols());
    let phi = chi_jac.matmul(&k_p);
    let phi_lu = phi
        .lu()
        .map_err(|_| CoreError::degenerate("gauge not transverse: Φ = χ' K singular"))?;
    // B = Φ⁻¹ χ'  (n_g × n_p), solved column by column
    let mut b = Mat::zeros(n_g, n_p);
    for col in 0..n_p {
        let rhs: Vec<S> = (0..n_g).map(|r| chi_jac[(r, col)]).collect();
        let sol = phi_lu.solve(&rhs);
        for r in 0..n_g {
            b[(r, col)] = sol[r];
        }
    }
    let n_pp = Mat::identity(n_p).sub(&k_p.matmul(&b));
    let n_vp = k_v.matmul(&b).scale(S::from_f64(-1.0));
    Ok((n_pp, n_vp, phi))
}

/// Restriction data of the geometry to the section at `(x, f̃)`, generic over
/// the scalar so the projection of full states can run in dual arithmetic.
pub(crate) struct SectionGeometry<S> {
    pub q: Vec<S>,
    pub qjac: Mat<S>,
    pub g_p: Mat<S>,
    pub g_v: Mat<S>,
    pub k_p: Mat<S>,
    pub k_v: Mat<S>,
    /// `T^i_A = h^{im} Q*^L_m G^H_{LA}` — base components of a bundle velocity.
    pub t: Mat<S>,
    /// `N^a_B` — linear-factor correction of a bundle velocity.
    pub n_vp: Mat<S>,
}

pub(crate) fn section_geometry<S: Scalar, M: Model>(
    m: &M,
    x: &[S],
    f: &[S],
) -> Result<SectionGeometry<S>, CoreError> {
    let (q, qjac) = section_val_jac(m, x);
    let gh_p = gh_p_at(m, &q)?;
    let h = qjac.transpose().matmul(&gh_p).matmul(&qjac);
    let h_lu = h
        .lu()
        .map_err(|_| CoreError::degenerate("base metric h singular at this section point"))?;
    // T = h⁻¹ (Q*ᵀ G^H), solved row-block at once
    let rhs = qjac.transpose().matmul(&gh_p); // n_x × n_p
    let n_x = rhs.rows();
    let n_p = rhs.cols();
    let mut t = Mat::zeros(n_x, n_p);
    for col in 0..n_p {
        let c: Vec<S> = (0..n_x).map(|r| rhs[(r, col)]).collect();
        let sol = h_lu.solve(&c);
        for r in 0..n_x {
            t[(r, col)] = sol[r];
        }
    }
    let (_, n_vp, _) = gauge_projector_at(m, &q, f)?;
    Ok(SectionGeometry {
        g_p: m.metric_p(&q),
        g_v: m.metric_v(f),
        k_p: m.killing_p(&q),
        k_v: m.killing_v(f),
        q,
        qjac,
        t,
        n_vp,
    })
}

// ---------------------------------------------------------------------------
// Public per-operation entry points (f64)
// ---------------------------------------------------------------------------

/// Orbit metrics at an arbitrary configuration `(Q, f)`.
#[derive(Clone, Debug)]
pub struct OrbitMetrics {
    /// `γ_{αβ} = K^A_α G_{AB} K^B_β` (bundle factor).
    pub gamma: Mat<f64>,
    /// `γ'_{αβ} = K^a_α G_{ab} K^b_β` (linear factor).
    pub gamma_prime: Mat<f64>,
    /// `d = γ + γ'`.
    pub d_lower: Mat<f64>,
    /// `d⁻¹`.
    pub d_upper: Mat<f64>,
}

pub fn orbit_metrics<M: Model>(m: &M, q: &[f64], f: &[f64]) -> Result<OrbitMetrics, CoreError> {
    check_dims(m, q.len(), f.len())?;
    let g_p = m.metric_p(q);
    let g_v = m.metric_v(f);
    let k_p = m.killing_p(q);
    let k_v = m.killing_v(f);
    let gamma = k_p.transpose().matmul(&g_p).matmul(&k_p);
    let gamma_prime = k_v.transpose().matmul(&g_v).matmul(&k_v);
    let d_lower = gamma.add(&gamma_prime);
    let d_upper = d_lower.inverse().map_err(|_| {
        CoreError::degenerate("orbit metric d singular: the action degenerates at this point")
    })?;
    Ok(OrbitMetrics {
        gamma,
        gamma_prime,
        d_lower,
        d_upper,
    })
}

/// Horizontal metrics at `(Q, f)`: the bundle-factor `G^H` and the joint
/// `G̃^H`.
#[derive(Clone, Debug)]
pub struct HorizontalMetrics {
    pub p_block: Mat<f64>,
    pub full: Mat<f64>,
}

pub fn horizontal_metrics<M: Model>(
    m: &M,
    q: &[f64],
    f: &[f64],
) -> Result<HorizontalMetrics, CoreError> {
    check_dims(m, q.len(), f.len())?;
    Ok(HorizontalMetrics {
        p_block: gh_p_at(m, q)?,
        full: gh_full_at(m, q, f)?,
    })
}

/// Order-2 jet of the section map at `x`.
pub fn section_jet<M: Model>(m: &M, x: &[f64]) -> Result<Jet2, CoreError> {
    evaluate_jet(&SectionMap(m), x, 2)
}

/// Base metric `h_{ij} = Q*^A_i G^H_{AB} Q*^B_j` and its inverse at `x`.
pub fn base_metric<M: Model>(m: &M, x: &[f64]) -> Result<(Mat<f64>, Mat<f64>), CoreError> {
    if !m.section_domain(x) {
        return Err(CoreError::domain(format!(
            "base point {x:?} outside the section domain"
        )));
    }
    let (q, qjac) = section_val_jac(m, x);
    let gh_p = gh_p_at(m, &q)?;
    let h = qjac.transpose().matmul(&gh_p).matmul(&qjac);
    let h_inv = h
        .inverse()
        .map_err(|_| CoreError::degenerate("base metric h singular at this section point"))?;
    Ok((h, h_inv))
}

/// Reduced kinetic metric over `(x, f̃)` with its inverse from the closed
/// block formulas.
#[derive(Clone, Debug)]
pub struct BlockMetric {
    /// `h̃` over z-indices: x-block first, then f̃-block.
    pub lower: Mat<f64>,
    /// `h̃⁻¹` assembled from the inverse-block formulas (not numeric
    /// inversion); see the projector-based expressions in [`block_metric`].
    pub upper: Mat<f64>,
    pub n_x: usize,
}

impl BlockMetric {
    pub fn lower_xx(&self) -> Mat<f64> {
        self.slice(&self.lower, 0, 0)
    }
    pub fn lower_xv(&self) -> Mat<f64> {
        self.slice(&self.lower, 0, 1)
    }
    pub fn lower_vv(&self) -> Mat<f64> {
        self.slice(&self.lower, 1, 1)
    }
    pub fn upper_xx(&self) -> Mat<f64> {
        self.slice(&self.upper, 0, 0)
    }
    pub fn upper_xv(&self) -> Mat<f64> {
        self.slice(&self.upper, 0, 1)
    }
    pub fn upper_vv(&self) -> Mat<f64> {
        self.slice(&self.upper, 1, 1)
    }

    fn slice(&self, m: &Mat<f64>, bi: usize, bj: usize) -> Mat<f64> {
        let n_z = m.rows();
        let (r0, r1) = if bi == 0 {
            (0, self.n_x)
        } else {
            (self.n_x, n_z)
        };
        let (c0, c1) = if bj == 0 {
            (0, self.n_x)
        } else {
            (self.n_x, n_z)
        };
        Mat::from_fn(r1 - r0, c1 - c0, |i, j| m[(r0 + i, c0 + j)])
    }
}

/// Reduced kinetic metric `h̃_{ũṽ} = E^R̃_ũ G̃^H_{R̃S̃} E^S̃_ṽ` at `(x, f̃)`,
/// generic for dual differentiation of the Christoffel symbols.
pub(crate) fn block_metric_lower_at<S: Scalar, M: Model>(
    m: &M,
    x: &[S],
    f: &[S],
) -> Result<Mat<S>, CoreError> {
    let (q, qjac) = section_val_jac(m, x);
    let gh_full = gh_full_at(m, &q, f)?;
    let e = embedding(&qjac, f.len());
    Ok(e.transpose().matmul(&gh_full).matmul(&e))
}

/// Reduced metric over `(x, f̃)`: lower blocks by restricting `G̃^H` through
/// the section embedding, upper blocks by the projector formulas
/// `h̃^{ji} = G^{EF} N^S_E N^D_F T^j_S T^i_D`,
/// `h̃^{jb} = G^{EF} N^b_F N^P_E T^j_P`,
/// `h̃^{cb} = G^{cb} + G^{EF} N^c_E N^b_F`.
pub fn block_metric<M: Model>(m: &M, x: &[f64], f: &[f64]) -> Result<BlockMetric, CoreError> {
    let d = m.dims();
    let (q, _) = section_val_jac(m, x);
    let lower = block_metric_lower_at(m, x, f)?;

    let geom = section_geometry(m, x, f)?;
    let (n_pp, n_vp, _) = gauge_projector_at(m, &q, f)?;
    let g_p_inv = geom
        .g_p
        .inverse()
        .map_err(|_| CoreError::degenerate("bundle metric G_P singular"))?;
    let g_v_inv = geom
        .g_v
        .inverse()
        .map_err(|_| CoreError::degenerate("linear metric G_V singular"))?;
    let tn = geom.t.matmul(&n_pp); // n_x × n_p
    let upper_xx = tn.matmul(&g_p_inv).matmul(&tn.transpose());
    let upper_xv = tn.matmul(&g_p_inv).matmul(&n_vp.transpose());
    let upper_vv = g_v_inv.add(&n_vp.matmul(&g_p_inv).matmul(&n_vp.transpose()));

    let n_z = d.n_z();
    let mut upper = Mat::zeros(n_z, n_z);
    for i in 0..d.n_x {
        for j in 0..d.n_x {
            upper[(i, j)] = upper_xx[(i, j)];
        }
        for b in 0..d.n_v {
            upper[(i, d.n_x + b)] = upper_xv[(i, b)];
            upper[(d.n_x + b, i)] = upper_xv[(i, b)];
        }
    }
    for a in 0..d.n_v {
        for b in 0..d.n_v {
            upper[(d.n_x + a, d.n_x + b)] = upper_vv[(a, b)];
        }
    }
    Ok(BlockMetric {
        lower,
        upper,
        n_x: d.n_x,
    })
}

/// Section embedding `E = [[Q*_i, 0], [0, δ]]`, `n_w × n_z`.
pub(crate) fn embedding<S: Scalar>(qjac: &Mat<S>, n_v: usize) -> Mat<S> {
    let (n_p, n_x) = (qjac.rows(), qjac.cols());
    let mut e = Mat::zeros(n_p + n_v, n_x + n_v);
    for r in 0..n_p {
        for c in 0..n_x {
            e[(r, c)] = qjac[(r, c)];
        }
    }
    for a in 0..n_v {
        e[(n_p + a, n_x + a)] = S::one();
    }
    e
}

/// The projector family at a section point.
#[derive(Clone, Debug)]
pub struct ProjectorSet {
    /// Gauge-route `N^A_B`: kills orbit directions, fixes section tangents.
    pub n_pp: Mat<f64>,
    /// Gauge-route `N^a_B`: linear-factor correction of bundle velocities.
    pub n_vp: Mat<f64>,
    /// Projector onto the section tangent space along the orbit, metric
    /// route: `(P⊥)^A_B = Q*^A_i T^i_B`. Must agree with `n_pp`.
    pub p_perp: Mat<f64>,
    /// `T^i_A`: base components of a bundle velocity (`T Q* = δ`).
    pub t: Mat<f64>,
    /// Faddeev–Popov block `Φ^μ_ν = χ^μ_{,A} K^A_ν`.
    pub phi: Mat<f64>,
    /// Mechanical-horizontal projector on the joint space,
    /// `Π̃ = G⁻¹ G̃^H = δ − K̃𝒜`.
    pub pi_tilde: Mat<f64>,
}

pub fn projector_set<M: Model>(m: &M, x: &[f64], f: &[f64]) -> Result<ProjectorSet, CoreError> {
    let geom = section_geometry(m, x, f)?;
    let (n_pp, n_vp, phi) = gauge_projector_at(m, &geom.q, f)?;
    let p_perp = geom.qjac.matmul(&geom.t);
    let g_full = metric_full_at(m, &geom.q, f);
    let gh_full = gh_full_at(m, &geom.q, f)?;
    let pi_tilde = g_full
        .lu()
        .map_err(|_| CoreError::degenerate("full metric singular"))?
        .solve_matrix(&gh_full);
    Ok(ProjectorSet {
        n_pp,
        n_vp,
        p_perp,
        t: geom.t,
        phi,
        pi_tilde,
    })
}

// ---------------------------------------------------------------------------
// Cached geometry at one reduced configuration
// ---------------------------------------------------------------------------

/// Everything the dynamics needs about one point `(x, f̃)`, computed once.
#[derive(Clone, Debug)]
pub struct GeometryPoint {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    /// `Q*(x)` with first and second derivatives.
    pub sec: Jet2,
    pub q: Vec<f64>,
    pub g_p: Mat<f64>,
    pub g_v: Mat<f64>,
    pub g_p_inv: Mat<f64>,
    pub g_v_inv: Mat<f64>,
    pub k_p: Mat<f64>,
    pub k_v: Mat<f64>,
    pub orbit: OrbitMetrics,
    pub horizontal: HorizontalMetrics,
    pub h: Mat<f64>,
    pub h_inv: Mat<f64>,
    pub proj: ProjectorSet,
    pub block: BlockMetric,
}

impl GeometryPoint {
    pub fn new<M: Model>(m: &M, x: &[f64], f: &[f64]) -> Result<Self, CoreError> {
        let d = m.dims();
        if x.len() != d.n_x || f.len() != d.n_v {
            return Err(CoreError::shape(format!(
                "expected (n_x, n_v) = ({}, {}), got ({}, {})",
                d.n_x,
                d.n_v,
                x.len(),
                f.len()
            )));
        }
        if !m.section_domain(x) {
            return Err(CoreError::domain(format!(
                "base point {x:?} outside the section domain"
            )));
        }
        let sec = section_jet(m, x)?;
        let q = sec.value.clone();
        if !m.p_domain(&q) {
            return Err(CoreError::domain(format!(
                "section point {q:?} outside the bundle domain"
            )));
        }
        let g_p = m.metric_p(&q);
        let g_v = m.metric_v(f);
        let g_p_inv = g_p
            .inverse()
            .map_err(|_| CoreError::degenerate("bundle metric G_P singular"))?;
        let g_v_inv = g_v
            .inverse()
            .map_err(|_| CoreError::degenerate("linear metric G_V singular"))?;
        let orbit = orbit_metrics(m, &q, f)?;
        let horizontal = horizontal_metrics(m, &q, f)?;
        let (h, h_inv) = base_metric(m, x)?;
        let proj = projector_set(m, x, f)?;
        let block = block_metric(m, x, f)?;
        Ok(GeometryPoint {
            x: x.to_vec(),
            f: f.to_vec(),
            q,
            g_p,
            g_v,
            g_p_inv,
            g_v_inv,
            k_p: m.killing_p(&sec.value),
            k_v: m.killing_v(f),
            sec,
            orbit,
            horizontal,
            h,
            h_inv,
            proj,
            block,
        })
    }

    /// Stacked Killing block at this point.
    pub fn killing_full(&self) -> Mat<f64> {
        let (n_p, n_v, n_g) = (self.k_p.rows(), self.k_v.rows(), self.k_p.cols());
        let mut k = Mat::zeros(n_p + n_v, n_g);
        for al in 0..n_g {
            for a in 0..n_p {
                k[(a, al)] = self.k_p[(a, al)];
            }
            for a in 0..n_v {
                k[(n_p + a, al)] = self.k_v[(a, al)];
            }
        }
        k
    }
}

/// Residuals of the projector algebra at one geometry point. Every entry is
/// an exact identity of the construction; residuals are roundoff.
pub fn projector_checks(g: &GeometryPoint) -> Vec<(&'static str, f64)> {
    let n_p = g.g_p.rows();
    let n_v = g.g_v.rows();
    let n_w = n_p + n_v;
    // Full N over (Q, f): [[N_PP, 0], [N_VP, δ]]
    let mut n_full = Mat::zeros(n_w, n_w);
    for i in 0..n_p {
        for j in 0..n_p {
            n_full[(i, j)] = g.proj.n_pp[(i, j)];
        }
    }
    for a in 0..n_v {
        for j in 0..n_p {
            n_full[(n_p + a, j)] = g.proj.n_vp[(a, j)];
        }
        n_full[(n_p + a, n_p + a)] = 1.0;
    }
    let ktilde = g.killing_full();

    vec![
        (
            "projector_n_idempotent",
            n_full.matmul(&n_full).max_abs_diff(&n_full),
        ),
        (
            "projector_n_kills_killing",
            n_full.matmul(&ktilde).max_mag(),
        ),
        (
            "projector_metric_gauge_agreement",
            g.proj.p_perp.max_abs_diff(&g.proj.n_pp),
        ),
        (
            "projector_p_perp_kills_killing",
            g.proj.p_perp.matmul(&g.k_p).max_mag(),
        ),
        (
            "projector_t_section_identity",
            g.proj
                .t
                .matmul(&g.sec.jacobian)
                .max_abs_diff(&Mat::identity(g.sec.jacobian.cols())),
        ),
        (
            "projector_pi_idempotent",
            g.proj
                .pi_tilde
                .matmul(&g.proj.pi_tilde)
                .max_abs_diff(&g.proj.pi_tilde),
        ),
        (
            "projector_pi_kills_killing",
            g.proj.pi_tilde.matmul(&ktilde).max_mag(),
        ),
        (
            "projector_n_absorbs_pi",
            n_full.matmul(&g.proj.pi_tilde).max_abs_diff(&n_full),
        ),
        (
            "block_inverse_consistency",
            g.block
                .upper
                .matmul(&g.block.lower)
                .max_abs_diff(&Mat::identity(g.block.lower.rows())),
        ),
    ]
}

// ---------------------------------------------------------------------------
// Invariant coordinates (gauge-alignment Newton)
// ---------------------------------------------------------------------------

/// Result of projecting a full configuration-with-velocity to the section.
#[derive(Clone, Debug)]
pub struct InvariantCoords<S> {
    /// Group element aligning the input with the section: `a⁻¹ · (Q, f)` lies
    /// over the gauge surface.
    pub a: Vec<S>,
    pub x: Vec<S>,
    pub f: Vec<S>,
    pub xdot: Vec<S>,
    pub fdot: Vec<S>,
    pub p: Vec<S>,
}

/// Newton solve for the aligning group element: find `a` in the chart with
/// `χ(a⁻¹ · Q) = 0`. Step damping halves the update while the residual
/// grows; convergence demands value-residual ≤ 1e−12 within 50 iterations.
pub(crate) fn align_gauge<S: Scalar, M: Model>(m: &M, q: &[S]) -> Result<Vec<S>, CoreError> {
    let n_g = m.dims().n_g;
    let chart = m.chart();
    let mut a: Vec<S> = vec![S::zero(); n_g];
    let mut converged_at: Option<usize> = None;
    for iter in 0..50 {
        let residual = |a: &[S]| -> Vec<S> {
            let ainv = chart.inverse(a);
            m.gauge(&m.action_p(&ainv, q))
        };
        let r = residual(&a);
        let r_norm = value_norm(&r);
        // Jacobian ∂r/∂a by one dual lane per algebra direction.
        let mut jac = Mat::zeros(n_g, n_g);
        for nu in 0..n_g {
            let seeded: Vec<Dual<S>> = a
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if i == nu {
                        Dual::variable(v)
                    } else {
                        Dual::constant(v)
                    }
                })
                .collect();
            let qd: Vec<Dual<S>> = q.iter().map(|&v| Dual::constant(v)).collect();
            let ainv = chart.inverse(&seeded);
            let out = m.gauge(&m.action_p(&ainv, &qd));
            for mu in 0..n_g {
                jac[(mu, nu)] = out[mu].du;
            }
        }
        let delta = jac
            .lu()
            .map_err(|_| {
                CoreError::degenerate("gauge-alignment Jacobian singular (gauge not transverse)")
            })?
            .solve(&r);
        // Damped update: halve while the value residual grows.
        let mut step = S::one();
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<S> = a
                .iter()
                .zip(delta.iter())
                .map(|(&ai, &di)| ai - step * di)
                .collect();
            if value_norm(&residual(&trial)) <= r_norm || r_norm < 1e-13 {
                a = trial;
                accepted = true;
                break;
            }
            step *= S::from_f64(0.5);
        }
        if !accepted {
            return Err(CoreError::NoConvergence(format!(
                "gauge alignment stalled at residual {r_norm:.3e}"
            )));
        }
        if value_norm(&residual(&a)) < 1e-13 {
            // Run two extra full steps so derivative components settle to
            // the implicit-function values before declaring convergence.
            match converged_at {
                None => converged_at = Some(iter),
                Some(first) if iter >= first + 2 => break,
                _ => {}
            }
        }
    }
    let a_val: Vec<f64> = a.iter().map(|s| s.value()).collect();
    if !chart.contains(&a_val) {
        return Err(CoreError::domain(format!(
            "aligning element {a_val:?} outside the group chart"
        )));
    }
    let ainv = chart.inverse(&a);
    let final_res = value_norm(&m.gauge(&m.action_p(&ainv, q)));
    if final_res > 1e-12 {
        return Err(CoreError::NoConvergence(format!(
            "gauge alignment residual {final_res:.3e} > 1e-12 after 50 iterations"
        )));
    }
    Ok(a)
}

fn value_norm<S: Scalar>(v: &[S]) -> f64 {
    v.iter().map(|s| s.value().abs()).fold(0.0, f64::max)
}

/// Projects a full configuration and velocity to invariant coordinates:
/// aligns the gauge, transports velocities with the action's tangent map,
/// splits them with `T`/`N`, and evaluates the momentum map
/// `p = K̃ᵀ G v` at the aligned point.
pub fn invariant_coordinates<S: Scalar, M: Model>(
    m: &M,
    q: &[S],
    f: &[S],
    qdot: &[S],
    fdot: &[S],
) -> Result<InvariantCoords<S>, CoreError> {
    let d = m.dims();
    if q.len() != d.n_p || f.len() != d.n_v || qdot.len() != d.n_p || fdot.len() != d.n_v {
        return Err(CoreError::shape(
            "invariant_coordinates: input sizes do not match the model",
        ));
    }
    let chart = m.chart();
    let a = align_gauge(m, q)?;
    let ainv = chart.inverse(&a);

    // Transported configuration.
    let qs = m.action_p(&ainv, q);
    let fs = m.action_v(&ainv, f);
    let qs_val: Vec<f64> = qs.iter().map(|s| s.value()).collect();
    if !m.p_domain(&qs_val) {
        return Err(CoreError::domain(format!(
            "aligned configuration {qs_val:?} outside the bundle domain"
        )));
    }
    let x = m.section_coords(&qs);
    let f_t = fs.clone();

    // Transported velocities: tangent map of w ↦ a⁻¹·w in one directional
    // dual lane each.
    let qd_seed: Vec<Dual<S>> = q
        .iter()
        .zip(qdot.iter())
        .map(|(&v, &dv)| Dual::new(v, dv))
        .collect();
    let ainv_const: Vec<Dual<S>> = ainv.iter().map(|&v| Dual::constant(v)).collect();
    let qs_dot: Vec<S> = m
        .action_p(&ainv_const, &qd_seed)
        .iter()
        .map(|o| o.du)
        .collect();
    let fd_seed: Vec<Dual<S>> = f
        .iter()
        .zip(fdot.iter())
        .map(|(&v, &dv)| Dual::new(v, dv))
        .collect();
    let fs_dot: Vec<S> = m
        .action_v(&ainv_const, &fd_seed)
        .iter()
        .map(|o| o.du)
        .collect();

    // Split with the section geometry at (x, f̃).
    let geom = section_geometry(m, &x, &f_t)?;
    let xdot = geom.t.matvec(&qs_dot);
    let mut fdot_t = geom.n_vp.matvec(&qs_dot);
    for (ft, fd) in fdot_t.iter_mut().zip(fs_dot.iter()) {
        *ft += *fd;
    }

    // Momentum map p_α = K^A_α G_AB Q̇^B + K^a_α G_ab ḟ^b at the aligned point.
    let gp_qdot = geom.g_p.matvec(&qs_dot);
    let gv_fdot = geom.g_v.matvec(&fs_dot);
    let mut p = geom.k_p.transpose().matvec(&gp_qdot);
    let pv = geom.k_v.transpose().matvec(&gv_fdot);
    for (pi, pvi) in p.iter_mut().zip(pv.iter()) {
        *pi += *pvi;
    }

    Ok(InvariantCoords {
        a,
        x,
        f: f_t,
        xdot,
        fdot: fdot_t,
        p,
    })
}

fn check_dims<M: Model>(m: &M, n_q: usize, n_f: usize) -> Result<(), CoreError> {
    let d = m.dims();
    if n_q != d.n_p || n_f != d.n_v {
        return Err(CoreError::shape(format!(
            "expected (n_p, n_v) = ({}, {}), got ({n_q}, {n_f})",
            d.n_p, d.n_v
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::fd_jacobian;
    use crate::model::SectionMap;
    use crate::models::{instantiate, BuiltinModel, ModelParams};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn abelian() -> BuiltinModel {
        instantiate("abelian_disk", &ModelParams::empty()).unwrap()
    }
    fn so3() -> BuiltinModel {
        instantiate("so3_coupled", &ModelParams::empty()).unwrap()
    }
    fn so3_twisted() -> BuiltinModel {
        instantiate("so3_coupled", &ModelParams::empty().set("twist", 0.4)).unwrap()
    }

    #[test]
    fn section_jet_closed_forms_and_fd() {
        // Straight radial section: Q* = (x, 0), first derivative (1, 0), flat.
        let m = abelian();
        let jet = section_jet(&m, &[2.0]).unwrap();
        assert_eq!(jet.value, vec![2.0, 0.0]);
        assert_relative_eq!(jet.jacobian[(0, 0)], 1.0, max_relative = 1e-15);
        assert_relative_eq!(jet.jacobian[(1, 0)], 0.0, epsilon = 1e-15);
        assert_eq!(jet.hessian.max_mag(), 0.0);

        // Twisted section against central differences.
        let m = so3_twisted();
        let x = [0.6, -0.4];
        let jet = section_jet(&m, &x).unwrap();
        let fd = fd_jacobian(&SectionMap(&m), &x, 1e-6);
        assert!(jet.jacobian.max_abs_diff(&fd) < 1e-8);
    }

    #[test]
    fn abelian_orbit_metrics_closed_form() {
        let m = abelian();
        let (x, rho) = (1.4, 0.6);
        let om = orbit_metrics(&m, &[x, 0.0], &[rho, 0.0]).unwrap();
        assert_relative_eq!(om.gamma[(0, 0)], x * x, max_relative = 1e-14);
        assert_relative_eq!(om.gamma_prime[(0, 0)], rho * rho, max_relative = 1e-14);
        assert_relative_eq!(om.d_lower[(0, 0)], x * x + rho * rho, max_relative = 1e-14);
        assert_relative_eq!(
            om.d_upper[(0, 0)],
            1.0 / (x * x + rho * rho),
            max_relative = 1e-14
        );
    }

    #[test]
    fn degenerate_orbit_is_an_error() {
        let m = abelian();
        let err = orbit_metrics(&m, &[0.0, 0.0], &[0.0, 0.0]);
        assert!(matches!(err, Err(CoreError::Degenerate(_))));
    }

    #[test]
    fn abelian_horizontal_and_base_metrics_closed_form() {
        let m = abelian();
        let x = 1.3;
        let hm = horizontal_metrics(&m, &[x, 0.0], &[0.5, 0.0]).unwrap();
        // G^H = diag(1, 0): radial direction survives, angular is vertical.
        assert_relative_eq!(hm.p_block[(0, 0)], 1.0, max_relative = 1e-14);
        assert!(hm.p_block[(1, 1)].abs() < 1e-14);
        assert!(hm.p_block[(0, 1)].abs() < 1e-14);
        let (h, h_inv) = base_metric(&m, &[x]).unwrap();
        assert_relative_eq!(h[(0, 0)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(h_inv[(0, 0)], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn abelian_block_metric_closed_form() {
        let m = abelian();
        let (x, rho) = (1.2, 0.7);
        let bm = block_metric(&m, &[x], &[rho, 0.0]).unwrap();
        let dd = x * x + rho * rho;
        assert_relative_eq!(bm.lower_xx()[(0, 0)], 1.0, max_relative = 1e-14);
        assert!(bm.lower_xv().max_mag() < 1e-14);
        let vv = bm.lower_vv();
        assert_relative_eq!(vv[(0, 0)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(vv[(1, 1)], x * x / dd, max_relative = 1e-13);
        assert!(vv[(0, 1)].abs() < 1e-14);
        // Formula inverse really inverts.
        let id = bm.upper.matmul(&bm.lower);
        assert!(id.max_abs_diff(&Mat::identity(3)) < 1e-13);
    }

    #[test]
    fn block_inverse_formula_matches_numeric_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for m in [abelian(), so3(), so3_twisted()] {
            let (xr, fr) = m.sample_ranges();
            for _ in 0..10 {
                let x: Vec<f64> = xr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let f: Vec<f64> = fr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let bm = block_metric(&m, &x, &f).unwrap();
                let numeric = bm.lower.inverse().unwrap();
                assert!(
                    bm.upper.max_abs_diff(&numeric) < 1e-9,
                    "{}: {:.3e}",
                    m.name(),
                    bm.upper.max_abs_diff(&numeric)
                );
            }
        }
    }

    #[test]
    fn abelian_projectors_closed_form() {
        let m = abelian();
        let (x, rho) = (1.5, 0.4);
        let ps = projector_set(&m, &[x], &[rho, 0.0]).unwrap();
        assert_relative_eq!(ps.n_pp[(0, 0)], 1.0, max_relative = 1e-14);
        assert!(ps.n_pp[(1, 1)].abs() < 1e-14);
        assert!(ps.n_pp[(0, 1)].abs() < 1e-14);
        assert!(ps.n_pp[(1, 0)].abs() < 1e-14);
        // N^a_B = −K^a Φ⁻¹ χ': second column couples f̃ to the angular motion.
        assert_relative_eq!(ps.n_vp[(1, 1)], -rho / x, max_relative = 1e-13);
        assert!(ps.n_vp[(0, 0)].abs() < 1e-14);
        assert_relative_eq!(ps.t[(0, 0)], 1.0, max_relative = 1e-14);
        assert!(ps.t[(0, 1)].abs() < 1e-14);
        assert_relative_eq!(ps.phi[(0, 0)], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn projector_invariants_hold_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [abelian(), so3(), so3_twisted()] {
            let (xr, fr) = m.sample_ranges();
            for _ in 0..10 {
                let x: Vec<f64> = xr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let f: Vec<f64> = fr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let g = GeometryPoint::new(&m, &x, &f).unwrap();
                for (name, resid) in projector_checks(&g) {
                    let tol = match name {
                        "projector_metric_gauge_agreement" | "projector_n_absorbs_pi" => 1e-9,
                        "block_inverse_consistency" => 1e-10,
                        _ => 1e-10,
                    };
                    assert!(resid < tol, "{} {}: residual {resid:.3e}", m.name(), name);
                }
            }
        }
    }

    #[test]
    fn gauge_alignment_recovers_group_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for m in [abelian(), so3(), so3_twisted()] {
            let d = m.dims();
            let (xr, _) = m.sample_ranges();
            for _ in 0..10 {
                let x: Vec<f64> = xr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let g: Vec<f64> = (0..d.n_g).map(|_| rng.gen_range(-0.9..0.9)).collect();
                let q = m.action_p(&g, &m.section(&x));
                let a = align_gauge(&m, &q).unwrap();
                // a must undo g up to the gauge's isotropy (trivial here).
                let e = m.chart().compose(&m.chart().inverse(&a), &g);
                for c in &e {
                    assert!(c.abs() < 1e-9, "{}: residual element {e:?}", m.name());
                }
            }
        }
    }

    #[test]
    fn invariant_coordinates_reproduce_configuration() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for m in [abelian(), so3(), so3_twisted()] {
            let d = m.dims();
            let (xr, fr) = m.sample_ranges();
            for _ in 0..5 {
                let x: Vec<f64> = xr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let f0: Vec<f64> = fr.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                let g: Vec<f64> = (0..d.n_g).map(|_| rng.gen_range(-0.8..0.8)).collect();
                let q = m.action_p(&g, &m.section(&x));
                let f = m.action_v(&g, &f0);
                let qdot: Vec<f64> = (0..d.n_p).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let fdot: Vec<f64> = (0..d.n_v).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let ic = invariant_coordinates(&m, &q, &f, &qdot, &fdot).unwrap();
                // Re-applying the action reproduces the configuration.
                let q_back = m.action_p(&ic.a, &m.section(&ic.x));
                let f_back = m.action_v(&ic.a, &ic.f);
                for (qb, qi) in q_back.iter().zip(q.iter()) {
                    assert_relative_eq!(*qb, *qi, epsilon = 1e-10);
                }
                for (fb, fi) in f_back.iter().zip(f.iter()) {
                    assert_relative_eq!(*fb, *fi, epsilon = 1e-10);
                }
                // And the recovered base point matches the constructed one.
                for (xi, x0) in ic.x.iter().zip(x.iter()) {
                    assert_relative_eq!(*xi, *x0, epsilon = 1e-10);
                }
            }
        }
    }
}
