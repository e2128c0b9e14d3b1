//! The mechanical connection, its curvature, and the covariant derivative of
//! the inverse orbit metric — the three fields that feed the momentum
//! coupling terms of the reduced equations of motion.
//!
//! Leg conventions follow [`crate::bundle`]: `R̃, S̃` run over the joint
//! `(Q, f)` coordinates, `ũ, ṽ` over the reduced `(x, f̃)` coordinates, and
//! the reduced ("base") versions are pullbacks through the section embedding
//! `E = [[Q*_i, 0], [0, δ]]`.

use crate::bundle::{d_matrices_at, embedding, killing_full_at, metric_full_at, section_val_jac};
use crate::error::CoreError;
use crate::linalg::{Mat, Tensor3};
use crate::model::Model;
use crate::scalar::{seed1, Scalar};

/// Connection form `𝒜^α_R̃ = d^{αβ} K̃^S̃_β G_{S̃R̃}` at `(q, f)`, generic so the
/// curvature can differentiate through it.
pub(crate) fn conn_at<S: Scalar, M: Model>(m: &M, q: &[S], f: &[S]) -> Result<Mat<S>, CoreError> {
    let g = metric_full_at(m, q, f);
    let k = killing_full_at(m, q, f);
    let (_, d_upper) = d_matrices_at(m, q, f)?;
    Ok(d_upper.matmul(&k.transpose()).matmul(&g))
}

/// Connection pulled back through the section: `[𝒜^α_i | 𝒜^α_a]` at `(x, f̃)`.
pub(crate) fn conn_base_at<S: Scalar, M: Model>(
    m: &M,
    x: &[S],
    f: &[S],
) -> Result<Mat<S>, CoreError> {
    let (q, qjac) = section_val_jac(m, x);
    let a = conn_at(m, &q, f)?;
    Ok(a.matmul(&embedding(&qjac, f.len())))
}

/// The mechanical connection at a section point.
#[derive(Clone, Debug)]
pub struct ConnectionField {
    /// `𝒜^α_R̃` on joint `(Q, f)` legs, `n_g × n_w`.
    pub on_w: Mat<f64>,
    /// Pullback `[𝒜^α_i | 𝒜^α_a]` on reduced legs, `n_g × n_z`.
    pub on_z: Mat<f64>,
    n_p: usize,
    n_x: usize,
}

impl ConnectionField {
    /// Bundle-leg block `𝒜^α_A`.
    pub fn on_p(&self) -> Mat<f64> {
        Mat::from_fn(self.on_w.rows(), self.n_p, |a, r| self.on_w[(a, r)])
    }
    /// Linear-leg block `𝒜^α_a`.
    pub fn on_v(&self) -> Mat<f64> {
        let n_v = self.on_w.cols() - self.n_p;
        Mat::from_fn(self.on_w.rows(), n_v, |a, r| self.on_w[(a, self.n_p + r)])
    }
    /// Base-leg block `𝒜^α_i`.
    pub fn on_x(&self) -> Mat<f64> {
        Mat::from_fn(self.on_z.rows(), self.n_x, |a, r| self.on_z[(a, r)])
    }
}

pub fn connection<M: Model>(m: &M, x: &[f64], f: &[f64]) -> Result<ConnectionField, CoreError> {
    let d = m.dims();
    let (q, qjac) = section_val_jac(m, x);
    let on_w = conn_at(m, &q, f)?;
    let on_z = on_w.matmul(&embedding(&qjac, d.n_v));
    Ok(ConnectionField {
        on_w,
        on_z,
        n_p: d.n_p,
        n_x: d.n_x,
    })
}

/// Curvature of the mechanical connection at a section point.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    /// `𝓕^α_{R̃S̃} = ∂_R̃ 𝒜^α_S̃ − ∂_S̃ 𝒜^α_R̃ + c^α_{μν} 𝒜^μ_R̃ 𝒜^ν_S̃`,
    /// indexed `[α, R̃, S̃]`, antisymmetric in the legs.
    pub on_w: Tensor3<f64>,
    /// Pullback on reduced legs, indexed `[α, ũ, ṽ]`.
    pub on_z: Tensor3<f64>,
}

pub fn curvature<M: Model>(m: &M, x: &[f64], f: &[f64]) -> Result<CurvatureField, CoreError> {
    let d = m.dims();
    let (n_w, n_g, n_v) = (d.n_w(), d.n_g, d.n_v);
    let (q, qjac) = section_val_jac(m, x);
    let mut w0 = q.clone();
    w0.extend_from_slice(f);

    // ∂_R̃ 𝒜^α_S̃, one dual lane per joint direction.
    let mut da = Tensor3::zeros(n_w, n_g, n_w);
    for r in 0..n_w {
        let wd = seed1(&w0, r);
        let a = conn_at(m, &wd[..d.n_p], &wd[d.n_p..])?;
        for al in 0..n_g {
            for s in 0..n_w {
                da[[r, al, s]] = a[(al, s)].du;
            }
        }
    }
    let a0 = conn_at(m, &q, f)?;
    let lie = m.lie();
    let mut on_w = Tensor3::zeros(n_g, n_w, n_w);
    for al in 0..n_g {
        for r in 0..n_w {
            for s in 0..n_w {
                let mut v = da[[r, al, s]] - da[[s, al, r]];
                for mu in 0..n_g {
                    for nu in 0..n_g {
                        v += lie.c[[al, mu, nu]] * a0[(mu, r)] * a0[(nu, s)];
                    }
                }
                on_w[[al, r, s]] = v;
            }
        }
    }
    let e = embedding(&qjac, n_v);
    let n_z = d.n_z();
    let on_z = Tensor3::from_fn(n_g, n_z, n_z, |al, u, v| {
        let mut acc = 0.0;
        for r in 0..n_w {
            if e[(r, u)] == 0.0 {
                continue;
            }
            for s in 0..n_w {
                acc += on_w[[al, r, s]] * e[(r, u)] * e[(s, v)];
            }
        }
        acc
    });
    Ok(CurvatureField { on_w, on_z })
}

/// Base-leg curvature block computed the other way round: differentiate the
/// pulled-back connection in `x` and add the bracket term. Agrees with the
/// pullback of the joint-space curvature because the section Hessian drops
/// out of the antisymmetrization. Test/check use.
pub(crate) fn curvature_base_two_route<M: Model>(
    m: &M,
    x: &[f64],
    f: &[f64],
) -> Result<Tensor3<f64>, CoreError> {
    let d = m.dims();
    let (n_g, n_x) = (d.n_g, d.n_x);
    let fd: Vec<crate::scalar::D1> = f.iter().map(|&v| crate::scalar::D1::constant(v)).collect();
    let mut dab = Tensor3::zeros(n_x, n_g, n_x);
    for k in 0..n_x {
        let xd = seed1(x, k);
        let ab = conn_base_at(m, &xd, &fd)?;
        for al in 0..n_g {
            for l in 0..n_x {
                dab[[k, al, l]] = ab[(al, l)].du;
            }
        }
    }
    let ab0 = conn_base_at(m, x, f)?;
    let lie = m.lie();
    Ok(Tensor3::from_fn(n_g, n_x, n_x, |al, k, l| {
        let mut v = dab[[k, al, l]] - dab[[l, al, k]];
        for mu in 0..n_g {
            for nu in 0..n_g {
                v += lie.c[[al, mu, nu]] * ab0[(mu, k)] * ab0[(nu, l)];
            }
        }
        v
    }))
}

/// Covariant derivative of the inverse orbit metric,
/// `𝒟_R̃ d^{κσ} = ∂_R̃ d^{κσ} + c^κ_{μν} 𝒜^μ_R̃ d^{νσ} + c^σ_{μν} 𝒜^μ_R̃ d^{νκ}`.
#[derive(Clone, Debug)]
pub struct CovariantD {
    /// Indexed `[R̃, κ, σ]`, symmetric in `(κ, σ)`.
    pub on_w: Tensor3<f64>,
    /// Pullback `𝒟_ũ = E^R̃_ũ 𝒟_R̃` on reduced legs, `[ũ, κ, σ]`.
    pub on_z: Tensor3<f64>,
}

pub fn covariant_d<M: Model>(m: &M, x: &[f64], f: &[f64]) -> Result<CovariantD, CoreError> {
    let d = m.dims();
    let (n_w, n_g, n_v) = (d.n_w(), d.n_g, d.n_v);
    let (q, qjac) = section_val_jac(m, x);
    let mut w0 = q.clone();
    w0.extend_from_slice(f);

    let mut dd = Tensor3::zeros(n_w, n_g, n_g);
    for r in 0..n_w {
        let wd = seed1(&w0, r);
        let (_, d_up) = d_matrices_at(m, &wd[..d.n_p], &wd[d.n_p..])?;
        for ka in 0..n_g {
            for si in 0..n_g {
                dd[[r, ka, si]] = d_up[(ka, si)].du;
            }
        }
    }
    let (_, d_up0) = d_matrices_at(m, &q, f)?;
    let a0 = conn_at(m, &q, f)?;
    let lie = m.lie();
    let on_w = Tensor3::from_fn(n_w, n_g, n_g, |r, ka, si| {
        let mut v = dd[[r, ka, si]];
        for mu in 0..n_g {
            for nu in 0..n_g {
                v += lie.c[[ka, mu, nu]] * a0[(mu, r)] * d_up0[(nu, si)];
                v += lie.c[[si, mu, nu]] * a0[(mu, r)] * d_up0[(nu, ka)];
            }
        }
        v
    });
    let e = embedding(&qjac, n_v);
    let on_z = Tensor3::from_fn(d.n_z(), n_g, n_g, |u, ka, si| {
        let mut acc = 0.0;
        for r in 0..n_w {
            acc += on_w[[r, ka, si]] * e[(r, u)];
        }
        acc
    });
    Ok(CovariantD { on_w, on_z })
}

/// Base-leg covariant derivative by the other route: differentiate
/// `d⁻¹(Q*(x), f̃)` in `x` directly and add the bracket terms with the
/// pulled-back connection. Test/check use.
pub(crate) fn covd_base_two_route<M: Model>(
    m: &M,
    x: &[f64],
    f: &[f64],
) -> Result<Tensor3<f64>, CoreError> {
    let d = m.dims();
    let (n_g, n_x) = (d.n_g, d.n_x);
    let fd: Vec<crate::scalar::D1> = f.iter().map(|&v| crate::scalar::D1::constant(v)).collect();
    let mut ddx = Tensor3::zeros(n_x, n_g, n_g);
    for i in 0..n_x {
        let xd = seed1(x, i);
        let (qd, _) = section_val_jac(m, &xd);
        let (_, d_up) = d_matrices_at(m, &qd, &fd)?;
        for ka in 0..n_g {
            for si in 0..n_g {
                ddx[[i, ka, si]] = d_up[(ka, si)].du;
            }
        }
    }
    let (q, _) = section_val_jac(m, x);
    let (_, d_up0) = d_matrices_at(m, &q, f)?;
    let ab0 = conn_base_at(m, x, f)?;
    let lie = m.lie();
    Ok(Tensor3::from_fn(n_x, n_g, n_g, |i, ka, si| {
        let mut v = ddx[[i, ka, si]];
        for mu in 0..n_g {
            for nu in 0..n_g {
                v += lie.c[[ka, mu, nu]] * ab0[(mu, i)] * d_up0[(nu, si)];
                v += lie.c[[si, mu, nu]] * ab0[(mu, i)] * d_up0[(nu, ka)];
            }
        }
        v
    }))
}

/// Residuals of the field-level identities at one section point: the
/// connection reproduces generators, its two horizontal-projector routes
/// agree, the curvature is antisymmetric and pulls back consistently, and
/// the covariant derivative satisfies the base-leg chain rule.
pub fn field_checks<M: Model>(
    m: &M,
    x: &[f64],
    f: &[f64],
) -> Result<Vec<(&'static str, f64)>, CoreError> {
    let d = m.dims();
    let (q, _) = section_val_jac(m, x);
    let conn = connection(m, x, f)?;
    let curv = curvature(m, x, f)?;
    let covd = covariant_d(m, x, f)?;

    let mut out = Vec::new();

    let ktilde = killing_full_at(m, &q, f);
    out.push((
        "connection_reproduces_generators",
        conn.on_w
            .matmul(&ktilde)
            .max_abs_diff(&Mat::identity(d.n_g)),
    ));

    // δ − K̃𝒜 must agree with the metric route G⁻¹ G̃^H.
    let pi_conn = Mat::identity(d.n_w()).sub(&ktilde.matmul(&conn.on_w));
    let g = metric_full_at(m, &q, f);
    let gh = crate::bundle::gh_full_at(m, &q, f)?;
    let pi_metric = g
        .lu()
        .map_err(|_| CoreError::degenerate("full metric singular"))?
        .solve_matrix(&gh);
    out.push((
        "connection_horizontal_projector",
        pi_conn.max_abs_diff(&pi_metric),
    ));

    let mut antisym = 0.0f64;
    let [n_g, n_w, _] = curv.on_w.dims();
    for al in 0..n_g {
        for r in 0..n_w {
            for s in 0..n_w {
                antisym = antisym.max((curv.on_w[[al, r, s]] + curv.on_w[[al, s, r]]).abs());
            }
        }
    }
    out.push(("curvature_antisymmetry", antisym));

    let route2 = curvature_base_two_route(m, x, f)?;
    let mut pull = 0.0f64;
    for al in 0..d.n_g {
        for k in 0..d.n_x {
            for l in 0..d.n_x {
                pull = pull.max((curv.on_z[[al, k, l]] - route2[[al, k, l]]).abs());
            }
        }
    }
    out.push(("curvature_pullback_two_route", pull));

    let droute = covd_base_two_route(m, x, f)?;
    let mut chain = 0.0f64;
    for i in 0..d.n_x {
        for ka in 0..d.n_g {
            for si in 0..d.n_g {
                chain = chain.max((covd.on_z[[i, ka, si]] - droute[[i, ka, si]]).abs());
            }
        }
    }
    out.push(("covariant_d_chain_rule", chain));

    Ok(out)
}
