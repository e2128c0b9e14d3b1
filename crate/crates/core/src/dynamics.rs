//! Equations of motion: the reduced second-order system on `(x, f̃, p)`, the
//! full Euler–Lagrange system on `(Q, f)`, the projection between them, and
//! the conserved energy.
//!
//! Reduced state order everywhere (vectors, integrators, file output):
//! `(x, f̃, ẋ, f̃̇, p)`. The reduced right-hand side is, over the unified
//! index `ũ` running through `(x, f̃)`:
//!
//! ```text
//! z̈^ĩ = −Γ^ĩ_{j̃k̃} ż^j̃ ż^k̃ − h̃^{ĩũ} 𝓕^α_{ṽũ} ż^ṽ p_α
//!        − ½ h̃^{ĩũ} 𝒟_ũ d^{κσ} p_κ p_σ − h̃^{ĩũ} ∂_ũ V
//! ṗ_β  = −c^ν_{μβ} d^{μσ} p_σ p_ν + c^ν_{σβ} 𝒜^σ_ũ ż^ũ p_ν
//! ```
//!
//! with the geometry of [`crate::bundle`], [`crate::gaugefield`] and
//! [`crate::christoffel`] evaluated at `(x, f̃)`.

use crate::bundle::{
    d_matrices_at, embedding, invariant_coordinates, killing_full_at, metric_full_at,
    section_val_jac,
};
use crate::error::CoreError;
use crate::gaugefield::connection;
use crate::linalg::{Mat, Tensor3};
use crate::model::{Dims, Model};
use crate::scalar::{seed1, Scalar};
use serde::{Deserialize, Serialize};

/// Reduced state `(x, f̃, ẋ, f̃̇, p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub xdot: Vec<f64>,
    pub fdot: Vec<f64>,
    pub p: Vec<f64>,
}

impl ReducedState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (self.x.len() + self.f.len()) + self.p.len());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.f);
        v.extend_from_slice(&self.xdot);
        v.extend_from_slice(&self.fdot);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_vec(d: Dims, v: &[f64]) -> Result<Self, CoreError> {
        if v.len() != d.n_state() {
            return Err(CoreError::shape(format!(
                "reduced state needs {} entries, got {}",
                d.n_state(),
                v.len()
            )));
        }
        let n_x = d.n_x;
        let n_z = d.n_z();
        Ok(ReducedState {
            x: v[..n_x].to_vec(),
            f: v[n_x..n_z].to_vec(),
            xdot: v[n_z..n_z + n_x].to_vec(),
            fdot: v[n_z + n_x..2 * n_z].to_vec(),
            p: v[2 * n_z..].to_vec(),
        })
    }

    pub fn check_dims(&self, d: Dims) -> Result<(), CoreError> {
        if self.x.len() != d.n_x
            || self.f.len() != d.n_v
            || self.xdot.len() != d.n_x
            || self.fdot.len() != d.n_v
            || self.p.len() != d.n_g
        {
            return Err(CoreError::shape(
                "reduced state sizes do not match the model",
            ));
        }
        Ok(())
    }
}

/// Full state `(Q, f, Q̇, ḟ)` on the unreduced configuration space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub q: Vec<f64>,
    pub f: Vec<f64>,
    pub qdot: Vec<f64>,
    pub fdot: Vec<f64>,
}

impl FullState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (self.q.len() + self.f.len()));
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.f);
        v.extend_from_slice(&self.qdot);
        v.extend_from_slice(&self.fdot);
        v
    }

    pub fn from_vec(d: Dims, v: &[f64]) -> Result<Self, CoreError> {
        if v.len() != 2 * d.n_w() {
            return Err(CoreError::shape(format!(
                "full state needs {} entries, got {}",
                2 * d.n_w(),
                v.len()
            )));
        }
        let (n_p, n_w) = (d.n_p, d.n_w());
        Ok(FullState {
            q: v[..n_p].to_vec(),
            f: v[n_p..n_w].to_vec(),
            qdot: v[n_w..n_w + n_p].to_vec(),
            fdot: v[n_w + n_p..].to_vec(),
        })
    }
}

/// Reduced metric `h̃`, pulled-back connection `𝒜_ũ`, inverse orbit metric
/// `d^{κσ}`, and potential at one reduced point — the four quantities whose
/// values and first `z`-derivatives assemble the reduced equations of
/// motion. Generic so one dual lane per reduced direction yields the
/// derivatives alongside the values.
#[allow(clippy::type_complexity)]
pub(crate) fn reduced_point_at<S: Scalar, M: Model>(
    m: &M,
    x: &[S],
    f: &[S],
) -> Result<(Mat<S>, Mat<S>, Mat<S>, S), CoreError> {
    let (q, qjac) = section_val_jac(m, x);
    let g = metric_full_at(m, &q, f);
    let k = killing_full_at(m, &q, f);
    let d_lower = k.transpose().matmul(&g).matmul(&k);
    let d_upper = d_lower.inverse().map_err(|_| {
        CoreError::degenerate("orbit metric d singular: the action degenerates at this point")
    })?;
    let gk = g.matmul(&k);
    // 𝒜 = d⁻¹ K̃ᵀ G on joint legs, then G̃^H = G − (GK̃) 𝒜.
    let a_w = d_upper.matmul(&gk.transpose());
    let gh = g.sub(&gk.matmul(&a_w));
    let e = embedding(&qjac, f.len());
    let h_lower = e.transpose().matmul(&gh).matmul(&e);
    let a_z = a_w.matmul(&e);
    let v = m.potential(&q, f);
    Ok((h_lower, a_z, d_upper, v))
}

/// Time derivative of the reduced state vector, in `to_vec` order.
///
/// One plain evaluation of [`reduced_point_at`] plus one dual lane per
/// reduced direction supplies every field the equations need: `∂h̃` gives
/// the Christoffel symbols; the antisymmetrized `∂𝒜_ũ` plus the bracket
/// quadratic gives the curvature pullback (exact, because the section
/// embedding is the Jacobian of the point map `z ↦ (Q*(x), f̃)`, so its
/// symmetric second derivative drops out); `∂d^{κσ}` plus bracket terms
/// gives the covariant derivative pullback by the chain rule.
pub fn reduced_rhs<M: Model>(m: &M, s: &ReducedState) -> Result<Vec<f64>, CoreError> {
    let d = m.dims();
    s.check_dims(d)?;
    let (n_x, n_g) = (d.n_x, d.n_g);
    let n_z = d.n_z();

    let (h0, az0, dup0, _) = reduced_point_at(m, &s.x, &s.f)?;
    let h_lu = h0
        .lu()
        .map_err(|_| CoreError::degenerate("reduced metric h̃ singular"))?;

    let mut z0 = s.x.clone();
    z0.extend_from_slice(&s.f);
    let mut dh = Tensor3::zeros(n_z, n_z, n_z);
    let mut daz = Tensor3::zeros(n_z, n_g, n_z);
    let mut ddup = Tensor3::zeros(n_z, n_g, n_g);
    let mut grad_v = vec![0.0f64; n_z];
    for u in 0..n_z {
        let zd = seed1(&z0, u);
        let (h, az, dup, v) = reduced_point_at(m, &zd[..n_x], &zd[n_x..])?;
        for i in 0..n_z {
            for j in 0..n_z {
                dh[[u, i, j]] = h[(i, j)].du;
            }
        }
        for al in 0..n_g {
            for vv in 0..n_z {
                daz[[u, al, vv]] = az[(al, vv)].du;
            }
        }
        for ka in 0..n_g {
            for si in 0..n_g {
                ddup[[u, ka, si]] = dup[(ka, si)].du;
            }
        }
        grad_v[u] = v.du;
    }

    let lie = m.lie();
    let mut zdot = Vec::with_capacity(n_z);
    zdot.extend_from_slice(&s.xdot);
    zdot.extend_from_slice(&s.fdot);

    // Lowered force per reduced leg ũ, then raise once with h̃⁻¹. The
    // Christoffel contraction Γ_{j̃k̃l̃} ż^j̃ ż^k̃ with the symmetric żżᵀ
    // collapses ½(∂_k̃ h̃_{j̃l̃} + ∂_j̃ h̃_{k̃l̃} − ∂_l̃ h̃_{j̃k̃}) to the two
    // terms below.
    let mut rhs_low = vec![0.0f64; n_z];
    for l in 0..n_z {
        let mut acc = 0.0;
        for j in 0..n_z {
            for k in 0..n_z {
                acc += (dh[[j, k, l]] - 0.5 * dh[[l, j, k]]) * zdot[j] * zdot[k];
            }
        }
        rhs_low[l] = acc;
    }
    for u in 0..n_z {
        let mut acc = grad_v[u];
        // Curvature coupling 𝓕^α_{ṽũ} ż^ṽ p_α.
        for al in 0..n_g {
            for v in 0..n_z {
                let mut fvu = daz[[v, al, u]] - daz[[u, al, v]];
                for mu in 0..n_g {
                    for nu in 0..n_g {
                        fvu += lie.c[[al, mu, nu]] * az0[(mu, v)] * az0[(nu, u)];
                    }
                }
                acc += fvu * zdot[v] * s.p[al];
            }
        }
        // Momentum-sector gradient ½ 𝒟_ũ d^{κσ} p_κ p_σ with
        // 𝒟_ũ d^{κσ} = ∂_ũ d^{κσ} + c^κ_{μν} 𝒜^μ_ũ d^{νσ} + c^σ_{μν} 𝒜^μ_ũ d^{νκ}.
        for ka in 0..n_g {
            for si in 0..n_g {
                let mut dv = ddup[[u, ka, si]];
                for mu in 0..n_g {
                    for nu in 0..n_g {
                        dv += lie.c[[ka, mu, nu]] * az0[(mu, u)] * dup0[(nu, si)];
                        dv += lie.c[[si, mu, nu]] * az0[(mu, u)] * dup0[(nu, ka)];
                    }
                }
                acc += 0.5 * dv * s.p[ka] * s.p[si];
            }
        }
        rhs_low[u] += acc;
    }
    let zdd: Vec<f64> = h_lu.solve(&rhs_low).iter().map(|v| -v).collect();

    // Momentum equation.
    let a_zdot = az0.matvec(&zdot);
    let mut pdot = vec![0.0f64; n_g];
    for be in 0..n_g {
        let mut acc = 0.0;
        for nu in 0..n_g {
            for mu in 0..n_g {
                let mut dp = 0.0;
                for si in 0..n_g {
                    dp += dup0[(mu, si)] * s.p[si];
                }
                acc -= lie.c[[nu, mu, be]] * dp * s.p[nu];
            }
            for si in 0..n_g {
                acc += lie.c[[nu, si, be]] * a_zdot[si] * s.p[nu];
            }
        }
        pdot[be] = acc;
    }

    let mut out = Vec::with_capacity(d.n_state());
    out.extend_from_slice(&zdot);
    out.extend_from_slice(&zdd);
    out.extend_from_slice(&pdot);
    Ok(out)
}

/// Total energy of a reduced state, generic for derivative checks:
/// `E = ½ h̃_{ũṽ} ż^ũ ż^ṽ + ½ d^{κσ} p_κ p_σ + V`.
pub(crate) fn energy_at<S: Scalar, M: Model>(
    m: &M,
    x: &[S],
    f: &[S],
    xdot: &[S],
    fdot: &[S],
    p: &[S],
) -> Result<S, CoreError> {
    let (h, _, d_up, v) = reduced_point_at(m, x, f)?;
    let mut zdot: Vec<S> = xdot.to_vec();
    zdot.extend_from_slice(fdot);
    let half = S::from_f64(0.5);
    let mut e = v;
    let hz = h.matvec(&zdot);
    for (zi, hzi) in zdot.iter().zip(hz.iter()) {
        e += half * *zi * *hzi;
    }
    let dp = d_up.matvec(p);
    for (pi, dpi) in p.iter().zip(dp.iter()) {
        e += half * *pi * *dpi;
    }
    Ok(e)
}

pub fn energy<M: Model>(m: &M, s: &ReducedState) -> Result<f64, CoreError> {
    s.check_dims(m.dims())?;
    energy_at(m, &s.x, &s.f, &s.xdot, &s.fdot, &s.p)
}

/// Energy of a full state: `½ ẇᵀ G ẇ + V`.
pub fn full_energy<M: Model>(m: &M, w: &FullState) -> Result<f64, CoreError> {
    let g = crate::bundle::metric_full_at(m, &w.q, &w.f);
    let mut wdot = w.qdot.clone();
    wdot.extend_from_slice(&w.fdot);
    let gw = g.matvec(&wdot);
    let mut e = m.potential(&w.q, &w.f);
    for (vi, gvi) in wdot.iter().zip(gw.iter()) {
        e += 0.5 * vi * gvi;
    }
    Ok(e)
}

/// Time derivative of the full state vector `(Q, f, Q̇, ḟ)`: the
/// Euler–Lagrange equations of `L = ½ ẇᵀ G(w) ẇ − V(w)` solved for the
/// accelerations.
pub fn full_rhs<M: Model>(m: &M, w: &FullState) -> Result<Vec<f64>, CoreError> {
    let d = m.dims();
    if w.q.len() != d.n_p || w.f.len() != d.n_v {
        return Err(CoreError::shape("full state sizes do not match the model"));
    }
    if !m.p_domain(&w.q) {
        return Err(CoreError::domain(format!(
            "configuration {:?} outside the bundle domain",
            w.q
        )));
    }
    let n_w = d.n_w();
    let mut w0 = w.q.clone();
    w0.extend_from_slice(&w.f);
    let mut wdot = w.qdot.clone();
    wdot.extend_from_slice(&w.fdot);

    // Metric derivatives and potential gradient, one dual lane per direction.
    let mut dg = Tensor3::zeros(n_w, n_w, n_w);
    let mut grad_v = vec![0.0f64; n_w];
    for r in 0..n_w {
        let wd = seed1(&w0, r);
        let g = crate::bundle::metric_full_at(m, &wd[..d.n_p], &wd[d.n_p..]);
        for a in 0..n_w {
            for b in 0..n_w {
                dg[[r, a, b]] = g[(a, b)].du;
            }
        }
        grad_v[r] = m.potential(&wd[..d.n_p], &wd[d.n_p..]).du;
    }
    let g0 = crate::bundle::metric_full_at(m, &w.q, &w.f);

    // G ẅ = −Γ_lowered(ẇ, ẇ) − ∇V with Γ_{NLM} = ½(G_{NM,L} + G_{LM,N} − G_{NL,M}).
    let mut rhs = vec![0.0f64; n_w];
    for mm in 0..n_w {
        let mut acc = 0.0;
        for nn in 0..n_w {
            for ll in 0..n_w {
                let gamma = 0.5 * (dg[[ll, nn, mm]] + dg[[nn, ll, mm]] - dg[[mm, nn, ll]]);
                acc -= gamma * wdot[nn] * wdot[ll];
            }
        }
        rhs[mm] = acc - grad_v[mm];
    }
    let acc = g0
        .lu()
        .map_err(|_| CoreError::degenerate("full metric singular"))?
        .solve(&rhs);

    let mut out = Vec::with_capacity(2 * n_w);
    out.extend_from_slice(&wdot);
    out.extend_from_slice(&acc);
    Ok(out)
}

/// Projects a full state to the reduced representation; also returns the
/// aligning group element.
pub fn project_full_state<M: Model>(
    m: &M,
    w: &FullState,
) -> Result<(ReducedState, Vec<f64>), CoreError> {
    let ic = invariant_coordinates(m, &w.q, &w.f, &w.qdot, &w.fdot)?;
    Ok((
        ReducedState {
            x: ic.x,
            f: ic.f,
            xdot: ic.xdot,
            fdot: ic.fdot,
            p: ic.p,
        },
        ic.a,
    ))
}

/// Lifts a reduced state to the full space over the section point: the
/// velocity is the horizontal part `E ż` plus the vertical complement
/// `K̃ w` with `w^α = d^{αβ} p_β − 𝒜^α_ũ ż^ũ`.
pub fn initial_lift<M: Model>(m: &M, s: &ReducedState) -> Result<FullState, CoreError> {
    let d = m.dims();
    s.check_dims(d)?;
    let (q, qjac) = section_val_jac(m, &s.x);
    if !m.p_domain(&q) {
        return Err(CoreError::domain(format!(
            "section point {q:?} outside the bundle domain"
        )));
    }
    let conn = connection(m, &s.x, &s.f)?;
    let (_, d_up) = d_matrices_at(m, &q, &s.f)?;
    let mut zdot = s.xdot.clone();
    zdot.extend_from_slice(&s.fdot);
    let a_zdot = conn.on_z.matvec(&zdot);
    let dp = d_up.matvec(&s.p);
    let wvert: Vec<f64> = dp
        .iter()
        .zip(a_zdot.iter())
        .map(|(dpi, ai)| dpi - ai)
        .collect();

    let k_p = m.killing_p(&q);
    let k_v = m.killing_v(&s.f);
    let mut qdot = qjac.matvec(&s.xdot);
    let kv = k_p.matvec(&wvert);
    for (qd, kvi) in qdot.iter_mut().zip(kv.iter()) {
        *qd += *kvi;
    }
    let mut fdot = s.fdot.clone();
    let kvf = k_v.matvec(&wvert);
    for (fd, kvi) in fdot.iter_mut().zip(kvf.iter()) {
        *fd += *kvi;
    }
    Ok(FullState {
        q,
        f: s.f.clone(),
        qdot,
        fdot,
    })
}
